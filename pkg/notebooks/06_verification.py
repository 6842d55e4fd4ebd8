# coding: utf-8

# # Ensemble verification
#
# CRPS from the closed form, central prediction intervals from linearly
# interpolated quantiles and rank histograms with random tie breaking.

# In[1]:

import numpy as np

from pvnowcast import verify
from pvnowcast.verify import EnsembleSample


# In[2]:

print("CRPS of [0, 1] vs 0.5:", verify.crps(EnsembleSample([0.0, 1.0], 0.5)))
print("one member is MAE:", verify.crps(EnsembleSample([4.0], 1.0)))


# A calibrated 10-member ensemble. Its 90% interval covers less than 90% because
# the outermost quantiles are interpolated between few members.

# In[3]:

rng = np.random.default_rng(0)
draws = rng.random((50_000, 11))
members, obs = draws[:, :10], draws[:, 10]
lo, hi = verify.interval_bounds(members, 0.1)
print("PICP %.4f (closed form %.4f)" % (np.mean((lo <= obs) & (obs <= hi)), 1 - 2.9 / 11))
rh = verify.rank_histogram((members, obs), seed=1)
print("rank counts", rh.counts, "p=%.3f" % rh.p_value)


# An under-dispersed ensemble gives a U-shaped histogram.

# In[4]:

narrow = 0.5 + 0.3 * (members - 0.5)
print("rank counts", verify.rank_histogram((narrow, obs), seed=1).counts)
