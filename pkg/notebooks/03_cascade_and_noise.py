# coding: utf-8

# # Spectral cascade, AR(2) dynamics and correlated noise
#
# A field is split into six Fourier bandpass levels with log-spaced centers.
# Each level evolves as an AR(2) process fitted with the Yule-Walker equations.

# In[1]:

import numpy as np

from pvnowcast import cascade


# In[2]:

rng = np.random.default_rng(2)
x = rng.normal(size=(128, 128))
c = cascade.decompose(x, 6)
print("center wavenumbers:", c.center_wavenumbers)
print("level std devs:", np.round(c.level_stds, 3))
back = cascade.recompose(c)
print("relative round-trip error: %.1e" % (np.linalg.norm(back - x) / np.linalg.norm(x)))


# Yule-Walker on a long synthetic AR(2) series.

# In[3]:

phi = (0.6, 0.2)
s = np.zeros(20_000)
e = rng.normal(size=s.size)
for t in range(2, s.size):
    s[t] = phi[0] * s[t - 1] + phi[1] * s[t - 2] + e[t]
fit = cascade.fit_ar2_series(s[1000:])
print("phi1=%.3f phi2=%.3f" % (float(np.squeeze(fit.phi1)), float(np.squeeze(fit.phi2))))


# Noise shaped like the template field: same radial power spectrum, seeded per
# member and lead so reruns reproduce it exactly.

# In[4]:

template = cascade.fill_nan(np.cumsum(np.cumsum(rng.normal(size=(64, 64)), 0), 1))
n1 = cascade.correlated_noise(template, seed=7, member=0, lead=1)
n2 = cascade.correlated_noise(template, seed=7, member=0, lead=1)
print("mean %.3f std %.3f reproducible %s" % (n1.mean(), n1.std(), np.array_equal(n1, n2)))
