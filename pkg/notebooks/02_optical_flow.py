# coding: utf-8

# # Cloud motion from Lucas-Kanade optical flow
#
# A textured field is translated by a known velocity; the pyramidal
# Lucas-Kanade estimator should recover it and backward semi-Lagrangian
# advection should reproduce the next frame.

# In[1]:

from datetime import datetime, timedelta, timezone

import numpy as np
from scipy import ndimage

from pvnowcast.flow import FlowField, PerturbationParams, advect, estimate_flow, perturb_flow
from pvnowcast.grid import FieldSequence, GridField, GridGeometry, Kind


# Four frames of a smooth texture moving 2 px east and 1 px south per step.

# In[2]:

rng = np.random.default_rng(1)
big = ndimage.gaussian_filter(rng.standard_normal((96, 96)), 3.0, mode="wrap")
big = (big - big.min()) / (big.max() - big.min())
geom = GridGeometry(7.0, 46.0, 0.02, 64, 64)
t0 = datetime(2020, 5, 1, 10, tzinfo=timezone.utc)
u, v = 2, -1
frames = [big[16 - k * v : 80 - k * v, 16 - k * u : 80 - k * u] for k in range(4)]
seq = FieldSequence(
    tuple(GridField(geom, t0 + timedelta(minutes=15 * k), f.astype(np.float32), Kind.CSI) for k, f in enumerate(frames)),
    900,
)


# In[3]:

flow = estimate_flow(seq)
print("median flow: u=%.3f v=%.3f px/step" % (np.median(flow.u), np.median(flow.v)))


# Advect the third frame one step with the true velocity and compare with the
# fourth. Cells whose departure point lies outside the grid become NaN.

# In[4]:

pred = advect(seq.fields[2], FlowField.uniform(geom, u, v), 1)
err = pred.values - seq.fields[3].values
print("interior RMSE:", float(np.sqrt(np.nanmean(err[8:-8, 8:-8] ** 2))))
print("NaN fraction:", pred.nan_fraction)


# Ensemble members of the perturbed-advection model draw a new flow each.

# In[5]:

params = PerturbationParams(seed=3)
for m in range(3):
    p = perturb_flow(flow, params, m)
    print("member", m, "median u=%.2f v=%.2f" % (np.median(p.u), np.median(p.v)))
