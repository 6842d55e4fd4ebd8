# coding: utf-8

# # Irradiance-to-power regressors
#
# One boosted-tree model per station maps SSI, sun position and cyclic time to
# power. Days are split into 12-day blocks of 10 training days plus one
# validation and one test day.

# In[1]:

from datetime import date, datetime, timezone

import numpy as np

from pvnowcast import clearsky
from pvnowcast.power import SplitPlan, Station, evaluate_station_model, train_station_model


# A station whose power follows 0.9 x SSI / max(SSI) x 10 kW.

# In[2]:

lat, lon = 46.5, 7.5
t0 = int(datetime(2020, 4, 1, tzinfo=timezone.utc).timestamp())
times = t0 + 900 * np.arange(48 * 96)
pos = clearsky.solar_position(lat, lon, times.astype(float))
ghi = clearsky.clearsky_ghi(pos, clearsky.ClearSkyParams(), times.astype(float))
k = np.random.default_rng(0).uniform(0.2, 1.0, 49)[(times - t0) // 86400]
ssi = ghi * k
station = Station("demo", lon, lat, 600.0, times, 9.0 * ssi / ssi.max())


# In[3]:

plan = SplitPlan.for_times(times)
labels = [plan.label(d) for d in sorted(plan.assignment)[:24]]
print(" ".join({"train": ".", "val": "V", "test": "T"}[l] for l in labels))


# In[4]:

model = train_station_model(station, ssi, plan)
print("trees:", model.metadata["n_trees"], "training samples:", model.metadata["n_train"])
for split in ("val", "test"):
    print(split, {k: round(v, 4) for k, v in evaluate_station_model(model, station, ssi, plan, split).items()})
