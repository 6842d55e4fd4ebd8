# coding: utf-8

# # Persistence, SolarSTEPS and SolarSTEPS-pa on advecting clouds
#
# Synthetic cloud blobs drift at 3 px per 15 minutes. All three nowcasters take
# the last four CSI fields and forecast eight leads.

# In[1]:

from datetime import datetime, timezone

import numpy as np

from pvnowcast import verify
from pvnowcast.flow import PerturbationParams
from pvnowcast.nowcast import NowcastConfig, persistence_forecast, solarsteps_forecast, solarsteps_pa_forecast
from pvnowcast.synth import BlobWeather, SyntheticSpec, csi_sequence


# In[2]:

weather = BlobWeather((64, 64), "advect", velocity=(2.6, 1.5), seed=4)
geom = SyntheticSpec().geometry()
start = datetime(2020, 5, 1, 8, tzinfo=timezone.utc)
record = csi_sequence(weather, geom, start, 12, k0=30)
inputs = type(record)(record.fields[:4], record.step)
truth = record.fields[4:]


# In[3]:

cfg = NowcastConfig(seed=1)
forecasts = {
    "persistence": persistence_forecast(inputs),
    "solarsteps": solarsteps_forecast(inputs, cfg),
    "solarsteps-pa": solarsteps_pa_forecast(inputs, cfg, PerturbationParams(seed=1)),
}
for name, f in forecasts.items():
    print(name, "leads", f.n_leads, "members", f.n_members, "first valid", f.valid_time(1).strftime("%H:%M"))


# Grid CRPS in CSI units per lead. With clouds moving 3 px per step even the
# first lead is already displaced, and the gap to persistence widens with lead.

# In[4]:

for lead in range(1, 9):
    y = truth[lead - 1].values.ravel().astype(float)
    row = []
    for name, f in forecasts.items():
        m = f.ensemble(lead).reshape(f.n_members, -1).T
        ok = np.isfinite(y) & np.all(np.isfinite(m), axis=1)
        row.append("%s %.4f" % (name, verify.crps_ensemble(m[ok], y[ok]).mean()))
    print("%3d min  " % f.lead_minutes(lead) + "  ".join(row))
