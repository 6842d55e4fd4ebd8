# coding: utf-8

# # The whole chain from the command line
#
# Generate a synthetic record, run two nowcasters, train station models,
# predict fleet power, score everything and aggregate to a national total.

# In[1]:

import json
import tempfile
from pathlib import Path

from pvnowcast import cli
from pvnowcast.pipeline import RunConfig

root = Path(tempfile.mkdtemp())
(root / "synth.json").write_text(json.dumps({"n_days": 12, "n_rows": 64, "n_cols": 64, "n_stations": 8}))
cli.main(["synth", "--config", str(root / "synth.json"), "--out", str(root / "data")])


# In[2]:

data = root / "data"
cfg = RunConfig(
    grids_dir=str(data / "grids"), stations=str(data / "stations.csv"), series_dir=str(data / "series"),
    output_dir=str(root / "out"), clean_split="none", workers=1,
    issue_times=["2020-05-06T08:00:00Z", "2020-05-06T10:00:00Z", "2020-05-06T12:00:00Z"],
)
cfg.save(root / "run.json")
run = lambda *a: cli.main(list(a) + ["--config", str(root / "run.json")])


# In[3]:

for model in ("persistence", "solarsteps"):
    run("nowcast", "--model", model)
run("train-power")
for model in ("persistence", "solarsteps"):
    run("predict-power", "--model", model)
run("evaluate")
run("aggregate", "--model", "solarsteps")


# In[4]:

for p in sorted((root / "out").rglob("*")):
    if p.is_file() and "forecasts" not in p.parts:
        print(p.relative_to(root / "out"))
