# coding: utf-8

# # Grids and clear-sky index
#
# Irradiance rasters are stored as SGF1 files: a small binary header followed by
# float32 values, row 0 being the southernmost row. This script writes a field,
# reads it back and converts between irradiance and clear-sky index.

# In[1]:

import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from pvnowcast import clearsky
from pvnowcast.grid import GridField, GridGeometry, Kind, downsample, interpolate_point, read_grid, write_grid


# A 64 x 64 grid of 0.02 degree cells over the Alps.

# In[2]:

geom = GridGeometry(lon_min=7.0, lat_min=46.0, cell_size=0.02, n_cols=64, n_rows=64)
t = datetime(2020, 6, 21, 11, 0, tzinfo=timezone.utc)
rng = np.random.default_rng(0)
csi = GridField(geom, t, rng.uniform(0.3, 1.1, geom.shape).astype(np.float32), Kind.CSI)
print(geom.shape, geom.center)


# Round trip through disk is bit exact.

# In[3]:

path = Path(tempfile.mkdtemp()) / "csi.sgf"
write_grid(path, csi)
back = read_grid(path)
print("bytes:", path.stat().st_size, "identical:", np.array_equal(back.values, csi.values))


# Clear-sky irradiance at the same instant, then SSI = CSI x clear sky.

# In[4]:

cs = clearsky.clearsky_field(geom, t)
ssi = clearsky.csi_to_ssi(csi, cs)
print("clear-sky GHI range: %.1f .. %.1f W m-2" % (cs.values.min(), cs.values.max()))
print("SSI at the grid center: %.1f W m-2" % interpolate_point(ssi, *geom.center))


# Block averaging to 0.08 degree cells, the resolution used for scoring.

# In[5]:

coarse = downsample(ssi, 4)
print(coarse.geometry.shape, "mean preserved:", np.isclose(coarse.values.mean(), ssi.values.mean()))


# The nowcasting window of a day: issue times run from one hour after sunrise
# to three hours before sunset.

# In[6]:

sunrise, sunset = clearsky.daylight_window(46.64, 7.64, t.date())
print("sunrise", sunrise.strftime("%H:%M"), "sunset", sunset.strftime("%H:%M"), "UTC")
