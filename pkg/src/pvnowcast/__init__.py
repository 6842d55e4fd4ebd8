"""
Satellite-based irradiance nowcasting and PV power prediction.

Modules
-------
grid      SGF1 raster I/O, resampling and interpolation
clearsky  solar position, clear-sky irradiance and clear-sky index
flow      Lucas-Kanade cloud motion and semi-Lagrangian advection
cascade   spectral cascade, AR(2) fitting and correlated noise
nowcast   persistence, SolarSTEPS and SolarSTEPS-pa ensembles
gbrt      histogram gradient-boosted regression trees
power     stations, cleaning, features and irradiance-to-power models
verify    CRPS, interval scores, rank histograms and strata
synth     synthetic weather and PV fleets
pipeline  configuration and batch workflow
cli       command-line entry point
"""

__version__ = "0.1.0"
