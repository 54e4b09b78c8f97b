"""Render rodflow run directories into figures and a Markdown summary.

The renderer only reads run artifacts (manifest.json, *.csv,
diagnostics.json); it never imports the simulation code, so every fitted
slope or moment shown here is an independent recomputation from the raw
per-realization data.
"""

__version__ = "0.1.0"
