"""Group affect prediction from face-level emotion heatmaps."""

__version__ = "0.1.0"
