"""Figure rendering for seqrank study result CSVs."""

__version__ = "0.1.0"

from .figures import KINDS, PlotJob, SchemaError, plot_study1, plot_study2, render

__all__ = ["KINDS", "PlotJob", "SchemaError", "plot_study1", "plot_study2", "render"]
