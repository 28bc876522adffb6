"""Figure rendering for proxvr CSV products."""

from proxvr_plots.csvio import SchemaError, read_rates, read_trajectory
from proxvr_plots.figures import plot_convergence, plot_rate_scatter

__version__ = "0.1.0"
