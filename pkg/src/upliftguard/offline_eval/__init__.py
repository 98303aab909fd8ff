"""Offline scoring of uplift models and policies."""
from .estimators import PolicyValueEstimate, TruthReport, UpliftCurve, ips, snips, true_value, uplift_curve
from .plots import plot_sweep, plot_uplift_curves
from .report import REPORT_VERSION, build_report, dumps, write_report

__all__ = [
    "PolicyValueEstimate",
    "REPORT_VERSION",
    "TruthReport",
    "UpliftCurve",
    "build_report",
    "dumps",
    "ips",
    "plot_sweep",
    "plot_uplift_curves",
    "snips",
    "true_value",
    "uplift_curve",
    "write_report",
]
