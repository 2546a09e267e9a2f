"""Suitability modeling of GOP transcoding on heterogeneous cloud VMs."""

__version__ = "0.1.0"

from .errors import SuitMatrixError
from .workload import (
    ContentType,
    GopTask,
    Operation,
    TraceRecord,
    VmTypeSpec,
    Workload,
    default_vm_catalog,
    generate_workload,
    parse_trace,
    serialize_trace,
)
from .timemodel import EtcMatrix, QuadraticFit, RatioDistribution, build_etc, fit_quadratic, r_squared
from .suitability import (
    FuzzyParams,
    NaiveParams,
    SuitabilityMatrix,
    TradeoffPreference,
    naive_row,
    normalize_row,
    perf_gaps,
    suitability_matrix,
    threshold_gap,
    weight_row,
)
from .simcore import ClusterConfig, SimResult, run_sim
from .metrics import aggregate, pairs_histogram, ratio_histogram, summarize_by_operation, threshold_table
