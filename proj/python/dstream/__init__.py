"""Process-group decoupling over a deterministic simulated runtime.

The compiled core exposes the stream operations (create_channel, attach,
isend/isend_to, operate, terminate, free_channel), the virtual-time
simulator, the analytical cost model, and the case-study applications.
"""

from dstream._core import (
    BetaModel,
    Channel,
    EventTrace,
    GroupLayout,
    IoError,
    NoiseSpec,
    OperateSummary,
    PerfParams,
    PerfPrediction,
    PredictionBreakdown,
    ProtocolError,
    RankContext,
    RankTotals,
    RunReport,
    SendTicket,
    SimConfig,
    Stream,
    StreamElementType,
    SweepResult,
    SweepRow,
    TimeMode,
    TraceRecord,
    UsageError,
    ValidationError,
    attach,
    cg,
    create_channel,
    estimate_beta,
    free_channel,
    particles,
    pipeline,
    predict_conventional,
    predict_decoupled,
    predict_decoupled_max,
    run,
    sweep_alpha,
    sweep_granularity,
    wordcount,
    workload,
)

__all__ = [
    "BetaModel",
    "Channel",
    "EventTrace",
    "GroupLayout",
    "IoError",
    "NoiseSpec",
    "OperateSummary",
    "PerfParams",
    "PerfPrediction",
    "PredictionBreakdown",
    "ProtocolError",
    "RankContext",
    "RankTotals",
    "RunReport",
    "SendTicket",
    "SimConfig",
    "Stream",
    "StreamElementType",
    "SweepResult",
    "SweepRow",
    "TimeMode",
    "TraceRecord",
    "UsageError",
    "ValidationError",
    "attach",
    "cg",
    "create_channel",
    "estimate_beta",
    "free_channel",
    "particles",
    "pipeline",
    "predict_conventional",
    "predict_decoupled",
    "predict_decoupled_max",
    "run",
    "sweep_alpha",
    "sweep_granularity",
    "wordcount",
    "workload",
]

__version__ = "0.1.0"
