"""Estimate weekly influenza-like-illness rates from short-text streams.

The pipeline: count keyword-query matches per week, regress logit(ILI) on
logit(fraction), and optionally reweight matches with a logistic-regression
classifier that filters spurious keyword hits. A companion simulator
measures how each estimate degrades when spurious messages flood in.
"""

from .classify import (
    ClassifierError,
    ClassifierModel,
    CvReport,
    LabeledMessage,
    cross_validate,
    hard_query_fraction,
    load_labeled_jsonl,
    predict_label,
    predict_proba,
    soft_query_fraction,
    train,
)
from .corpus import (
    CorpusError,
    Message,
    TokenizedMessage,
    WeekBucket,
    bucket_weekly,
    ingest,
    load_ili_csv,
    tokenize,
    tokenize_message,
)
from .query import (
    GATE_QUERY,
    GATE_QUERY_TEXT,
    Query,
    QueryError,
    QueryFractionSeries,
    QueryParseError,
    Term,
    count_matches,
    matches,
    parse_query,
    query_fraction,
    query_fraction_series,
)
from .regress import (
    DegenerateFitError,
    RegressionError,
    RegressionModel,
    WeeklySeries,
    clamp_fraction,
    fit,
    logit,
    mse,
    pearson,
    predict,
    predict_series,
    sigmoid,
)
from .simulate import (
    InjectionSchedule,
    SimulationError,
    SimulationReport,
    SpuriousPool,
    build_spurious_pool,
    inject,
    mse_vs_baseline,
    run_simulation,
)
from .synth import SynthConfig, SynthError, SynthTruth, generate, generate_labeled

__version__ = "0.1.0"

__all__ = [
    "ClassifierError",
    "ClassifierModel",
    "CorpusError",
    "CvReport",
    "DegenerateFitError",
    "GATE_QUERY",
    "GATE_QUERY_TEXT",
    "InjectionSchedule",
    "LabeledMessage",
    "Message",
    "Query",
    "QueryError",
    "QueryFractionSeries",
    "QueryParseError",
    "RegressionError",
    "RegressionModel",
    "SimulationError",
    "SimulationReport",
    "SpuriousPool",
    "SynthConfig",
    "SynthError",
    "SynthTruth",
    "Term",
    "TokenizedMessage",
    "WeekBucket",
    "bucket_weekly",
    "build_spurious_pool",
    "clamp_fraction",
    "count_matches",
    "cross_validate",
    "fit",
    "generate",
    "generate_labeled",
    "hard_query_fraction",
    "ingest",
    "inject",
    "load_ili_csv",
    "load_labeled_jsonl",
    "logit",
    "matches",
    "mse",
    "mse_vs_baseline",
    "parse_query",
    "pearson",
    "predict",
    "predict_label",
    "predict_proba",
    "predict_series",
    "query_fraction",
    "query_fraction_series",
    "run_simulation",
    "sigmoid",
    "soft_query_fraction",
    "tokenize",
    "tokenize_message",
    "train",
]
