"""Simulator for pretraining-oriented web crawling over a stored graph snapshot."""

from crawlsim.errors import (
    ConfigError,
    ContentMissingError,
    CrawlSimError,
    IngestionError,
    NodeRangeError,
    ParseError,
    ScoreLookupError,
    TrainingError,
    UndefinedCorrelationError,
    UndefinedMetricError,
)
from crawlsim.graph_store import (
    Document,
    DocumentStore,
    FetchCounter,
    WebGraph,
    fetch_page,
    indegree,
    ingest_documents,
    ingest_edges,
    outlinks,
)
from crawlsim.scorers import (
    ScorerPolicy,
    ScoreTable,
    TrainedClassifier,
    featurize,
    load_score_table,
    score_document,
    train_classifier,
)
from crawlsim.frontier import Frontier, init_frontier
from crawlsim.engine import (
    CrawlConfig,
    CrawlResult,
    SelectionResult,
    crawl_then_select,
    oracle_select,
    run_crawl,
)
from crawlsim.metrics import (
    coverage_curve,
    efficiency_report,
    hop_score_correlation,
    pagerank,
    spearman,
)
from crawlsim.synth import SynthConfig, emit, generate

__version__ = "0.1.0"
