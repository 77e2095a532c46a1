"""Query-efficient recovery of a linear order from pairwise oracles."""

from .baselines import (
    DenseSimilarity,
    fiedler_order,
    naive_mst_order,
)
from .construct import (
    CondenseInfo,
    PairSet,
    PipelineConfig,
    ProvisionalOrder,
    SurveyInfo,
    boruvka_connect,
    condense,
    densify,
    provisional_order,
    rescore_by_shared_neighbors,
    survey_positions,
)
from .core import (
    GroundTruthLine,
    Permutation,
    QueryLedger,
    SimilarityGraph,
    UnionFind,
    bfs_distances,
    double_sweep,
    graph_distance,
    unit_line,
)
from .errors import (
    AssemblyIncomplete,
    ConnectivityStalled,
    DisconnectedGraph,
    DisconnectedSimilarity,
    InputFormatError,
    IsolatedVertex,
    LengthMismatch,
    NotAnEndpoint,
    RestackError,
    SelfQuery,
)
from .oracle import (
    BinaryOracle,
    MatrixOracle,
    NoisyDistanceOracle,
    OracleConfig,
    SimilarityMatrixStore,
    accept_edge,
    combine_similarity,
    read_similarity_csv,
    write_similarity_csv,
)
from .evaluation import (
    AblationVariant,
    EvalResult,
    MonteCarloConfig,
    band_edges,
    default_variants,
    edge_edit_distance,
    fit_loglog_slope,
    make_synthetic_oracle,
    monte_carlo_fragmentation,
    order_accuracy,
    path_edges,
    run_ablation,
    scaling_study,
    second_best_support,
    wilson_interval,
)
from .order import (
    AssemblyResult,
    ChainAssembly,
    MarginReport,
    TopTwoGraph,
    assemble_chains,
    build_top_two,
    margin_report,
)
from .pipeline import PipelineResult, run_pipeline

__version__ = "1.0.0"

__all__ = [
    "AblationVariant",
    "AssemblyIncomplete",
    "AssemblyResult",
    "BinaryOracle",
    "ChainAssembly",
    "CondenseInfo",
    "ConnectivityStalled",
    "DenseSimilarity",
    "DisconnectedGraph",
    "DisconnectedSimilarity",
    "EvalResult",
    "GroundTruthLine",
    "InputFormatError",
    "IsolatedVertex",
    "LengthMismatch",
    "MarginReport",
    "MatrixOracle",
    "MonteCarloConfig",
    "NoisyDistanceOracle",
    "NotAnEndpoint",
    "OracleConfig",
    "PairSet",
    "Permutation",
    "PipelineConfig",
    "PipelineResult",
    "ProvisionalOrder",
    "QueryLedger",
    "RestackError",
    "SelfQuery",
    "SimilarityGraph",
    "SimilarityMatrixStore",
    "SurveyInfo",
    "TopTwoGraph",
    "UnionFind",
    "accept_edge",
    "assemble_chains",
    "band_edges",
    "bfs_distances",
    "boruvka_connect",
    "build_top_two",
    "combine_similarity",
    "condense",
    "default_variants",
    "densify",
    "double_sweep",
    "edge_edit_distance",
    "fiedler_order",
    "fit_loglog_slope",
    "graph_distance",
    "make_synthetic_oracle",
    "margin_report",
    "monte_carlo_fragmentation",
    "naive_mst_order",
    "order_accuracy",
    "path_edges",
    "provisional_order",
    "read_similarity_csv",
    "rescore_by_shared_neighbors",
    "run_ablation",
    "run_pipeline",
    "scaling_study",
    "second_best_support",
    "survey_positions",
    "unit_line",
    "wilson_interval",
    "write_similarity_csv",
]
