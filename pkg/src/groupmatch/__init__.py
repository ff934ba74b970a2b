"""Feature-agnostic group re-identification engine.

Multi-grained group representation (persons, pairs, triples, whole group),
iterative importance weighting, multi-order association-graph matching with
a reweighted random walk, fused group scoring, and a synthetic-data CMC
evaluation harness with brute-force oracles.
"""

from .config import (
    DescriptorConfig,
    EngineConfig,
    EvalConfig,
    ImportanceConfig,
    SolverConfig,
    SpatialHistogramConfig,
    load_engine_config,
)
from .dataset import Dataset, load_dataset, save_dataset
from .descriptors import (
    aggregate_subgroup,
    angle_histogram,
    build_bundle,
    compute_bundle,
    edge_spatial_feature,
    global_feature,
    log_distance_histogram,
    stripe_appearance_feature,
)
from .errors import EngineError, RuntimeFailure, ValidationError
from .evaluate import (
    CmcReport,
    PairMatcher,
    cmc_curve,
    emit_report,
    evaluate_pairs,
    global_only_scores,
    load_report,
    run_evaluation,
    score_matrix,
)
from .features_io import load_external_features, load_features, save_features
from .importance import (
    ImportanceMap,
    MatchSet,
    build_match_sets,
    coarse_weight,
    equal_importance,
    initial_importance,
    iterate_weights,
    local_density,
    medium_weight,
    pair_stability,
    saliency_terms,
    purity_terms,
    static_weight_fine,
    triangle_stability,
    wasserstein1,
)
from .matcher import (
    AssociationGraph,
    MatchResult,
    PairContext,
    build_association_graph,
    extract_mapping,
    fused_matching_score,
    fused_pair_weight,
    global_score,
    inter_order_correlation,
    match_pair,
    objective_value,
    prepare_pair,
    solve_rrw,
)
from .model import (
    BoundingBox,
    FeatureBundle,
    GranularObject,
    GroupObservation,
    Mapping,
    MatchCandidate,
    enumerate_granular_objects,
)
from .oracle import brute_force_mapping, exhaustive_wasserstein, random_instance
from .synth import SynthConfig, synthesize, synthesize_to_dir

__version__ = "0.1.0"
