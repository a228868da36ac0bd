"""Model-based community detection in dynamic networks via latent-space
embeddings: distance and projection geometries, MCMC and variational
estimation, model selection, simulation, and evaluation."""

from .benchmark import runtime_benchmark
from .distance_model import (
    ChainConfig,
    DegreeCorrectedLik,
    DistanceHyperparams,
    DistanceParams,
    LogisticLik,
    PlackettLuceLik,
    edge_prob_degree_corrected,
    edge_prob_logistic,
    joint_logdensity_xz,
    loglik_distance,
    map_extract,
    mh_within_gibbs_fit,
    rank_loglik_plackett_luce,
)
from .errors import (
    ConfigError,
    InvalidInputError,
    NumericalError,
    ParseError,
    UndefinedMetricError,
    UnsupportedLikelihoodError,
)
from .metrics import (
    auc,
    coassignment_probs,
    corrected_rand,
    insample_auc,
    modularity,
    one_step_ahead_probs,
    variation_of_information,
)
from .model_selection import (
    FitSummary,
    bic_components,
    dic,
    latent_marginal_loglik,
    select_model,
    summarize_fit,
)
from .netio import load_fit, load_truth, parse_network, save_fit, save_truth, serialize_network
from .network import DynamicNetwork, LatentState, PosteriorSamples
from .projection_model import (
    GibbsConfig,
    ProjectionHyperparams,
    ProjectionParams,
    eta_projection,
    gibbs_fit_projection,
    joint_logdensity_xz_proj,
    loglik_projection,
    pg_augmented_logjoint,
)
from .projection_vb import VBConfig, VBPosterior, vb_fit_projection, vb_predictive_edge_prob
from .randkit import (
    RngStream,
    distance_matrix,
    mvn_logpdf,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_polya_gamma,
    sample_truncated_normal_01,
    sample_von_mises_fisher,
)
from .simulate import SimConfig, simulate, simulate_distance, simulate_projection

__version__ = "0.1.0"
