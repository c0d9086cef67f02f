"""aebound: margin reconstruction losses, generalization bounds, and
cluster-preserving semi-supervised learning for small binary autoencoders."""

from .bounds import (
    BoundInputs,
    BoundReport,
    complexity_term,
    eta_prime_theoretical,
    generalization_bound,
    improvement_factor,
    markov_geps_bound,
    mu_bound_symmetric,
    mu_bound_worst,
    r_to_se_bound,
    ssl_term,
)
from .data import (
    Dataset,
    IdxFormatError,
    SplitSpec,
    binarize,
    gen_clustered,
    parse_idx,
    split,
    to_grayscale,
)
from .geometry import (
    ClusteredSample,
    MarginEstimate,
    empirical_cluster_margin,
    encoded_cluster_margin,
    lipschitz_empirical,
    lipschitz_upper,
    three_eps_audit,
)
from .linalg import frobenius_norm, spectral_norm
from .losses import (
    MarginConfig,
    empirical_margin_loss,
    g_epsilon,
    l2_error,
    margin_loss,
    mu_hat,
    se_loss,
)
from .network import (
    LayerSpec,
    NetworkParams,
    TrainConfig,
    autoencoder_arch,
    decode,
    encode,
    forward,
    gradient,
    init_params,
    load_checkpoint,
    normalize_weights,
    save_checkpoint,
    train,
)
from .semisup import (
    SSLConfig,
    SSLResult,
    knn_baseline,
    label_clusters,
    single_linkage_clusters,
    ssl_compare,
)

__version__ = "0.1.0"
