"""qent: learning the structure of separable bipartite quantum states.

A convolutional autoencoder trained only on separable (or zero-discord)
states classifies arbitrary density matrices by reconstruction error, and a
gradient-ascent generator searches for PPT states the classifier rejects.
"""

from .linalg import (
    DensityMatrix,
    elementwise_l1,
    hermitian_eigenvalues,
    is_ppt,
    kron,
    partial_trace,
    partial_transpose,
    realignment_ccnr,
    von_neumann_entropy,
)
from .states import (
    LabeledStateSet,
    SeparableSamplerConfig,
    StateFamily,
    bell_phi_minus,
    cc_sample,
    cq_sample,
    ginibre,
    haar_unitary,
    horodecki_3x3,
    hs_random_state,
    local_unitary_conjugate,
    maximally_mixed,
    npt_sample,
    qc_sample,
    random_prob_vector,
    sample_batch,
    separable_sample,
    tiles_upb_state,
)
from .cae import ArchitectureSpec, CaeModel, LayerConfig, builtin_spec, decode_output, encode_state
from .pipeline import (
    ClassificationReport,
    ThresholdRecord,
    TrainConfig,
    classify,
    classify_with_unitaries,
    compute_threshold,
    evaluate,
    reconstruction_errors,
    train,
)
from .boundgen import GenerationResult, GeneratorParams, certify, generate, optimize

__version__ = "0.1.0"
