"""Convolution-as-GEMM toolkit.

Lower convolutions to matrix multiplication (patch stretching / im2col),
evaluate them through interchangeable engines verified against a direct
sliding-window reference, and reproduce the training experiment showing a
convolution layer and its lowered dense formulation learn identically
under SGD.
"""

from .backend import ACTIVE_NAME, COMPILED_AVAILABLE
from .data import (
    IdxFormatError,
    load_idx_images,
    sample_without_replacement,
    synthetic_images,
    write_idx_images,
)
from .engines import (
    Engine,
    GemmSpec,
    conv1d,
    conv_direct,
    conv_true2d,
    conv_via_gemm,
    cross_correlate_patch,
    flip_bank,
    flip_kernel,
    gemm,
    run_engine,
    transpose,
)
from .geometry import (
    ConvGeometry,
    GeometryError,
    PaddingMode,
    output_shape,
    pad_zeros,
    padded_output_shape,
    resolve_padding,
)
from .lowering import (
    FilterBank,
    FilterMatrix,
    IndexMap,
    LoweredMatrix,
    im2col,
    index_map,
    lowered_view3,
    stretch_filters,
    unstretch_filters,
)
from .nn import (
    Adam,
    CnnModel,
    ConvLayer,
    EquivalenceMetrics,
    ExperimentData,
    FcModel,
    Histogram,
    LinearLayer,
    Sgd,
    TrainConfig,
    TrainReport,
    WeightBijection,
    backward_and_step,
    equivalence_metrics,
    forward_cnn,
    forward_fc,
    gradients,
    he_init,
    make_optimizer,
    mse,
    train_equivalence_experiment,
)
from .tensors import (
    DumpFormatError,
    Matrix2,
    Tensor3View,
    Tensor4,
    frobenius_norm,
    read_dump,
    reshape_matrix_to_tensor4,
    tensor4_at,
    write_dump,
)

__version__ = "0.1.0"
