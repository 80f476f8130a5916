"""Deterministic linear-network trainer: one network, two constructions.

The experiment builds the same two-layer linear network twice -- once with a
convolution first layer, once with a dense first layer fed the pre-lowered
patch matrix -- from one shared weight stream, then trains both on an
identity target (predict the input image) with MSE loss.

Because the convolution engine and the GEMM share one accumulation order,
and SGD/Adam updates are element-wise, the two constructions do not merely
track each other approximately: every forward pass, gradient, and weight
update is bit-identical under the filter-bank/dense-weight relabeling.

No bias terms and no non-linearities anywhere; flatten steps are pure
relabelings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engines import conv_direct, gemm, transpose
from .geometry import ConvGeometry, pad_zeros, padded_output_shape
from .lowering import (
    FilterBank,
    FilterMatrix,
    im2col,
    lowered_view3,
    stretch_filters,
    unstretch_filters,
)
from .tensors import Matrix2, Tensor3View, Tensor4, frobenius_norm

__all__ = [
    "LinearLayer",
    "ConvLayer",
    "WeightBijection",
    "TrainConfig",
    "TrainReport",
    "Histogram",
    "EquivalenceMetrics",
    "ExperimentData",
    "CnnModel",
    "FcModel",
    "Sgd",
    "Adam",
    "make_optimizer",
    "he_init",
    "forward_cnn",
    "forward_fc",
    "mse",
    "gradients",
    "backward_and_step",
    "equivalence_metrics",
    "train_equivalence_experiment",
]


@dataclass
class LinearLayer:
    """Dense layer without bias; forward is row-vector times w (in x out)."""

    w: Matrix2

    def __post_init__(self) -> None:
        if not np.isfinite(self.w.data).all():
            raise ValueError("LinearLayer weights must be finite")


@dataclass
class ConvLayer:
    """Convolution layer: a filter bank plus its geometry."""

    bank: FilterBank
    geom: ConvGeometry

    def __post_init__(self) -> None:
        if not self.bank.matches(self.geom):
            raise ValueError(f"{self.bank!r} does not match {self.geom!r}")


@dataclass(frozen=True)
class WeightBijection:
    """Relabeling between a (f, k_h, k_w, c_in) bank and a (k_h*k_w*c_in, f)
    dense weight matrix. Under it, CONV and dense layers are the same
    linear map."""

    geom: ConvGeometry

    def to_matrix(self, bank: FilterBank) -> Matrix2:
        return stretch_filters(bank).m

    def to_bank(self, w: Matrix2) -> FilterBank:
        return unstretch_filters(FilterMatrix(w), self.geom)


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    batch_size: int
    epochs: int
    optimizer: str = "sgd"  # "sgd" | "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 42

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass(frozen=True)
class Histogram:
    edges: list[float]
    counts: list[int]


@dataclass
class TrainReport:
    """Per-epoch loss curves plus the final first-layer weight histogram.

    The epoch train loss is the sample-weighted mean of batch losses; the
    validation loss is evaluated once per epoch on the full validation set
    against identity targets.
    """

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    weight_hist: Histogram | None = None


@dataclass(frozen=True)
class EquivalenceMetrics:
    """How far the two constructions drifted apart.

    ``act_fnorm_over_n``: (1/n) * Frobenius norm of V - U on held-out data,
    where V/U are the first-layer outputs of the CONV/dense paths.
    ``weight_fnorm``: Frobenius norm of the difference of the flattened
    first-layer weights, compared through the bijection.
    """

    act_fnorm_over_n: float
    weight_fnorm: float
    hist_edges: list[float]
    cnn_hist: list[int]
    fc_hist: list[int]


@dataclass(frozen=True)
class ExperimentData:
    """Unpadded image tensors for the three splits."""

    train: Tensor4
    val: Tensor4
    heldout: Tensor4


@dataclass
class CnnModel:
    conv: ConvLayer
    head: LinearLayer


@dataclass
class FcModel:
    dense1: LinearLayer
    head: LinearLayer
    geom: ConvGeometry


class Sgd:
    """Plain stochastic gradient descent: w <- w - lr * g."""

    def __init__(self, lr: float) -> None:
        self.lr = lr

    def update(self, key: str, w: np.ndarray, g: np.ndarray) -> np.ndarray:
        return w - self.lr * g


class Adam:
    """Adam with bias correction; element-wise, state keyed per layer."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def update(self, key: str, w: np.ndarray, g: np.ndarray) -> np.ndarray:
        m = self._m.get(key)
        if m is None:
            m = np.zeros_like(w)
            self._m[key] = m
            self._v[key] = np.zeros_like(w)
            self._t[key] = 0
        v = self._v[key]
        t = self._t[key] + 1
        self._t[key] = t
        m[:] = self.beta1 * m + (1.0 - self.beta1) * g
        v[:] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        return w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(config.lr)
    return Adam(config.lr, config.beta1, config.beta2, config.eps)


def he_init(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean normal draws with variance 2 / fan_in.

    Draws fill the array in C order, so two layers built from the same
    generator consume identical streams regardless of how the result is
    later relabeled.
    """
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def forward_cnn(x: Tensor4, conv: ConvLayer, head: LinearLayer) -> tuple[Matrix2, Matrix2]:
    """CONV-first forward: returns (first-layer output V, prediction).

    V is the convolution output flattened per sample to (batch,
    h_out*w_out*f); the prediction is V @ head.w.
    """
    out = conv_direct(x, conv.bank, conv.geom)
    v = Matrix2._wrap(out.data.reshape(x.b, -1))
    if v.cols != head.w.rows:
        raise ValueError(
            f"head expects {head.w.rows} inputs but first layer produced {v.cols}"
        )
    return v, gemm(v, head.w)


def forward_fc(m3: Tensor3View, dense1: LinearLayer, head: LinearLayer) -> tuple[Matrix2, Matrix2]:
    """Dense-first forward over the pre-lowered input M'.

    Each sample's block (h_out*w_out, patch_len) is multiplied by dense1.w;
    row independence makes the per-block products one flat GEMM. Returns
    (first-layer output U flattened per sample, prediction).
    """
    if m3.cols != dense1.w.rows:
        raise ValueError(
            f"dense layer expects {dense1.w.rows} inputs but blocks have {m3.cols} columns"
        )
    prod = gemm(m3.backing, dense1.w)
    u = Matrix2._wrap(prod.data.reshape(m3.outer, -1))
    if u.cols != head.w.rows:
        raise ValueError(
            f"head expects {head.w.rows} inputs but first layer produced {u.cols}"
        )
    return u, gemm(u, head.w)


def mse(y_hat: Matrix2, y: Matrix2) -> float:
    """Mean over all elements (batch x features) of squared error."""
    if (y_hat.rows, y_hat.cols) != (y.rows, y.cols):
        raise ValueError(
            f"shape mismatch: prediction {y_hat.rows}x{y_hat.cols} vs target {y.rows}x{y.cols}"
        )
    diff = y_hat.data - y.data
    return float(np.mean(diff * diff))


def _check_finite(g: np.ndarray, layer: str) -> np.ndarray:
    if not np.isfinite(g).all():
        raise FloatingPointError(f"non-finite gradient in layer '{layer}'")
    return g


def _loss_and_gradients(model: CnnModel | FcModel, batch):
    inputs, y = batch
    if isinstance(model, CnnModel):
        x: Tensor4 = inputs
        m_rows = im2col(x, model.conv.geom).m
        a1, y_hat = forward_cnn(x, model.conv, model.head)
        w1 = stretch_filters(model.conv.bank).m
        layer1 = "conv_filters"
    else:
        m3: Tensor3View = inputs
        m_rows = m3.backing
        a1, y_hat = forward_fc(m3, model.dense1, model.head)
        w1 = model.dense1.w
        layer1 = "dense1"

    loss = mse(y_hat, y)
    n_elems = y.rows * y.cols
    d_y_m = Matrix2._wrap((2.0 / n_elems) * (y_hat.data - y.data))

    d_w2 = _check_finite(gemm(transpose(a1), d_y_m).data, "head")
    d_a1 = gemm(d_y_m, transpose(model.head.w))
    d_a1_rows = Matrix2._wrap(d_a1.data.reshape(-1, w1.cols))
    d_w1 = _check_finite(gemm(transpose(m_rows), d_a1_rows).data, layer1)
    return loss, w1, layer1, d_w1, d_w2


def gradients(model: CnnModel | FcModel, batch) -> dict[str, np.ndarray]:
    """Analytic MSE gradients per layer, in matrix form, without stepping.

    For a CnnModel the ``conv_filters`` entry is the (patch_len, f) view of
    the filter-bank gradient, computed through the lowering as M^T @ dV.
    """
    _, _, layer1, d_w1, d_w2 = _loss_and_gradients(model, batch)
    return {layer1: d_w1, "head": d_w2}


def backward_and_step(model: CnnModel | FcModel, batch, optimizer) -> float:
    """One MSE/SGD-or-Adam training step; mutates the model, returns the loss.

    ``batch`` is (Tensor4 inputs, Matrix2 targets) for a CnnModel and
    (Tensor3View lowered inputs, Matrix2 targets) for an FcModel. Gradients
    are the analytic linear-layer ones; the filter gradient flows through
    the lowering as M^T @ dV, so the two model kinds step identically under
    the weight bijection.
    """
    loss, w1, layer1, d_w1, d_w2 = _loss_and_gradients(model, batch)
    new_w1 = Matrix2._wrap(optimizer.update(layer1, w1.data, d_w1))
    new_w2 = Matrix2._wrap(optimizer.update("head", model.head.w.data, d_w2))

    if isinstance(model, CnnModel):
        geom = model.conv.geom
        model.conv = ConvLayer(WeightBijection(geom).to_bank(new_w1), geom)
    else:
        model.dense1 = LinearLayer(new_w1)
    model.head = LinearLayer(new_w2)
    return loss


def equivalence_metrics(
    v: Matrix2,
    u: Matrix2,
    w_cnn: FilterBank,
    w_fc: LinearLayer,
    n: int,
    bins: int = 50,
) -> EquivalenceMetrics:
    """Divergence of the two paths: activation norm, weight norm, histograms."""
    if (v.rows, v.cols) != (u.rows, u.cols):
        raise ValueError(f"shape mismatch: V {v.rows}x{v.cols} vs U {u.rows}x{u.cols}")
    act = frobenius_norm(v.data - u.data) / n
    geom_free = ConvGeometry(w_cnn.k_h, w_cnn.k_w, w_cnn.c_in, w_cnn.f)
    fc_bank = unstretch_filters(FilterMatrix(w_fc.w), geom_free)
    weight = frobenius_norm(w_cnn.data - fc_bank.data)
    cnn_flat = w_cnn.data.reshape(-1)
    fc_flat = fc_bank.data.reshape(-1)
    edges, cnn_counts, fc_counts = _shared_histograms(cnn_flat, fc_flat, bins)
    return EquivalenceMetrics(
        act_fnorm_over_n=act,
        weight_fnorm=weight,
        hist_edges=edges,
        cnn_hist=cnn_counts,
        fc_hist=fc_counts,
    )


def _shared_histograms(a: np.ndarray, b: np.ndarray, bins: int):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    a_counts, edges = np.histogram(a, bins=bins, range=(lo, hi))
    b_counts, _ = np.histogram(b, bins=bins, range=(lo, hi))
    return edges.tolist(), a_counts.tolist(), b_counts.tolist()


def _flatten_images(t: Tensor4) -> Matrix2:
    return Matrix2._wrap(t.data.reshape(t.b, -1))


def _gather_tensor(t: Tensor4, idx: np.ndarray) -> Tensor4:
    return Tensor4._wrap(np.ascontiguousarray(t.data[idx]))


def _gather_rows(m3: Tensor3View, idx: np.ndarray) -> Tensor3View:
    sub = np.ascontiguousarray(m3.as_array()[idx])
    nb = len(idx)
    return Tensor3View(Matrix2._wrap(sub.reshape(nb * m3.rows, m3.cols)), nb)


def train_equivalence_experiment(
    data: ExperimentData,
    geom: ConvGeometry,
    config: TrainConfig,
) -> tuple[TrainReport, TrainReport, EquivalenceMetrics]:
    """Train the CONV-first and dense-first networks side by side.

    Both are initialized from one seeded He-init stream (first-layer draws,
    then head draws), consume identical shuffled batch sequences, and learn
    the identity target. Returns the two reports plus divergence metrics
    computed on the held-out split. ``epochs == 0`` skips training and
    measures the shared initialization.
    """
    bij = WeightBijection(geom)
    x_train = pad_zeros(data.train, geom.p)
    x_val = pad_zeros(data.val, geom.p)
    x_held = pad_zeros(data.heldout, geom.p)
    y_train = _flatten_images(data.train)
    y_val = _flatten_images(data.val)

    h_out, w_out, f = padded_output_shape(geom, x_train.h, x_train.w)
    head_in = h_out * w_out * f
    out_dim = data.train.h * data.train.w * data.train.c

    rng = np.random.default_rng(config.seed)
    w1 = Matrix2._wrap(he_init((geom.patch_len, geom.f), geom.patch_len, rng))
    w2 = Matrix2._wrap(he_init((head_in, out_dim), head_in, rng))

    cnn = CnnModel(ConvLayer(bij.to_bank(w1), geom), LinearLayer(w2))
    fc = FcModel(LinearLayer(w1), LinearLayer(w2), geom)

    m3_train = lowered_view3(im2col(x_train, geom))
    m3_val = lowered_view3(im2col(x_val, geom))
    m3_held = lowered_view3(im2col(x_held, geom))

    opt_cnn = make_optimizer(config)
    opt_fc = make_optimizer(config)

    cnn_report = TrainReport()
    fc_report = TrainReport()
    n_train = data.train.b
    for _epoch in range(config.epochs):
        order = rng.permutation(n_train)
        cnn_sum = fc_sum = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            y_b = Matrix2._wrap(np.ascontiguousarray(y_train.data[idx]))
            loss_c = backward_and_step(cnn, (_gather_tensor(x_train, idx), y_b), opt_cnn)
            loss_f = backward_and_step(fc, (_gather_rows(m3_train, idx), y_b), opt_fc)
            cnn_sum += loss_c * len(idx)
            fc_sum += loss_f * len(idx)
        cnn_report.train_loss.append(cnn_sum / n_train)
        fc_report.train_loss.append(fc_sum / n_train)

        _, y_hat_c = forward_cnn(x_val, cnn.conv, cnn.head)
        _, y_hat_f = forward_fc(m3_val, fc.dense1, fc.head)
        cnn_report.val_loss.append(mse(y_hat_c, y_val))
        fc_report.val_loss.append(mse(y_hat_f, y_val))

    v, _ = forward_cnn(x_held, cnn.conv, cnn.head)
    u, _ = forward_fc(m3_held, fc.dense1, fc.head)
    metrics = equivalence_metrics(v, u, cnn.conv.bank, fc.dense1, data.heldout.b)
    hist = Histogram(edges=metrics.hist_edges, counts=metrics.cnn_hist)
    cnn_report.weight_hist = hist
    fc_report.weight_hist = Histogram(edges=metrics.hist_edges, counts=metrics.fc_hist)
    return cnn_report, fc_report, metrics
