"""Encoder families and their hand-written forward/backward passes.

Every layer caches what its backward pass needs; calling backward without a
forward raises MissingForwardCache. Gradients accumulate into a GradientTape
keyed by parameter name, which the optimizer consumes. All math is float64.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError, MissingForwardCache, ShapeMismatch, ZeroRow
from .numerics import Rng, gelu_grad, l2_normalize_rows, normal_cdf, row_norms


class Param:
    """A named trainable array. `decay` marks eligibility for weight decay."""

    __slots__ = ("name", "value", "decay")

    def __init__(self, name: str, value, decay: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.decay = decay

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


class GradientTape:
    """Per-batch gradient accumulator, keyed by parameter name."""

    def __init__(self):
        self.grads: dict[str, np.ndarray] = {}

    def add(self, param: Param, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != param.value.shape:
            raise ShapeMismatch(
                f"gradient shape {grad.shape} != parameter shape "
                f"{param.value.shape} for {param.name}")
        if param.name in self.grads:
            self.grads[param.name] = self.grads[param.name] + grad
        else:
            self.grads[param.name] = grad.copy()

    def get(self, param: Param) -> np.ndarray:
        g = self.grads.get(param.name)
        if g is None:
            return np.zeros_like(param.value)
        return g


def _torch_linear_init(in_dim: int, out_dim: int, gen: np.random.Generator):
    # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias
    bound = 1.0 / math.sqrt(in_dim)
    w = gen.uniform(-bound, bound, size=(out_dim, in_dim))
    b = gen.uniform(-bound, bound, size=out_dim)
    return w, b


class Linear:
    def __init__(self, name: str, in_dim: int, out_dim: int,
                 gen: np.random.Generator | None = None):
        if gen is None:
            w = np.zeros((out_dim, in_dim))
            b = np.zeros(out_dim)
        else:
            w, b = _torch_linear_init(in_dim, out_dim, gen)
        self.weight = Param(f"{name}.weight", w)
        self.bias = Param(f"{name}.bias", b)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.in_dim:
            raise ShapeMismatch(
                f"{self.weight.name}: input has {x.shape[1]} columns, "
                f"expected {self.in_dim}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, g: np.ndarray, tape: GradientTape) -> np.ndarray:
        if self._x is None:
            raise MissingForwardCache(self.weight.name)
        tape.add(self.weight, g.T @ self._x)
        tape.add(self.bias, g.sum(axis=0))
        return g @ self.weight.value

    def params(self):
        return [self.weight, self.bias]


class Gelu:
    def __init__(self):
        self._x = None

    def forward(self, x):
        self._x = x
        return x * normal_cdf(x)

    def backward(self, g):
        if self._x is None:
            raise MissingForwardCache("gelu")
        return g * gelu_grad(self._x)


class Relu:
    def __init__(self):
        self._x = None

    def forward(self, x):
        self._x = x
        return np.maximum(x, 0.0)

    def backward(self, g):
        if self._x is None:
            raise MissingForwardCache("relu")
        return g * (self._x > 0)


class Dropout:
    """Inverted dropout: train-time scaling by 1/(1-p), identity in eval."""

    def __init__(self, rate: float):
        self.rate = float(rate)
        self._mask = None

    def forward(self, x, train: bool = False,
                gen: np.random.Generator | None = None):
        if not train or self.rate == 0.0:
            self._mask = 1.0
            return x
        if gen is None:
            raise ValueError("train-mode dropout needs a generator")
        keep = gen.random(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, g):
        if self._mask is None:
            raise MissingForwardCache("dropout")
        return g * self._mask


class LayerNorm:
    """Row-wise layer normalization with learnable affine, eps = 1e-5."""

    EPS = 1e-5

    def __init__(self, name: str, dim: int):
        self.gamma = Param(f"{name}.gamma", np.ones(dim))
        self.beta = Param(f"{name}.beta", np.zeros(dim))
        self._cache = None

    def forward(self, x):
        mu = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, g, tape: GradientTape):
        if self._cache is None:
            raise MissingForwardCache(self.gamma.name)
        xhat, inv = self._cache
        tape.add(self.gamma, (g * xhat).sum(axis=0))
        tape.add(self.beta, g.sum(axis=0))
        gg = g * self.gamma.value
        return inv * (gg - gg.mean(axis=1, keepdims=True)
                      - xhat * (gg * xhat).mean(axis=1, keepdims=True))

    def params(self):
        return [self.gamma, self.beta]


class RowNormalize:
    """Projection onto the unit hypersphere, row by row."""

    def __init__(self):
        self._cache = None

    def forward(self, x):
        norms = row_norms(x)
        y = l2_normalize_rows(x)
        self._cache = (y, norms)
        return y

    def backward(self, g):
        if self._cache is None:
            raise MissingForwardCache("l2norm")
        y, norms = self._cache
        return (g - y * np.sum(g * y, axis=1, keepdims=True)) / norms[:, None]


class SingleTokenAttention:
    """Multi-head self-attention over a one-token sequence.

    With a single key the softmax is identically 1, so the block reduces to
    out = W_o (W_v x + b_v) + b_o; the Q/K projections exist as parameters
    but cannot influence the output and therefore receive zero gradient.
    """

    def __init__(self, name: str, dim: int, n_heads: int,
                 gen: np.random.Generator):
        if dim % n_heads:
            raise ShapeMismatch(f"dim {dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.q = Linear(f"{name}.q", dim, dim, gen)
        self.k = Linear(f"{name}.k", dim, dim, gen)
        self.v = Linear(f"{name}.v", dim, dim, gen)
        self.o = Linear(f"{name}.o", dim, dim, gen)

    def forward(self, x):
        return self.o.forward(self.v.forward(x))

    def backward(self, g, tape: GradientTape):
        return self.v.backward(self.o.backward(g, tape), tape)

    def params(self):
        return self.q.params() + self.k.params() + self.v.params() + self.o.params()


class LinearAdapter:
    """Single linear map, optionally followed by unit-sphere projection."""

    def __init__(self, in_dim: int, out_dim: int, name: str = "adapter",
                 gen: np.random.Generator | None = None):
        self.linear = Linear(name, in_dim, out_dim, gen)
        self.norm = RowNormalize()
        self._normalized = None

    @property
    def weight(self):
        return self.linear.weight

    @property
    def bias(self):
        return self.linear.bias

    def forward(self, x: np.ndarray, normalize: bool = True) -> np.ndarray:
        out = self.linear.forward(np.asarray(x, dtype=np.float64))
        self._normalized = normalize
        if normalize:
            out = self.norm.forward(out)
        return out

    def backward(self, g: np.ndarray, tape: GradientTape) -> np.ndarray:
        if self._normalized is None:
            raise MissingForwardCache(self.linear.weight.name)
        if self._normalized:
            g = self.norm.backward(g)
        return self.linear.backward(g, tape)

    def params(self):
        return self.linear.params()


def init_identity_adapter(dim: int, noise_variance: float = 1e-4,
                          rng: Rng | np.random.Generator | None = None,
                          name: str = "adapter") -> LinearAdapter:
    """Adapter starting at (a perturbation of) the identity, with zero bias."""
    if noise_variance < 0:
        raise ValueError("noise_variance must be >= 0")
    adapter = LinearAdapter(dim, dim, name=name)
    w = np.eye(dim)
    if noise_variance > 0:
        if rng is None:
            raise ValueError("a noise source is required when noise_variance > 0")
        gen = rng.generator() if isinstance(rng, Rng) else rng
        w = w + gen.normal(0.0, math.sqrt(noise_variance), size=(dim, dim))
    adapter.linear.weight.value = w
    adapter.linear.bias.value = np.zeros(dim)
    return adapter


class BotaniaMLP:
    """Cover-vector classifier whose normalized penultimate layer is the
    tabular embedding.

    Canonical dimensions are 3587 -> 1536 -> 768 -> 232 with Dropout(0.4);
    all of them are constructor arguments so small instances stay testable.
    """

    def __init__(self, in_dim: int = 3587, hidden: int = 1536,
                 embed: int = 768, n_classes: int = 232,
                 dropout_rate: float = 0.4,
                 gen: np.random.Generator | None = None,
                 name: str = "botania"):
        self.in_dim = in_dim
        self.embed_dim = embed
        self.n_classes = n_classes
        self.lin1 = Linear(f"{name}.lin1", in_dim, hidden, gen)
        self.lin2 = Linear(f"{name}.lin2", hidden, embed, gen)
        self.head = Linear(f"{name}.head", embed, n_classes, gen)
        self.gelu1 = Gelu()
        self.gelu2 = Gelu()
        self.drop1 = Dropout(dropout_rate)
        self.drop2 = Dropout(dropout_rate)
        self.norm = RowNormalize()
        self._ran_forward = False

    def forward(self, covers: np.ndarray, train: bool = False,
                gen: np.random.Generator | None = None,
                with_head: bool = True, with_penult: bool = True):
        """Returns (logits, penult). The penultimate representation is the
        post-GELU output of the embedding layer, unit-normalized, taken
        before its dropout. Either path can be skipped: classifier
        pretraining never touches the penult (whose normalization raises
        ZeroRow on saturated rows), alignment never touches the head."""
        x = np.asarray(covers, dtype=np.float64)
        if x.min(initial=0.0) < 0.0 or x.max(initial=0.0) > 100.0:
            raise DataError("cover values must lie in [0, 100]")
        h1 = self.drop1.forward(self.gelu1.forward(self.lin1.forward(x)),
                                train, gen)
        h2 = self.gelu2.forward(self.lin2.forward(h1))
        penult = self.norm.forward(h2) if with_penult else None
        logits = None
        if with_head:
            logits = self.head.forward(self.drop2.forward(h2, train, gen))
        self._ran_forward = True
        self._with_head = with_head
        return logits, penult

    def backward(self, tape: GradientTape, g_logits=None, g_penult=None):
        if not self._ran_forward:
            raise MissingForwardCache("botania")
        g_h2 = 0.0
        if g_logits is not None:
            if not self._with_head:
                raise MissingForwardCache("botania head")
            g_h2 = g_h2 + self.drop2.backward(self.head.backward(g_logits, tape))
        if g_penult is not None:
            g_h2 = g_h2 + self.norm.backward(g_penult)
        g_h1 = self.lin2.backward(self.gelu2.backward(g_h2), tape)
        g_x = self.lin1.backward(self.gelu1.backward(self.drop1.backward(g_h1)),
                                 tape)
        return g_x

    def params(self):
        return self.lin1.params() + self.lin2.params() + self.head.params()


class TwoLayerEncoder:
    """Linear -> ReLU -> Dropout(0.1) -> Linear -> unit sphere.

    The ablation branch used for both modalities: hidden width 1024 on the
    tabular side, 2600 on the image side.
    """

    def __init__(self, in_dim: int, hidden: int, out_dim: int,
                 gen: np.random.Generator, name: str = "mlp",
                 dropout_rate: float = 0.1):
        self.lin1 = Linear(f"{name}.lin1", in_dim, hidden, gen)
        self.lin2 = Linear(f"{name}.lin2", hidden, out_dim, gen)
        self.relu = Relu()
        self.drop = Dropout(dropout_rate)
        self.norm = RowNormalize()

    def forward(self, x, train: bool = False,
                gen: np.random.Generator | None = None):
        h = self.drop.forward(self.relu.forward(self.lin1.forward(
            np.asarray(x, dtype=np.float64))), train, gen)
        return self.norm.forward(self.lin2.forward(h))

    def backward(self, g, tape: GradientTape):
        g = self.lin2.backward(self.norm.backward(g), tape)
        return self.lin1.backward(self.relu.backward(self.drop.backward(g)),
                                  tape)

    def params(self):
        return self.lin1.params() + self.lin2.params()


class AttentionEncoder:
    """Tabular branch with a pre-norm single-token attention block.

    reduce -> LayerNorm -> MHA -> residual -> LayerNorm -> ReLU ->
    Dropout(0.1) -> project -> unit sphere.
    """

    def __init__(self, in_dim: int, out_dim: int,
                 gen: np.random.Generator, model_dim: int = 1024,
                 n_heads: int = 4, name: str = "attn",
                 dropout_rate: float = 0.1):
        self.reduce = Linear(f"{name}.reduce", in_dim, model_dim, gen)
        self.ln1 = LayerNorm(f"{name}.ln1", model_dim)
        self.mha = SingleTokenAttention(f"{name}.mha", model_dim, n_heads, gen)
        self.ln2 = LayerNorm(f"{name}.ln2", model_dim)
        self.relu = Relu()
        self.drop = Dropout(dropout_rate)
        self.project = Linear(f"{name}.project", model_dim, out_dim, gen)
        self.norm = RowNormalize()

    def forward(self, x, train: bool = False,
                gen: np.random.Generator | None = None):
        h = self.reduce.forward(np.asarray(x, dtype=np.float64))
        attended = h + self.mha.forward(self.ln1.forward(h))
        f = self.drop.forward(self.relu.forward(self.ln2.forward(attended)),
                              train, gen)
        return self.norm.forward(self.project.forward(f))

    def backward(self, g, tape: GradientTape):
        g = self.project.backward(self.norm.backward(g), tape)
        g_att = self.ln2.backward(self.relu.backward(self.drop.backward(g)),
                                  tape)
        g_h = g_att + self.ln1.backward(self.mha.backward(g_att, tape), tape)
        return self.reduce.backward(g_h, tape)

    def params(self):
        return (self.reduce.params() + self.ln1.params() + self.mha.params()
                + self.ln2.params() + self.project.params())


class BotaSPModel:
    """Supervised baseline: projection -> unit sphere -> hidden(GELU,
    Dropout 0.4) -> per-species head.

    Downstream features are the post-GELU, pre-dropout hidden activations
    (width 1536 at canonical size)."""

    def __init__(self, in_dim: int, n_species: int, proj_dim: int = 768,
                 hidden: int = 1536, dropout_rate: float = 0.4,
                 gen: np.random.Generator | None = None, name: str = "botasp"):
        self.proj = Linear(f"{name}.proj", in_dim, proj_dim, gen)
        self.hidden = Linear(f"{name}.hidden", proj_dim, hidden, gen)
        self.head = Linear(f"{name}.head", hidden, n_species, gen)
        self.proj_norm = RowNormalize()
        self.gelu = Gelu()
        self.drop = Dropout(dropout_rate)
        self.feature_dim = hidden
        self._ran_forward = False

    def forward(self, x, train: bool = False,
                gen: np.random.Generator | None = None):
        """Returns (logits, z_proj, features)."""
        z = self.proj_norm.forward(self.proj.forward(
            np.asarray(x, dtype=np.float64)))
        feat = self.gelu.forward(self.hidden.forward(z))
        logits = self.head.forward(self.drop.forward(feat, train, gen))
        self._ran_forward = True
        return logits, z, feat

    def backward(self, tape: GradientTape, g_logits, g_z=None):
        if not self._ran_forward:
            raise MissingForwardCache("botasp")
        g_feat = self.drop.backward(self.head.backward(g_logits, tape))
        g_zt = self.hidden.backward(self.gelu.backward(g_feat), tape)
        if g_z is not None:
            g_zt = g_zt + g_z
        return self.proj.backward(self.proj_norm.backward(g_zt), tape)

    def params(self):
        return self.proj.params() + self.hidden.params() + self.head.params()


VARIANTS = ("botania-linear", "mlp", "attention")


class AlignmentModel:
    """Paired image/tabular encoders plus the learnable temperature and bias.

    variant selects the tabular branch: the pretrained-style cover MLP with
    linear adapters on both sides, a two-layer MLP on both sides, or the
    attention block on the tabular side.
    """

    def __init__(self, variant: str, d_img: int, d_tab: int,
                 rng: Rng, proj_dim: int = 768,
                 botania: BotaniaMLP | None = None,
                 mlp_img_hidden: int = 2600, mlp_tab_hidden: int = 1024,
                 attn_model_dim: int = 1024, attn_heads: int = 4,
                 adapter_noise_variance: float = 1e-4,
                 tau_init: float = math.log(10.0), bias_init: float = -10.0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.d_img = d_img
        self.proj_dim = proj_dim
        self.botania = None
        if variant == "botania-linear":
            if d_img != proj_dim:
                raise ShapeMismatch(
                    "identity-initialized image adapter needs d_img == proj_dim")
            self.img_branch = init_identity_adapter(
                d_img, adapter_noise_variance, rng.substream("init/img_adapter"),
                name="img_adapter")
            if botania is None:
                raise ValueError("botania-linear variant needs a BotaniaMLP")
            if botania.embed_dim != proj_dim:
                raise ShapeMismatch("tabular embedding width must equal proj_dim")
            self.botania = botania
            self.tab_adapter = LinearAdapter(
                botania.embed_dim, proj_dim, name="tab_adapter",
                gen=rng.substream("init/tab_adapter"))
        elif variant == "mlp":
            self.img_branch = TwoLayerEncoder(
                d_img, mlp_img_hidden, proj_dim,
                rng.substream("init/img_encoder"), name="img_encoder")
            self.tab_branch = TwoLayerEncoder(
                d_tab, mlp_tab_hidden, proj_dim,
                rng.substream("init/tab_encoder"), name="tab_encoder")
        else:
            self.img_branch = TwoLayerEncoder(
                d_img, mlp_img_hidden, proj_dim,
                rng.substream("init/img_encoder"), name="img_encoder")
            self.tab_branch = AttentionEncoder(
                d_tab, proj_dim, rng.substream("init/tab_encoder"),
                model_dim=attn_model_dim, n_heads=attn_heads,
                name="tab_encoder")
        self.tau = Param("scalars.tau", np.float64(tau_init), decay=False)
        self.bias = Param("scalars.bias", np.float64(bias_init), decay=False)

    def encode_images(self, x, train=False, gen=None):
        if self.variant == "botania-linear":
            return self.img_branch.forward(x, normalize=True)
        return self.img_branch.forward(x, train=train, gen=gen)

    def backward_images(self, g, tape):
        return self.img_branch.backward(g, tape)

    def encode_tables(self, covers, train=False, gen=None):
        if self.variant == "botania-linear":
            _, penult = self.botania.forward(covers, train=train, gen=gen,
                                             with_head=False)
            return self.tab_adapter.forward(penult, normalize=True)
        return self.tab_branch.forward(covers, train=train, gen=gen)

    def backward_tables(self, g, tape):
        if self.variant == "botania-linear":
            g_penult = self.tab_adapter.backward(g, tape)
            return self.botania.backward(tape, g_penult=g_penult)
        return self.tab_branch.backward(g, tape)

    def params(self):
        out = list(self.img_branch.params())
        if self.variant == "botania-linear":
            out += self.botania.params() + self.tab_adapter.params()
        else:
            out += self.tab_branch.params()
        out += [self.tau, self.bias]
        return out
