"""Unified nonlocal block variants: forward and analytic backward passes.

Every variant builds an affinity matrix over embedded features and applies
a (low-order) polynomial of it to a node signal, plus a residual
connection. ``generalized_forward`` is the generic polynomial routine the
variant-specific forwards are checked against.
"""

from dataclasses import dataclass, field
import json
import os

import numpy as np

from . import graph, linalg
from .errors import ConfigError, PreconditionError, ShapeError
from .graph import AffinityMatrix, FeatureMap

VARIANTS = ("NL", "NS", "A2", "CGNL", "CC", "SNL", "SNL_A1", "SNL_A2", "CHEB_K")

# desk-scale guard for the flattened (position, channel) graph
CGNL_MAX_VERTICES = 4096

_CONFIG_KEYS = ("variant", "c_in", "c_s", "order", "kernel", "backprop_affinity")


@dataclass
class BlockConfig:
    """Variant tag plus channel sizes, polynomial order, and affinity options."""

    variant: str
    c_in: int
    c_s: int
    order: int = 2
    kernel: str = "exp_dot"
    backprop_affinity: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not (1 <= self.c_s <= self.c_in):
            raise ConfigError(f"need 1 <= c_s <= c_in, got c_s={self.c_s}, c_in={self.c_in}")
        if self.kernel not in graph.KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.variant == "CHEB_K" and self.order < 2:
            raise ConfigError(f"CHEB_K needs order >= 2, got {self.order}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _CONFIG_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockConfig":
        unknown = set(d) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown block config keys: {sorted(unknown)}")
        missing = {"variant", "c_in", "c_s"} - set(d)
        if missing:
            raise ConfigError(f"missing block config keys: {sorted(missing)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BlockConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid block config JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("block config JSON must be an object")
        return cls.from_dict(d)


def filter_roles(cfg: BlockConfig) -> list[str]:
    """Names of the filter weight matrices a variant owns."""
    if cfg.variant in ("NL", "A2", "CGNL", "CC", "NS", "SNL_A1"):
        return ["w"]
    if cfg.variant in ("SNL", "SNL_A2"):
        return ["w1", "w2"]
    return [f"w{k + 1}" for k in range(cfg.order)]  # CHEB_K


def filter_shape(cfg: BlockConfig, role: str) -> tuple[int, int]:
    # CC aggregates the raw input (node feature X), so its weight maps C1 -> C1
    if cfg.variant == "CC":
        return (cfg.c_in, cfg.c_in)
    return (cfg.c_s, cfg.c_in)


@dataclass
class BlockParams:
    """Projection embeddings plus the variant's filter weights."""

    w_phi: np.ndarray
    w_psi: np.ndarray
    w_z: np.ndarray
    filters: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.w_phi = linalg.as_matrix(self.w_phi)
        self.w_psi = linalg.as_matrix(self.w_psi)
        self.w_z = linalg.as_matrix(self.w_z)
        self.filters = {k: linalg.as_matrix(v) for k, v in self.filters.items()}

    def items(self) -> list[tuple[str, np.ndarray]]:
        """Fixed parameter order (projections first, then filter weights)."""
        out = [("w_phi", self.w_phi), ("w_psi", self.w_psi), ("w_z", self.w_z)]
        out.extend(self.filters.items())
        return out


def check_params(cfg: BlockConfig, params: BlockParams) -> None:
    proj = (cfg.c_in, cfg.c_s)
    for name in ("w_phi", "w_psi", "w_z"):
        if getattr(params, name).shape != proj:
            raise ShapeError(f"{name} has shape {getattr(params, name).shape}, want {proj}")
    roles = filter_roles(cfg)
    if sorted(params.filters) != sorted(roles):
        raise ConfigError(f"filter roles {sorted(params.filters)} != {sorted(roles)}")
    for role in roles:
        want = filter_shape(cfg, role)
        if params.filters[role].shape != want:
            raise ShapeError(f"{role} has shape {params.filters[role].shape}, want {want}")


def init_params(cfg: BlockConfig, rng: np.random.Generator) -> BlockParams:
    """Projections uniform in [-1/sqrt(C1), 1/sqrt(C1)]; filter weights zero.

    Zero filter weights make every block start as the identity, the usual
    stable initialization for residual insertion.
    """
    bound = 1.0 / np.sqrt(cfg.c_in)
    proj = lambda: rng.uniform(-bound, bound, size=(cfg.c_in, cfg.c_s))
    filters = {r: np.zeros(filter_shape(cfg, r)) for r in filter_roles(cfg)}
    return BlockParams(proj(), proj(), proj(), filters)


def random_params(cfg: BlockConfig, rng: np.random.Generator, scale: float = 0.5) -> BlockParams:
    """All parameter matrices drawn uniform; used by gradient checks."""
    bound = scale / np.sqrt(cfg.c_in)
    draw = lambda shape: rng.uniform(-bound, bound, size=shape)
    filters = {r: draw(filter_shape(cfg, r)) for r in filter_roles(cfg)}
    return BlockParams(
        draw((cfg.c_in, cfg.c_s)),
        draw((cfg.c_in, cfg.c_s)),
        draw((cfg.c_in, cfg.c_s)),
        filters,
    )


def save_params(params: BlockParams, out_dir: str) -> None:
    """Binary matrices plus a JSON manifest listing matrix roles."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {}
    for name, mat in params.items():
        fname = f"{name}.mat"
        linalg.save_binary(mat, os.path.join(out_dir, fname))
        manifest[name] = fname
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump({"matrices": manifest}, fh, indent=2, sort_keys=True)


def load_params(in_dir: str) -> BlockParams:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)["matrices"]
    mats = {name: linalg.load_binary(os.path.join(in_dir, f)) for name, f in manifest.items()}
    try:
        w_phi = mats.pop("w_phi")
        w_psi = mats.pop("w_psi")
        w_z = mats.pop("w_z")
    except KeyError as exc:
        raise ConfigError(f"params manifest missing projection {exc}") from exc
    return BlockParams(w_phi, w_psi, w_z, mats)


def embed(x: FeatureMap, params: BlockParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-position linear projections phi, psi, Z (1x1 convolutions)."""
    if x.channels != params.w_phi.shape[0]:
        raise ShapeError(
            f"feature map has {x.channels} channels, projections expect "
            f"{params.w_phi.shape[0]}"
        )
    xv = x.values
    return xv @ params.w_phi, xv @ params.w_psi, xv @ params.w_z


class _ForwardState:
    """Intermediates shared by the forward and backward passes."""

    __slots__ = ("phi", "psi", "z", "v", "m", "mask", "degrees", "a", "z_node")

    def __init__(self):
        self.v = None
        self.mask = None
        self.degrees = None


def _affinity_state(x: FeatureMap, cfg: BlockConfig, params: BlockParams) -> _ForwardState:
    st = _ForwardState()
    st.phi, st.psi, st.z = embed(x, params)
    variant = cfg.variant

    if variant == "CGNL":
        if x.n_positions * cfg.c_s > CGNL_MAX_VERTICES:
            raise PreconditionError(
                f"CGNL flattened graph has {x.n_positions * cfg.c_s} vertices "
                f"(> {CGNL_MAX_VERTICES})"
            )
        st.v = graph.flatten_spatial_channel(st.z)
        st.m = graph.kernel_matrix(st.v, st.v, cfg.kernel)
        raw = AffinityMatrix(st.m, cfg.kernel)
        st.degrees = graph.degrees(raw)
        st.a = graph.normalize(raw, "random_walk")
        st.z_node = st.v
        return st

    st.m = graph.kernel_matrix(st.phi, st.psi, cfg.kernel)
    raw = AffinityMatrix(st.m, cfg.kernel)
    if variant in ("NL", "NS", "SNL_A2"):
        st.degrees = graph.degrees(raw)
        st.a = graph.normalize(raw, "random_walk")
    elif variant == "A2":
        st.a = raw
    elif variant in ("SNL", "SNL_A1", "CHEB_K"):
        sym = graph.symmetrize(raw)
        st.degrees = graph.degrees(sym)
        st.a = graph.normalize(sym, "symmetric")
    elif variant == "CC":
        st.mask = graph.crisscross_mask(x.height, x.width)
        masked = AffinityMatrix(st.mask * st.m, cfg.kernel, mask_applied=True)
        st.degrees = graph.degrees(masked)
        st.a = graph.normalize(masked, "random_walk")
    else:  # pragma: no cover - VARIANTS is closed
        raise ConfigError(f"unknown variant {variant!r}")
    st.z_node = x.values if variant == "CC" else st.z
    return st


def build_block_affinity(x: FeatureMap, cfg: BlockConfig, params: BlockParams) -> AffinityMatrix:
    """The affinity matrix a variant aggregates with (see ``VARIANTS``)."""
    check_params(cfg, params)
    return _affinity_state(x, cfg, params).a


def generalized_forward(
    a_values: np.ndarray, z_node: np.ndarray, weights: list[np.ndarray]
) -> np.ndarray:
    """Generic polynomial operator: Z W_1 + A Z W_2 + sum_k A^k Z W_{k+1}.

    Powers are applied by iterated multiplication; A^k is never formed.
    """
    a_values = linalg.as_matrix(a_values)
    z_node = linalg.as_matrix(z_node)
    out = z_node @ weights[0]
    cur = z_node
    for k in range(1, len(weights)):
        cur = a_values @ cur
        out = out + cur @ weights[k]
    return out


def block_forward(x: FeatureMap, cfg: BlockConfig, params: BlockParams) -> FeatureMap:
    """Residual forward pass Y = X + F(A, Z) per the variant's formula."""
    check_params(cfg, params)
    st = _affinity_state(x, cfg, params)
    f = _operator_forward(x, cfg, params, st)
    return FeatureMap(x.height, x.width, x.channels, x.values + f)


def _operator_forward(x, cfg, params, st) -> np.ndarray:
    a = st.a.values
    variant = cfg.variant
    if variant in ("NL", "A2", "SNL_A1"):
        return (a @ st.z) @ params.filters["w"]
    if variant == "CC":
        return (a @ x.values) @ params.filters["w"]
    if variant == "NS":
        w = params.filters["w"]
        return st.z @ (-w) + (a @ st.z) @ w
    if variant in ("SNL", "SNL_A2"):
        return st.z @ params.filters["w1"] + (a @ st.z) @ params.filters["w2"]
    if variant == "CHEB_K":
        ws = [params.filters[f"w{k + 1}"] for k in range(cfg.order)]
        return generalized_forward(a, st.z, ws)
    # CGNL: filter on the flattened graph, reshape, then map back to C1
    fv = a @ st.v
    o = graph.unflatten_spatial_channel(fv, x.n_positions, cfg.c_s)
    return o @ params.filters["w"]


def _variant_terms(cfg: BlockConfig, params: BlockParams):
    """Polynomial terms (power k, role, sign) of the non-CGNL variants."""
    if cfg.variant in ("NL", "A2", "SNL_A1", "CC"):
        return [(1, "w", 1.0)]
    if cfg.variant == "NS":
        return [(0, "w", -1.0), (1, "w", 1.0)]
    if cfg.variant in ("SNL", "SNL_A2"):
        return [(0, "w1", 1.0), (1, "w2", 1.0)]
    return [(k, f"w{k + 1}", 1.0) for k in range(cfg.order)]


def _normalization_backward(cfg, st, g_a: np.ndarray) -> np.ndarray:
    """Gradient through degree normalization: dL/dA -> dL/dM (raw kernel)."""
    variant = cfg.variant
    a = st.a.values
    if variant == "A2":
        return g_a
    d = st.degrees
    if st.a.normalization == "random_walk":
        # A_ij = M_ij / d_i with d_i the row sum (quotient rule)
        r = np.sum(g_a * a, axis=1)
        g_m = (g_a - r[:, None]) / d[:, None]
        if variant == "CC":
            g_m = st.mask * g_m
        return g_m
    # symmetric: A = M_hat * s s^T with s = d^-1/2, d the row sums of M_hat
    s = 1.0 / np.sqrt(d)
    row = np.sum(g_a * a, axis=1)
    col = np.sum(g_a * a, axis=0)
    g_mhat = g_a * np.outer(s, s) - ((row + col) / (2.0 * d))[:, None]
    return 0.5 * (g_mhat + g_mhat.T)


def block_backward(
    x: FeatureMap, cfg: BlockConfig, params: BlockParams, upstream_grad: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Analytic gradients of Y = X + F(A, Z) w.r.t. X and every parameter.

    With ``backprop_affinity`` the gradient also flows through the kernel,
    mask, symmetrization, and degree normalization; otherwise A is treated
    as a constant.
    """
    check_params(cfg, params)
    g = linalg.as_matrix(upstream_grad)
    if g.shape != x.values.shape:
        raise ShapeError(f"upstream grad {g.shape} vs output {x.values.shape}")
    st = _affinity_state(x, cfg, params)
    a = st.a.values
    grads = {name: np.zeros_like(mat) for name, mat in params.items()}
    gx = g.copy()
    want_ga = cfg.backprop_affinity

    if cfg.variant == "CGNL":
        n = x.n_positions
        w = params.filters["w"]
        o = graph.unflatten_spatial_channel(a @ st.v, n, cfg.c_s)
        grads["w"] = o.T @ g
        q = graph.flatten_spatial_channel(g @ w.T)
        gv = a.T @ q
        if want_ga:
            g_a = q @ st.v.T
            g_m = _normalization_backward(cfg, st, g_a)
            g_s = g_m * st.m if cfg.kernel == "exp_dot" else g_m
            # M = f(v, v): v enters as both endpoints of each edge
            gv = gv + g_s @ st.v + g_s.T @ st.v
        gz = graph.unflatten_spatial_channel(gv, n, cfg.c_s)
        gx += gz @ params.w_z.T
        grads["w_z"] = x.values.T @ gz
        return gx, grads

    terms = _variant_terms(cfg, params)
    k_max = max(k for k, _, _ in terms)
    powers = [st.z_node]
    for _ in range(k_max):
        powers.append(a @ powers[-1])
    g_zn = np.zeros_like(st.z_node)
    g_a = np.zeros_like(a) if want_ga else None
    for k, role, sign in terms:
        grads[role] += sign * (powers[k].T @ g)
        r = g @ (sign * params.filters[role]).T
        for j in range(k):
            if want_ga:
                g_a += r @ powers[k - 1 - j].T
            r = a.T @ r
        g_zn += r

    if cfg.variant == "CC":
        gx += g_zn
        gz = np.zeros_like(st.z)
    else:
        gz = g_zn

    if want_ga:
        g_m = _normalization_backward(cfg, st, g_a)
        scale = np.sqrt(st.phi.shape[1])
        g_s = g_m * st.m / scale if cfg.kernel == "exp_dot" else g_m
        g_phi = g_s @ st.psi
        g_psi = g_s.T @ st.phi
    else:
        g_phi = np.zeros_like(st.phi)
        g_psi = np.zeros_like(st.psi)

    gx += g_phi @ params.w_phi.T + g_psi @ params.w_psi.T + gz @ params.w_z.T
    grads["w_phi"] = x.values.T @ g_phi
    grads["w_psi"] = x.values.T @ g_psi
    grads["w_z"] = x.values.T @ gz
    return gx, grads
