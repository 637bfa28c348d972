"""Material laws: strain -> stress for small-strain elasticity, temperature -> conductivity.

Strains and stresses are batched Voigt vectors with engineering shear:
2D ``[e_xx, e_yy, g_xy]`` (plane strain), 3D ``[e_xx, e_yy, e_zz, g_yz, g_xz, g_xy]``.
All elastic laws are isotropic, ``sigma = lam tr(eps) I + 2 mu eps``, with the
moduli possibly depending on the strain.  Neural variants predict the moduli
with an MLP and map them through that same relation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import neural
from .errors import CheckpointError, InvalidArgumentError, UnsupportedOperationError
from .neural import MLPParams

C1 = 1.0e9
C2 = 500.0
NU = 0.3
K_R, BETA, DELTA, T_R = 2.0, 1.0, 0.62, 298.0
STRAIN_SCALE = 1.0e2


def voigt_size(dim: int) -> int:
    return 3 if dim == 2 else 6


def dim_from_voigt(n: int) -> int:
    if n == 3:
        return 2
    if n == 6:
        return 3
    raise InvalidArgumentError(f"Voigt vector of length {n} is neither 2D nor 3D")


def trace_vector(n: int) -> np.ndarray:
    """m with tr(eps) = m . eps."""
    return np.array([1.0, 1.0, 0.0]) if n == 3 else np.array([1.0, 1, 1, 0, 0, 0])


def shear_factor(n: int) -> np.ndarray:
    """D with 2 mu eps (tensor) = mu * D * eps (engineering Voigt)."""
    return np.array([2.0, 2.0, 1.0]) if n == 3 else np.array([2.0, 2, 2, 1, 1, 1])


def voigt_to_tensor(eps: np.ndarray) -> np.ndarray:
    """Batched engineering-Voigt strain to full 3x3 tensors (plane strain embedding in 2D)."""
    eps = np.atleast_2d(eps)
    T = np.zeros((len(eps), 3, 3))
    if eps.shape[1] == 3:
        T[:, 0, 0], T[:, 1, 1] = eps[:, 0], eps[:, 1]
        T[:, 0, 1] = T[:, 1, 0] = 0.5 * eps[:, 2]
    else:
        for k in range(3):
            T[:, k, k] = eps[:, k]
        T[:, 1, 2] = T[:, 2, 1] = 0.5 * eps[:, 3]
        T[:, 0, 2] = T[:, 2, 0] = 0.5 * eps[:, 4]
        T[:, 0, 1] = T[:, 1, 0] = 0.5 * eps[:, 5]
    return T


def tensor_to_voigt(T: np.ndarray, dim: int, engineering: bool = True) -> np.ndarray:
    f = 2.0 if engineering else 1.0
    if dim == 2:
        return np.stack([T[:, 0, 0], T[:, 1, 1], f * T[:, 0, 1]], axis=1)
    return np.stack([T[:, 0, 0], T[:, 1, 1], T[:, 2, 2], f * T[:, 1, 2], f * T[:, 0, 2], f * T[:, 0, 1]], axis=1)


def lame_from_young(E, nu):
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return lam, mu


# ---------------------------------------------------------------- features
def strain_features(eps: np.ndarray, kind: str, scale: float = STRAIN_SCALE) -> tuple[np.ndarray, np.ndarray]:
    """Network inputs and their derivative w.r.t. the Voigt strain.

    ``"invariants"``: ``[s tr(eps), s^2 |dev eps|^2]`` of the 3x3 strain, which
    is frame-indifferent and the same in 2D and 3D.  ``"voigt"``: the scaled
    Voigt vector itself.  ``"trace"``: ``[s tr(eps)]`` only.
    Returns features (N, nf) and d features / d eps (N, nf, nv).
    """
    eps = np.atleast_2d(eps)
    n = eps.shape[1]
    if kind == "voigt":
        return scale * eps, np.broadcast_to(scale * np.eye(n), (len(eps), n, n))
    m = trace_vector(n)
    if kind == "trace":
        return scale * (eps @ m)[:, None], np.broadcast_to(scale * m, (len(eps), 1, n))
    if kind != "invariants":
        raise InvalidArgumentError(f"unknown strain feature kind {kind!r}")
    tr = eps @ m
    normal = m.astype(bool)
    sq = (eps[:, normal] ** 2).sum(axis=1) + 0.5 * (eps[:, ~normal] ** 2).sum(axis=1)
    dev2 = sq - tr**2 / 3.0
    dsq = np.where(normal, 2.0 * eps, eps)
    ddev2 = dsq - (2.0 / 3.0) * tr[:, None] * m
    feats = np.stack([scale * tr, scale**2 * dev2], axis=1)
    dfeats = np.stack([np.broadcast_to(scale * m, eps.shape), scale**2 * ddev2], axis=1)
    return feats, dfeats


# ---------------------------------------------------------------- models
class ElasticModel:
    """Strain-dependent isotropic moduli mapped through Hooke's relation."""

    is_neural = False

    def moduli(self, eps):
        """Return lam, mu (N,) and their strain gradients dlam, dmu (N, nv)."""
        raise NotImplementedError

    def stress(self, eps) -> np.ndarray:
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        n = eps.shape[1]
        lam, mu, _, _ = self.moduli(eps)
        tr = eps @ trace_vector(n)
        return (lam * tr)[:, None] * trace_vector(n) + mu[:, None] * shear_factor(n) * eps

    def stress_and_tangent(self, eps) -> tuple[np.ndarray, np.ndarray]:
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        n = eps.shape[1]
        m, D = trace_vector(n), shear_factor(n)
        lam, mu, dlam, dmu = self.moduli(eps)
        tr = eps @ m
        sig = (lam * tr)[:, None] * m + mu[:, None] * D * eps
        C = lam[:, None, None] * np.outer(m, m) + mu[:, None, None] * np.diag(D)
        C = C + np.einsum("i,b,bj->bij", m, tr, dlam) + np.einsum("bi,bj->bij", D * eps, dmu)
        return sig, C

    def stress_tangent(self, eps) -> np.ndarray:
        return self.stress_and_tangent(eps)[1]

    def stress_param_vjp(self, eps, cotangent) -> np.ndarray:
        raise UnsupportedOperationError(f"{type(self).__name__} has no trainable parameters")

    def young_modulus(self, eps) -> np.ndarray:
        lam, mu, _, _ = self.moduli(np.atleast_2d(eps))
        return mu * (3 * lam + 2 * mu) / (lam + mu)


def _softening(c1, c2, tr):
    a = np.abs(tr)
    f = c1 / (1.0 + c2 * a)
    df = -c1 * c2 * np.sign(tr) / (1.0 + c2 * a) ** 2
    return f, df


@dataclass(frozen=True)
class GroundTruthSoftening(ElasticModel):
    """E = c1 / (1 + c2 |tr eps|) with fixed Poisson ratio."""

    c1: float = C1
    c2: float = C2
    nu: float = NU

    def __post_init__(self):
        if not self.c1 > 0 or not 0 < self.nu < 0.5:
            raise InvalidArgumentError("need c1 > 0 and 0 < nu < 0.5")

    def moduli(self, eps):
        eps = np.atleast_2d(eps)
        m = trace_vector(eps.shape[1])
        E, dE = _softening(self.c1, self.c2, eps @ m)
        lam, mu = lame_from_young(E, self.nu)
        dlam, dmu = lame_from_young(dE, self.nu)
        return lam, mu, dlam[:, None] * m, dmu[:, None] * m


@dataclass(frozen=True)
class GroundTruthLame(ElasticModel):
    """lam = 2 c1, mu = c1 / (1 + c2 |tr eps|)."""

    c1: float = C1
    c2: float = C2

    def __post_init__(self):
        if not self.c1 > 0:
            raise InvalidArgumentError("need c1 > 0")

    def moduli(self, eps):
        eps = np.atleast_2d(eps)
        m = trace_vector(eps.shape[1])
        mu, dmu = _softening(self.c1, self.c2, eps @ m)
        lam = np.full_like(mu, 2.0 * self.c1)
        return lam, mu, np.zeros_like(eps), dmu[:, None] * m


class _NeuralMixin:
    is_neural = True

    @property
    def nets(self) -> tuple[MLPParams, ...]:
        raise NotImplementedError

    @property
    def num_params(self) -> int:
        return sum(n.config.num_params for n in self.nets)

    def params_flat(self) -> np.ndarray:
        return np.concatenate([n.flat() for n in self.nets])

    def _split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_params,):
            raise InvalidArgumentError(f"expected {self.num_params} parameters, got {theta.shape}")
        out, k = [], 0
        for n in self.nets:
            out.append(n.with_flat(theta[k : k + n.config.num_params]))
            k += n.config.num_params
        return out


@dataclass(frozen=True)
class NeuralIsotropicE(_NeuralMixin, ElasticModel):
    """E = output_scale * mlp(features(eps)); Poisson ratio fixed."""

    mlp: MLPParams
    nu: float = NU
    input_scale: float = STRAIN_SCALE
    output_scale: float = C1
    features: str = "invariants"

    @property
    def nets(self):
        return (self.mlp,)

    def with_params(self, theta) -> "NeuralIsotropicE":
        return replace(self, mlp=self._split(theta)[0])

    def _young(self, eps):
        x, dx = strain_features(eps, self.features, self.input_scale)
        y, J = neural.forward_and_jacobian(self.mlp, x)
        E = self.output_scale * y[:, 0]
        dE = self.output_scale * np.einsum("bf,bfn->bn", J[:, 0, :], dx)
        return E, dE, x

    def moduli(self, eps):
        E, dE, _ = self._young(np.atleast_2d(eps))
        lam, mu = lame_from_young(E, self.nu)
        dlam, dmu = lame_from_young(dE, self.nu)
        return lam, mu, dlam, dmu

    def stress_param_vjp(self, eps, cotangent) -> np.ndarray:
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        ct = np.atleast_2d(np.asarray(cotangent, dtype=float))
        n = eps.shape[1]
        # sigma is linear in E: sigma = E * s(eps)
        lam1, mu1 = lame_from_young(1.0, self.nu)
        s = lam1 * (eps @ trace_vector(n))[:, None] * trace_vector(n) + mu1 * shear_factor(n) * eps
        x, _ = strain_features(eps, self.features, self.input_scale)
        gy = self.output_scale * np.einsum("bi,bi->b", ct, s)
        return neural.param_vjp(self.mlp, x, gy[:, None])


@dataclass(frozen=True)
class NeuralLame(_NeuralMixin, ElasticModel):
    """lam = output_scale * mlp_lambda(features), mu = output_scale * mlp_mu(features)."""

    mlp_lambda: MLPParams
    mlp_mu: MLPParams
    input_scale: float = STRAIN_SCALE
    output_scale: float = C1
    features: str = "invariants"

    @property
    def nets(self):
        return (self.mlp_lambda, self.mlp_mu)

    def with_params(self, theta) -> "NeuralLame":
        a, b = self._split(theta)
        return replace(self, mlp_lambda=a, mlp_mu=b)

    def moduli(self, eps):
        eps = np.atleast_2d(eps)
        x, dx = strain_features(eps, self.features, self.input_scale)
        yl, Jl = neural.forward_and_jacobian(self.mlp_lambda, x)
        ym, Jm = neural.forward_and_jacobian(self.mlp_mu, x)
        s = self.output_scale
        dlam = s * np.einsum("bf,bfn->bn", Jl[:, 0, :], dx)
        dmu = s * np.einsum("bf,bfn->bn", Jm[:, 0, :], dx)
        return s * yl[:, 0], s * ym[:, 0], dlam, dmu

    def stress_param_vjp(self, eps, cotangent) -> np.ndarray:
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        ct = np.atleast_2d(np.asarray(cotangent, dtype=float))
        n = eps.shape[1]
        m = trace_vector(n)
        x, _ = strain_features(eps, self.features, self.input_scale)
        g_lam = self.output_scale * (ct @ m) * (eps @ m)
        g_mu = self.output_scale * np.einsum("bi,bi->b", ct, shear_factor(n) * eps)
        return np.concatenate(
            [neural.param_vjp(self.mlp_lambda, x, g_lam[:, None]), neural.param_vjp(self.mlp_mu, x, g_mu[:, None])]
        )


# --------------------------------------------------------------- conductivity
class ConductivityModel:
    is_neural = False

    def conductivity(self, T) -> tuple[np.ndarray, np.ndarray]:
        """k(T) and dk/dT."""
        raise NotImplementedError

    def conductivity_param_vjp(self, T, cotangent) -> np.ndarray:
        raise UnsupportedOperationError(f"{type(self).__name__} has no trainable parameters")


@dataclass(frozen=True)
class ConstantConductivity(ConductivityModel):
    k: float

    def conductivity(self, T):
        T = np.asarray(T, dtype=float)
        return np.full_like(T, self.k), np.zeros_like(T)


@dataclass(frozen=True)
class GroundTruthConductivity(ConductivityModel):
    """k = k_r (1 + beta (T - T_r) / T_r) ** -delta."""

    k_r: float = K_R
    beta: float = BETA
    delta: float = DELTA
    T_r: float = T_R

    def __post_init__(self):
        if not self.k_r > 0:
            raise InvalidArgumentError("k_r must be positive")

    def conductivity(self, T):
        T = np.asarray(T, dtype=float)
        base = 1.0 + self.beta * (T - self.T_r) / self.T_r
        k = self.k_r * base ** (-self.delta)
        dk = -self.delta * self.k_r * base ** (-self.delta - 1.0) * self.beta / self.T_r
        return k, dk


@dataclass(frozen=True)
class NeuralConductivity(_NeuralMixin, ConductivityModel):
    """k = k_min + (k_max - k_min) * mlp((T - T_shift) / T_scale), sigmoid output."""

    mlp: MLPParams
    k_min: float = 0.1
    k_max: float = 4.0
    T_shift: float = 300.0
    T_scale: float = 100.0

    @property
    def nets(self):
        return (self.mlp,)

    def with_params(self, theta) -> "NeuralConductivity":
        return replace(self, mlp=self._split(theta)[0])

    def _x(self, T):
        return ((np.asarray(T, dtype=float).ravel() - self.T_shift) / self.T_scale)[:, None]

    def conductivity(self, T):
        T = np.asarray(T, dtype=float)
        y, J = neural.forward_and_jacobian(self.mlp, self._x(T))
        span = self.k_max - self.k_min
        k = self.k_min + span * y[:, 0]
        dk = span * J[:, 0, 0] / self.T_scale
        return k.reshape(T.shape), dk.reshape(T.shape)

    def conductivity_param_vjp(self, T, cotangent) -> np.ndarray:
        ct = np.asarray(cotangent, dtype=float).ravel()
        return neural.param_vjp(self.mlp, self._x(T), (self.k_max - self.k_min) * ct[:, None])


# ------------------------------------------------------------ functional API
def stress(model: ElasticModel, eps) -> np.ndarray:
    return model.stress(eps)


def stress_tangent(model: ElasticModel, eps) -> np.ndarray:
    return model.stress_tangent(eps)


def stress_param_vjp(model: ElasticModel, eps, cotangent) -> np.ndarray:
    return model.stress_param_vjp(eps, cotangent)


def conductivity(model: ConductivityModel, T):
    return model.conductivity(T)


def conductivity_param_vjp(model: ConductivityModel, T, cotangent) -> np.ndarray:
    return model.conductivity_param_vjp(T, cotangent)


# ------------------------------------------------------------- construction
def _init(cfg, seed, output_gain):
    params = neural.init_params(cfg, seed)
    params.weights[-1] *= output_gain
    return params


def neural_isotropic_e(
    widths=(2, 30, 30, 30, 1), seed: int = 0, features: str = "invariants", output_gain: float = 1.0, **kw
) -> NeuralIsotropicE:
    """ReLU hidden layers, softplus output.  ``output_gain`` scales the initial last-layer weights."""
    cfg = neural.MLPConfig.simple(widths, "relu", "softplus")
    return NeuralIsotropicE(_init(cfg, seed, output_gain), features=features, **kw)


def neural_lame(
    widths=(2, 30, 30, 30, 1), seed: int = 0, features: str = "invariants", output_gain: float = 1.0, **kw
) -> NeuralLame:
    cfg = neural.MLPConfig.simple(widths, "relu", "softplus")
    return NeuralLame(_init(cfg, seed, output_gain), _init(cfg, seed + 1, output_gain), features=features, **kw)


def neural_conductivity(widths=(1, 30, 30, 1), seed: int = 0, output_gain: float = 1.0, **kw) -> NeuralConductivity:
    cfg = neural.MLPConfig.simple(widths, "relu", "sigmoid")
    return NeuralConductivity(_init(cfg, seed, output_gain), **kw)


def model_to_dict(model) -> dict:
    if isinstance(model, NeuralIsotropicE):
        return {
            "kind": "NeuralIsotropicE",
            "mlp": neural.params_to_dict(model.mlp),
            "nu": model.nu,
            "input_scale": model.input_scale,
            "output_scale": model.output_scale,
            "features": model.features,
        }
    if isinstance(model, NeuralLame):
        return {
            "kind": "NeuralLame",
            "mlp_lambda": neural.params_to_dict(model.mlp_lambda),
            "mlp_mu": neural.params_to_dict(model.mlp_mu),
            "input_scale": model.input_scale,
            "output_scale": model.output_scale,
            "features": model.features,
        }
    if isinstance(model, NeuralConductivity):
        return {
            "kind": "NeuralConductivity",
            "mlp": neural.params_to_dict(model.mlp),
            "k_min": model.k_min,
            "k_max": model.k_max,
            "T_shift": model.T_shift,
            "T_scale": model.T_scale,
        }
    raise UnsupportedOperationError(f"cannot serialise {type(model).__name__}")


def model_from_dict(d: dict):
    kind = d.get("kind")
    try:
        if kind == "NeuralIsotropicE":
            return NeuralIsotropicE(
                neural.params_from_dict(d["mlp"]), d["nu"], d["input_scale"], d["output_scale"], d["features"]
            )
        if kind == "NeuralLame":
            return NeuralLame(
                neural.params_from_dict(d["mlp_lambda"]),
                neural.params_from_dict(d["mlp_mu"]),
                d["input_scale"],
                d["output_scale"],
                d["features"],
            )
        if kind == "NeuralConductivity":
            return NeuralConductivity(neural.params_from_dict(d["mlp"]), d["k_min"], d["k_max"], d["T_shift"], d["T_scale"])
    except KeyError as exc:
        raise CheckpointError(f"model record missing field {exc}") from None
    raise CheckpointError(f"unknown model kind {kind!r}")
