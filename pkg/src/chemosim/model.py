"""Model parameters, admissibility cases, taxis sensitivity and data regularization."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Any, Mapping

import numpy as np

from .grid import Grid, integrate


class FLaw(str, enum.Enum):
    ProductLaw = "ProductLaw"  # f(u) = Cf u (u+1)^(alpha-1)
    PowerLaw = "PowerLaw"  # f(u) = Cf u^alpha


class Case(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"


class ClassificationError(ValueError):
    """No admissible case; the message names the violated inequality."""


@dataclass(frozen=True)
class ModelParams:
    m: float = 2.0
    alpha: float = 1.5
    ell: float = 0.0
    Cf: float = 1.0
    f_kind: FLaw = FLaw.PowerLaw
    epsilon: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "f_kind", FLaw(self.f_kind))
        for name in ("m", "alpha", "ell", "Cf", "epsilon"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.ell < 0:
            raise ValueError(f"ell must be >= 0, got {self.ell}")
        if self.Cf <= 0:
            raise ValueError(f"Cf must be > 0, got {self.Cf}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["f_kind"] = self.f_kind.value
        return d


PARAM_KEYS = ("m", "alpha", "ell", "Cf", "f_kind", "epsilon")


def params_from_dict(d: Mapping[str, Any], where: str = "model") -> ModelParams:
    unknown = sorted(set(d) - set(PARAM_KEYS))
    if unknown:
        raise KeyError(f"{where}.{unknown[0]}: unknown key")
    kw = {k: d[k] for k in PARAM_KEYS if k in d}
    if "f_kind" in kw and kw["f_kind"] not in FLaw.__members__:
        raise ValueError(f"{where}.f_kind: expected one of {list(FLaw.__members__)}, got {kw['f_kind']!r}")
    return ModelParams(**kw)


def classify(params: ModelParams) -> Case:
    """Return the unique admissible case or raise ClassificationError.

    All inequalities are strict where printed strict; ties are rejected.
    """
    m, a = params.m, params.alpha
    if not 1 <= m < 4:
        raise ClassificationError(f"requires 1 <= m < 4, got m={m}")
    if m < 2:
        case, law, upper, upper_txt = Case.I, FLaw.ProductLaw, m, "α < m"
    else:
        case = Case.II if m < 3 else Case.III
        law, upper, upper_txt = FLaw.PowerLaw, m / 2 + 1, "α < m/2+1"
    if params.f_kind is not law:
        raise ClassificationError(
            f"case {case.value} ({'1 <= m < 2' if case is Case.I else '2 <= m < 4'}) "
            f"requires f_kind={law.value}, got {params.f_kind.value}")
    window = f"case {case.value} requires m−1 < {upper_txt} with strict inequalities"
    if not m - 1 < a:
        raise ClassificationError(f"{window}; violated m−1 < α: m−1={m - 1}, α={a}")
    if not a < upper:
        raise ClassificationError(f"{window}; violated {upper_txt}: α={a}, bound={upper}")
    return case


def f_eval(u, params: ModelParams):
    """Taxis sensitivity, saturating its growth bound with equality."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("f is defined for u >= 0 only")
    if params.f_kind is FLaw.ProductLaw:
        out = params.Cf * u * (u + 1.0) ** (params.alpha - 1.0)
    else:
        out = params.Cf * u ** params.alpha
    return out if out.ndim else float(out)


def f_rate(u, params: ModelParams):
    """max(f'(u), f(u)/u): bound on the outflow rate per unit mass of the upwind
    taxis flux, used by the advective step restriction."""
    u = np.asarray(u, dtype=float)
    a, c = params.alpha, params.Cf
    if params.f_kind is FLaw.ProductLaw:
        ratio = c * (u + 1.0) ** (a - 1.0)
        deriv = ratio + c * (a - 1.0) * u * (u + 1.0) ** (a - 2.0)
    else:
        with np.errstate(divide="ignore"):
            ratio = np.where(u > 0, c * u ** (a - 1.0), 0.0 if a > 1 else np.inf)
        deriv = a * ratio
    return np.maximum(ratio, deriv)


@dataclass(frozen=True)
class InitialData:
    u0: np.ndarray
    v0: np.ndarray

    def validate(self, grid: Grid, case: Case | None = None) -> None:
        u0, v0 = grid.check(self.u0), grid.check(self.v0)
        if not (np.isfinite(u0).all() and np.isfinite(v0).all()):
            raise ValueError("initial data must be finite")
        if u0.min() < 0:
            raise ValueError(f"u0 must be nonnegative, min(u0)={u0.min()}")
        if not integrate(u0, grid) > 0:
            raise ValueError("u0 must not vanish identically")
        if not v0.min() > 0:
            raise ValueError(f"v0 must be positive, min(v0)={v0.min()}")
        if case is Case.III and not u0.min() > 0:
            raise ValueError("case III (3 <= m < 4) requires u0 > 0 everywhere")


def regularize_initial(data: InitialData, params: ModelParams) -> np.ndarray:
    """u0 + epsilon for 1 <= m < 3, u0 itself for 3 <= m < 4."""
    u0 = np.asarray(data.u0, dtype=float)
    if classify(params) is Case.III:
        return u0.copy()
    return u0 + params.epsilon
