"""Shared machinery for the inequality checkers: grids, results, constants, fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate

ANALYTIC_TOL = 1e-9
DISCRETE_TOL = 5e-2
STATUSES = ("pass", "fail", "hypothesis_not_met", "untrusted", "error")


def log_grid(t_min: float, t_max: float, per_decade: int = 16) -> np.ndarray:
    """Log-spaced grid with ``per_decade`` points per decade, both ends included."""
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    count = max(2, int(round(per_decade * math.log10(t_max / t_min))) + 1)
    return np.geomspace(t_min, t_max, count)


@dataclass
class GridSpec:
    """Sweep parameters shared by the checkers.

    ``points`` selects sample indices for discrete sources (core points
    by default).  ``rho_max``/``n_d`` set the distance grid d = rho sqrt(t)
    used for analytic sources.
    """

    t_grid: np.ndarray = field(default_factory=lambda: log_grid(1e-2, 1e2))
    points: Optional[np.ndarray] = None
    eps_list: Sequence[float] = (0.1, 0.5, 1.0)
    p_list: Sequence[float] = (2.0, 4.0, math.inf)
    tolerance: float = ANALYTIC_TOL
    rho_max: float = 8.0
    n_d: int = 16

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.t_grid.size == 0 or np.any(self.t_grid <= 0) or np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must be positive and strictly increasing")
        if any(not 0 < e < 4 for e in self.eps_list):
            raise ValueError("eps values must lie in (0, 4)")
        if any(p < 1 for p in self.p_list):
            raise ValueError("p values must be >= 1")

    def refined(self) -> "GridSpec":
        """Same range with doubled t-grid and distance-grid density."""
        t = self.t_grid
        if t.size > 1:
            mids = np.sqrt(t[:-1] * t[1:])
            t = np.sort(np.concatenate([t, mids]))
        return GridSpec(t, self.points, self.eps_list, self.p_list, self.tolerance, self.rho_max, 2 * self.n_d - 1)

    def d_grid(self, t: float) -> np.ndarray:
        return np.linspace(0.0, self.rho_max, self.n_d) * math.sqrt(t)

    def summary(self) -> Dict[str, Any]:
        return {
            "t_min": float(self.t_grid[0]),
            "t_max": float(self.t_grid[-1]),
            "n_t": int(self.t_grid.size),
            "n_d": int(self.n_d),
            "rho_max": float(self.rho_max),
            "eps": [float(e) for e in self.eps_list],
            "p": [float(p) for p in self.p_list],
            "tolerance": float(self.tolerance),
        }


@dataclass
class CheckResult:
    """Outcome of one checker.

    ``worst_margin`` is the signed RHS - LHS at the witness, ``scale``
    the magnitude max(|LHS|, |RHS|) there; status is fail exactly when
    worst_margin < -tolerance * scale.
    """

    name: str
    space: str
    status: str
    worst_margin: float = math.nan
    scale: float = math.nan
    tolerance: float = ANALYTIC_TOL
    constants: Dict[str, float] = field(default_factory=dict)
    witness: Dict[str, Any] = field(default_factory=dict)
    grid: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    table: List[Dict[str, Any]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self, with_table: bool = False) -> Dict[str, Any]:
        out = {
            "name": self.name,
            "space": self.space,
            "status": self.status,
            "worst_margin": _json_float(self.worst_margin),
            "scale": _json_float(self.scale),
            "tolerance": self.tolerance,
            "constants": {k: _json_float(v) for k, v in self.constants.items()},
            "witness": {k: _json_value(v) for k, v in self.witness.items()},
            "grid": _json_value(self.grid),
            "notes": list(self.notes),
        }
        if with_table:
            out["table"] = _json_value(self.table)
        return out


def _json_float(x):
    """Finite floats as is, infinities as "inf"/"-inf", NaN as None."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return _json_float(v)
    if isinstance(v, np.ndarray):
        return [_json_value(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


class Margins:
    """Collects LHS <= RHS comparisons and turns them into a CheckResult.

    Every criterion is stated in that single direction; allowances such
    as a quadrature tolerance or a stability band are folded into the RHS.
    ``floor`` bounds the scale from below where both sides can vanish.
    """

    def __init__(self, tolerance: float):
        self.tolerance = float(tolerance)
        self.rows: List[Dict[str, Any]] = []
        self._worst = None  # (relative margin, margin, scale, witness)
        self._worst_unresolved = None
        self.count = 0
        self.count_unresolved = 0

    def add(self, label: str, lhs, rhs, coords: Optional[Dict[str, Any]] = None, floor: float = 0.0, record: bool = True,
            resolved: bool = True):
        """Record lhs <= rhs.  Comparisons with ``resolved=False`` are tabulated but do not decide the status."""
        lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        lhs, rhs = np.broadcast_arrays(lhs, rhs)
        coords = {k: np.broadcast_to(np.asarray(v), lhs.shape) for k, v in (coords or {}).items()}
        margin = rhs - lhs
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), floor)
        scale = np.where(scale > 0, scale, 1.0)
        rel = np.where(np.isnan(margin), -np.inf, margin / scale)
        if rel.size == 0:
            return
        k = int(np.argmin(rel))
        current = self._worst if resolved else self._worst_unresolved
        if current is None or rel.flat[k] < current[0]:
            wit = {"criterion": label, "lhs": float(lhs.flat[k]), "rhs": float(rhs.flat[k])}
            wit.update({name: _json_value(arr.flat[k]) for name, arr in coords.items()})
            current = (float(rel.flat[k]), float(margin.flat[k]), float(scale.flat[k]), wit)
        if resolved:
            self.count += rel.size
            self._worst = current
        else:
            self.count_unresolved += rel.size
            self._worst_unresolved = current
        if record:
            # plain python values; JSON sanitation happens in CheckResult.to_dict
            names = list(coords)
            cols = [np.ravel(coords[nm]).tolist() for nm in names]
            cols += [lhs.ravel().tolist(), rhs.ravel().tolist(), margin.ravel().tolist()]
            keys = names + ["lhs", "rhs", "margin"]
            head = {"criterion": label, "resolved": bool(resolved)}
            self.rows.extend({**head, **dict(zip(keys, vals))} for vals in zip(*cols))

    @property
    def failed(self) -> bool:
        return self._worst is not None and self._worst[0] < -self.tolerance

    def result(self, name: str, space: str, constants=None, grid=None, notes=None, status: Optional[str] = None) -> CheckResult:
        notes = list(notes or [])
        if self._worst_unresolved is not None:
            notes.append(f"{self.count_unresolved} unresolved comparisons excluded from the status; "
                         f"their worst relative margin is {self._worst_unresolved[0]:.6g}")
        worst = self._worst
        if worst is None:
            status = status or "untrusted"
            if self._worst_unresolved is None:
                return CheckResult(name, space, status, tolerance=self.tolerance, constants=dict(constants or {}),
                                   grid=dict(grid or {}), notes=notes, table=self.rows)
            worst = self._worst_unresolved
        rel, margin, scale, wit = worst
        if status is None:
            status = "fail" if rel < -self.tolerance else "pass"
        return CheckResult(
            name, space, status, margin, scale, self.tolerance, dict(constants or {}), wit,
            dict(grid or {}), notes, self.rows,
        )


def not_met(name: str, space: str, reason: str, tolerance: float = ANALYTIC_TOL, **extra) -> CheckResult:
    return CheckResult(name, space, "hypothesis_not_met", tolerance=tolerance, notes=[reason], **extra)


# --------------------------------------------------------------------------
# constants of the comparison geometry
# --------------------------------------------------------------------------


def omega(N: float) -> float:
    """Volume of the unit ball in R^N."""
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def tau(K: float, N: float, theta):
    """tau_{K,N}(theta) = theta sqrt(-K/N) coth(theta sqrt(-K/N)); identically 1 for K = 0."""
    theta = np.asarray(theta, dtype=float)
    if K == 0:
        return np.ones_like(theta) if theta.ndim else 1.0
    if K > 0:
        raise ValueError("tau is only defined here for K <= 0")
    x = theta * math.sqrt(-K / N)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1 + x**2 / 3, safe / np.tanh(safe))
    return out if out.ndim else float(out)


def comparison_volume(K: float, N: float, r):
    """Model volume V_{K,N}(r): omega(N) r^N for K = 0, the Bishop-Gromov integral for K < 0."""
    r = np.asarray(r, dtype=float)
    if K == 0:
        return omega(N) * r**N
    if K > 0:
        raise ValueError("only K <= 0 supported")
    if N <= 1:
        return 2 * r
    k = math.sqrt(-K / (N - 1))
    area = lambda s: (math.sinh(s * k) / k) ** (N - 1)
    vals = np.array([integrate.quad(area, 0.0, float(x), epsabs=0, epsrel=1e-13)[0] for x in np.ravel(r)])
    out = N * omega(N) * vals.reshape(r.shape)
    return out if out.ndim else float(out)


def dirichlet_coefficient(K: float, t):
    """K / (e^{2Kt} - 1), with the K = 0 value 1/(2t)."""
    t = np.asarray(t, dtype=float)
    if K == 0:
        return 1 / (2 * t)
    return K / np.expm1(2 * K * t)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def fit_sup_ratio(lhs, rhs, coords: Optional[Dict[str, Any]] = None):
    """Smallest C with lhs <= C * rhs on the grid, and where it is attained.

    Returns ``(C, witness)``; the witness holds the flat index and the
    grid coordinates of the maximizing ratio.
    """
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lhs, rhs = np.broadcast_arrays(lhs, rhs)
    if lhs.size == 0:
        raise ValueError("empty grid")
    if np.any(~(rhs > 0)):
        raise ValueError("rhs must be positive everywhere on the grid")
    ratio = lhs / rhs
    k = int(np.argmax(ratio))
    witness = {"index": k}
    for name, arr in (coords or {}).items():
        witness[name] = _json_value(np.broadcast_to(np.asarray(arr), lhs.shape).flat[k])
    return float(ratio.flat[k]), witness


def fit_sup_log_ratio(log_lhs, log_rhs, coords=None):
    """fit_sup_ratio in log space; returns (log C, witness)."""
    diff = np.asarray(log_lhs, dtype=float) - np.asarray(log_rhs, dtype=float)
    k = int(np.nanargmax(diff))
    witness = {"index": k}
    for name, arr in (coords or {}).items():
        witness[name] = _json_value(np.broadcast_to(np.asarray(arr), diff.shape).flat[k])
    return float(diff.flat[k]), witness


def relative_drift(a: float, b: float) -> float:
    """|a - b| / max(|a|, |b|)."""
    denom = max(abs(a), abs(b))
    return 0.0 if denom == 0 else abs(a - b) / denom


def band_width(values: Sequence[float]) -> float:
    """(max - min) / min of positive values."""
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / v.min())
