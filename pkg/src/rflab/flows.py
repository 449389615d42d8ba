"""Ricci flow, normalized Ricci flow and the projected Ricci flow on
invariant-metric coefficients, with trajectory export and the
reconstruction of Ricci-flow time from projected trajectories.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import curvature as cv
from .algebra import HomogeneousSpaceSpec, InvariantBasis, invariant_sym_basis
from .integrate import IntegrationError, IntegratorConfig, integrate

CSV_TAIL = ("scal", "norm", "min_eig_t", "fiber_diameter", "rho")


@dataclass
class FlowTrajectory:
    kind: str
    times: np.ndarray
    states: np.ndarray
    basis: InvariantBasis
    diagnostics: dict
    status: str
    space_name: str = ""
    context: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def metric(self, i: int) -> np.ndarray:
        return self.basis.metric(self.states[i])

    def __len__(self) -> int:
        return len(self.times)

    def header(self) -> list[str]:
        return ["t", *[f"c{i}" for i in range(self.states.shape[1])], *CSV_TAIL]

    def rows(self):
        for i in range(len(self)):
            tail = [self.diagnostics[k][i] for k in CSV_TAIL]
            yield [self.times[i], *self.states[i], *tail]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for row in self.rows():
                w.writerow(["%.17g" % v for v in row])

    def manifest(self, csv_path=None) -> dict:
        cfg = json.dumps(self.config, sort_keys=True)
        return {
            "kind": self.kind,
            "space": self.space_name,
            "status": self.status,
            "n_samples": len(self),
            "context": self.context,
            "config": self.config,
            "config_hash": hashlib.sha256(cfg.encode()).hexdigest()[:16],
            "columns": self.header(),
            "csv": None if csv_path is None else str(csv_path),
        }


def _direction(direction: str) -> float:
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    return 1.0 if direction == "forward" else -1.0


def _t_eigs(space, P):
    td = space.frame.t_dim if space.has_fibration else 0
    if td == 0:
        return np.nan, np.nan
    ev = np.linalg.eigvalsh(P[:td, :td])
    return float(ev[0]), float(np.sqrt(max(ev[-1], 0.0)))


def _coords_of(basis, P0):
    P0 = np.asarray(P0, dtype=float)
    if P0.ndim == 1:
        return P0.copy()
    y = basis.coords(P0)
    res = basis.projection_residual(P0)
    if res > 1e-8 * max(1.0, np.linalg.norm(P0)):
        raise ValueError(f"initial metric is not invariant (projection residual {res:.2e})")
    return y


def _check_pd(P, what="initial metric"):
    if np.linalg.eigvalsh(P)[0] <= 0:
        raise ValueError(f"{what} is not positive definite")


def ricci_flow(
    space: HomogeneousSpaceSpec,
    P0,
    config: IntegratorConfig | None = None,
    direction: str = "forward",
    t_max: float = 1.0,
    basis: InvariantBasis | None = None,
    stop=None,
) -> FlowTrajectory:
    """``P' = -2 Ric(P)``; ``P0`` is a matrix or a coefficient vector."""
    cfg = config or IntegratorConfig()
    basis = basis or invariant_sym_basis(space)
    y0 = _coords_of(basis, P0)
    _check_pd(basis.metric(y0))
    sign = _direction(direction)

    def rhs(t, y):
        return basis.coords(-2.0 * cv.ricci(space, basis.metric(y)))

    def valid(y):
        return np.linalg.eigvalsh(basis.metric(y))[0] > cfg.pos_tol

    res = integrate(rhs, 0.0, y0, sign * t_max, cfg, valid=valid, stop=stop)
    return _finish(space, "rf", res, basis, cfg, _plain_diagnostics)


def normalized_flow(
    space: HomogeneousSpaceSpec,
    P0,
    config: IntegratorConfig | None = None,
    direction: str = "forward",
    t_max: float = 1.0,
    basis: InvariantBasis | None = None,
    stop=None,
) -> FlowTrajectory:
    """Volume-normalized flow ``P' = -2 Ric^0(P)`` with det P = 1."""
    cfg = config or IntegratorConfig()
    basis = basis or invariant_sym_basis(space)
    y0 = _coords_of(basis, P0)
    P = basis.metric(y0)
    _check_pd(P)
    m = space.dim
    if abs(np.linalg.det(P) - 1.0) > 1e-8:
        raise ValueError("normalized flow needs a unit-volume start (det P = 1)")
    sign = _direction(direction)

    def rhs(t, y):
        return basis.coords(-2.0 * cv.traceless_ricci(space, basis.metric(y)))

    def project(y):
        sgn, logdet = np.linalg.slogdet(basis.metric(y))
        return y * np.exp(-logdet / m) if sgn > 0 else y

    def valid(y):
        return np.linalg.eigvalsh(basis.metric(y))[0] > cfg.pos_tol

    res = integrate(rhs, 0.0, y0, sign * t_max, cfg, project=project, valid=valid, stop=stop)
    return _finish(space, "nrf", res, basis, cfg, _plain_diagnostics)


def _plain_diagnostics(space, P):
    Ric = cv.ricci(space, P)
    s = float(np.trace(np.linalg.solve(P, Ric)))
    mn, diam = _t_eigs(space, P)
    rho = float(np.sum(Ric * P) / np.sum(P * P))
    return s, float(np.linalg.norm(P)), mn, diam, rho


def _finish(space, kind, res, basis, cfg, diag_fn, context=None):
    diags = {k: [] for k in CSV_TAIL}
    for y in res.states:
        for k, v in zip(CSV_TAIL, diag_fn(space, basis.metric(y))):
            diags[k].append(v)
    return FlowTrajectory(
        kind,
        res.times,
        res.states,
        basis,
        {k: np.array(v) for k, v in diags.items()},
        res.status,
        space.name,
        context or {},
        cfg.as_dict(),
    )


# ----------------------------------------------------------------------------
# projected flow


@dataclass(frozen=True, eq=False)
class ProjectedFlowContext:
    """Background data of the projected flow around ``0 + P_bar_n``.

    ``<<B1, B2>> = Tr(D B1 D B2) / dim N`` with ``D = Id_t + P_bar_n^{-1}``.
    """

    space: HomogeneousSpaceSpec
    Pn_bar: np.ndarray
    lam: float
    basis: InvariantBasis

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("Einstein constant must be positive")

    @classmethod
    def from_base_metric(cls, space: HomogeneousSpaceSpec, Pn, tol: float = 1e-8) -> "ProjectedFlowContext":
        """Context from an Einstein metric on the base (rescaled to unit volume)."""
        Pn = np.asarray(Pn, dtype=float)
        nd = len(Pn)
        Pn = Pn / np.linalg.det(Pn) ** (1.0 / nd)
        base = space.base_space()
        Ric = cv.ricci(base, Pn)
        s = float(np.trace(np.linalg.solve(Pn, Ric)))
        lam = s / nd
        resid = float(np.linalg.norm(Ric - lam * Pn))
        if resid > tol:
            raise ValueError(f"base metric is not Einstein (residual {resid:.2e})")
        return cls(space, Pn, lam, invariant_sym_basis(space, submersion=True))

    @property
    def t_dim(self) -> int:
        return self.space.frame.t_dim

    @property
    def n_dim(self) -> int:
        return len(self.Pn_bar)

    @property
    def D(self) -> np.ndarray:
        td = self.t_dim
        D = np.zeros((td + self.n_dim,) * 2)
        D[:td, :td] = np.eye(td)
        D[td:, td:] = np.linalg.inv(self.Pn_bar)
        return D

    def inner(self, B1, B2) -> float:
        D = self.D
        return float(np.trace(D @ B1 @ D @ B2)) / self.n_dim

    def fixed_point(self) -> np.ndarray:
        td = self.t_dim
        P = np.zeros((td + self.n_dim,) * 2)
        P[td:, td:] = self.Pn_bar
        return P

    def fixed_coords(self) -> np.ndarray:
        return self.basis.coords(self.fixed_point())

    def gram(self) -> np.ndarray:
        """Gram matrix of the basis frames under ``<<.,.>>``."""
        F = self.basis.frames
        D = self.D
        DF = np.einsum("ab,ibc->iac", D, F)
        return np.einsum("iab,jba->ij", DF, DF) / self.n_dim

    def split(self, P) -> cv.SubmersionMetric:
        td = self.t_dim
        return cv.SubmersionMetric(P[:td, :td], P[td:, td:])

    def ricci(self, P) -> np.ndarray:
        return cv.ricci(self.space, self.split(P))

    def rho(self, P, Ric=None) -> float:
        Ric = self.ricci(P) if Ric is None else Ric
        return self.inner(Ric, P) / self.inner(P, P)

    def projected_ricci(self, P) -> np.ndarray:
        """``R(P) = Ric(P) - rho(P) P``."""
        Ric = self.ricci(P)
        return Ric - self.rho(P, Ric) * P

    def distance(self, P) -> float:
        B = P - self.fixed_point()
        return float(np.sqrt(max(self.inner(B, B), 0.0)))

    def normalize(self, P) -> np.ndarray:
        return P / np.sqrt(self.inner(P, P))

    def as_dict(self) -> dict:
        return {"Pn_bar": self.Pn_bar.tolist(), "lambda": self.lam}


def projected_flow(
    ctx: ProjectedFlowContext,
    P0,
    config: IntegratorConfig | None = None,
    direction: str = "forward",
    t_max: float = 1.0,
    stop=None,
    stop_distance: float | None = None,
    constrain=None,
) -> FlowTrajectory:
    """``P' = -2 R(P)`` on the unit sphere of ``<<.,.>>``.

    ``stop_distance`` ends the run once the state is that close to the
    fixed point (in addition to any custom ``stop``).  ``constrain`` maps
    coordinates to coordinates after every accepted step (before the
    sphere normalization).
    """
    cfg = config or IntegratorConfig()
    basis = ctx.basis
    y0 = _coords_of(basis, P0)
    P = basis.metric(y0)
    if abs(ctx.inner(P, P) - 1.0) > 1e-10:
        raise ValueError("initial metric is not on the unit sphere of <<.,.>>")
    td = ctx.t_dim
    if np.linalg.eigvalsh(P[td:, td:])[0] <= 0:
        raise ValueError("horizontal block of the initial metric is not positive definite")
    sign = _direction(direction)
    G = ctx.gram()

    def rhs(t, y):
        return basis.coords(-2.0 * ctx.projected_ricci(basis.metric(y)))

    def project(y):
        if constrain is not None:
            y = constrain(y)
        return y / np.sqrt(y @ G @ y)

    def valid(y):
        Py = basis.metric(y)
        if np.linalg.eigvalsh(Py[td:, td:])[0] <= cfg.pos_tol:
            raise IntegrationError("horizontal block lost positivity", None, y)
        return td == 0 or np.linalg.eigvalsh(Py[:td, :td])[0] >= -cfg.pos_tol

    def stop_all(t, y):
        if stop_distance is not None and ctx.distance(basis.metric(y)) <= stop_distance:
            return True
        return stop is not None and stop(t, y)

    res = integrate(rhs, 0.0, y0, sign * t_max, cfg, project=project, valid=valid, stop=stop_all)

    def diag(space, P):
        Ric = ctx.ricci(P)
        Pn = P[td:, td:]
        s = float(np.trace(np.linalg.solve(Pn, Ric[td:, td:])))
        if td:
            s += float(np.trace(np.linalg.pinv(P[:td, :td], rcond=1e-300, hermitian=True) @ Ric[:td, :td]))
        mn, diam = _t_eigs(space, P)
        return s, float(np.sqrt(ctx.inner(P, P))), mn, diam, ctx.rho(P, Ric)

    return _finish(ctx.space, "prf", res, basis, cfg, diag, ctx.as_dict())


# ----------------------------------------------------------------------------
# Ricci-time reconstruction


@dataclass
class RicciTime:
    sigma: np.ndarray
    s: np.ndarray
    log_sigma_slope: float
    monotone: bool

    def rescaled(self, traj: FlowTrajectory, i: int) -> np.ndarray:
        """``Q(s_i) = sigma_i P(t_i)``."""
        return self.sigma[i] * traj.metric(i)


def _cumtrapz(y, x):
    out = np.zeros_like(y, dtype=float)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def reconstruct_ricci_time(traj: FlowTrajectory, fit_fraction: float = 0.5) -> RicciTime:
    """``sigma = exp(-2 int rho)``, ``s = int sigma`` from the first sample.

    ``log_sigma_slope`` is the least-squares slope of ``log sigma`` against
    t over the ``fit_fraction`` of samples furthest from the start; for a
    backward run towards the fixed point it tends to ``-2 lambda``.
    """
    t = np.asarray(traj.times, float)
    rho = np.asarray(traj.diagnostics["rho"], float)
    log_sigma = -2.0 * _cumtrapz(rho, t)
    sigma = np.exp(log_sigma)
    s = _cumtrapz(sigma, t)
    ds = np.diff(s) * np.sign(np.diff(t))
    monotone = bool(np.all(ds > 0))
    k = max(2, int(len(t) * fit_fraction))
    tt, ll = t[-k:], log_sigma[-k:]
    slope = float(np.polyfit(tt, ll, 1)[0]) if len(tt) >= 2 and np.ptp(tt) > 0 else float("nan")
    return RicciTime(sigma, s, slope, monotone)
