"""Collapsed ancient solutions of the projected Ricci flow.

The projected flow has a fixed point ``0 + P_bar_n`` at the degenerate
metric whose vertical block vanishes.  Its unstable manifold has dimension
``nu + q`` (nu: invariant symmetric forms on t, q: coindex of the base
Einstein metric).  Trajectories in that manifold converge to the fixed
point backwards in time; they are found here by shooting: start on the
unstable eigenspace at distance eps, correct the stable component so that
the backward run re-converges, then integrate forward until positivity
is lost.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from . import curvature as cv
from .einstein import StructureBackend, hessian_spectrum_coindex
from .flows import FlowTrajectory, ProjectedFlowContext, projected_flow, reconstruct_ricci_time
from .integrate import IntegrationError, IntegratorConfig

log = logging.getLogger(__name__)

NULL_TOL = 1e-6


class StructuralError(RuntimeError):
    """Unstable dimension differs from nu + q."""


@dataclass
class CollapsedFixedPoint:
    ctx: ProjectedFlowContext
    J: np.ndarray  # dR in frame coordinates (columns: frames)
    tangent: np.ndarray  # <<.,.>>-orthonormal basis of the sphere tangent, frame coordinates
    A: np.ndarray  # -2 dR on the tangent, in the orthonormal tangent basis
    eigenvalues: np.ndarray
    unstable: np.ndarray  # frame coordinates, columns; t-carrying ones first
    unstable_tangent: np.ndarray  # same vectors in tangent coordinates
    stable_tangent: np.ndarray  # basis of the complementary invariant subspace
    nu: int
    q: int
    n_t_directions: int
    checks: dict = field(default_factory=dict)

    @property
    def expected_dim(self) -> int:
        return self.nu + self.q

    @property
    def unstable_eigenvalues(self) -> np.ndarray:
        ev = self.eigenvalues
        return np.sort(ev[ev.real > NULL_TOL].real)[::-1]

    @property
    def lam(self) -> float:
        return self.ctx.lam

    def to_tangent(self, y) -> np.ndarray:
        G = self.ctx.gram()
        return self.tangent.T @ G @ (np.asarray(y) - self.ctx.fixed_coords())

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "nu": self.nu,
            "q": self.q,
            "unstable_dim": int(self.unstable.shape[1]),
            "expected_dim": self.expected_dim,
            "family_dim": int(self.unstable.shape[1]) - 1,
            "unstable_eigenvalues": [float(v) for v in self.unstable_eigenvalues],
            "eigenvalues": [complex(v).real if abs(complex(v).imag) < 1e-12 else str(complex(v)) for v in self.eigenvalues],
            "checks": {k: float(v) for k, v in self.checks.items()},
        }


def projected_ricci_differential(ctx: ProjectedFlowContext, B) -> np.ndarray:
    """``dR`` at the fixed point along B (full matrix)."""
    P = ctx.fixed_point()
    Pm = ctx.split(P)
    Ric = cv.ricci(ctx.space, Pm)
    dRic = cv.ricci_differential(ctx.space, Pm, ctx.split(B))
    pp = ctx.inner(P, P)
    rho = ctx.inner(Ric, P) / pp
    drho = (ctx.inner(dRic, P) + ctx.inner(Ric, B)) / pp - 2 * rho * ctx.inner(P, B) / pp
    return dRic - drho * P - rho * B


def _base_coindex(ctx: ProjectedFlowContext) -> int:
    base = ctx.space.base_space()
    be = StructureBackend(base)
    return hessian_spectrum_coindex(be, be.basis.coords(ctx.Pn_bar))["coindex"]


def linearize_at_collapse(
    space, ctx: ProjectedFlowContext, q: int | None = None, null_tol: float = NULL_TOL, strict: bool = True
) -> CollapsedFixedPoint:
    """Linearization ``A = -2 dR`` at ``0 + P_bar_n`` restricted to the sphere tangent.

    ``q`` defaults to the coindex of the base Einstein metric computed
    from its Hessian.  With ``strict`` a count mismatch raises.
    """
    basis = ctx.basis
    F = basis.frames
    nb = len(basis)
    J = np.array([basis.coords(projected_ricci_differential(ctx, F[i])) for i in range(nb)]).T
    G = ctx.gram()
    fp = ctx.fixed_coords()
    L = np.linalg.cholesky(G)
    zf = L.T @ fp
    zf /= np.linalg.norm(zf)
    # orthonormal complement of zf in z = L^T y coordinates
    Qz, _ = np.linalg.qr(np.column_stack([zf, np.eye(nb)]))
    Zt = Qz[:, 1:nb]
    T = np.linalg.solve(L.T, Zt)  # tangent basis in frame coordinates, <<.,.>>-orthonormal
    A = T.T @ G @ (-2.0 * J) @ T
    ev = np.linalg.eigvals(A)
    Su, Zu, ku = scipy.linalg.schur(A, output="real", sort=lambda x, y=0.0: x > null_tol)
    Ss, Zs, ks = scipy.linalg.schur(A, output="real", sort=lambda x, y=0.0: x <= null_tol)
    U = Zu[:, :ku]
    W = Zs[:, :ks]
    # re-parametrize the unstable space: the first nu vectors have vertical
    # part equal to the vertical frame elements, the rest are purely horizontal
    nu = basis.t_block_dim
    Y = T @ U
    n_t = 0
    if nu and ku:
        Yt = Y[:nu]
        n_t = int(np.linalg.matrix_rank(Yt, tol=1e-8))
        if n_t == nu:
            null = scipy.linalg.null_space(Yt)
            M = np.column_stack([np.linalg.pinv(Yt), null])
            U = U @ M
            # horizontal ones: orthonormal among themselves
            if null.shape[1]:
                Qh, _ = np.linalg.qr(U[:, nu:])
                U[:, nu:] = Qh
        else:
            _, _, Vt = np.linalg.svd(Yt, full_matrices=True)
            U = U @ Vt.T
        Y = T @ U
        for j in range(nu, U.shape[1]):
            ref = Y[np.argmax(np.abs(Y[:, j])), j]
            if ref < 0:
                U[:, j] *= -1
                Y[:, j] *= -1
    q = _base_coindex(ctx) if q is None else q
    checks = _block_checks(ctx, J)
    fp_out = CollapsedFixedPoint(ctx, J, T, A, ev, Y, U, W, nu, q, n_t, checks)
    if strict and ku != nu + q:
        raise StructuralError(
            f"unstable dimension {ku} differs from nu + q = {nu} + {q}; eigenvalues {np.sort(ev.real)}"
        )
    return fp_out


def _block_checks(ctx: ProjectedFlowContext, J) -> dict:
    """Residuals of the block identities of dR at the fixed point."""
    basis = ctx.basis
    nu = basis.t_block_dim
    F = basis.frames
    td = ctx.t_dim
    out = {}
    # t -> t block is -lambda Id
    worst = 0.0
    for i in range(nu):
        dR = projected_ricci_differential(ctx, F[i])
        worst = max(worst, float(np.max(np.abs(dR[:td, :td] + ctx.lam * F[i][:td, :td]))))
    out["t_block_minus_lambda"] = worst
    # n -> t block vanishes, n -> n block is dRic^0_N (finite differences on the base)
    base = ctx.space.base_space()
    Pn = ctx.Pn_bar
    h = cv.fd_step(Pn)
    worst_nt = worst_nn = 0.0
    for i in range(nu, len(basis)):
        dR = projected_ricci_differential(ctx, F[i])
        worst_nt = max(worst_nt, float(np.max(np.abs(dR[:td, :td]))))
        Bn = F[i][td:, td:]
        fd = (cv.traceless_ricci(base, Pn + h * Bn) - cv.traceless_ricci(base, Pn - h * Bn)) / (2 * h)
        worst_nn = max(worst_nn, float(np.max(np.abs(dR[td:, td:] - fd))))
    out["n_to_t_block"] = worst_nt
    out["n_block_vs_dRic0_N"] = worst_nn
    return out


# ----------------------------------------------------------------------------
# shooting


@dataclass
class ShootConfig:
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    stop_distance: float = 1e-9
    stop_fiber: float = 1e-7
    # below this distance the backward run is held on the linearized
    # unstable manifold (the neglected curvature of the manifold is O(d^2))
    switch_distance: float = 1e-6
    backward_horizon: float = 200.0
    forward_horizon: float = 10.0
    refine: bool = True
    newton_iter: int = 8
    newton_tol: float = 1e-12


@dataclass
class AncientCandidate:
    c: np.ndarray
    eps: float
    accepted: bool
    reason: str
    degenerate_vertical: bool
    P0: np.ndarray | None = None
    backward: FlowTrajectory | None = None
    forward: FlowTrajectory | None = None
    certificates: dict = field(default_factory=dict)
    stable_correction: np.ndarray | None = None

    def record(self) -> dict:
        return {
            "c": [float(v) for v in self.c],
            "eps": self.eps,
            "accepted": self.accepted,
            "reason": self.reason,
            "degenerate_vertical": self.degenerate_vertical,
            "certificates": _jsonable(self.certificates),
        }


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out[k] = _jsonable(v)
        elif isinstance(v, (np.floating, float)):
            out[k] = float(v)
        elif isinstance(v, (np.integer, int, bool, np.bool_)):
            out[k] = v.item() if hasattr(v, "item") else v
        elif isinstance(v, np.ndarray):
            out[k] = v.tolist()
        else:
            out[k] = v
    return out


class PreconditionError(ValueError):
    pass


def perturbation(fp: CollapsedFixedPoint, c) -> np.ndarray:
    """``sum c_i v_i`` scaled to unit ``<<.,.>>`` length (frame coordinates)."""
    c = np.asarray(c, float)
    if c.shape != (fp.unstable.shape[1],):
        raise ValueError(f"expected {fp.unstable.shape[1]} coefficients")
    v = fp.unstable @ c
    nv = np.sqrt(v @ fp.ctx.gram() @ v)
    return v / nv if nv > 0 else v


def vertical_status(fp: CollapsedFixedPoint, c) -> str:
    """'positive', 'degenerate' (no vertical part) or 'indefinite'."""
    v = perturbation(fp, c)
    Bt = fp.ctx.basis.metric(v)[: fp.ctx.t_dim, : fp.ctx.t_dim]
    if np.max(np.abs(Bt)) <= 1e-12:
        return "degenerate"
    return "positive" if np.linalg.eigvalsh(Bt)[0] > 1e-12 else "indefinite"


def _start(fp, v, eps, s):
    ctx = fp.ctx
    y = ctx.fixed_coords() + eps * v
    if s is not None and len(s):
        y = y + fp.tangent @ (fp.stable_tangent @ s)
    if np.max(np.abs(v[ctx.basis.t_slice]), initial=0.0) == 0.0:
        # P_t = 0 is invariant: keep horizontal-only starts exactly there
        y[ctx.basis.t_slice] = 0.0
    P = ctx.normalize(ctx.basis.metric(y))
    return P


def _stop_rule(fp, cfg):
    ctx = fp.ctx
    td = ctx.t_dim

    def stop(t, y):
        P = ctx.basis.metric(y)
        if ctx.distance(P) > cfg.stop_distance:
            return False
        return np.sqrt(max(np.linalg.eigvalsh(P[:td, :td])[-1], 0.0)) <= cfg.stop_fiber

    return stop


def _stable_component(fp, y):
    """Coefficients (a, b) with tangent deviation = U a + W b."""
    dz = fp.to_tangent(y)
    M = np.column_stack([fp.unstable_tangent, fp.stable_tangent])
    coef = np.linalg.solve(M, dz)
    k = fp.unstable_tangent.shape[1]
    return coef[:k], coef[k:]


def _horizon_estimate(fp, eps, cfg):
    """Backward time for the slowest unstable mode to reach the switch distance."""
    mu_min = float(fp.unstable_eigenvalues.min())
    return float(max(np.log(eps / cfg.switch_distance), 0.0) / mu_min + 1.0)


def _unstable_constraint(fp):
    """Drop the stable-subspace component of a state (keeps the sphere radial part)."""
    ctx = fp.ctx
    yf = ctx.fixed_coords()

    def constrain(y):
        a, _ = _stable_component(fp, y)
        return yf + fp.tangent @ (fp.unstable_tangent @ a)

    return constrain


def _concat(first: FlowTrajectory, second: FlowTrajectory) -> FlowTrajectory:
    t0 = first.times[-1]
    diags = {k: np.concatenate([first.diagnostics[k], second.diagnostics[k][1:]]) for k in first.diagnostics}
    return FlowTrajectory(
        first.kind,
        np.concatenate([first.times, t0 + second.times[1:]]),
        np.vstack([first.states, second.states[1:]]),
        first.basis,
        diags,
        second.status,
        first.space_name,
        first.context,
        first.config,
    )


def _backward_run(fp, P0, cfg):
    """Backward run from P0: free until the switch distance, then on the
    linearized unstable manifold until the stop rule fires."""
    ctx = fp.ctx
    first = projected_flow(ctx, P0, cfg.integrator, "backward", cfg.backward_horizon,
                           stop_distance=cfg.switch_distance)
    if first.status != "stopped":
        return first
    rest = cfg.backward_horizon - abs(first.times[-1])
    second = projected_flow(ctx, first.metric(-1), cfg.integrator, "backward", rest,
                            stop=_stop_rule(fp, cfg), constrain=_unstable_constraint(fp))
    return _concat(first, second)


def _backward_end(fp, P0, T, cfg, stop=None):
    tr = projected_flow(fp.ctx, P0, cfg.integrator, "backward", T, stop=stop)
    return tr


def _refine(fp, v, eps, cfg):
    """Newton on the stable component so that the backward run stays on
    the unstable manifold (zero stable part at the predicted end time)."""
    k = fp.stable_tangent.shape[1]
    s = np.zeros(k)
    if k == 0:
        return s, 0.0
    T_end = _horizon_estimate(fp, eps, cfg)
    resid = np.inf
    for T in (T_end / 4, T_end / 2, 3 * T_end / 4, T_end):
        for _ in range(cfg.newton_iter):
            def F(sv):
                tr = _backward_end(fp, _start(fp, v, eps, sv), T, cfg)
                if tr.status != "horizon":
                    raise IntegrationError("backward run ended early during refinement")
                return _stable_component(fp, tr.states[-1])[1]

            r = F(s)
            resid = float(np.linalg.norm(r))
            if resid <= cfg.newton_tol:
                break
            h = max(1e-10, 1e-4 * eps**2)
            Jm = np.column_stack([(F(s + h * e) - r) / h for e in np.eye(k)])
            step = np.linalg.lstsq(Jm, -r, rcond=None)[0]
            s = s + step
            if np.linalg.norm(step) <= 1e-15 * max(1.0, eps):
                break
    return s, resid


def _fit_rate(times, dist, lo, hi):
    """Backward decay rate of the distance to the fixed point.

    The linearization can carry a Jordan block (the vertical eigenvalue
    2 lambda coincides with horizontal ones), so the distance behaves like
    ``|u0 + t u1| exp(mu t)``.  For each trial mu the squared prefactor
    ``d^2 exp(-2 mu t)`` is fitted by a quadratic in t; mu minimizes the
    relative misfit.  A pure exponential is the special case u1 = 0.
    """
    sel = (dist > lo) & (dist < hi)
    if np.sum(sel) < 5:
        return float("nan")
    t, d = times[sel], dist[sel]
    # backward in time the distance decays like exp(mu * t), t < 0
    mu0 = float(np.polyfit(t, np.log(d), 1)[0])
    tc = t - t.mean()

    def misfit(mu):
        y = d**2 * np.exp(-2 * mu * tc)
        coef = np.polyfit(tc, y, 2, w=1 / y)
        return float(np.linalg.norm(np.polyval(coef, tc) / y - 1.0))

    # the misfit is not unimodal (polynomial and exponential trade off), so
    # locate the basin on a grid before refining
    grid = np.linspace(0.5 * mu0, 1.5 * mu0, 401)
    k = int(np.argmin([misfit(m) for m in grid]))
    lo_mu, hi_mu = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = scipy.optimize.minimize_scalar(misfit, bounds=(lo_mu, hi_mu), method="bounded",
                                         options={"xatol": 1e-12 * abs(mu0)})
    return float(res.x) if misfit(res.x) < misfit(mu0) else mu0


def shoot_ancient(fp: CollapsedFixedPoint, c, eps: float = 1e-4, cfg: ShootConfig | None = None) -> AncientCandidate:
    """Shoot from ``0 + P_bar_n + eps * sum c_i v_i`` (renormalized to the sphere)."""
    cfg = cfg or ShootConfig()
    c = np.asarray(c, float)
    if eps != 0 and not 1e-8 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-8, 1e-3]")
    if abs(np.linalg.norm(c) - 1.0) > 1e-8:
        raise ValueError("coefficients must have unit norm")
    status = vertical_status(fp, c)
    if status == "indefinite":
        raise PreconditionError("vertical block of the perturbation is not positive definite")
    ctx = fp.ctx
    v = perturbation(fp, c)
    degenerate = status == "degenerate"
    if degenerate:
        v[ctx.basis.t_slice] = 0.0
    if eps == 0:
        P0 = ctx.fixed_point()
        tr = projected_flow(ctx, P0, cfg.integrator, "backward", 1.0)
        return AncientCandidate(c, eps, False, "trivial: eps = 0 stays at the fixed point", degenerate, P0, tr)
    s, resid = (np.zeros(fp.stable_tangent.shape[1]), float("nan"))
    try:
        if cfg.refine:
            s, resid = _refine(fp, v, eps, cfg)
        P0 = _start(fp, v, eps, s)
        back = _backward_run(fp, P0, cfg)
    except IntegrationError as exc:
        return AncientCandidate(c, eps, False, f"backward integration failed: {exc}", degenerate,
                                stable_correction=s)
    d = np.array([ctx.distance(back.metric(i)) for i in range(len(back))])
    certs = {"refine_residual": resid, "backward_status": back.status, "backward_time": float(back.times[-1]),
             "final_distance": float(d[-1])}
    if back.status != "stopped":
        reason = "backward run did not re-converge"
        if d[-1] > d[0]:
            reason += " (distance grows: stable component too large or eps too big)"
        cand = AncientCandidate(c, eps, False, reason, degenerate, P0, back, None, certs, s)
        return cand
    try:
        fwd = projected_flow(ctx, P0, cfg.integrator, "forward", cfg.forward_horizon)
    except IntegrationError as exc:
        fwd = None
        certs["forward_error"] = str(exc)
    certs.update(_certificates(fp, back, fwd, d))
    reason = "degenerate vertical (base flow, not a metric on M)" if degenerate else "accepted"
    return AncientCandidate(c, eps, not degenerate, reason, degenerate, P0, back, fwd, certs, s)


def _certificates(fp, back, fwd, d) -> dict:
    ctx = fp.ctx
    td = ctx.t_dim
    t = back.times
    rate = _fit_rate(t, d, 10 * d[-1], 0.1 * d[0])
    ev = fp.unstable_eigenvalues
    rel = np.abs(ev - rate) / ev
    scal_N = ctx.lam * ctx.n_dim
    scal = back.diagnostics["scal"]
    rt = reconstruct_ricci_time(back)
    P_end = back.metric(-1)
    out = {
        "decay_rate": rate,
        "nearest_eigenvalue": float(ev[np.argmin(rel)]),
        "decay_rate_rel_error": float(rel.min()),
        "scal_limit": float(scal[-1]),
        "scal_N": float(scal_N),
        "scal_limit_error": float(abs(scal[-1] - scal_N)),
        "fiber_diameter_end": float(back.diagnostics["fiber_diameter"][-1]),
        "horizontal_error": float(np.max(np.abs(P_end[td:, td:] - ctx.Pn_bar))),
        "log_sigma_slope": rt.log_sigma_slope,
        "s_min": float(rt.s[-1]),
        "s_monotone": rt.monotone,
        "min_vertical_eig_backward": float(np.nanmin(back.diagnostics["min_eig_t"])),
        # non-increasing in forward time = non-decreasing along the backward samples
        "scal_monotone_violations": int(np.sum(np.diff(scal) < -1e-9 * max(1.0, abs(scal_N)))),
        "positivity_interval": [float(t[-1]), float(fwd.times[-1]) if fwd is not None else 0.0],
        "forward_status": fwd.status if fwd is not None else "error",
    }
    return out


def verify_collapse(cand: AncientCandidate, fp: CollapsedFixedPoint, rate_tol: float = 0.05) -> dict:
    """Check the collapse certificates of an accepted candidate."""
    if cand.backward is None or not cand.certificates or "decay_rate" not in cand.certificates:
        return {"passed": False, "failing": ["no backward trajectory"], "items": {}}
    c = cand.certificates
    lam = fp.lam
    items = {
        "fiber_diameter_to_zero": c["fiber_diameter_end"] <= 1e-7
        and c["fiber_diameter_end"] < cand.backward.diagnostics["fiber_diameter"][0],
        "horizontal_to_base_einstein": c["horizontal_error"] <= 1e-6,
        "ricci_time_unbounded_below": abs(c["log_sigma_slope"] + 2 * lam) <= rate_tol * 2 * lam and c["s_monotone"],
        "positivity_backward": (not cand.degenerate_vertical) and c["min_vertical_eig_backward"] > 0,
    }
    failing = [k for k, v in items.items() if not v]
    label = "collapsed ancient" if not failing else "non-collapsing/non-ancient: " + ", ".join(failing)
    return {"passed": not failing, "failing": failing, "items": items, "label": label}


# ----------------------------------------------------------------------------
# family scan


def sphere_grid(fp: CollapsedFixedPoint, n: int, seed: int = 0, max_tries: int = 100000) -> list[np.ndarray]:
    """``n`` random unit coefficient vectors with positive-definite vertical part."""
    rng = np.random.default_rng(seed)
    k = fp.unstable.shape[1]
    out = []
    tries = 0
    while len(out) < n and tries < max_tries:
        tries += 1
        c = rng.normal(size=k)
        c /= np.linalg.norm(c)
        if vertical_status(fp, c) == "positive":
            out.append(c)
    return out


@dataclass
class FamilyScan:
    candidates: list
    rejected_precondition: list
    family_dim: int
    accepted: int

    def records(self):
        for i, cand in enumerate(self.candidates):
            rec = cand.record() if isinstance(cand, AncientCandidate) else cand
            rec["index"] = i
            yield rec


def family_scan(fp: CollapsedFixedPoint, grid, eps: float = 1e-4, cfg: ShootConfig | None = None) -> FamilyScan:
    """Shoot from every grid point; merge results in grid order."""
    cfg = cfg or ShootConfig()
    grid = [np.asarray(c, float) for c in grid]

    def one(c):
        try:
            return shoot_ancient(fp, c, eps, cfg)
        except PreconditionError as exc:
            return {"c": c.tolist(), "eps": eps, "accepted": False, "reason": f"precondition: {exc}"}

    try:
        threads = max(1, int(os.environ.get("RFLAB_THREADS", os.cpu_count() or 1)))
    except ValueError:
        threads = 1
    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(one, grid))
    acc = [r.c for r in results if isinstance(r, AncientCandidate) and r.accepted]
    dim = int(np.linalg.matrix_rank(np.array(acc), tol=1e-6)) - 1 if acc else -1
    rej = [i for i, r in enumerate(results) if isinstance(r, dict)]
    return FamilyScan(results, rej, dim, len(acc))
