"""Curvature of invariant and generalized submersion metrics.

All tensors live in the adapted Q-orthonormal frame of m.  A metric is a
symmetric m x m array ``P`` (the endomorphism with ``Q(P u, v) = g(u, v)``).
The S-tensor is stored as ``S[i, j, k]``: the k-component of ``S(e_i) e_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import HomogeneousSpaceSpec


@dataclass(frozen=True)
class SubmersionMetric:
    """Generalized submersion metric ``P_t + P_n``; ``P_t`` may be degenerate."""

    P_t: np.ndarray
    P_n: np.ndarray

    @classmethod
    def split(cls, space: HomogeneousSpaceSpec, P) -> "SubmersionMetric":
        td = space.frame.t_dim
        P = np.asarray(P, dtype=float)
        return cls(P[:td, :td], P[td:, td:])

    def full(self) -> np.ndarray:
        td, nd = len(self.P_t), len(self.P_n)
        P = np.zeros((td + nd, td + nd))
        P[:td, :td] = self.P_t
        P[td:, td:] = self.P_n
        return P


@dataclass(frozen=True)
class CurvatureBundle:
    S: np.ndarray
    Rm: np.ndarray
    Ric: np.ndarray
    scal: float


def _check_metric(space, P):
    P = np.asarray(P, dtype=float)
    m = space.frame.m
    if P.shape != (m, m):
        raise ValueError(f"metric must be {m} x {m}, got {P.shape}")
    return P


def _inverse(P, what="metric"):
    # P is symmetric: one eigen-decomposition gives the condition number and the inverse
    if not np.all(np.isfinite(P)):
        raise ValueError(f"{what} has non-finite entries")
    w, V = np.linalg.eigh(P)
    aw = np.abs(w)
    cond = np.inf if aw.min() == 0 else aw.max() / aw.min()
    if not np.isfinite(cond) or cond > 1e14:
        raise ValueError(f"{what} is singular (condition number {cond:.2e})")
    return (V / w) @ V.T


def s_tensor(space: HomogeneousSpaceSpec, P) -> np.ndarray:
    """S-tensor of a nondegenerate invariant metric from its defining identity."""
    P = _check_metric(space, P)
    Pinv = _inverse(P)
    B = space.frame.Bm
    # t2[i, j, k] = sum_ab Pinv[a, k] B[a, i, b] P[b, j]; the third term is t2 with i, j swapped
    t2 = np.tensordot(B @ P, Pinv, axes=([0], [0]))
    return -0.5 * (B + t2 + t2.transpose(1, 0, 2))


def _split_metric(space, metric):
    if not space.has_fibration:
        raise ValueError("space has no toral split")
    fr = space.frame
    td = fr.t_dim
    if isinstance(metric, SubmersionMetric):
        Pt, Pn = np.asarray(metric.P_t, float), np.asarray(metric.P_n, float)
    else:
        metric = SubmersionMetric.split(space, _check_metric(space, metric))
        Pt, Pn = metric.P_t, metric.P_n
    if Pt.shape != (td, td) or Pn.shape != (fr.m - td, fr.m - td):
        raise ValueError("submersion metric blocks do not match the toral split")
    return Pt, Pn


def s_tensor_submersion(space: HomogeneousSpaceSpec, metric) -> np.ndarray:
    """Closed-form S-tensor of a generalized submersion metric (defined at P_t = 0)."""
    Pt, Pn = _split_metric(space, metric)
    Pn_inv = _inverse(Pn, "horizontal block P_n")
    fr = space.frame
    td, m = fr.t_dim, fr.m
    t, n = slice(0, td), slice(td, m)
    B = fr.Bm
    S = np.zeros((m, m, m))
    # S(T)Y = -ad(T)Y + 1/2 Pn^-1 [Pt T, Y]_n
    S[t, n, :] = -B[t, n, :]
    S[t, n, n] += 0.5 * np.einsum("aT,aYw,kw->TYk", Pt, B[t, n, n], Pn_inv)
    # S(X)T = -1/2 Pn^-1 [X, Pt T]_n
    S[n, t, n] = -0.5 * np.einsum("aT,Xaw,kw->XTk", Pt, B[n, t, n], Pn_inv)
    # S(X)Y = -1/2 [X,Y]_m - 1/2 Pn^-1 ([X, Pn Y] - [Pn X, Y])_n
    inner = np.einsum("Xvw,vY->XYw", B[n, n, n], Pn) - np.einsum("vX,vYw->XYw", Pn, B[n, n, n])
    S[n, n, :] = -0.5 * B[n, n, :]
    S[n, n, n] += -0.5 * np.einsum("kw,XYw->XYk", Pn_inv, inner)
    return S


def _ds_submersion(space, metric, direction) -> np.ndarray:
    Pt, Pn = _split_metric(space, metric)
    Bt, Bn = _split_metric(space, direction)
    Pn_inv = _inverse(Pn, "horizontal block P_n")
    D = Pn_inv @ Bn @ Pn_inv
    fr = space.frame
    td, m = fr.t_dim, fr.m
    t, n = slice(0, td), slice(td, m)
    B = fr.Bm
    dS = np.zeros((m, m, m))
    dS[t, n, n] = -0.5 * np.einsum("aT,aYw,kw->TYk", Pt, B[t, n, n], D) + 0.5 * np.einsum(
        "aT,aYw,kw->TYk", Bt, B[t, n, n], Pn_inv
    )
    dS[n, t, n] = 0.5 * np.einsum("aT,Xaw,kw->XTk", Pt, B[n, t, n], D) - 0.5 * np.einsum(
        "aT,Xaw,kw->XTk", Bt, B[n, t, n], Pn_inv
    )
    inner_P = np.einsum("Xvw,vY->XYw", B[n, n, n], Pn) - np.einsum("vX,vYw->XYw", Pn, B[n, n, n])
    inner_B = np.einsum("Xvw,vY->XYw", B[n, n, n], Bn) - np.einsum("vX,vYw->XYw", Bn, B[n, n, n])
    dS[n, n, n] = 0.5 * np.einsum("kw,XYw->XYk", D, inner_P) - 0.5 * np.einsum("kw,XYw->XYk", Pn_inv, inner_B)
    return dS


def _matrices(S):
    # M[i][k, j] = S[i, j, k], the matrix of S(e_i)
    return np.transpose(S, (0, 2, 1))


def _h_term(space) -> np.ndarray:
    fr = space.frame
    A = fr.ad_m[: fr.nh]
    return np.einsum("izh,hzj->ij", fr.Bh, A)


def _comm_trace(X, Y):
    """``sum_z (X_i Y_z - Y_z X_i)[z, j]``."""
    first = np.tensordot(X, Y, axes=([1, 2], [0, 1]))
    trY = np.einsum("zzw->w", Y)
    return first - np.tensordot(trY, X, axes=([0], [1]))


def ricci_from_s(space: HomogeneousSpaceSpec, S) -> np.ndarray:
    M = _matrices(S)
    B = space.frame.Bm
    return _h_term(space) - _comm_trace(M, M) - np.tensordot(B, M, axes=([1, 2], [1, 0]))


def riemann(space: HomogeneousSpaceSpec, S) -> np.ndarray:
    """``Rm[a, b][k, j]``: k-component of ``Rm(e_a, e_b) e_j``."""
    fr = space.frame
    M = _matrices(S)
    A = fr.ad_m[: fr.nh]
    ad_h = np.einsum("abh,hkj->abkj", fr.Bh, A)
    comm = np.einsum("akw,bwj->abkj", M, M) - np.einsum("bkw,awj->abkj", M, M)
    return ad_h - comm - np.einsum("abc,ckj->abkj", fr.Bm, M)


def ricci_from_riemann(Rm) -> np.ndarray:
    return np.einsum("izzj->ij", Rm)


def _s_for(space, P):
    if isinstance(P, SubmersionMetric):
        return s_tensor_submersion(space, P)
    return s_tensor(space, P)


def ricci(space: HomogeneousSpaceSpec, P) -> np.ndarray:
    """Ricci endomorphism (index raised with Q).

    ``P`` is either a nondegenerate array or a :class:`SubmersionMetric`,
    in which case the closed-form S-tensor is used and ``P_t`` may be
    degenerate.
    """
    return ricci_from_s(space, _s_for(space, P))


def _full(P):
    return P.full() if isinstance(P, SubmersionMetric) else np.asarray(P, dtype=float)


def scal(space: HomogeneousSpaceSpec, P, Ric=None) -> float:
    """``Tr(P^-1 Ric)``; for a degenerate vertical block the vertical part
    of the trace uses the pseudo-inverse, i.e. the continuous extension."""
    Ric = ricci(space, P) if Ric is None else Ric
    if isinstance(P, SubmersionMetric):
        td = len(P.P_t)
        out = np.trace(np.linalg.solve(P.P_n, Ric[td:, td:]))
        if td:
            out += np.trace(np.linalg.pinv(P.P_t, rcond=1e-300, hermitian=True) @ Ric[:td, :td])
        return float(out)
    return float(np.trace(np.linalg.solve(P, Ric)))


def traceless_ricci(space: HomogeneousSpaceSpec, P) -> np.ndarray:
    Pf = _full(P)
    Ric = ricci(space, P)
    return Ric - scal(space, P, Ric) / len(Pf) * Pf


def curvature(space: HomogeneousSpaceSpec, P) -> CurvatureBundle:
    S = _s_for(space, P)
    Rm = riemann(space, S)
    Ric = ricci_from_riemann(Rm)
    Pf = _full(P)
    return CurvatureBundle(S, Rm, Ric, float(np.trace(np.linalg.solve(Pf, Ric))))


def ricci_differential(space: HomogeneousSpaceSpec, metric, direction) -> np.ndarray:
    """Analytic derivative of Ric at a generalized submersion metric along
    a submersion-type direction ``B = B_t + B_n``."""
    if not isinstance(metric, SubmersionMetric):
        metric = SubmersionMetric.split(space, _check_metric(space, metric))
    if not isinstance(direction, SubmersionMetric):
        direction = SubmersionMetric.split(space, _check_metric(space, direction))
    S = s_tensor_submersion(space, metric)
    dS = _ds_submersion(space, metric, direction)
    M, dM = _matrices(S), _matrices(dS)
    B = space.frame.Bm
    return -_comm_trace(dM, M) - _comm_trace(M, dM) - np.tensordot(B, dM, axes=([1, 2], [1, 0]))


FD_STEP = 1e-5


def fd_step(P) -> float:
    # fixed step; scaling by |P| made the truncation error dominate for large metrics
    return FD_STEP


def ricci_differential_fd(space: HomogeneousSpaceSpec, P, B, h: float | None = None) -> np.ndarray:
    """Central finite-difference derivative of Ric at P along B."""
    h = fd_step(P) if h is None else h
    if isinstance(P, SubmersionMetric):
        Bs = B if isinstance(B, SubmersionMetric) else SubmersionMetric.split(space, B)
        plus = SubmersionMetric(P.P_t + h * Bs.P_t, P.P_n + h * Bs.P_n)
        minus = SubmersionMetric(P.P_t - h * Bs.P_t, P.P_n - h * Bs.P_n)
    else:
        plus, minus = P + h * B, P - h * B
    return (ricci(space, plus) - ricci(space, minus)) / (2 * h)


def _module_scalings(space, P):
    """Per-module scalings if P is diagonal with respect to the modules, else None."""
    fr = space.frame
    x = []
    off = P.copy()
    for s in fr.slices:
        block = P[s, s]
        xi = block[0, 0]
        if np.max(np.abs(block - xi * np.eye(len(block)))) > 1e-12 * max(1.0, abs(xi)):
            return None
        x.append(xi)
        off[s, s] = 0.0
    if np.max(np.abs(off)) > 1e-12 * max(1.0, np.max(np.abs(P))):
        return None
    return np.array(x)


def oneill_diagnostics(space: HomogeneousSpaceSpec, P) -> dict:
    """O'Neill defect of a submersion metric.

    ``|A|^2 = 1/4 sum_{a,b} |[X_a, X_b]_t|^2`` over a g-orthonormal
    horizontal frame; with totally geodesic flat torus fibres this is the
    whole defect in ``scal_M = scal_N - |A|^2``.  For metrics diagonal in
    the modules, ``A_horizontal[j1, j2]`` and ``A_mixed[j, i]`` are the
    summed squares of ``A_X Y`` (X, Y horizontal) and ``A_X U`` (U
    vertical) per module pair from the triple coefficients; the two totals
    agree with ``A_norm_sq``.  For other metrics they are None.
    """
    from .algebra import triple_coefficients

    if not space.has_fibration:
        raise ValueError("space has no toral split")
    P = _check_metric(space, _full(P))
    fr = space.frame
    td = fr.t_dim
    Pt, Pn = P[:td, :td], P[td:, td:]
    if np.max(np.abs(P[:td, td:])) > 1e-12 * max(1.0, np.max(np.abs(P))):
        raise ValueError("metric is not a submersion metric (vertical/horizontal blocks couple)")
    w, V = np.linalg.eigh(Pn)
    if w[0] <= 0:
        raise ValueError("horizontal block is not positive definite")
    X = V / np.sqrt(w)  # columns: g-orthonormal horizontal frame
    Bt = fr.Bm[td:, td:, :td]
    W = np.einsum("ia,jb,ijk->abk", X, X, Bt)
    A_sq = 0.25 * float(np.einsum("abk,kl,abl->", W, Pt, W))
    out = {"A_norm_sq": A_sq, "A_horizontal": None, "A_mixed": None}
    x = _module_scalings(space, P)
    if x is not None:
        r = space.toral_split
        tri = triple_coefficients(space)
        xt, xn = x[:r], x[r:]
        tn = tri[:r, r:, r:]
        out["A_horizontal"] = 0.25 * np.einsum("ijk,i,j,k->jk", tn, xt, 1 / xn, 1 / xn)
        out["A_mixed"] = 0.25 * np.einsum("ijk,i,j,k->ji", tn, xt, 1 / xn, 1 / xn)
    scal_M = scal(space, SubmersionMetric(Pt, Pn))
    scal_N = scal(space.base_space(), Pn)
    out.update(scal_M=scal_M, scal_N=scal_N, identity_residual=abs(scal_M - scal_N + A_sq))
    return out
