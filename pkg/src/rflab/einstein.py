"""Einstein metrics as critical points of the normalized scalar curvature:
Newton search on the unit-volume slice, Hessian spectra and coindex.

Two backends share one interface: structure constants (curvature engine)
and closed-form diagonal scalar models.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import curvature as cv
from .algebra import HomogeneousSpaceSpec, InvariantBasis, invariant_sym_basis
from .catalog import DiagonalModel

EINSTEIN_TOL = 1e-10
NULL_TOL = 1e-6


class SearchError(RuntimeError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


def l2_inner(P, B1, B2) -> float:
    """``det(P)^{1/2} Tr(P^-1 B1 P^-1 B2)``."""
    P = np.asarray(P, dtype=float)
    sgn, logdet = np.linalg.slogdet(P)
    if sgn <= 0 or np.linalg.eigvalsh(P)[0] <= 0:
        raise ValueError("P must be positive definite")
    X = np.linalg.solve(P, B1)
    Y = np.linalg.solve(P, B2)
    return float(np.exp(0.5 * logdet) * np.trace(X @ Y))


def normalized_scal(space: HomogeneousSpaceSpec, P) -> float:
    """``det(P)^{1/m} scal(P)``; scale invariant."""
    P = np.asarray(P, dtype=float)
    sgn, logdet = np.linalg.slogdet(P)
    if sgn <= 0:
        raise ValueError("P must be positive definite")
    return float(np.exp(logdet / len(P)) * cv.scal(space, P))


def normalized_scal_differential(space: HomogeneousSpaceSpec, P, B) -> float:
    """First variation ``-det(P)^{(2-m)/2m} <Ric^0(P), B>_P``."""
    P = np.asarray(P, dtype=float)
    m = len(P)
    R0 = cv.traceless_ricci(space, P)
    return -np.linalg.det(P) ** ((2 - m) / (2 * m)) * l2_inner(P, R0, B)


# ----------------------------------------------------------------------------
# backends


class StructureBackend:
    """Invariant metrics ``P = sum y_i F_i`` on a structure-constant space."""

    tag = "structure_constants"

    def __init__(self, space: HomogeneousSpaceSpec, basis: InvariantBasis | None = None):
        self.space = space
        self.basis = basis or invariant_sym_basis(space)
        self.m = space.dim

    @property
    def n(self) -> int:
        return len(self.basis)

    def metric(self, y) -> np.ndarray:
        return self.basis.metric(y)

    def positive(self, y) -> bool:
        return bool(np.linalg.eigvalsh(self.metric(y))[0] > 0)

    def log_volume(self, y) -> float:
        sgn, logdet = np.linalg.slogdet(self.metric(y))
        return logdet if sgn > 0 else np.nan

    def nscal(self, y) -> float:
        return normalized_scal(self.space, self.metric(y))

    def residual(self, y) -> np.ndarray:
        """Trace-pairing coordinates of ``Ric^0``; their norm is ``|Ric^0|_F``."""
        R0 = cv.traceless_ricci(self.space, self.metric(y))
        return np.einsum("jk,ijk->i", R0, self.basis.elements)

    def einstein_constant(self, y) -> float:
        P = self.metric(y)
        return cv.scal(self.space, P) / self.m


class DiagonalBackend:
    """Closed-form scalar model in module-scaling coordinates."""

    tag = "diagonal_scalar_model"

    def __init__(self, model: DiagonalModel):
        self.model = model
        self.m = model.m

    @property
    def n(self) -> int:
        return self.model.n

    def metric(self, y) -> np.ndarray:
        return np.diag(np.repeat(np.asarray(y, float), self.model.dims))

    def positive(self, y) -> bool:
        return bool(np.all(np.asarray(y) > 0))

    def log_volume(self, y) -> float:
        y = np.asarray(y, float)
        return float(np.sum(np.array(self.model.dims) * np.log(y))) if np.all(y > 0) else np.nan

    def nscal(self, y) -> float:
        return self.model.normalized_scal(y)

    def residual(self, y) -> np.ndarray:
        """``x_i d/dx_i`` of the normalized scalar curvature (degree 0)."""
        y = np.asarray(y, float)
        return y * self.model.normalized_gradient(y)

    def einstein_constant(self, y) -> float:
        return self.model.scal(y) / self.m


def make_backend(target):
    if isinstance(target, (StructureBackend, DiagonalBackend)):
        return target
    if isinstance(target, DiagonalModel):
        return DiagonalBackend(target)
    if isinstance(target, HomogeneousSpaceSpec):
        return StructureBackend(target)
    raise TypeError(f"cannot build a backend from {type(target).__name__}")


# ----------------------------------------------------------------------------
# search


@dataclass
class SearchConfig:
    tol: float = EINSTEIN_TOL
    max_iter: int = 200
    fd_step: float = 1e-6
    null_tol: float = NULL_TOL
    hessian_step: float = 1e-4


@dataclass
class EinsteinPoint:
    coefficients: np.ndarray
    lam: float
    residual: float
    hessian_spectrum: np.ndarray
    coindex: int
    nullity: int
    scaling_eigenvalue: float
    nscal: float
    backend: str
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coefficients"] = [float(v) for v in self.coefficients]
        d["hessian_spectrum"] = [float(v) for v in self.hessian_spectrum]
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _unit_volume(backend, y):
    return np.asarray(y, float) * np.exp(-backend.log_volume(y) / backend.m)


def _jacobian(f, y, h):
    cols = []
    for i in range(len(y)):
        e = np.zeros(len(y))
        e[i] = h * max(1.0, abs(y[i]))
        cols.append((f(y + e) - f(y - e)) / (2 * e[i]))
    return np.array(cols).T


def _newton(backend, y, cfg: SearchConfig):
    y = _unit_volume(backend, y)
    r = backend.residual(y)
    best = (np.linalg.norm(r), y)
    for it in range(cfg.max_iter):
        nr = np.linalg.norm(r)
        if nr <= cfg.tol:
            return y, nr, it
        J = _jacobian(backend.residual, y, cfg.fd_step)
        JtJ = J.T @ J
        mu = 1e-8 * max(np.linalg.norm(JtJ), 1e-300)
        accepted = False
        for _ in range(40):
            step = np.linalg.solve(JtJ + mu * np.eye(len(y)), -J.T @ r)
            for alpha in (1.0, 0.5, 0.25, 0.125):
                trial = y + alpha * step
                if not backend.positive(trial):
                    continue
                trial = _unit_volume(backend, trial)
                rt = backend.residual(trial)
                if np.linalg.norm(rt) < nr:
                    y, r, accepted = trial, rt, True
                    break
            if accepted:
                break
            mu *= 10
        if not accepted:
            break
        if np.linalg.norm(r) < best[0]:
            best = (np.linalg.norm(r), y)
    nr = np.linalg.norm(r)
    if nr <= cfg.tol:
        return y, nr, cfg.max_iter
    raise SearchError(f"Newton search did not converge (best residual {best[0]:.3e})", best[1], best[0])


def hessian_spectrum_coindex(target, y, cfg: SearchConfig | None = None) -> dict:
    """Hessian of the normalized scalar curvature in frame coordinates.

    Central second differences of the scalar.  The eigenvalue whose
    eigenvector is closest to the scaling direction ``y`` is reported as
    ``scaling_eigenvalue``; the coindex counts the remaining eigenvalues
    above ``null_tol`` (directions increasing the normalized scalar
    curvature), the nullity those within ``null_tol``.
    """
    cfg = cfg or SearchConfig()
    backend = make_backend(target)
    y = _unit_volume(backend, y)
    n = len(y)
    h = cfg.hessian_step
    f0 = backend.nscal(y)
    H = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (backend.nscal(y + ei) - 2 * f0 + backend.nscal(y - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            H[i, j] = H[j, i] = (
                backend.nscal(y + ei + ej)
                - backend.nscal(y + ei - ej)
                - backend.nscal(y - ei + ej)
                + backend.nscal(y - ei - ej)
            ) / (4 * h**2)
    w, V = np.linalg.eigh(H)
    k = int(np.argmax(np.abs(V.T @ (y / np.linalg.norm(y)))))
    rest = np.delete(w, k)
    return {
        "hessian": H,
        "spectrum": w,
        "scaling_eigenvalue": float(w[k]),
        "scaling_residual": float(np.linalg.norm(H @ y)),
        "coindex": int(np.sum(rest > cfg.null_tol)),
        "nullity": int(np.sum(np.abs(rest) <= cfg.null_tol)),
        "negative": int(np.sum(rest < -cfg.null_tol)),
    }


def linearized_rates(target, y, cfg: SearchConfig | None = None):
    """Rates of the normalized flow linearized at an Einstein point.

    The normalized flow is twice the L2-gradient flow of the normalized
    scalar curvature on the unit-volume slice, so its linearization is
    ``2 G^-1 H`` with G the L2 Gram matrix of the frame coordinates.
    Returns (eigenvalues, eigenvectors) sorted decreasingly.
    """
    backend = make_backend(target)
    y = _unit_volume(backend, y)
    H = hessian_spectrum_coindex(backend, y, cfg)["hessian"]
    P = backend.metric(y)
    n = len(y)
    frames = [backend.metric(e) for e in np.eye(n)]
    G = np.array([[l2_inner(P, A, B) for B in frames] for A in frames])
    w, V = np.linalg.eig(2 * np.linalg.solve(G, H))
    order = np.argsort(-w.real)
    return w.real[order], V.real[:, order]


def einstein_point(target, y, cfg: SearchConfig | None = None, iterations: int = 0) -> EinsteinPoint:
    """Assemble the full record at a (verified) Einstein point."""
    cfg = cfg or SearchConfig()
    backend = make_backend(target)
    y = _unit_volume(backend, y)
    hs = hessian_spectrum_coindex(backend, y, cfg)
    if isinstance(backend, StructureBackend):
        resid = float(np.linalg.norm(cv.traceless_ricci(backend.space, backend.metric(y))))
    else:
        resid = float(np.linalg.norm(backend.residual(y)))
    return EinsteinPoint(
        y,
        float(backend.einstein_constant(y)),
        resid,
        hs["spectrum"],
        hs["coindex"],
        hs["nullity"],
        hs["scaling_eigenvalue"],
        float(backend.nscal(y)),
        backend.tag,
        iterations,
    )


def find_einstein(target, seed, cfg: SearchConfig | None = None) -> EinsteinPoint:
    """Newton search from ``seed`` (frame coordinates or a metric matrix)."""
    cfg = cfg or SearchConfig()
    backend = make_backend(target)
    seed = np.asarray(seed, float)
    if seed.ndim == 2:
        seed = backend.basis.coords(seed)
    if seed.shape != (backend.n,):
        raise ValueError(f"seed must have {backend.n} coefficients")
    if not backend.positive(seed):
        raise ValueError("seed is not positive definite")
    y, _, it = _newton(backend, seed, cfg)
    return einstein_point(backend, y, cfg, it)


def canonical(y, perms) -> np.ndarray:
    """Lexicographically smallest relabeling of ``y`` under ``perms``."""
    y = np.asarray(y, float)
    if not perms:
        return y
    return min((y[list(p)] for p in perms), key=lambda v: tuple(np.round(v, 8)))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RFLAB_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def find_einstein_multi(target, seeds, perms=(), cfg: SearchConfig | None = None) -> list[EinsteinPoint]:
    """Run ``find_einstein`` from every seed; merge duplicates up to ``perms``.

    Failed seeds are dropped.  Output is sorted by normalized scalar
    curvature, then by the canonical coefficients.
    """
    backend = make_backend(target)

    def one(seed):
        try:
            return find_einstein(backend, seed, cfg)
        except SearchError:
            return None

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        found = [p for p in ex.map(one, list(seeds)) if p is not None]
    uniq = {}
    for p in found:
        c = canonical(p.coefficients, perms)
        key = tuple(np.round(c, 6))
        if key not in uniq:
            p.coefficients = c
            uniq[key] = p
    return sorted(uniq.values(), key=lambda p: (round(p.nscal, 8), tuple(np.round(p.coefficients, 8))))


def random_seeds(n: int, k: int, rng=None) -> list[np.ndarray]:
    rng = np.random.default_rng(0) if rng is None else rng
    return [np.exp(rng.uniform(-1.0, 1.0, size=n)) for _ in range(k)]
