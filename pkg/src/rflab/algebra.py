"""Lie-algebra and homogeneous-space data.

Structure constants are stored against an arbitrary basis of the Lie
algebra.  Everything downstream works in a cached Q-orthonormal frame
adapted to the reductive decomposition ``g = h + m`` and to the module
splitting of ``m``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

TOL_ALG = 1e-9


class NumericalError(RuntimeError):
    """Raised when a linear solve is too ill-conditioned to trust."""


@dataclass(frozen=True, eq=False)
class LieAlgebraSpec:
    """Structure constants ``c[i, j, k]`` with ``[e_i, e_j] = sum_k c[i, j, k] e_k``
    and a background inner product ``Q`` (Gram matrix in the same basis)."""

    c: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[1] != c.shape[2]:
            raise ValueError(f"structure constants must be n x n x n, got {c.shape}")
        if Q.shape != (c.shape[0], c.shape[0]):
            raise ValueError(f"Q must be {c.shape[0]} x {c.shape[0]}, got {Q.shape}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "Q", Q)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def bracket(self, X, Y) -> np.ndarray:
        return bracket(self, X, Y)

    def ad(self, X) -> np.ndarray:
        """Matrix of ad(X) acting on column vectors."""
        X = _vector(X, self.dim)
        return np.einsum("i,ijk->kj", X, self.c)

    def killing(self) -> np.ndarray:
        ads = np.einsum("ijk->ikj", self.c)  # ads[i] = ad(e_i)
        return np.einsum("iab,jba->ij", ads, ads)


def _vector(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (dim,):
        raise ValueError(f"expected a vector of length {dim}, got shape {X.shape}")
    return X


def bracket(spec: LieAlgebraSpec, X, Y) -> np.ndarray:
    """Lie bracket of two coordinate vectors."""
    X = _vector(X, spec.dim)
    Y = _vector(Y, spec.dim)
    return np.einsum("i,j,ijk->k", X, Y, spec.c)


def _q_orthonormalize(vectors: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Columns spanning the same space as the rows of ``vectors``, Q-orthonormal."""
    if len(vectors) == 0:
        return np.zeros((Q.shape[0], 0))
    L = np.linalg.cholesky(Q)
    W = L.T @ np.asarray(vectors, dtype=float).T
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    if s[-1] < 1e-12 * max(s[0], 1.0):
        raise ValueError("module or isotropy vectors are linearly dependent")
    # keep the original orientation where possible: Gram-Schmidt via QR
    Qr, R = np.linalg.qr(W)
    Qr = Qr * np.sign(np.diag(R))
    return np.linalg.solve(L.T, Qr)


@dataclass(frozen=True)
class Frame:
    """Q-orthonormal adapted frame ``(h-part | m_1 | m_2 | ...)``.

    ``C[a, b, c]`` are the structure constants in this frame; indices below
    ``nh`` belong to h, the rest to m.
    """

    F: np.ndarray
    Finv: np.ndarray
    C: np.ndarray
    nh: int
    module_dims: tuple
    toral_split: int | None

    @property
    def m(self) -> int:
        return self.C.shape[0] - self.nh

    @cached_property
    def slices(self) -> list[slice]:
        out, start = [], 0
        for d in self.module_dims:
            out.append(slice(start, start + d))
            start += d
        return out

    @property
    def t_dim(self) -> int:
        if self.toral_split is None:
            return 0
        return sum(self.module_dims[: self.toral_split])

    @cached_property
    def Bm(self) -> np.ndarray:
        """``Bm[i, j, k] = Q([e_i, e_j], e_k)`` for i, j, k in m."""
        n = self.nh
        return self.C[n:, n:, n:]

    @cached_property
    def Bh(self) -> np.ndarray:
        """``Bh[i, j, a] = Q([e_i, e_j], h_a)`` for i, j in m."""
        n = self.nh
        return self.C[n:, n:, :n]

    @cached_property
    def ad_m(self) -> np.ndarray:
        """``ad_m[a][k, j]``: component k of ``[e_a, e_j]`` for a in g, j, k in m."""
        n = self.nh
        return np.transpose(self.C[:, n:, n:], (0, 2, 1))


@dataclass(frozen=True, eq=False)
class HomogeneousSpaceSpec:
    """A reductive homogeneous space G/H with an optional torus fibration.

    ``modules`` is an ordered list of sub-bases of m; each entry is either a
    list of basis indices or an array whose rows are vectors of g.  When
    ``toral_split = r`` the first r modules span the vertical torus
    directions t and the rest span the horizontal part n.
    """

    algebra: LieAlgebraSpec
    h_basis: np.ndarray
    modules: tuple
    isotropy_generators: tuple = ()
    toral_split: int | None = None
    name: str = ""

    def __post_init__(self):
        dim = self.algebra.dim
        h = np.asarray(self.h_basis, dtype=float).reshape(-1, dim)
        object.__setattr__(self, "h_basis", h)
        mods = []
        for mod in self.modules:
            arr = np.asarray(mod)
            if arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer):
                arr = np.eye(dim)[arr]
            arr = np.asarray(arr, dtype=float).reshape(-1, dim)
            if len(arr) == 0:
                raise ValueError("empty module")
            mods.append(arr)
        object.__setattr__(self, "modules", tuple(mods))
        gens = tuple(np.asarray(g, dtype=float) for g in self.isotropy_generators)
        for g in gens:
            if g.shape != (dim, dim):
                raise ValueError(f"isotropy generator must be {dim} x {dim}")
        object.__setattr__(self, "isotropy_generators", gens)
        if self.toral_split is not None and not 0 < self.toral_split < len(mods):
            raise ValueError("toral_split must leave at least one module on each side")

    @property
    def dim(self) -> int:
        """Dimension of the homogeneous space (dim m)."""
        return sum(len(m) for m in self.modules)

    @property
    def module_dims(self) -> tuple:
        return tuple(len(m) for m in self.modules)

    @property
    def has_fibration(self) -> bool:
        return self.toral_split is not None

    @cached_property
    def frame(self) -> Frame:
        Q = self.algebra.Q
        cols = [_q_orthonormalize(self.h_basis, Q)]
        cols += [_q_orthonormalize(mod, Q) for mod in self.modules]
        F = np.hstack(cols)
        if F.shape[1] != self.algebra.dim:
            raise ValueError(
                f"h and the modules span {F.shape[1]} dimensions, algebra has {self.algebra.dim}"
            )
        Finv = np.linalg.inv(F)
        C = np.einsum("ia,jb,ijk,ck->abc", F, F, self.algebra.c, Finv)
        return Frame(F, Finv, C, len(self.h_basis), self.module_dims, self.toral_split)

    @cached_property
    def isotropy_m(self) -> tuple:
        """Isotropy generators expressed on m in the adapted frame."""
        fr = self.frame
        return tuple((fr.Finv @ g @ fr.F)[fr.nh :, fr.nh :] for g in self.isotropy_generators)

    def base_space(self) -> "HomogeneousSpaceSpec":
        """The base N = G/K of the torus fibration."""
        if not self.has_fibration:
            raise ValueError(f"{self.name or 'space'} has no toral split")
        r = self.toral_split
        k = np.vstack([self.h_basis, *self.modules[:r]])
        return HomogeneousSpaceSpec(
            self.algebra,
            k,
            self.modules[r:],
            self.isotropy_generators,
            None,
            name=f"{self.name}/base" if self.name else "base",
        )


# ----------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    tol: float = TOL_ALG

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v <= self.tol]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "checks": {k: {"residual": float(v), "passed": bool(v <= self.tol)} for k, v in self.checks.items()},
        }


def _max_abs(x) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0


def validate(space: HomogeneousSpaceSpec, tol: float = TOL_ALG) -> ValidationReport:
    """Check every algebraic hypothesis; each entry is a max residual."""
    alg = space.algebra
    c, Q = alg.c, alg.Q
    rep = ValidationReport(tol=tol)
    ch = rep.checks

    ch["antisymmetry"] = _max_abs(c + np.transpose(c, (1, 0, 2)))
    jac = (
        np.einsum("ijm,mkl->ijkl", c, c)
        + np.einsum("jkm,mil->ijkl", c, c)
        + np.einsum("kim,mjl->ijkl", c, c)
    )
    ch["jacobi"] = _max_abs(jac)
    ch["Q_symmetric"] = _max_abs(Q - Q.T)
    eig = np.linalg.eigvalsh((Q + Q.T) / 2)
    ch["Q_positive"] = 0.0 if eig[0] > tol else 1.0 + abs(float(eig[0]))
    # Q([X,Y],Z) + Q(Y,[X,Z]) = 0
    cq = np.einsum("ijk,kl->ijl", c, Q)  # Q([e_i,e_j], e_l)
    ch["Q_ad_invariance"] = _max_abs(cq + np.transpose(cq, (0, 2, 1)))

    try:
        fr = space.frame
    except (ValueError, np.linalg.LinAlgError) as exc:
        ch["decomposition_spans_g"] = float("inf")
        rep.error = str(exc)  # type: ignore[attr-defined]
        return rep
    ch["decomposition_spans_g"] = 0.0

    # orthogonality of h and the modules, measured on the raw spanning vectors
    blocks = [space.h_basis, *space.modules]
    worst = 0.0
    for a, b in itertools.combinations(range(len(blocks)), 2):
        if len(blocks[a]) and len(blocks[b]):
            worst = max(worst, _max_abs(blocks[a] @ Q @ blocks[b].T))
    ch["orthogonal_decomposition"] = worst

    nh = fr.nh
    C = fr.C
    ch["h_subalgebra"] = _max_abs(C[:nh, :nh, nh:])

    sl = [slice(nh + s.start, nh + s.stop) for s in fr.slices]
    worst = 0.0
    for i, si in enumerate(sl):
        others = np.ones(C.shape[0], dtype=bool)
        others[si] = False
        worst = max(worst, _max_abs(C[:nh, si][:, :, others]))
    ch["modules_ad_h_invariant"] = worst

    worst_aut = worst_orth = worst_mod = 0.0
    for g in space.isotropy_generators:
        worst_orth = max(worst_orth, _max_abs(g.T @ Q @ g - Q))
        lhs = np.einsum("ia,jb,ijk->abk", g, g, c)
        rhs = np.einsum("abk,lk->abl", c, g)
        worst_aut = max(worst_aut, _max_abs(lhs - rhs))
        gf = fr.Finv @ g @ fr.F
        blocks_ok = [slice(0, nh)] + sl
        for i, si in enumerate(blocks_ok):
            others = np.ones(C.shape[0], dtype=bool)
            others[si] = False
            worst_mod = max(worst_mod, _max_abs(gf[others][:, si]))
    if space.isotropy_generators:
        ch["isotropy_orthogonal"] = worst_orth
        ch["isotropy_automorphism"] = worst_aut
        ch["isotropy_preserves_modules"] = worst_mod

    if space.has_fibration:
        td = fr.t_dim
        k_idx = np.arange(nh + td)
        t_idx = np.arange(nh, nh + td)
        n_idx = np.arange(nh + td, C.shape[0])
        # [k, k] in h
        ch["toral_bracket_in_h"] = _max_abs(C[np.ix_(k_idx, k_idx, np.r_[t_idx, n_idx])])
        # [k, n] in n
        ch["n_ad_k_invariant"] = _max_abs(C[np.ix_(k_idx, n_idx, k_idx)])
        # no nonzero vector of n is killed by every ad(Z), Z in k
        stack = np.vstack([fr.ad_m[z][td:, td:] for z in k_idx])
        sv = np.linalg.svd(stack, compute_uv=False)
        # residual = number of n-directions fixed by all of ad(k)
        ch["maximality"] = float(np.sum(sv <= np.sqrt(tol) * max(1.0, sv[0])))
    return rep


# ----------------------------------------------------------------------------
# invariant symmetric endomorphisms


@dataclass(frozen=True)
class InvariantBasis:
    """Orthonormal (trace pairing) basis of invariant symmetric endomorphisms of m.

    ``frames[i] = scales[i] * elements[i]`` is rescaled to unit spectral
    radius, so that for a basis of module identities the coordinates of a
    diagonal metric are exactly its module scalings.  Metrics are written
    ``P = sum_i y_i * frames[i]``.
    """

    elements: np.ndarray
    t_block_dim: int
    kinds: tuple
    blocks: tuple
    scales: np.ndarray

    @property
    def frames(self) -> np.ndarray:
        return self.elements * self.scales[:, None, None]

    def __len__(self) -> int:
        return len(self.elements)

    def metric(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (len(self),):
            raise ValueError(f"expected {len(self)} coefficients, got shape {y.shape}")
        return np.einsum("i,ijk->jk", y, self.frames)

    def coords(self, X) -> np.ndarray:
        """Coordinates of a (symmetric, invariant) matrix in the frame basis."""
        return np.einsum("jk,ijk->i", X, self.elements) / self.scales

    def projection_residual(self, X) -> float:
        return float(np.linalg.norm(X - self.metric(self.coords(X))))

    @property
    def t_slice(self) -> slice:
        return slice(0, self.t_block_dim)


def _sym_basis(d: int) -> list[np.ndarray]:
    out = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def _block_nullspace(generators_a, generators_b, isos_a, isos_b, da, db, diag, tol):
    """Symmetric-block solutions of ``E A_b - A_a E = 0`` and ``g_a E g_b^T = E``."""
    if diag:
        params = _sym_basis(da)
    else:
        params = [np.eye(1, da * db, k).reshape(da, db) for k in range(da * db)]
    rows = []
    for Aa, Ab in zip(generators_a, generators_b):
        rows.append(np.array([(E @ Ab - Aa @ E).ravel() for E in params]).T)
    for ga, gb in zip(isos_a, isos_b):
        rows.append(np.array([(ga @ E @ gb.T - E).ravel() for E in params]).T)
    if not rows:
        return params, None
    M = np.vstack(rows)
    U, s, Vt = np.linalg.svd(M)
    scale = max(1.0, s[0] if s.size else 1.0)
    s_full = np.zeros(len(params))
    s_full[: s.size] = s
    null = s_full <= tol * scale
    grey = (s_full > tol * scale) & (s_full < 1e-6 * scale)
    if grey.any():
        raise NumericalError(
            f"invariance constraints are ill-conditioned: singular values {s_full[grey]} "
            f"between {tol * scale:.1e} and {1e-6 * scale:.1e}"
        )
    vecs = Vt[null]
    return [sum(v[k] * params[k] for k in range(len(params))) for v in vecs], s_full


def invariant_sym_basis(
    space: HomogeneousSpaceSpec, submersion: bool = False, tol: float = TOL_ALG
) -> InvariantBasis:
    """Basis of Ad(H)-invariant symmetric endomorphisms of m.

    With ``submersion=True`` (requires a toral split) the basis spans the
    generalized submersion space ``Sym(t)^{Ad H} + Sym(n)^{Ad K}``
    instead; the t-block elements always come first.
    """
    fr = space.frame
    nmod = len(fr.module_dims)
    r = space.toral_split if space.has_fibration else 0
    if submersion and not space.has_fibration:
        raise ValueError("submersion basis requires a toral split")
    h_gens = [fr.ad_m[a] for a in range(fr.nh)]
    k_gens = h_gens + [fr.ad_m[fr.nh + i] for i in range(fr.t_dim)]
    isos = space.isotropy_m

    def pairs(lo_a, hi_a, lo_b, hi_b):
        return [(a, b) for a in range(lo_a, hi_a) for b in range(lo_b, hi_b) if a <= b]

    groups = [("t", pairs(0, r, 0, r)), ("n", pairs(r, nmod, r, nmod))]
    if not submersion:
        groups.append(("tn", [(a, b) for a in range(r) for b in range(r, nmod)]))
    elements, kinds, blocks = [], [], []
    m = fr.m
    for kind, plist in groups:
        for a, b in plist:
            sa, sb = fr.slices[a], fr.slices[b]
            gens = k_gens if (submersion and kind == "n") else h_gens
            ga = [A[sa, sa] for A in gens]
            gb = [A[sb, sb] for A in gens]
            ia = [g[sa, sa] for g in isos]
            ib = [g[sb, sb] for g in isos]
            sols, _ = _block_nullspace(ga, gb, ia, ib, sa.stop - sa.start, sb.stop - sb.start, a == b, tol)
            block_elems = []
            for X in sols:
                E = np.zeros((m, m))
                E[sa, sb] = X
                E[sb, sa] = X.T
                block_elems.append(E)
            # orthonormalize under the trace pairing
            if block_elems:
                V = np.array([E.ravel() for E in block_elems])
                Qv, R = np.linalg.qr(V.T)
                for k in range(Qv.shape[1]):
                    E = Qv[:, k].reshape(m, m)
                    E = (E + E.T) / 2
                    E[np.abs(E) < 1e-15] = 0.0
                    flat = E.ravel()
                    lead = flat[np.argmax(np.abs(flat) > 1e-8)]
                    if lead < 0:
                        E = -E
                    elements.append(E / np.linalg.norm(E))
                    kinds.append(kind)
                    blocks.append((a, b))
    elements = np.array(elements) if elements else np.zeros((0, m, m))
    scales = np.array([1.0 / np.max(np.abs(np.linalg.eigvalsh(E))) for E in elements])
    nu = kinds.count("t")
    return InvariantBasis(elements, nu, tuple(kinds), tuple(blocks), scales)


def triple_coefficients(space: HomogeneousSpaceSpec, frame_rotation: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """``[ijk]``: summed squares of ``Q([e_a, e_b], e_c)`` over modules i, j, k.

    ``frame_rotation`` optionally supplies one orthogonal matrix per module,
    used to recompute the coefficients in a rotated adapted basis.
    """
    fr = space.frame
    B = fr.Bm
    if frame_rotation is not None:
        R = np.zeros((fr.m, fr.m))
        for s, Rs in zip(fr.slices, frame_rotation):
            R[s, s] = Rs
        B = np.einsum("ijk,ia,jb,kc->abc", B, R, R, R)
    n = len(fr.slices)
    out = np.zeros((n, n, n))
    for i, j, k in itertools.product(range(n), repeat=3):
        si, sj, sk = fr.slices[i], fr.slices[j], fr.slices[k]
        out[i, j, k] = np.sum(B[si, sj, sk] ** 2)
    return out


def killing_ratios(space: HomogeneousSpaceSpec) -> np.ndarray:
    """Per-module ``b_i`` with ``-Killing|_{m_i} = b_i * Q|_{m_i}``."""
    fr = space.frame
    ads = np.transpose(fr.C, (0, 2, 1))
    K = np.einsum("iab,jba->ij", ads, ads)
    out = []
    for s in fr.slices:
        idx = np.arange(fr.nh + s.start, fr.nh + s.stop)
        out.append(-np.trace(K[np.ix_(idx, idx)]) / len(idx))
    return np.array(out)
