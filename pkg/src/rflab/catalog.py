"""Example spaces: structure-constant data built from matrix Lie algebras,
and closed-form diagonal scalar-curvature models.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .algebra import HomogeneousSpaceSpec, LieAlgebraSpec


# ----------------------------------------------------------------------------
# matrix algebras


def algebra_from_matrices(mats, form: Callable[[np.ndarray, np.ndarray], float]) -> LieAlgebraSpec:
    """Structure constants of the span of ``mats`` (closed under commutator)
    and the Gram matrix of the bilinear ``form``."""
    mats = [np.asarray(A, dtype=complex) for A in mats]
    n = len(mats)
    V = np.array([np.concatenate([A.real.ravel(), A.imag.ravel()]) for A in mats]).T
    c = np.zeros((n, n, n))
    for i, j in itertools.combinations(range(n), 2):
        Cm = mats[i] @ mats[j] - mats[j] @ mats[i]
        v = np.concatenate([Cm.real.ravel(), Cm.imag.ravel()])
        coef, *_ = np.linalg.lstsq(V, v, rcond=None)
        if np.linalg.norm(V @ coef - v) > 1e-10 * max(1.0, np.linalg.norm(v)):
            raise ValueError("matrices do not span a Lie algebra")
        coef[np.abs(coef) < 1e-14] = 0.0
        c[i, j] = coef
        c[j, i] = -coef
    Q = np.array([[form(A, B) for B in mats] for A in mats])
    Q[np.abs(Q) < 1e-14] = 0.0
    return LieAlgebraSpec(c, (Q + Q.T) / 2)


def _E(n, a, b):
    M = np.zeros((n, n), dtype=complex)
    M[a, b] = 1.0
    return M


def su_roots(n):
    """Root-space pairs ``(X_ab, Y_ab)`` for a < b, lexicographic."""
    out = []
    for a, b in itertools.combinations(range(n), 2):
        X = _E(n, a, b) - _E(n, b, a)
        Y = 1j * (_E(n, a, b) + _E(n, b, a))
        out.append(((a, b), X, Y))
    return out


def _su_form(n):
    # negative Killing form of su(n): -2n Re tr(XY)
    return lambda A, B: -2 * n * float(np.real(np.trace(A @ B)))


def _diag(v):
    return np.diag(1j * np.asarray(v, dtype=complex))


def _traceless_complement(vectors, n):
    """Orthonormal basis of the traceless diagonal vectors orthogonal to ``vectors``."""
    cons = np.vstack([np.ones(n), *[np.asarray(v, float) for v in vectors]]) if len(vectors) else np.ones((1, n))
    _, s, Vt = np.linalg.svd(cons)
    rank = int(np.sum(s > 1e-12))
    return Vt[rank:]


def su_space(n: int, h_diag, t_diag=None, name="") -> HomogeneousSpaceSpec:
    """SU(n)/H with H inside the maximal torus.

    ``h_diag`` lists diagonal vectors spanning h; ``t_diag`` (optional)
    spans the vertical torus; otherwise the remaining Cartan directions
    are not split off.  Root pairs form the horizontal modules.
    """
    h_diag = [np.asarray(v, float) for v in h_diag]
    cartan_rest = _traceless_complement(h_diag, n)
    mats = [_diag(v) for v in h_diag]
    if t_diag is None:
        t_vecs = list(cartan_rest)
    else:
        t_vecs = [np.asarray(v, float) for v in t_diag]
    mats += [_diag(v) for v in t_vecs]
    roots = su_roots(n)
    for _, X, Y in roots:
        mats += [X, Y]
    alg = algebra_from_matrices(mats, _su_form(n))
    nh, nt = len(h_diag), len(t_vecs)
    idx = nh + nt
    modules = []
    if t_diag is not None or nt:
        modules += [[nh + i] for i in range(nt)]
    modules += [[idx + 2 * k, idx + 2 * k + 1] for k in range(len(roots))]
    split = nt if nt else None
    return HomogeneousSpaceSpec(alg, np.eye(len(mats))[:nh], modules, toral_split=split, name=name)


def _E_so(n, a, b):
    M = np.zeros((n, n))
    M[a, b], M[b, a] = 1.0, -1.0
    return M


def so4_space(h=None, name="") -> HomogeneousSpaceSpec:
    """SO(4) with the torus spanned by E12, E34 and the two root modules.

    ``h`` is None for the full flag SO(4)/T², ``"group"`` for H = {e}, or a
    pair (p, q) for the circle generated by p E12 + q E34.
    """
    E = lambda a, b: _E_so(4, a - 1, b - 1)
    n1 = [E(1, 3) + E(2, 4), E(1, 4) - E(2, 3)]
    n2 = [E(1, 3) - E(2, 4), E(1, 4) + E(2, 3)]
    form = lambda A, B: -2.0 * float(np.real(np.trace(A @ B)))  # negative Killing form of so(4)
    if h is None:
        mats = [E(1, 2), E(3, 4), *n1, *n2]
        alg = algebra_from_matrices(mats, form)
        return HomogeneousSpaceSpec(alg, np.eye(6)[:2], [[2, 3], [4, 5]], name=name)
    if h == "group":
        mats = [E(1, 2), E(3, 4), *n1, *n2]
        alg = algebra_from_matrices(mats, form)
        return HomogeneousSpaceSpec(alg, np.zeros((0, 6)), [[0], [1], [2, 3], [4, 5]], toral_split=2, name=name)
    p, q = h
    mats = [p * E(1, 2) + q * E(3, 4), q * E(1, 2) - p * E(3, 4), *n1, *n2]
    alg = algebra_from_matrices(mats, form)
    return HomogeneousSpaceSpec(alg, np.eye(6)[:1], [[1], [2, 3], [4, 5]], toral_split=1, name=name)


def su2_space() -> HomogeneousSpaceSpec:
    """su(2) with ``[e1, e2] = e3`` cyclic, fibred as S^1 -> S^3 -> S^2."""
    c = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        c[i, j, k], c[j, i, k] = 1.0, -1.0
    alg = LieAlgebraSpec(c, 2.0 * np.eye(3))  # -Killing = 2 Id in this basis
    return HomogeneousSpaceSpec(alg, np.zeros((0, 3)), [[2], [0, 1]], toral_split=1, name="su2")


# ----------------------------------------------------------------------------
# diagonal scalar models


@dataclass(frozen=True)
class DiagonalModel:
    """Scalar curvature of diagonal metrics ``x_1 Id + ... + x_n Id``:

    ``scal = 1/2 sum d_i b_i / x_i - 1/4 sum_{i,j,k} [ijk] x_k / (x_i x_j)``
    normalized by ``(prod x_i^{d_i})^{1/m}``.
    """

    dims: tuple
    b: tuple
    triples: dict  # sorted index triple -> [ijk] (same for all orderings)
    name: str = ""

    @property
    def m(self) -> int:
        return int(sum(self.dims))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def tensor(self) -> np.ndarray:
        T = np.zeros((self.n,) * 3)
        for key, v in self.triples.items():
            for perm in set(itertools.permutations(key)):
                T[perm] = v
        return T

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected {self.n} coefficients, got shape {x.shape}")
        if np.any(x <= 0) or not np.all(np.isfinite(x)):
            raise ValueError("diagonal coefficients must be positive")
        return x

    def scal(self, x) -> float:
        x = self._check(x)
        d, b = np.array(self.dims, float), np.array(self.b, float)
        T = self.tensor
        return float(0.5 * np.sum(d * b / x) - 0.25 * np.einsum("ijk,i,j,k->", T, 1 / x, 1 / x, x))

    def volume(self, x) -> float:
        x = self._check(x)
        return float(np.prod(x ** np.array(self.dims, float)))

    def normalized_scal(self, x) -> float:
        return self.volume(x) ** (1.0 / self.m) * self.scal(x)

    def scal_gradient(self, x) -> np.ndarray:
        x = self._check(x)
        d, b = np.array(self.dims, float), np.array(self.b, float)
        T = self.tensor
        g = -0.5 * d * b / x**2
        # x_k/(x_i x_j): derivative in x_l over the three slots
        g += 0.5 * np.einsum("ljk,l,j,k->l", T, 1 / x**2, 1 / x, x)
        g -= 0.25 * np.einsum("ijl,i,j->l", T, 1 / x, 1 / x)
        return g

    def normalized_gradient(self, x) -> np.ndarray:
        """Gradient of the normalized scalar curvature in the coordinates x."""
        x = self._check(x)
        d = np.array(self.dims, float)
        v = self.volume(x) ** (1.0 / self.m)
        return v * (self.scal_gradient(x) + self.scal(x) * d / (self.m * x))

    def ricci_flow_rhs(self, x) -> np.ndarray:
        """``x_i' = -2 r_i`` with ``r_i = -(x_i^2/d_i) d scal/d x_i`` the Ricci eigenvalue times x_i."""
        x = self._check(x)
        return 2 * x**2 / np.array(self.dims, float) * self.scal_gradient(x)


def sun_model(n: int) -> DiagonalModel:
    """SU(n)/T^{n-1} with modules (ab), a < b, lexicographic, Q = -Killing."""
    pairs = list(itertools.combinations(range(n), 2))
    index = {p: i for i, p in enumerate(pairs)}
    triples = {}
    for a, b, c in itertools.combinations(range(n), 3):
        key = tuple(sorted((index[(a, b)], index[(b, c)], index[(a, c)])))
        triples[key] = 1.0 / n
    return DiagonalModel(tuple([2] * len(pairs)), tuple([1.0] * len(pairs)), triples, name=f"su{n}_flag_model")


def g2_model() -> DiagonalModel:
    """G2/T^2 with the six root modules ordered as in the closed form."""
    triples = {(0, 2, 3): 1.0 / 3}
    for key in [(0, 1, 2), (0, 3, 4), (1, 4, 5), (2, 3, 5)]:
        triples[key] = 0.25
    return DiagonalModel(tuple([2] * 6), tuple([1.0] * 6), triples, name="g2_full_flag")


def so4_model() -> DiagonalModel:
    return DiagonalModel((2, 2), (1.0, 1.0), {}, name="so4_full_flag_model")


# closed forms written out term by term, kept separate from DiagonalModel
def closed_form_su3(x) -> float:
    x1, x2, x3 = x
    v = (x1 * x2 * x3) ** (1 / 3)
    return v * (
        (1 / x1 + 1 / x2 + 1 / x3) - (1 / 6) * (x1 / (x2 * x3) + x2 / (x1 * x3) + x3 / (x1 * x2))
    )


def closed_form_so4(x) -> float:
    x1, x2 = x
    return (x1 * x2) ** 0.5 * (1 / x1 + 1 / x2)


def closed_form_su4(x) -> float:
    x1, x2, x3, x4, x5, x6 = x
    v = (x1 * x2 * x3 * x4 * x5 * x6) ** (1 / 6)
    lin = sum(1 / xi for xi in x)
    tri = 0.0
    for i, j, k in [(x1, x2, x4), (x1, x3, x5), (x2, x3, x6), (x4, x5, x6)]:
        tri += i / (j * k) + j / (i * k) + k / (i * j)
    return v * (lin - tri / 8)


# ----------------------------------------------------------------------------
# catalog


def _frac(*vals) -> np.ndarray:
    return np.array([float(Fraction(v)) for v in vals])


@dataclass
class CatalogEntry:
    id: str
    representation: str  # "structure_constants" or "diagonal_scalar_model"
    build: Callable
    known_einstein: dict = field(default_factory=dict)  # tag -> (coefficients, provenance, coindex)
    known_coindex: int | None = None
    symmetry_permutations: tuple = ()
    model: DiagonalModel | None = None
    fibration_of: str | None = None  # catalog id of the base, for fibrations
    q: int | None = None  # coindex of the base Einstein metric used by ancient runs
    description: str = ""

    @property
    def space(self) -> HomogeneousSpaceSpec:
        return _build(self.id)


def _perm_group(n, generators):
    """Closure of a list of permutations (tuples) under composition."""
    group = {tuple(range(n))}
    frontier = set(group)
    while frontier:
        new = set()
        for g in frontier:
            for s in generators:
                h = tuple(g[s[i]] for i in range(n))
                if h not in group:
                    new.add(h)
        group |= new
        frontier = new
    return tuple(sorted(group))


def _sun_perms(n):
    """Module permutations induced by the Weyl group S_n on the pairs (ab)."""
    pairs = list(itertools.combinations(range(n), 2))
    index = {p: i for i, p in enumerate(pairs)}
    out = []
    for w in itertools.permutations(range(n)):
        out.append(tuple(index[tuple(sorted((w[a], w[b])))] for a, b in pairs))
    return tuple(sorted(set(out)))


SU3_KE = np.array([1.0, 1.0, 2.0]) * (27 / 2) ** (1 / 3) / 3
SU4_KE = np.array([3.0, 2.0, 1.0, 1.0, 2.0, 1.0]) * (1024 / 3) ** (1 / 6) / 4
G2_KE = np.array([1.0, 3.0, 4.0, 5.0, 6.0, 9.0]) * (4608 / 5) ** (1 / 6) / 12

# generic subtori of the SU(4) maximal torus used by the T^2 and S^1 quotients
SU4_T1_H = [(1.0, 2.0, 3.0, -6.0)]
SU4_T2_H = [(1.0, -1.0, 0.0, 0.0), (1.0, 1.0, -3.0, 1.0)]


def _aw_h(p, q):
    return [(p, q, -(p + q))]


_BUILDERS: dict[str, Callable[[], HomogeneousSpaceSpec]] = {}


def _register(id_, fn):
    _BUILDERS[id_] = fn


@lru_cache(maxsize=None)
def _build(id_: str) -> HomogeneousSpaceSpec:
    if id_.startswith("aloff_wallach"):
        p, q = _parse_pair(id_)
        return su_space(3, _aw_h(p, q), name=id_)
    if id_.startswith("so4_slope"):
        p, q = _parse_pair(id_)
        return so4_space((p, q), name=id_)
    if id_ not in _BUILDERS:
        raise KeyError(f"unknown or model-only space id: {id_}")
    return _BUILDERS[id_]()


def _parse_pair(id_):
    try:
        inside = id_[id_.index("(") + 1 : id_.index(")")]
        p, q = (int(s) for s in inside.split(","))
    except ValueError as exc:
        raise KeyError(f"malformed parameters in {id_!r}; expected e.g. aloff_wallach(1,1)") from exc
    return p, q


_register("su2", su2_space)
_register("su3_full_flag", lambda: su_space(3, [(1, -1, 0), (1, 1, -2)], name="su3_full_flag"))
_register("su3_group", lambda: su_space(3, [], name="su3_group"))
_register(
    "su4_full_flag", lambda: su_space(4, [(1, -1, 0, 0), (1, 1, -2, 0), (1, 1, 1, -3)], name="su4_full_flag")
)
_register("su4_group", lambda: su_space(4, [], name="su4_group"))
_register("su4_over_t2", lambda: su_space(4, SU4_T2_H, name="su4_over_t2"))
_register("su4_over_s1", lambda: su_space(4, SU4_T1_H, name="su4_over_s1"))
_register("so4_full_flag", lambda: so4_space(None, name="so4_full_flag"))
_register("so4_group", lambda: so4_space("group", name="so4_group"))


def catalog() -> list[CatalogEntry]:
    p3 = _sun_perms(3)
    p4 = _sun_perms(4)
    g2 = g2_model()
    ke3 = {"ke": (SU3_KE, "closed form, Kähler-Einstein", 1), "normal": (np.ones(3), "normal metric", 2)}
    ke4 = {"ke": (SU4_KE, "closed form, Kähler-Einstein", 2)}
    so4e = {"normal": (np.ones(2), "normal metric", 1)}
    entries = [
        CatalogEntry("su2", "structure_constants", lambda: _build("su2"), fibration_of="S^2", q=0,
                     description="SU(2) as a circle bundle over S^2"),
        CatalogEntry("su3_full_flag", "structure_constants", lambda: _build("su3_full_flag"), ke3, 1, p3,
                     model=sun_model(3), description="SU(3)/T^2"),
        CatalogEntry("su3_group", "structure_constants", lambda: _build("su3_group"), ke3, None, p3,
                     fibration_of="su3_full_flag", q=1, description="T^2 -> SU(3) -> SU(3)/T^2"),
        CatalogEntry("aloff_wallach(1,1)", "structure_constants", lambda: _build("aloff_wallach(1,1)"), ke3,
                     None, p3, fibration_of="su3_full_flag", q=1, description="S^1 -> SU(3)/S^1_{p,q} -> SU(3)/T^2"),
        CatalogEntry("su4_full_flag", "structure_constants", lambda: _build("su4_full_flag"), ke4, 2, p4,
                     model=sun_model(4), description="SU(4)/T^3"),
        CatalogEntry("su4_group", "structure_constants", lambda: _build("su4_group"), ke4, None, p4,
                     fibration_of="su4_full_flag", q=2, description="T^3 -> SU(4) -> SU(4)/T^3"),
        CatalogEntry("su4_over_t2", "structure_constants", lambda: _build("su4_over_t2"), ke4, None, p4,
                     fibration_of="su4_full_flag", q=2, description="T^1 -> SU(4)/T^2 -> SU(4)/T^3"),
        CatalogEntry("su4_over_s1", "structure_constants", lambda: _build("su4_over_s1"), ke4, None, p4,
                     fibration_of="su4_full_flag", q=2, description="T^2 -> SU(4)/S^1 -> SU(4)/T^3"),
        CatalogEntry("g2_full_flag", "diagonal_scalar_model", None,
                     {"ke": (G2_KE, "closed form, Kähler-Einstein", 1)}, 1, (tuple(range(6)),), model=g2,
                     description="G2/T^2 (scalar model only)"),
        CatalogEntry("so4_full_flag", "structure_constants", lambda: _build("so4_full_flag"), so4e, 1,
                     ((0, 1), (1, 0)), model=so4_model(), description="SO(4)/T^2"),
        CatalogEntry("so4_group", "structure_constants", lambda: _build("so4_group"), so4e, None,
                     ((0, 1), (1, 0)), fibration_of="so4_full_flag", q=1, description="T^2 -> SO(4) -> SO(4)/T^2"),
        CatalogEntry("so4_slope(1,2)", "structure_constants", lambda: _build("so4_slope(1,2)"), so4e, None,
                     ((0, 1), (1, 0)), fibration_of="so4_full_flag", q=1,
                     description="S^1 -> SO(4)/S^1_{p,q} -> SO(4)/T^2"),
    ]
    for n in (3, 4, 5, 6):
        entries.append(
            CatalogEntry(f"sun_flag({n})", "diagonal_scalar_model", None,
                         {"normal": (np.ones(n * (n - 1) // 2), "normal metric", n - 1)}, n - 1, _sun_perms(n),
                         model=sun_model(n), description=f"SU({n})/T^{n - 1} (scalar model)")
        )
    return entries


def get_entry(id_: str) -> CatalogEntry:
    for e in catalog():
        if e.id == id_:
            return e
    # parameterized families
    if id_.startswith("aloff_wallach") or id_.startswith("so4_slope"):
        _parse_pair(id_)
        base = "su3_full_flag" if id_.startswith("aloff") else "so4_full_flag"
        ref = get_entry(base)
        return CatalogEntry(id_, "structure_constants", lambda: _build(id_), ref.known_einstein, None,
                            ref.symmetry_permutations, fibration_of=base, q=ref.known_coindex)
    if id_.startswith("sun_flag("):
        n = int(id_[len("sun_flag(") : -1])
        return CatalogEntry(id_, "diagonal_scalar_model", None,
                            {"normal": (np.ones(n * (n - 1) // 2), "normal metric", n - 1)}, n - 1,
                            _sun_perms(n), model=sun_model(n))
    raise KeyError(f"unknown space id: {id_}")


def get_space(id_: str) -> HomogeneousSpaceSpec:
    return _build(id_)


def diagonal_scal(entry: CatalogEntry | DiagonalModel, x) -> float:
    """Normalized scalar curvature of the diagonal metric with coefficients x."""
    model = entry if isinstance(entry, DiagonalModel) else entry.model
    if model is None:
        raise ValueError(f"{entry.id} has no diagonal scalar model")
    return model.normalized_scal(x)
