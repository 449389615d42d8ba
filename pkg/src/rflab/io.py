"""JSON space definitions.

Format::

    {"dim": n,
     "structure_constants": [[i, j, k, value], ...],
     "Q": [[...], ...],
     "h_basis": [[...], ...],
     "isotropy_generators": [[[...], ...], ...],
     "modules": [[indices], ...],
     "toral_split": r}

Structure constants are sparse; an entry (i, j, k, v) implies (j, i, k, -v)
unless that entry is given explicitly (then the two must agree).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .algebra import HomogeneousSpaceSpec, LieAlgebraSpec


class SpaceFormatError(ValueError):
    pass


def space_from_dict(d: dict, name: str = "") -> HomogeneousSpaceSpec:
    try:
        n = int(d["dim"])
        entries = d["structure_constants"]
        Q = np.asarray(d["Q"], dtype=float)
        modules = d["modules"]
    except KeyError as exc:
        raise SpaceFormatError(f"missing field {exc}") from exc
    c = np.zeros((n, n, n))
    given = set()
    for row in entries:
        if len(row) != 4:
            raise SpaceFormatError(f"structure constant entry must be [i, j, k, value], got {row}")
        i, j, k = (int(v) for v in row[:3])
        if not all(0 <= v < n for v in (i, j, k)):
            raise SpaceFormatError(f"index out of range in {row}")
        c[i, j, k] = float(row[3])
        given.add((i, j, k))
    for i, j, k in given:
        if (j, i, k) in given:
            if abs(c[i, j, k] + c[j, i, k]) > 1e-12:
                raise SpaceFormatError(f"entries ({i},{j},{k}) and ({j},{i},{k}) are not antisymmetric")
        else:
            c[j, i, k] = -c[i, j, k]
    h = np.asarray(d.get("h_basis", []), dtype=float).reshape(-1, n)
    gens = [np.asarray(g, dtype=float) for g in d.get("isotropy_generators", [])]
    mods = []
    for mod in modules:
        arr = np.asarray(mod)
        if arr.ndim == 1:
            mods.append([int(v) for v in mod])
        else:
            mods.append(np.asarray(mod, dtype=float))
    try:
        alg = LieAlgebraSpec(c, Q)
        return HomogeneousSpaceSpec(alg, h, tuple(mods), tuple(gens), d.get("toral_split"), name or d.get("name", ""))
    except ValueError as exc:
        raise SpaceFormatError(str(exc)) from exc


def space_to_dict(space: HomogeneousSpaceSpec) -> dict:
    c = space.algebra.c
    n = space.algebra.dim
    entries = []
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                if c[i, j, k] != 0.0:
                    entries.append([i, j, k, float(c[i, j, k])])
    return {
        "name": space.name,
        "dim": n,
        "structure_constants": entries,
        "Q": space.algebra.Q.tolist(),
        "h_basis": space.h_basis.tolist(),
        "isotropy_generators": [g.tolist() for g in space.isotropy_generators],
        "modules": [m.tolist() for m in space.modules],
        "toral_split": space.toral_split,
    }


def load_space(path) -> HomogeneousSpaceSpec:
    path = Path(path)
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpaceFormatError(f"{path}: {exc}") from exc
    return space_from_dict(d, d.get("name", path.stem))


def save_space(space: HomogeneousSpaceSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(space_to_dict(space), fh, indent=1)
        fh.write("\n")
