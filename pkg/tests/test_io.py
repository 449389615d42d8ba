import json

import numpy as np
import pytest

from rflab.algebra import triple_coefficients, validate
from rflab.catalog import get_space
from rflab.curvature import ricci
from rflab.io import SpaceFormatError, load_space, save_space, space_from_dict, space_to_dict

from conftest import random_submersion_metric


@pytest.mark.parametrize("space_id", ["su2", "su3_full_flag", "aloff_wallach(1,2)", "so4_group"])
def test_round_trip(space_id, tmp_path, rng):
    sp = get_space(space_id)
    path = tmp_path / "space.json"
    save_space(sp, path)
    back = load_space(path)
    assert back.name == sp.name
    assert np.array_equal(back.algebra.c, sp.algebra.c)
    assert np.array_equal(back.algebra.Q, sp.algebra.Q)
    assert back.toral_split == sp.toral_split
    assert validate(back).passed
    assert np.allclose(triple_coefficients(back), triple_coefficients(sp))
    if sp.has_fibration:
        P = random_submersion_metric(sp, rng)
        assert np.allclose(ricci(back, P), ricci(sp, P), atol=1e-13)


def test_half_entries_are_completed():
    d = {"dim": 3, "Q": np.eye(3).tolist(), "modules": [[0], [1], [2]],
         "structure_constants": [[0, 1, 2, 1.0], [1, 2, 0, 1.0], [2, 0, 1, 1.0]]}
    sp = space_from_dict(d, "su2_handwritten")
    assert sp.algebra.c[1, 0, 2] == -1.0
    assert validate(sp).passed


def test_inconsistent_pair_rejected():
    d = {"dim": 3, "Q": np.eye(3).tolist(), "modules": [[0], [1], [2]],
         "structure_constants": [[0, 1, 2, 1.0], [1, 0, 2, 1.0]]}
    with pytest.raises(SpaceFormatError):
        space_from_dict(d)


@pytest.mark.parametrize(
    "patch",
    [
        {"dim": 3, "Q": np.eye(3).tolist(), "modules": [[0], [1], [2]], "structure_constants": [[0, 1, 2]]},
        {"dim": 3, "Q": np.eye(3).tolist(), "modules": [[0], [1], [2]], "structure_constants": [[0, 1, 5, 1.0]]},
        {"dim": 3, "Q": np.eye(3).tolist(), "structure_constants": []},
    ],
)
def test_malformed_rejected(patch):
    with pytest.raises(SpaceFormatError):
        space_from_dict(patch)


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SpaceFormatError):
        load_space(p)


def test_dict_is_json_serializable():
    json.dumps(space_to_dict(get_space("su4_over_s1")))
