import csv
import json

import numpy as np
import pytest

from rflab.catalog import (
    catalog,
    closed_form_so4,
    closed_form_su3,
    closed_form_su4,
    diagonal_scal,
    get_entry,
    get_space,
)
from rflab.cli import main
from rflab.einstein import DiagonalBackend, StructureBackend, normalized_scal
from rflab.io import save_space

from conftest import diag_metric


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# --- catalog -----------------------------------------------------------------


def test_catalog_ids_unique_and_resolvable():
    ids = [e.id for e in catalog()]
    assert len(ids) == len(set(ids))
    for e in catalog():
        assert get_entry(e.id).id == e.id
        if e.representation == "structure_constants":
            assert get_space(e.id).dim > 0
        else:
            assert e.model is not None


def test_unknown_ids():
    with pytest.raises(KeyError):
        get_entry("su7_blob")
    with pytest.raises(KeyError):
        get_space("aloff_wallach(1)")
    assert get_entry("aloff_wallach(2,3)").fibration_of == "su3_full_flag"
    assert get_entry("sun_flag(5)").model.n == 10


@pytest.mark.parametrize("entry", [e for e in catalog() if e.known_einstein], ids=lambda e: e.id)
def test_known_points_are_einstein(entry):
    for tag, (y, prov, coindex) in entry.known_einstein.items():
        if entry.model is not None:
            be = DiagonalBackend(entry.model)
            assert np.linalg.norm(be.residual(y)) < 1e-9, tag
        if entry.representation == "structure_constants" and entry.fibration_of is None:
            be = StructureBackend(get_space(entry.id))
            assert np.linalg.norm(be.residual(y)) < 1e-9, tag


@pytest.mark.parametrize(
    "space_id,closed",
    [("su3_full_flag", closed_form_su3), ("su4_full_flag", closed_form_su4), ("so4_full_flag", closed_form_so4)],
)
def test_closed_forms_match_engine(space_id, closed, rng):
    sp = get_space(space_id)
    e = get_entry(space_id)
    for _ in range(20):
        x = rng.uniform(0.2, 4.0, size=len(sp.module_dims))
        eng = normalized_scal(sp, diag_metric(sp, x))
        assert closed(x) == pytest.approx(eng, rel=1e-11)
        assert diagonal_scal(e, x) == pytest.approx(eng, rel=1e-11)


def test_symmetry_permutations_preserve_scal(rng):
    for id_ in ("su3_full_flag", "su4_full_flag", "g2_full_flag", "sun_flag(5)"):
        e = get_entry(id_)
        x = rng.uniform(0.3, 3.0, size=e.model.n)
        for p in e.symmetry_permutations:
            assert e.model.normalized_scal(x[list(p)]) == pytest.approx(e.model.normalized_scal(x), rel=1e-12)


def test_diagonal_scal_requires_model():
    with pytest.raises(ValueError):
        diagonal_scal(get_entry("su3_group"), [1, 1, 1])


# --- CLI ---------------------------------------------------------------------


def test_cli_validate(capsys):
    code, out, _ = run(capsys, "validate", "so4_full_flag")
    assert code == 0
    assert json.loads(out)["passed"] is True
    code, out, _ = run(capsys, "validate", "g2_full_flag")
    assert code == 0


def test_cli_validate_failure(capsys, tmp_path):
    sp = get_space("su3_full_flag")
    from rflab.algebra import HomogeneousSpaceSpec, LieAlgebraSpec

    c = sp.algebra.c.copy()
    c[2, 3] *= 1.5
    c[3, 2] *= 1.5
    bad = HomogeneousSpaceSpec(LieAlgebraSpec(c, sp.algebra.Q), sp.h_basis, sp.modules, name="bad")
    path = tmp_path / "bad.json"
    save_space(bad, path)
    code, out, _ = run(capsys, "validate", str(path))
    assert code == 1
    assert json.loads(out)["checks"]["jacobi"]["passed"] is False


def test_cli_einstein(capsys):
    code, out, _ = run(capsys, "einstein", "su3_full_flag", "--seeds", "4")
    assert code == 0
    pts = json.loads(out)
    assert {p["coindex"] for p in pts} == {1, 2}
    ke = next(p for p in pts if p["coindex"] == 1)
    assert sorted(ke["hessian_spectrum"]) == pytest.approx([-1 / 3, 0, 4 / 3], abs=1e-5)


def test_cli_coindex(capsys):
    code, out, _ = run(capsys, "coindex", "su4_full_flag", "--at", "ke")
    assert code == 0 and json.loads(out)["coindex"] == 2
    code, out, _ = run(capsys, "coindex", "su3_full_flag", "--at", "1,2,3")
    assert code == 1 and "warning" in json.loads(out)
    code, out, _ = run(capsys, "coindex", "su3_full_flag", "--at", "1,1,1")
    assert code == 0 and json.loads(out)["coindex"] == 2


def test_cli_flow_and_plotdata(capsys, tmp_path):
    prefix = tmp_path / "run"
    code, out, _ = run(capsys, "flow", "su3_group", "--kind", "prf", "--from", "1/10,0,1/10,1,1,2",
                       "--base", "ke", "--t1", "0.5", "--out", str(prefix))
    assert code == 0
    info = json.loads(out)
    man = json.loads(open(info["manifest"]).read())
    assert man["status"] == "horizon" and man["tool_version"]
    assert len(man["config_hash"]) == 16
    rows = list(csv.reader(open(info["csv"])))
    assert rows[0][-1] == "rho" and len(rows) == man["n_samples"] + 1
    code, out, _ = run(capsys, "plotdata", info["csv"], "--columns", "t,scal", "--max-points", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "t,scal" and 2 <= len(lines) - 1 <= 4
    assert lines[-1].split(",")[0] == rows[-1][0]


def test_cli_flow_nrf_normalizes(capsys, tmp_path):
    code, out, _ = run(capsys, "flow", "so4_full_flag", "--kind", "nrf", "--from", "4,1", "--t1", "-2",
                       "--out", str(tmp_path / "n"))
    assert code == 0
    rows = list(csv.reader(open(json.loads(out)["csv"])))
    x = np.array(rows[1][1:3], float)
    assert np.prod(x) ** 2 == pytest.approx(1.0, rel=1e-12)
    assert float(rows[-1][0]) == pytest.approx(-2.0)


def test_cli_ancient(capsys, tmp_path):
    out_path = tmp_path / "anc.jsonl"
    code, out, _ = run(capsys, "ancient", "su3_group", "--base-einstein", "ke", "--dir", "1,0,1,0",
                       "--forward", "1", "--out", str(out_path), "--trajectories")
    assert code == 0
    rep = json.loads(out)
    assert rep["linearization"]["unstable_dim"] == 4 and rep["accepted"] == 1
    recs = [json.loads(line) for line in open(out_path)]
    assert recs[0]["accepted"] and recs[0]["verification"]["passed"]
    assert open(recs[0]["trajectory_csv"]).readline().startswith("t,")


def test_cli_ancient_precondition(capsys, tmp_path):
    code, out, _ = run(capsys, "ancient", "su3_group", "--base-einstein", "ke", "--dir=-1,0,-1,0",
                       "--out", str(tmp_path / "a.jsonl"))
    assert code == 1
    assert json.loads(out)["rejected_precondition"] == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["validate", "nosuchspace"],
        ["coindex", "su3_full_flag", "--at", "1,x,2"],
        ["coindex", "su3_full_flag", "--at", "1,2"],
        ["flow", "su3_group", "--kind", "prf", "--from", "1,0,1,1,1,2", "--t1", "1"],
        ["flow", "su3_full_flag", "--kind", "rf", "--from", "1,1,1", "--t1", "0"],
        ["flow", "g2_full_flag", "--kind", "rf", "--from", "1,1,1,1,1,1", "--t1", "1"],
        ["ancient", "su3_full_flag", "--base-einstein", "ke"],
        ["ancient", "su3_group", "--base-einstein", "1,2,3"],
        ["ancient", "su3_group", "--base-einstein", "ke", "--eps", "0.5"],
        ["plotdata", "/nonexistent.csv"],
    ],
)
def test_cli_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "error" in err


def test_cli_argparse_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["flow", "su3_group"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
