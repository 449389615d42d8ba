import numpy as np
import pytest
from hypothesis import settings

from rflab.catalog import get_space

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

FIBRATIONS = [
    "su2",
    "su3_group",
    "aloff_wallach(1,1)",
    "aloff_wallach(1,2)",
    "su4_group",
    "su4_over_t2",
    "su4_over_s1",
    "so4_group",
    "so4_slope(1,2)",
]

STRUCTURE_SPACES = ["su3_full_flag", "su4_full_flag", "so4_full_flag", *FIBRATIONS]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def su3_flag():
    return get_space("su3_full_flag")


@pytest.fixture(scope="session")
def su3_group():
    return get_space("su3_group")


def diag_metric(space, x):
    """Block-diagonal metric with scaling x_i on module i."""
    return np.diag(np.repeat(np.asarray(x, float), space.module_dims))


def random_submersion_metric(space, rng, vertical_scale=1.0):
    """Random positive submersion metric built from the submersion basis."""
    from rflab.algebra import invariant_sym_basis

    b = invariant_sym_basis(space, submersion=True)
    td = space.frame.t_dim
    P = b.metric(rng.normal(size=len(b)))
    Pt, Pn = P[:td, :td], P[td:, td:]
    # squares and identity shifts stay invariant
    P[:td, :td] = vertical_scale * (Pt @ Pt + rng.uniform(0.1, 1.0) * np.eye(td))
    P[td:, td:] = Pn @ Pn + rng.uniform(0.3, 1.5) * np.eye(len(Pn))
    return P


# acceptance results, printed once at the end of the run
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
