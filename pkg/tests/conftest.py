import numpy as np
import pytest

from prebim.model import ModelParams, five_variant_params
from prebim.simulator import draw_effect

# PASS/FAIL lines from the acceptance suite, echoed again in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def five_variant():
    return five_variant_params()


def random_params(rng, g=6, confounded=True, gaussian=True):
    """Unstructured ModelParams with every coefficient drawn away from zero."""
    while True:
        bxy, byx = draw_effect(rng, 2)
        if abs(bxy * byx - 1) > 1e-3:
            break
    maf = None if gaussian else rng.uniform(0.1, 0.5, g)
    variances = rng.uniform(0.2, 1.5, g) if gaussian else 2 * maf * (1 - maf)
    return ModelParams(
        beta_xy=float(bxy),
        beta_yx=float(byx),
        gamma_x=draw_effect(rng, g),
        gamma_y=draw_effect(rng, g),
        gamma_u=draw_effect(rng, g) if confounded else np.zeros(g),
        gamma_xu=float(draw_effect(rng)),
        gamma_yu=float(draw_effect(rng)),
        variant_variances=variances,
        noise_variances=tuple(rng.uniform(0.5, 2.0, 3)),
        maf=maf,
    )
