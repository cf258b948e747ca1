import numpy as np
import pytest

from hrne.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


def rand_lstm(rng, D, H, scale=1.0):
    from hrne.recurrent import lstm_param_shapes
    return {k: rng.uniform(-scale, scale, s) for k, s in lstm_param_shapes(D, H).items()}


def rand_attention(rng, Dx, Dh, S=None, scale=1.0):
    from hrne.attention import attention_param_shapes
    return {k: rng.uniform(-scale, scale, s) for k, s in attention_param_shapes(Dx, Dh, S).items()}


def assert_grads_match(analytic, numeric, tol=1e-4):
    from hrne.numerics import max_relative_error
    assert set(analytic) == set(numeric)
    for name in analytic:
        err = max_relative_error(analytic[name], numeric[name])
        assert err <= tol, f"{name}: max relative error {err:.3e}"


# Acceptance verdicts, echoed once more at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
