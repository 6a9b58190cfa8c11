import numpy as np
import pytest

from compoda.config import validate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_softmax_cfg(**over):
    """d=50 softmax instance shared by several tests."""
    raw = {
        "problem": {"type": "softmax", "d": 50, "k": 256, "mu": 0.1, "seed": 0},
        "clients": {"n": 4},
        "noise": {"sigma": 0.0},
        "compressor": {"kind": "top_k", "k_frac": 0.2},
        "composite": {"kind": "l1", "lambda": 0.1},
        "algorithm": {"kind": "econtrol_da", "T": 50},
    }
    for section, values in over.items():
        if isinstance(values, dict):
            raw.setdefault(section, {}).update(values)
        else:
            raw[section] = values
    return validate(raw)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
