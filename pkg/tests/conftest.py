import numpy as np
import pytest
import torch

from sst.dgcg import ArchitectureConfig, init_params
from sst.signals import WindowSet

_CRITERIA = {}


def pytest_configure(config):
    torch.set_num_threads(1)


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    if report.when == "call" or report.outcome != "passed":
        previous = _CRITERIA.get(key)
        if previous is None or previous[0] == "PASS":
            detail = props.get("detail", "")
            _CRITERIA[key] = ("PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k.split()[0])):
        outcome, detail = _CRITERIA[key]
        line = f"criterion {key}: {outcome}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    """Reduced network config (input 64) used for gradient and shape checks."""
    return ArchitectureConfig.standard(64, channels=(4, 8), mapping_blocks=1, mapping_kernel=3,
                                       edge_kernel=5, resample_kernel=4, critic_channels=(4, 8),
                                       critic_kernel=4, output_scale=3.0)


@pytest.fixture
def tiny_state(tiny_arch):
    return init_params(tiny_arch, seed=7)


def make_windows(data, label, sample_rate=256.0, structure="toy"):
    data = np.atleast_2d(data)
    prov = np.column_stack([np.zeros(len(data), int), np.arange(len(data))])
    return WindowSet(data.shape[1], data, prov, sample_rate, structure, label)
