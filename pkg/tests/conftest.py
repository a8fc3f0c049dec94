import pytest

from dtacopula.data import builtin_dataset, design_matrix
from dtacopula.models import ModelSpec, build_model
from dtacopula.sampler import ChainConfig, run_chains


@pytest.fixture(scope="session")
def telomerase():
    return builtin_dataset("telomerase")


@pytest.fixture(scope="session")
def short_gauss_fit(telomerase):
    """A short two-chain gauss fit; enough draws for summaries, not for inference."""
    model = build_model(ModelSpec("gauss", design_matrix(telomerase, "intercept")), telomerase)
    draws = run_chains(model, ChainConfig(chains=2, iter=160, warmup=80, seed=3))
    return model, draws


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = mod.report_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
