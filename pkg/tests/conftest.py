import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=100, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")

# filled by test_acceptance, echoed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def ti_setup():
    """Offline network trained on the default TI experiment, plus its validation trials."""
    from semiadapt.eval import ExperimentConfig, _load_classes, _train_model, split_dataset

    cfg = ExperimentConfig(system="ti")
    train_trials, val = split_dataset(cfg, _load_classes(cfg))
    model, history = _train_model(cfg, cfg.hidden_dims, train_trials)
    return cfg, model, history, val


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
