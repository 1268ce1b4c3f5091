import pytest

from kamcap.interval import Interval

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(criterion, ok, detail=""):
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running pipeline or orbit scans")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split()[0].rstrip(".")), k)):
        ok, detail = ACCEPTANCE[key]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {key}  {detail}")


@pytest.fixture(scope="session")
def small_pipeline():
    """eps = 0.0005, R_I = 4, explicit norms computed up to order 7."""
    from kamcap.model import ModelConfig, build_H0
    from kamcap.normalizer import normalize
    cfg = ModelConfig.from_strings(eps="0.0005", R_I=4)
    st, info = build_H0(cfg)
    Hn, arts, led = normalize(st, 4, S=7)
    return {"cfg": cfg, "H0": st, "info": info, "H": Hn, "arts": arts, "ledger": led}


@pytest.fixture(scope="session")
def integrable_pipeline():
    """eps = 0 with R_I = 2."""
    from kamcap.model import ModelConfig, build_H0
    from kamcap.normalizer import normalize
    cfg = ModelConfig.from_strings(eps="0", R_I=2)
    st, info = build_H0(cfg)
    Hn, arts, led = normalize(st, 2)
    return {"cfg": cfg, "H0": st, "info": info, "H": Hn, "arts": arts, "ledger": led}


def encloses(x: Interval, value) -> bool:
    return bool(float(x.lo) <= value <= float(x.hi))
