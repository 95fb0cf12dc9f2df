import pytest

from bbrsim.cc import BBR_V1_VARIANTS
from bbrsim.harness import experiments as E


class PacingAudit:
    """send_hook that checks pacing_rate == pacing_gain * bw on every v1 send."""

    def __init__(self):
        self.checked = 0
        self.violations = 0

    def __call__(self, sender, now):
        cc = sender.cc
        if cc.name not in BBR_V1_VARIANTS or cc.bw <= 0:
            return
        self.checked += 1
        if cc.pacing_rate != cc.pacing_gain * cc.bw:
            self.violations += 1


# one shared result per configuration for the whole session
RUNS = {}


def cached_run(scenario, case, algo, loss=0.0, seed=1):
    key = (scenario, case, algo, loss, seed)
    if key not in RUNS:
        cfg = E.resolve_config(scenario, case, algo, loss=loss, seed=seed)
        audit = PacingAudit()
        summary = E.run_experiment(cfg, send_hook=audit)
        summary.extra["pacing_audit"] = audit
        RUNS[key] = summary
    return RUNS[key]


@pytest.fixture(scope="session")
def run():
    return cached_run


# criterion number -> (passed, detail); filled by test_acceptance
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
