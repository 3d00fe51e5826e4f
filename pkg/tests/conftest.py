import numpy as np
import pytest

import confcal as cc

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # touch every kernel once so JIT compilation (when the numba backend is
    # active) happens outside the timed acceptance budgets
    ds = cc.generate_synthetic(3, 6, 2, 5, 0.2, seed=0)
    table = cc.human_confidence_table(ds)
    cfg = cc.TrainConfig(
        epochs=2,
        batch_size=8,
        hidden=(3,),
        loss_kind="hcls",
        strategy="hccl",
        smoothing=cc.SmoothingConfig(alpha=0.1, gamma=0.1),
        curriculum=cc.CurriculumParams(r=0.5, end_epoch=1),
        seed=0,
    )
    result = cc.train(ds, cfg, human_confidence=table)
    probs = np.stack([p for _, p, _ in cc.predict_all(result.model, ds)])
    cc.make_report(probs, ds.modal_labels(), 5)
    cc.uniform_smooth(np.array([1.0, 0.0]), 0.1)
    cc.mc_smooth(
        np.array([1.0, 0.0]), np.array([0.7, 0.3]), cc.SmoothingConfig(0.1, 0.2)
    )


@pytest.fixture
def acceptance():
    """Record one pass/fail line per criterion for the terminal summary."""

    def check(num: int, name: str, ok: bool, detail: str = ""):
        verdict = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail and not ok else ""
        ACCEPTANCE_LINES.append(f"ACCEPTANCE {num} {name}: {verdict}{suffix}")
        assert ok, f"acceptance criterion {num} ({name}) failed {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
