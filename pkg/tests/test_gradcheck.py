import numpy as np

from fcmtone import ops
from fcmtone.gradcheck import check_gradient, run_suite


def test_full_suite_passes():
    report = run_suite(tolerance=1e-3, seed=0)
    failing = [e.name for e in report.entries if not e.passed]
    assert report.passed, f"failing checks: {failing}"
    # Coverage: every kernel family appears in the suite.
    names = " ".join(e.name for e in report.entries)
    for op in (
        "conv2d",
        "relu",
        "sigmoid",
        "add",
        "concat",
        "maxpool",
        "gaussian_filter",
        "box_stats",
        "masked_features",
        "fcm_loss.acts",
        "fcm_loss.image",
        "tm_network",
    ):
        assert op in names


def test_unachievable_tolerance_fails():
    report = run_suite(tolerance=1e-9, seed=0)
    assert not report.passed


def test_report_lines_format():
    report = run_suite(tolerance=1e-3, seed=0)
    lines = report.lines()
    assert len(lines) == len(report.entries)
    assert all(("PASS" in l or "FAIL" in l) and "max_rel=" in l for l in lines)


def test_check_gradient_detects_wrong_backward():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 4, 4))
    omega = rng.standard_normal((2, 4, 4))

    def broken(x_):
        y = ops.relu(x_)
        return float((omega * y).sum()), 2.0 * ops.relu_backward(x_, omega)

    entry = check_gradient("broken", broken, x + np.sign(x) * 0.2, tolerance=1e-3)
    assert not entry.passed
