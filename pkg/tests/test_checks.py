"""The property-check suites behind the `check` command."""

import numpy as np

from gcpinn.checks import (derivative_suite, mapping_suite, mms_suite,
                           probe_suite, run_checks)


def test_mapping_suite_all_pass():
    results = mapping_suite()
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    names = {r.name for r in results}
    assert {"torus-periodicity", "radial-far-field-decay",
            "saturating-gradient-collapse", "pwl-monotone",
            "identity-neutrality"} <= names


def test_mms_suite_all_pass():
    results = mms_suite(n_points=300)
    assert all(r.passed for r in results)
    assert any(r.name == "ns-divergence-free" for r in results)


def test_probe_suite_pass():
    (res,) = probe_suite()
    assert res.passed
    assert abs(res.measured - 1e4) / 1e4 <= 0.05


def test_derivative_suite_sample():
    results = derivative_suite(n_points=25)
    assert len(results) == 2 * 5 * 6   # grad+hess x benchmarks x variants
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]


def test_run_checks_unknown_suite():
    import pytest
    with pytest.raises(ValueError):
        run_checks(["nonexistent"])


def test_check_result_line_format():
    results = probe_suite()
    line = results[0].line()
    assert line.startswith("[PASS]") or line.startswith("[FAIL]")
    assert "measured" in line
