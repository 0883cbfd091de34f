"""Acceptance criteria, one test each.

Every test records a single ``[PASS]`` or ``[FAIL]`` line at the stated
tolerance; the lines are repeated in the terminal summary. Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import shutil
import subprocess
import sys

import pytest

from statbeam.validation import (
    suite_closed_form_vs_mc,
    suite_common_basis,
    suite_density_uniform,
    suite_fixed_point,
    suite_general_m,
    suite_high_snr_asymptote,
    suite_high_snr_oracle,
    suite_low_snr_oracle,
    suite_per_user_bound,
    suite_special_functions,
    suite_asymptotic_m,
)


def _check(acceptance_line, criterion, *reports):
    passed = all(r.passed for r in reports)
    acceptance_line(criterion, passed, "; ".join(f"{r.suite}: {r.summary.detail}" for r in reports))
    failing = [c for r in reports for c in r.checks if not c.passed]
    assert passed, "\n".join(str(c) for c in failing) or "summary check failed"


@pytest.mark.acceptance
class TestAcceptance:
    def test_01_closed_form_vs_monte_carlo(self, acceptance_line):
        _check(acceptance_line, 1, suite_closed_form_vs_mc())

    def test_02_general_m_formula(self, acceptance_line):
        _check(acceptance_line, 2, suite_general_m())

    def test_03_uniform_density(self, acceptance_line):
        _check(acceptance_line, 3, suite_density_uniform())

    def test_04_low_snr_optimality(self, acceptance_line):
        _check(acceptance_line, 4, suite_low_snr_oracle())

    def test_05_high_snr_optimality(self, acceptance_line):
        _check(acceptance_line, 5, suite_high_snr_oracle(), suite_common_basis())

    def test_06_high_snr_asymptote(self, acceptance_line):
        _check(acceptance_line, 6, suite_high_snr_asymptote())

    def test_07_special_functions(self, acceptance_line):
        _check(acceptance_line, 7, suite_special_functions())

    def test_08_asymptotic_m_convergence(self, acceptance_line):
        _check(acceptance_line, 8, suite_asymptotic_m())

    def test_09_fixed_point_stationarity(self, acceptance_line):
        _check(acceptance_line, 9, suite_fixed_point())

    def test_10_per_user_bound(self, acceptance_line):
        _check(acceptance_line, 10, suite_per_user_bound())

    def test_11_sweep_determinism(self, acceptance_line, tmp_path):
        config = tmp_path / "scenario.json"
        config.write_text("""{
          "users": 2,
          "covariances": [
            {"type": "exponential-correlation", "r": 0.7, "scale": 1.0},
            {"type": "random-spectrum", "eigenvalues": [3.0, 0.4], "seed": 12}
          ],
          "snr_grid_db": [-10, 0, 10, 20, 30],
          "mc_samples": 100000,
          "seed": 2024,
          "methods": ["closed-form", "monte-carlo", "low-snr", "high-snr", "large-M",
                      "design-high-snr", "design-fixed-point"]
        }""")
        exe = shutil.which("statbeam")
        base = [exe] if exe else [sys.executable, "-m", "statbeam.cli"]
        outputs = []
        for k, workers in enumerate(("1", "4")):
            out = tmp_path / f"run{k}.csv"
            proc = subprocess.run(base + ["sweep", "--config", str(config), "--out", str(out),
                                          "--workers", workers], capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outputs.append(out.read_bytes())
        same = outputs[0] == outputs[1]
        rows = outputs[0].decode().count("\n")
        acceptance_line(11, same, f"sweep CSV byte-identical with 1 and 4 workers ({rows} lines)")
        assert same
