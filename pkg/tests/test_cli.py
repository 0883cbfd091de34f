import csv
import io
import json

import numpy as np
import pytest

from statbeam.cli import (
    ConfigError,
    ScenarioConfig,
    format_csv,
    main,
    parse_covariance,
    run_sweep,
)


def base_config(**overrides):
    doc = {
        "users": 2,
        "covariances": [
            {"type": "exponential-correlation", "r": 0.5, "scale": 1.0},
            {"type": "random-spectrum", "eigenvalues": [2.0, 0.5], "seed": 3},
        ],
        "snr_grid_db": [0, 10],
        "mc_samples": 50_000,
        "seed": 1,
        "methods": ["closed-form"],
    }
    doc.update(overrides)
    return doc


def read_rows(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def write_config(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestConfig:
    @pytest.mark.parametrize("patch,field", [
        ({"users": 1}, "users"),
        ({"users": "two"}, "users"),
        ({"covariances": [[[1, 0], [0, 1]]]}, "covariances"),
        ({"snr_grid_db": []}, "snr_grid_db"),
        ({"snr_grid_db": [0, "x"]}, "snr_grid_db[1]"),
        ({"methods": ["closed-form", "psychic"]}, "methods[1]"),
        ({"methods": ["closed-form", "closed-form"]}, "methods"),
        ({"methods": ["monte-carlo"], "mc_samples": 10}, "mc_samples"),
        ({"workers": 0}, "workers"),
        ({"beamformers": "nonsense"}, "beamformers"),
        ({"beamformers": [{"re": [1, 0]}, {"re": [1, 1]}]}, "beamformers"),
    ])
    def test_errors_name_field(self, patch, field):
        with pytest.raises(ConfigError) as info:
            ScenarioConfig.from_json(base_config(**patch))
        assert info.value.field == field

    def test_missing_users(self):
        doc = base_config()
        del doc["users"]
        with pytest.raises(ConfigError) as info:
            ScenarioConfig.from_json(doc)
        assert info.value.field == "users"

    @pytest.mark.parametrize("spec,field", [
        ({"type": "exponential-correlation", "r": 1.0}, "covariances[0].r"),
        ({"type": "exponential-correlation", "r": 0.2, "scale": -1}, "covariances[0].scale"),
        ({"type": "random-spectrum", "eigenvalues": [1.0]}, "covariances[0].eigenvalues"),
        ({"type": "random-spectrum", "eigenvalues": [1.0, -1.0]}, "covariances[0].eigenvalues"),
        ({"type": "inline", "re": [[1, 2], [3, 1]]}, "covariances[0]"),
        ({"type": "inline", "re": [[1, 0, 0]]}, "covariances[0].re"),
        ({"type": "wishart"}, "covariances[0].type"),
    ])
    def test_covariance_errors(self, spec, field):
        with pytest.raises(ConfigError) as info:
            parse_covariance(spec, 2, "covariances[0]")
        assert info.value.field == field

    def test_covariance_forms(self):
        inline = parse_covariance([[2, 0.5], [0.5, 1]], 2, "c")
        np.testing.assert_allclose(inline.entries, [[2, 0.5], [0.5, 1]])
        cplx = parse_covariance({"re": [[1, 0], [0, 1]], "im": [[0, 0.2], [-0.2, 0]]}, 2, "c")
        assert cplx.entries[0, 1] == 0.2j
        expc = parse_covariance({"type": "exponential-correlation", "r": 0.5, "scale": 2}, 2, "c")
        np.testing.assert_allclose(expc.entries, [[2, 1], [1, 2]])
        rs = parse_covariance({"type": "random-spectrum", "eigenvalues": [3, 1], "seed": 4}, 2, "c")
        np.testing.assert_allclose(rs.eigenvalues, [3, 1], rtol=1e-12)

    def test_cli_reports_config_error(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config(snr_grid_db=[]))
        code = main(["sweep", "--config", path, "--out", str(tmp_path / "o.csv")])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err == {"error": "invalid-config", "field": "snr_grid_db", "message": "expected a nonempty list"}

    def test_unreadable_file(self, tmp_path, capsys):
        code = main(["sweep", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.csv")])
        assert code == 2
        assert json.loads(capsys.readouterr().err)["field"] == "<file>"


class TestSweep:
    def test_identity_symmetric_rows(self):
        doc = base_config(covariances=[[[1, 0], [0, 1]], [[1, 0], [0, 1]]], snr_grid_db=[0],
                          beamformers=[{"re": [1, 0]}, {"re": [0, 1]}])
        rows, warnings = run_sweep(ScenarioConfig.from_json(doc))
        assert not warnings and len(rows) == 2
        assert rows[0].rate == rows[1].rate
        assert rows[0].sum_rate == pytest.approx(2 * rows[0].rate)

    def test_closed_form_vs_monte_carlo(self):
        doc = base_config(methods=["closed-form", "monte-carlo"], mc_samples=200_000)
        rows, _ = run_sweep(ScenarioConfig.from_json(doc))
        closed = {(r.snr_db, r.user): r.rate for r in rows if r.method == "closed-form"}
        for r in rows:
            if r.method == "monte-carlo":
                assert abs(r.rate - closed[(r.snr_db, r.user)]) <= 3 * r.stderr

    def test_high_snr_design_beats_low_snr_design(self):
        doc = base_config(snr_grid_db=[60], methods=["design-high-snr", "design-low-snr"])
        rows, warnings = run_sweep(ScenarioConfig.from_json(doc))
        assert not warnings
        sums = {r.method: r.sum_rate for r in rows}
        assert sums["design-high-snr"] >= sums["design-low-snr"] - 1e-9

    def test_unsupported_point_becomes_warning_row(self):
        doc = base_config(users=3, covariances=[{"type": "exponential-correlation", "r": 0.3}] * 3,
                          snr_grid_db=[10], methods=["closed-form", "high-snr"])
        rows, warnings = run_sweep(ScenarioConfig.from_json(doc))
        assert len(warnings) == 1 and "high-snr" in warnings[0]
        skipped = [r for r in rows if r.method == "high-snr"]
        assert len(skipped) == 3 and all(r.rate is None for r in skipped)
        text = format_csv(rows, warnings)
        assert "# warning: high-snr at 10 dB skipped" in text
        parsed = read_rows(text)
        assert [p["rate_nats"] for p in parsed if p["method"] == "high-snr"] == ["", "", ""]

    def test_row_order_and_header(self):
        doc = base_config(methods=["low-snr", "closed-form", "large-M"])
        rows, warnings = run_sweep(ScenarioConfig.from_json(doc))
        text = format_csv(rows, warnings)
        lines = text.splitlines()
        assert lines[0].startswith("# rho = 10^(snr_db/10)")
        assert lines[2] == "snr_db,user,method,rate_nats,stderr,sum_rate_nats"
        keys = [(float(p["snr_db"]), int(p["user"]), p["method"]) for p in read_rows(text)]
        rank = {"low-snr": 0, "closed-form": 1, "large-M": 2}
        assert keys == sorted(keys, key=lambda k: (k[0], k[1], rank[k[2]]))
        assert len(keys) == 2 * 2 * 3

    def test_twelve_significant_digits(self):
        rows, warnings = run_sweep(ScenarioConfig.from_json(base_config(snr_grid_db=[3])))
        parsed = read_rows(format_csv(rows, warnings))
        assert parsed[0]["rate_nats"] == f"{rows[0].rate:.12g}"

    def test_byte_identical_across_workers(self, tmp_path):
        doc = base_config(methods=["closed-form", "monte-carlo", "large-M"], snr_grid_db=[0, 5, 10])
        path = write_config(tmp_path, doc)
        outs = []
        for k, workers in enumerate(["1", "3", "1"]):
            out = tmp_path / f"out{k}.csv"
            assert main(["sweep", "--config", path, "--out", str(out), "--workers", workers]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_exit_code_on_skip(self, tmp_path):
        doc = base_config(users=3, covariances=[{"type": "exponential-correlation", "r": 0.3}] * 3,
                          snr_grid_db=[10], methods=["high-snr"])
        path = write_config(tmp_path, doc)
        assert main(["sweep", "--config", path, "--out", str(tmp_path / "o.csv")]) == 1


class TestDesignCommand:
    def test_writes_json(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = tmp_path / "design.json"
        assert main(["design", "--config", path, "--method", "high-snr-gev", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["method"] == "high-snr-gev"
        assert set(doc) == {"method", "beamformers", "objective_nats", "diagnostics"}
        w = np.array([np.array(b["re"]) + 1j * np.array(b["im"]) for b in doc["beamformers"]])
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0, atol=1e-12)

    def test_fixed_point(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = tmp_path / "fp.json"
        assert main(["design", "--config", path, "--method", "fixed-point", "--out", str(out),
                     "--snr-db", "10"]) == 0
        assert json.loads(out.read_text())["diagnostics"]["converged"] is True

    def test_design_failure(self, tmp_path, capsys):
        doc = base_config(users=3, covariances=[{"type": "exponential-correlation", "r": 0.3}] * 3)
        path = write_config(tmp_path, doc)
        code = main(["design", "--config", path, "--method", "high-snr", "--out", str(tmp_path / "d.json")])
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "design-failed"


class TestValidateCommand:
    def test_density_suite(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        assert main(["validate", "--suite", "density-uniform", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["passed"] is True and len(doc["checks"]) == 10
        assert capsys.readouterr().out.startswith("[PASS] density-uniform")

    def test_unknown_suite(self):
        with pytest.raises(SystemExit):
            main(["validate", "--suite", "vibes"])
