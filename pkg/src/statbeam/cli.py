"""Command-line front end: SNR sweeps, beamformer designs and validation suites.

Scenario files are single JSON documents::

    {
      "users": 2,
      "covariances": [
        {"type": "exponential-correlation", "r": 0.5, "scale": 1.0},
        {"type": "random-spectrum", "eigenvalues": [2.0, 0.5], "seed": 3},
        {"type": "inline", "re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]}
      ],
      "snr_grid_db": [0, 10, 20],
      "mc_samples": 100000,
      "seed": 1,
      "methods": ["closed-form", "monte-carlo", "design-high-snr"],
      "beamformers": "low-snr"
    }

``beamformers`` (optional, default ``"low-snr"``) selects the vectors the
rate methods evaluate: a design tag or an explicit list of
``{"re": [...], "im": [...]}`` vectors. ``design-*`` methods instead
evaluate the closed-form rates of the named design at each SNR point.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import (
    BeamformerSet,
    ChannelError,
    CovarianceMatrix,
    exponential_correlation,
    random_spectrum_covariance,
)
from .design import (
    DesignError,
    DesignResult,
    design_common_basis,
    design_high_snr_m2,
    design_low_snr,
    fixed_point_design,
    grid_search_oracle_m2,
)
from .montecarlo import MIN_RATE_SAMPLES, mc_ergodic_rate
from .numerics import NumericsError
from .rates import (
    RateError,
    asymptotic_report,
    closed_form_report,
    high_snr_report,
    low_snr_report,
)
from .validation import SUITES, run_suite

RATE_METHODS = ("closed-form", "monte-carlo", "low-snr", "high-snr", "large-M")
DESIGN_TAGS = {
    "low-snr": "low-snr",
    "high-snr": "high-snr-gev",
    "high-snr-gev": "high-snr-gev",
    "common-basis": "common-basis",
    "grid-oracle": "grid-oracle",
    "fixed-point": "fixed-point",
}
SWEEP_METHODS = RATE_METHODS + tuple(f"design-{t}" for t in DESIGN_TAGS)
CSV_COLUMNS = ("snr_db", "user", "method", "rate_nats", "stderr", "sum_rate_nats")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

    def to_json(self) -> dict:
        return {"error": "invalid-config", "field": self.field, "message": self.message}


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

def _number(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(field, "must be finite")
    return value


def _integer(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    return value


def _matrix(value, field: str, dim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(field, "expected a square array of numbers") from None
    if arr.shape != (dim, dim):
        raise ConfigError(field, f"expected shape ({dim}, {dim}), got {arr.shape}")
    return arr


def parse_covariance(spec, m: int, field: str) -> CovarianceMatrix:
    """Build one covariance from its JSON description."""
    if isinstance(spec, list):
        spec = {"type": "inline", "re": spec}
    if not isinstance(spec, dict):
        raise ConfigError(field, "expected an object or a nested list")
    kind = spec.get("type", "inline")
    try:
        if kind == "inline":
            if "re" not in spec:
                raise ConfigError(f"{field}.re", "inline covariance needs 're'")
            re_part = _matrix(spec["re"], f"{field}.re", m)
            im_part = _matrix(spec.get("im", np.zeros((m, m))), f"{field}.im", m)
            return CovarianceMatrix(re_part + 1j * im_part)
        if kind == "exponential-correlation":
            if "r" not in spec:
                raise ConfigError(f"{field}.r", "missing correlation coefficient")
            r = _number(spec["r"], f"{field}.r")
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"{field}.r", "must lie in [0, 1)")
            scale = _number(spec.get("scale", 1.0), f"{field}.scale")
            if scale <= 0:
                raise ConfigError(f"{field}.scale", "must be positive")
            angle = _number(spec.get("angle", 0.0), f"{field}.angle")
            return exponential_correlation(m, r, scale=scale, angle=angle)
        if kind == "random-spectrum":
            if "eigenvalues" not in spec:
                raise ConfigError(f"{field}.eigenvalues", "missing eigenvalues")
            eig = spec["eigenvalues"]
            if not isinstance(eig, list) or len(eig) != m:
                raise ConfigError(f"{field}.eigenvalues", f"expected a list of {m} numbers")
            lam = [_number(v, f"{field}.eigenvalues[{k}]") for k, v in enumerate(eig)]
            if min(lam) < 0:
                raise ConfigError(f"{field}.eigenvalues", "must be nonnegative")
            seed = _integer(spec.get("seed", 0), f"{field}.seed")
            return random_spectrum_covariance(lam, np.random.default_rng(seed))
    except (ChannelError, NumericsError) as exc:
        raise ConfigError(field, str(exc)) from None
    raise ConfigError(f"{field}.type", f"unknown covariance type {kind!r}")


def _parse_beamformers(spec, m: int):
    if spec is None:
        return "low-snr"
    if isinstance(spec, str):
        if spec not in DESIGN_TAGS:
            raise ConfigError("beamformers", f"unknown design tag {spec!r}")
        return spec
    if not isinstance(spec, list) or len(spec) != m:
        raise ConfigError("beamformers", f"expected a design tag or a list of {m} vectors")
    cols = []
    for k, item in enumerate(spec):
        field = f"beamformers[{k}]"
        if not isinstance(item, dict) or "re" not in item:
            raise ConfigError(field, "expected {'re': [...], 'im': [...]}")
        re_part = np.asarray(item["re"], dtype=float)
        im_part = np.asarray(item.get("im", np.zeros(m)), dtype=float)
        if re_part.shape != (m,) or im_part.shape != (m,):
            raise ConfigError(field, f"expected vectors of length {m}")
        cols.append(re_part + 1j * im_part)
    try:
        return BeamformerSet.from_list(cols)
    except ChannelError as exc:
        raise ConfigError("beamformers", str(exc)) from None


@dataclass
class ScenarioConfig:
    users: int
    covariances: list
    snr_grid_db: list
    mc_samples: int
    seed: int
    methods: list
    beamformers: object = "low-snr"
    workers: int = 1

    @classmethod
    def from_json(cls, doc) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "expected a JSON object")
        if "users" not in doc:
            raise ConfigError("users", "missing")
        m = _integer(doc["users"], "users")
        if m < 2:
            raise ConfigError("users", "need at least two users")
        covs = doc.get("covariances")
        if not isinstance(covs, list):
            raise ConfigError("covariances", "expected a list")
        if len(covs) != m:
            raise ConfigError("covariances", f"expected {m} entries (one per user), got {len(covs)}")
        sigmas = [parse_covariance(c, m, f"covariances[{k}]") for k, c in enumerate(covs)]
        grid = doc.get("snr_grid_db")
        if not isinstance(grid, list) or not grid:
            raise ConfigError("snr_grid_db", "expected a nonempty list")
        grid = [_number(v, f"snr_grid_db[{k}]") for k, v in enumerate(grid)]
        methods = doc.get("methods", ["closed-form"])
        if not isinstance(methods, list) or not methods:
            raise ConfigError("methods", "expected a nonempty list")
        for k, name in enumerate(methods):
            if name not in SWEEP_METHODS:
                raise ConfigError(f"methods[{k}]", f"unknown method {name!r}")
        if len(set(methods)) != len(methods):
            raise ConfigError("methods", "duplicate entries")
        samples = _integer(doc.get("mc_samples", 100_000), "mc_samples")
        if "monte-carlo" in methods and samples < MIN_RATE_SAMPLES:
            raise ConfigError("mc_samples", f"must be at least {MIN_RATE_SAMPLES} for monte-carlo")
        seed = _integer(doc.get("seed", 0), "seed")
        workers = _integer(doc.get("workers", 1), "workers")
        if workers < 1:
            raise ConfigError("workers", "must be at least 1")
        return cls(users=m, covariances=sigmas, snr_grid_db=grid, mc_samples=samples, seed=seed,
                   methods=list(methods), beamformers=_parse_beamformers(doc.get("beamformers"), m),
                   workers=workers)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        return cls.from_json(doc)


# ---------------------------------------------------------------------------
# Designs and sweeps
# ---------------------------------------------------------------------------

def run_design(config: ScenarioConfig, tag: str, rho: Optional[float]) -> DesignResult:
    """Run the design named by ``tag`` (see ``DESIGN_TAGS``) on the scenario."""
    method = DESIGN_TAGS.get(tag)
    sig = config.covariances
    if method is None:
        raise DesignError(f"unknown design method {tag!r}")
    if method == "low-snr":
        return design_low_snr(sig, rho)
    if method == "fixed-point":
        if rho is None:
            raise DesignError("fixed-point design needs an SNR")
        return fixed_point_design(sig, rho)
    if config.users != 2:
        raise DesignError(f"{method} design needs M = 2 (scenario has M = {config.users})")
    if method == "high-snr-gev":
        return design_high_snr_m2(*sig)
    if method == "common-basis":
        return design_common_basis(*sig)
    return grid_search_oracle_m2(sig[0], sig[1], rho)


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    user: int
    method: str
    rate: Optional[float]
    stderr: Optional[float]
    sum_rate: Optional[float]


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.12g}"


def _point(config: ScenarioConfig, snr_db: float, method: str):
    """All rows for one (snr, method) point, or a skip reason."""
    rho = 10.0 ** (snr_db / 10.0)
    sig = config.covariances
    if method.startswith("design-"):
        ws = run_design(config, method[len("design-"):], rho).ws
        report = closed_form_report(sig, ws, rho)
        return report.per_user, None
    ws = config.beamformers
    if isinstance(ws, str):
        ws = run_design(config, ws, rho).ws
    if method == "closed-form":
        return closed_form_report(sig, ws, rho).per_user, None
    if method == "monte-carlo":
        est = [mc_ergodic_rate(sig, ws, i, rho, config.mc_samples, config.seed)
               for i in range(config.users)]
        return np.array([e.mean for e in est]), np.array([e.stderr for e in est])
    if method == "low-snr":
        return low_snr_report(sig, ws, rho).per_user, None
    if method == "high-snr":
        return high_snr_report(sig, ws).per_user, None
    return asymptotic_report(sig, ws, rho).per_user, None


def run_sweep(config: ScenarioConfig, workers: Optional[int] = None):
    """Evaluate every (snr, method) point; return ``(rows, warnings)``.

    Points run concurrently but rows come back sorted by
    ``(snr_db, user, method order in the config)``, so the output does not
    depend on ``workers``.
    """
    workers = config.workers if workers is None else workers
    tasks = [(snr, method) for snr in config.snr_grid_db for method in config.methods]

    def evaluate(task):
        snr, method = task
        try:
            return _point(config, snr, method), None
        except (RateError, DesignError, ChannelError, NumericsError) as exc:
            return None, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, tasks))
    else:
        results = [evaluate(t) for t in tasks]

    rows, warnings = [], []
    order = {name: k for k, name in enumerate(config.methods)}
    for (snr, method), (value, problem) in zip(tasks, results):
        if value is None:
            warnings.append(f"{method} at {_fmt(snr)} dB skipped: {problem}")
            rows.extend(SweepRow(snr, u, method, None, None, None) for u in range(config.users))
            continue
        rates, errs = value
        total = math.fsum(float(r) for r in rates)
        for u in range(config.users):
            rows.append(SweepRow(snr, u, method, float(rates[u]),
                                 None if errs is None else float(errs[u]), total))
    rows.sort(key=lambda r: (r.snr_db, r.user, order[r.method]))
    return rows, warnings


def format_csv(rows, warnings) -> str:
    buf = io.StringIO()
    buf.write("# rho = 10^(snr_db/10): linear total transmit power, split equally over users\n")
    buf.write("# rates in nats/s/Hz; stderr is reported for monte-carlo rows only\n")
    for w in warnings:
        buf.write(f"# warning: {w}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.snr_db), r.user, r.method, _fmt(r.rate), _fmt(r.stderr),
                         _fmt(r.sum_rate)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _cmd_sweep(args) -> int:
    config = ScenarioConfig.load(args.config)
    rows, warnings = run_sweep(config, args.workers)
    _write(args.out, format_csv(rows, warnings))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_FAILED if warnings else EXIT_OK


def _cmd_design(args) -> int:
    config = ScenarioConfig.load(args.config)
    snr = args.snr_db if args.snr_db is not None else config.snr_grid_db[0]
    rho = 10.0 ** (snr / 10.0)
    method = DESIGN_TAGS.get(args.method)
    if method in ("high-snr-gev", "common-basis"):
        rho = None
    elif method == "grid-oracle" and args.high_snr:
        rho = None
    try:
        result = run_design(config, args.method, rho)
    except (DesignError, ChannelError, NumericsError, RateError) as exc:
        print(json.dumps({"error": "design-failed", "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILED
    _write(args.out, json.dumps(result.to_json(), indent=2) + "\n")
    return EXIT_OK


def _cmd_validate(args) -> int:
    tags = list(SUITES) if args.suite == "all" else [args.suite]
    reports = [run_suite(t) for t in tags]
    for r in reports:
        print(r.line())
    doc = reports[0].to_json() if len(reports) == 1 else [r.to_json() for r in reports]
    if args.out:
        _write(args.out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statbeam",
                                     description="Statistical beamforming rates, designs and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="evaluate rate methods over an SNR grid, write CSV")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--workers", type=int, default=None,
                       help="concurrent sweep points (default: config 'workers' or 1)")
    sweep.set_defaults(func=_cmd_sweep)

    design = sub.add_parser("design", help="compute beamformers, write JSON")
    design.add_argument("--config", required=True)
    design.add_argument("--method", required=True, choices=sorted(DESIGN_TAGS))
    design.add_argument("--out", required=True)
    design.add_argument("--snr-db", type=float, default=None,
                        help="operating SNR (default: first entry of snr_grid_db)")
    design.add_argument("--high-snr", action="store_true",
                        help="grid oracle maximizes the high-SNR asymptote")
    design.set_defaults(func=_cmd_design)

    validate = sub.add_parser("validate", help="run an oracle validation suite")
    validate.add_argument("--suite", required=True, choices=sorted(SUITES) + ["all"])
    validate.add_argument("--out", default=None)
    validate.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps(exc.to_json()), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
