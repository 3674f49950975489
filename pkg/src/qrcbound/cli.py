"""Command-line front end.

Every subcommand reads one JSON configuration (schema ``qrc-config-1``),
runs a pipeline and writes its artifacts into ``--out``. Files are staged in
a hidden directory inside ``--out`` and moved into place only once the whole
command succeeded, so a failing run leaves no partial outputs behind.

Exit status: 0 on success, 1 when a verification check fails, 2 on usage,
configuration or model errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import bounds as bd
from . import streams
from .coupling import build_coupler
from .errors import ConfigError, InfeasibleOptimizationError, QRCError
from .intensity import GeneralizedIntensity
from .model import ProcessSpec
from .process import simulate_batch, write_trace_csv
from .reliability import ReliabilitySpec, analyze, to_process_spec
from .verify import SIGMAS, CheckRecord, ExperimentPlan, VerificationReport, _fmt, _prop_hw, check_lorden, run_verification

SCHEMA = "qrc-config-1"
COMMANDS = ("bounds", "sample", "couple", "simulate", "verify", "reliability")
TOP_KEYS = {"schema", "model", "reliability", "laws", "run"}
RUN_KEYS = {"orders", "theta", "probes", "runs", "seed", "start", "ahat", "threads", "bins", "horizon"}
PROBE_FACTORS = (2.5, 5.0, 10.0, 20.0)
KS_LEVEL = 0.01


@contextmanager
def _at(path: str):
    """Re-raise parsing errors as :class:`ConfigError` tagged with the field path."""
    try:
        yield
    except ConfigError:
        raise
    except (QRCError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _floats(v, path, positive=False):
    with _at(path):
        if isinstance(v, (int, float)):
            v = [v]
        out = tuple(float(x) for x in v)
    if positive and any(not x > 0 for x in out):
        raise ConfigError(f"{path}: values must be positive")
    return out


@dataclass
class RunConfig:
    """Parsed configuration; ``to_dict`` gives the canonical form."""

    model: ProcessSpec | None = None
    reliability: ReliabilitySpec | None = None
    laws: tuple = ()
    orders: tuple = (1.0,)
    theta: float | str = "auto"
    probes: tuple = ()
    runs: int = 10_000
    seed: int = 0
    start: tuple | None = None
    ahat: tuple | None = None
    threads: int = 1
    bins: int = 64
    horizon: float | None = None

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be an object")
        if d.get("schema") != SCHEMA:
            raise ConfigError(f"schema: expected {SCHEMA!r}, got {d.get('schema')!r}")
        unknown = set(d) - TOP_KEYS
        if unknown:
            raise ConfigError(f"config: unknown blocks {sorted(unknown)}")
        cfg = cls()
        if "model" in d:
            with _at("model"):
                cfg.model = ProcessSpec.from_dict(d["model"])
                cfg.model.validate()
        if "reliability" in d:
            with _at("reliability"):
                cfg.reliability = ReliabilitySpec.from_dict(d["reliability"])
        laws = d.get("laws", [])
        if not isinstance(laws, list):
            raise ConfigError("laws: must be a list of intensities")
        cfg.laws = tuple(_law(x, f"laws[{i}]") for i, x in enumerate(laws))
        run = d.get("run", {})
        if not isinstance(run, dict):
            raise ConfigError("run: must be an object")
        unknown = set(run) - RUN_KEYS
        if unknown:
            raise ConfigError(f"run: unknown fields {sorted(unknown)}")
        cfg.apply(run, "run")
        return cfg

    def apply(self, run: dict, where: str) -> None:
        """Overlay run parameters (from the config or the command line)."""
        if run.get("orders") is not None:
            self.orders = _floats(run["orders"], f"{where}.orders", positive=True)
        if run.get("theta") is not None:
            t = run["theta"]
            if t != "auto":
                (t,) = _floats(t, f"{where}.theta", positive=True)
            self.theta = t
        if run.get("probes") is not None:
            p = tuple(sorted(_floats(run["probes"], f"{where}.probes", positive=True)))
            if len(set(p)) != len(p):
                raise ConfigError(f"{where}.probes: values must be distinct")
            self.probes = p
        for key, lo in (("runs", 1), ("seed", 0), ("threads", 1), ("bins", 16)):
            if run.get(key) is not None:
                with _at(f"{where}.{key}"):
                    v = run[key]
                    if isinstance(v, bool) or float(v) != int(v):
                        raise ValueError(f"expected an integer, got {v!r}")
                    v = int(v)
                if v < lo:
                    raise ConfigError(f"{where}.{key}: must be >= {lo}")
                setattr(self, key, v)
        for key in ("start", "ahat"):
            if run.get(key) is not None:
                v = _floats(run[key], f"{where}.{key}")
                if any(x < 0 for x in v):
                    raise ConfigError(f"{where}.{key}: elapsed times must be >= 0")
                setattr(self, key, v)
        if run.get("horizon") is not None:
            (self.horizon,) = _floats(run["horizon"], f"{where}.horizon", positive=True)

    def to_dict(self) -> dict:
        d: dict = {"schema": SCHEMA}
        if self.model is not None:
            d["model"] = self.model.to_dict()
        if self.reliability is not None:
            d["reliability"] = self.reliability.to_dict()
        if self.laws:
            d["laws"] = [g.to_dict() for g in self.laws]
        run = {
            "orders": list(self.orders),
            "theta": self.theta,
            "probes": list(self.probes),
            "runs": self.runs,
            "seed": self.seed,
            "threads": self.threads,
            "bins": self.bins,
        }
        for key in ("start", "ahat"):
            if getattr(self, key) is not None:
                run[key] = list(getattr(self, key))
        if self.horizon is not None:
            run["horizon"] = self.horizon
        d["run"] = run
        return d

    def process_spec(self) -> ProcessSpec:
        if self.model is not None:
            return self.model
        if self.reliability is not None:
            return to_process_spec(self.reliability)
        raise ConfigError("model: this command needs a model or reliability block")

    def default_probes(self, spec: ProcessSpec) -> tuple:
        if self.probes:
            return self.probes
        xi = bd.xi_bound(spec, 1.0)
        if not math.isfinite(xi):
            raise ConfigError("run.probes: required when Xi(1) is infinite")
        return tuple(c * xi for c in PROBE_FACTORS)


def _law(d, path) -> GeneralizedIntensity:
    with _at(path):
        return GeneralizedIntensity.from_dict(d)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# output staging
# ---------------------------------------------------------------------------


class Outputs:
    """Files written into a staging directory, published together on success."""

    def __init__(self, out: str):
        self.out = out
        self.files: dict[str, object] = {}

    def text(self, name: str, content: str):
        self.files[name] = ("text", content)

    def rows(self, name: str, header, rows):
        self.files[name] = ("csv", header, list(rows))

    def call(self, name: str, fn):
        self.files[name] = ("call", fn)

    def publish(self) -> None:
        os.makedirs(self.out, exist_ok=True)
        stage = tempfile.mkdtemp(prefix=".staging-", dir=self.out)
        try:
            for name, item in self.files.items():
                path = os.path.join(stage, name)
                if item[0] == "text":
                    with open(path, "w", encoding="utf-8", newline="\n") as fh:
                        fh.write(item[1])
                elif item[0] == "csv":
                    with open(path, "w", newline="") as fh:
                        w = csv.writer(fh, lineterminator="\n")
                        w.writerow(item[1])
                        w.writerows(item[2])
                else:
                    item[1](path)
            for name in self.files:
                os.replace(os.path.join(stage, name), os.path.join(self.out, name))
        finally:
            shutil.rmtree(stage, ignore_errors=True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _bound_rows(spec: ProcessSpec, cfg: RunConfig):
    orders = [N for N in cfg.orders if N <= spec.k - 1 + 1e-12]
    rows = [("Xi", f"Xi({N:g})", bd.xi_bound(spec, N), 1e-8) for N in cfg.orders]
    rows.append(("Xi", "classical E xi^2 / E xi", bd.classical_lorden(spec.phi), 1e-8))
    note = ""
    xi = bd.xi_bound(spec, 1.0)
    if cfg.theta != "auto" and math.isfinite(xi) and cfg.theta <= xi:
        raise ConfigError(f"theta: must exceed Xi(1) = {xi:.6g}")
    try:
        lb = bd.compute_bounds(spec, cfg.theta, min(orders) if orders else 1.0)
    except (InfeasibleOptimizationError, ValueError) as exc:
        note = str(exc)
        rows.extend(("constant", f"K({N:g})", math.inf, 0.0) for N in cfg.orders)
        return rows, note
    start = cfg.start or (0.0,) * spec.m
    for N in orders:
        lb.K(N)
        rows.extend(lb.breakdowns[N].rows())
        rows.append(("moment bound", f"T(a)_{N:g} a={list(start)}", lb.T_of_a(start, N), 1e-6))
    seen = set()
    rows = [r for r in rows if not (r[1] in seen or seen.add(r[1]))]
    return rows, note


def cmd_bounds(cfg: RunConfig, out: Outputs) -> int:
    spec = cfg.process_spec()
    rows, note = _bound_rows(spec, cfg)
    out.rows("bounds.csv", ["quantity", "name", "value", "tolerance"], [(q, n, _fmt(v), _fmt(t)) for q, n, v, t in rows])
    lines = [f"{n} = {_fmt(v)}" for _, n, v, _ in rows]
    if note:
        lines.append(f"infinite bound: {note}")
    out.text("summary.txt", "\n".join(lines) + "\n")
    return 0


def _laws(cfg: RunConfig) -> tuple:
    if cfg.laws:
        return cfg.laws
    if cfg.model is not None:
        return (cfg.model.phi,)
    raise ConfigError("laws: this command needs a laws block")


def _ks_record(name, x, cdf):
    n = len(x)
    d = float(stats.kstest(x, cdf).statistic)
    crit = float(stats.kstwo.ppf(1.0 - KS_LEVEL, n))
    return CheckRecord.judge(name, crit, d, 0.0, note=f"KS statistic vs 1% critical value, n={n}")


def cmd_sample(cfg: RunConfig, out: Outputs) -> int:
    laws = _laws(cfg)
    rep = VerificationReport()
    samples = []
    for i, gi in enumerate(laws):
        x = gi.sample(streams.stream(cfg.seed, i), cfg.runs)
        samples.append(x)
        fin = x[np.isfinite(x)]
        mean = gi.moment(1)
        if math.isfinite(mean) and fin.size == x.size and x.size > 1:
            hw = SIGMAS * fin.std(ddof=1) / math.sqrt(fin.size)
            rep.records.append(CheckRecord.judge(f"mean law {i}", mean, fin.mean(), hw))
            rep.records.append(CheckRecord.judge(f"mean law {i} (lower)", mean, fin.mean(), hw, kind="lower"))
        if not gi.atom_locs and fin.size == x.size and x.size > 1:
            rep.records.append(_ks_record(f"KS law {i}", x, gi.cdf))
        rep.quantities[f"E law {i}"] = mean
    out.rows(
        "samples.csv",
        ["law", "index", "value"],
        ((i, j, _fmt(v)) for i, x in enumerate(samples) for j, v in enumerate(x)),
    )
    out.call("report.csv", rep.to_csv)
    out.text("summary.txt", rep.summary())
    return 1 if rep.failed else 0


def cmd_couple(cfg: RunConfig, out: Outputs) -> int:
    laws = _laws(cfg)
    if len(laws) < 2:
        raise ConfigError("laws: coupling needs at least two laws")
    c = build_coupler([g.view() for g in laws])
    values, common = c.joint_sample(streams.stream(cfg.seed, 0), cfg.runs)
    rate = float(common.mean())
    hw = _prop_hw(rate, cfg.runs)
    rep = VerificationReport()
    rep.quantities["kappa"] = c.kappa
    rep.records.append(CheckRecord.judge("coincidence rate", c.kappa, rate, hw))
    rep.records.append(CheckRecord.judge("coincidence rate (lower)", c.kappa, rate, hw, kind="lower"))
    for i, gi in enumerate(laws):
        if not gi.atom_locs:
            rep.records.append(_ks_record(f"KS marginal {i}", values[:, i], gi.cdf))
    out.rows(
        "samples.csv",
        ["draw"] + [f"law_{i}" for i in range(len(laws))] + ["coincided"],
        ([j, *map(_fmt, row), int(k)] for j, (row, k) in enumerate(zip(values, common))),
    )
    out.call("report.csv", rep.to_csv)
    out.text("summary.txt", f"kappa = {_fmt(c.kappa)}\ncoincidence rate = {_fmt(rate)} +- {_fmt(hw)}\n" + rep.summary())
    return 1 if rep.failed else 0


def _plan(cfg: RunConfig, spec: ProcessSpec) -> ExperimentPlan:
    with _at("run"):
        return ExperimentPlan(
            spec,
            cfg.default_probes(spec),
            cfg.runs,
            cfg.seed,
            cfg.bins,
            cfg.orders,
            cfg.theta,
            cfg.horizon,
            cfg.start,
        )


def cmd_simulate(cfg: RunConfig, out: Outputs) -> int:
    spec = cfg.process_spec()
    plan = _plan(cfg, spec)
    batch = simulate_batch(spec, plan.start, plan.probes, plan.runs, plan.seed)
    rep = VerificationReport()
    rep.add(check_lorden(plan, batch))
    for N in plan.valid_orders():
        rep.quantities[f"Xi({N:g})"] = bd.xi_bound(spec, N)
    out.call("trace.csv", lambda p: write_trace_csv(p, batch.rows()))
    out.call("report.csv", rep.to_csv)
    out.text("summary.txt", rep.summary())
    return 1 if rep.failed else 0


def cmd_verify(cfg: RunConfig, out: Outputs) -> int:
    spec = cfg.process_spec()
    plan = _plan(cfg, spec)
    rep = run_verification(plan, cfg.start, cfg.ahat)
    rows, _ = _bound_rows(spec, cfg)
    out.rows("bounds.csv", ["quantity", "name", "value", "tolerance"], [(q, n, _fmt(v), _fmt(t)) for q, n, v, t in rows])
    out.call("report.csv", rep.to_csv)
    out.call("tv.csv", rep.tv_to_csv)
    out.text("summary.txt", rep.summary())
    return 1 if rep.failed else 0


def cmd_reliability(cfg: RunConfig, out: Outputs) -> int:
    if cfg.reliability is None:
        raise ConfigError("reliability: this command needs a reliability block")
    with _at("run"):
        res = analyze(cfg.reliability, cfg.orders, cfg.runs, cfg.seed, cfg.probes or None, cfg.theta)
    out.call("report.csv", res.report.to_csv)
    out.call("tv.csv", res.report.tv_to_csv)
    out.text("summary.txt", res.summary())
    return 1 if res.report.failed else 0


HANDLERS = {
    "bounds": cmd_bounds,
    "sample": cmd_sample,
    "couple": cmd_couple,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "reliability": cmd_reliability,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrcbound", description="Convergence-rate bounds for quasi-renewal processes.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="JSON configuration (schema qrc-config-1)")
    p.add_argument("--order", type=float, action="append", metavar="N", help="moment order (repeatable)")
    p.add_argument("--theta", metavar="VALUE|auto", help="renewal threshold or 'auto'")
    p.add_argument("--runs", type=int, metavar="N")
    p.add_argument("--probes", metavar="t1,t2,...", help="comma separated probe times")
    p.add_argument("--seed", type=int, metavar="S")
    p.add_argument("--threads", type=int, metavar="T", help="cap on worker threads")
    p.add_argument("--out", default="out", metavar="DIR", help="output directory (default: out)")
    return p


def _overrides(args) -> dict:
    run = {"orders": args.order, "runs": args.runs, "seed": args.seed, "threads": args.threads}
    if args.theta is not None:
        run["theta"] = args.theta if args.theta == "auto" else _number(args.theta, "--theta")
    if args.probes is not None:
        run["probes"] = [_number(x, "--probes") for x in args.probes.split(",") if x.strip()]
    return run


def _number(text: str, flag: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{flag}: not a number: {text!r}") from None


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg.apply(_overrides(args), "flags")
        streams.set_workers(cfg.threads)
        out = Outputs(args.out)
        status = HANDLERS[args.command](cfg, out)
        out.publish()
        return status
    except (QRCError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        streams.set_workers(1)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
