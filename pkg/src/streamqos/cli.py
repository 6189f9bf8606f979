"""Command-line driver: scenario generation, analytic sweeps, Monte Carlo
throughput and event simulation, each writing plot-ready CSV files.

Every command is driven by a JSON config (all fields optional) whose values
can be overridden by flags. Outputs are deterministic given the config.

Exit codes: 0 success, 1 usage, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from streamqos import desim, lte
from streamqos.analytic import InversionParams, class_metrics
from streamqos.montecarlo import McParams, throughput_sweep
from streamqos.policy import PolicyParams
from streamqos.traffic import RadioLink, TrafficMix

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

SCHEMAS = {
    "analyze": "streamqos.analyze/1",
    "throughput": "streamqos.throughput/1",
    "simulate": "streamqos.simulate/1",
    "compare": "streamqos.compare/1",
    "sinr_cdf": "streamqos.sinr_cdf/1",
}

ANALYZE_COLUMNS = [
    "class", "sinr_db", "phi", "P_k", "muD_k", "M_k_direct", "M_k_kr",
    "Lambda_k", "sigma_up", "sigma_out", "M_k_printed",
]
THROUGHPUT_COLUMNS = [
    "class", "T_k_bps", "T_k_norm", "Tprime_k_bps", "deep_outage_frac", "stderr_T", "stderr_Tprime",
]
SIMULATE_COLUMNS = [
    "class", "calls", "P_k", "P_k_hw", "muD_k", "muD_k_hw", "M_k", "M_k_hw",
    "deep_outage_frac", "deep_outage_frac_hw", "T_k_bps", "T_k_bps_hw",
    "Lambda_k", "Lambda_k_hw", "sigma_up", "sigma_out",
]
COMPARE_COLUMNS = ["class", "metric", "analytic", "simulated", "half_width", "z", "status"]


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    scenario: lte.RadioScenario = field(default_factory=lte.RadioScenario)
    grid: lte.ClassGrid = field(default_factory=lte.ClassGrid)
    seed: int = 0
    densities: list = field(default_factory=lambda: [900.0, 600.0])
    deltas: list = field(default_factory=lambda: [0.0, 0.1, 0.5, 1.0, math.inf])
    requested_rate_bps: float = 256e3
    mean_duration: float = 1.0
    gamma: float = 0.5
    bandwidth_hz: float = 10e6
    cdf: str | None = None
    mixes: list = field(default_factory=list)
    inversion: InversionParams = field(default_factory=InversionParams)
    quantum: float = 1e-4
    increments: str = "lesf"
    samples: int = 20_000
    mc_batches: int = 100
    horizon: float = 1e4
    warmup: float | None = None
    sim_batches: int = 50
    arrivals: list = field(default_factory=lambda: ["poisson"])
    service: str = "exponential"
    sigma_log: float = 1.0
    alpha: float = 0.0027
    out: str = "."

    @property
    def link(self) -> RadioLink:
        return RadioLink(self.gamma, self.bandwidth_hz)


def parse_delta(value) -> float:
    try:
        return PolicyParams.parse(value).delta
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid delta {value!r}: {exc}") from None


def _parse_list(text: str, conv) -> list:
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError(f"empty list {text!r}")
    return [conv(s) for s in items]


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"config file {path} does not exist")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: top level must be an object")
    doc = dict(doc)
    base = p.parent
    if "scenario" in doc:
        cfg.scenario = lte.RadioScenario.from_dict(doc.pop("scenario"))
    if "grid" in doc:
        cfg.grid = lte.ClassGrid(**doc.pop("grid"))
    if "inversion" in doc:
        cfg.inversion = InversionParams(**doc.pop("inversion"))
    if "deltas" in doc:
        cfg.deltas = [parse_delta(d) for d in doc.pop("deltas")]
    for key in ("cdf",):
        if doc.get(key) is not None:
            setattr(cfg, key, str(base / doc.pop(key)))
    if "mixes" in doc:
        cfg.mixes = [str(base / m) for m in doc.pop("mixes")]
    if "arrivals" in doc:
        arr = doc.pop("arrivals")
        cfg.arrivals = [arr] if isinstance(arr, str) else list(arr)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    for key, value in doc.items():
        setattr(cfg, key, value)
    cfg.densities = [float(d) for d in cfg.densities]
    return cfg


def validate(cfg: RunConfig) -> None:
    if not 0 <= int(cfg.seed) < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if any(not (d > 0 and math.isfinite(d)) for d in cfg.densities):
        raise ValueError("densities must be positive")
    if any(math.isnan(d) or d < 0 for d in cfg.deltas):
        raise ValueError("deltas must be >= 0")
    if not cfg.quantum > 0:
        raise ValueError("quantum must be positive")
    if cfg.increments not in ("lesf", "printed"):
        raise ValueError("increments must be 'lesf' or 'printed'")
    if int(cfg.samples) < 1:
        raise ValueError("samples must be >= 1")
    if not (cfg.horizon > 0 and math.isfinite(cfg.horizon)):
        raise ValueError("horizon must be positive and finite")
    if cfg.warmup is not None and not 0 <= cfg.warmup < cfg.horizon:
        raise ValueError("need 0 <= warmup < horizon")
    for kind in cfg.arrivals:
        desim.ArrivalModel(kind)
    desim.ServiceModel(cfg.service, cfg.sigma_log)
    for path in [cfg.cdf, *cfg.mixes]:
        if path is not None and not Path(path).is_file():
            raise ValueError(f"referenced file {path} does not exist")
    out = Path(cfg.out)
    if not out.is_dir():
        raise ValueError(f"output directory {out} does not exist; create it first")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return "nan"
    return repr(float(x))


def write_csv(path: Path, schema: str, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _delta_label(delta: float) -> str:
    return PolicyParams(delta).label


def _density_label(d: float) -> str:
    return f"{d:g}"


def sinr_cdf(cfg: RunConfig) -> lte.EmpiricalCdf:
    if cfg.cdf is not None:
        return lte.EmpiricalCdf.from_csv(cfg.cdf)
    return lte.generate_sinr_cdf(cfg.scenario, seed=int(cfg.seed))


def build_mixes(cfg: RunConfig) -> list[tuple[str, TrafficMix]]:
    """(label, mix) pairs: explicit mix files, else one LTE mix per density."""
    if cfg.mixes:
        return [(Path(m).stem, TrafficMix.load(m)) for m in cfg.mixes]
    cdf = sinr_cdf(cfg)
    p = lte.discretize_classes(cdf, cfg.grid)
    out = []
    for d in cfg.densities:
        mix = lte.build_traffic_mix(
            p, d, cfg.grid, cfg.link, cfg.requested_rate_bps, cfg.mean_duration, cfg.scenario.cell_area_km2
        )
        out.append((f"d{_density_label(d)}", mix))
    return out


def _check_finite(name: str, values) -> None:
    arr = np.asarray(values, dtype=float)
    if np.any(np.isnan(arr)):
        raise NumericError(f"{name}: non-numeric result")


def cmd_scenario(cfg: RunConfig) -> list[Path]:
    out = Path(cfg.out)
    cdf = lte.generate_sinr_cdf(cfg.scenario, seed=int(cfg.seed))
    cdf_path = out / "sinr_cdf.csv"
    cdf.to_csv(cdf_path)
    written = [cdf_path]
    p = lte.discretize_classes(cdf, cfg.grid)
    for d in cfg.densities:
        mix = lte.build_traffic_mix(
            p, d, cfg.grid, cfg.link, cfg.requested_rate_bps, cfg.mean_duration, cfg.scenario.cell_area_km2
        )
        path = out / f"mix_d{_density_label(d)}.json"
        mix.save(path)
        written.append(path)
        print(f"{path.name}: {mix.J} classes, total traffic {mix.rho.sum():.4g} Erlang")
    return written


def cmd_analyze(cfg: RunConfig) -> list[Path]:
    written = []
    for label, mix in build_mixes(cfg):
        for delta in cfg.deltas:
            params = PolicyParams(delta)
            quantum = cfg.quantum if mix.J and cfg.quantum <= mix.phi.min() else None
            main = class_metrics(mix, params, cfg.inversion, quantum, cfg.increments)
            other = "printed" if cfg.increments == "lesf" else "lesf"
            alt = class_metrics(mix, params, cfg.inversion, None, other)
            rows = []
            for m, a in zip(main, alt):
                _check_finite(f"class {m.k}", [m.p_outage, m.mean_incidents, a.mean_incidents])
                rows.append([
                    m.k, m.sinr_db, m.phi, m.p_outage, m.norm_outage_time, m.mean_incidents,
                    m.mean_incidents_kr, m.incident_intensity, m.mean_uptime, m.mean_outage_spell,
                    a.mean_incidents if other == "printed" else m.mean_incidents,
                ])
            path = Path(cfg.out) / f"analyze_{label}_delta{_delta_label(delta)}.csv"
            write_csv(path, SCHEMAS["analyze"], ANALYZE_COLUMNS, rows)
            written.append(path)
            gaps = [abs(m.mean_incidents_kr / m.mean_incidents - 1) for m in main if m.mean_incidents > 1e-3]
            gap = f", max KR gap {max(gaps):.2%}" if gaps and quantum is not None else ""
            print(f"{path.name}: {len(rows)} classes{gap}")
    return written


def cmd_throughput(cfg: RunConfig) -> list[Path]:
    written = []
    mc = McParams(samples=int(cfg.samples), seed=int(cfg.seed), batches=int(cfg.mc_batches))
    for label, mix in build_mixes(cfg):
        for delta in cfg.deltas:
            est = throughput_sweep(mix, PolicyParams(delta), mc, cfg.inversion)
            rows = []
            for e in est:
                r = mix.rate[e.k - 1]
                _check_finite(f"class {e.k}", [e.throughput, e.deep_outage_fraction])
                rows.append([
                    e.k, e.throughput, e.throughput / r, e.outage_throughput,
                    e.deep_outage_fraction, e.stderr_throughput, e.stderr_outage_throughput,
                ])
            path = Path(cfg.out) / f"throughput_{label}_delta{_delta_label(delta)}.csv"
            write_csv(path, SCHEMAS["throughput"], THROUGHPUT_COLUMNS, rows)
            written.append(path)
            print(f"{path.name}: {len(rows)} classes")
    return written


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    written = []
    out = Path(cfg.out)
    service = desim.ServiceModel(cfg.service, cfg.sigma_log)
    for label, mix in build_mixes(cfg):
        for delta in cfg.deltas:
            params = PolicyParams(delta)
            analytic = class_metrics(mix, params, cfg.inversion, None, cfg.increments)
            for kind in cfg.arrivals:
                sim = desim.run(
                    mix, params, desim.ArrivalModel(kind), service,
                    horizon=float(cfg.horizon), warmup=cfg.warmup, seed=int(cfg.seed),
                    batches=int(cfg.sim_batches),
                )
                stem = f"simulate_{label}_delta{_delta_label(delta)}_{kind}"
                rows = [
                    [
                        c.k, c.calls, *c.p_outage, *c.norm_outage_time, *c.incidents,
                        *c.deep_outage_fraction, *c.throughput, *c.incident_intensity,
                        c.mean_uptime, c.mean_outage_spell,
                    ]
                    for c in sim.classes
                ]
                write_csv(out / f"{stem}.csv", SCHEMAS["simulate"], SIMULATE_COLUMNS, rows)
                meta = dict(sim.metadata)
                meta.update(
                    mix=label,
                    calls_completed=sim.calls_completed,
                    events_processed=sim.events_processed,
                    departure_exits=sim.departure_exits,
                )
                (out / f"{stem}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
                report = desim.compare_to_analytic(sim, analytic, cfg.alpha)
                write_csv(
                    out / f"{stem}_compare.csv", SCHEMAS["compare"], COMPARE_COLUMNS,
                    [[r.k, r.metric, r.analytic, r.simulated, r.half_width, r.z, r.status] for r in report],
                )
                written += [out / f"{stem}.csv", out / f"{stem}.json", out / f"{stem}_compare.csv"]
                n_fail = sum(r.status == "fail" for r in report)
                print(f"{stem}: {sim.calls_completed} calls, {n_fail} comparisons outside the band")
    return written


COMMANDS = {
    "scenario": cmd_scenario,
    "analyze": cmd_analyze,
    "throughput": cmd_throughput,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamqos", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    parser.add_argument("--out", help="existing output directory")
    parser.add_argument("--densities", help="comma-separated traffic densities (Erlang/km2)")
    parser.add_argument("--delta", help="comma-separated margins, 'inf' for the fair policy")
    parser.add_argument("--quantum", type=float, help="capacity quantum of the KR recursion")
    parser.add_argument("--samples", type=int, help="Monte Carlo samples per class")
    parser.add_argument("--horizon", type=float, help="simulated time")
    parser.add_argument("--mix", action="append", help="traffic mix JSON file (repeatable)")
    parser.add_argument("--increments", choices=["lesf", "printed"], help="arrival increments for M_k")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.densities is not None:
        cfg.densities = _parse_list(args.densities, float)
    if args.delta is not None:
        cfg.deltas = _parse_list(args.delta, parse_delta)
    if args.quantum is not None:
        cfg.quantum = args.quantum
    if args.samples is not None:
        cfg.samples = args.samples
    if args.horizon is not None:
        cfg.horizon = args.horizon
    if args.mix:
        cfg.mixes = list(args.mix)
    if args.increments is not None:
        cfg.increments = args.increments
    validate(cfg)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve(args)
        COMMANDS[args.command](cfg)
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
