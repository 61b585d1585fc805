"""Batch front-end: ``sscc {simulate,analytic,compare,validate}``.

Scenario files are flat ``key = value`` text with ``#`` comments.  Output
is CSV preceded by a ``#``-prefixed manifest; data rows depend only on the
manifest, never on the wall clock or the worker count.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analytic, validation
from .model import ConfigError, Policy, SystemConfig, operating_point, validate_config
from .sim import estimate_ber

CSV_HEADER = ["snr_db", "method", "ber", "ci_low", "ci_high", "errors", "bits",
              "relay_count", "policy"]
FLAG_HEADER = ["snr_db", "relay_count", "policy", "mc_ber", "ci_low", "ci_high",
               "upper_ber", "exact_ber", "bound_violation", "ci_covers_exact"]
MC_METHOD = "monte_carlo"
DEFAULT_METHODS = ("quadrature_upper", "asymptotic_19")

SCENARIO_KEYS = (
    "qp_db", "pmax_offset_db", "n_relays", "var_sd", "var_sr", "var_rd", "var_p",
    "theta_deg", "alpha", "beta", "policy", "genie_relay",
    "snr_start_db", "snr_stop_db", "snr_step_db", "trials",
)
# SystemConfig attribute -> scenario key, for error reporting
_FIELD_KEY = {"qp": "qp_db", "pmax": "pmax_offset_db", "theta": "theta_deg"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    pmax_offset_db: float
    snr_grid: tuple[float, ...]
    trials: int
    raw: dict = field(default_factory=dict)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


_CONVERTERS = {
    "n_relays": int,
    "trials": int,
    "policy": Policy.parse,
    "genie_relay": _parse_bool,
}


def snr_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    if step <= 0:
        raise ValueError("snr_step_db must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(max(n, 0)))


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCENARIO_KEYS:
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONVERTERS.get(key, _parse_float)(value)
        except (ValueError, ConfigError) as exc:
            raise ScenarioError(f"{source}:{lineno}: cannot parse {key} = {value!r}: {exc}") from None
        lines[key] = lineno

    missing = [k for k in SCENARIO_KEYS if k not in values]
    if missing:
        raise ScenarioError(f"{source}: missing key(s): {', '.join(missing)}")

    def where(key: str) -> str:
        return f"{source}:{lines[key]}"

    if values["trials"] < 1:
        raise ScenarioError(f"{where('trials')}: trials must be positive")
    try:
        grid = snr_grid(values["snr_start_db"], values["snr_stop_db"], values["snr_step_db"])
    except ValueError as exc:
        raise ScenarioError(f"{where('snr_step_db')}: {exc}") from None

    qp = 10.0 ** (values["qp_db"] / 10.0)
    offset = values["pmax_offset_db"]
    cfg = SystemConfig(
        qp=qp,
        pmax=math.inf if math.isinf(offset) else qp * 10.0 ** (offset / 10.0),
        n_relays=values["n_relays"],
        var_sd=values["var_sd"],
        var_sr=values["var_sr"],
        var_rd=values["var_rd"],
        var_p=values["var_p"],
        theta=math.radians(values["theta_deg"]),
        alpha=values["alpha"],
        beta=values["beta"],
        policy=values["policy"],
        genie_relay=values["genie_relay"],
        clustered=values["var_sr"] == values["var_rd"],
    )
    try:
        cfg = validate_config(cfg)
    except ConfigError as exc:
        key = _FIELD_KEY.get(exc.field, exc.field)
        loc = where(key) if key in lines else source
        raise ScenarioError(f"{loc}: {key}: {exc}") from None
    return Scenario(cfg, offset, grid, values["trials"], values)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario_text(path.read_text(), str(path))


# -- output -------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def manifest_lines(args, scenario: Scenario) -> list[str]:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    lines = [
        f"sscc {__version__}",
        f"subcommand: {args.command}",
        f"timestamp: {stamp}",
        f"seed: {args.seed}",
        f"trials: {args.trials or scenario.trials}",
        f"grid_db: {','.join(_fmt(s) for s in scenario.snr_grid)}",
    ]
    if getattr(args, "methods", None):
        lines.append(f"methods: {args.methods}")
    if getattr(args, "relays", None):
        lines.append(f"relays: {args.relays}")
    if getattr(args, "policies", None):
        lines.append(f"policies: {args.policies}")
    for key in SCENARIO_KEYS:
        value = scenario.raw[key]
        if isinstance(value, Policy):
            value = value.value
        lines.append(f"scenario {key} = {value}")
    return ["# " + line for line in lines]


def write_csv(path, header_lines: list[str], columns: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    if str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _sort_rows(rows: list[list]) -> list[list]:
    return sorted(rows, key=lambda r: (r[1], r[0], r[7], r[8]))


# -- subcommands ----------------------------------------------------------------------

def _variants(args, scenario: Scenario):
    relays = [int(r) for r in args.relays.split(",")] if args.relays else [scenario.config.n_relays]
    policies = ([Policy.parse(p) for p in args.policies.split(",")] if args.policies
                else [scenario.config.policy])
    for r in relays:
        for p in policies:
            yield scenario.config.with_(n_relays=r, policy=p)


def simulate_rows(args, scenario: Scenario) -> list[list]:
    trials = args.trials or scenario.trials
    rows = []
    for cfg in _variants(args, scenario):
        for est in estimate_ber(cfg, scenario.snr_grid, trials, args.seed, scenario.pmax_offset_db):
            rows.append([est.snr_point, MC_METHOD, est.ber, est.ci_low, est.ci_high,
                         est.errors, est.bits, cfg.n_relays, cfg.policy.value])
    return rows


def analytic_rows(args, scenario: Scenario) -> list[list]:
    methods = (args.methods or ",".join(DEFAULT_METHODS)).split(",")
    rows = []
    for cfg in _variants(args, scenario):
        for m in methods:
            curve = analytic.ber_curve(cfg, scenario.snr_grid, m.strip(), scenario.pmax_offset_db)
            policy = Policy.MEAN_VALUE if curve.method.value.startswith("mv_") else cfg.policy
            for s, v in zip(curve.snr_points, curve.values):
                rows.append([s, curve.method.value, v, None, None, None, None,
                             cfg.n_relays, policy.value])
    return rows


def compare_flags(sim_rows: list[list], scenario: Scenario, args) -> list[list]:
    flags = []
    for snr, _, ber, lo, hi, _, _, relays, policy in sim_rows:
        cfg = operating_point(scenario.config.with_(n_relays=relays, policy=Policy.parse(policy)),
                              snr, scenario.pmax_offset_db)
        upper = analytic.ber_upper(cfg)
        exact = analytic.ber_exact(cfg)
        flags.append([snr, relays, policy, ber, lo, hi, upper, exact,
                      int(upper < exact - 1e-9), int(lo <= exact <= hi)])
    return sorted(flags, key=lambda r: (r[1], r[2], r[0]))


def run_subcommand(args) -> int:
    scenario = parse_scenario(args.scenario)
    header = manifest_lines(args, scenario)

    if args.command == "validate":
        cfg = scenario.config
        results = validation.run_all(cfg, seed=args.seed, pmax_offset_db=scenario.pmax_offset_db)
        rows = [[r.name, "pass" if r.passed else "FAIL", r.measured, r.threshold, r.detail]
                for r in results]
        write_csv(args.out, header, ["check", "status", "measured", "threshold", "detail"], rows)
        failed = [r.name for r in results if not r.passed]
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: measured={_fmt(r.measured)} "
                  f"threshold={_fmt(r.threshold)} {r.detail}".rstrip(), file=sys.stderr)
        if failed:
            print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
            return 1
        return 0

    if args.command == "simulate":
        rows = simulate_rows(args, scenario)
    elif args.command == "analytic":
        rows = analytic_rows(args, scenario)
    elif args.command == "compare":
        sim = simulate_rows(args, scenario)
        rows = sim + analytic_rows(args, scenario)
        if str(args.out) != "-":
            flag_path = Path(str(args.out) + ".flags.csv")
            write_csv(flag_path, header, FLAG_HEADER, compare_flags(sim, scenario, args))
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(args.command)
    write_csv(args.out, header, CSV_HEADER, _sort_rows(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sscc", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["simulate", "analytic", "compare", "validate"])
    p.add_argument("--scenario", required=True, help="key = value scenario file")
    p.add_argument("--seed", type=int, default=1, help="64-bit RNG seed")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--methods", help="comma-separated analytic methods "
                   f"({', '.join(m.value for m in analytic.Method)})")
    p.add_argument("--trials", type=int, help="override trials per SNR point")
    p.add_argument("--relays", help="comma-separated relay counts to sweep")
    p.add_argument("--policies", help="comma-separated feedback policies to sweep")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2 ** 64:
        print("error: --seed must fit in 64 unsigned bits", file=sys.stderr)
        return 2
    try:
        return run_subcommand(args)
    except (ScenarioError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
