"""Command-line interface: ``run`` a configured scan or ``validate`` the oracles.

Exit codes: 0 success, 2 configuration error, 3 infeasible source
specification, 4 failed property check.

Configuration files are flat ``key = value`` lines with dotted section names
and ``#`` comments, for example ``channel.eta_det = 0.1``. Lists are comma
separated; ``start:stop:step`` expands to an inclusive arithmetic range.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel_sim import ChannelSpec
from .concentration import empirical_tail_check, g_ma
from .decoy_estimator import (oracle_single_photon_counts, s1_lower_ZZ, sx_lower, sx_upper,
                              DecoyEpsilons)
from .key_length import KeyRateResult, default_budget
from .optimizer import CASE_I, CASE_II, Scenario, SourceTemplate, TaggingCase, evaluate, scan
from .source_model import PhaseIntervals, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_PROPERTY = 4

CSV_COLUMNS = ("length_km", "N_sent", "case", "mode", "mu_k1", "mu_k2", "S1L", "NphU", "ephU",
               "e_bit", "N_det", "lambda_EC", "ell", "rate")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> list[float]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            start, stop, step = (float(x) for x in item.split(":"))
            if step <= 0:
                raise ConfigError(f"range step must be positive: {item!r}")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            out.extend(round(start + i * step, 12) for i in range(count))
        else:
            out.append(float(item))
    if not out:
        raise ConfigError(f"empty list: {text!r}")
    return out


def _parse_cases(text: str) -> list[str]:
    cases = [c.strip() for c in text.split(",") if c.strip()]
    if not cases or any(c not in ("I", "II") for c in cases):
        raise ConfigError(f"cases must be a list drawn from I, II: {text!r}")
    return cases


SCHEMA = {
    "channel.loss_db_per_km": float,
    "channel.eta_det": float,
    "channel.p_dark": float,
    "channel.e_mis": float,
    "channel.p_B_Z": float,
    "source.theta": float,
    "source.theta_L_0Z": float,
    "source.theta_U_0Z": float,
    "source.theta_L_1Z": float,
    "source.theta_U_1Z": float,
    "source.theta_L_0X": float,
    "source.theta_U_0X": float,
    "source.r_k1": float,
    "source.r_k2": float,
    "source.mu_k3_upper": float,
    "source.p_A_Z": float,
    "source.p_k1": float,
    "source.p_k2": float,
    "source.p_k3": float,
    "source.p_fail": float,
    "security.eps_s": float,
    "security.eps_c": float,
    "tagging.case_II_rate": float,
    "scan.lengths_km": _parse_float_list,
    "scan.N_sent": _parse_float_list,
    "scan.cases": _parse_cases,
    "scan.asymptotic": _parse_bool,
    "scan.mu_k1": float,
    "scan.mu_k2": float,
    "options.gamma_mode": str,
    "options.conservative_trailing_terms": _parse_bool,
    "output.csv": str,
    "output.plot": str,
}

DEFAULTS = {
    "channel.loss_db_per_km": 0.2,
    "channel.eta_det": 0.1,
    "channel.p_dark": 1e-5,
    "channel.e_mis": 0.01,
    "channel.p_B_Z": 0.8,
    "source.theta": 0.03,
    "source.r_k1": 0.03,
    "source.r_k2": 0.03,
    "source.mu_k3_upper": 1e-3,
    "source.p_A_Z": 0.8,
    "source.p_k1": 0.8,
    "source.p_k2": 0.1,
    "source.p_k3": 0.1,
    "source.p_fail": 0.0,
    "security.eps_s": 1e-10,
    "security.eps_c": 1e-10,
    "tagging.case_II_rate": 1e-7,
    "scan.lengths_km": [75.0],
    "scan.N_sent": [1e12],
    "scan.cases": ["I", "II"],
    "scan.asymptotic": True,
    "options.gamma_mode": "auto",
    "options.conservative_trailing_terms": False,
    "output.csv": "keyrate.csv",
}

PHASE_KEYS = ("theta_L_0Z", "theta_U_0Z", "theta_L_1Z", "theta_U_1Z", "theta_L_0X", "theta_U_0X")


def parse_config(text: str) -> dict:
    """Parse configuration text into typed values merged over the defaults."""
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key](raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return values


@dataclass
class RunConfig:
    """Resolved run configuration."""

    scenario: Scenario
    lengths: list
    N_sents: list
    cases: list
    asymptotic: bool
    fixed_mu: tuple | None
    csv_path: str
    plot_path: str | None = None
    extra: dict = field(default_factory=dict)


def build_run_config(values: dict) -> RunConfig:
    """Turn parsed values into a scenario template and scan lists."""
    given = [k for k in PHASE_KEYS if f"source.{k}" in values]
    if given and len(given) != len(PHASE_KEYS):
        raise ConfigError("explicit phase intervals need all six source.theta_* bounds")
    if given:
        phases = PhaseIntervals(*(values[f"source.{k}"] for k in PHASE_KEYS))
    else:
        phases = PhaseIntervals.symmetric(values["source.theta"])
    try:
        channel = ChannelSpec(
            loss_db_per_km=values["channel.loss_db_per_km"], eta_det=values["channel.eta_det"],
            p_dark=values["channel.p_dark"], e_mis=values["channel.e_mis"],
            p_B_Z=values["channel.p_B_Z"])
        budget = default_budget(values["security.eps_s"], values["security.eps_c"],
                                values["source.p_fail"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if values["options.gamma_mode"] not in ("auto", "restricted", "general"):
        raise ConfigError(f"unknown options.gamma_mode {values['options.gamma_mode']!r}")
    if values["tagging.case_II_rate"] < 0:
        raise ConfigError("tagging.case_II_rate must be nonnegative")
    if any(L < 0 for L in values["scan.lengths_km"]) or any(N <= 0 for N in values["scan.N_sent"]):
        raise ConfigError("lengths must be >= 0 and N_sent > 0")
    template = SourceTemplate(
        phases=phases, r_k1=values["source.r_k1"], r_k2=values["source.r_k2"],
        mu_k3_upper=values["source.mu_k3_upper"], p_A_Z=values["source.p_A_Z"],
        p_k1=values["source.p_k1"], p_k2=values["source.p_k2"], p_k3=values["source.p_k3"])
    scenario = Scenario(source=template, channel=channel, budget=budget,
                        gamma_mode=values["options.gamma_mode"],
                        conservative_trailing_terms=values["options.conservative_trailing_terms"])
    has1, has2 = "scan.mu_k1" in values, "scan.mu_k2" in values
    if has1 != has2:
        raise ConfigError("scan.mu_k1 and scan.mu_k2 must be given together")
    fixed = (values["scan.mu_k1"], values["scan.mu_k2"]) if has1 else None
    extra = {"case_II_rate": values["tagging.case_II_rate"]}
    return RunConfig(scenario=scenario, lengths=values["scan.lengths_km"],
                     N_sents=values["scan.N_sent"], cases=values["scan.cases"],
                     asymptotic=values["scan.asymptotic"], fixed_mu=fixed,
                     csv_path=values["output.csv"], plot_path=values.get("output.plot"),
                     extra=extra)


def source_violations(config: RunConfig) -> list:
    """Violations of the source at a representative (or the fixed) intensity pair."""
    template = config.scenario.source
    mu1, mu2 = config.fixed_mu if config.fixed_mu else (0.5, 0.1)
    spec = template.build(mu1, mu2, 0, config.scenario.budget.p_fail)
    return validate(spec)


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def format_row(row: KeyRateResult) -> str:
    """One CSV line; ``ell`` is floored to an integer and ``rate`` uses it."""
    ell = math.floor(row.ell)
    fields = (
        _fmt(row.length_km), _fmt(row.N_sent), row.case, row.mode, _fmt(row.mu_k1),
        _fmt(row.mu_k2), _fmt(row.s1L), _fmt(row.nphU), _fmt(row.e_phU), _fmt(row.e_bit),
        _fmt(row.N_det), _fmt(row.lambda_EC), str(ell), _fmt(ell / row.N_sent),
    )
    return ",".join(fields)


def render_csv(rows) -> str:
    return ",".join(CSV_COLUMNS) + "\n" + "".join(format_row(r) + "\n" for r in rows)


def _fixed_rows(config: RunConfig, cases, finite: bool, asymptotic: bool) -> list:
    mu1, mu2 = config.fixed_mu
    rows = []
    modes = ([False] if finite else []) + ([True] if asymptotic else [])
    for is_asym in modes:
        Ns = [max(config.N_sents)] if is_asym else config.N_sents
        for case in cases:
            for N in Ns:
                for L in config.lengths:
                    sc = replace(config.scenario, N_sent=N, tagging=case, asymptotic=is_asym,
                                 channel=replace(config.scenario.channel, fiber_length_km=L))
                    rows.append(evaluate(sc, mu1, mu2))
    return rows


def execute(config: RunConfig, asymptotic_only: bool = False) -> list[KeyRateResult]:
    """Run the configured scan and return its rows."""
    case_map = {"I": CASE_I, "II": TaggingCase("II", config.extra["case_II_rate"])}
    cases = [case_map[c] for c in config.cases]
    finite = not asymptotic_only
    with_asym = config.asymptotic or asymptotic_only
    if config.fixed_mu is not None:
        return _fixed_rows(config, cases, finite, with_asym)
    return scan(config.scenario, config.lengths, config.N_sents, cases,
                include_finite=finite, include_asymptotic=with_asym)


def write_plot(rows, path: str) -> None:
    """Rate against distance, one curve per (case, mode, N_sent)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves: dict = {}
    for r in rows:
        label = (r.case, r.mode, r.N_sent if r.mode == "finite" else None)
        curves.setdefault(label, []).append(r)
    fig, ax = plt.subplots(figsize=(6, 4))
    for (case, mode, N), pts in curves.items():
        xs = [p.length_km for p in pts]
        ys = [p.rate if p.rate > 0 else np.nan for p in pts]
        name = f"case {case}, " + (f"N={N:.3g}" if mode == "finite" else "asymptotic")
        ax.semilogy(xs, ys, "-" if case == "I" else "--", label=name)
    ax.set_xlabel("fibre length [km]")
    ax.set_ylabel("key rate per pulse")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def run(config_path: str, asymptotic: bool = False, case: str | None = None,
        out: str | None = None, plot: str | None = None) -> int:
    """Execute ``run``; see the module docstring for exit codes."""
    try:
        text = Path(config_path).read_text()
        config = build_run_config(parse_config(text))
        if case is not None:
            if case not in ("I", "II"):
                raise ConfigError(f"--case must be I or II, got {case!r}")
            config.cases = [case]
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    violations = source_violations(config)
    if violations:
        print("infeasible source specification:", file=sys.stderr)
        for v in violations:
            print(f"  {v.code}: {v.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    rows = execute(config, asymptotic_only=asymptotic)
    csv_path = out or config.csv_path
    with open(csv_path, "w", newline="") as fh:
        fh.write(render_csv(rows))
    plot_path = plot or config.plot_path
    if plot_path:
        write_plot(rows, plot_path)
    return EXIT_OK


TAIL_CASES = ((0.5, 10_000, 0.01), (0.1, 10_000, 0.05), (0.8, 10_000, 0.01))


def decoy_sandwich_failures(cases: int, seed: int, rel_slack: float = 1e-9) -> list[str]:
    """Run the decoy oracle on seeded random yield tables.

    Each case draws intensities inside their intervals and independent yields
    in [0, 1] for photon numbers 0..20, then checks the asymptotic bounds.
    """
    from .decoy_estimator import ORACLE_MAX_PHOTONS

    rng = np.random.default_rng(seed)
    template = SourceTemplate()
    eps = DecoyEpsilons.uniform(1e-11, 1e-11)
    failures = []
    for i in range(cases):
        mu1 = rng.uniform(0.2, 0.95)
        mu2 = rng.uniform(0.01, 0.4 * mu1)
        spec = template.build(mu1, mu2)
        iv = spec.intensities
        mu = {k: rng.uniform(iv.minus(k), iv.plus(k)) for k in ("k1", "k2", "k3")}
        n_range = range(ORACLE_MAX_PHOTONS + 1)
        for basis, settings, p_b in (("X", ("0Z", "1Z", "0X"), 0.2), ("Z", ("0Z", "1Z"), 0.8)):
            yields = {(c, n, y): rng.uniform() for c in settings for n in n_range for y in (0, 1)}
            counts, truth = oracle_single_photon_counts(yields, spec, 1e12, mu, p_b, basis)
            if basis == "Z":
                lower = s1_lower_ZZ(counts, spec, eps, p_b, asymptotic=True)
                true_z = sum(truth.values())
                if lower > true_z * (1 + rel_slack):
                    failures.append(f"case {i}: Z lower {lower!r} > true {true_z!r}")
                continue
            for c in settings:
                for y in (0, 1):
                    lo = sx_lower(c, y, counts, spec, eps, p_b, asymptotic=True)
                    hi = sx_upper(c, y, counts, spec, eps, p_b, asymptotic=True)
                    t = truth[c, y]
                    if lo > t * (1 + rel_slack) or hi < t * (1 - rel_slack):
                        failures.append(f"case {i} ({c},{y}): {lo!r} <= {t!r} <= {hi!r} fails")
    return failures


def validate_subcommand(seed: int = 1, trials: int = 100_000, bound=g_ma,
                        decoy_cases: int = 1000) -> int:
    """Run the martingale-tail and decoy-sandwich oracles.

    Args:
        seed: Master seed; each tail case uses ``seed + index``.
        trials: Monte Carlo walks per tail case.
        bound: Deviation function under test (replaceable as a negative control).
        decoy_cases: Number of random yield tables.
    """
    if trials < 1 or decoy_cases < 0:
        print("config error: trials must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    failed = False
    for index, (q, n, eps) in enumerate(TAIL_CASES):
        freq = empirical_tail_check(q, n, eps, trials, seed + index, bound=bound)
        limit = eps + 3.0 * math.sqrt(eps / trials)
        ok = freq <= limit
        failed |= not ok
        print(f"tail q={q} n={n} eps={eps}: frequency {freq:.6g} limit {limit:.6g} "
              f"{'ok' if ok else 'FAIL'}")
    failures = decoy_sandwich_failures(decoy_cases, seed)
    print(f"decoy sandwich: {decoy_cases} cases, {len(failures)} violations")
    for line in failures[:20]:
        print(f"  {line}")
    failed |= bool(failures)
    return EXIT_PROPERTY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scic-qkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="optimize key rates over a configured scan")
    p_run.add_argument("config")
    p_run.add_argument("--asymptotic", action="store_true", help="emit asymptotic rows only")
    p_run.add_argument("--case", choices=("I", "II"))
    p_run.add_argument("--out", help="CSV output path (overrides output.csv)")
    p_run.add_argument("--plot", help="write a rate-vs-distance figure (SVG/PDF/PNG)")
    p_val = sub.add_parser("validate", help="run the concentration and decoy oracles")
    p_val.add_argument("--seed", type=int, default=1)
    p_val.add_argument("--trials", type=int, default=100_000)
    p_val.add_argument("--decoy-cases", type=int, default=1000)
    p_val.add_argument("--bound-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, asymptotic=args.asymptotic, case=args.case, out=args.out,
                   plot=args.plot)
    bound = g_ma
    if args.bound_scale != 1.0:
        scale = args.bound_scale

        def bound(query):
            return scale * g_ma(query)

    return validate_subcommand(args.seed, args.trials, bound, args.decoy_cases)


if __name__ == "__main__":
    sys.exit(main())
