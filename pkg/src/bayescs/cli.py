"""Command-line entry point.

Subcommands: ``cs`` (stream a confidence sequence), ``simulate`` (scenario
runner), ``lucb`` (best-arm identification), ``ppi`` (prediction-powered
inference) and ``oracle`` (known-law diagnostics).  Settings come from an INI
document (``--config``) whose sections and keys are::

    [method]   name, kappa, tau, G_etel, particles, k_rho, k_nu, bins
    [prior]    rho_a, rho_b, nu_shape, nu_rate
    [betting]  alpha, c, G
    [scenario] law, regime, n_max, repetitions, probe_mu
    [lucb]     arms, replay, m, epsilon, max_pulls, union_bound,
               prior_means, prior_strength, nu_shape, nu_rate, trace
    [ppi]      labeled, unlabeled, ell, u, n0, classical, null_threshold, summary

Command-line flags override the document.  Exit codes: 0 success, 2 config
error, 3 data error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from contextlib import contextmanager
from typing import Optional

from .core import BettingConfig, StepRecord, StreamWriter
from .oracle import TrueLaw, lipschitz_const, oracle_growth, oracle_lambda, parse_law
from .predictives import BetaPrior
from .simharness import METHODS, MethodSettings, Scenario, export_results, make_predictor, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

class Settings:
    """Typed view of the INI document plus command-line overrides."""

    def __init__(self, parser: configparser.ConfigParser, args: argparse.Namespace):
        self.doc = parser
        self.args = args

    def get(self, section: str, key: str, default=None, kind=str):
        if not self.doc.has_option(section, key):
            return default
        raw = self.doc.get(section, key).strip()
        try:
            if kind is bool:
                return self.doc.getboolean(section, key)
            return kind(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None

    def method(self) -> str:
        name = self.args.method or self.get("method", "name", "empirical")
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}; valid methods: {', '.join(METHODS)}")
        return name

    def betting(self) -> BettingConfig:
        alpha = self.args.alpha if self.args.alpha is not None else self.get("betting", "alpha", 0.1, float)
        c = self.args.c if self.args.c is not None else self.get("betting", "c", 0.95, float)
        G = self.args.grid if self.args.grid is not None else self.get("betting", "G", 500, int)
        try:
            return BettingConfig(alpha=alpha, c=c, grid_size=G)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def method_settings(self) -> MethodSettings:
        k_rho = self.get("method", "k_rho", 40, int)
        k_nu = self.get("method", "k_nu", 25, int)
        particles = self.get("method", "particles", k_rho * k_nu, int)
        if particles != k_rho * k_nu:
            raise ConfigError(f"particles={particles} must equal k_rho * k_nu = {k_rho * k_nu}")
        s = MethodSettings(
            kappa=self.get("method", "kappa", 50.0, float),
            tau=self.get("method", "tau", 1.0, float),
            etel_grid_size=self.get("method", "G_etel", 1000, int),
            k_rho=k_rho,
            k_nu=k_nu,
            bins=self.get("method", "bins", 200, int),
        )
        if s.kappa < 0 or s.tau < 0 or s.etel_grid_size < 2 or min(k_rho, k_nu, s.bins) < 1:
            raise ConfigError(f"invalid method settings: {s}")
        return s

    def prior(self) -> Optional[BetaPrior]:
        if not self.doc.has_section("prior"):
            return None
        try:
            return BetaPrior(
                self.get("prior", "rho_a", 1.0, float),
                self.get("prior", "rho_b", 1.0, float),
                self.get("prior", "nu_shape", 1.5, float),
                self.get("prior", "nu_rate", 1.0, float),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def law(self, required: bool) -> Optional[TrueLaw]:
        text = getattr(self.args, "law", None) or self.get("scenario", "law")
        if text is None:
            if required:
                raise ConfigError("a data law is required ([scenario] law)")
            return None
        try:
            return parse_law(text)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def seed(self, required: bool) -> Optional[int]:
        if self.args.seed is None and required:
            raise ConfigError("--seed is required for this command (reproducibility)")
        return self.args.seed


def load_settings(args: argparse.Namespace) -> Settings:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys such as G and G_etel are case-sensitive
    if args.config:
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
    return Settings(parser, args)


@contextmanager
def _output(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot open output {path}: {exc}") from exc
    with fh:
        yield fh


def _predictor(settings: Settings, method: str, law: Optional[TrueLaw] = None, prior=None):
    if method == "oracle" and law is None:
        raise ConfigError("the oracle method needs [scenario] law")
    return make_predictor(method, prior if prior is not None else settings.prior(), law,
                          settings.method_settings())


# --------------------------------------------------------------------------
# cs
# --------------------------------------------------------------------------

def _observations(handle, name: str):
    for lineno, line in enumerate(handle, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            x = float(text)
        except ValueError:
            raise DataError(f"{name}: line {lineno}: cannot parse {text!r} as a number") from None
        if not 0.0 <= x <= 1.0 or math.isnan(x):
            raise DataError(f"{name}: line {lineno}: observation {x} outside [0, 1]")
        yield x


def _stream(seq, xs, handle) -> None:
    writer = StreamWriter(handle)
    writer.header()
    for x in xs:
        writer.write(seq.update(x))


def cmd_cs(settings: Settings) -> int:
    from .sequence import ConfidenceSequence

    method = settings.method()
    seq = ConfidenceSequence(
        _predictor(settings, method, settings.law(required=False)),
        settings.betting(),
        bins=settings.method_settings().bins,
    )
    path = settings.args.data
    with _output(settings.args.out) as out:
        if path is None or path == "-":
            _stream(seq, _observations(sys.stdin, "<stdin>"), out)
        else:
            try:
                fh = open(path)
            except OSError as exc:
                raise OSError(f"cannot read observations {path}: {exc}") from exc
            with fh:
                _stream(seq, _observations(fh, path), out)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_simulate(settings: Settings) -> int:
    seed = settings.seed(required=True)
    method = settings.method()
    law = settings.law(required=True)
    regime = settings.get("scenario", "regime", "informative")
    probe = settings.get("scenario", "probe_mu", None, float)
    try:
        scenario = Scenario(
            law=law,
            method=method,
            prior_regime=regime,
            n_max=settings.get("scenario", "n_max", 200, int),
            repetitions=settings.get("scenario", "repetitions", 100, int),
            seed=seed,
            config=settings.betting(),
            settings=settings.method_settings(),
            custom_prior=settings.prior(),
            probes=None if probe is None else (probe,),
        )
        scenario.prior  # resolves presets now so a bad combination is a config error
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = run_scenario(scenario)
    out = settings.args.out
    export_results(result, sys.stdout if out in (None, "-") else out)
    return EXIT_OK


# --------------------------------------------------------------------------
# lucb
# --------------------------------------------------------------------------

def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r}") from None


def cmd_lucb(settings: Settings) -> int:
    from .lucb import LucbConfig, ReplaySource, lucb_run, make_arm, read_replay_csv, simulated_arms, write_trace

    seed = settings.seed(required=True)
    method = settings.method()
    betting = settings.betting()
    try:
        config = LucbConfig(
            m=settings.get("lucb", "m", 1, int),
            alpha=betting.alpha,
            epsilon=settings.get("lucb", "epsilon", 0.1, float),
            max_pulls=settings.get("lucb", "max_pulls", 100_000, int),
            union_bound=settings.get("lucb", "union_bound", False, bool),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    replay = settings.args.data or settings.get("lucb", "replay")
    if replay:
        try:
            names, columns = read_replay_csv(replay)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        n_arms = len(names)
    else:
        arm_text = settings.get("lucb", "arms")
        if not arm_text:
            raise ConfigError("give [lucb] arms (one law per line) or a replay CSV")
        try:
            laws = [parse_law(line) for line in arm_text.splitlines() if line.strip()]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        names = [f"arm{i}" for i in range(len(laws))]
        n_arms = len(laws)
    if n_arms < 2 or config.m >= n_arms:
        raise ConfigError(f"LUCB needs at least two arms and m < arms (arms={n_arms}, m={config.m})")

    means_text = settings.get("lucb", "prior_means")
    priors: list = [None] * n_arms
    if means_text:
        means = _float_list(means_text, "prior_means")
        if len(means) != n_arms or not all(0 < m < 1 for m in means):
            raise ConfigError("prior_means needs one value in (0, 1) per arm")
        strength = settings.get("lucb", "prior_strength", 500.0, float)
        shape = settings.get("lucb", "nu_shape", 2.0, float)
        rate = settings.get("lucb", "nu_rate", 2.0, float)
        priors = [BetaPrior(strength * m, strength * (1 - m), shape, rate) for m in means]

    def factory(i):
        return _predictor(settings, method, None if replay else laws[i], priors[i])

    if replay:
        arms = [make_arm(names[i], ReplaySource(columns[i]), factory(i), betting, config, n_arms)
                for i in range(n_arms)]
    else:
        arms = simulated_arms(laws, seed, factory, betting, config, names)
    result = lucb_run(arms, config)
    summary = {
        "selected": list(result.selected),
        "selected_names": [names[i] for i in result.selected],
        "total_pulls": result.total_pulls,
        "pulls": [a.pulls for a in result.state.arms],
        "truncated": result.truncated,
        "reason": result.reason,
        "method": method,
        "alpha": betting.alpha,
        "epsilon": config.epsilon,
        "seed": seed,
    }
    trace = getattr(settings.args, "trace", None) or settings.get("lucb", "trace")
    if trace:
        with _output(trace) as fh:
            write_trace(result, fh)
    with _output(settings.args.out) as out:
        json.dump(summary, out, indent=2)
        out.write("\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# ppi
# --------------------------------------------------------------------------

def cmd_ppi(settings: Settings) -> int:
    from .ppi import (
        PpiConfig,
        PpiDataset,
        ppi_cs_step,
        ppi_init,
        read_labeled_csv,
        read_unlabeled_csv,
        rectifier_prior,
        to_theta,
    )

    method = settings.method()
    betting = settings.betting()
    classical = settings.get("ppi", "classical", False, bool)
    ell = settings.get("ppi", "ell", 0.0 if classical else -1.0, float)
    u = settings.get("ppi", "u", 1.0, float)
    n0 = settings.get("ppi", "n0", 1000, int)
    threshold = settings.get("ppi", "null_threshold", 0.0, float)
    labeled_path = settings.args.data or settings.get("ppi", "labeled")
    unlabeled_path = getattr(settings.args, "unlabeled", None) or settings.get("ppi", "unlabeled")
    if labeled_path is None:
        raise ConfigError("a labeled CSV (columns y, f_x) is required")
    if not classical and unlabeled_path is None:
        raise ConfigError("an unlabeled CSV (column f_x) is required unless classical = true")
    try:
        labeled = read_labeled_csv(labeled_path)
        unlabeled = [] if classical else read_unlabeled_csv(unlabeled_path)
        ds = PpiDataset(tuple(unlabeled), tuple(labeled), (ell, u))
        config = PpiConfig(n0=n0, alpha=betting.alpha, method=method, classical=classical)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    prior = settings.prior()
    if prior is None and method in ("parametric", "mdp", "betel", "retel") and ell < 0 < u and not classical:
        try:
            prior = rectifier_prior(n0, (ell, u))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if not classical and not unlabeled:
        raise DataError(f"{unlabeled_path}: the unlabeled pool is empty")
    state = ppi_init(ds, config, _predictor(settings, method, prior=prior), betting)
    stop = None
    with _output(settings.args.out) as out:
        writer = StreamWriter(out)
        writer.header()
        for pair in ds.labeled_pairs:
            try:
                theta, rec = ppi_cs_step(state, pair)
            except ValueError as exc:
                raise DataError(f"{labeled_path}: {exc}") from None
            writer.write(StepRecord(rec.n, pair[0] - (0.0 if classical else pair[1]), theta,
                                    to_theta(rec.raw_interval, state.m_hat, state.bounds)))
            if stop is None and not theta.empty and theta.lower > threshold:
                stop = state.n
    summary = {"method": method, "alpha": betting.alpha, "stop_n": stop, "seed": settings.args.seed}
    summary_path = getattr(settings.args, "summary", None) or settings.get("ppi", "summary")
    with _output(summary_path) as fh:
        json.dump(summary, fh)
        fh.write("\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------

def cmd_oracle(settings: Settings) -> int:
    law = settings.law(required=True)
    betting = settings.betting()
    mus = settings.args.mu or [law.mean]
    rows = []
    for mu in mus:
        if not 0 < mu < 1:
            raise ConfigError(f"mu must lie in (0, 1), got {mu}")
        sol = oracle_lambda(law, mu, betting.c)
        rows.append({
            "mu": mu,
            "lambda": sol.lam,
            "at_boundary": sol.at_boundary,
            "growth": oracle_growth(law, sol.lam, mu),
            "lipschitz": lipschitz_const(mu, betting.c),
        })
    with _output(settings.args.out) as out:
        json.dump({"law": str(law), "mean": law.mean, "c": betting.c, "results": rows}, out, indent=2)
        out.write("\n")
    return EXIT_OK


# --------------------------------------------------------------------------

COMMANDS = {"cs": cmd_cs, "simulate": cmd_simulate, "lucb": cmd_lucb, "ppi": cmd_ppi, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI settings document")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    common.add_argument("--alpha", type=float)
    common.add_argument("--c", type=float, help="truncation parameter")
    common.add_argument("--grid", type=int, help="inversion grid size G")
    common.add_argument("--out", help="output path ('-' or omitted: stdout)")

    parser = argparse.ArgumentParser(prog="bayescs", description="Bayes-assisted anytime-valid confidence sequences")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("cs", parents=[common], help="stream a confidence sequence over observations")
    p.add_argument("data", nargs="?", help="file with one observation per line (default stdin)")
    p.add_argument("--law", help="true law, only needed by the oracle method")
    p = sub.add_parser("simulate", parents=[common], help="run a simulation scenario")
    p.add_argument("--law", help="data law, e.g. 'beta(10,30)'")
    p = sub.add_parser("lucb", parents=[common], help="LUCB best-arm identification")
    p.add_argument("data", nargs="?", help="replay CSV (one column per arm)")
    p.add_argument("--trace", help="trace CSV output path")
    p = sub.add_parser("ppi", parents=[common], help="prediction-powered inference")
    p.add_argument("data", nargs="?", help="labeled CSV with columns y, f_x")
    p.add_argument("unlabeled", nargs="?", help="unlabeled CSV with column f_x")
    p.add_argument("--summary", help="stop-time summary JSON path (default stdout after the stream)")
    p = sub.add_parser("oracle", parents=[common], help="oracle coefficients for a known law")
    p.add_argument("--law", help="true law")
    p.add_argument("--mu", type=float, action="append", help="candidate mean (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args)
        return COMMANDS[args.command](settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
