"""Command-line front end: ``ladderfolio {backtest,bootstrap,metrics,synth} [flags]``.

A config file (``--config PATH`` or ``$LADDERFOLIO_CONFIG``) holds ``key = value``
lines whose keys are flag names without the leading dashes; flags given on the
command line win.

Exit codes: 0 success, 2 usage, 3 data error, 4 runtime error. A backtest
that goes bankrupt is a valid result and exits 0.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import marketdata
from .backtest import FREQUENCIES, BacktestConfig, FeeSchedule, RebalancePolicy, run_backtest
from .bootstrap import BootstrapConfig, FixedN, UniformN, parse_n_mode, run_bootstrap, summarize
from .errors import DataError, LadderfolioError
from .marketdata import SynthConfig
from .metrics import RiskParams, compound_by_period, report_metrics, summary_metrics, years_between
from .reporting import read_returns, write_backtest, write_bootstrap, write_metrics
from .weighting import ALL_TRANSFORMS, Transform

log = logging.getLogger("ladderfolio")

COMMANDS = ("backtest", "bootstrap", "metrics", "synth")
CONFIG_ENV = "LADDERFOLIO_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    command: str
    data_path: str | None = None
    cpi_path: str | None = None
    output_dir: str = "."
    transforms: tuple[Transform, ...] = ()
    backtest: BacktestConfig | None = None
    bootstrap: BootstrapConfig | None = None
    synth: SynthConfig | None = None
    risk: RiskParams = field(default_factory=RiskParams)
    workers: int | None = None

    def to_argv(self) -> list[str]:
        """Flags that parse back to an equal RunConfig."""
        argv = [self.command]

        def add(flag, value):
            if value is not None:
                argv.extend([flag, str(value)])

        add("--data", self.data_path)
        add("--cpi", self.cpi_path)
        add("--out", self.output_dir)
        if self.transforms:
            add("--transform", "all" if self.transforms == ALL_TRANSFORMS else self.transforms[0].value)
        if self.backtest is not None:
            b = self.backtest
            add("--rebalance", b.policy.frequency)
            add("--start", b.start_date)
            add("--end", b.end_date)
            add("--initial", repr(b.initial_capital))
            add("--admin-fee", repr(b.policy.fee_schedule.admin_fee_2015))
            add("--spread-rate", repr(b.policy.fee_schedule.spread_rate))
        if self.bootstrap is not None:
            b = self.bootstrap
            add("--n-mode", b.n_mode)
            add("--iterations", b.iterations)
            add("--seed", b.master_seed)
            add("--initial", repr(b.initial_scale))
            add("--start", b.start_date)
            add("--end", b.end_date)
            add("--workers", self.workers)
        if self.command in ("backtest", "metrics"):
            add("--risk-free", repr(self.risk.risk_free_rate))
            add("--var-level", repr(self.risk.var_level))
        if self.synth is not None:
            s = self.synth
            add("--stocks", s.n_securities)
            add("--years", s.n_years)
            add("--seed", s.seed)
            add("--drift-range", _fmt_range(s.drift_range))
            add("--vol-range", _fmt_range(s.volatility_range))
            add("--dividend-yield-range", _fmt_range(s.dividend_yield_range))
            add("--churn", repr(s.membership_churn_rate))
            add("--start-year", s.start_year)
        return argv


def _fmt_range(r) -> str:
    return f"{r[0]!r},{r[1]!r}"


# --- argument types ----------------------------------------------------------


def _transform_arg(text: str):
    if text.strip().lower() == "all":
        return ALL_TRANSFORMS
    try:
        return (Transform.parse(text),)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _date_arg(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _range_arg(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _n_mode_arg(text: str):
    try:
        return parse_n_mode(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed_arg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ladderfolio", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")

    def common(p, data_help):
        p.add_argument("--config", help=f"key = value config file (default ${CONFIG_ENV})")
        p.add_argument("--data", help=data_help)
        p.add_argument("--out", default=".", help="output directory")

    bt = sub.add_parser("backtest", help="simulate fee-aware rebalancing")
    common(bt, "prices CSV")
    bt.add_argument("--cpi", help="CPI CSV (default: bundled U.S. CPI-U)")
    bt.add_argument("--transform", type=_transform_arg, default=(Transform.IDENTITY,), help="ladder rung or 'all'")
    bt.add_argument("--rebalance", choices=FREQUENCIES, default="monthly")
    bt.add_argument("--start", type=_date_arg)
    bt.add_argument("--end", type=_date_arg)
    bt.add_argument("--initial", type=float, default=100_000.0)
    bt.add_argument("--admin-fee", type=float, default=1.0, help="per-trade fee in 2015 dollars")
    bt.add_argument("--spread-rate", type=float, default=0.001, help="round-trip bid-ask spread fraction")
    bt.add_argument("--risk-free", type=float, default=0.0175)
    bt.add_argument("--var-level", type=float, default=0.05)

    bs = sub.add_parser("bootstrap", help="resample baskets and replay index returns")
    common(bs, "prices CSV")
    bs.add_argument("--transform", type=_transform_arg, default=(Transform.IDENTITY,), help="ladder rung or 'all'")
    bs.add_argument("--n-mode", type=_n_mode_arg, default=UniformN(), help="uniform:LO-HI or fixed:N")
    bs.add_argument("--iterations", type=_positive_int, default=20_000)
    bs.add_argument("--seed", type=_seed_arg, default=0)
    bs.add_argument("--workers", type=_positive_int, default=None, help="processes (default: all cores)")
    bs.add_argument("--initial", type=float, default=1e5, help="starting value of every draw")
    bs.add_argument("--start", type=_date_arg)
    bs.add_argument("--end", type=_date_arg)

    mt = sub.add_parser("metrics", help="summary statistics of a returns.csv")
    common(mt, "returns CSV (date,daily_return)")
    mt.add_argument("--risk-free", type=float, default=0.0175)
    mt.add_argument("--var-level", type=float, default=0.05)

    sy = sub.add_parser("synth", help="write a seeded synthetic prices.csv")
    sy.add_argument("--config", help=f"key = value config file (default ${CONFIG_ENV})")
    sy.add_argument("--out", default=".", help="output directory")
    sy.add_argument("--stocks", type=_positive_int, default=50)
    sy.add_argument("--years", type=_positive_int, default=10)
    sy.add_argument("--seed", type=_seed_arg, default=0)
    sy.add_argument("--drift-range", type=_range_arg, default=(0.0, 0.15))
    sy.add_argument("--vol-range", type=_range_arg, default=(0.10, 0.40))
    sy.add_argument("--dividend-yield-range", type=_range_arg, default=(0.0, 0.04))
    sy.add_argument("--churn", type=float, default=2.0, help="expected replacements per year")
    sy.add_argument("--start-year", type=int, default=1958)
    return parser


def read_config_file(path: str | Path) -> list[str]:
    """Turn ``key = value`` lines into ``--key value`` tokens."""
    tokens = []
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{n}: expected key = value")
        tokens.extend(["--" + key.strip().lstrip("-").replace("_", "-"), value.strip()])
    return tokens


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return os.environ.get(CONFIG_ENV) or None


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate; usage errors exit with status 2 via argparse."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    cmd_at = next((i for i, tok in enumerate(argv) if tok in COMMANDS), None)
    cfg_path = _config_path(argv)
    if cfg_path and cmd_at is not None:
        try:
            extra = read_config_file(cfg_path)
        except (OSError, ValueError) as exc:
            parser.error(f"--config: {exc}")
        argv = argv[: cmd_at + 1] + extra + argv[cmd_at + 1 :]
    ns = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[ns.command]

    if ns.command in ("backtest", "bootstrap", "metrics"):
        if not ns.data:
            sub.error("--data is required")
        if not Path(ns.data).is_file():
            sub.error(f"--data: no such file {ns.data!r}")
    if getattr(ns, "cpi", None) and not Path(ns.cpi).is_file():
        sub.error(f"--cpi: no such file {ns.cpi!r}")

    try:
        if ns.command == "backtest":
            fees = FeeSchedule(ns.admin_fee, ns.spread_rate)
            bt = BacktestConfig(
                ns.transform[0], RebalancePolicy(ns.rebalance, fees), ns.start, ns.end, ns.initial
            )
            return RunConfig(
                "backtest", ns.data, ns.cpi, ns.out, ns.transform, backtest=bt,
                risk=RiskParams(ns.risk_free, ns.var_level),
            )
        if ns.command == "bootstrap":
            bs = BootstrapConfig(
                ns.transform[0], ns.n_mode, ns.iterations, ns.seed, ns.initial, ns.start, ns.end
            )
            return RunConfig(
                "bootstrap", ns.data, None, ns.out, ns.transform, bootstrap=bs, workers=ns.workers
            )
        if ns.command == "metrics":
            return RunConfig("metrics", ns.data, None, ns.out, risk=RiskParams(ns.risk_free, ns.var_level))
        synth = SynthConfig(
            ns.stocks, ns.years, ns.drift_range, ns.vol_range, ns.dividend_yield_range, ns.churn, ns.seed,
            ns.start_year,
        )
        return RunConfig("synth", None, None, ns.out, synth=synth)
    except ValueError as exc:
        sub.error(str(exc))


# --- dispatch -------------------------------------------------------------------


def _run_backtest(cfg: RunConfig) -> None:
    history = marketdata.load_history(cfg.data_path)
    cpi = marketdata.load_cpi(cfg.cpi_path) if cfg.cpi_path else marketdata.bundled_cpi()
    echo = cfg.to_argv()
    for t in cfg.transforms:
        bt = BacktestConfig(t, cfg.backtest.policy, cfg.backtest.start_date, cfg.backtest.end_date,
                            cfg.backtest.initial_capital)
        report = run_backtest(history, cpi, bt)
        out = Path(cfg.output_dir) / t.value if len(cfg.transforms) > 1 else Path(cfg.output_dir)
        write_backtest(report, out, report_metrics(report, cfg.risk), {"argv": echo})
        log.info("%s: final value %.2f%s", t.value, report.final_value, " (bankrupt)" if report.bankrupt else "")


def _run_bootstrap(cfg: RunConfig) -> None:
    history = marketdata.load_history(cfg.data_path)
    base = cfg.bootstrap
    for t in cfg.transforms:
        bs = BootstrapConfig(t, base.n_mode, base.iterations, base.master_seed, base.initial_scale,
                             base.start_date, base.end_date)
        first = next((d for d in history.calendar if bs.start_date is None or d >= bs.start_date), None)
        if isinstance(bs.n_mode, FixedN) and first is not None:
            n_members = len(history.members_on(first))
            if bs.n_mode.n > n_members:
                raise DataError(f"fixed N={bs.n_mode.n} exceeds the {n_members} member securities on {first}")
        draws = run_bootstrap(history, bs, workers=cfg.workers)
        out = Path(cfg.output_dir) / t.value if len(cfg.transforms) > 1 else Path(cfg.output_dir)
        write_bootstrap(draws, summarize(draws), bs, out)
        log.info("%s: %d draws", t.value, len(draws))


def _run_metrics(cfg: RunConfig) -> None:
    dates, rets = read_returns(cfg.data_path)
    growth = 1.0
    for r in rets:
        growth *= 1.0 + r
    monthly = [r for _, r in compound_by_period(dates, rets, "monthly")]
    annual = [r for _, r in compound_by_period(dates, rets, "annual")]
    years = years_between(dates[0], dates[-1])
    metrics = summary_metrics(rets, monthly, annual, growth, years, cfg.risk)
    write_metrics(metrics, cfg.output_dir, {"argv": cfg.to_argv()})


def _run_synth(cfg: RunConfig) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marketdata.write_history(marketdata.generate_synthetic(cfg.synth), out / "prices.csv")


def run(cfg: RunConfig) -> int:
    handlers = {"backtest": _run_backtest, "bootstrap": _run_bootstrap, "metrics": _run_metrics,
                "synth": _run_synth}
    try:
        handlers[cfg.command](cfg)
    except DataError as exc:
        print(f"ladderfolio: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LadderfolioError, ValueError, OSError) as exc:
        print(f"ladderfolio: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    cfg = parse_args(argv)
    args = sys.argv[1:] if argv is None else argv
    verbose = "-v" in args or "--verbose" in args
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
