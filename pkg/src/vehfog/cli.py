"""Command line: run, sweep, link, gen map, gen trace.

Exit status is 1 for configuration or argument errors and 2 when a
simulation fails at run time.
"""

from __future__ import annotations

import argparse
import copy
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import Config, build_scenario, keys_help, load_config
from .engine import ConfigError, run_simulation
from .geometry import MapError, Obstruction, manhattan_grid
from .metrics import compute_metrics, read_results, report_row, write_plot_data, write_report
from .mobility import MPH, generate_trace
from .protocols import PROTOCOLS
from .radio import AttenuationParams, LinkBudget, fspl_db, obstacle_attenuation, received_power

DEFAULT_DENSITIES = (50, 100, 150, 200, 250, 300)
DEFAULT_SEEDS = tuple(range(10))


class RunError(RuntimeError):
    pass


def _int_list(text: str) -> list[int]:
    """``"50,100"`` or ``"0-9"`` or a mix of both."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    return out


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg.set(key.strip(), value.strip())
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    if getattr(args, "protocol", None):
        cfg.set("protocol", args.protocol)
    cfg.validate()
    return cfg


def _simulate(cfg: Config):
    scenario = build_scenario(cfg)
    n_users = len(scenario.trace.snapshots[0])
    try:
        log = run_simulation(scenario)
        report = compute_metrics(log, n_users, scenario.dmax)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - reported with its cause
        raise RunError(f"{cfg['protocol']} n={n_users} seed={cfg['seed']}: {exc}") from exc
    return log, report, n_users


def _summary(report, protocol: str, n: int, seed: int) -> str:
    c = report.counts
    return "\n".join([
        f"protocol          {protocol}",
        f"vehicles          {n}",
        f"seed              {seed}",
        f"intended pairs    {c['intended']}",
        f"delivered         {c['delivered']}",
        f"collided          {c['collided']}",
        f"dropped_shadow    {c['dropped_shadow']}",
        f"out_of_range      {c['out_of_range']}",
        f"delivery_prob     {report.delivery_probability:.6f}",
        f"delay_mean_s      {report.e2e_delay.mean:.9f}",
        f"delay_p95_s       {report.e2e_delay.p95:.9f}",
        f"frames            {c['frames_sent']} ({c['collided_frames']} collided)",
        f"collision_ratio   {report.collision_ratio:.6f}",
        f"m_success         {report.m_success:.9f}",
    ])


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.print_config:
        print(cfg.dumps(), end="")
        return 0
    log, report, n = _simulate(cfg)
    out = Path(args.out_dir)
    log.write(out)
    write_report([report_row(report, cfg["protocol"], n, cfg["seed"])], out / "results.csv")
    print(_summary(report, cfg["protocol"], n, cfg["seed"]))
    return 0


def _sweep_one(job: tuple[Config, str, int, int]) -> list[str]:
    cfg, protocol, n, seed = job
    cfg = copy.deepcopy(cfg)
    cfg.set("protocol", protocol)
    cfg.set("seed", seed)
    if not cfg["trace.file"]:
        cfg.set("trace.n_vehicles", n)
    _, report, _ = _simulate(cfg)
    return report_row(report, protocol, n, seed)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.print_config:
        print(cfg.dumps(), end="")
        return 0
    if cfg["trace.file"] and args.densities:
        raise ConfigError("--densities: cannot vary density with trace.file set")
    densities = args.densities or ([len(build_scenario(cfg).trace.snapshots[0])]
                                   if cfg["trace.file"] else list(DEFAULT_DENSITIES))
    seeds = args.seeds if args.seeds is not None else list(DEFAULT_SEEDS)
    protocols = args.protocols or ([args.protocol] if args.protocol else list(PROTOCOLS))
    if any(n < 1 for n in densities):
        raise ConfigError("--densities: must be positive integers")
    for p in protocols:
        if p not in PROTOCOLS:
            raise ConfigError(f"--protocols: unknown protocol {p!r}")
    jobs = [(cfg, p, n, s) for p in protocols for n in densities for s in seeds]
    rows: list[list[str]] = []
    failure: Exception | None = None
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_one, j) for j in jobs]
            for fut in futures:
                try:
                    rows.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    failure = failure or exc
    else:
        for j in jobs:
            try:
                rows.append(_sweep_one(j))
            except Exception as exc:  # noqa: BLE001
                failure = exc
                break
    order = {p: k for k, p in enumerate(protocols)}
    rows.sort(key=lambda r: (order[r[0]], int(r[1]), int(r[2])))
    out = Path(args.out_dir)
    results = write_report(rows, out / "results.csv")
    write_plot_data(read_results(results), out, protocols)
    print(f"{len(rows)} runs written to {results}")
    if failure is not None:
        if isinstance(failure, ConfigError):
            raise failure
        raise RunError(f"sweep aborted, partial results kept: {failure}")
    return 0


def cmd_link(args) -> int:
    if not args.distance > 0:
        raise ConfigError("--distance: must be positive")
    if args.n < 0 or args.l_obs < 0:
        raise ConfigError("--n and --l-obs: must be non-negative")
    if args.alpha < 0 or args.beta < 0:
        raise ConfigError("--alpha and --beta: must be non-negative")
    try:
        link = LinkBudget(args.tx_power, args.tx_gain, args.rx_gain, args.freq,
                          args.sensitivity, args.margin)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    pl = fspl_db(args.distance, link.f_mhz)
    shadow = obstacle_attenuation(Obstruction(args.n, args.l_obs),
                                  AttenuationParams(args.alpha, args.beta))
    p_r = received_power(link, pl, shadow)
    loc = int(args.n > 0 and p_r < link.sensitivity + link.margin)
    print(f"path_loss  {pl:.4f} dB")
    print(f"O_shadow   {shadow:.4f} dB")
    print(f"P_r        {p_r:.4f} dBm")
    print(f"loc        {loc}")
    return 0


def cmd_gen_map(args) -> int:
    try:
        m = manhattan_grid(args.cols, args.rows, args.block, args.street, args.inset)
    except (MapError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _emit(m.dumps(), args.out)
    return 0


def cmd_gen_trace(args) -> int:
    try:
        trace = generate_trace(args.vehicles, args.road_length, args.lanes,
                               (args.speed_min, args.speed_max), args.duration, args.dt,
                               seed=args.seed, lane_y0=args.lane_y0,
                               lane_spacing=args.lane_spacing)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(trace.dumps(), args.out)
    return 0


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario config file (flat 'section.key = value')")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--protocol", choices=PROTOCOLS, help="override the config protocol")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--print-config", action="store_true",
                   help="print the fully resolved configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="vehfog", description="Critical-message dissemination simulator for shadowed VANETs.",
        epilog=keys_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario", epilog=keys_help(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    _scenario_flags(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="density x seed x protocol cross product",
                           epilog=keys_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _scenario_flags(sweep)
    sweep.add_argument("--densities", type=_int_list,
                       help="vehicle counts, e.g. 50,100 or 50-60 (default 50,100,...,300)")
    sweep.add_argument("--seeds", type=_int_list, help="seeds, e.g. 0-9 (default 0-9)")
    sweep.add_argument("--protocols", type=lambda s: [p.strip() for p in s.split(",") if p.strip()],
                       help="comma-separated protocols (default: all)")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep.set_defaults(func=cmd_sweep)

    link = sub.add_parser("link", help="one-shot link budget calculator")
    defaults = LinkBudget()
    att = AttenuationParams()
    link.add_argument("--distance", type=float, required=True, help="tx-rx distance [m]")
    link.add_argument("--n", type=int, default=0, help="wall crossings [-]")
    link.add_argument("--l-obs", type=float, default=0.0, help="length inside buildings [m]")
    link.add_argument("--alpha", type=float, default=att.alpha, help="loss per wall [dB]")
    link.add_argument("--beta", type=float, default=att.beta, help="loss per metre inside [dB/m]")
    link.add_argument("--tx-power", type=float, default=defaults.P_t, help="[dBm]")
    link.add_argument("--tx-gain", type=float, default=defaults.G_t, help="[dBi]")
    link.add_argument("--rx-gain", type=float, default=defaults.G_r, help="[dBi]")
    link.add_argument("--freq", type=float, default=defaults.f_mhz, help="[MHz]")
    link.add_argument("--sensitivity", type=float, default=defaults.sensitivity, help="[dBm]")
    link.add_argument("--margin", type=float, default=defaults.margin, help="[dB]")
    link.set_defaults(func=cmd_link)

    gen = sub.add_parser("gen", help="generate a map or a trace")
    gsub = gen.add_subparsers(dest="what", required=True)
    gm = gsub.add_parser("map", help="Manhattan grid of buildings")
    gm.add_argument("--cols", type=int, default=3)
    gm.add_argument("--rows", type=int, default=3)
    gm.add_argument("--block", type=float, default=80.0, help="block edge [m]")
    gm.add_argument("--street", type=float, default=20.0, help="street width [m]")
    gm.add_argument("--inset", type=float, default=0.0, help="building inset [m]")
    gm.add_argument("--out", help="output file (default: stdout)")
    gm.set_defaults(func=cmd_gen_map)
    gt = gsub.add_parser("trace", help="multi-lane constant-speed trace")
    gt.add_argument("--vehicles", type=int, default=100)
    gt.add_argument("--road-length", type=float, default=10_000.0, help="[m]")
    gt.add_argument("--lanes", type=int, default=3)
    gt.add_argument("--lane-y0", type=float, default=10.0, help="[m]")
    gt.add_argument("--lane-spacing", type=float, default=3.5, help="[m]")
    gt.add_argument("--speed-min", type=float, default=30 * MPH, help="[m/s]")
    gt.add_argument("--speed-max", type=float, default=50 * MPH, help="[m/s]")
    gt.add_argument("--duration", type=float, default=10.0, help="[s]")
    gt.add_argument("--dt", type=float, default=1.0, help="[s]")
    gt.add_argument("--seed", type=int, default=0)
    gt.add_argument("--out", help="output file (default: stdout)")
    gt.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else 1
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RunError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 2

