"""Command-line front end.

Exit codes: 0 success, 1 usage or parse error, 2 numeric failure,
3 covert capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import yaml

from wipad import dcf_sim
from wipad.dcf_model import ConvergenceError, DcfParams, throughputs
from wipad.phy_padding import (
    pad_capacity_bits,
    rate_by_mbps,
    rate_table,
)
from wipad.steg_codec import (
    CapacityError,
    CovertMessage,
    MessageAssembler,
    build_frame,
    chunk_message,
    read_dump,
    write_dump,
)

log = logging.getLogger("wipad")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAPACITY = 0, 1, 2, 3

ENGINES = ("model", "sim", "both")
COLUMNS = (
    "scenario",
    "engine",
    "n",
    "L_octets",
    "rate_mbps",
    "ber",
    "tau",
    "p_coll",
    "p_f",
    "s_mbps",
    "s_data_kbps",
    "s_ack_kbps",
    "c_data_bits",
    "c_ack_bits",
    "ci_halfwidth",
)
GAP_COLUMN = "rel_gap_s"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    n_list: list[int]
    ber_list: list[float]
    frame_octets_list: list[int]
    rate_list: list[int]
    overrides: dict = field(default_factory=dict)
    engine: str = "model"
    seed: int = 0
    horizon_events: int = 1_000_000
    warmup_events: int = 10_000
    batches: int = 20

    def __post_init__(self) -> None:
        for key in ("n_list", "ber_list", "frame_octets_list", "rate_list"):
            if not getattr(self, key):
                raise UsageError(f"scenario '{self.name}': {key} must be non-empty")
        if self.engine not in ENGINES:
            raise UsageError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        for r in self.rate_list:
            try:
                rate_by_mbps(r)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        for b in self.ber_list:
            if not 0.0 <= b <= 1.0:
                raise UsageError(f"BER {b} outside [0, 1]")
        allowed = {f.name for f in fields(DcfParams)} - {"n", "frame_octets", "p_b"}
        unknown = set(self.overrides) - allowed
        if unknown:
            raise UsageError(f"unknown parameter overrides: {sorted(unknown)}")
        # build every grid point's params once so bad values abort early
        for point in self.points():
            try:
                self.params_for(*point)
            except ValueError as exc:
                raise UsageError(f"invalid grid point {point}: {exc}") from None

    def points(self) -> list[tuple[int, int, int, float]]:
        """Grid points (n, L, rate, ber) in output order."""
        return sorted(
            (n, L, r, b)
            for n in self.n_list
            for L in self.frame_octets_list
            for r in self.rate_list
            for b in self.ber_list
        )

    def params_for(self, n: int, frame_octets: int, rate_mbps: int, ber: float) -> DcfParams:
        return DcfParams(n=n, frame_octets=frame_octets, p_b=ber, **self.overrides)

    @property
    def sim_settings(self) -> dict:
        return {
            "horizon_events": self.horizon_events,
            "warmup_events": self.warmup_events,
            "batches": self.batches,
        }


def _int_list(value, key: str) -> list[int]:
    items = value if isinstance(value, list) else [value]
    try:
        out = [int(v) for v in items]
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected integers, got {value!r}") from None
    if any(isinstance(v, bool) or float(v) != int(v) for v in items if not isinstance(v, str)):
        raise UsageError(f"{key}: expected integers, got {value!r}")
    return out


def _float_list(value, key: str) -> list[float]:
    items = value if isinstance(value, list) else [value]
    try:
        # PyYAML reads "1e-5" as a string; float() accepts both
        return [float(v) for v in items]
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected numbers, got {value!r}") from None


def load_scenario(path: Path, engine: str | None = None, seed: int | None = None) -> Scenario:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from None
    if not isinstance(raw, dict) or not raw:
        raise UsageError(f"scenario {path} is empty or not a mapping")
    known = {f.name for f in fields(Scenario)}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(f"unknown scenario keys: {sorted(unknown)}")
    missing = {"n_list", "ber_list", "frame_octets_list", "rate_list"} - set(raw)
    if missing:
        raise UsageError(f"scenario {path} lacks {sorted(missing)}")
    overrides = raw.get("overrides") or {}
    if not isinstance(overrides, dict):
        raise UsageError("overrides must be a mapping")
    return Scenario(
        name=str(raw.get("name", Path(path).stem)),
        n_list=_int_list(raw["n_list"], "n_list"),
        ber_list=_float_list(raw["ber_list"], "ber_list"),
        frame_octets_list=_int_list(raw["frame_octets_list"], "frame_octets_list"),
        rate_list=_int_list(raw["rate_list"], "rate_list"),
        overrides=overrides,
        engine=engine or str(raw.get("engine", "model")),
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        horizon_events=int(float(raw.get("horizon_events", 1_000_000))),
        warmup_events=int(float(raw.get("warmup_events", 10_000))),
        batches=int(raw.get("batches", 20)),
    )


@dataclass
class ResultRow:
    scenario: str
    engine: str
    n: int
    L_octets: int
    rate_mbps: int
    ber: float
    tau: float
    p_coll: float
    p_f: float
    s_mbps: float
    s_data_kbps: float
    s_ack_kbps: float
    c_data_bits: int
    c_ack_bits: int
    ci_halfwidth: float | None = None
    rel_gap_s: float | None = None

    def cells(self, with_gap: bool = False) -> list[str]:
        out = [
            self.scenario,
            self.engine,
            str(self.n),
            str(self.L_octets),
            str(self.rate_mbps),
            _fmt_ber(self.ber),
            f"{self.tau:.12f}",
            f"{self.p_coll:.12f}",
            f"{self.p_f:.12f}",
            f"{self.s_mbps:.6f}",
            f"{self.s_data_kbps:.3f}",
            f"{self.s_ack_kbps:.3f}",
            str(self.c_data_bits),
            str(self.c_ack_bits),
            "" if self.ci_halfwidth is None else f"{self.ci_halfwidth:.6f}",
        ]
        if with_gap:
            out.append("" if self.rel_gap_s is None else f"{self.rel_gap_s:.6f}")
        return out


def _fmt_ber(ber: float) -> str:
    return "0" if ber == 0 else repr(float(ber))


def model_row(scenario: str, n: int, L: int, rate_mbps: int, ber: float, params: DcfParams) -> ResultRow:
    sol = throughputs(params, rate_by_mbps(rate_mbps))
    return ResultRow(
        scenario, "model", n, L, rate_mbps, ber,
        sol.tau, sol.p_coll, sol.p_f, sol.s_mbps,
        1000.0 * sol.s_data_mbps, 1000.0 * sol.s_ack_mbps,
        sol.c_data_bits, sol.c_ack_bits,
    )  # fmt: skip


def sim_row(scenario: str, n: int, L: int, rate_mbps: int, ber: float, params: DcfParams,
            rep: dcf_sim.SimReport) -> ResultRow:
    rate = rate_by_mbps(rate_mbps)
    return ResultRow(
        scenario, "sim", n, L, rate_mbps, ber,
        rep.observed_tau, rep.observed_p_coll, rep.observed_p_f, rep.s_mbps,
        1000.0 * rep.s_data_mbps, 1000.0 * rep.s_ack_mbps,
        pad_capacity_bits(L, rate), pad_capacity_bits(params.ack_octets, rate),
        ci_halfwidth=rep.ci_halfwidth_s,
    )  # fmt: skip


def _model_task(args):
    return model_row(*args)


def run_scenario(sc: Scenario, workers: int = 1) -> list[ResultRow]:
    """Evaluate every grid point with the scenario's engine(s), in grid order."""
    points = sc.points()
    rows_by_point: dict[tuple, list[ResultRow]] = {p: [] for p in points}

    if sc.engine in ("model", "both"):
        tasks = [(sc.name, *p, sc.params_for(*p)) for p in points]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                model_rows = list(pool.map(_model_task, tasks))
        else:
            model_rows = [_model_task(t) for t in tasks]
        for p, row in zip(points, model_rows):
            rows_by_point[p].append(row)

    if sc.engine in ("sim", "both"):
        configs = [
            dcf_sim.SimConfig(sc.params_for(*p), rate_by_mbps(p[2]), seed=sc.seed, **sc.sim_settings)
            for p in points
        ]
        reports = dcf_sim.sweep(configs, workers=workers)
        for p, cfg, rep in zip(points, configs, reports):
            if isinstance(rep, Exception):
                raise rep
            row = sim_row(sc.name, *p, cfg.params, rep)
            if sc.engine == "both":
                ref = rows_by_point[p][0].s_mbps
                row.rel_gap_s = rep.s_mbps / ref - 1.0 if ref else math.nan
            rows_by_point[p].append(row)

    return [row for p in points for row in rows_by_point[p]]


def write_rows(rows: Sequence[ResultRow], out, with_gap: bool = False) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(COLUMNS) + ([GAP_COLUMN] if with_gap else []))
    for row in rows:
        writer.writerow(row.cells(with_gap))


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def cmd_rates(args) -> int:
    lines = []
    header = f"{'rate_mbps':>9}  {'modulation':<10}  {'code_rate':>9}  {'n_bps':>5}"
    if args.frame is not None:
        header += f"  {'pad_bits':>8}"
    lines.append(header)
    for r in rate_table():
        line = f"{r.rate_mbps:>9}  {r.modulation.value:<10}  {str(r.code_rate):>9}  {r.n_bps:>5}"
        if args.frame is not None:
            line += f"  {pad_capacity_bits(args.frame, r):>8}"
        lines.append(line)
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    n = 1 if args.n is None else args.n
    L = 214 if args.frame is None else args.frame
    rate = 54 if args.rate is None else args.rate
    ber = 0.0 if args.ber is None else args.ber
    try:
        rate_by_mbps(rate)
        params = DcfParams(n=n, frame_octets=L, p_b=ber)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    row = model_row("solve", n, L, rate, ber, params)
    buf = io.StringIO()
    write_rows([row], buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _require_scenario(args) -> Scenario:
    if not args.scenario:
        raise UsageError("--scenario is required")
    return load_scenario(Path(args.scenario), engine=args.engine, seed=args.seed)


def cmd_sweep(args) -> int:
    sc = _require_scenario(args)
    rows = run_scenario(sc, workers=args.workers)
    buf = io.StringIO()
    write_rows(rows, buf, with_gap=sc.engine == "both")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    args.engine = "sim"
    return cmd_sweep(args)


def cmd_embed(args) -> int:
    if not args.message or not args.out:
        raise UsageError("embed needs --message and --out")
    payload = Path(args.message).read_bytes()
    msg = CovertMessage(payload)
    needed = msg.bits().size

    if args.frames:
        with open(args.frames, "rb") as fh:
            carriers = [(rate, frame.psdu) for rate, frame in read_dump(fh)]
    else:
        L = 214 if args.frame is None else args.frame
        rate = rate_by_mbps(54 if args.rate is None else args.rate)
        cap = pad_capacity_bits(L, rate)
        if cap == 0:
            raise CapacityError(needed, 0)
        carriers = [(rate, bytes(L))] * -(-needed // cap)

    chunks = chunk_message(msg, [pad_capacity_bits(len(psdu), rate) for rate, psdu in carriers])
    records = [(rate, build_frame(psdu, rate, c)) for (rate, psdu), c in zip(carriers, chunks)]
    with open(args.out, "wb") as fh:
        count = write_dump(fh, records)
    log.info("embedded %d bits in %d frames", needed, count)
    print(f"frames={count} covert_bits={needed}")
    return EXIT_OK


def cmd_extract(args) -> int:
    if not args.frames or not args.out:
        raise UsageError("extract needs --frames and --out")
    acc = MessageAssembler()
    with open(args.frames, "rb") as fh:
        for _, frame in read_dump(fh):
            acc.feed(frame.pad)
            if acc.complete:
                break
    if not acc.complete:
        raise UsageError("frame dump ends before the covert message is complete")
    data = acc.message()
    Path(args.out).write_bytes(data)
    print(f"message_octets={len(data)}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wipad", description="WiPad padding covert channel toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *names):
        if "frame" in names:
            p.add_argument("--frame", type=int, help="frame (PSDU) length in octets")
        if "rate" in names:
            p.add_argument("--rate", type=int, help="PHY rate in Mbit/s")
        if "n" in names:
            p.add_argument("--n", type=int, help="number of contending stations")
        if "ber" in names:
            p.add_argument("--ber", type=float, help="bit error rate")
        if "seed" in names:
            p.add_argument("--seed", type=int)
        if "scenario" in names:
            p.add_argument("--scenario", help="YAML scenario file")
        if "engine" in names:
            p.add_argument("--engine", choices=ENGINES)
        if "workers" in names:
            p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("rates", help="print the OFDM rate table")
    common(p, "frame")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("solve", help="one analytical evaluation as a CSV row")
    common(p, "frame", "rate", "n", "ber")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="evaluate a scenario grid to CSV")
    common(p, "scenario", "engine", "seed", "workers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="simulate a scenario grid to CSV")
    common(p, "scenario", "seed", "workers")
    p.set_defaults(func=cmd_simulate, engine="sim")

    p = sub.add_parser("embed", help="embed a message into frame padding")
    common(p, "frame", "rate")
    p.add_argument("--message", help="file holding the covert message")
    p.add_argument("--frames", help="carrier frame dump (default: synthesize frames)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover a message from a frame dump")
    p.add_argument("--frames", help="frame dump to read")
    p.add_argument("--out", help="where to write the message")
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wipad: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"wipad: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConvergenceError, ArithmeticError) as exc:
        print(f"wipad: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"wipad: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
