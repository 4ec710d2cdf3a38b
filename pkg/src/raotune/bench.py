"""Benchmark harness: ordering sweeps, tuned-vs-default reports, overhead, calibration.

Flop counts are the primary, machine-independent metric; wall times are
reported alongside. Timings below 10 ms are the median of five repeats.
"""

from __future__ import annotations

import argparse
import csv
import gc
import io
import logging
import math
import os
import statistics
import sys
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .bus import BusError, DecisionClient, DecisionServer, tuned_solve
from .fuzzy import (ALWAYS_COLAMD_RULES, RuleBase, default_rule_base, fit_rule_base,
                    dump_rule_base, load_rule_base, load_rule_file)
from .lu import SingularMatrixError, lu_factorize, solve
from .ordering import OrderingParam, order
from .sparse import SparseMatrix, density, extract_features, read_matrix_market

__all__ = [
    "CorpusEntry",
    "SweepRecord",
    "SpeedupRecord",
    "OverheadRecord",
    "Summary",
    "load_corpus",
    "bundled_manifest",
    "table_a1_manifest",
    "table_a1_corpus",
    "format_summary",
    "run_sweep",
    "report_best_vs_default",
    "report_tuned_vs_default",
    "report_overhead",
    "calibrate",
    "decision_switch_points",
    "write_sweep_csv",
    "write_speedups_csv",
    "write_overhead_csv",
    "read_sweep_csv",
    "SWEEP_FIELDS",
    "SPEEDUP_FIELDS",
    "OVERHEAD_FIELDS",
    "REFERENCE_FIGURES",
    "main",
]

log = logging.getLogger(__name__)

DEFAULT = OrderingParam.COLAMD
FAST_TIMING = 0.010
REPEATS = 5
OVERHEAD_QUADS = 10

# Published figures, printed next to our measurements for comparison only.
REFERENCE_FIGURES = {
    "best_vs_default_max": 4151.0,
    "tuned_vs_default_mean": 1.2,
    "tuned_vs_default_max": 3.6,
}


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    path: Path
    expected_density: Optional[float] = None
    # decimal places printed for expected_density
    precision: Optional[int] = None

    def load(self) -> SparseMatrix:
        return read_matrix_market(self.path)

    def density_matches(self, computed: float) -> bool:
        if self.expected_density is None:
            return True
        return round(computed, self.precision) == self.expected_density


@dataclass(frozen=True)
class SweepRecord:
    matrix: str
    n: int
    nnz: int
    density: float
    param: OrderingParam
    status: str  # ok | singular | failed
    fill_in: int = 0
    flops: int = 0
    order_time: float = 0.0
    factor_time: float = 0.0

    @property
    def total_time(self) -> float:
        return self.order_time + self.factor_time


@dataclass(frozen=True)
class SpeedupRecord:
    matrix: str
    baseline_param: OrderingParam
    compared_param: OrderingParam
    speedup_time: float
    speedup_flops: float
    density: float = float("nan")


@dataclass(frozen=True)
class OverheadRecord:
    matrix: str
    param: OrderingParam
    fill_in: int
    flops: int
    factor_time: float
    direct_time: float
    bus_time: float
    round_trip_us: float
    daemon_us: int
    overhead_ratio: float


@dataclass
class Summary:
    count: int
    flops_mean: float
    flops_geomean: float
    flops_max: float
    time_mean: float
    time_geomean: float
    time_max: float
    histogram: dict = field(default_factory=dict)
    selection_accuracy: Optional[float] = None
    skipped: list = field(default_factory=list)


# -- corpus ------------------------------------------------------------------

def load_corpus(manifest) -> list[CorpusEntry]:
    """Read ``name <tab> path <tab> [expected_density]`` lines; paths are manifest-relative."""
    manifest = Path(manifest)
    base = manifest.parent
    entries = []
    for lineno, raw in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.rstrip("\n").split("\t")
        if len(parts) < 2 or len(parts) > 3 or not parts[0] or not parts[1]:
            raise ValueError(f"{manifest}:{lineno}: expected name<TAB>path[<TAB>density]")
        expected = precision = None
        if len(parts) == 3 and parts[2].strip():
            text = parts[2].strip()
            expected = float(text)
            precision = len(text.split(".", 1)[1]) if "." in text else 0
        path = Path(parts[1])
        entries.append(CorpusEntry(parts[0], path if path.is_absolute() else base / path,
                                   expected, precision))
    return entries


def bundled_manifest() -> Path:
    return Path(__file__).parent / "data" / "corpus" / "manifest.tsv"


def table_a1_manifest() -> Path:
    return Path(__file__).parent / "data" / "table_a1.tsv"


def table_a1_corpus(directory=None) -> list[CorpusEntry]:
    """Table entries whose files exist, looked up in ``directory`` or ``$RAOTUNE_TABLE_DIR``.

    Without either, paths resolve relative to the packaged manifest.
    """
    entries = load_corpus(table_a1_manifest())
    directory = directory or os.environ.get("RAOTUNE_TABLE_DIR")
    if directory:
        entries = [CorpusEntry(e.name, Path(directory) / e.path.name, e.expected_density,
                               e.precision) for e in entries]
    return [e for e in entries if e.path.exists()]


# -- timing ------------------------------------------------------------------

def _median_time(fn: Callable[[], object]):
    t0 = time.perf_counter()
    result = fn()
    first = time.perf_counter() - t0
    if first >= FAST_TIMING:
        return result, first
    times = [first]
    for _ in range(REPEATS - 1):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return result, statistics.median(times)


def _quiet_time(fn: Callable[[], object]):
    """One timed call with garbage collection paused, as ``timeit`` does."""
    gc.collect()
    enabled = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        result = fn()
        return result, time.perf_counter() - t0
    finally:
        if enabled:
            gc.enable()


def _measure(matrix: SparseMatrix, param: OrderingParam, threshold: float):
    perm, order_time = _median_time(lambda: order(matrix, param))
    (factors, stats), factor_time = _median_time(lambda: lu_factorize(matrix, perm, threshold))
    return factors, stats, order_time, factor_time


# -- sweep -------------------------------------------------------------------

def run_sweep(corpus: Iterable[CorpusEntry], params: Optional[Sequence[OrderingParam]] = None,
              pivot_threshold: float = 1.0) -> list[SweepRecord]:
    """Factor every matrix under every parameter; failures become records, never exceptions."""
    params = list(OrderingParam) if params is None else list(params)
    records = []
    for entry in corpus:
        try:
            matrix = entry.load()
            dens = density(matrix)
        except Exception as exc:
            log.warning("%s: cannot load (%s)", entry.name, exc)
            records += [SweepRecord(entry.name, 0, 0, float("nan"), p, "failed") for p in params]
            continue
        for p in params:
            base = dict(matrix=entry.name, n=matrix.n_rows, nnz=matrix.nnz, density=dens, param=p)
            try:
                _, stats, t_order, t_factor = _measure(matrix, p, pivot_threshold)
            except SingularMatrixError as exc:
                log.info("%s/%s: %s", entry.name, p, exc)
                records.append(SweepRecord(status="singular", **base))
                continue
            except Exception as exc:
                log.warning("%s/%s: failed (%s)", entry.name, p, exc)
                records.append(SweepRecord(status="failed", **base))
                continue
            records.append(SweepRecord(status="ok", fill_in=stats.fill_in, flops=stats.flops,
                                       order_time=t_order, factor_time=t_factor, **base))
    return records


def _by_matrix(sweep: Iterable[SweepRecord]) -> dict[str, dict[OrderingParam, SweepRecord]]:
    table: dict[str, dict[OrderingParam, SweepRecord]] = {}
    for r in sweep:
        row = table.setdefault(r.matrix, {})
        if r.param in row:
            raise ValueError(f"duplicate sweep record for ({r.matrix}, {r.param})")
        row[r.param] = r
    return table


def _best(row: dict[OrderingParam, SweepRecord]) -> Optional[SweepRecord]:
    ok = [row[p] for p in OrderingParam if p in row and row[p].status == "ok"]
    if not ok:
        return None
    return min(ok, key=lambda r: r.flops)  # min keeps the first, so COLAMD wins ties


def _geomean(values: Sequence[float]) -> float:
    return math.exp(math.fsum(math.log(v) for v in values) / len(values))


def _summarize(records: Sequence[SpeedupRecord], histogram=None, skipped=()) -> Summary:
    if not records:
        nan = float("nan")
        return Summary(0, nan, nan, nan, nan, nan, nan, dict(histogram or {}), None, list(skipped))
    fl = [r.speedup_flops for r in records]
    tm = [r.speedup_time for r in records]
    return Summary(len(records), statistics.fmean(fl), _geomean(fl), max(fl),
                   statistics.fmean(tm), _geomean(tm), max(tm),
                   dict(histogram or {}), None, list(skipped))


def report_best_vs_default(sweep: Sequence[SweepRecord]) -> tuple[list[SpeedupRecord], Summary]:
    table = _by_matrix(sweep)
    missing = [m for m, row in table.items() if DEFAULT not in row]
    if missing:
        raise ValueError(f"sweep lacks {DEFAULT} rows for: {', '.join(missing)}")
    records, skipped = [], []
    hist: Counter = Counter()
    for name, row in table.items():
        base = row[DEFAULT]
        best = _best(row)
        if base.status != "ok" or best is None:
            skipped.append(name)
            continue
        hist[best.param.value] += 1
        records.append(SpeedupRecord(
            name, DEFAULT, best.param,
            speedup_time=base.total_time / best.total_time if best is not base else 1.0,
            speedup_flops=base.flops / best.flops,
            density=base.density))
    return records, _summarize(records, hist, skipped)


def _default_pipeline(matrix, rhs, threshold):
    perm = order(matrix, DEFAULT)
    factors, stats = lu_factorize(matrix, perm, threshold)
    return solve(factors, rhs), stats


def report_tuned_vs_default(corpus: Sequence[CorpusEntry], rule_base: RuleBase,
                            endpoint: Optional[str] = None, pivot_threshold: float = 1.0,
                            sweep: Optional[Sequence[SweepRecord]] = None
                            ) -> tuple[list[SpeedupRecord], Summary]:
    """Tuned pipeline against the COLAMD pipeline.

    ``selection_accuracy`` is the fraction of matrices for which the tuned
    choice attains the sweep's minimum flop count.
    """
    corpus = list(corpus)
    if sweep is None:
        sweep = run_sweep(corpus, pivot_threshold=pivot_threshold)
    table = _by_matrix(sweep)
    records, skipped = [], []
    hist: Counter = Counter()
    hits = 0
    for entry in corpus:
        try:
            matrix = entry.load()
            rhs = matrix.matvec(np.ones(matrix.n_cols))
            (_, tuned_stats, decision), t_tuned = _median_time(
                lambda: tuned_solve(matrix, rhs, endpoint, rule_base, pivot_threshold))
            (_, base_stats), t_base = _median_time(
                lambda: _default_pipeline(matrix, rhs, pivot_threshold))
        except Exception as exc:
            log.warning("%s: skipped (%s)", entry.name, exc)
            skipped.append(entry.name)
            continue
        hist[decision.chosen.value] += 1
        best = _best(table.get(entry.name, {}))
        if best is not None and tuned_stats.flops == best.flops:
            hits += 1
        records.append(SpeedupRecord(entry.name, DEFAULT, decision.chosen,
                                     speedup_time=t_base / t_tuned,
                                     speedup_flops=base_stats.flops / tuned_stats.flops,
                                     density=density(matrix)))
    summary = _summarize(records, hist, skipped)
    summary.selection_accuracy = hits / len(records) if records else None
    return records, summary


def report_overhead(corpus: Sequence[CorpusEntry], endpoint: str, pivot_threshold: float = 1.0,
                    repeats: int = OVERHEAD_QUADS, timeout: float = 1.0) -> list[OverheadRecord]:
    """Direct COLAMD solve against the same solve routed through the decision daemon.

    The daemon is expected to answer COLAMD everywhere so only the plumbing
    cost differs. Runs follow an ABBA pattern (direct, bus, bus, direct, ...)
    with the garbage collector paused, and ``repeats`` counts the quads. The
    overhead ratio is the median over quads of bus time / direct time summed
    within the quad, which cancels machine speed drift that is linear across
    one quad. The reported times are per-path medians.
    """
    client = DecisionClient(endpoint, timeout).connect()  # raises if unreachable
    client.close()
    out = []
    for entry in corpus:
        matrix = entry.load()
        rhs = matrix.matvec(np.ones(matrix.n_cols))

        def bus_path():
            feats = extract_features(matrix)
            with DecisionClient(endpoint, timeout) as c:
                resp, rtt = c.query(feats)
            perm = order(matrix, resp.chosen)
            factors, stats = lu_factorize(matrix, perm, pivot_threshold)
            solve(factors, rhs)
            return resp, rtt, stats

        direct_t, bus_t, quad_ratios, rtts, micros = [], [], [], [], []
        direct_stats = bus_stats = resp = None
        for _ in range(max(1, repeats)):
            quad = {"direct": 0.0, "bus": 0.0}
            for path in ("direct", "bus", "bus", "direct"):
                if path == "direct":
                    (_, direct_stats), t = _quiet_time(
                        lambda: _default_pipeline(matrix, rhs, pivot_threshold))
                    direct_t.append(t)
                else:
                    (resp, rtt, bus_stats), t = _quiet_time(bus_path)
                    bus_t.append(t)
                    rtts.append(rtt)
                    micros.append(resp.daemon_micros)
                quad[path] += t
            quad_ratios.append(quad["bus"] / quad["direct"])
        if resp.chosen is not DEFAULT:
            raise BusError(f"daemon chose {resp.chosen} for {entry.name}; overhead needs {DEFAULT}")
        if (direct_stats.fill_in, direct_stats.flops) != (bus_stats.fill_in, bus_stats.flops):
            raise AssertionError(f"{entry.name}: direct and bus paths factored differently")
        out.append(OverheadRecord(entry.name, resp.chosen, direct_stats.fill_in,
                                  direct_stats.flops, direct_stats.factor_time,
                                  statistics.median(direct_t), statistics.median(bus_t),
                                  statistics.median(rtts) * 1e6, int(statistics.median(micros)),
                                  statistics.median(quad_ratios)))
    return out


# -- calibration -------------------------------------------------------------

def calibrate(sweep: Sequence[SweepRecord], n_buckets: Optional[int] = 6,
              overlap: float = 0.2) -> str:
    """Suggest a rule-base config from a sweep (advisory).

    The cost of a parameter on a matrix is its log flop count, so the
    fitted rules minimise the geometric mean of flops over the sweep and are
    never worse than COLAMD everywhere. See ``fit_rule_base``.
    """
    table = _by_matrix(sweep)
    if not table:
        raise ValueError("empty sweep")
    densities, costs = [], []
    for name, row in table.items():
        if set(row) != set(OrderingParam):
            raise ValueError(f"sweep for {name} does not cover all ordering parameters")
        dens = row[DEFAULT].density
        cost = {p: (math.log(row[p].flops) if row[p].status == "ok" else math.inf)
                for p in OrderingParam}
        if not math.isfinite(dens) or all(math.isinf(c) for c in cost.values()):
            continue
        densities.append(dens)
        costs.append(cost)
    if not densities:
        raise ValueError("sweep holds no usable matrices")
    rb = fit_rule_base(densities, costs, n_buckets=n_buckets, overlap=overlap)
    header = (f"suggested by raobench calibrate from {len(densities)} matrices "
              f"({'per-density' if n_buckets is None else n_buckets} buckets); advisory only")
    text = dump_rule_base(rb, header)
    load_rule_base(text)
    return text


def decision_switch_points(rule_base: RuleBase, lo: float = 0.0, hi: float = 10.0,
                           points: int = 10_001) -> list[tuple[float, str]]:
    """Densities on a uniform grid where the decision changes, with the new choice."""
    from .fuzzy import decide

    grid = np.linspace(lo, hi, points)
    out = []
    prev = None
    for x in grid.tolist():
        dec = decide(rule_base, x)
        label = f"{dec.chosen.value}{'*' if dec.used_fallback else ''}"
        if label != prev:
            out.append((x, label))
            prev = label
    return out


# -- CSV / text output -------------------------------------------------------

SWEEP_FIELDS = ["matrix", "n", "nnz", "density", "param", "status", "fill_in", "flops",
                "order_time", "factor_time"]
SPEEDUP_FIELDS = ["matrix", "density", "baseline_param", "compared_param", "speedup_flops",
                  "speedup_time"]
OVERHEAD_FIELDS = ["matrix", "param", "fill_in", "flops", "factor_time", "direct_time",
                   "bus_time", "round_trip_us", "daemon_us", "overhead_ratio"]


def _fmt(v) -> str:
    if isinstance(v, OrderingParam):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path_or_stream, fields, rows):
    own = not hasattr(path_or_stream, "write")
    fh = open(path_or_stream, "w", newline="", encoding="utf-8") if own else path_or_stream
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[f]) for f in fields])
    finally:
        if own:
            fh.close()


def write_sweep_csv(path_or_stream, records: Iterable[SweepRecord]):
    _write(path_or_stream, SWEEP_FIELDS, records)


def write_speedups_csv(path_or_stream, records: Iterable[SpeedupRecord]):
    _write(path_or_stream, SPEEDUP_FIELDS, records)


def write_overhead_csv(path_or_stream, records: Iterable[OverheadRecord]):
    _write(path_or_stream, OVERHEAD_FIELDS, records)


def read_sweep_csv(path) -> list[SweepRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [SweepRecord(r["matrix"], int(r["n"]), int(r["nnz"]), float(r["density"]),
                        OrderingParam.parse(r["param"]), r["status"], int(r["fill_in"]),
                        int(r["flops"]), float(r["order_time"]), float(r["factor_time"]))
            for r in rows]


def format_summary(title: str, summary: Summary, reference: dict | None = None) -> str:
    out = io.StringIO()
    out.write(f"== {title} ==\n")
    out.write(f"matrices: {summary.count}\n")
    out.write(f"flops speedup: mean {summary.flops_mean:.4f}  geomean {summary.flops_geomean:.4f}"
              f"  max {summary.flops_max:.4f}\n")
    out.write(f"time speedup:  mean {summary.time_mean:.4f}  geomean {summary.time_geomean:.4f}"
              f"  max {summary.time_max:.4f}\n")
    if summary.histogram:
        hist = ", ".join(f"{k}={v}" for k, v in sorted(summary.histogram.items()))
        out.write(f"chosen parameters: {hist}\n")
    if summary.selection_accuracy is not None:
        out.write(f"selection accuracy: {summary.selection_accuracy:.4f}\n")
    if summary.skipped:
        out.write(f"skipped: {', '.join(summary.skipped)}\n")
    for k, v in (reference or {}).items():
        out.write(f"reference {k}: {v} (published, other hardware and solver; not reproduced)\n")
    return out.getvalue()


# -- CLI ---------------------------------------------------------------------

def _rules(args) -> RuleBase:
    return load_rule_file(args.rules) if args.rules else default_rule_base()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="raobench", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=["sweep", "tuned", "overhead", "calibrate"])
    parser.add_argument("--corpus", default=None,
                        help="manifest file (default: bundled synthetic corpus)")
    parser.add_argument("--rules", default=None, help="rule-base file (default: shipped rules)")
    parser.add_argument("--endpoint", default=None, help="decision daemon host:port or socket path")
    parser.add_argument("--threshold", type=float, default=1.0, help="pivot threshold in (0, 1]")
    parser.add_argument("--buckets", type=int, default=6, help="calibration density buckets")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    corpus = load_corpus(args.corpus or bundled_manifest())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for entry in corpus:
        if entry.expected_density is not None and entry.path.exists():
            got = density(entry.load())
            if not entry.density_matches(got):
                log.warning("%s: density %.6g does not match manifest %s",
                            entry.name, got, entry.expected_density)

    if args.command == "sweep":
        sweep = run_sweep(corpus, pivot_threshold=args.threshold)
        write_sweep_csv(out / "sweep.csv", sweep)
        records, summary = report_best_vs_default(sweep)
        write_speedups_csv(out / "speedups.csv", records)
        text = format_summary("best vs default", summary,
                              {"best_vs_default_max": REFERENCE_FIGURES["best_vs_default_max"]})
    elif args.command == "tuned":
        sweep = run_sweep(corpus, pivot_threshold=args.threshold)
        write_sweep_csv(out / "sweep.csv", sweep)
        records, summary = report_tuned_vs_default(corpus, _rules(args), args.endpoint,
                                                   args.threshold, sweep)
        write_speedups_csv(out / "speedups.csv", records)
        text = format_summary("tuned vs default", summary,
                              {k: v for k, v in REFERENCE_FIGURES.items() if k.startswith("tuned")})
    elif args.command == "overhead":
        server = None
        endpoint = args.endpoint
        if endpoint is None:
            server = DecisionServer(load_rule_base(ALWAYS_COLAMD_RULES)).start()
            endpoint = server.endpoint
        try:
            rows = report_overhead(corpus, endpoint, args.threshold)
        except BusError as exc:
            print(f"raobench: {exc}", file=sys.stderr)
            return 2
        finally:
            if server is not None:
                server.stop()
        write_overhead_csv(out / "overhead.csv", rows)
        ratios = [r.overhead_ratio for r in rows]
        text = (f"== overhead ==\nmatrices: {len(rows)}\n"
                f"overhead ratio: median {statistics.median(ratios):.4f}  max {max(ratios):.4f}\n"
                f"round trip (us): median {statistics.median(r.round_trip_us for r in rows):.1f}\n")
    else:
        sweep = run_sweep(corpus, pivot_threshold=args.threshold)
        write_sweep_csv(out / "sweep.csv", sweep)
        config = calibrate(sweep, n_buckets=args.buckets)
        (out / "calibrated.rules").write_text(config, encoding="utf-8")
        text = "== calibrate ==\n" + config
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
