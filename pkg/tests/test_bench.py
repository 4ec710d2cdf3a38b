import csv
import io
import math

import numpy as np
import pytest

from raotune.bench import (OVERHEAD_FIELDS, SPEEDUP_FIELDS, SWEEP_FIELDS, CorpusEntry,
                           SweepRecord, _geomean, calibrate, format_summary, load_corpus, main,
                           read_sweep_csv, report_best_vs_default, report_overhead,
                           report_tuned_vs_default, run_sweep, table_a1_corpus,
                           write_speedups_csv, write_sweep_csv)
from raotune.bus import DecisionServer
from raotune.fixtures import arrow, banded, grid_convection_diffusion, random_sparse, tridiagonal
from raotune.fuzzy import ALWAYS_COLAMD_RULES, load_rule_base
from raotune.ordering import OrderingParam as P
from raotune.sparse import density, write_matrix_market


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    mats = {"tri": tridiagonal(30), "arrow5": arrow(5, hub=0), "band": banded(40, 2),
            "grid": grid_convection_diffusion(6), "rand": random_sparse(40, 0.08, seed=3)}
    lines = []
    for name, m in mats.items():
        write_matrix_market(m, d / f"{name}.mtx")
        lines.append(f"{name}\t{name}.mtx\t{density(m):.4f}")
    (d / "manifest.tsv").write_text("# test corpus\n" + "\n".join(lines) + "\n")
    return d / "manifest.tsv"


@pytest.fixture(scope="module")
def small_sweep(small_corpus):
    return run_sweep(load_corpus(small_corpus))


def test_manifest_parsing(tmp_path):
    (tmp_path / "a.mtx").write_text("")
    (tmp_path / "m.tsv").write_text("# c\nx\ta.mtx\t0.004\ny\t/abs/b.mtx\n\nz\tc.mtx\t5.5\n")
    entries = load_corpus(tmp_path / "m.tsv")
    assert [e.name for e in entries] == ["x", "y", "z"]
    assert entries[0].path == tmp_path / "a.mtx" and entries[0].precision == 3
    assert entries[1].expected_density is None and str(entries[1].path) == "/abs/b.mtx"
    assert entries[2].density_matches(5.4999) and not entries[2].density_matches(5.56)
    (tmp_path / "bad.tsv").write_text("only-a-name\n")
    with pytest.raises(ValueError):
        load_corpus(tmp_path / "bad.tsv")


def test_table_manifest_lists_all_names():
    from raotune.bench import table_a1_manifest
    entries = load_corpus(table_a1_manifest())
    assert len(entries) == 32
    byname = {e.name: e for e in entries}
    assert byname["circuit4"].expected_density == 0.004 and byname["circuit4"].precision == 3
    assert byname["psmigr_3"].expected_density == 5.5


def test_table_corpus_env_override(tmp_path, monkeypatch):
    write_matrix_market(tridiagonal(5), tmp_path / "circuit4.mtx")
    monkeypatch.setenv("RAOTUNE_TABLE_DIR", str(tmp_path))
    found = table_a1_corpus()
    assert [e.name for e in found] == ["circuit4"]


def test_sweep_cardinality_and_statuses(small_sweep):
    assert len(small_sweep) == 5 * 4
    assert {(r.matrix, r.param) for r in small_sweep} == \
        {(m, p) for m in ("tri", "arrow5", "band", "grid", "rand") for p in P}
    assert all(r.status == "ok" for r in small_sweep)
    tri = [r for r in small_sweep if r.matrix == "tri"]
    assert all(r.fill_in == 0 for r in tri)


def test_sweep_records_failures(tmp_path):
    (tmp_path / "broken.mtx").write_text("garbage\n")
    sing = tmp_path / "sing.mtx"
    sing.write_text("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 2 1\n")
    (tmp_path / "m.tsv").write_text("broken\tbroken.mtx\nsing\tsing.mtx\nmissing\tnope.mtx\n")
    recs = run_sweep(load_corpus(tmp_path / "m.tsv"))
    status = {(r.matrix, r.param): r.status for r in recs}
    assert status[("broken", P.COLAMD)] == "failed"
    assert status[("missing", P.NATURAL)] == "failed"
    assert all(status[("sing", p)] == "singular" for p in P)
    _, summary = report_best_vs_default(recs)
    assert summary.count == 0 and set(summary.skipped) == {"broken", "sing", "missing"}


def test_arrow_best_vs_worst_fill(small_sweep):
    rows = [r for r in small_sweep if r.matrix == "arrow5"]
    # hub-first elimination fills the 4x4 trailing block: 6 symmetric edges, 12 entries
    assert max(r.fill_in for r in rows) - min(r.fill_in for r in rows) == 12


def test_best_vs_default_ratios_are_exact(small_sweep):
    records, summary = report_best_vs_default(small_sweep)
    table = {(r.matrix, r.param): r for r in small_sweep}
    for rec in records:
        base = table[(rec.matrix, P.COLAMD)]
        best = min((table[(rec.matrix, p)] for p in P), key=lambda r: r.flops)
        assert rec.speedup_flops == base.flops / best.flops
        assert rec.speedup_flops >= 1.0
    assert summary.flops_geomean == _geomean([r.speedup_flops for r in records])
    assert summary.flops_geomean <= summary.flops_mean <= summary.flops_max
    assert sum(summary.histogram.values()) == summary.count == 5


def test_best_vs_default_needs_colamd(small_sweep):
    with pytest.raises(ValueError):
        report_best_vs_default([r for r in small_sweep if r.param is not P.COLAMD])


def test_always_colamd_rules_give_unit_speedup(small_corpus, small_sweep):
    records, summary = report_tuned_vs_default(load_corpus(small_corpus),
                                               load_rule_base(ALWAYS_COLAMD_RULES),
                                               sweep=small_sweep)
    assert [r.speedup_flops for r in records] == [1.0] * 5
    assert summary.histogram == {"COLAMD": 5}


def test_oracle_calibration_matches_best(small_corpus, small_sweep):
    config = calibrate(small_sweep, n_buckets=None)
    rb = load_rule_base(config)
    _, tuned = report_tuned_vs_default(load_corpus(small_corpus), rb, sweep=small_sweep)
    best_records, best = report_best_vs_default(small_sweep)
    assert tuned.flops_geomean >= 1.0
    assert tuned.flops_geomean <= best.flops_geomean * (1 + 1e-12)


def test_calibrated_never_worse_than_colamd(small_corpus, small_sweep):
    for buckets in (1, 3, 6):
        rb = load_rule_base(calibrate(small_sweep, n_buckets=buckets))
        _, tuned = report_tuned_vs_default(load_corpus(small_corpus), rb, sweep=small_sweep)
        assert tuned.flops_geomean >= 1.0 - 1e-12


def test_calibrate_rejects_partial_sweep(small_sweep):
    with pytest.raises(ValueError):
        calibrate([r for r in small_sweep if r.param is not P.NATURAL])
    with pytest.raises(ValueError):
        calibrate([])


def test_csv_headers_and_round_trip(small_sweep, tmp_path):
    buf = io.StringIO()
    write_sweep_csv(buf, small_sweep)
    assert buf.getvalue().splitlines()[0] == ",".join(SWEEP_FIELDS)
    write_sweep_csv(tmp_path / "s.csv", small_sweep)
    assert read_sweep_csv(tmp_path / "s.csv") == small_sweep
    records, _ = report_best_vs_default(small_sweep)
    buf = io.StringIO()
    write_speedups_csv(buf, records)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == SPEEDUP_FIELDS and len(rows) == 6
    assert SWEEP_FIELDS == ["matrix", "n", "nnz", "density", "param", "status", "fill_in",
                            "flops", "order_time", "factor_time"]
    assert OVERHEAD_FIELDS[:2] == ["matrix", "param"] and OVERHEAD_FIELDS[-1] == "overhead_ratio"


def test_fill_and_flops_are_deterministic(small_corpus, small_sweep):
    again = run_sweep(load_corpus(small_corpus))
    key = lambda rs: [(r.matrix, r.param, r.fill_in, r.flops) for r in rs]
    assert key(again) == key(small_sweep)


def test_overhead_report(small_corpus):
    corpus = load_corpus(small_corpus)[:2]
    with DecisionServer(load_rule_base(ALWAYS_COLAMD_RULES)) as server:
        rows = report_overhead(corpus, server.endpoint, repeats=2)
    assert [r.matrix for r in rows] == ["tri", "arrow5"]
    assert all(r.param is P.COLAMD and r.overhead_ratio > 0 and r.round_trip_us > 0 for r in rows)


def test_overhead_needs_reachable_daemon(small_corpus):
    from raotune.bus import BusError
    import socket
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(BusError):
        report_overhead(load_corpus(small_corpus), f"127.0.0.1:{port}")


def test_summary_text_labels_reference_figures(small_sweep):
    _, summary = report_best_vs_default(small_sweep)
    text = format_summary("best vs default", summary, {"best_vs_default_max": 4151.0})
    assert "geomean" in text and "not reproduced" in text


@pytest.mark.parametrize("command, files", [
    ("sweep", {"sweep.csv", "speedups.csv", "summary.txt"}),
    ("tuned", {"sweep.csv", "speedups.csv", "summary.txt"}),
    ("calibrate", {"sweep.csv", "calibrated.rules", "summary.txt"}),
    ("overhead", {"overhead.csv", "summary.txt"}),
])
def test_cli_commands(small_corpus, tmp_path, command, files, capsys):
    out = tmp_path / command
    assert main([command, "--corpus", str(small_corpus), "--out", str(out)]) == 0
    assert files <= {p.name for p in out.iterdir()}
    assert (out / "summary.txt").read_text() in capsys.readouterr().out
    if command == "calibrate":
        load_rule_base((out / "calibrated.rules").read_text())


def test_cli_tuned_with_rules_file(small_corpus, tmp_path):
    rules = tmp_path / "c.rules"
    rules.write_text(ALWAYS_COLAMD_RULES)
    assert main(["tuned", "--corpus", str(small_corpus), "--rules", str(rules),
                 "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "speedups.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["compared_param"] for r in rows} == {"COLAMD"}
    assert {float(r["speedup_flops"]) for r in rows} == {1.0}
