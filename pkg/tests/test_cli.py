import subprocess
import sys

import pytest

from shardtable import DataType, JoinAlgorithm, JoinType, join, read_csv
from shardtable.bench import BenchSpec, gen, run_bench_in_process, run_verify_in_process
from shardtable.cli import main
from shardtable.table import concat_tables


def make_join_inputs(tmp_path, rows=400, parts=2, key_domain=50):
    gen(rows, "4col", seed=11, out_prefix=str(tmp_path / "d_1"), parts=parts, key_domain=key_domain)
    gen(rows, "4col", seed=22, out_prefix=str(tmp_path / "d_2"), parts=parts, key_domain=key_domain)
    return str(tmp_path / "d")


class TestGen:
    def test_even_split_with_remainder_to_low_ranks(self, tmp_path):
        paths = gen(10, "4col", seed=1, out_prefix=str(tmp_path / "g"), parts=4)
        sizes = [read_csv(p).num_rows for p in paths]
        assert sizes == [3, 3, 2, 2]

    def test_deterministic_bytes(self, tmp_path):
        a = gen(50, "2col", seed=9, out_prefix=str(tmp_path / "a"), parts=2)
        b = gen(50, "2col", seed=9, out_prefix=str(tmp_path / "b"), parts=2)
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_two_column_layout(self, tmp_path):
        (p,) = gen(20, "2col", seed=3, out_prefix=str(tmp_path / "t"), parts=1)
        t = read_csv(p)
        assert t.field_names == ["id", "d1"]
        assert t.dtypes == [DataType.INT64, DataType.FLOAT64]

    def test_key_domain_respected(self, tmp_path):
        (p,) = gen(200, "2col", seed=3, out_prefix=str(tmp_path / "t"), parts=1, key_domain=5)
        ids = [r[0] for r in read_csv(p).to_rows()]
        assert set(ids) <= set(range(5)) and len(set(ids)) > 1

    def test_cli_gen_prints_paths(self, tmp_path, capsys):
        rc = main(
            ["gen", "--rows", "10", "--prefix", str(tmp_path / "x"), "--parts", "2", "--seed", "4"]
        )
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 2 and out[0].endswith("x_0.csv")


class TestBench:
    def test_inprocess_join_counts_match_local_oracle(self, tmp_path):
        prefix = make_join_inputs(tmp_path, rows=300, parts=2)
        spec = BenchSpec(
            op="join",
            rows_per_relation=300,
            world_size=2,
            join_type=JoinType.INNER,
            algorithm=JoinAlgorithm.HASH,
            key_domain=50,
            seed=0,
            repeats=2,
        )
        report = run_bench_in_process(spec, prefix)
        left = concat_tables([read_csv(f"{prefix}_1_{r}.csv") for r in range(2)])
        right = concat_tables([read_csv(f"{prefix}_2_{r}.csv") for r in range(2)])
        local = join(left, right, spec.join_config())
        assert report.output_rows(0) == local.num_rows
        assert report.output_rows(1) == local.num_rows
        assert report.median_seconds() > 0

    def test_cli_bench_report_shape(self, tmp_path, capsys):
        prefix = make_join_inputs(tmp_path, rows=200, parts=1)
        rc = main(
            [
                "bench",
                "--op",
                "join",
                "--rows",
                "200",
                "--world-size",
                "1",
                "--repeats",
                "3",
                "--key-domain",
                "50",
                "--prefix",
                prefix,
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        header, rows = out[0], out[1:]
        assert header.startswith("op,rows_per_relation,world_size,join_type,")
        assert len(rows) == 3
        first = rows[0].split(",")
        assert first[0] == "join" and first[8] == "0" and first[9] == "0"
        # spec echo: every row carries the full spec
        assert all(r.startswith("join,200,1,inner,hash,50,0,3,") for r in rows)

    def test_select_and_project_ops(self, tmp_path, capsys):
        gen(100, "4col", seed=5, out_prefix=str(tmp_path / "s_1"), parts=1)
        rc = main(
            [
                "bench",
                "--op",
                "select",
                "--rows",
                "100",
                "--world-size",
                "1",
                "--predicate",
                "1",
                ">",
                "0.5",
                "--prefix",
                str(tmp_path / "s"),
            ]
        )
        assert rc == 0
        out_rows = int(capsys.readouterr().out.strip().splitlines()[-1].split(",")[-1])
        t = read_csv(tmp_path / "s_1_0.csv")
        want = sum(1 for r in t.to_rows() if r[1] > 0.5)
        assert out_rows == want

        rc = main(
            [
                "bench",
                "--op",
                "project",
                "--rows",
                "100",
                "--world-size",
                "1",
                "--cols",
                "0,2",
                "--prefix",
                str(tmp_path / "s"),
            ]
        )
        assert rc == 0
        assert int(capsys.readouterr().out.strip().splitlines()[-1].split(",")[-1]) == 100


class TestBenchReport:
    def test_median_excludes_warmup(self):
        from shardtable.bench import BenchReport

        spec = BenchSpec(op="join", rows_per_relation=10, world_size=2, key_domain=2)
        r = BenchReport(spec)
        # repeat 0 is slow warm-up; repeats 1..3 steady
        r.timings = [
            (0, 0, 9.0, 5),
            (0, 1, 8.0, 5),
            (1, 0, 1.0, 5),
            (1, 1, 2.0, 5),
            (2, 0, 1.5, 5),
            (2, 1, 1.0, 5),
            (3, 0, 1.2, 5),
            (3, 1, 1.1, 5),
        ]
        # per-repeat max over workers: 9.0 | 2.0, 1.5, 1.2 -> median 1.5
        assert r.max_seconds(0) == 9.0
        assert r.median_seconds() == 1.5
        assert r.output_rows(0) == 10

    def test_single_repeat_median_is_that_repeat(self):
        from shardtable.bench import BenchReport

        spec = BenchSpec(op="join", rows_per_relation=10, world_size=1, key_domain=2)
        r = BenchReport(spec, [(0, 0, 3.0, 7)])
        assert r.median_seconds() == 3.0

    def test_world_sizes_report_identical_output_counts(self, tmp_path):
        prefix = make_join_inputs(tmp_path, rows=400, parts=2, key_domain=40)
        single = tmp_path / "one"
        single.mkdir()
        make_join_inputs(single, rows=400, parts=1, key_domain=40)
        counts = []
        for ws, pfx in ((1, str(single / "d")), (2, prefix)):
            spec = BenchSpec(op="join", rows_per_relation=400, world_size=ws, key_domain=40)
            counts.append(run_bench_in_process(spec, pfx).output_rows())
        assert counts[0] == counts[1]


class TestVerify:
    @pytest.mark.parametrize("op", ["join", "union", "intersect", "difference"])
    def test_verify_passes(self, tmp_path, op):
        prefix = make_join_inputs(tmp_path, rows=240, parts=4, key_domain=30)
        spec = BenchSpec(op=op, rows_per_relation=240, world_size=4, key_domain=30)
        result = run_verify_in_process(spec, prefix)
        assert result.ok, result.lines()
        assert result.global_rows == result.oracle_rows
        assert len(result.worker_rows) == 4

    def test_verify_world_one_always_passes(self, tmp_path):
        prefix = make_join_inputs(tmp_path, rows=100, parts=1)
        spec = BenchSpec(op="join", rows_per_relation=100, world_size=1, key_domain=25)
        assert run_verify_in_process(spec, prefix).ok

    def test_injected_fault_fails(self, tmp_path, capsys):
        prefix = make_join_inputs(tmp_path, rows=240, parts=2, key_domain=30)
        rc = main(
            [
                "verify",
                "--op",
                "join",
                "--rows",
                "240",
                "--world-size",
                "2",
                "--key-domain",
                "30",
                "--prefix",
                prefix,
                "--inject-fault",
                "1",
            ]
        )
        assert rc != 0
        out = capsys.readouterr().out
        assert "VERIFY FAIL" in out and "first differing row index" in out

    def test_cli_verify_pass_exit_code(self, tmp_path, capsys):
        prefix = make_join_inputs(tmp_path, rows=120, parts=2, key_domain=20)
        rc = main(
            [
                "verify",
                "--op",
                "join",
                "--rows",
                "120",
                "--world-size",
                "2",
                "--key-domain",
                "20",
                "--prefix",
                prefix,
            ]
        )
        assert rc == 0
        assert "VERIFY PASS" in capsys.readouterr().out


class TestTcpOrchestration:
    def test_tcp_bench_end_to_end(self, tmp_path):
        prefix = make_join_inputs(tmp_path, rows=200, parts=2, key_domain=40)
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "shardtable",
                "bench",
                "--transport",
                "tcp",
                "--op",
                "join",
                "--rows",
                "200",
                "--world-size",
                "2",
                "--key-domain",
                "40",
                "--repeats",
                "2",
                "--prefix",
                prefix,
            ],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        data_rows = [
            ln for ln in proc.stdout.splitlines() if ln and not ln.startswith(("op,", "#"))
        ]
        # 2 repeats x 2 workers
        assert len(data_rows) == 4

    def test_tcp_verify_end_to_end(self, tmp_path):
        prefix = make_join_inputs(tmp_path, rows=160, parts=2, key_domain=20)
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "shardtable",
                "verify",
                "--transport",
                "tcp",
                "--op",
                "union",
                "--rows",
                "160",
                "--world-size",
                "2",
                "--key-domain",
                "20",
                "--prefix",
                prefix,
            ],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert "VERIFY PASS" in proc.stdout


class TestErrors:
    def test_missing_input_files_nonzero_exit(self, tmp_path, capsys):
        rc = main(
            ["bench", "--op", "join", "--rows", "10", "--world-size", "1", "--prefix", str(tmp_path / "nope")]
        )
        assert rc != 0
        assert "error" in capsys.readouterr().err.lower()
