import csv
import json

import numpy as np
import pytest

from convlower import Tensor4, read_dump, write_dump, write_idx_images
from convlower.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip()
    return code, json.loads(out) if out.startswith("{") else out


def test_shapes_command(capsys):
    code, out = run_cli(
        capsys, "shapes", "--h", "28", "--w", "28", "--kh", "4", "--kw", "4",
        "--stride", "2", "--pad", "0", "--filters", "128",
    )
    assert code == 0
    assert out == {"h_out": 13, "w_out": 13, "c_out": 128, "patches": 169}


def test_shapes_allow_truncate(capsys):
    code, out = run_cli(
        capsys, "shapes", "--h", "7", "--w", "7", "--kh", "3", "--kw", "3",
        "--stride", "3", "--allow-truncate",
    )
    assert code == 0
    assert (out["h_out"], out["w_out"]) == (2, 2)


def test_shapes_rejects_non_divisible(capsys):
    code = main(["shapes", "--h", "7", "--w", "7", "--kh", "3", "--kw", "3", "--stride", "3"])
    assert code == 2
    assert "remainder" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["shapes", "--h", "28"])  # missing required flags
    assert exc.value.code == 2


def test_lower_roundtrip(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = Tensor4(rng.random((2, 6, 6, 1)))
    in_path = tmp_path / "in.dump"
    out_path = tmp_path / "m.dump"
    write_dump(in_path, src)
    code, out = run_cli(
        capsys, "lower", "--input", str(in_path), "--kh", "2", "--kw", "2",
        "--stride", "2", "--dump", str(out_path),
    )
    assert code == 0
    assert (out["rows"], out["cols"]) == (2 * 9, 4)
    m = read_dump(out_path)
    assert (m.rows, m.cols) == (18, 4)


def test_lower_from_idx(tmp_path, capsys):
    idx = tmp_path / "imgs.idx"
    write_idx_images(idx, np.zeros((3, 8, 8), dtype=np.uint8))
    code, out = run_cli(capsys, "lower", "--input", str(idx), "--kh", "4", "--kw", "4",
                        "--stride", "4")
    assert code == 0
    assert (out["rows"], out["cols"]) == (3 * 4, 16)


def test_conv_engines_agree_via_files(tmp_path, capsys):
    rng = np.random.default_rng(1)
    in_path = tmp_path / "in.dump"
    write_dump(in_path, Tensor4(rng.random((2, 8, 8, 2))))
    filt_path = tmp_path / "filt.dump"
    write_dump(filt_path, Tensor4(rng.standard_normal((3, 2, 2, 2))))
    outputs = {}
    for engine in ("direct", "gemm", "lazy"):
        out_path = tmp_path / f"{engine}.dump"
        code, summary = run_cli(
            capsys, "conv", "--engine", engine, "--input", str(in_path),
            "--filters-file", str(filt_path), "--kh", "2", "--kw", "2",
            "--stride", "2", "--out", str(out_path),
        )
        assert code == 0
        outputs[engine] = (summary["checksum"], out_path.read_bytes())
    assert len({chk for chk, _ in outputs.values()}) == 1
    assert len({blob for _, blob in outputs.values()}) == 1  # byte-identical dumps


def test_conv_seeded_filters_deterministic(tmp_path, capsys):
    in_path = tmp_path / "in.dump"
    write_dump(in_path, Tensor4(np.random.default_rng(2).random((1, 4, 4, 1))))
    args = ("conv", "--engine", "gemm", "--input", str(in_path), "--kh", "2",
            "--kw", "2", "--stride", "2", "--num-filters", "2", "--seed", "9")
    _, first = run_cli(capsys, *args)
    _, second = run_cli(capsys, *args)
    assert first["checksum"] == second["checksum"]


def test_verify_ok(capsys):
    code, out = run_cli(capsys, "verify", "--cases", "20", "--seed", "42")
    assert code == 0
    assert out["ok"] is True
    assert out["max_rel_err"] <= 1e-10


def test_verify_corrupt_negative_control(capsys):
    code, out = run_cli(capsys, "verify", "--cases", "5", "--seed", "1", "--corrupt")
    assert code == 1
    assert out["ok"] is False
    assert out["worst_geometry"]["rel_err"] > 1e-10


def test_bench_csv(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    code, out = run_cli(
        capsys, "bench", "--out", str(out_csv), "--reps", "1",
        "--cases", "1,6,6,1,2,2,2,2,0;2,5,5,1,1,3,3,1,1",
    )
    assert code == 0
    with open(out_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 4  # cases x engines
    for case in ("case0", "case1"):
        sums = {r["checksum"] for r in rows if r["case"] == case}
        assert len(sums) == 1


def test_train_equiv_report(tmp_path, capsys):
    report = tmp_path / "report.json"
    code, out = run_cli(
        capsys, "train-equiv", "--data", "synthetic", "--n", "10", "--kh", "2",
        "--kw", "2", "--stride", "2", "--filters", "2", "--lr", "0.01",
        "--batch", "4", "--epochs", "3", "--opt", "sgd", "--seed", "5",
        "--out", str(report),
    )
    assert code == 0
    with open(report) as fh:
        data = json.load(fh)
    assert set(data) == {"config", "cnn", "fc", "metrics"}
    assert len(data["cnn"]["train_loss"]) == 3
    assert data["cnn"]["train_loss"] == data["fc"]["train_loss"]
    assert set(data["metrics"]["hist"]) == {"edges", "cnn_counts", "fc_counts"}
    with open(report.with_suffix(".csv")) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "epoch,cnn_train,fc_train,cnn_val,fc_val"
    assert len(lines) == 4


def test_train_equiv_from_idx_dir(tmp_path, capsys, monkeypatch):
    rng = np.random.default_rng(3)
    data_dir = tmp_path / "mnist"
    data_dir.mkdir()
    write_idx_images(
        data_dir / "train-images-idx3-ubyte",
        rng.integers(0, 256, (40, 6, 6), dtype=np.uint8),
    )
    report = tmp_path / "rep.json"
    code, _ = run_cli(
        capsys, "train-equiv", "--data", f"mnist:{data_dir}", "--n", "8",
        "--kh", "2", "--kw", "2", "--stride", "2", "--filters", "2",
        "--batch", "4", "--epochs", "1", "--out", str(report),
    )
    assert code == 0

    # env var as the default data root
    monkeypatch.setenv("CONVLOWER_DATA_DIR", str(data_dir))
    code, _ = run_cli(
        capsys, "train-equiv", "--data", "mnist", "--n", "8", "--kh", "2",
        "--kw", "2", "--stride", "2", "--filters", "2", "--batch", "4",
        "--epochs", "1", "--out", str(report),
    )
    assert code == 0


def test_lower_allow_truncate_trims_ragged_edge(tmp_path, capsys):
    rng = np.random.default_rng(4)
    in_path = tmp_path / "in.dump"
    write_dump(in_path, Tensor4(rng.random((1, 7, 7, 1))))
    code = main(["lower", "--input", str(in_path), "--kh", "3", "--kw", "3",
                 "--stride", "3"])
    capsys.readouterr()
    assert code == 2  # strict mode rejects remainder 1
    code, out = run_cli(
        capsys, "lower", "--input", str(in_path), "--kh", "3", "--kw", "3",
        "--stride", "3", "--allow-truncate",
    )
    assert code == 0
    assert (out["rows"], out["cols"]) == (4, 9)


def test_verify_deterministic_given_seed(capsys):
    _, first = run_cli(capsys, "verify", "--cases", "10", "--seed", "3")
    _, second = run_cli(capsys, "verify", "--cases", "10", "--seed", "3")
    assert first == second


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("shapes", "lower", "conv", "verify", "bench", "train-equiv"):
        assert cmd in out


def test_missing_input_is_io_error(tmp_path, capsys):
    code = main(["conv", "--engine", "direct", "--input", str(tmp_path / "nope.dump"),
                 "--kh", "2", "--kw", "2"])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_bad_geometry_is_usage_error(tmp_path, capsys):
    in_path = tmp_path / "in.dump"
    write_dump(in_path, Tensor4(np.zeros((1, 3, 3, 1))))
    code = main(["conv", "--engine", "direct", "--input", str(in_path),
                 "--kh", "5", "--kw", "5"])
    assert code == 2
    assert "does not fit" in capsys.readouterr().err
