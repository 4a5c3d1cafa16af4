import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from mixdecomp import rng as rngmod
from mixdecomp.chains import pince_nez
from mixdecomp.cli import main
from mixdecomp.decomposition import Partition
from mixdecomp.errors import ConfigInvalid
from mixdecomp.io import load_kernel, load_partition, save_kernel, save_partition
from mixdecomp.kernel import StochasticKernel
from mixdecomp.report import (
    ExperimentConfig,
    dump_trajectory,
    load_trajectory,
    run_experiment,
)


def test_kernel_file_roundtrip_dense(tmp_path):
    k, _ = pince_nez(4)
    path = tmp_path / "k.txt"
    save_kernel(k, path)
    back = load_kernel(path)
    assert np.abs(back.rows - k.rows).max() <= 1e-15


def test_kernel_file_sparse_variant(tmp_path):
    path = tmp_path / "sparse.txt"
    path.write_text("# two-state flip\n2\n0 1 0.25\n1 0 0.5\n")
    k = load_kernel(path)
    assert np.allclose(k.rows, [[0.75, 0.25], [0.5, 0.5]])


def test_kernel_file_labels(tmp_path):
    path = tmp_path / "lab.txt"
    path.write_text("# label: a\n# label: b\n2\n0.5 0.5\n0.5 0.5\n")
    k = load_kernel(path)
    assert k.labels == ("a", "b")


def test_partition_file_roundtrip(tmp_path):
    p = Partition.from_block_of([0, 1, 1, 0])
    path = tmp_path / "p.txt"
    save_partition(p, path)
    back = load_partition(path)
    assert np.array_equal(back.block_of, p.block_of)


def test_partition_file_missing_state(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 0\n2 1\n")
    with pytest.raises(ValueError):
        load_partition(path, n_states=3)


def test_trajectory_dump_roundtrip(tmp_path):
    traj = np.array([0, 3, 2, 2, 1], dtype=np.int64)
    path = tmp_path / "t.bin"
    dump_trajectory(path, traj, n_states=4)
    raw = path.read_bytes()
    assert raw[:4] == b"MXDT"
    back, n = load_trajectory(path)
    assert n == 4 and np.array_equal(back, traj)


def _analyze_config(tmp_path, seed=3):
    return ExperimentConfig.from_sections(
        {
            "chain": {"family": "pince_nez", "m": "6"},
            "run": {"tasks": "analyze", "seed": str(seed), "output_dir": str(tmp_path)},
        }
    )


def test_run_experiment_report_schema(tmp_path):
    cfg = _analyze_config(tmp_path)
    report = run_experiment(cfg)
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk["schema_version"] == 1
    a = on_disk["tasks"]["analyze"]
    assert set(a) >= {"kernel_hash", "pi", "tau_mix", "relaxation_time", "profile"}
    assert a["tau_mix"]["provenance"] == "exact"
    assert a["decomposition"]["phi_max"]["value"] == max(a["decomposition"]["phi_i"]["value"])


def test_report_hash_stable_across_runs(tmp_path):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    for d in (d1, d2):
        cfg = ExperimentConfig.from_sections(
            {
                "chain": {"family": "toy_kcip", "m": "4", "d": "1"},
                "run": {"tasks": "analyze,audit", "seed": "5", "output_dir": str(d)},
                "audit": {"i": "0", "j": "1", "reps": "1000"},
            }
        )
        run_experiment(cfg)
    h1 = hashlib.sha256((d1 / "report.json").read_bytes()).hexdigest()
    h2 = hashlib.sha256((d2 / "report.json").read_bytes()).hexdigest()
    assert h1 == h2
    assert (d1 / "audit.csv").read_text() == (d2 / "audit.csv").read_text()


def test_config_validation_errors(tmp_path):
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_sections({"run": {"tasks": ""}})
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_sections(
            {"run": {"tasks": "analyze"}, "files": {"kernel": str(tmp_path / "nope.txt")}}
        )
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_sections(
            {"chain": {"family": "pince_nez", "m": "6"}, "run": {"tasks": "dance"}}
        )


def test_config_json_equivalent(tmp_path):
    payload = {
        "chain": {"family": "pince_nez", "m": 6},
        "run": {"tasks": "analyze", "seed": 1, "output_dir": str(tmp_path)},
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(payload))
    cfg = ExperimentConfig.from_file(p)
    assert cfg.chain.family == "pince_nez"

    ini = tmp_path / "cfg.ini"
    ini.write_text(
        f"[chain]\nfamily = pince_nez\nm = 6\n[run]\ntasks = analyze\nseed = 1\noutput_dir = {tmp_path}\n"
    )
    cfg2 = ExperimentConfig.from_file(ini)
    assert cfg2.chain.params == cfg.chain.params


def test_cli_exit_codes(tmp_path):
    assert main(["analyze", "--chain", "pince_nez:m=6", "--out", str(tmp_path)]) == 0
    assert main(["analyze", "--chain", "pince_nez:m<oops", "--out", str(tmp_path)]) == 1
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\ntasks =\n")
    assert main(["run", str(cfg)]) == 1


def test_cli_bounds_and_files(tmp_path):
    k, part = pince_nez(4)
    from mixdecomp.io import save_kernel, save_partition

    kp = tmp_path / "kernel.txt"
    pp = tmp_path / "part.txt"
    save_kernel(k, kp)
    save_partition(part, pp)
    code = main(
        [
            "bounds",
            "--kernel",
            str(kp),
            "--partition",
            str(pp),
            "--out",
            str(tmp_path),
            "--seed",
            "2",
            "--constants",
            "c_alpha=1.2,c_alpha_prime=1.2",
        ]
    )
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    comp = report["tasks"]["bounds"]["comparison"]
    names = {row["name"] for row in comp}
    assert "basic_occupation" in names
    for row in comp:
        assert not row["universal_constant_flag"]  # constants were supplied


def test_cli_simulate_writes_trajectory(tmp_path):
    code = main(
        [
            "simulate",
            "--chain",
            "toy_kcip:m=4,d=1",
            "--steps",
            "200",
            "--seed",
            "4",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    traj, n = load_trajectory(tmp_path / "trajectory.bin")
    assert n == 12 and len(traj) == 201


def test_console_entrypoint():
    out = subprocess.run(
        [sys.executable, "-m", "mixdecomp.cli", "--help"], capture_output=True, text=True
    )
    assert out.returncode == 0
    for sub in ("analyze", "bounds", "audit", "reproduce", "simulate"):
        assert sub in out.stdout


def test_bounds_flag_propagates_when_uncalibrated(tmp_path):
    code = main(["bounds", "--chain", "pince_nez:m=4", "--out", str(tmp_path), "--seed", "1"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    for row in report["tasks"]["bounds"]["comparison"]:
        assert row["universal_constant_flag"]
        assert "universal_constant=true" in row["value"]["provenance"]


def test_reproduce_suite_csv_rows(tmp_path):
    cfg = ExperimentConfig.from_sections(
        {
            "chain": {"family": "pince_nez", "m": "8"},
            "run": {
                "tasks": "reproduce",
                "suite": "pince_nez_scaling",
                "seed": "0",
                "output_dir": str(tmp_path),
            },
        }
    )
    run_experiment(cfg)
    lines = (tmp_path / "suite_pince_nez_scaling.csv").read_text().strip().splitlines()
    assert lines[0].split(",")[0] == "m"
    assert len(lines) == 1 + 3  # header + one row per chain size
