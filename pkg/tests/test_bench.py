import dataclasses
import json

import numpy as np
import pytest

from oodsynth.bench import (
    BenchConfig,
    OodTestSpec,
    ablation_sweep,
    diversity_stds,
    generate_synthetic_id,
    run_experiment,
    sample_vmf,
    uniform_sphere,
)
from oodsynth.cli import main
from oodsynth.errors import BadConfigError, ZeroVectorError
from oodsynth.samplers import HmcConfig, SamplerVariant
from oodsynth.sphere import normalize
from oodsynth.store import IdStore

SMALL = BenchConfig(
    dim=6,
    num_classes=2,
    points_per_class=40,
    cluster_kappa=12.0,
    knn_k=5,
    k_detect=5,
    n_adj=1,
    iterations=1,
    insert_per_class=4,
    id_test_per_class=30,
    ood=OodTestSpec(n_uniform=60, n_midpoint=40, midpoint_kappa=30.0),
)


# -- synthetic generators -------------------------------------------------------


def test_vmf_huge_concentration_hugs_the_mean():
    rng = np.random.default_rng(0)
    mu = normalize(np.ones(8))
    pts = sample_vmf(mu, 1e6, 200, rng)
    angles = np.degrees(np.arccos(np.clip(pts @ mu, -1, 1)))
    assert angles.max() <= 1.0


def test_vmf_zero_concentration_is_uniform():
    rng = np.random.default_rng(1)
    pts = sample_vmf(np.eye(8)[0], 0.0, 10_000, rng)
    assert np.linalg.norm(pts.mean(axis=0)) <= 0.05


def test_vmf_unit_norm_and_determinism():
    mu = normalize(np.arange(1.0, 6.0))
    a = sample_vmf(mu, 25.0, 50, np.random.default_rng(7))
    b = sample_vmf(mu, 25.0, 50, np.random.default_rng(7))
    assert np.array_equal(a, b)
    assert np.abs(np.linalg.norm(a, axis=1) - 1.0).max() <= 1e-9


def test_uniform_sphere_norms():
    pts = uniform_sphere(100, 5, np.random.default_rng(2))
    assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() <= 1e-12


def test_generate_synthetic_id_deterministic():
    a = generate_synthetic_id(SMALL)
    b = generate_synthetic_id(SMALL)
    for c in range(SMALL.num_classes):
        assert np.array_equal(a.class_embeddings(c), b.class_embeddings(c))
        assert np.array_equal(a.prototype(c), b.prototype(c))


# -- config ----------------------------------------------------------------------


def test_config_json_round_trip(tmp_path):
    cfg = dataclasses.replace(
        SMALL, hmc=HmcConfig(leapfrog_steps=2, step_size=0.2, variant=SamplerVariant.MALA)
    )
    path = tmp_path / "config.json"
    cfg.save_json(path)
    assert BenchConfig.load_json(path) == cfg


def test_config_validation():
    with pytest.raises(BadConfigError):
        BenchConfig(num_classes=1)
    with pytest.raises(BadConfigError):
        BenchConfig(kappa=0.0)
    with pytest.raises(BadConfigError):
        BenchConfig(grad_mode="nonsense")


def test_effective_clipping():
    cfg = dataclasses.replace(SMALL, knn_k=10_000, n_adj=99)
    store = generate_synthetic_id(cfg)
    assert cfg.effective_k(store) == cfg.points_per_class
    assert cfg.effective_n_adj() == cfg.num_classes - 1


# -- experiment loop ---------------------------------------------------------------


def test_minimal_run_completes_and_writes_artifacts(tmp_path):
    cfg = dataclasses.replace(SMALL, out_dir=str(tmp_path / "run"))
    art = run_experiment(cfg, trace=True)
    assert len(art.iterations) == 1
    assert len(art.iterations[0].batch) > 0
    for name in ("config", "metrics", "batches", "scores", "timings", "store", "trace"):
        assert art.files[name].exists(), name
    batches = [json.loads(line) for line in art.files["batches"].read_text().splitlines()]
    assert len(batches) == 1
    assert len(batches[0]["samples"]) == len(art.iterations[0].batch)
    report = art.final_report
    assert 0.0 <= report.auroc <= 1.0


def test_config_echo_reproduces_config(tmp_path):
    cfg = dataclasses.replace(SMALL, out_dir=str(tmp_path / "run"))
    art = run_experiment(cfg)
    assert BenchConfig.load_json(art.files["config"]) == cfg


def test_partial_artifacts_flushed_on_abort(tmp_path, monkeypatch):
    import oodsynth.bench as bench_mod

    real = bench_mod.synthesize_batch
    calls = {"n": 0}

    def failing(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] >= 2:
            raise RuntimeError("disk full")
        return real(*args, **kwargs)

    monkeypatch.setattr(bench_mod, "synthesize_batch", failing)
    cfg = dataclasses.replace(SMALL, iterations=3, out_dir=str(tmp_path / "run"))
    with pytest.raises(RuntimeError):
        run_experiment(cfg)
    # the completed first iteration is on disk despite the abort
    metrics = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()
    assert len(metrics) == 2  # header + one row
    assert (tmp_path / "run" / "config.json").exists()


def test_bad_config_files_raise_config_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(BadConfigError):
        BenchConfig.load_json(broken)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"no_such_field": 1}))
    with pytest.raises(BadConfigError):
        BenchConfig.load_json(unknown)
    with pytest.raises(BadConfigError):
        BenchConfig.from_dict({"hmc": {"variant": "bogus"}})


def test_runs_are_bit_exact(tmp_path):
    cfg_a = dataclasses.replace(SMALL, iterations=2, out_dir=str(tmp_path / "a"))
    cfg_b = dataclasses.replace(SMALL, iterations=2, out_dir=str(tmp_path / "b"))
    art_a = run_experiment(cfg_a)
    art_b = run_experiment(cfg_b)
    for name in ("metrics", "batches", "scores", "round_scores", "store"):
        assert art_a.files[name].read_bytes() == art_b.files[name].read_bytes(), name


def test_detector_separates_synthetic_ood():
    cfg = dataclasses.replace(SMALL, num_classes=4, n_adj=2, iterations=2, cluster_kappa=50.0)
    art = run_experiment(cfg)
    assert art.final_report.auroc >= 0.9  # uniform OOD is far from tight clusters


def test_sweep_single_value_matches_run(tmp_path):
    rows = ablation_sweep(SMALL, "eps", [SMALL.hmc.step_size])
    art = run_experiment(SMALL)
    assert rows[0].fpr95 == art.final_report.fpr95
    assert rows[0].auroc == art.final_report.auroc


def test_sweep_writes_merged_csv(tmp_path):
    rows = ablation_sweep(SMALL, "L", [1, 3], out_dir=tmp_path / "sweep")
    lines = (tmp_path / "sweep" / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("L,1,")
    assert len(rows) == 2


def test_sweep_rejects_unknown_axis():
    from oodsynth.errors import BadArgError

    with pytest.raises(BadArgError):
        ablation_sweep(SMALL, "gamma", [1])


def test_diversity_helper_returns_positive_stds():
    cfg = dataclasses.replace(SMALL, num_classes=4, n_adj=2)
    std_h, std_g = diversity_stds(cfg, seed=0)
    assert std_h > 0.0 and std_g > 0.0


def test_variant_sweep_smoke_all_five():
    rows = ablation_sweep(SMALL, "variant", ["random_walk", "hmc", "mala", "mmala", "rmhmc"])
    assert [r.value for r in rows] == ["random_walk", "hmc", "mala", "mmala", "rmhmc"]
    for r in rows:
        assert np.isfinite(r.auroc) and r.synth_time_ms > 0.0


def test_default_benchmark_ten_iterations_under_a_minute():
    import time

    t0 = time.perf_counter()
    art = run_experiment(BenchConfig())  # C=10, d=16, B=500, 10 iterations
    elapsed = time.perf_counter() - t0
    assert len(art.iterations) == 10
    assert elapsed < 60.0


# -- CLI -----------------------------------------------------------------------------


def small_cli_flags(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    SMALL.save_json(cfg_path)
    return ["--config", str(cfg_path)]


def test_cli_gen_synth_score_round_trip(tmp_path, capsys):
    flags = small_cli_flags(tmp_path)
    store_path = tmp_path / "store.idstore"
    assert main(["gen", *flags, "--out", str(store_path)]) == 0
    assert store_path.exists()
    loaded = IdStore.load(store_path)
    assert loaded.num_classes == SMALL.num_classes

    batch_path = tmp_path / "batch.json"
    trace_path = tmp_path / "trace.jsonl"
    code = main(
        ["synth", *flags, "--store", str(store_path), "--out", str(batch_path), "--trace", str(trace_path)]
    )
    assert code == 0
    doc = json.loads(batch_path.read_text())
    assert len(doc["samples"]) > 0
    assert trace_path.exists()

    id_file = tmp_path / "id.json"
    ood_file = tmp_path / "ood.json"
    rng = np.random.default_rng(0)
    id_file.write_text(json.dumps((rng.standard_normal(100) + 3).tolist()))
    ood_file.write_text(json.dumps(rng.standard_normal(100).tolist()))
    report_path = tmp_path / "report.json"
    code = main(
        ["score", "--id-scores", str(id_file), "--ood-scores", str(ood_file), "--out", str(report_path)]
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["auroc"] > 0.9
    out = capsys.readouterr().out
    assert "auroc" in out


def test_cli_run_and_csv_batch(tmp_path):
    flags = small_cli_flags(tmp_path)
    run_dir = tmp_path / "run"
    assert main(["run", *flags, "--out-dir", str(run_dir)]) == 0
    assert (run_dir / "metrics.csv").exists()
    batch_csv = tmp_path / "batch.csv"
    assert main(["synth", *flags, "--out", str(batch_csv)]) == 0
    assert batch_csv.read_text().startswith("chain_index,")


def test_cli_score_accepts_csv_columns(tmp_path):
    rng = np.random.default_rng(3)
    id_csv = tmp_path / "id.csv"
    ood_csv = tmp_path / "ood.csv"
    id_csv.write_text("score\n" + "\n".join(str(v) for v in rng.standard_normal(40) + 2))
    ood_csv.write_text("score\n" + "\n".join(str(v) for v in rng.standard_normal(40)))
    out = tmp_path / "rep.json"
    assert main(["score", "--id-scores", str(id_csv), "--ood-scores", str(ood_csv), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["auroc"] > 0.8


def test_cli_config_error_exit_code(tmp_path):
    assert main(["gen", "--classes", "1", "--out", str(tmp_path / "s.idstore")]) == 2
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{oops")
    assert main(["gen", "--config", str(bad_cfg), "--out", str(tmp_path / "s2.idstore")]) == 2


def test_cli_corrupt_store_exit_code(tmp_path):
    bad_store = tmp_path / "bad.idstore"
    bad_store.write_bytes(b"garbage")
    batch = tmp_path / "b.json"
    assert main(["synth", "--store", str(bad_store), "--out", str(batch)]) == 3


def test_cli_data_error_exit_code(tmp_path):
    id_file = tmp_path / "id.json"
    ood_file = tmp_path / "ood.json"
    id_file.write_text(json.dumps([1.0, 2.0, 3.0]))  # too few for calibration
    ood_file.write_text(json.dumps([0.0] * 30))
    assert main(["score", "--id-scores", str(id_file), "--ood-scores", str(ood_file)]) == 3


def test_cli_numerical_error_exit_code(monkeypatch, tmp_path):
    # no CLI path reaches a NumericalError organically (degenerate pairs are
    # skipped, degenerate densities retried), so force one to pin the mapping
    import oodsynth.cli as cli_mod

    def boom(args):
        raise ZeroVectorError("forced")

    monkeypatch.setattr(cli_mod, "cmd_gen", boom)
    assert main(["gen", "--out", str(tmp_path / "x.idstore")]) == 4


def test_cli_flag_overrides_config_file(tmp_path):
    flags = small_cli_flags(tmp_path)
    out = tmp_path / "s.idstore"
    assert main(["gen", *flags, "--classes", "3", "--out", str(out)]) == 0
    assert IdStore.load(out).num_classes == 3
