import json

import numpy as np
import pytest

from mmnetloc import bench
from mmnetloc.baseline_bb import BBConfig
from mmnetloc.bench import (Curve, ExperimentSpec, NetworkConfig, SpecError, comm_to_reach,
                            mpe, run_experiment, trial_seeds)
from mmnetloc.mm import SolverConfig


def small_spec(tmp_path, **kw):
    base = dict(network=NetworkConfig(n=12, target_degree=4.0), sigmas=(0.0, 0.05), trials=3,
                mm=SolverConfig(max_iters=200), bb=BBConfig(T=5, max_iters=20),
                out_dir=str(tmp_path / "out"), seed=5)
    base.update(kw)
    return ExperimentSpec(**base)


def test_mpe_examples():
    truth = np.zeros((2, 2))
    assert mpe([[[3.0, 4.0], [0.0, 0.0]]], truth) == 2.5
    assert mpe(np.array([[[3.0, 4.0], [3.0, 4.0]], [[0, 0], [0, 0]]]), truth) == 2.5
    assert mpe(truth, truth) == 0.0


def test_truth_init_without_noise_gives_zero_error(tmp_path):
    spec = small_spec(tmp_path, sigmas=(0.0,), trials=1, init="truth")
    res = run_experiment(spec, workers=1)
    for row in res.summary:
        assert row["mpe"] == pytest.approx(0.0, abs=1e-12)
        assert row["final_cost_per_sensor"] == pytest.approx(0.0, abs=1e-20)


def test_outputs_are_deterministic_across_worker_counts(tmp_path):
    a = run_experiment(small_spec(tmp_path / "a"), workers=1)
    b = run_experiment(small_spec(tmp_path / "b"), workers=2)
    names = sorted(p.name for p in a.files)
    assert names == sorted(p.name for p in b.files)
    for pa, pb in zip(sorted(a.files), sorted(b.files)):
        if pa.name != "experiment.json":  # holds out_dir
            assert pa.read_bytes() == pb.read_bytes(), pa.name


def test_result_files_and_axes(tmp_path):
    spec = small_spec(tmp_path)
    res = run_experiment(spec, workers=1)
    out = tmp_path / "out"
    for name in ("summary.csv", "network.json", "experiment.json", "report.txt",
                 "curve_mm_0.0.csv", "curve_bb_0.05.csv"):
        assert (out / name).exists()
    lines = (out / "curve_bb_0.05.csv").read_text().splitlines()
    assert lines[0] == "iter,comm_scalars,mean_cost_per_sensor,mean_mpe"
    step = res.network.n * (2 * 5 + 2)
    assert [int(l.split(",")[1]) for l in lines[1:4]] == [0, step, 2 * step]
    mm = res.curves[("mm", 0.05)]
    assert np.array_equal(mm.comm_scalars, mm.iters * 2 * res.network.n)
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert header == "sigma,method,mpe,final_cost_per_sensor,iters,comm_scalars"
    report = (out / "report.txt").read_text()
    assert "convex-relaxation" in report
    ExperimentSpec.from_json(out / "experiment.json")


def test_mm_mean_cost_curve_never_increases(tmp_path):
    res = run_experiment(small_spec(tmp_path, trials=4), workers=1)
    for sigma in (0.0, 0.05):
        c = res.curves[("mm", sigma)].mean_cost_per_sensor
        assert np.all(np.diff(c) <= 1e-12)


def test_trial_seeds_are_distinct_and_reproducible():
    seen = {trial_seeds(1, k, t)[0] for k in range(3) for t in range(50)}
    assert len(seen) == 150
    s1, r1 = trial_seeds(1, 0, 7)
    s2, r2 = trial_seeds(1, 0, 7)
    assert s1 == s2 and r1.normal() == r2.normal()


def test_comm_to_reach():
    c = Curve(np.arange(4), np.arange(4) * 10, np.array([4.0, 2.0, 1.0, 0.5]), np.zeros(4))
    assert comm_to_reach(c, 1.0) == 20
    assert comm_to_reach(c, 0.1) is None


def test_spec_errors(tmp_path):
    with pytest.raises(SpecError, match="unknown spec fields"):
        ExperimentSpec.from_dict({"trails": 3})
    with pytest.raises(SpecError, match="trials"):
        ExperimentSpec.from_dict({"trials": 0})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"mm": {"max_iters": -1}})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"network": {"size": 3}})
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "trials": ,\n}')
    with pytest.raises(SpecError, match="line 2"):
        ExperimentSpec.from_json(bad)


def test_spec_roundtrip():
    spec = ExperimentSpec(sigmas=[0.02], trials=4)
    again = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("MMNETLOC_THREADS", "3")
    assert bench.worker_count() == 3
    monkeypatch.setenv("MMNETLOC_THREADS", "many")
    with pytest.raises(SpecError):
        bench.worker_count()
