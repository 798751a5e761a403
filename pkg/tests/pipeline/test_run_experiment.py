import json
import math

import numpy as np
import pytest

from qwork_pipeline.config import RunConfigManager
from qwork_pipeline.pipeline import (
    measure_and_fit,
    prepare_experiment,
    propagate_pair,
    run_experiment,
    run_oracle,
)
from qwork_pipeline.utils.errors import ConfigError

BETA = math.log(2.0)
DELTA_F = 0.25 - 0.165**2


def _config(base_config="default.toml", **overrides):
    manager = RunConfigManager(base_config=base_config)
    for key, value in overrides.items():
        manager.set(key.replace("__", "."), value)
    return manager.to_run_config()


def _peaks(out_dir, direction):
    with open(out_dir / f"peaks_{direction}.json") as f:
        return {p["order"]: p["amplitude"] for p in json.load(f)["peaks"]}


@pytest.fixture(scope="module")
def single_tanh_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("single_tanh")
    return run_experiment(_config(), out_dir, make_plots=False), out_dir


@pytest.fixture(scope="module")
def repeated_tanh_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("repeated_tanh")
    return run_experiment(_config("repeated.toml"), out_dir, make_plots=False), out_dir


def test_single_tanh_recovers_temperature_and_free_energy(single_tanh_run):
    report, _ = single_tanh_run
    assert report.status == "ok"
    assert report.exact["beta"] == pytest.approx(BETA)
    assert report.exact["delta_f"] == pytest.approx(DELTA_F, abs=1e-6)
    assert report.exact["delta_f_closed_form"] == pytest.approx(DELTA_F, abs=1e-12)
    assert abs(report.beta_hat / BETA - 1.0) < 0.02
    assert abs(report.delta_f_hat / DELTA_F - 1.0) < 0.02


def test_raw_peak_heights_are_biased_by_line_tails(single_tanh_run, tmp_path):
    corrected, _ = single_tanh_run
    config = _config(fit__crosstalk_correction=False)
    raw = run_experiment(config, tmp_path, make_plots=False)
    assert abs(raw.beta_hat / BETA - 1.0) < 0.05
    assert abs(raw.delta_f_hat / DELTA_F - 1.0) < 0.05
    assert abs(raw.beta_hat - BETA) > abs(corrected.beta_hat - BETA)


def test_estimates_are_converged_in_the_truncation(single_tanh_run, tmp_path):
    report_64, _ = single_tanh_run
    report_128 = run_experiment(_config(numerics__dim=128), tmp_path, make_plots=False)
    assert report_128.beta_hat == pytest.approx(report_64.beta_hat, rel=1e-3)
    assert report_128.delta_f_hat == pytest.approx(report_64.delta_f_hat, rel=1e-3)


def test_report_cross_checks(single_tanh_run):
    report, out_dir = single_tanh_run
    assert report.jarzynski["relative_error"] < 1e-8
    assert report.oracle["crooks_max_relative_deviation"] < 1e-9
    assert report.diagnostics["unitarity_residual"] < 1e-10
    assert report.diagnostics["edge_population_forward"] < 1e-8
    normalization = report.diagnostics["normalization"]
    assert normalization["forward"] == pytest.approx(1.0, abs=1e-3)
    assert report.peaks["forward"] == [-1, 0, 1]
    assert report.peaks["backward"] == [-1, 0, 1]
    for name in report.artifacts:
        assert (out_dir / name).exists()
    with open(out_dir / "report.json") as f:
        data = json.load(f)
    assert data["fit"]["beta_hat"] == report.beta_hat
    assert "points" not in data["fit"]
    assert data["versions"]["qwork_pipeline"]


def test_repeated_tanh_resolves_second_order_lines(single_tanh_run, repeated_tanh_run):
    single, single_dir = single_tanh_run
    repeated, repeated_dir = repeated_tanh_run
    assert repeated.status == "ok"
    assert {-2, -1, 0, 1, 2} <= set(repeated.peaks["forward"])
    assert {-2, 2} & set(single.peaks["forward"]) == set()
    for direction in ("forward", "backward"):
        slow, fast = _peaks(single_dir, direction), _peaks(repeated_dir, direction)
        for k in (-1, 1):
            assert fast[k] / fast[0] > slow[k] / slow[0]
    assert abs(repeated.beta_hat / BETA - 1.0) < 0.05


def test_noisy_repeated_tanh_over_seeds():
    config = _config("repeated_noisy.toml")
    experiment = prepare_experiment(config)
    U, U_b, _ = propagate_pair(experiment, config)
    beta_hats, delta_f_hats = [], []
    for seed in range(20):
        measured = measure_and_fit(experiment, U, U_b, config, seed=seed)
        assert measured.fit is not None
        beta_hats.append(measured.fit.beta_hat)
        delta_f_hats.append(measured.fit.delta_f_hat)
    assert abs(np.median(beta_hats) / BETA - 1.0) < 0.10
    assert abs(np.median(delta_f_hats) / DELTA_F - 1.0) < 0.15
    assert len(set(beta_hats)) == 20


def test_null_quench_is_degenerate(tmp_path):
    report = run_experiment(_config("null.toml"), tmp_path, make_plots=False)
    assert report.status == "degenerate"
    assert report.fit is None
    assert report.peaks["forward"] == [0]
    assert report.exact["delta_f"] == pytest.approx(0.0, abs=1e-12)
    assert not (tmp_path / "crooks_fit.json").exists()
    assert (tmp_path / "report.json").exists()


def test_runs_are_byte_identical(tmp_path):
    config = _config(measurement__noise_sigma=0.001, measurement__samples=200)
    first = run_experiment(config, tmp_path / "a", make_plots=True)
    run_experiment(config, tmp_path / "b", make_plots=True)
    assert "spectra.svg" in first.artifacts
    assert "crooks_ratio.svg" in first.artifacts
    for name in first.artifacts:
        first_bytes = (tmp_path / "a" / name).read_bytes()
        assert first_bytes == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_noisy_signal(tmp_path):
    config = _config(measurement__noise_sigma=0.001, measurement__samples=200)
    experiment = prepare_experiment(config)
    U, U_b, _ = propagate_pair(experiment, config)
    a = measure_and_fit(experiment, U, U_b, config, seed=1)
    b = measure_and_fit(experiment, U, U_b, config, seed=2)
    assert not np.allclose(a.signals[0].values, b.signals[0].values)


def test_backward_schedule_override():
    config = _config(schedule_backward__text="tanh 1.0 0.0 T=1.0 dur=8.0")
    experiment = prepare_experiment(config)
    assert not experiment.backward_is_reverse
    assert experiment.backward_lambda.lambda_i == pytest.approx(0.165)
    mismatched = _config(schedule_backward__text="tanh 0.5 0.0 T=1.0 dur=8.0")
    with pytest.raises(ConfigError):
        prepare_experiment(mismatched)


@pytest.fixture(scope="module")
def strong_sudden_config():
    # g = eta Omega = 1.2 and eps = Omega / 2 = 1.5, switched within 5 ns
    return _config(
        trap__eta=0.4,
        trap__rabi_max_khz=900.0,
        schedule_forward__T_us=0.005,
        measurement__du_us=0.1,
        measurement__samples=5000,
    )


def test_oracle_pairs_lines_of_a_strong_sudden_kick(strong_sudden_config):
    table = run_oracle(strong_sudden_config)
    assert table.delta_f == pytest.approx(1.5 - 1.2**2, abs=1e-10)
    assert len(table.rows) >= 7
    for row in table.rows:
        assert row.ratio == pytest.approx(row.exact_ratio, rel=1e-9)
    tallest_forward = max(table.lines_forward, key=lambda line: line[1])[0]
    tallest_backward = max(table.lines_backward, key=lambda line: line[1])[0]
    assert tallest_forward + tallest_backward != pytest.approx(0.0, abs=0.5)


def test_measured_peaks_of_a_strong_sudden_kick_line_up(strong_sudden_config):
    experiment = prepare_experiment(strong_sudden_config)
    U, U_b, _ = propagate_pair(experiment, strong_sudden_config)
    measured = measure_and_fit(experiment, U, U_b, strong_sudden_config)
    forward, backward = measured.peak_sets
    assert backward.reference == pytest.approx(-forward.reference)
    partners = backward.by_order()
    assert len(measured.points) >= 5
    for p in measured.points:
        assert partners[-p.order].W == pytest.approx(-p.W, abs=2 * forward.dW)
    assert measured.status == "ok"
    assert abs(measured.fit.beta_hat / BETA - 1.0) < 0.10


def test_run_oracle():
    table = run_oracle(_config())
    assert table.beta == pytest.approx(BETA)
    assert {-1, 0, 1} <= {row.order for row in table.rows}
    for row in table.rows:
        assert row.ratio == pytest.approx(row.exact_ratio, rel=1e-9)
        assert row.weight_forward > 0
    total = sum(weight for _, weight in table.lines_forward)
    assert total == pytest.approx(1.0, abs=1e-10)
