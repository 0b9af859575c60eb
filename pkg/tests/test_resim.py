import numpy as np
import pytest
from scipy import stats

from pdl.datamodel import DataError, PopulationDataset
from pdl.resim import (CollocatedTrajectory, MultimodalCloudError, bimodality_score,
                       collocate, keep_clouds, resimulate)
from pdl.simulate import InitialDistribution, SamplingPlan, euler_maruyama_population, \
    make_cascade_model


def gaussian_clouds(means, sd=0.1, P=200, seed=0, times=None):
    rng = np.random.default_rng(seed)
    means = np.asarray(means, dtype=float).reshape(len(means), -1)
    times = np.arange(len(means), dtype=float) if times is None else times
    clouds = tuple(m + sd * rng.standard_normal((P, means.shape[1])) for m in means)
    return PopulationDataset(times, clouds)


def exact_means(ds, target):
    # shift every cloud so its sample mean equals target exactly
    clouds = tuple(c - c.mean(axis=0) + target[k] for k, c in enumerate(ds.clouds))
    return PopulationDataset(ds.times, clouds)


def test_line_is_reproduced():
    t = np.linspace(0, 5, 11)
    line = 2.0 - 0.7 * t
    ds = exact_means(gaussian_clouds(line, times=t), line[:, None])
    col = collocate(ds, lam=1e-8)
    np.testing.assert_allclose(col.evaluate(t)[:, 0], line, atol=1e-6)


def test_huge_penalty_gives_affine_curve():
    t = np.linspace(0, 4, 9)
    ds = gaussian_clouds(np.sin(2 * t), times=t)
    col = collocate(ds, lam=1e8)
    tt = np.linspace(0, 4, 401)
    assert np.abs(col.evaluate(tt, 2)).max() <= 1e-6


def test_cascade_curve_within_one_std():
    model = make_cascade_model(sigma=0.01)
    plan = SamplingPlan.uniform(50, 0.5)
    ds = euler_maruyama_population(model, InitialDistribution([1, 0, 0, 0], 0.03), plan, 400, 0)
    col = collocate(ds)
    gap = np.abs(col.evaluate(ds.times) - ds.means())
    assert np.all(gap <= np.sqrt(ds.variances()))


def test_residual_decreases_as_lambda_shrinks():
    t = np.linspace(0, 6, 13)
    ds = gaussian_clouds(np.cos(t) + 0.1 * t, sd=0.2, times=t, seed=3)
    res = [np.sum((collocate(ds, lam=l).evaluate(t) - ds.means()) ** 2)
           for l in (1e2, 1, 1e-2, 1e-4, 1e-6)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(res, res[1:]))


def test_collocate_preconditions():
    with pytest.raises(DataError):
        collocate(gaussian_clouds([0.0, 1.0]))
    with pytest.raises(ValueError):
        collocate(gaussian_clouds([0.0, 1.0, 2.0]), lam=-1.0)


def test_multimodal_cloud_rejected():
    rng = np.random.default_rng(4)
    split = np.concatenate([rng.normal(-1, 0.1, 200), rng.normal(1, 0.1, 200)])[:, None]
    ds = PopulationDataset([0.0, 1.0, 2.0], (rng.normal(size=(400, 1)), split,
                                             rng.normal(size=(400, 1))))
    with pytest.raises(MultimodalCloudError, match="t=1"):
        collocate(ds)
    collocate(ds, check_modes=False)


def test_bimodality_score_separates():
    rng = np.random.default_rng(5)
    assert bimodality_score(rng.normal(size=1000)) < 4
    assert bimodality_score(np.r_[rng.normal(-2, 0.3, 500), rng.normal(2, 0.3, 500)]) > 4
    assert bimodality_score(np.ones(50)) == 0.0


# ---------------------------------------------------------------- resimulate

def fixed_colloc(sd):
    ds = gaussian_clouds(np.linspace(0, 1, 6) ** 2, times=np.linspace(0, 5, 6))
    col = collocate(ds)
    return CollocatedTrajectory(col.basis, col.coef, col.lam, col.times,
                                np.full_like(col.interval_var, sd ** 2), col.variable_names)


def test_zero_variance_puts_samples_on_curve():
    col = fixed_colloc(0.0)
    out = resimulate(col, 0.25, 50, seed=1)
    centre = col.evaluate(out.times)
    for k, c in enumerate(out.clouds):
        assert np.all(c == centre[k])


def test_same_dt_preserves_means():
    ds = gaussian_clouds(np.linspace(1, 2, 8), sd=0.2, P=400, times=np.linspace(0, 7, 8))
    col = collocate(ds)
    P = 400
    out = resimulate(col, 1.0, P, seed=2)
    np.testing.assert_allclose(out.times, ds.times)
    sbar = np.sqrt(col.variance_at(out.times))
    assert np.all(np.abs(out.means() - col.evaluate(out.times)) <= 4 * sbar / np.sqrt(P))


def test_time_grid_includes_end():
    out = resimulate(fixed_colloc(0.1), 2.0, 10, seed=0)
    np.testing.assert_allclose(out.times, [0, 2, 4, 5])


def test_resimulated_clouds_are_gaussian():
    col = fixed_colloc(0.3)
    rejections = 0
    for seed in range(20):
        c = resimulate(col, 2.5, 1000, seed).clouds[1][:, 0]
        rejections += stats.normaltest(c).pvalue < 0.01
    # at alpha = 0.01 over 20 independent draws, two or more rejections has p < 0.02
    assert rejections <= 1


def test_variance_preserved():
    col = fixed_colloc(0.2)
    out = resimulate(col, 0.5, 400, seed=6)
    np.testing.assert_allclose(out.variances()[:, 0], 0.04, rtol=0.2)


def test_resimulate_is_seeded():
    col = fixed_colloc(0.2)
    a, b = resimulate(col, 0.5, 30, 9), resimulate(col, 0.5, 30, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.clouds, b.clouds))
    with pytest.raises(ValueError):
        resimulate(col, 0.0, 30, 9)


def test_keep_clouds():
    ds = gaussian_clouds(np.zeros(101), P=3)
    thin = keep_clouds(ds, 0.15)
    assert thin.n_times == 15 and thin.times[0] == 0 and thin.times[-1] == 100
    assert keep_clouds(ds, 1.0).n_times == 101
    with pytest.raises(DataError):
        keep_clouds(gaussian_clouds(np.zeros(5), P=3), 0.1)


def test_collocation_csv(tmp_path):
    col = fixed_colloc(0.1)
    col.export_csv(tmp_path / "c.csv", [0.0, 2.5, 5.0])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "time,x1" and len(lines) == 4


@pytest.mark.slow
def test_full_keep_passthrough_matches_direct_inference():
    from pdl.datamodel import InterventionSet
    from pdl.experiments import CascadeBenchmark, run_cascade, simulate_cascade
    from pdl.metrics import relative_error

    b = CascadeBenchmark()
    diffs = []
    for seed in range(4):
        iset, truth = simulate_cascade(b, seed)
        direct, _ = run_cascade(b, seed, data=iset)
        dense = resimulate(collocate(keep_clouds(iset.datasets[0], 1.0)), b.dt, b.nos, seed)
        again, _ = run_cascade(b, seed, data=InterventionSet((dense,)))
        diffs.append(relative_error(again.A_hat, truth.A) - relative_error(direct.A_hat, truth.A))
    # paired comparison: the mean difference is within repeat noise
    assert stats.ttest_1samp(diffs, 0.0).pvalue > 0.01
