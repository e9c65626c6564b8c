import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wgdark.couplings import EmitterChain
from wgdark.disorder import (
    DEFAULT_SAMPLES, DisorderCampaign, EnsembleStatistics, emitter_normal, imperfection_scan,
    run_campaign, sample_positions, standard_observers,
)
from wgdark.fullspace import evolve, inverted_state

pytestmark = pytest.mark.filterwarnings("ignore:dt = .* exceeds")


def test_defaults():
    c = DisorderCampaign(EmitterChain(4, 2), 0.01)
    assert c.samples == DEFAULT_SAMPLES == 200
    assert c.t_final == 10.0


@pytest.mark.parametrize("kw", [{"samples": 0}, {"epsilon": -0.1}, {"seed": -1}, {"seed": 2**64}])
def test_campaign_validation(kw):
    args = {"base": EmitterChain(4, 2), "epsilon": 0.01, **kw}
    with pytest.raises(ValueError):
        DisorderCampaign(**args)


def test_statistics_validation():
    with pytest.raises(ValueError):
        EnsembleStatistics([0, 1], {"a": [1, 2]}, {"a": [0, -1]})
    with pytest.raises(ValueError):
        EnsembleStatistics([0, 1], {"a": [1, 2, 3]}, {"a": [0, 0, 0]})


def test_zero_epsilon_gives_lattice():
    base = EmitterChain(6, 2, spacing=1.0)
    assert np.array_equal(sample_positions(base, 0.0, (7, 3)), np.arange(6.0))
    with pytest.raises(ValueError):
        sample_positions(base, -1e-3, (0, 0))


def test_positions_are_deterministic():
    base = EmitterChain(8, 3)
    a = sample_positions(base, 0.001, (11, 5))
    b = sample_positions(base, 0.001, (11, 5))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_positions(base, 0.001, (11, 6)))
    assert not np.array_equal(a, sample_positions(base, 0.001, (12, 5)))


def test_pooled_deviation_spread():
    base, eps = EmitterChain(8, 3), 0.001
    lattice = np.arange(8) * base.spacing
    dev = np.concatenate([sample_positions(base, eps, (0, s)) - lattice for s in range(12500)])
    assert dev.size == 10**5
    assert abs(dev.std(ddof=1) / eps - 1) < 0.02
    assert abs(dev.mean()) < 4 * eps / np.sqrt(dev.size)


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6), st.integers(0, 100))
def test_emitter_stream_is_a_pure_function_of_key(seed, sample, emitter):
    assert emitter_normal(seed, sample, emitter) == emitter_normal(seed, sample, emitter)


def test_zero_epsilon_campaign_equals_ideal_run():
    base = EmitterChain(4, 2)
    stats = run_campaign(DisorderCampaign(base, 0.0, samples=3, t_final=2.0, dt=0.01, stride=20))
    ideal = evolve(inverted_state(base), base, t_final=2.0, dt=0.01, stride=20,
                   observers=standard_observers(base))
    assert np.array_equal(stats.times, ideal.times)
    for k, v in ideal.observables.items():
        assert np.array_equal(stats.mean[k], v)
        assert np.all(stats.stderr[k] == 0)
    assert stats.metadata["reordered"] is False


def test_campaign_determinism_and_worker_independence():
    c = DisorderCampaign(EmitterChain(4, 2), 0.05, samples=4, seed=99, t_final=1.0, dt=0.01, stride=25)
    a, b = run_campaign(c), run_campaign(c)
    p = run_campaign(c, workers=2)
    for k in a.mean:
        assert np.array_equal(a.mean[k], b.mean[k]) and np.array_equal(a.stderr[k], b.stderr[k])
        assert np.array_equal(a.mean[k], p.mean[k]) and np.array_equal(a.stderr[k], p.stderr[k])
    assert list(a.columns())[:3] == ["time", "pumped_mean", "pumped_stderr"]


def test_stderr_shrinks_when_samples_double():
    base = EmitterChain(3, 1)
    kw = dict(epsilon=0.05, seed=3, t_final=1.0, dt=0.01, stride=25)
    small = run_campaign(DisorderCampaign(base, samples=40, **kw))
    big = run_campaign(DisorderCampaign(base, samples=80, **kw))
    ratio = small.stderr["unpumped"][1:].mean() / big.stderr["unpumped"][1:].mean()
    assert 1.2 <= ratio <= 1.7


def test_large_epsilon_flags_reordering():
    stats = run_campaign(DisorderCampaign(EmitterChain(3, 1), 2.0, samples=4, t_final=0.1, dt=0.01))
    assert stats.metadata["reordered"] and stats.metadata["reordered_samples"] >= 1


def test_campaign_rejects_large_n():
    with pytest.raises(ValueError):
        run_campaign(DisorderCampaign(EmitterChain(13, 2), 0.01, samples=1))


def test_positional_disorder_breaks_dark_manifold():
    # (8, 3), eps = 0.01: dark projections leak while un-pumped excitation grows past the ideal curve
    base = EmitterChain(8, 3)
    kw = dict(samples=4, t_final=5.0, dt=0.01, stride=50)
    ideal = run_campaign(DisorderCampaign(base, 0.0, **kw))
    noisy = run_campaign(DisorderCampaign(base, 0.01, **kw))
    assert noisy.mean["dark_M3"][-1] < ideal.mean["dark_M3"][-1] - 0.01
    assert noisy.mean["dark_total"][-1] < ideal.mean["dark_total"][-1] - 0.01
    assert noisy.mean["unpumped"][-1] > ideal.mean["unpumped"][-1] + 0.01


def test_nonradiative_decay_drains_top_dark_state_first():
    runs = imperfection_scan(EmitterChain(8, 3), "nonradiative", [0.0, 0.01], t_final=10.0,
                             dt=0.01, stride=100)
    ideal, lossy = runs[0.0], runs[0.01]
    assert lossy.metadata["nonradiative"] == 0.01
    assert lossy["dark_M3"][-1] < ideal["dark_M3"][-1] - 0.05
    for m in (0, 1):
        assert lossy[f"dark_M{m}"][-1] > ideal[f"dark_M{m}"][-1]


def test_zero_rate_scan_matches_ideal():
    ch = EmitterChain(4, 2)
    for kind in ("nonradiative", "dephasing"):
        tr = imperfection_scan(ch, kind, [0.0], t_final=1.0, dt=0.01, stride=10)[0.0]
        ref = evolve(inverted_state(ch), ch, t_final=1.0, dt=0.01, stride=10, observers=standard_observers(ch))
        for k in ref.observables:
            assert np.array_equal(tr[k], ref[k])
    with pytest.raises(ValueError):
        imperfection_scan(ch, "thermal", [0.1])
    with pytest.raises(ValueError):
        imperfection_scan(ch, "dephasing", [-0.1])


def test_dephasing_lowers_dark_total():
    tr = imperfection_scan(EmitterChain(6, 2), "dephasing", [0.1], t_final=10.0, dt=0.01, stride=100)[0.1]
    assert tr["dark_total"][-1] < 0.9


@pytest.mark.parametrize("kind", ["nonradiative", "dephasing"])
def test_imperfect_generator_preserves_trace(kind):
    ch = EmitterChain(5, 2)
    tr = imperfection_scan(ch, kind, [0.1], t_final=20.0, dt=0.005, stride=400,
                           observers=lambda c: {"trace": lambda s: s.trace().real})[0.1]
    assert np.max(np.abs(tr["trace"] - 1)) <= 1e-8
    assert tr.final_state.hermiticity_error() <= 1e-10
    assert tr.final_state.min_eigenvalue() >= -1e-10
