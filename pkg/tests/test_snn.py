import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snnforge.ann import passive_forward, weighted_preactivation
from snnforge.errors import ConfigurationError, DimensionError
from snnforge.layers import AvgPool, Conv2d, Dense, is_weighted
from snnforge.snn import SnnModel, closed_form_activation, if_step, simulate, simulate_batch, snn_readout


def neuron(v_th=1.0, readout="spike_count"):
    """A single IF neuron fed its input through a unit weight."""
    return SnnModel([Dense(np.ones((1, 1)), np.zeros(1), v_th=v_th)], (1,), readout)


@pytest.mark.parametrize("v,drive,expected", [
    (0.8, 0.3, (0.1, 1.0)), (0.2, 0.3, (0.5, 0.0)), (0.0, -0.4, (-0.4, 0.0)),
])
def test_if_step_examples(v, drive, expected):
    v_next, spike = if_step(v, drive, 1.0)
    assert v_next == pytest.approx(expected[0], abs=1e-15) and spike == expected[1]


def test_if_step_fires_on_equality():
    assert if_step(0.5, 0.5, 1.0) == (0.0, 1.0)


def test_single_neuron_hand_trace():
    tr = simulate(neuron(), [0.3], 10)
    assert tr.spike_counts[0][0] == 3
    assert tr.psp_mean[0][0] == pytest.approx(0.3, abs=1e-12)
    assert tr.v_final[0][0] == pytest.approx(0.0, abs=1e-9)


def test_zero_input_nonpositive_bias_never_spikes():
    rng = np.random.default_rng(0)
    layers = [Conv2d(rng.normal(size=(3, 2, 3, 3)), -rng.uniform(0, 1, 3), 1, 1, v_th=1.0), AvgPool(2, 2),
              Dense(rng.normal(size=(4, 12)), -rng.uniform(0, 1, 4), v_th=0.5)]
    tr = simulate(SnnModel(layers, (2, 4, 4), "spike_count"), np.zeros((2, 4, 4)), 20)
    assert all(np.all(s == 0) for s in tr.spikes)


@pytest.mark.parametrize("z,v_th,T,expected", [(0.6, 1, 4, 0.5), (-0.3, 0.7, 9, 0.0), (5, 1, 8, 1.0)])
def test_closed_form_examples(z, v_th, T, expected):
    assert closed_form_activation(z, v_th, T) == expected


def test_closed_form_snaps_boundaries():
    # 0.7 * 10 evaluates to 6.999999999999999 in binary floating point
    assert closed_form_activation(0.7, 1.0, 10) == 0.7


@settings(max_examples=300)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.05, 5.0), st.integers(1, 500))
def test_closed_form_within_one_step(frac, v_th, T):
    z = frac * v_th
    assert abs(closed_form_activation(z, v_th, T) - z) <= v_th / T + 1e-12


def _loop_oracle(z, v_th, T):
    v, spikes = 0.0, 0
    for _ in range(T):
        v, s = if_step(v, z, v_th)
        spikes += s == v_th
    return spikes


@pytest.mark.parametrize("v_th", [1.0, 0.3, 2.5])
@pytest.mark.parametrize("T", [1, 2, 7, 16, 100])
def test_simulation_matches_closed_form_on_grid(v_th, T):
    z = np.linspace(-2 * v_th, 2 * v_th, 401)
    model = SnnModel([Dense(np.eye(401), np.zeros(401), v_th=v_th)], (401,), "spike_count")
    tr = simulate_batch(model, z[None], T)
    assert np.array_equal(tr.psp_mean[0][0], closed_form_activation(z, v_th, T))
    assert tr.spike_counts[0][0].tolist() == [_loop_oracle(float(zi), v_th, T) for zi in z]


def random_snn(rng, readout="spike_count"):
    depth = int(rng.integers(2, 4))
    dims = [int(d) for d in rng.integers(2, 8, size=depth + 1)]
    layers = [Dense(rng.normal(0, 1, (dims[k + 1], dims[k])), rng.normal(0, 0.3, dims[k + 1]),
                    v_th=float(rng.uniform(0.2, 2.0))) for k in range(depth)]
    return SnnModel(layers, (dims[0],), readout), rng.normal(0, 1, (8, dims[0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 64))
def test_conservation_and_spike_values(seed, T):
    model, X = random_snn(np.random.default_rng(seed))
    tr = simulate_batch(model, X, T, record_spikes=True)
    for l, v_th in enumerate(model.v_th):
        spikes = tr.spikes[l]
        assert np.all((spikes == 0) | (spikes == v_th))
        assert tr.spike_counts[l].min() >= 0 and tr.spike_counts[l].max() <= T
        np.testing.assert_allclose(spikes.sum(axis=1), tr.drive_sum[l] - tr.v_final[l], rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 64))
def test_average_psp_identity(seed, T):
    model, X = random_snn(np.random.default_rng(seed))
    tr = simulate_batch(model, X, T)
    prev = X
    l = 0
    for layer in model.layers:
        if not is_weighted(layer):
            prev = passive_forward(layer, prev)
            continue
        expected = weighted_preactivation(layer, prev) - tr.v_final[l] / T
        np.testing.assert_allclose(tr.psp_mean[l], expected, rtol=0, atol=1e-9)
        prev = tr.psp_mean[l]
        l += 1


def test_psp_identity_through_conv_and_pool():
    rng = np.random.default_rng(4)
    layers = [Conv2d(rng.normal(size=(3, 1, 3, 3)), rng.normal(0, .2, 3), 1, 1, v_th=0.8), AvgPool(2, 2),
              Dense(rng.normal(size=(5, 12)), rng.normal(0, .2, 5), v_th=1.1)]
    model = SnnModel(layers, (1, 4, 4), "spike_count")
    X = rng.uniform(0, 1, (6, 1, 4, 4))
    tr = simulate_batch(model, X, 40)
    h1 = passive_forward(layers[1], tr.psp_mean[0])
    np.testing.assert_allclose(tr.psp_mean[1], weighted_preactivation(layers[2], h1) - tr.v_final[1] / 40, atol=1e-9)


def test_batched_and_single_sample_agree():
    model, X = random_snn(np.random.default_rng(5), "accumulate_potential")
    batch = simulate_batch(model, X, 25)
    for k, x in enumerate(X):
        single = simulate(model, x, 25)
        for a, b in zip(batch.psp_mean, single.psp_mean):
            assert np.array_equal(a[k], b)


def test_accumulate_readout_constant_drive():
    layers = [Dense(np.eye(2), np.zeros(2), v_th=1.0), Dense(np.zeros((3, 2)), np.array([0.2, -0.5, 0.9]), v_th=1.0)]
    tr = simulate(SnnModel(layers, (2,)), [0.4, 0.9], 13)
    scores, cls = snn_readout(tr)
    np.testing.assert_allclose(scores, [0.2, -0.5, 0.9], atol=1e-12)
    assert cls == 2
    assert tr.spike_counts[-1].sum() == 0  # the accumulating layer never fires


def test_all_zero_trace_ties_to_class_zero():
    layers = [Dense(np.zeros((3, 2)), np.zeros(3), v_th=1.0)]
    scores, cls = snn_readout(simulate(SnnModel(layers, (2,)), [1.0, 1.0], 5))
    assert scores.tolist() == [0, 0, 0] and cls == 0


def test_spike_count_readout_matches_last_layer_psp():
    model, X = random_snn(np.random.default_rng(6))
    tr = simulate(model, X[0], 30)
    scores, _ = snn_readout(tr, "spike_count")
    assert np.array_equal(scores, tr.psp_mean[-1])


def test_invalid_T_and_shapes():
    with pytest.raises(ConfigurationError, match="T >= 1"):
        simulate(neuron(), [0.3], 0)
    with pytest.raises(DimensionError):
        simulate(neuron(), [0.3, 0.1], 4)


def test_v_th_must_be_positive():
    with pytest.raises(ConfigurationError):
        SnnModel([Dense(np.ones((1, 1)), np.zeros(1), v_th=0.0)], (1,))
    with pytest.raises(ConfigurationError):
        SnnModel([Dense(np.ones((1, 1)), np.zeros(1))], (1,))
