import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genflow.errors import ParameterError, ShapeMismatchError
from genflow.flow import (DeltaFlow, GeneralFlow, NormalizedFlow, NormMode, accumulate, compute_deltas,
                          denormalize, flow_from_bytes, flow_from_json, flow_to_bytes, flow_to_json,
                          load_flow, normalize, save_flow)


def line_flow():
    q = np.zeros((1, 3))
    traj = np.array([[[0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0]]])
    return GeneralFlow(q, traj)


def random_deltas(seed, nq=8, T=3, scale=0.1):
    rng = np.random.default_rng(seed)
    return DeltaFlow(rng.normal(size=(nq, 3)), rng.normal(scale=scale, size=(nq, T, 3)))


def test_static_deltas_are_zero():
    f = GeneralFlow.static([[1.0, 2.0, 3.0]], steps=3)
    np.testing.assert_array_equal(compute_deltas(f).deltas, np.zeros((1, 3, 3)))


def test_line_deltas():
    np.testing.assert_allclose(compute_deltas(line_flow()).deltas, [[[0.1, 0, 0]] * 3], atol=1e-15)


def test_accumulate_examples():
    q = [[1.0, -1.0, 0.5]]
    np.testing.assert_array_equal(accumulate(q, np.zeros((1, 3, 3))).trajectories, [[q[0]] * 3])
    acc = accumulate(np.zeros((1, 3)), np.tile([0.1, 0.0, 0.0], (1, 3, 1)))
    np.testing.assert_allclose(acc.trajectories[0, :, 0], [0.1, 0.2, 0.3])


def test_accumulate_shape_mismatch():
    with pytest.raises(ParameterError):
        accumulate(np.zeros((2, 3)), np.zeros((3, 3, 3)))


def test_general_flow_rejects_bad_shapes():
    with pytest.raises(ShapeMismatchError):
        GeneralFlow(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ShapeMismatchError):
        GeneralFlow(np.zeros((2, 3)), np.zeros((1, 3, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_deltas_and_accumulate_are_inverse(seed):
    rng = np.random.default_rng(seed)
    f = GeneralFlow(rng.normal(size=(5, 3)), rng.normal(size=(5, 4, 3)))
    back = accumulate(f.queries, compute_deltas(f))
    np.testing.assert_allclose(back.trajectories, f.trajectories, atol=1e-12)


def test_tln_three_equal_steps():
    nf = normalize(compute_deltas(line_flow()), NormMode.TLN)
    assert nf.scales[0] == pytest.approx(0.3, abs=1e-15)
    np.testing.assert_allclose(np.linalg.norm(nf.unit_deltas[0], axis=1), [1 / 3] * 3, atol=1e-15)


def test_tln_static_is_degenerate():
    nf = normalize(compute_deltas(GeneralFlow.static([[0.0, 0.0, 0.0]])), NormMode.TLN)
    assert nf.scales[0] == 0.0
    assert not nf.unit_deltas.any()


def test_sdn_unit_step_norm():
    d = DeltaFlow(np.zeros((1, 3)), [[[0.3, -0.4, 0.0], [0.0, 0.0, 0.0], [1e-3, 0.0, 0.0]]])
    nf = normalize(d, NormMode.SDN)
    assert nf.scales.shape == (1, 3)
    norms = np.linalg.norm(nf.unit_deltas[0], axis=1)
    assert norms[0] == 1.0 and norms[2] == 1.0
    assert norms[1] == 0.0 and nf.scales[0, 1] == 0.0


def test_tdn_uses_net_displacement():
    # out and back: path length 0.2, net displacement 0.0
    d = DeltaFlow(np.zeros((2, 3)), [[[0.1, 0, 0], [-0.1, 0, 0]], [[0.1, 0, 0], [0.1, 0, 0]]])
    nf = normalize(d, NormMode.TDN)
    assert nf.scales[0] == 0.0
    assert nf.scales[1] == pytest.approx(0.2)


def test_denormalize_zero_scale():
    nf = NormalizedFlow(np.zeros(2), np.ones((2, 3, 3)), NormMode.TLN)
    assert not denormalize(nf).deltas.any()


def test_normalized_flow_scale_shape_checked():
    with pytest.raises(ShapeMismatchError):
        NormalizedFlow(np.zeros((2, 3)), np.ones((2, 3, 3)), NormMode.TLN)
    with pytest.raises(ShapeMismatchError):
        NormalizedFlow(np.zeros(2), np.ones((2, 3, 3)), NormMode.SDN)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(list(NormMode)))
def test_round_trip_every_mode(seed, mode):
    d = random_deltas(seed)
    back = denormalize(normalize(d, mode))
    np.testing.assert_allclose(back.deltas, d.deltas, atol=1e-12)
    np.testing.assert_array_equal(back.queries, d.queries)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tln_unit_path_length(seed):
    nf = normalize(random_deltas(seed), NormMode.TLN)
    sums = np.linalg.norm(nf.unit_deltas, axis=2).sum(axis=1)
    np.testing.assert_allclose(sums[nf.scales > 0], 1.0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3), st.sampled_from(list(NormMode)))
def test_scale_equivariance(seed, c, mode):
    d = random_deltas(seed)
    a = normalize(d, mode)
    b = normalize(DeltaFlow(d.queries, c * d.deltas), mode)
    np.testing.assert_allclose(b.scales, c * a.scales, rtol=1e-12)
    np.testing.assert_allclose(b.unit_deltas, a.unit_deltas, atol=1e-12)


def sample_flow(seed=0, nq=6, T=3):
    rng = np.random.default_rng(seed)
    return GeneralFlow(rng.normal(size=(nq, 3)), rng.normal(size=(nq, T, 3)), 0.25)


def assert_same_flow(a, b):
    np.testing.assert_array_equal(a.queries, b.queries)
    np.testing.assert_array_equal(a.trajectories, b.trajectories)
    assert a.timestep == b.timestep


def test_binary_round_trip():
    f = sample_flow()
    buf = flow_to_bytes(f)
    assert buf[:4] == b"GFLW"
    assert len(buf) == 13 + 8 * (1 + 6 * 3 + 6 * 3 * 3)
    assert_same_flow(flow_from_bytes(buf), f)


def test_json_round_trip():
    f = sample_flow(1)
    assert_same_flow(flow_from_json(flow_to_json(f)), f)


def test_truncated_binary():
    buf = flow_to_bytes(sample_flow())
    with pytest.raises(ShapeMismatchError):
        flow_from_bytes(buf[:-8])
    with pytest.raises(ShapeMismatchError):
        flow_from_bytes(buf[:6])


def test_bad_magic():
    buf = bytearray(flow_to_bytes(sample_flow()))
    buf[:4] = b"XXXX"
    with pytest.raises(ParameterError):
        flow_from_bytes(bytes(buf))


def test_json_missing_field():
    with pytest.raises(ParameterError):
        flow_from_json({"queries": [[0, 0, 0]]})


@pytest.mark.parametrize("name", ["f.gflw", "f.json"])
def test_save_load(tmp_path, name):
    f = sample_flow(2)
    save_flow(f, tmp_path / name)
    assert_same_flow(load_flow(tmp_path / name), f)
