import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radiomap.channel import (SPEED_OF_LIGHT, CsiMatrix, MultipathComponent, RadioConfig, RadioSilence,
                              add_noise, read_csi, simulate_csi, steering_vector, synth_csi, synth_paths,
                              write_csi)
from radiomap.scene import AccessPoint, Bounds, Environment, Obstacle

CFG = RadioConfig()
LAM = CFG.wavelength
local = st.floats(-1.5, 1.5, allow_nan=False)


def _ap(orientation=0.0, n=8):
    return AccessPoint((0.0, 0.0), orientation, n, LAM / 2)


def _env(walls=(), ap=None):
    return Environment([ap or _ap()], list(walls), Bounds(-20, -20, 20, 20))


# --- steering vector ------------------------------------------------------------

def test_steering_broadside():
    assert np.array_equal(steering_vector(0.0, 4, LAM / 2, LAM), np.ones(4))


def test_steering_thirty_degrees():
    a = steering_vector(math.pi / 6, 4, LAM / 2, LAM)
    assert np.allclose(a, [1, -1j, -1, 1j], atol=1e-12)


def test_steering_field_of_view():
    for bad in (math.pi / 2, -math.pi / 2, 2.0):
        with pytest.raises(ValueError, match="outside ULA field of view"):
            steering_vector(bad, 4, LAM / 2, LAM)


@pytest.mark.invariant
@given(local, st.integers(2, 16), st.floats(0.01, 0.3))
def test_steering_unit_modulus(theta, n, spacing):
    a = steering_vector(theta, n, spacing, LAM)
    assert a[0] == 1
    assert np.allclose(np.abs(a), 1.0, atol=1e-14)
    assert np.sum(np.abs(a) ** 2) == pytest.approx(n, rel=1e-14)


@pytest.mark.invariant
@given(local, st.integers(2, 16))
def test_steering_conjugate_symmetry(theta, n):
    assert np.allclose(steering_vector(-theta, n, LAM / 2, LAM),
                       np.conj(steering_vector(theta, n, LAM / 2, LAM)), atol=1e-14)


# --- path synthesis -------------------------------------------------------------

def test_empty_scene_single_direct_path():
    paths = synth_paths(_env(), _ap(), (3.0, 4.0), CFG, seed=0)
    assert len(paths) == 1
    assert paths[0].delay == pytest.approx(5.0 / SPEED_OF_LIGHT)
    assert abs(paths[0].gain) == pytest.approx(1 / 5.0)
    assert paths[0].aod_global == pytest.approx(math.atan2(4, 3))


def test_zero_reflectivity_prunes_bounce():
    env = _env([Obstacle((6, -5), (6, 5), 0.0)])
    assert len(synth_paths(env, _ap(), (4.0, 0.0), CFG, seed=0)) == 1


def test_mirror_wall_bounce_length():
    # reflecting (4, 0) across y = 2 gives (4, 4); unfolded length is its distance from the origin
    env = _env([Obstacle((0, 2), (8, 2), 1.0)])
    paths = synth_paths(env, _ap(), (4.0, 0.0), CFG, seed=0)
    assert len(paths) == 2
    bounce = max(paths, key=lambda p: p.delay)
    oracle = math.hypot(4.0, 2 * 2.0 - 0.0)
    assert bounce.delay * SPEED_OF_LIGHT == pytest.approx(oracle, rel=1e-12)
    assert bounce.delay == pytest.approx(18.856e-9, abs=1e-12)
    assert abs(bounce.gain) == pytest.approx(1 / oracle)
    assert bounce.aod_global == pytest.approx(math.atan2(2, 2))


def test_blocked_user_gets_reflection_only():
    walls = [Obstacle((2, -1), (2, 1), 1.0), Obstacle((0, 3), (8, 3), 0.5)]
    paths = synth_paths(_env(walls), _ap(), (4.0, 0.0), CFG, seed=0)
    assert len(paths) == 1
    assert abs(paths[0].gain) == pytest.approx(0.5 / math.hypot(4, 6))


def test_field_of_view_drops_paths_behind_array():
    ap = _ap(orientation=0.0)
    with pytest.raises(RadioSilence):
        synth_paths(_env(ap=ap), ap, (-3.0, 0.0), CFG, seed=0)


def test_degenerate_pair():
    with pytest.raises(ValueError, match="degenerate"):
        synth_paths(_env(), _ap(), (0.0, 0.0), CFG, seed=0)


def test_path_loss_exponent_scaling():
    a = synth_paths(_env(), _ap(), (2.0, 0.0), CFG, 3.0, seed=0)[0]
    b = synth_paths(_env(), _ap(), (4.0, 0.0), CFG, 3.0, seed=0)[0]
    assert abs(a.gain) / abs(b.gain) == pytest.approx(2 ** 1.5)


def test_component_invariants():
    with pytest.raises(ValueError):
        MultipathComponent(1.0, -1e-9, 0.0)
    with pytest.raises(ValueError):
        MultipathComponent(complex("inf"), 0.0, 0.0)
    with pytest.raises(ValueError):
        RadioConfig(bandwidth=0)
    with pytest.raises(ValueError):
        RadioConfig(num_subcarriers=8).check_env(_env())


# --- CSI rendering --------------------------------------------------------------

def test_single_zero_path_all_ones():
    H = synth_csi([MultipathComponent(1.0, 0.0, 0.0)], _ap(), CFG)
    assert H.shape == (8, 64)
    assert np.allclose(H.entries, 1.0, atol=1e-15)


@pytest.mark.invariant
@given(st.floats(0.1, 10), st.floats(0, 2 * math.pi), st.floats(0, 200e-9), local)
def test_single_path_rank_one(mag, phase, delay, theta):
    H = synth_csi([MultipathComponent(mag * np.exp(1j * phase), delay, theta)], _ap(), CFG)
    sv = np.linalg.svd(H.entries, compute_uv=False)
    assert sv[1] <= 1e-10 * sv[0]


def test_two_path_column_magnitude():
    tau1, tau2 = 10e-9, 37e-9
    H = synth_csi([MultipathComponent(1.0, tau1, 0.0), MultipathComponent(1.0, tau2, 0.0)], _ap(), CFG)
    m = np.arange(1, 65)
    oracle = math.sqrt(8) * np.abs(1 + np.exp(-2j * math.pi * (m / 64) * 20e6 * (tau2 - tau1)))
    assert np.allclose(np.linalg.norm(H.entries, axis=0), oracle, atol=1e-12)


def test_synth_csi_explicit_sum_oracle():
    rng = np.random.default_rng(4)
    ap = _ap(orientation=0.4)
    paths = [MultipathComponent(complex(*rng.normal(size=2)), rng.uniform(0, 1e-7), rng.uniform(-1, 1) + 0.4)
             for _ in range(3)]
    H = synth_csi(paths, ap, CFG).entries
    for m in (1, 17, 64):
        col = sum(p.gain * np.exp(-2j * math.pi * (m / 64) * 20e6 * p.delay)
                  * steering_vector(p.aod_global - 0.4, 8, LAM / 2, LAM) for p in paths)
        assert np.allclose(H[:, m - 1], col, atol=1e-12)


@pytest.mark.invariant
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1e-7), local),
                min_size=2, max_size=5))
def test_synth_csi_linearity(terms):
    paths = [MultipathComponent(complex(re, im), d, th) for re, im, d, th in terms]
    if all(p.gain == 0 for p in paths):
        return
    whole = synth_csi(paths, _ap(), CFG).entries
    parts = sum(synth_csi([p], _ap(), CFG).entries for p in paths)
    assert np.allclose(whole, parts, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(whole).max()))


@pytest.mark.invariant
@given(st.floats(0.5, 8), st.floats(-1.2, 1.2), st.floats(1.5, 4))
def test_rss_distance_law(d, theta, eta):
    # empty scene, noise off: doubling distance divides energy by 2**eta
    ap = _ap()
    x1 = (d * math.cos(theta), d * math.sin(theta))
    x2 = (2 * x1[0], 2 * x1[1])
    env = Environment([ap], [], Bounds(-20, -20, 20, 20))
    e1 = np.sum(np.abs(synth_csi(synth_paths(env, ap, x1, CFG, eta, 0), ap, CFG).entries) ** 2)
    e2 = np.sum(np.abs(synth_csi(synth_paths(env, ap, x2, CFG, eta, 0), ap, CFG).entries) ** 2)
    assert e1 / e2 == pytest.approx(2 ** eta, rel=1e-10)


# --- noise ----------------------------------------------------------------------

def test_noise_zero_is_identity():
    H = CsiMatrix(np.ones((4, 8)) * (1 + 2j))
    assert np.array_equal(add_noise(H, 0.0, 1).entries, H.entries)


def test_noise_variance_monte_carlo():
    H = CsiMatrix(np.zeros((100, 1000), dtype=complex))
    N = add_noise(H, 0.4, seed=9).entries
    assert np.mean(np.abs(N) ** 2) == pytest.approx(0.4, rel=0.02)
    assert np.var(N.real) == pytest.approx(0.2, rel=0.03)
    assert np.var(N.imag) == pytest.approx(0.2, rel=0.03)


def test_noise_deterministic_and_validated():
    H = CsiMatrix(np.zeros((4, 8)))
    assert np.array_equal(add_noise(H, 0.2, 5).entries, add_noise(H, 0.2, 5).entries)
    with pytest.raises(ValueError):
        add_noise(H, -0.1, 0)


def test_csi_matrix_validation():
    with pytest.raises(ValueError):
        CsiMatrix(np.ones(4))
    with pytest.raises(ValueError):
        CsiMatrix(np.array([[np.nan, 1]]))


# --- dataset --------------------------------------------------------------------

def test_simulate_csi_omits_silent_pairs(walled_room):
    pts = np.array([[4.0, 4.0], [12.0, 4.0], [8.0, 1.0]])
    recs = simulate_csi(walled_room, pts, CFG, seed=1, noise_variance=0.1)
    assert all(r.shape == (8, 64) for r in recs)
    keys = [(r.slot_index, r.ap_index) for r in recs]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    again = simulate_csi(walled_room, pts, CFG, seed=1, noise_variance=0.1)
    assert all(np.array_equal(a.entries, b.entries) for a, b in zip(recs, again))


@pytest.mark.parametrize("suffix", [".bin", ".jsonl"])
def test_csi_file_round_trip(tmp_path, walled_room, suffix):
    recs = simulate_csi(walled_room, np.array([[4.0, 4.0], [12.0, 4.0]]), CFG, seed=2, noise_variance=0.2)
    path = tmp_path / f"csi{suffix}"
    write_csi(recs, path)
    back = read_csi(path)
    assert [(r.slot_index, r.ap_index) for r in back] == [(r.slot_index, r.ap_index) for r in recs]
    # the binary format stores complex64; the debug variant keeps full precision
    dtype = np.complex64 if suffix == ".bin" else complex
    for a, b in zip(recs, back):
        assert np.array_equal(b.entries, a.entries.astype(dtype))


def test_csi_binary_layout(tmp_path):
    H = CsiMatrix(np.arange(6).reshape(2, 3) + 1j, ap_index=3, slot_index=7)
    write_csi([H], tmp_path / "x.bin")
    raw = (tmp_path / "x.bin").read_bytes()
    assert raw[:10] == bytes([7, 0, 0, 0, 3, 0, 2, 0, 3, 0])
    assert len(raw) == 10 + 6 * 8
    # antenna-major: second complex64 is entry (0, 1)
    assert np.frombuffer(raw[10:], dtype="<c8")[1] == 1 + 1j


def test_csi_truncated_file(tmp_path):
    H = CsiMatrix(np.ones((2, 3)))
    write_csi([H], tmp_path / "x.bin")
    data = (tmp_path / "x.bin").read_bytes()
    (tmp_path / "y.bin").write_bytes(data[:-4])
    with pytest.raises(ValueError, match="truncated"):
        read_csi(tmp_path / "y.bin")
