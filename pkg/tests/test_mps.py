import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_state
from varanneal.models import sample_spin_glass, spin_glass_mpo
from varanneal.mps import (MpsState, apply_bond, apply_site, canonicalize, from_dense, left_env,
                           move_center, mpo_expectation, mpo_tensors, mps_entropy, mps_to_dense,
                           overlap, product_mps, read_checkpoint, right_env, schmidt_values,
                           write_checkpoint)


def _random_mps(rng, N=6, D=4, B=1):
    psi = np.stack([random_state(rng, 2**N) for _ in range(B)])
    return from_dense(psi, N, D)


def _rand(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 3), st.integers(1, 4))
@settings(max_examples=40)
def test_contractions_match_einsum(seed, Dl, w, Dr):
    rng = np.random.default_rng(seed)
    B, d = 2, 2
    A = _rand(rng, B, Dl, d, Dr)
    L = _rand(rng, B, Dl, w, Dl)
    R = _rand(rng, B, Dr, w, Dr)
    W = _rand(rng, B, w, d, d, w)
    ref = np.einsum("bawx,bwstv,bxtc,byvc->basy", L, W, A, R)
    np.testing.assert_allclose(apply_site(A, L, W, R), ref, atol=1e-10)
    Lb = _rand(rng, B, Dr, w, Dr)
    Cs = _rand(rng, B, Dr, Dr)
    np.testing.assert_allclose(apply_bond(Cs, Lb, R), np.einsum("bawx,bxc,bywc->bay", Lb, Cs, R), atol=1e-10)
    np.testing.assert_allclose(left_env(L, A, W),
                               np.einsum("bawx,bast,bwsuv,bxuy->btvy", L, A.conj(), W, A), atol=1e-10)
    np.testing.assert_allclose(right_env(R, A, W),
                               np.einsum("bcvy,basc,bwsuv,bxuy->bawx", R, A.conj(), W, A), atol=1e-10)


def test_jit_contractions_match_numpy(rng):
    from varanneal import tdvp_jit as J

    Dl, d, Dr, wl, wr = 3, 2, 4, 3, 2
    A = _rand(rng, Dl, d, Dr)
    L = _rand(rng, Dl, wl, Dl)
    R = _rand(rng, Dr, wr, Dr)
    W = _rand(rng, wl, d, d, wr)
    Wt = J._site_wt(W)
    np.testing.assert_allclose(J._site_apply(A, L, Wt, R),
                               apply_site(A[None], L[None], W[None], R[None])[0], atol=1e-10)
    np.testing.assert_allclose(J._left_env(L, A, W), left_env(L[None], A[None], W[None])[0], atol=1e-10)
    np.testing.assert_allclose(J._right_env(R, A, Wt), right_env(R[None], A[None], W[None])[0], atol=1e-10)
    C = _rand(rng, Dr, Dr)
    Lr = _rand(rng, Dr, wr, Dr)
    np.testing.assert_allclose(J._bond_apply(C, Lr, R), apply_bond(C[None], Lr[None], R[None])[0], atol=1e-10)


def test_plus_state_dense():
    mps = product_mps(np.ones(2) / math.sqrt(2), D_max=1, N=8)
    np.testing.assert_allclose(mps_to_dense(mps)[0], np.full(256, 2.0**-4), atol=1e-14)


def test_product_round_trip_and_entropy(rng):
    states = [random_state(rng, 2) for _ in range(5)]
    mps = product_mps(states, D_max=4)
    ref = states[0]
    for v in states[1:]:
        ref = np.kron(ref, v)
    assert np.max(np.abs(mps_to_dense(mps)[0] - ref)) < 1e-14
    for cut in range(1, 5):
        assert mps_entropy(mps, cut)[0] < 1e-12


def test_transverse_energy_of_plus_state():
    N = 6
    mps = product_mps(np.ones(2) / math.sqrt(2), D_max=1, N=N)
    W = mpo_tensors(spin_glass_mpo(sample_spin_glass(N, 0), 0.0))
    assert mpo_expectation(mps, W)[0].real == pytest.approx(-N, abs=1e-12)


def test_bell_entropy():
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert mps_entropy(from_dense(bell, 2, 2), 1)[0] == pytest.approx(math.log(2))


@given(st.integers(0, 10**6), st.integers(0, 5))
@settings(max_examples=30)
def test_canonical_form_and_norm(seed, center):
    rng = np.random.default_rng(seed)
    mps = _random_mps(rng)
    moved = move_center(mps.copy(), center)
    assert moved.isometry_residual() < 1e-10
    assert abs(moved.norm()[0] - 1.0) < 1e-10
    assert np.linalg.norm(mps_to_dense(moved)[0]) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(mps_to_dense(moved) - mps_to_dense(mps))) < 1e-12


@given(st.integers(0, 10**6))
@settings(max_examples=30)
def test_overlap_two_routes(seed):
    rng = np.random.default_rng(seed)
    a, b = _random_mps(rng, B=2), _random_mps(rng, B=2)
    da, db = mps_to_dense(a), mps_to_dense(b)
    ref = np.einsum("bi,bi->b", da.conj(), db)
    np.testing.assert_allclose(overlap(a, b), ref, atol=1e-10)


def test_schmidt_values_match_svd(rng):
    mps = _random_mps(rng, N=6, D=8)
    psi = mps_to_dense(mps)[0]
    for cut in range(1, 6):
        sv = np.linalg.svd(psi.reshape(2**cut, -1), compute_uv=False)
        got = np.sort(schmidt_values(mps, cut)[0])[::-1]
        np.testing.assert_allclose(got[: len(sv)], sv[: len(got)], atol=1e-10)


def test_truncation_respects_bond_cap(rng):
    mps = from_dense(random_state(rng, 2**8)[None], 8, 4)
    assert max(mps.bond_dims) <= 4
    assert mps.isometry_residual() < 1e-10


def test_checkpoint_round_trip(tmp_path, rng):
    mps = _random_mps(rng, N=5, D=4)
    path = tmp_path / "state.bin"
    write_checkpoint(mps, path)
    back = read_checkpoint(path)
    assert back.center == mps.center and back.D_max == mps.D_max
    for a, b in zip(mps.tensors, back.tensors):
        assert np.array_equal(a, b)
    raw = path.read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_checkpoint(tmp_path / "cut.bin")
    (tmp_path / "bad.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="not an MPS"):
        read_checkpoint(tmp_path / "bad.bin")


def test_canonicalize_normalizes(rng):
    mps = _random_mps(rng)
    scaled = MpsState([t * (2.0 if k == 2 else 1.0) for k, t in enumerate(mps.tensors)], mps.center, mps.D_max)
    out = canonicalize(scaled, 3)
    assert abs(out.norm()[0] - 1.0) < 1e-12
