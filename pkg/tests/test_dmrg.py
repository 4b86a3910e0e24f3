import itertools

import numpy as np
import pytest

from varanneal.annealing import anneal_mps, batched_parts, final_distance, plus_state, recover
from varanneal.dmrg import dmrg, effective_gap, effective_hamiltonian
from varanneal.errors import VarAnnealError
from varanneal.exact import ground_state, phase_aligned_distance, spectral_gap
from varanneal.models import build_protocol, sample_spin_glass
from varanneal.mps import MpsState, mps_to_dense, product_mps
from varanneal.tdvp import mpo_at

Z = 1 - 2 * np.array(list(itertools.product((0, 1), repeat=8)))


def _W(inst, s):
    return mpo_at(batched_parts(inst), s)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_full_rank_energy_and_gap_are_exact(s):
    inst = sample_spin_glass(8, 23)
    H = build_protocol("spinglass", 8, instance=inst).hamiltonian_at(s)
    e_ref, psi_ref, _ = ground_state(H)
    r = dmrg(_W(inst, s), 16)
    assert r.converged and r.energy == pytest.approx(e_ref, abs=1e-10)
    assert phase_aligned_distance(mps_to_dense(r.mps)[0], psi_ref) < 1e-6
    assert effective_gap(r.mps, _W(inst, s))[0] == pytest.approx(spectral_gap(H), abs=1e-6)


def test_transverse_field_from_random_guess(rng):
    inst = sample_spin_glass(6, 0)
    tensors = []
    for _ in range(6):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        tensors.append(v / np.linalg.norm(v))
    r = dmrg(_W(inst, 0.0), 1, guess=product_mps(tensors, D_max=1))
    assert r.energy == pytest.approx(-6.0, abs=1e-12)
    assert phase_aligned_distance(mps_to_dense(r.mps)[0], np.full(64, 0.125)) < 1e-6


@pytest.mark.parametrize("seed", [1, 5, 23])
def test_d1_from_plus_state_is_single_flip_minimum(seed):
    inst = sample_spin_glass(8, seed)
    E = inst.energies(Z)
    r = dmrg(_W(inst, 1.0), 1)
    psi = mps_to_dense(r.mps)[0]
    k = int(np.argmax(np.abs(psi)))
    assert abs(psi[k]) == pytest.approx(1.0, abs=1e-8)
    assert r.energy == pytest.approx(E[k], abs=1e-10)
    for j in range(8):
        assert E[k ^ (1 << (7 - j))] >= E[k] - 1e-12


def test_d1_warm_start_reaches_classical_minimum():
    inst = sample_spin_glass(8, 23)
    rec = anneal_mps(inst, 1, 400.0, dt=0.1, with_vgs=False, with_exact=False)[0]
    r = dmrg(_W(inst, 1.0), 1, guess=rec.final)
    assert r.energy == pytest.approx(inst.energies(Z).min(), abs=1e-10)


def test_sweep_energies_monotone():
    inst = sample_spin_glass(8, 7)
    for D in (1, 2, 4):
        r = dmrg(_W(inst, 0.5), D)
        assert all(b <= a + 1e-13 for a, b in zip(r.energies, r.energies[1:]))
        assert r.energy >= dmrg(_W(inst, 0.5), 16).energy - 1e-10


def test_effective_hamiltonian_hermitian():
    inst = sample_spin_glass(8, 4)
    r = dmrg(_W(inst, 0.4), 4)
    for site in range(8):
        assert effective_hamiltonian(r.mps, _W(inst, 0.4), site).hermiticity_residual() < 1e-12


def test_insufficient_effective_space():
    W = [np.ones((1, 1, 1, 1, 1), dtype=complex)] * 3
    mps = MpsState([np.ones((1, 1, 1, 1), dtype=complex)] * 3, 0, 1)
    with pytest.raises(VarAnnealError, match="insufficient effective space"):
        effective_gap(mps, W)


@pytest.mark.parametrize("D", [1, 2, 4, 8, 16])
def test_initial_gap_is_two_for_all_D(D):
    inst = sample_spin_glass(8, 23)
    assert effective_gap(plus_state(8, D), _W(inst, 0.0))[0] == pytest.approx(2.0, abs=1e-8)


def test_final_gap_at_d1_is_centre_flip_energy():
    # H_eff at the centre of a D=1 state only flips the centre spin
    inst = sample_spin_glass(8, 23)
    E = inst.energies(Z)
    k = int(np.argmin(E))
    r = dmrg(_W(inst, 1.0), 1, guess=anneal_mps(inst, 1, 400.0, dt=0.1, with_vgs=False,
                                               with_exact=False)[0].final)
    gap = effective_gap(r.mps, _W(inst, 1.0))[0]
    assert gap == pytest.approx(E[k ^ (1 << (7 - 4))] - E[k], abs=1e-8)


def test_recover_failed_anneal():
    inst = sample_spin_glass(8, 11)
    rec = anneal_mps(inst, 1, 100.0, dt=0.2, with_vgs=False, with_exact=False)[0]
    assert final_distance(inst, rec.final)[0] > 0.1
    weight, _, converged = recover(inst, rec.final, 8)
    assert converged and weight > 0.999
