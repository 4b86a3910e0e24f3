import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varanneal.models import (Model, build_protocol, hamiltonian_at, instance_to_text,
                              read_instance, sample_spin_glass, spin_glass_mpo, write_instance)


def _classical_energy(inst, z):
    # explicit double loop: ordered pairs, J_ii = 0
    e = 0.0
    for i in range(inst.N):
        for j in range(inst.N):
            e -= inst.J[i, j] * z[i] * z[j]
        e += inst.h[i] * z[i]
    return e


def _transverse(N):
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    out = np.zeros((2**N, 2**N), dtype=complex)
    for k in range(N):
        ops = [np.eye(2)] * N
        ops[k] = sx
        term = ops[0]
        for o in ops[1:]:
            term = np.kron(term, o)
        out -= term
    return out


def test_twoqubit_without_catalyst_has_no_h2():
    spec = build_protocol("twoqubit", A=0.0)
    assert spec.H2 is None or spec.H2.nnz == 0


@pytest.mark.parametrize("A", [0.0, 1.3, 5.0])
def test_bipartite_n0_matches_twoqubit(A):
    a = build_protocol("bipartite", 0, A=A)
    b = build_protocol("twoqubit", A=A)
    for s in (0.0, 0.3, 0.5, 1.0):
        assert np.array_equal(a.matrix_at(s).toarray(), b.matrix_at(s).toarray())


def test_lmg_h1_diagonal():
    spec = build_protocol("lmg", 4)
    diag = spec.H1.diagonal().real
    for idx, bits in enumerate(itertools.product((0, 1), repeat=4)):
        m = sum(1 - 2 * b for b in bits)
        assert diag[idx] == pytest.approx(-(m**2) / 4, abs=1e-14)


def test_protocol_endpoints_and_midpoint():
    spec = build_protocol("twoqubit", A=2.0)
    H0, H1, H2 = (x.toarray() for x in (spec.H0, spec.H1, spec.H2))
    assert np.array_equal(hamiltonian_at(spec, 0.0).toarray(), H0)
    assert np.array_equal(hamiltonian_at(spec, 1.0).toarray(), H1)
    np.testing.assert_allclose(hamiltonian_at(spec, 0.5).toarray(), (H0 + H1) / 2 + H2 / 4, atol=1e-14)


def test_s_outside_unit_interval_rejected():
    spec = build_protocol("twoqubit")
    with pytest.raises(ValueError):
        spec.matrix_at(1.5)


@given(st.integers(0, 2**32))
@settings(max_examples=30)
def test_spin_glass_ranges(seed):
    inst = sample_spin_glass(6, seed)
    iu = np.triu_indices(6, 1)
    assert np.all((inst.J[iu] > 0) & (inst.J[iu] < 1))
    assert np.all(np.abs(inst.h) < 0.5)
    assert np.array_equal(inst.J, inst.J.T)
    assert np.all(np.diag(inst.J) == 0)


def test_spin_glass_determinism_and_collisions():
    assert sample_spin_glass(8, 7) == sample_spin_glass(8, 7)
    for seed in range(100):
        assert sample_spin_glass(8, seed) != sample_spin_glass(8, seed + 1)


def test_instance_file_round_trip(tmp_path):
    inst = sample_spin_glass(8, 23)
    path = tmp_path / "inst.txt"
    write_instance(inst, path)
    back = read_instance(path)
    assert back == inst and back.seed == 23
    text = instance_to_text(inst)
    assert text.splitlines()[0] == "8 23"
    assert len(text.splitlines()) == 1 + 28 + 8
    assert read_instance(io.StringIO(text)) == inst


def test_spin_glass_mpo_middle_bond():
    mpo = spin_glass_mpo(sample_spin_glass(8, 3), 0.5)
    assert mpo.bond_dims[3] == 6


@given(st.integers(2, 8), st.integers(0, 10**6), st.floats(0.0, 1.0))
@settings(max_examples=25)
def test_mpo_reconstruction(N, seed, s):
    inst = sample_spin_glass(N, seed)
    dense = spin_glass_mpo(inst, s).to_dense()
    z = 1 - 2 * np.array(list(itertools.product((0, 1), repeat=N)))
    ref = (1 - s) * _transverse(N) + s * np.diag([_classical_energy(inst, c) for c in z])
    assert np.max(np.abs(dense - ref)) < 1e-10


@pytest.mark.parametrize("N", [9, 10])
def test_mpo_reconstruction_large(N):
    inst = sample_spin_glass(N, 5)
    spec = build_protocol("spinglass", N, instance=inst)
    for s in (0.0, 0.37, 1.0):
        diff = spin_glass_mpo(inst, s).to_dense() - spec.matrix_at(s).toarray()
        assert np.max(np.abs(diff)) < 1e-10


def test_mpo_at_s0_is_transverse_field():
    dense = spin_glass_mpo(sample_spin_glass(4, 1), 0.0).to_dense()
    np.testing.assert_allclose(dense, _transverse(4), atol=1e-14)


def test_mpo_matrix_element_matches_classical_energy():
    inst = sample_spin_glass(6, 11)
    mpo = spin_glass_mpo(inst, 1.0)
    cfg = (0, 1, 1, 0, 1, 0)
    z = [1 - 2 * b for b in cfg]
    assert mpo.matrix_element(cfg, cfg).real == pytest.approx(_classical_energy(inst, z), abs=1e-12)


def test_model_tags():
    assert Model.parse("lmg") is Model.LMG
    with pytest.raises(ValueError):
        Model.parse("heisenberg")
