import numpy as np
import pytest

from varanneal.annealing import anneal_mps, exact_curve, final_distance, ground_weight, plus_state
from varanneal.exact import spectral_gap
from varanneal.models import build_protocol, sample_spin_glass


@pytest.fixture(scope="module")
def records():
    inst = sample_spin_glass(6, 3)
    return inst, {D: anneal_mps(inst, D, [20.0, 40.0], dt=0.1, samples=20) for D in (1, 2, 8)}


def test_shared_initial_condition(records):
    _, recs = records
    for D, rs in recs.items():
        for r in rs:
            assert r.dpsi_vgs[0] < 1e-8
            assert r.dpsi_exact[0] < 1e-8
            assert r.eff_gap[0] == pytest.approx(2.0, abs=1e-8)


def test_record_shapes_and_metadata(records):
    inst, recs = records
    r = recs[2][1]
    assert r.T == 40.0 and r.D == 2 and r.seed == inst.seed
    for name, col in r.columns().items():
        assert col.shape == (21,), name
    assert r.norm_drift < 1e-10


def test_full_rank_entropy_exceeds_low_rank(records):
    _, recs = records
    mid = 10
    assert recs[8][0].entropy[mid] >= recs[2][0].entropy[mid]
    assert np.all(recs[1][0].entropy < 1e-12)


def test_exact_gap_column_matches_spectrum(records):
    inst, recs = records
    spec = build_protocol("spinglass", 6, instance=inst)
    r = recs[1][0]
    for j in (0, 7, 20):
        assert r.exact_gap[j] == pytest.approx(spectral_gap(spec.hamiltonian_at(r.s[j])), abs=1e-8)


def test_final_distance_and_ground_weight_agree(records):
    inst, recs = records
    for rs in recs.values():
        mps = rs[-1].final
        w = ground_weight(inst, mps)[0]
        assert final_distance(inst, mps)[0] == pytest.approx(np.sqrt(2 - 2 * np.sqrt(w)), abs=1e-12)


def test_exact_curve_degeneracy():
    inst = sample_spin_glass(4, 0)
    c = exact_curve(inst, [0.0, 1.0])
    assert c.gap[0] == pytest.approx(2.0)
    assert c.ground[0].shape == (1, 16)


def test_plus_state_bond_caps():
    assert plus_state(8, 4).bond_dims == [2, 4, 4, 4, 4, 4, 2]


def test_invalid_arguments():
    with pytest.raises(ValueError):
        anneal_mps(sample_spin_glass(4, 0), 0, 10.0)
    with pytest.raises(ValueError):
        anneal_mps(sample_spin_glass(4, 0), 1, -1.0)
