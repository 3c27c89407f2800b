import math

import numpy as np
import pytest
from scipy.linalg import expm

from trotterheal.evolve import (
    EvolutionConfig,
    digital_infidelity,
    infidelity_series,
    initial_state,
    propagate_magnus,
    run_digitized,
    run_reference,
    total_hamiltonian,
    trotter_step_unitary,
)
from trotterheal.agp import exact_agp
from trotterheal.linalg import unitarity_defect
from trotterheal.models import AnnealingHamiltonian, ModelSpec, build_annealing, collective_spin, pauli

SQ = ModelSpec()


def test_initial_states():
    np.testing.assert_allclose(initial_state(SQ), np.ones(2) / math.sqrt(2), atol=1e-14)
    psi = initial_state(ModelSpec(family="ising", N=3))
    np.testing.assert_allclose(psi, np.ones(8) / math.sqrt(8), atol=1e-12)
    psi30 = initial_state(ModelSpec(family="pspin", N=30))
    sx = collective_spin(30, "x", "dicke")
    assert (psi30.conj() @ sx @ psi30).real == pytest.approx(15.0, abs=1e-9)


def test_degenerate_initial_hamiltonian_rejected():
    ann = AnnealingHamiltonian(np.zeros((2, 2), dtype=complex), pauli("z"))
    with pytest.raises(ValueError, match="degenerate"):
        initial_state(ann)


@pytest.mark.parametrize("kw, field", [({"T": 0.0}, "T"), ({"dt": 0.0}, "dt"), ({"dt": -1.0}, "dt"),
                                       ({"cd": "full"}, "cd"), ({"reference_refinement": 1}, "reference_refinement"),
                                       ({"T": 1.0, "dt": 5.0}, "dt"), ({"reference_tol": 0.0}, "reference_tol")])
def test_config_validation(kw, field):
    with pytest.raises(ValueError, match=field):
        EvolutionConfig(**kw)


def test_step_rounding():
    cfg = EvolutionConfig(T=1.0, dt=0.003)
    assert cfg.M == 333 and cfg.dt_adjusted
    assert cfg.step == pytest.approx(1.0 / 333)
    assert not EvolutionConfig(T=1.0, dt=0.001).dt_adjusted


def test_step_unitary_against_ordered_product():
    cfg = EvolutionConfig(model=SQ, T=1.0, dt=0.1, cd="exact")
    ann = build_annealing(SQ)
    h, lam, lam_dot = 0.1, 0.5, 1.0
    A = exact_agp(ann.at(lam), ann.dH).A_lambda
    oracle = expm(-1j * h * (1 - lam) * ann.H_i) @ expm(-1j * h * lam * ann.H_f) @ expm(-1j * h * lam_dot * A)
    U = trotter_step_unitary(cfg, 0.5)
    np.testing.assert_allclose(U, oracle, atol=1e-12)
    assert unitarity_defect(U) < 1e-12


def test_step_unitary_first_order_in_dt():
    devs = []
    for dt in (1e-3, 1e-4):
        cfg = EvolutionConfig(model=SQ, T=1.0, dt=dt)
        devs.append(np.abs(trotter_step_unitary(cfg, 0.5) - np.eye(2)).max())
    assert devs[0] / devs[1] == pytest.approx(10.0, rel=1e-3)


def test_commuting_pieces_have_no_trotter_error():
    Z = pauli("z")
    cfg = EvolutionConfig(T=2.0, dt=0.1, hamiltonian=AnnealingHamiltonian(Z, 2 * Z))
    dig = run_digitized(cfg)
    ref = run_reference(cfg)
    np.testing.assert_allclose(infidelity_series(ref, dig), 0.0, atol=1e-14)


def test_trajectory_invariants():
    cfg = EvolutionConfig(model=ModelSpec(family="ising", N=3, J_Z=0.5), T=2.0, dt=0.05, cd="exact")
    for traj in (run_digitized(cfg), run_reference(cfg)):
        assert traj.states.shape == (cfg.M + 1, 8)
        np.testing.assert_allclose(np.linalg.norm(traj.states, axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(traj.populations.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(traj.times, np.arange(cfg.M + 1) * cfg.step, atol=1e-14)


def test_final_record_mode():
    cfg = EvolutionConfig(model=SQ, T=1.0, dt=0.01, cd="exact")
    full = run_digitized(cfg, "all")
    fin = run_digitized(cfg, "final")
    assert fin.times.tolist() == [0.0, 1.0]
    np.testing.assert_allclose(fin.final_state, full.final_state, atol=1e-14)


@pytest.mark.parametrize("spec", [SQ, ModelSpec(family="ising", N=4, J_Z=0.1), ModelSpec(family="pspin", N=10)])
def test_reference_with_exact_cd_tracks_ground_state(spec):
    cfg = EvolutionConfig(model=spec, T=1.0, dt=0.01, cd="exact")
    assert run_reference(cfg).gs_infidelity.max() < 1e-8


def test_reference_adiabatic_limit():
    cfg = EvolutionConfig(model=SQ, T=100.0, dt=0.1)
    assert run_reference(cfg, "final").gs_infidelity[-1] < 1e-3


def test_cd_lowers_final_infidelity():
    base = EvolutionConfig(model=SQ, T=1.0, dt=0.01)
    plain = run_digitized(base).gs_infidelity[-1]
    cd = digital_infidelity(base.with_(cd="exact"))
    assert cd.gs_infidelity[-1] < plain
    assert cd.infidelity.max() < plain


def test_richardson_factor_four():
    I = [run_digitized(EvolutionConfig(model=SQ, T=1.0, dt=dt, cd="exact"), "final").gs_infidelity[-1]
         for dt in (0.01, 0.005)]
    assert I[0] / I[1] == pytest.approx(4.0, rel=0.1)


def test_digitized_converges_to_reference():
    base = EvolutionConfig(model=ModelSpec(family="ising", N=3, J_Z=0.5), T=1.0, dt=0.02)
    ref = run_reference(base, "final").final_state
    errs = [np.linalg.norm(run_digitized(base.with_(dt=dt), "final").final_state - ref) for dt in (0.02, 0.01, 0.005)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.95)


def test_time_reversal_returns_initial_state():
    cfg = EvolutionConfig(model=ModelSpec(family="ising", N=3, J_Z=0.5), T=1.5, dt=0.05, cd="exact")
    H = total_hamiltonian(cfg)
    psi0 = initial_state(cfg.model)
    fwd = propagate_magnus(H, 0.0, cfg.T, 30, 4, psi0, False)[-1]

    def mirrored(t):
        return -H(cfg.T - np.asarray(t))

    back = propagate_magnus(mirrored, 0.0, cfg.T, 30, 4, fwd, False)[-1]
    assert np.linalg.norm(back - psi0) < 1e-8


def test_infidelity_series_properties():
    cfg = EvolutionConfig(model=SQ, T=1.0, dt=0.05)
    dig = run_digitized(cfg)
    np.testing.assert_allclose(infidelity_series(dig, dig), 0.0, atol=1e-13)
    ref = run_reference(cfg)
    I = infidelity_series(ref, dig)
    assert np.all((I >= 0) & (I <= 1))
    with pytest.raises(ValueError, match="grid"):
        infidelity_series(run_reference(cfg, "final"), dig)


def test_reference_error_estimate_within_tolerance():
    cfg = EvolutionConfig(model=ModelSpec(family="pspin", N=6), T=0.5, dt=0.01, cd="variational", l=3, reference_tol=1e-8)
    ref = run_reference(cfg, "final")
    assert ref.error_estimate is not None and ref.error_estimate < 1e-8
    tight = run_reference(cfg.with_(reference_tol=1e-11), "final")
    assert np.linalg.norm(ref.final_state - tight.final_state) < 1e-8


def test_kick_compensated_start_differs_only_with_cd():
    base = EvolutionConfig(model=SQ, T=1.0, dt=0.01)
    a = run_digitized(base, "final").final_state
    b = run_digitized(base.with_(initial="kick_compensated"), "final").final_state
    np.testing.assert_allclose(a, b, atol=1e-15)
    c = run_digitized(base.with_(cd="exact", initial="kick_compensated"), "final")
    d = run_digitized(base.with_(cd="exact"), "final")
    assert not np.allclose(c.final_state, d.final_state)
