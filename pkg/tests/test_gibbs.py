import math

import numpy as np
import pytest
from scipy.special import psi

from nbmatrix.gibbs import (
    CategoryModel,
    ChainConfig,
    Hyper,
    bnbp_c_log_target,
    bnbp_c_proposal,
    bnbp_gamma0_conditional,
    bnbp_r_conditional,
    bnbp_weight_conditional,
    c_conditional,
    gibbs_sweep,
    gnbp_gamma0_conditional,
    gnbp_p_conditional,
    gnbp_weight_conditional,
    initial_state,
    load_model,
    mh_update_c,
    model_from_dict,
    model_to_dict,
    nbp_gamma0_conditional,
    nbp_remainder_conditional,
    nbp_weight_conditional,
    run_chain,
    save_model,
)
from nbmatrix.matrix import CountMatrix

MAT = CountMatrix.from_dense([[3, 0, 2], [1, 4, 0], [0, 3, 1]])


# ---------------------------------------------------------------------------
# each conditional draws from exactly the stated family and parameters
# ---------------------------------------------------------------------------

def test_nbp_conditional_parameters():
    hyper = Hyper()
    # column with sum 7 at J=3, c=2 resamples its weight from Gamma(7, 1/5)
    shape, scale = nbp_weight_conditional(np.array([7]), 2.0, 3)
    assert shape.tolist() == [7.0] and scale == pytest.approx(1 / 5)
    shape, scale = nbp_gamma0_conditional(4, 2.0, 3, hyper)
    assert shape == hyper.e0 + 4
    assert scale == pytest.approx(1.0 / (hyper.f0 + math.log(5 / 2)))
    assert nbp_remainder_conditional(1.5, 2.0, 3) == (1.5, pytest.approx(1 / 5))
    shape, scale = c_conditional(1.5, 4.0, hyper)
    assert shape == hyper.c0 + 1.5
    assert scale == pytest.approx(1.0 / (hyper.d0 + 4.0))


def test_gnbp_conditional_parameters():
    hyper = Hyper()
    shape, scale = gnbp_gamma0_conditional(2, 1.0, 3.0, hyper)
    assert shape == hyper.e0 + 2
    assert scale == pytest.approx(1.0 / (hyper.f0 + math.log(4.0)))
    shape, scale = gnbp_weight_conditional(np.array([5]), 1.0, 3.0)
    assert shape.tolist() == [5.0] and scale == pytest.approx(1 / 4)
    a, b = gnbp_p_conditional(np.array([6]), 2.5, hyper)
    assert a.tolist() == [hyper.a0 + 6] and b == pytest.approx(hyper.b0 + 2.5)


def test_bnbp_conditional_parameters():
    hyper = Hyper(c0=1.0, d0=1.0)
    shape, scale = bnbp_gamma0_conditional(3, 1.0, 2.0, hyper)
    assert shape == hyper.e0 + 3
    assert scale == pytest.approx(1.0 / (hyper.f0 + psi(3.0) - psi(1.0)))
    a, b = bnbp_weight_conditional(np.array([4]), 1.0, 2.0)
    assert a.tolist() == [4.0] and b == pytest.approx(3.0)
    shape, scale = bnbp_r_conditional(np.array([2]), 0.5, -0.3, hyper)
    assert shape.tolist() == [hyper.a0 + 2]
    assert scale == pytest.approx(1.0 / (hyper.b0 + 0.5 + 0.3))
    # proposal example: c0 = d0 = 1, gamma0 = 2, p_* + sum p_k = 3
    shape, scale = bnbp_c_proposal(2.0, 1.0, 2.0, hyper)
    assert shape == 3.0 and scale == pytest.approx(1 / 4)


def test_bnbp_beta_mean(rng):
    # column sum 4 with c + r_dot = 3: repeated conditional draws average 4/7
    hyper = Hyper(c0=1.0, d0=1.0)
    a, b = bnbp_weight_conditional(np.array([4]), 1.0, 2.0)
    draws = rng.beta(np.full(20000, a[0]), b)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - 4 / 7) < 3 * se


def test_gnbp_single_count_table_is_deterministic(rng):
    m = CountMatrix.from_dense([[1, 2], [1, 0]])
    hyper = Hyper()
    state = initial_state("gnbp", m, hyper, rng)
    for _ in range(5):
        state = gibbs_sweep("gnbp", m, state, rng, hyper)
        ones = m.vals == 1
        assert np.all(state.tables[ones] == 1)
        assert np.all(state.tables >= 1)
        assert np.all(state.tables <= m.vals)


@pytest.mark.parametrize("kind", ["nbp", "gnbp", "bnbp"])
def test_sweep_preserves_invariants_and_input(kind, rng):
    hyper = Hyper.default(kind)
    state = initial_state(kind, MAT, hyper, rng)
    before = state.atom_weights.copy()
    new = gibbs_sweep(kind, MAT, state, rng, hyper)
    assert np.array_equal(state.atom_weights, before)  # input untouched
    assert new.atom_weights.shape == (MAT.K,)
    assert np.all(new.atom_weights > 0)
    assert new.remainder >= 0
    assert new.gamma0 > 0 and new.c > 0
    if kind == "bnbp":
        assert np.all(new.atom_weights < 1)
    if kind in ("gnbp", "bnbp"):
        assert np.all((new.tables >= 1) & (new.tables <= MAT.vals))
        assert new.row_params.shape == (MAT.J,)


def test_sweep_rejects_mismatched_state(rng):
    hyper = Hyper()
    state = initial_state("nbp", MAT, hyper, rng)
    with pytest.raises(ValueError):
        gibbs_sweep("gnbp", MAT, state, rng, hyper)
    other = CountMatrix.from_dense([[1]])
    with pytest.raises(ValueError):
        gibbs_sweep("nbp", other, state, rng, hyper)


# ---------------------------------------------------------------------------
# Metropolis-Hastings move for the BNBP concentration
# ---------------------------------------------------------------------------

def test_mh_self_proposal_always_accepts():
    # forcing the proposal to equal the current value must accept even when
    # the uniform draw is arbitrarily close to 1 (the ratio is exactly 1)
    class SelfProposal:
        def gamma(self, shape, scale):
            return 1.3

        def random(self):
            return 1.0 - 1e-12

    hyper = Hyper(c0=1.0, d0=1.0)
    c_new, accepted = mh_update_c(
        MAT, 1.5, 1.3, np.array([1.0, 0.8, 1.1]), 0.4, 1.1, hyper, SelfProposal()
    )
    assert accepted and c_new == 1.3


def test_mh_empty_matrix_target_is_finite():
    hyper = Hyper(c0=1.0, d0=1.0)
    empty = CountMatrix.empty(2)
    val = bnbp_c_log_target(1.7, 1.5, 2.0, empty.col_sums, hyper)
    want = (hyper.c0 - 1) * math.log(1.7) - hyper.d0 * 1.7 - 1.5 * (
        psi(1.7 + 2.0) - psi(1.7)
    )
    assert val == pytest.approx(want, abs=1e-12)


def test_mh_update_moves_and_keeps(rng):
    hyper = Hyper(c0=1.0, d0=1.0)
    accepted = 0
    c = 1.0
    for _ in range(200):
        c_new, ok = mh_update_c(MAT, 1.2, c, np.array([1.0, 0.8, 1.1]), 0.4,
                                1.1, hyper, rng)
        if ok:
            assert c_new != c
            accepted += 1
        else:
            assert c_new == c
        c = c_new
    assert 0 < accepted < 200


# ---------------------------------------------------------------------------
# chains: determinism, retention, persistence
# ---------------------------------------------------------------------------

def test_run_chain_deterministic():
    config = ChainConfig(iterations=40, samples=2, seed=123)
    a = run_chain("gnbp", MAT, config)
    b = run_chain("gnbp", MAT, config)
    for sa, sb in zip(a.model.samples, b.model.samples):
        assert sa == sb
    assert a.trace == b.trace


def test_independent_chains_retention():
    config = ChainConfig(iterations=30, samples=3, seed=7)
    result = run_chain("nbp", MAT, config)
    assert len(result.model.samples) == 3
    # chains are seeded independently: the retained draws differ
    values = {s.gamma0 for s in result.model.samples}
    assert len(values) == 3


def test_thinned_retention_spacing():
    config = ChainConfig(
        iterations=40, burn_in=10, samples=3, retention="thinned-single-chain",
        seed=7,
    )
    result = run_chain("bnbp", MAT, config)
    assert len(result.model.samples) == 3


def test_single_sample_is_final_iterate():
    config = ChainConfig(iterations=25, samples=1, seed=9, keep_trace=True)
    result = run_chain("nbp", MAT, config)
    assert len(result.model.samples) == 1
    # the retained gamma0 equals the trace's final row
    assert result.model.samples[0].gamma0 == result.trace[-1][1]
    assert result.trace[-1][0] == 25


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(samples=0)
    with pytest.raises(ValueError):
        ChainConfig(retention="bogus")
    with pytest.raises(ValueError):
        run_chain("nbp", CountMatrix.empty(0), ChainConfig(iterations=5, samples=1))


def test_model_persistence_round_trip(tmp_path):
    config = ChainConfig(iterations=20, samples=2, seed=5)
    for kind in ("nbp", "gnbp", "bnbp"):
        model = run_chain(kind, MAT, config).model
        path = tmp_path / f"{kind}.json"
        save_model(model, str(path))
        again = load_model(str(path))
        assert again.kind == model.kind
        assert again.feature_labels == model.feature_labels
        assert np.array_equal(again.col_sums, model.col_sums)
        assert again.samples == model.samples
        assert model_from_dict(model_to_dict(model)).samples == model.samples


def test_trace_csv(tmp_path):
    from nbmatrix.gibbs import save_trace_csv

    result = run_chain("nbp", MAT, ChainConfig(iterations=10, samples=1, seed=1))
    path = tmp_path / "trace.csv"
    save_trace_csv(result.trace, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,gamma0,c,mass,loglik"
    assert len(lines) == 11
