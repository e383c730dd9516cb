import numpy as np
import pytest

import seqal


def logistic_data(n, beta, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, len(beta)))
    p = 1.0 / (1.0 + np.exp(-x @ np.asarray(beta)))
    y = (rng.random(n) < p).astype(int)
    return x, y


def test_chi2_quantiles():
    assert seqal.chi2_quantile(1, 0.95) == pytest.approx(3.84146, abs=1e-4)
    assert seqal.chi2_quantile(2, 0.95) == pytest.approx(5.99146, abs=1e-4)


def test_auc_counts_ties_half():
    assert seqal.auc([0.1, 0.4, 0.4, 0.8], [0, 0, 1, 1]) == pytest.approx(0.875)


def test_fit_mle_recovers_coefficients():
    x, y = logistic_data(5000, [-1.0, 1.0], 3)
    fit = seqal.fit_mle(x, y)
    assert fit["converged"]
    assert not fit["separation"]
    assert fit["beta"] == pytest.approx([-1.0, 1.0], abs=0.15)


def test_simulate_is_seeded():
    a = seqal.simulate(runs=1, seed=7, pool_size=2000, d=0.5)
    b = seqal.simulate(runs=1, seed=7, pool_size=2000, d=0.5)
    assert a == b
    assert a["runs"] == 1
    assert a["N"]["mean"] >= 20


def test_invalid_settings_raise_value_error():
    with pytest.raises(ValueError, match="config.d"):
        seqal.simulate(runs=1, pool_size=500, d=-1.0)
    with pytest.raises(ValueError, match="config.bogus"):
        seqal.simulate(runs=1, pool_size=500, bogus=3)


def test_interactive_learner_matches_replay_run():
    x, y = logistic_data(1500, [-1.0, 1.0, 0.0, 0.0], 11)
    offline = seqal.run(x, y, d=0.5, seed=4)

    learner = seqal.Learner(x, bootstrap=offline["acquired"][: offline["n0"]], d=0.5, seed=4)
    while (q := learner.pending()) is not None:
        learner.submit(q["subject_id"], int(y[q["subject_id"]]))
    state = learner.state()
    assert state["finished"]
    assert state["n_labeled"] == offline["N"]
    assert state["beta_hat"] == offline["beta_hat"]


def test_stale_subject_is_rejected():
    x, _ = logistic_data(200, [-1.0, 1.0], 2)
    learner = seqal.Learner(x, seed=1)
    q = learner.pending()
    with pytest.raises(seqal.SeqalError):
        learner.submit(q["subject_id"] + 1, 1)
