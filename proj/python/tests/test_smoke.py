import math
import pathlib

import pytest

import mnemo

FIXTURES = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def quick(chains=2, iters=200):
    h = mnemo.ModelHyperparams()
    h.chains = chains
    h.warmup_iters = iters
    h.sample_iters = iters
    return h


def test_quality_posterior_matches_conjugate_mean():
    assert mnemo.quality_posterior_mean(8, 0) == pytest.approx(10 / 18)
    est = mnemo.fit_quality([("m1", 8, 0), ("m2", 0, 8)], quick(4, 500), seed=3)
    assert [e.mnemonic_id for e in est] == ["m1", "m2"]
    assert abs(est[0].q_mean - 10 / 18) < 0.02
    assert mnemo.select_top_k(est, 1) == ["m1"]


def test_text_metrics():
    assert mnemo.rouge1("the cat sat", "the cat sat") == 1.0
    assert mnemo.rouge1("a b", "c d") == 0.0
    assert mnemo.tokenize("Hello, World!") == ["hello", "world"]


def test_labels_and_swap():
    votes = [mnemo.Vote(u, mnemo.Choice.A) for u in "xyz"]
    bundle = mnemo.FeedbackBundle("p1", votes)
    labels = mnemo.derive_labels(bundle)
    assert labels.y_pair == mnemo.Choice.A
    assert labels.y_rate is None
    assert mnemo.derive_labels(mnemo.swap_sides(bundle)).y_pair == mnemo.Choice.B


def test_fit_effectiveness_on_fixture():
    records = mnemo.read_preferences(str(FIXTURES / "preferences.jsonl"))
    bundles, excluded = mnemo.clean_feedback(records)
    assert excluded == ["u6"]
    fit = mnemo.fit_effectiveness(bundles, quick(), seed=5)
    assert len(fit.posteriors) == len(bundles) == 8
    for p in fit.posteriors:
        assert 0.0 < p.theta_a_mean < 1.0
        assert len(p.theta_a_samples) == 2
    swapped = mnemo.fit_effectiveness([mnemo.swap_sides(b) for b in bundles], quick(), seed=5)
    for p, q in zip(fit.posteriors, swapped.posteriors):
        assert p.theta_a_mean == q.theta_b_mean


def test_analysis_and_dpo():
    assert mnemo.sign_test(380, 55) < 0.005
    assert mnemo.sign_test(0, 0) is None
    assert mnemo.dpo_loss(0.1, -3.0, -3.0, -5.0, -5.0) == pytest.approx(math.log(2), abs=1e-12)
    agreement = mnemo.raw_agreement([mnemo.Choice.A, mnemo.Choice.B, None], [mnemo.Choice.A, mnemo.Choice.A, mnemo.Choice.B])
    assert agreement.sample_size == 2
    assert agreement.agreement == 0.5
    assert mnemo.debias_judge(mnemo.Choice.A, mnemo.Choice.B) == mnemo.Choice.A


def test_dpo_dataset_from_records():
    records = mnemo.read_preferences(str(FIXTURES / "preferences.jsonl"))
    bundles, _ = mnemo.clean_feedback(records)
    labels = [mnemo.derive_labels(b) for b in bundles]
    terms = [r.term for r in records]
    pairs = [r.pair for r in records]
    examples = mnemo.build_dpo_dataset(terms, pairs, labels, mnemo.DpoPolicy.PAIR_ONLY)
    assert len(examples) == 7
    assert examples[0].prompt == "Term: abate\nMnemonic:"


def test_errors_are_typed(tmp_path):
    with pytest.raises(mnemo.NotFoundError):
        mnemo.read_preferences(str(tmp_path / "missing.jsonl"))
    with pytest.raises(mnemo.ArgumentError):
        mnemo.fit_effectiveness([], quick())
    bad = mnemo.ModelHyperparams()
    bad.chains = 0
    with pytest.raises(mnemo.ArgumentError):
        bad.validate()
    assert issubclass(mnemo.DataError, mnemo.Error)
