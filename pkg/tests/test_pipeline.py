import numpy as np
import pytest

from qent import pipeline
from qent.errors import DimensionMismatchError, ParamOutOfRangeError
from qent.pipeline import (
    IN_CLASS,
    OUT_OF_CLASS,
    TrainConfig,
    classify,
    classify_with_unitaries,
    compute_threshold,
    conjugated_set,
    evaluate,
    expected_label,
    reconstruction_errors,
    train,
)
from qent.states import StateFamily, hs_random_state, maximally_mixed, sample_batch

TINY = dict(
    d=2,
    n_samples=256,
    m_max=2,
    epochs=2,
    batch_size=32,
    learning_rate=1e-3,
    threshold_set_size=64,
    seed=42,
)


@pytest.fixture(scope="module")
def tiny_model():
    cfg = TrainConfig(task="entanglement", **TINY)
    model, record = train(cfg)
    return cfg, model, record


class TestTrain:
    def test_loss_decreases(self):
        losses = []
        cfg = TrainConfig(task="entanglement", **TINY)
        train(cfg, log=lambda e, l: losses.append(l))
        assert losses[-1] < losses[0]

    def test_deterministic_threshold(self, tiny_model):
        cfg, _, record = tiny_model
        _, record2 = train(cfg)
        assert record2.epsilon == record.epsilon
        assert record2.calibration_seed == record.calibration_seed

    def test_rejects_wrong_family_dataset(self):
        cfg = TrainConfig(task="discord", **TINY)
        wrong = sample_batch(StateFamily.MIX_SEP, 2, 16, 0, m_max=2)
        with pytest.raises(ParamOutOfRangeError):
            train(cfg, dataset=wrong)

    def test_rejects_wrong_dimension_dataset(self):
        cfg = TrainConfig(task="entanglement", **TINY)
        wrong = sample_batch(StateFamily.MIX_SEP, 3, 16, 0, m_max=2)
        with pytest.raises(DimensionMismatchError):
            train(cfg, dataset=wrong)

    def test_config_validation(self):
        with pytest.raises(ParamOutOfRangeError):
            TrainConfig(d=2, task="nope")
        with pytest.raises(ParamOutOfRangeError):
            TrainConfig(d=2, learning_rate=0.0)


class TestThreshold:
    def test_max_contract(self, tiny_model):
        cfg, model, record = tiny_model
        calib = sample_batch(
            StateFamily.MIX_SEP, cfg.d, cfg.threshold_set_size, record.calibration_seed, m_max=cfg.m_max
        )
        errors = reconstruction_errors(model, [s.mat for s in calib.states])
        assert record.epsilon == errors.max()
        assert np.all(errors <= record.epsilon)

    def test_single_sample_calibration(self, tiny_model):
        cfg, model, _ = tiny_model
        one = TrainConfig(**{**TINY, "threshold_set_size": 1})
        record = compute_threshold(model, one, calibration_seed=99)
        calib = sample_batch(StateFamily.MIX_SEP, cfg.d, 1, 99, m_max=cfg.m_max)
        err = reconstruction_errors(model, calib.states[0].mat)[0]
        assert record.epsilon == err

    def test_fresh_in_class_mostly_below(self, tiny_model):
        cfg, model, record = tiny_model
        fresh = sample_batch(StateFamily.MIX_SEP, cfg.d, 500, 1234, m_max=cfg.m_max)
        errors = reconstruction_errors(model, [s.mat for s in fresh.states])
        assert (errors < record.epsilon).mean() >= 0.95


class TestClassify:
    def test_deterministic(self, tiny_model):
        _, model, record = tiny_model
        rho = hs_random_state(4, np.random.default_rng(5), dims=(2, 2))
        out1 = classify(model, record, rho)
        out2 = classify(model, record, rho)
        assert out1 == out2

    def test_label_rule(self, tiny_model):
        _, model, record = tiny_model
        rho = hs_random_state(4, np.random.default_rng(6), dims=(2, 2))
        label, error = classify(model, record, rho)
        assert label == (IN_CLASS if error < record.epsilon else OUT_OF_CLASS)

    def test_dimension_check(self, tiny_model):
        _, model, record = tiny_model
        with pytest.raises(DimensionMismatchError):
            classify(model, record, maximally_mixed(3))

    def test_scale_invariance_of_labels(self, tiny_model):
        # labels depend on (error, epsilon) only through the comparison
        _, model, record = tiny_model
        rho = hs_random_state(4, np.random.default_rng(7), dims=(2, 2))
        label, error = classify(model, record, rho)
        scaled = type(record)(
            d=record.d,
            task=record.task,
            epsilon=record.epsilon * 2.0,
            n_calibration=record.n_calibration,
            calibration_seed=record.calibration_seed,
            epoch=record.epoch,
        )
        label2, error2 = classify(model, scaled, rho)
        assert error2 == error
        assert (error * 2 < scaled.epsilon * 2) == (error < scaled.epsilon)
        assert label2 == (IN_CLASS if error < scaled.epsilon else OUT_OF_CLASS)


class TestClassifyWithUnitaries:
    def test_trace_length_and_positivity(self, tiny_model):
        _, model, record = tiny_model
        rho = maximally_mixed(2)
        label, errors = classify_with_unitaries(model, record, rho, 16, np.random.default_rng(0))
        assert errors.shape == (16,)
        assert np.all(errors >= 0)

    def test_identity_unitaries_reduce_to_classify(self, tiny_model, monkeypatch):
        _, model, record = tiny_model
        import qent.pipeline as pl

        monkeypatch.setattr(pl, "haar_unitary", lambda d, rng: np.eye(d, dtype=complex))
        rho = hs_random_state(4, np.random.default_rng(8), dims=(2, 2))
        label_k, errors = classify_with_unitaries(model, record, rho, 1, np.random.default_rng(0))
        label_plain, error_plain = classify(model, record, rho)
        assert abs(errors[0] - error_plain) < 1e-12
        assert label_k == label_plain

    def test_median_vote_rule(self, tiny_model):
        _, model, record = tiny_model
        rho = hs_random_state(4, np.random.default_rng(9), dims=(2, 2))
        label, errors = classify_with_unitaries(model, record, rho, 11, np.random.default_rng(1))
        expected = OUT_OF_CLASS if np.median(errors) > record.epsilon else IN_CLASS
        assert label == expected

    def test_k_must_be_positive(self, tiny_model):
        _, model, record = tiny_model
        with pytest.raises(ParamOutOfRangeError):
            classify_with_unitaries(model, record, maximally_mixed(2), 0, np.random.default_rng(0))


class TestEvaluate:
    def test_expected_labels(self):
        assert expected_label("entanglement", StateFamily.MIX_SEP) == IN_CLASS
        assert expected_label("entanglement", StateFamily.CC) == IN_CLASS
        assert expected_label("entanglement", StateFamily.NPT) == OUT_OF_CLASS
        assert expected_label("entanglement", StateFamily.NAMED) == OUT_OF_CLASS
        assert expected_label("discord", StateFamily.CC) == IN_CLASS
        assert expected_label("discord", StateFamily.MIX_SEP) == OUT_OF_CLASS
        assert expected_label("discord", StateFamily.CQ) == OUT_OF_CLASS

    def test_report_structure(self, tiny_model):
        _, model, record = tiny_model
        sep = sample_batch(StateFamily.MIX_SEP, 2, 20, 11, m_max=2)
        npt = sample_batch(StateFamily.NPT, 2, 20, 12)
        report = evaluate(model, record, [sep, npt])
        assert set(report.accuracies) == {"mix_sep", "npt"}
        assert len(report.errors) == 40
        assert all(0.0 <= a <= 1.0 for a in report.accuracies.values())
        rows = list(report.rows())
        assert rows[0][0] == 0 and len(rows) == 40

    def test_accuracy_arithmetic(self, tiny_model):
        _, model, record = tiny_model
        sep = sample_batch(StateFamily.MIX_SEP, 2, 25, 13, m_max=2)
        report = evaluate(model, record, [sep])
        manual = np.mean(
            [classify(model, record, s)[0] == IN_CLASS for s in sep.states]
        )
        assert abs(report.accuracies["mix_sep"] - manual) < 1e-12

    def test_empty_set_rejected(self, tiny_model):
        _, model, record = tiny_model
        from qent.states import LabeledStateSet

        empty = LabeledStateSet(family=StateFamily.NPT, states=[], d=2)
        with pytest.raises(ParamOutOfRangeError):
            evaluate(model, record, [empty])

    def test_dimension_mismatch_rejected(self, tiny_model):
        _, model, record = tiny_model
        wrong = sample_batch(StateFamily.NPT, 3, 4, 14)
        with pytest.raises(DimensionMismatchError):
            evaluate(model, record, [wrong])


class TestConjugatedSet:
    def test_preserves_family_and_spectra(self):
        from qent.linalg import hermitian_eigenvalues

        original = sample_batch(StateFamily.NPT, 2, 6, 21)
        rotated = conjugated_set(original, seed=77)
        assert rotated.family == original.family
        assert rotated.metadata["rotated"]
        for a, b in zip(original.states, rotated.states):
            assert np.abs(hermitian_eigenvalues(a.mat) - hermitian_eigenvalues(b.mat)).max() < 1e-9

    def test_deterministic(self):
        original = sample_batch(StateFamily.MIX_SEP, 2, 4, 22, m_max=2)
        a = conjugated_set(original, seed=5)
        b = conjugated_set(original, seed=5)
        for x, y in zip(a.states, b.states):
            assert np.array_equal(x.mat, y.mat)


class TestReconstructionErrors:
    def test_decode_path_equals_loss_path_in_double(self, tiny_model):
        # the elementwise-L1 on the decoded complex matrix equals the
        # channel-space loss when both run in double precision
        from qent.cae import decode_output, encode_state
        from qent.linalg import elementwise_l1

        _, model, _ = tiny_model
        double = model.astype(np.float64)
        rho = hs_random_state(4, np.random.default_rng(10), dims=(2, 2))
        err_batch = reconstruction_errors(double, rho.mat)[0]
        out = double.predict(encode_state(rho).astype(np.float64))
        err_decode = elementwise_l1(decode_output(out), rho.mat)
        assert abs(err_batch - err_decode) < 1e-12
