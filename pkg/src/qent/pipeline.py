"""Training, threshold calibration, classification, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .cae import CaeModel, builtin_spec, encode_batch
from .errors import DimensionMismatchError, DivergedLossError, ParamOutOfRangeError
from .states import (
    LabeledStateSet,
    StateFamily,
    haar_unitary,
    local_unitary_conjugate,
    sample_batch,
)

IN_CLASS = "in_class"
OUT_OF_CLASS = "out_of_class"

TASK_ENTANGLEMENT = "entanglement"
TASK_DISCORD = "discord"

_TRAIN_FAMILY = {TASK_ENTANGLEMENT: StateFamily.MIX_SEP, TASK_DISCORD: StateFamily.CC}

# Families reconstructed well by a trained model of each task.
_IN_CLASS_FAMILIES = {
    TASK_ENTANGLEMENT: {StateFamily.MIX_SEP, StateFamily.CC, StateFamily.CQ, StateFamily.QC},
    TASK_DISCORD: {StateFamily.CC},
}


@dataclass(frozen=True)
class TrainConfig:
    d: int
    task: str = TASK_ENTANGLEMENT
    n_samples: int = 20_000
    m_max: int = 2
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-4
    threshold_set_size: int = 2_000
    seed: int = 0
    regularization: float = 0.0

    def __post_init__(self):
        if self.task not in (TASK_ENTANGLEMENT, TASK_DISCORD):
            raise ParamOutOfRangeError(f"unknown task {self.task!r}")
        if min(self.n_samples, self.epochs, self.batch_size, self.threshold_set_size) < 1:
            raise ParamOutOfRangeError("sizes and epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ParamOutOfRangeError("learning_rate must be positive")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class ThresholdRecord:
    d: int
    task: str
    epsilon: float
    n_calibration: int
    calibration_seed: int
    epoch: int

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class ClassificationReport:
    task: str
    epsilon: float
    families: list
    errors: np.ndarray
    labels: list
    accuracies: dict
    k_unitaries: int = 0

    def rows(self):
        for i, (fam, err, lab) in enumerate(zip(self.families, self.errors, self.labels)):
            yield i, fam, float(err), lab


def _seed_int(seed_sequence):
    return int(seed_sequence.generate_state(1, dtype=np.uint64)[0])


def reconstruction_errors(model, mats, chunk=256):
    """Per-state mean element-wise L1 between raw reconstruction and input.

    Errors are computed in double precision against the original complex
    matrices (not the engine-precision cast of them).
    """
    mats = np.asarray(mats, dtype=np.complex128)
    if mats.ndim == 2:
        mats = mats[np.newaxis]
    x = encode_batch(mats, model.dtype)
    out = model.predict(x, chunk=chunk).astype(np.float64)
    ref = encode_batch(mats, np.float64)
    return np.abs(out - ref).mean(axis=(1, 2, 3))


def _check_dimension(model, rho):
    if rho.dim != model.spec.side:
        raise DimensionMismatchError(
            f"state dimension {rho.dim} does not match model side {model.spec.side}"
        )


def train(cfg, dataset=None, log=None):
    """Train a fresh model on in-class states only; returns (model, ThresholdRecord).

    dataset may be a pre-generated LabeledStateSet of the task's training
    family; otherwise cfg.n_samples states are generated from cfg.seed.
    """
    ss = np.random.SeedSequence(cfg.seed)
    data_ss, init_ss, loop_ss, thr_ss = ss.spawn(4)
    family = _TRAIN_FAMILY[cfg.task]

    if dataset is None:
        dataset = sample_batch(family, cfg.d, cfg.n_samples, _seed_int(data_ss), m_max=cfg.m_max)
    elif dataset.family != family:
        raise ParamOutOfRangeError(
            f"task {cfg.task!r} trains on {family.tag} states, got {dataset.family.tag}"
        )
    if dataset.d != cfg.d:
        raise DimensionMismatchError(f"dataset d={dataset.d} but config d={cfg.d}")

    data = encode_batch([s.mat for s in dataset.states], np.float32)
    model = CaeModel.build(builtin_spec(cfg.d), seed=init_ss, dtype=np.float32)
    opt = nn.Adam(model.parameters(), cfg.learning_rate)
    weights = model.weight_parameters()
    rng = np.random.Generator(np.random.PCG64(loop_ss))

    n = data.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            xb = nn.Tensor(data[order[start : start + cfg.batch_size]])
            out = model.forward(xb, training=True, rng=rng)
            loss = nn.l1_loss(out, xb)
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergedLossError(f"loss became {value} at epoch {epoch}")
            loss.backward()
            if cfg.regularization > 0.0:
                for w in weights:
                    w.grad += np.float32(cfg.regularization) * np.sign(w.data)
            opt.step()
            opt.zero_grad()
            epoch_loss += value
            batches += 1
        if log is not None:
            log(epoch, epoch_loss / batches)

    record = compute_threshold(model, cfg, _seed_int(thr_ss), epoch=cfg.epochs - 1)
    return model, record


def compute_threshold(model, cfg, calibration_seed, epoch=-1):
    """Max reconstruction error over fresh in-class states (the decision threshold)."""
    family = _TRAIN_FAMILY[cfg.task]
    calib = sample_batch(family, cfg.d, cfg.threshold_set_size, calibration_seed, m_max=cfg.m_max)
    errors = reconstruction_errors(model, [s.mat for s in calib.states])
    return ThresholdRecord(
        d=cfg.d,
        task=cfg.task,
        epsilon=float(errors.max()),
        n_calibration=cfg.threshold_set_size,
        calibration_seed=calibration_seed,
        epoch=epoch,
    )


def classify(model, threshold, rho):
    """Label one state by reconstruction error against the threshold."""
    _check_dimension(model, rho)
    error = float(reconstruction_errors(model, rho.mat)[0])
    label = IN_CLASS if error < threshold.epsilon else OUT_OF_CLASS
    return label, error


def classify_with_unitaries(model, threshold, rho, k, rng):
    """Median-vote classification over k random local-unitary conjugations.

    Returns (label, errors) with the full k-length error trace.
    """
    if k < 1:
        raise ParamOutOfRangeError("k must be >= 1")
    _check_dimension(model, rho)
    d = rho.dim_a
    mats = np.empty((k, rho.dim, rho.dim), dtype=np.complex128)
    for i in range(k):
        u_a = haar_unitary(d, rng)
        u_b = haar_unitary(d, rng)
        mats[i] = local_unitary_conjugate(rho, u_a, u_b).mat
    errors = reconstruction_errors(model, mats)
    label = OUT_OF_CLASS if float(np.median(errors)) > threshold.epsilon else IN_CLASS
    return label, errors


def expected_label(task, family):
    return IN_CLASS if family in _IN_CLASS_FAMILIES[task] else OUT_OF_CLASS


def evaluate(model, threshold, sets):
    """Per-family accuracy of threshold classification over labeled state sets."""
    families = []
    labels = []
    all_errors = []
    correct = {}
    totals = {}
    for state_set in sets:
        if len(state_set) == 0:
            raise ParamOutOfRangeError("evaluate requires non-empty state sets")
        if state_set.d * state_set.d != model.spec.side:
            raise DimensionMismatchError(
                f"set dimension d={state_set.d} does not match model side {model.spec.side}"
            )
        truth = expected_label(threshold.task, state_set.family)
        errors = reconstruction_errors(model, [s.mat for s in state_set.states])
        tag = state_set.family.tag
        for err in errors:
            label = IN_CLASS if err < threshold.epsilon else OUT_OF_CLASS
            families.append(tag)
            labels.append(label)
            all_errors.append(err)
            totals[tag] = totals.get(tag, 0) + 1
            correct[tag] = correct.get(tag, 0) + (label == truth)
    accuracies = {tag: correct[tag] / totals[tag] for tag in totals}
    return ClassificationReport(
        task=threshold.task,
        epsilon=threshold.epsilon,
        families=families,
        errors=np.array(all_errors),
        labels=labels,
        accuracies=accuracies,
    )


def conjugated_set(state_set, seed):
    """Copy of a state set with one random local-unitary conjugation per state."""
    children = np.random.SeedSequence(seed).spawn(len(state_set))
    rotated = []
    for state, child in zip(state_set.states, children):
        rng = np.random.Generator(np.random.PCG64(child))
        u_a = haar_unitary(state.dim_a, rng)
        u_b = haar_unitary(state.dim_b, rng)
        rotated.append(local_unitary_conjugate(state, u_a, u_b))
    return LabeledStateSet(
        family=state_set.family,
        states=rotated,
        d=state_set.d,
        seed=state_set.seed,
        metadata={**state_set.metadata, "rotated": True},
    )
