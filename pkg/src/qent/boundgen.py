"""Gradient-ascent search for PPT states the classifier rejects.

The candidate state is a softmax-weighted mixture of normalized Gram
matrices H_j H_j^dag built from trainable real matrices. The objective
rewards reconstruction error above the threshold (gated) and penalizes
distance from the state's own partial transpose; ascent runs through the
frozen model in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DegenerateBranchError, DimensionMismatchError, NoFeasibleStateError
from .linalg import DensityMatrix, hermitian_eigenvalues, hermitize, is_ppt, partial_transpose, realignment_ccnr
from .nn.tensor import Tensor
from .pipeline import OUT_OF_CLASS, classify_with_unitaries, reconstruction_errors

PPT_FEASIBILITY_TOL = 1e-8
_BRANCH_TRACE_FLOOR = 1e-12


@dataclass
class GeneratorParams:
    """Trainable mixture parameters: per-branch real/imag maps plus logits."""

    d: int
    kappa: int
    r_maps: list
    i_maps: list
    logits: Tensor

    @property
    def side(self):
        return self.d * self.d

    def tensors(self):
        return [*self.r_maps, *self.i_maps, self.logits]

    @classmethod
    def initialize(cls, d, kappa, rng, dtype=np.float64, noise=0.05):
        n = d * d
        eye = np.eye(n)
        r_maps = [
            Tensor((eye + noise * rng.standard_normal((n, n))).astype(dtype), requires_grad=True)
            for _ in range(kappa)
        ]
        i_maps = [
            Tensor((noise * rng.standard_normal((n, n))).astype(dtype), requires_grad=True)
            for _ in range(kappa)
        ]
        logits = Tensor(np.zeros(kappa, dtype=dtype), requires_grad=True)
        return cls(d=d, kappa=kappa, r_maps=r_maps, i_maps=i_maps, logits=logits)

    def rerandomize_branch(self, j, rng, noise=0.05):
        n = self.side
        dtype = self.logits.dtype
        self.r_maps[j].data = (np.eye(n) + noise * rng.standard_normal((n, n))).astype(dtype)
        self.i_maps[j].data = (noise * rng.standard_normal((n, n))).astype(dtype)


def build_state_channels(params):
    """Differentiable (1, 2, n, n) channel tensor of the mixture state."""
    n = params.side
    res, ims = [], []
    for j in range(params.kappa):
        r, im = params.r_maps[j], params.i_maps[j]
        re_t = r @ r.T + im @ im.T
        im_t = im @ r.T - r @ im.T
        tr = nn.trace(re_t)
        if float(tr.data) < _BRANCH_TRACE_FLOOR:
            raise DegenerateBranchError(f"branch {j} trace {float(tr.data):.3e} below floor")
        res.append(re_t / tr)
        ims.append(im_t / tr)
    w = nn.softmax(params.logits, axis=-1)
    w3 = w.reshape(params.kappa, 1, 1)
    re_mix = (nn.stack(res) * w3).sum(axis=0)
    im_mix = (nn.stack(ims) * w3).sum(axis=0)
    return nn.stack([re_mix, im_mix]).reshape(1, 2, n, n)


def build_state(params):
    """The mixture as a validated DensityMatrix (detached from the graph)."""
    channels = build_state_channels(params).data
    mat = hermitize(channels[0, 0].astype(np.float64) + 1j * channels[0, 1].astype(np.float64))
    return DensityMatrix(params.d, params.d, mat)


def build_state_numpy(params):
    """Graph-free recomputation of the mixture (independent evaluation path)."""
    n = params.side
    z = params.logits.data.astype(np.float64)
    w = np.exp(z - z.max())
    w /= w.sum()
    acc = np.zeros((n, n), dtype=np.complex128)
    for j in range(params.kappa):
        r = params.r_maps[j].data.astype(np.float64)
        im = params.i_maps[j].data.astype(np.float64)
        h = r + 1j * im
        gram = h @ h.conj().T
        acc += w[j] * gram / gram.trace().real
    return acc


def _pt_channels(x, d):
    """Partial transpose of both channels of a (1, 2, n, n) tensor."""
    n = d * d
    swapped = nn.transpose(x.reshape(1, 2, d, d, d, d), (0, 1, 4, 3, 2, 5))
    return swapped.reshape(1, 2, n, n)


def objective(params, model, epsilon_d):
    """Gated ascent objective; returns (tensor, info dict).

    value = lambda * (err - epsilon_d) - pt_term with lambda = 1 iff
    err < epsilon_d, recomputed each call; no gradient flows through lambda.
    """
    if model.spec.side != params.side:
        raise DimensionMismatchError(
            f"generator side {params.side} does not match model side {model.spec.side}"
        )
    x = build_state_channels(params)
    recon = model.forward(x, training=False)
    # x is the optimization variable: gradients flow through both the model
    # input and the comparison target.
    err = nn.l1_loss(recon, x)
    pt_term = nn.l1_loss(x, _pt_channels(x, params.d))
    err_value = float(err.data)
    gate = 1 if err_value < epsilon_d else 0
    if gate:
        value = err - float(epsilon_d) - pt_term
    else:
        value = -pt_term
    info = {
        "err": err_value,
        "pt_term": float(pt_term.data),
        "lambda": gate,
        "objective": float(value.data),
    }
    return value, info


def objective_value_numpy(params, model, epsilon_d):
    """Objective recomputed without autodiff (for dual-path verification)."""
    mat = build_state_numpy(params)
    err = float(reconstruction_errors(model, mat)[0])
    pt = partial_transpose(mat, params.d, params.d)
    diff = mat - pt
    pt_term = float((np.abs(diff.real).sum() + np.abs(diff.imag).sum()) / (2 * diff.size))
    if err < epsilon_d:
        return err - epsilon_d - pt_term
    return -pt_term


@dataclass
class GenerationResult:
    state: DensityMatrix | None
    reconstruction_error: float
    min_pt_eigenvalue: float
    ccnr: float
    objective_trace: list
    lambda_trace: list
    error_trace: list
    seed: int
    steps: int
    kappa: int
    learning_rate: float
    feasible: bool
    nudged: bool
    metadata: dict = field(default_factory=dict)


def ppt_project(mat, dim_a, dim_b, tol=1e-10, max_iter=50):
    """Alternate PT-symmetrization and PSD clipping until PPT within tol."""
    current = mat.copy()
    for _ in range(max_iter):
        current = hermitize((current + partial_transpose(current, dim_a, dim_b)) / 2.0)
        eigs, vecs = np.linalg.eigh(current)
        if eigs[0] >= 0:
            current /= current.trace().real
        else:
            clipped = np.clip(eigs, 0.0, None)
            current = (vecs * clipped) @ vecs.conj().T
            current = hermitize(current / current.trace().real)
        pt_min = hermitian_eigenvalues(partial_transpose(current, dim_a, dim_b))[0]
        if pt_min >= -tol:
            return current
    return current


def optimize(params, model, epsilon_d, steps, learning_rate, seed=0, nudge=True):
    """Adam ascent on the objective; tracks the best PPT-feasible iterate.

    Best-so-far is lexicographic: PPT feasibility (min PT eigenvalue >=
    -PPT_FEASIBILITY_TOL) first, then largest reconstruction error above
    epsilon_d. Certification fields are recomputed in double precision.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    opt = nn.Adam(params.tensors(), learning_rate)
    objective_trace = []
    lambda_trace = []
    error_trace = []
    best = None  # (feasible, err, mat, min_pt)
    fallback = None  # highest-error iterate regardless of feasibility

    for _ in range(steps):
        try:
            value, info = objective(params, model, epsilon_d)
        except DegenerateBranchError:
            for j in range(params.kappa):
                r, im = params.r_maps[j].data, params.i_maps[j].data
                if (r * r).sum() + (im * im).sum() < _BRANCH_TRACE_FLOOR:
                    params.rerandomize_branch(j, rng)
            continue
        objective_trace.append(info["objective"])
        lambda_trace.append(info["lambda"])
        error_trace.append(info["err"])

        mat = build_state_numpy(params)
        min_pt = float(hermitian_eigenvalues(partial_transpose(mat, params.d, params.d))[0])
        feasible = min_pt >= -PPT_FEASIBILITY_TOL and info["err"] > epsilon_d
        if feasible and (best is None or info["err"] > best[1]):
            best = (True, info["err"], mat, min_pt)
        if fallback is None or info["err"] > fallback[1]:
            fallback = (False, info["err"], mat, min_pt)

        (-value).backward()
        opt.step()
        opt.zero_grad()

    nudged = False
    if best is None and nudge and fallback is not None:
        projected = ppt_project(fallback[2], params.d, params.d)
        err = float(reconstruction_errors(model, projected)[0])
        min_pt = float(hermitian_eigenvalues(partial_transpose(projected, params.d, params.d))[0])
        if min_pt >= -PPT_FEASIBILITY_TOL and err > epsilon_d:
            best = (True, err, projected, min_pt)
            nudged = True

    chosen = best if best is not None else fallback
    feasible = chosen is not None and chosen[0]
    if chosen is None:
        return GenerationResult(
            state=None,
            reconstruction_error=float("nan"),
            min_pt_eigenvalue=float("nan"),
            ccnr=float("nan"),
            objective_trace=objective_trace,
            lambda_trace=lambda_trace,
            error_trace=error_trace,
            seed=seed,
            steps=steps,
            kappa=params.kappa,
            learning_rate=learning_rate,
            feasible=False,
            nudged=False,
        )
    _, err, mat, min_pt = chosen
    state = DensityMatrix(params.d, params.d, mat)
    return GenerationResult(
        state=state,
        reconstruction_error=float(reconstruction_errors(model, mat)[0]),
        min_pt_eigenvalue=min_pt,
        ccnr=realignment_ccnr(state),
        objective_trace=objective_trace,
        lambda_trace=lambda_trace,
        error_trace=error_trace,
        seed=seed,
        steps=steps,
        kappa=params.kappa,
        learning_rate=learning_rate,
        feasible=feasible,
        nudged=nudged,
    )


def generate(model, epsilon_d, d, kappa, steps, learning_rate, restarts, seed):
    """Multi-restart search; returns all results sorted best-first.

    Raises NoFeasibleStateError if no restart produced a PPT iterate with
    error above the threshold (results are still attached to the exception).
    """
    worker = model if model.dtype == np.float64 else model.astype(np.float64)
    worker.set_requires_grad(False)
    children = np.random.SeedSequence(seed).spawn(restarts)
    results = []
    for child in children:
        child_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        rng = np.random.Generator(np.random.PCG64(child_seed))
        params = GeneratorParams.initialize(d, kappa, rng, dtype=np.float64)
        results.append(
            optimize(params, worker, epsilon_d, steps, learning_rate, seed=child_seed)
        )
    results.sort(key=lambda r: (not r.feasible, -(r.reconstruction_error or 0.0)))
    if not any(r.feasible for r in results):
        exc = NoFeasibleStateError(f"no PPT state above threshold in {restarts} restarts")
        exc.results = results
        raise exc
    return results


def certify(state, model, threshold, rng, k=1000):
    """Desk-scale certification: PPT + realignment + classifier evidence."""
    ppt, min_pt = is_ppt(state, tol=PPT_FEASIBILITY_TOL)
    ccnr = realignment_ccnr(state)
    error = float(reconstruction_errors(model, state.mat)[0])
    verdict, errors = classify_with_unitaries(model, threshold, state, k, rng)
    if not ppt:
        label = "not_bound_entangled_npt"
    elif ccnr > 1.0:
        label = "certified_bound_entangled"
    elif verdict == OUT_OF_CLASS:
        label = "candidate_classifier_evidence"
    else:
        label = "not_certified"
    return {
        "is_ppt": ppt,
        "min_pt_eigenvalue": min_pt,
        "ccnr": ccnr,
        "reconstruction_error": error,
        "above_threshold": error > threshold.epsilon,
        "unitary_verdict": verdict,
        "median_rotated_error": float(np.median(errors)),
        "k_unitaries": k,
        "label": label,
    }
