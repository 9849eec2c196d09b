"""Built-in invariant suite behind the ``selfcheck`` CLI subcommand.

Each check draws randomized cases from a seeded generator, asserts one
documented invariant, and reports pass/fail with a short detail line.
The suite is sized to finish in seconds.
"""

import math
import random
from dataclasses import dataclass

from . import attention, linalg, sense_geometry, trainer
from .linalg import Matrix, Vector

__all__ = ["CheckResult", "run_all"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_vector(rng, d, scale=1.0):
    return [rng.uniform(-scale, scale) for _ in range(d)]


def _check_softmax_normalization(rng):
    worst = 0.0
    for _ in range(200):
        d = rng.randint(1, 12)
        scale = rng.choice([1.0, 10.0, 1e2, 1e4])
        out = linalg.softmax(_random_vector(rng, d, scale))
        worst = max(worst, abs(sum(out) - 1.0))
        if any(p <= 0.0 for p in out):
            return CheckResult(
                "softmax normalization", False, "non-positive probability"
            )
    passed = worst <= 1e-9
    return CheckResult(
        "softmax normalization", passed, f"max |sum-1| = {worst:.2e}"
    )


def _check_attention_row_sums(rng):
    worst = 0.0
    for _ in range(50):
        d = rng.randint(1, 8)
        L = rng.randint(1, 8)
        q = _random_vector(rng, d, 3.0)
        keys = [_random_vector(rng, d, 3.0) for _ in range(L)]
        w = attention.attention_weights(q, keys, scale_scores=rng.random() < 0.5)
        worst = max(worst, abs(sum(w) - 1.0))
        if any(p <= 0.0 for p in w):
            return CheckResult(
                "attention row sums", False, "non-positive attention weight"
            )
    passed = worst <= 1e-9
    return CheckResult("attention row sums", passed, f"max |sum-1| = {worst:.2e}")


def _check_permutation_equivariance(rng):
    worst = 0.0
    for _ in range(5):
        d, n = rng.choice([(4, 2), (6, 3), (8, 2)])
        L = rng.randint(2, 6)
        config = attention.MultiHeadConfig(d=d, n=n, layers=2)
        params = attention.random_stack_params(config, seed=rng.randrange(10**9))
        X = [_random_vector(rng, d) for _ in range(L)]
        perm = list(range(L))
        rng.shuffle(perm)
        out = attention.stack_forward(X, config, params)
        out_perm = attention.stack_forward([X[p] for p in perm], config, params)
        for i, p in enumerate(perm):
            diff = max(abs(a - b) for a, b in zip(out[p], out_perm[i]))
            worst = max(worst, diff)
    if worst > 1e-9:
        return CheckResult(
            "permutation equivariance", False, f"max deviation = {worst:.2e}"
        )
    # positional encodings must break the symmetry for distinct tokens
    d, n = 4, 2
    config = attention.MultiHeadConfig(d=d, n=n, layers=1)
    params = attention.random_stack_params(config, seed=rng.randrange(10**9))
    X = [_random_vector(rng, d) for _ in range(3)]
    with_pos = [
        (Vector(x) + attention.positional_encoding(i, d)).components
        for i, x in enumerate(X)
    ]
    rev = list(reversed(X))
    with_pos_rev = [
        (Vector(x) + attention.positional_encoding(i, d)).components
        for i, x in enumerate(rev)
    ]
    out = attention.stack_forward(with_pos, config, params)
    out_rev = attention.stack_forward(with_pos_rev, config, params)
    broke = any(
        max(abs(a - b) for a, b in zip(out[2 - i], out_rev[i])) > 1e-3
        for i in range(3)
    )
    return CheckResult(
        "permutation equivariance",
        broke,
        f"max deviation = {worst:.2e}; positional encodings break symmetry: {broke}",
    )


def _check_concat_dimensionality(rng):
    cases = [(8, 1), (8, 2), (8, 4), (8, 8), (64, 4), (64, 16), (768, 12)]
    for d, n in cases:
        config = attention.MultiHeadConfig(d=d, n=n, layers=1)
        dh = config.d_head
        zero_head = attention.AttentionHeadParams(
            Wq=Matrix.zeros(dh, d), Wk=Matrix.zeros(dh, d), Wv=Matrix.zeros(dh, d)
        )
        layer = attention.AttentionLayerParams(
            heads=(zero_head,) * n, Wo=Matrix.zeros(d, d)
        )
        seq = [_random_vector(rng, d) for _ in range(2)]
        head_out = attention.head_forward(seq, zero_head)
        if any(o.dim != dh for o in head_out):
            return CheckResult(
                "concat dimensionality", False, f"head output is not d/n at d={d}, n={n}"
            )
        out = attention.multihead_forward(seq, layer.heads, layer.Wo)
        if any(o.dim != d for o in out):
            return CheckResult(
                "concat dimensionality", False, f"layer output is not d at d={d}, n={n}"
            )
    return CheckResult(
        "concat dimensionality", True, f"{len(cases)} (d, n) cases exact"
    )


def _check_gradients(rng):
    step = 1e-5
    worst = 0.0
    for _ in range(20):
        V = rng.randint(2, 6)
        d = rng.randint(1, 4)
        w_in = [[rng.uniform(-0.5, 0.5) for _ in range(d)] for _ in range(V)]
        w_out = [[rng.uniform(-0.5, 0.5) for _ in range(d)] for _ in range(V)]
        indices = list(range(V))
        rng.shuffle(indices)
        k = rng.randint(1, V - 1)
        target, context = indices[0], set(indices[1 : k + 1])
        ex = trainer.TrainingExample(target=target, context=context)

        def model_of(win, wout):
            return trainer.ToyLM(
                vocab=tuple(f"w{i}" for i in range(V)),
                W_in=Matrix(win),
                W_out=Matrix(wout),
            )

        _, grads = trainer.loss_and_gradients(model_of(w_in, w_out), ex)
        for which, analytic in (("in", grads.dW_in), ("out", grads.dW_out)):
            w = w_in if which == "in" else w_out
            for i in range(V):
                for j in range(d):
                    orig = w[i][j]
                    w[i][j] = orig + step
                    hi, _ = trainer.loss_and_gradients(model_of(w_in, w_out), ex)
                    w[i][j] = orig - step
                    lo, _ = trainer.loss_and_gradients(model_of(w_in, w_out), ex)
                    w[i][j] = orig
                    fd = (hi - lo) / (2 * step)
                    a = analytic.row_tuples()[i][j]
                    rel = abs(a - fd) / max(abs(a), abs(fd), 1e-2)
                    worst = max(worst, rel)
    passed = worst < 1e-4
    return CheckResult("gradient check", passed, f"max relative error = {worst:.2e}")


def _check_centroid_identity(rng):
    for _ in range(20):
        d = rng.randint(1, 6)
        v = Vector(_random_vector(rng, d))
        k = rng.randint(1, 5)
        c = sense_geometry.sense_centroid([v] * k)
        if max(abs(a - b) for a, b in zip(c, v)) > 1e-12:
            return CheckResult(
                "centroid identity", False, "mean of copies is not the copy"
            )
        occ = [Vector(_random_vector(rng, d)) for _ in range(k + 1)]
        perm = list(range(k + 1))
        rng.shuffle(perm)
        c1 = sense_geometry.sense_centroid(occ)
        c2 = sense_geometry.sense_centroid([occ[p] for p in perm])
        if max(abs(a - b) for a, b in zip(c1, c2)) > 1e-12:
            return CheckResult(
                "centroid identity", False, "centroid is order-sensitive"
            )
        cancel = sense_geometry.sense_centroid([v, -1.0 * v])
        if max(abs(x) for x in cancel) > 1e-12:
            return CheckResult(
                "centroid identity", False, "opposite pairs do not cancel"
            )
    return CheckResult("centroid identity", True, "60 randomized identities hold")


_CHECKS = (
    _check_softmax_normalization,
    _check_attention_row_sums,
    _check_permutation_equivariance,
    _check_concat_dimensionality,
    _check_gradients,
    _check_centroid_identity,
)


def run_all(seed=42):
    """Run every invariant check; returns one CheckResult per check."""
    results = []
    for check in _CHECKS:
        rng = random.Random(f"{seed}:{check.__name__}")
        try:
            results.append(check(rng))
        except Exception as exc:  # a crash is a failed check, not a crash
            results.append(
                CheckResult(check.__name__.replace("_check_", "").replace("_", " "),
                            False, f"raised {type(exc).__name__}: {exc}"))
    return results
