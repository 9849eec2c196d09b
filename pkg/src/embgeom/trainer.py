"""Masked-word toy trainer whose input weights become static embeddings.

The model is deliberately small: context word vectors (rows of ``W_in``)
are averaged into a hidden state, projected by ``W_out`` to one logit per
vocabulary item, and softmax-normalized into a prediction for the masked
word. Cross-entropy gradients are exact and propagated by plain SGD. After
training, row w of ``W_in`` is the embedding of vocabulary item w.
"""

import math
import random
import struct
from dataclasses import dataclass
from operator import mul

from .embed_store import EmbeddingTable
from .errors import (
    DimensionError,
    EmptyInputError,
    OutOfVocabularyError,
    ParseError,
)
from .linalg import Matrix, Vector

__all__ = [
    "ToyLM",
    "TrainingExample",
    "TrainConfig",
    "Gradients",
    "make_training_examples",
    "model_forward",
    "loss_and_gradients",
    "sgd_step",
    "train",
    "extract_embeddings",
    "load_corpus",
    "save_model",
    "load_model",
]

_MAGIC = b"TLM1"


@dataclass(frozen=True)
class ToyLM:
    """Vocabulary plus the two V x d weight matrices of the network."""

    vocab: tuple
    W_in: Matrix
    W_out: Matrix

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if not self.vocab:
            raise EmptyInputError("a model needs at least one vocabulary item")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocabulary items must be unique")
        V = len(self.vocab)
        if self.W_in.shape != self.W_out.shape or self.W_in.rows != V:
            raise DimensionError(
                f"weights must both be {V} x d, got {self.W_in.shape} "
                f"and {self.W_out.shape}"
            )

    @property
    def V(self):
        return len(self.vocab)

    @property
    def d(self):
        return self.W_in.cols


@dataclass(frozen=True)
class TrainingExample:
    """One masked position: the target index and its in-window context set."""

    target: int
    context: frozenset

    def __post_init__(self):
        object.__setattr__(self, "context", frozenset(self.context))
        if not self.context:
            raise EmptyInputError("an example needs at least one context index")
        if self.target in self.context:
            raise ValueError("the masked target cannot appear in its own context")
        for i in (self.target, *self.context):
            if not isinstance(i, int) or i < 0:
                raise ValueError(f"vocab indices must be nonnegative ints, got {i!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    d: int
    window: int = 5
    learning_rate: float = 0.1
    epochs: int = 5
    seed: int = 42

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("embedding dim must be positive")
        if self.window < 1:
            raise ValueError("window must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


@dataclass(frozen=True)
class Gradients:
    """Exact partials of the loss, same shapes as the model weights."""

    dW_in: Matrix
    dW_out: Matrix


def make_training_examples(corpus, window, vocab):
    """One example per corpus position that has at least one usable neighbor.

    ``corpus`` is a list of sentences, each a token list; windows never
    cross sentence boundaries. The context is the set of vocab indices
    within +-window of the target position. Because an example's context
    is a set that may not contain the target's own index, positions whose
    window holds only repeats of the target word emit nothing.
    """
    index = {t: i for i, t in enumerate(vocab)}
    if window < 1:
        raise ValueError("window must be positive")
    examples = []
    for sentence in corpus:
        ids = []
        for tok in sentence:
            try:
                ids.append(index[tok])
            except KeyError:
                raise OutOfVocabularyError(tok) from None
        for i, target in enumerate(ids):
            lo = max(0, i - window)
            context = {
                ids[j]
                for j in range(lo, min(len(ids), i + window + 1))
                if j != i and ids[j] != target
            }
            if context:
                examples.append(TrainingExample(target=target, context=context))
    return examples


def _check_context(context, V):
    context = sorted(context)
    if not context:
        raise EmptyInputError("context must be nonempty")
    if context[0] < 0 or context[-1] >= V:
        raise ValueError(f"context index out of range for V={V}")
    return context


def _forward_lists(w_in, w_out, context):
    """Hidden state and prediction for a context, on plain float lists."""
    d = len(w_in[0])
    it = iter(context)
    h = list(w_in[next(it)])
    for c in it:
        row = w_in[c]
        for j in range(d):
            h[j] += row[j]
    inv = 1.0 / len(context)
    for j in range(d):
        h[j] *= inv
    logits = [sum(map(mul, row, h)) for row in w_out]
    m = max(logits)
    exps = [math.exp(s - m) for s in logits]
    tot = sum(exps)
    tiny = math.ulp(0.0)  # same underflow floor as linalg.softmax
    probs = [max(e / tot, tiny) for e in exps]
    return h, probs


def model_forward(m, context):
    """Probability distribution over the vocabulary given a context set."""
    context = _check_context(context, m.V)
    _, probs = _forward_lists(m.W_in.row_tuples(), m.W_out.row_tuples(), context)
    return Vector(probs)


def loss_and_gradients(m, ex):
    """Cross-entropy loss at the masked target and its exact gradients.

    loss = -ln p[target]; dW_out = (p - onehot) outer h; each context row
    of dW_in receives W_out^T (p - onehot) / |context|; all other rows of
    dW_in are zero.
    """
    context = _check_context(ex.context, m.V)
    if not 0 <= ex.target < m.V:
        raise ValueError(f"target index {ex.target} out of range for V={m.V}")
    w_in = m.W_in.row_tuples()
    w_out = m.W_out.row_tuples()
    h, probs = _forward_lists(w_in, w_out, context)
    loss = -math.log(probs[ex.target])

    delta = list(probs)
    delta[ex.target] -= 1.0
    d = m.d
    g_h = [0.0] * d
    for dv, row in zip(delta, w_out):
        for j in range(d):
            g_h[j] += dv * row[j]
    d_out = [[dv * hj for hj in h] for dv in delta]
    inv = 1.0 / len(context)
    zero = (0.0,) * d
    in_rows = [zero] * m.V
    ctx_row = tuple(g * inv for g in g_h)
    for c in context:
        in_rows[c] = ctx_row
    return loss, Gradients(dW_in=Matrix(in_rows), dW_out=Matrix(d_out))


def sgd_step(m, grads, lr):
    """One descent update: every weight moves by -lr times its gradient."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if grads.dW_in.shape != m.W_in.shape or grads.dW_out.shape != m.W_out.shape:
        raise DimensionError(
            f"gradient shapes {grads.dW_in.shape}/{grads.dW_out.shape} do not "
            f"match model shapes {m.W_in.shape}/{m.W_out.shape}"
        )

    def step(w, g):
        return Matrix(
            tuple(wx - lr * gx for wx, gx in zip(wr, gr))
            for wr, gr in zip(w.row_tuples(), g.row_tuples())
        )

    return ToyLM(
        vocab=m.vocab,
        W_in=step(m.W_in, grads.dW_in),
        W_out=step(m.W_out, grads.dW_out),
    )


def _sgd_update_lists(w_in, w_out, target, context, lr):
    """In-place fused forward/backward/update; returns the example loss.

    Mathematically identical to loss_and_gradients followed by sgd_step,
    but mutates list-of-list weights to keep long runs affordable.
    """
    h, probs = _forward_lists(w_in, w_out, context)
    loss = -math.log(probs[target])
    delta = probs
    delta[target] -= 1.0
    d = len(h)
    g_h = [0.0] * d
    for dv, row in zip(delta, w_out):
        for j in range(d):
            g_h[j] += dv * row[j]
    for dv, row in zip(delta, w_out):
        f = lr * dv
        row[:] = [r - f * hj for r, hj in zip(row, h)]
    f = lr / len(context)
    upd = [f * g for g in g_h]
    for c in context:
        row = w_in[c]
        row[:] = [r - u for r, u in zip(row, upd)]
    return loss


def induce_vocab(corpus):
    """Vocabulary in order of first occurrence across the corpus."""
    vocab = []
    seen = set()
    for sentence in corpus:
        for tok in sentence:
            if tok not in seen:
                seen.add(tok)
                vocab.append(tok)
    return tuple(vocab)


def train(corpus, config, on_epoch=None):
    """Fit a ToyLM on a tokenized corpus; deterministic for a fixed seed.

    The vocabulary is induced from the corpus in first-occurrence order.
    Weights initialize uniformly in [-0.5/d, 0.5/d] from the seeded
    generator that also drives the per-epoch example shuffle. ``on_epoch``
    (if given) is called with (epoch index, mean example loss).
    """
    corpus = [list(s) for s in corpus]
    vocab = induce_vocab(corpus)
    if not vocab:
        raise EmptyInputError("corpus has no tokens")
    examples = make_training_examples(corpus, config.window, vocab)

    rng = random.Random(config.seed)
    d = config.d
    bound = 0.5 / d
    V = len(vocab)
    w_in = [[rng.uniform(-bound, bound) for _ in range(d)] for _ in range(V)]
    w_out = [[rng.uniform(-bound, bound) for _ in range(d)] for _ in range(V)]

    pairs = [(ex.target, sorted(ex.context)) for ex in examples]
    order = list(range(len(pairs)))
    lr = config.learning_rate
    for epoch in range(config.epochs):
        rng.shuffle(order)
        total = 0.0
        for k in order:
            target, context = pairs[k]
            total += _sgd_update_lists(w_in, w_out, target, context, lr)
        if on_epoch is not None:
            mean = total / len(order) if order else 0.0
            on_epoch(epoch, mean)
    return ToyLM(vocab=vocab, W_in=Matrix(w_in), W_out=Matrix(w_out))


def extract_embeddings(m):
    """The model's input weights as an embedding table, one row per token."""
    return EmbeddingTable(m.vocab, m.W_in)


def load_corpus(source, lowercase=False):
    """Read a corpus file: one sentence per line, space-separated tokens."""
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    if lowercase:
        text = text.lower()
    corpus = []
    for line in text.split("\n"):
        tokens = line.split()
        if tokens:
            corpus.append(tokens)
    return corpus


def save_model(m):
    """Serialize a ToyLM to bytes: vocab, then W_in and W_out as f64 LE.

    Full 64-bit floats keep extract-after-reload bit-identical to
    extract-before-save.
    """
    parts = [_MAGIC, struct.pack("<QQ", m.V, m.d)]
    for token in m.vocab:
        b = token.encode("utf-8")
        parts.append(struct.pack("<I", len(b)))
        parts.append(b)
    for matrix in (m.W_in, m.W_out):
        parts.append(struct.pack(f"<{m.V * m.d}d", *matrix.entries))
    return b"".join(parts)


def load_model(source):
    """Rebuild a ToyLM serialized by :func:`save_model`."""
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    raw = bytes(raw)
    if raw[:4] != _MAGIC:
        raise ParseError(f"bad magic: {raw[:4]!r}, expected {_MAGIC!r}")
    if len(raw) < 20:
        raise ParseError("truncated header")
    V, d = struct.unpack_from("<QQ", raw, 4)
    if V < 1 or d < 1:
        raise ParseError(f"V and d must be positive, got {V} {d}")
    pos = 20
    vocab = []
    for _ in range(V):
        if pos + 4 > len(raw):
            raise ParseError("truncated vocabulary")
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + n > len(raw):
            raise ParseError("truncated vocabulary")
        try:
            vocab.append(raw[pos : pos + n].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ParseError(f"vocabulary entry is not UTF-8: {exc}") from None
        pos += n
    need = V * d * 8
    if len(raw) - pos != 2 * need:
        raise ParseError(
            f"expected {2 * need} bytes of weights, found {len(raw) - pos}"
        )
    matrices = []
    for _ in range(2):
        flat = struct.unpack_from(f"<{V * d}d", raw, pos)
        pos += need
        matrices.append(Matrix.from_flat(V, d, flat))
    try:
        return ToyLM(vocab=tuple(vocab), W_in=matrices[0], W_out=matrices[1])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
