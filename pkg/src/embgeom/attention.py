"""Simplified multi-head self-attention over token sequences.

Each layer is attention plus an output projection and nothing else: no
residual connections, no layer normalization, no feed-forward sublayer.
Per head, every position's embedding is projected to a query, a key, and a
value; dot-product scores against all keys are softmax-normalized into
weights; the output is the weight-averaged sum of values. Head outputs are
concatenated and mapped back to model dimensionality by ``Wo``.
"""

import math
import random
import struct
from dataclasses import dataclass

from . import linalg
from .errors import (
    ContextWindowExceededError,
    DimensionError,
    EmptyInputError,
    HeadCountError,
    ParseError,
)
from .linalg import Matrix, Vector

__all__ = [
    "AttentionHeadParams",
    "AttentionLayerParams",
    "MultiHeadConfig",
    "SequenceEmbedding",
    "attention_weights",
    "head_forward",
    "multihead_forward",
    "stack_forward",
    "positional_encoding",
    "embed_sequence",
    "random_stack_params",
    "save_attention_params",
    "load_attention_params",
    "save_named_matrices",
    "load_named_matrices",
]

_MAGIC = b"ATT1"

DEFAULT_CONTEXT_WINDOW = 128


@dataclass(frozen=True)
class AttentionHeadParams:
    """Projection matrices for one head; all three map dim d to dim d_head."""

    Wq: Matrix
    Wk: Matrix
    Wv: Matrix

    def __post_init__(self):
        shapes = {self.Wq.shape, self.Wk.shape, self.Wv.shape}
        if len(shapes) != 1:
            raise DimensionError(
                f"head projections disagree on shape: {sorted(shapes)}"
            )

    @property
    def d(self):
        """Input (model) dimensionality."""
        return self.Wq.cols

    @property
    def d_head(self):
        """Output (per-head) dimensionality."""
        return self.Wq.rows


@dataclass(frozen=True)
class AttentionLayerParams:
    """One layer's heads plus its own d x d output projection."""

    heads: tuple
    Wo: Matrix

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(self.heads))
        if not self.heads:
            raise EmptyInputError("a layer needs at least one head")


@dataclass(frozen=True)
class MultiHeadConfig:
    """Stack hyperparameters: shapes and flags, no weights.

    ``n`` must divide ``d``; every head then works at d/n dimensions so the
    concatenation of all head outputs restores dimensionality d.
    """

    d: int
    n: int
    layers: int = 1
    scale_scores: bool = True
    use_positional: bool = False
    context_window: int = DEFAULT_CONTEXT_WINDOW

    def __post_init__(self):
        if self.d < 1 or self.n < 1 or self.layers < 1:
            raise ValueError("d, n, and layers must all be positive")
        if self.d % self.n != 0:
            raise HeadCountError(
                f"{self.n} heads do not divide model dimensionality {self.d}"
            )
        if self.context_window < 1:
            raise ValueError("context window must be positive")

    @property
    def d_head(self):
        return self.d // self.n


@dataclass(frozen=True)
class SequenceEmbedding:
    """Tokens paired position-by-position with their embedding vectors."""

    tokens: tuple
    vectors: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "vectors", tuple(self.vectors))
        if not self.tokens:
            raise EmptyInputError("a sequence needs at least one token")
        if len(self.tokens) != len(self.vectors):
            raise DimensionError(
                f"{len(self.tokens)} tokens but {len(self.vectors)} vectors"
            )
        d = self.vectors[0].dim
        for v in self.vectors:
            if v.dim != d:
                raise DimensionError(f"mixed vector dims: {v.dim} != {d}")

    def __len__(self):
        return len(self.tokens)

    @property
    def d(self):
        return self.vectors[0].dim


def attention_weights(query, keys, scale_scores=True):
    """Softmax-normalized dot-product scores of one query against all keys.

    With ``scale_scores`` the raw scores are divided by sqrt(d_head) first,
    which keeps the softmax out of its saturated regime at realistic
    dimensionalities; disable it to follow the bare dot-product procedure.
    """
    keys = list(keys)
    if not keys:
        raise EmptyInputError("attention needs at least one key")
    scores = [linalg.dot(query, k) for k in keys]
    if scale_scores:
        denom = math.sqrt(len(Vector(query)))
        scores = [s / denom for s in scores]
    return linalg.softmax(scores)


def head_forward(seq, params, scale_scores=True):
    """Run one attention head over a sequence of d-dim vectors.

    Output i is the attention-weighted sum of projected values, with
    weights from position i's query against every position's key. Each
    output has dim d_head and lies in the convex hull of the values.
    """
    seq = [Vector(v) for v in seq]
    if not seq:
        raise EmptyInputError("attention needs at least one position")
    queries = [linalg.linear_apply(params.Wq, x) for x in seq]
    keys = [linalg.linear_apply(params.Wk, x) for x in seq]
    values = [linalg.linear_apply(params.Wv, x) for x in seq]
    out = []
    for q in queries:
        w = attention_weights(q, keys, scale_scores=scale_scores)
        acc = w[0] * values[0]
        for j in range(1, len(values)):
            acc = acc + w[j] * values[j]
        out.append(acc)
    return out


def multihead_forward(seq, heads, Wo, scale_scores=True):
    """Run every head, concatenate per position, project back to dim d."""
    seq = [Vector(v) for v in seq]
    if not seq:
        raise EmptyInputError("attention needs at least one position")
    heads = list(heads)
    if not heads:
        raise EmptyInputError("attention needs at least one head")
    d = seq[0].dim
    n = len(heads)
    if d % n != 0:
        raise HeadCountError(f"{n} heads do not divide model dimensionality {d}")
    d_head = d // n
    for h in heads:
        if h.d != d:
            raise DimensionError(f"head expects input dim {h.d}, sequence has {d}")
        if h.d_head != d_head:
            raise DimensionError(
                f"head emits dim {h.d_head}, expected d/n = {d_head}"
            )
    if Wo.shape != (d, d):
        raise DimensionError(f"Wo must be {d}x{d}, got {Wo.shape[0]}x{Wo.shape[1]}")

    per_head = [head_forward(seq, h, scale_scores=scale_scores) for h in heads]
    out = []
    for i in range(len(seq)):
        joined = linalg.concat([per_head[h][i] for h in range(n)])
        out.append(linalg.linear_apply(Wo, joined))
    return out


def stack_forward(seq, config, layer_params):
    """Apply every configured layer in order; returns contextualized vectors.

    ``seq`` may be a SequenceEmbedding or a bare list of vectors. The
    output of layer k feeds layer k+1 unchanged (no residuals), so every
    layer boundary carries vectors of dim d exactly.
    """
    if isinstance(seq, SequenceEmbedding):
        vectors = list(seq.vectors)
    else:
        vectors = [Vector(v) for v in seq]
    if not vectors:
        raise EmptyInputError("attention needs at least one position")
    if len(vectors) > config.context_window:
        raise ContextWindowExceededError(
            f"sequence length {len(vectors)} exceeds context window "
            f"{config.context_window}"
        )
    if vectors[0].dim != config.d:
        raise DimensionError(
            f"sequence has dim {vectors[0].dim}, config expects {config.d}"
        )
    layer_params = list(layer_params)
    if len(layer_params) != config.layers:
        raise DimensionError(
            f"{len(layer_params)} layer parameter sets for {config.layers} layers"
        )
    for lp in layer_params:
        if len(lp.heads) != config.n:
            raise HeadCountError(
                f"layer has {len(lp.heads)} heads, config expects {config.n}"
            )
        vectors = multihead_forward(
            vectors, lp.heads, lp.Wo, scale_scores=config.scale_scores
        )
    return vectors


def positional_encoding(position, d):
    """Fixed sinusoidal position vector of even dimensionality d.

    Component 2i is sin(position / 10000^(2i/d)) and component 2i+1 is the
    matching cosine, so every component is bounded in [-1, 1].
    """
    if d < 1 or d % 2 != 0:
        raise DimensionError(f"positional encoding needs even positive d, got {d}")
    if position < 0:
        raise ValueError(f"position must be nonnegative, got {position}")
    comps = []
    for i in range(d // 2):
        angle = position / (10000.0 ** (2 * i / d))
        comps.append(math.sin(angle))
        comps.append(math.cos(angle))
    return Vector(comps)


def embed_sequence(table, tokens, use_positional=False,
                   context_window=DEFAULT_CONTEXT_WINDOW):
    """Turn a token list into a SequenceEmbedding via table lookup.

    With ``use_positional`` each vector is the token row plus the
    sinusoidal encoding of its position (requires even D); without it,
    repeated tokens embed identically at every position.
    """
    tokens = tuple(tokens)
    if not tokens:
        raise EmptyInputError("a sequence needs at least one token")
    if len(tokens) > context_window:
        raise ContextWindowExceededError(
            f"sequence length {len(tokens)} exceeds context window {context_window}"
        )
    vectors = []
    for i, tok in enumerate(tokens):
        v = table.lookup(tok)
        if use_positional:
            v = v + positional_encoding(i, table.D)
        vectors.append(v)
    return SequenceEmbedding(tokens=tokens, vectors=tuple(vectors))


def _random_matrix(rows, cols, bound, rng):
    return Matrix(
        [rng.uniform(-bound, bound) for _ in range(cols)] for _ in range(rows)
    )


def random_stack_params(config, seed):
    """Draw a full parameter stack, uniform in [-1/sqrt(d), 1/sqrt(d)].

    Deterministic in (config shape, seed): the same call yields the same
    weights, so untrained demos are reproducible.
    """
    rng = random.Random(seed)
    bound = 1.0 / math.sqrt(config.d)
    layers = []
    for _ in range(config.layers):
        heads = tuple(
            AttentionHeadParams(
                Wq=_random_matrix(config.d_head, config.d, bound, rng),
                Wk=_random_matrix(config.d_head, config.d, bound, rng),
                Wv=_random_matrix(config.d_head, config.d, bound, rng),
            )
            for _ in range(config.n)
        )
        Wo = _random_matrix(config.d, config.d, bound, rng)
        layers.append(AttentionLayerParams(heads=heads, Wo=Wo))
    return tuple(layers)


def save_named_matrices(named):
    """Serialize an ordered mapping of name -> Matrix as ATT1 bytes."""
    parts = [_MAGIC, struct.pack("<Q", len(named))]
    for name, m in named.items():
        b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(b)))
        parts.append(b)
        parts.append(struct.pack("<QQ", m.rows, m.cols))
        parts.append(struct.pack(f"<{m.rows * m.cols}f", *m.entries))
    return b"".join(parts)


def load_named_matrices(source):
    """Parse ATT1 bytes back into an ordered dict of name -> Matrix."""
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    raw = bytes(raw)
    if raw[:4] != _MAGIC:
        raise ParseError(f"bad magic: {raw[:4]!r}, expected {_MAGIC!r}")
    if len(raw) < 12:
        raise ParseError("truncated header")
    (count,) = struct.unpack_from("<Q", raw, 4)
    pos = 12
    out = {}
    for _ in range(count):
        if pos + 4 > len(raw):
            raise ParseError("truncated matrix name")
        (nlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + nlen + 16 > len(raw):
            raise ParseError("truncated matrix header")
        try:
            name = raw[pos : pos + nlen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"matrix name is not UTF-8: {exc}") from None
        pos += nlen
        rows, cols = struct.unpack_from("<QQ", raw, pos)
        pos += 16
        need = rows * cols * 4
        if pos + need > len(raw):
            raise ParseError(f"truncated payload for matrix {name!r}")
        entries = struct.unpack_from(f"<{rows * cols}f", raw, pos)
        pos += need
        if name in out:
            raise ParseError(f"duplicate matrix name {name!r}")
        out[name] = Matrix.from_flat(rows, cols, entries)
    if pos != len(raw):
        raise ParseError(f"{len(raw) - pos} trailing bytes after last matrix")
    return out


def save_attention_params(layer_params):
    """Serialize a parameter stack with layer<i>.head<j>.{Wq,Wk,Wv} names."""
    named = {}
    for li, lp in enumerate(layer_params):
        for hi, h in enumerate(lp.heads):
            named[f"layer{li}.head{hi}.Wq"] = h.Wq
            named[f"layer{li}.head{hi}.Wk"] = h.Wk
            named[f"layer{li}.head{hi}.Wv"] = h.Wv
        named[f"layer{li}.Wo"] = lp.Wo
    return save_named_matrices(named)


def load_attention_params(source):
    """Rebuild a parameter stack saved by :func:`save_attention_params`."""
    named = load_named_matrices(source)
    layers = []
    li = 0
    while f"layer{li}.Wo" in named:
        heads = []
        hi = 0
        while f"layer{li}.head{hi}.Wq" in named:
            heads.append(
                AttentionHeadParams(
                    Wq=named[f"layer{li}.head{hi}.Wq"],
                    Wk=named[f"layer{li}.head{hi}.Wk"],
                    Wv=named[f"layer{li}.head{hi}.Wv"],
                )
            )
            hi += 1
        layers.append(AttentionLayerParams(heads=tuple(heads), Wo=named[f"layer{li}.Wo"]))
        li += 1
    if not layers:
        raise ParseError("no attention layers found in parameter file")
    expected = sum(3 * len(lp.heads) + 1 for lp in layers)
    if expected != len(named):
        raise ParseError("parameter file holds matrices outside the layer scheme")
    return tuple(layers)
