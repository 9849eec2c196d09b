"""Embedding tables: load, persist, look up, and scan for nearest neighbours.

Tables are immutable after construction. Storage and the exhaustive
similarity scan sit on numpy so that a 30k x 768 table loads and scans in
seconds; the public surface speaks :class:`~embgeom.linalg.Vector` and
:class:`~embgeom.linalg.Matrix` like the rest of the package.
"""

import re
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    OutOfVocabularyError,
    ParseError,
    ZeroVectorError,
)
from .linalg import Matrix, Vector

__all__ = [
    "EmbeddingTable",
    "Neighbor",
    "NeighborList",
    "TokenFilter",
    "token_filter",
    "load_embeddings_text",
    "save_embeddings_text",
    "load_embeddings_binary",
    "save_embeddings_binary",
    "nearest_neighbors",
]

_MAGIC = b"EMB1"

# Fixed or scientific decimal notation; deliberately narrower than float()
# (no nan/inf, no underscores, no hex).
_FLOAT_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\Z")


def _valid_token(token):
    return bool(token) and not any(map(str.isspace, token))


class EmbeddingTable:
    """A vocabulary paired with one embedding row per token.

    Parameters
    ----------
    vocab : sequence of str
        Unique tokens, no internal whitespace, insertion order preserved.
    rows : Matrix, numpy array, or nested sequence
        V x D real matrix; row i embeds vocab[i].
    """

    __slots__ = ("_vocab", "_index", "_array", "_norms", "_matrix")

    def __init__(self, vocab, rows):
        vocab = tuple(vocab)
        if not vocab:
            raise EmptyInputError("a table needs at least one token")
        for t in vocab:
            if not isinstance(t, str) or not _valid_token(t):
                raise ValueError(f"invalid token: {t!r}")
        index = {t: i for i, t in enumerate(vocab)}
        if len(index) != len(vocab):
            seen = set()
            dup = next(t for t in vocab if t in seen or seen.add(t))
            raise ValueError(f"duplicate token: {dup!r}")

        if isinstance(rows, Matrix):
            arr = np.array(rows.row_tuples(), dtype=np.float64)
        else:
            arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(vocab) or arr.shape[1] < 1:
            raise DimensionError(
                f"need a {len(vocab)} x D matrix, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("embedding rows must be finite")

        self._vocab = vocab
        self._index = index
        self._array = arr
        self._norms = None
        self._matrix = None

    @property
    def vocab(self):
        return self._vocab

    @property
    def V(self):
        return len(self._vocab)

    @property
    def D(self):
        return int(self._array.shape[1])

    @property
    def matrix(self):
        """The full table as a linalg Matrix (built lazily, then cached)."""
        if self._matrix is None:
            self._matrix = Matrix(self._array.tolist())
        return self._matrix

    def __contains__(self, token):
        return token in self._index

    def __len__(self):
        return len(self._vocab)

    def index_of(self, token):
        try:
            return self._index[token]
        except KeyError:
            raise OutOfVocabularyError(token) from None

    def lookup(self, token):
        """Return the embedding row for ``token`` as a Vector."""
        return Vector(self._array[self.index_of(token)].tolist())

    def _row_norms(self):
        if self._norms is None:
            self._norms = np.linalg.norm(self._array, axis=1)
        return self._norms

    def __eq__(self, other):
        if isinstance(other, EmbeddingTable):
            return self._vocab == other._vocab and np.array_equal(
                self._array, other._array
            )
        return NotImplemented

    def __repr__(self):
        return f"EmbeddingTable(V={self.V}, D={self.D})"


class Neighbor(NamedTuple):
    token: str
    similarity: float


@dataclass(frozen=True)
class NeighborList:
    """Ranked nearest neighbours of one query token.

    ``entries`` is a list of (token, similarity) pairs sorted by descending
    similarity; the query itself never appears.
    """

    query: str
    entries: tuple

    def tokens(self):
        return [t for t, _ in self.entries]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


class TokenFilter:
    """Predicate over tokens built from a list of drop rules.

    Supported rules:

    - ``drop-prefix:<p>``: drop tokens starting with the literal prefix
      (for example subword continuation markers such as ``##``).
    - ``drop-bracketed``: drop ``[...]`` special markers like ``[CLS]``.
    - ``drop-non-alphabetic``: keep only purely alphabetic tokens.

    An empty rule list keeps everything.
    """

    def __init__(self, rules=()):
        self.rules = tuple(rules)
        prefixes = []
        self._bracketed = False
        self._alpha_only = False
        for rule in self.rules:
            if rule.startswith("drop-prefix:"):
                prefix = rule[len("drop-prefix:") :]
                if not prefix:
                    raise ValueError("drop-prefix rule needs a prefix")
                prefixes.append(prefix)
            elif rule == "drop-bracketed":
                self._bracketed = True
            elif rule == "drop-non-alphabetic":
                self._alpha_only = True
            else:
                raise ValueError(f"unknown filter rule: {rule!r}")
        self._prefixes = tuple(prefixes)

    def __call__(self, token):
        """True when the token survives every enabled rule."""
        for p in self._prefixes:
            if token.startswith(p):
                return False
        if self._bracketed and token.startswith("[") and token.endswith("]"):
            return False
        if self._alpha_only and not token.isalpha():
            return False
        return True

    def __repr__(self):
        return f"TokenFilter(rules={list(self.rules)!r})"


def token_filter(rules=()):
    """Build a TokenFilter from rule strings; see :class:`TokenFilter`."""
    return TokenFilter(rules)


def _read_bytes(source):
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()


def load_embeddings_text(source, lowercase=False):
    """Parse the text embedding format into an EmbeddingTable.

    Line 1 is ``<V> <D>``; then exactly V lines of ``<token> <x1> ... <xD>``
    with single-space separation and ``\\n`` line endings. ``lowercase``
    folds tokens at ingest (later duplicates of a folded token are rejected).

    Raises ParseError with a 1-based line number on any malformation.
    """
    raw = _read_bytes(source)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}") from None
    if "\t" in text or "\r" in text:
        bad = text.replace("\r", "\t").index("\t")
        line_no = text.count("\n", 0, bad) + 1
        raise ParseError("tab or carriage return is not a valid separator", line=line_no)

    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()  # the final \n
    first = lines[0] if lines else ""
    header = first.split(" ")
    if len(header) != 2 or not all(f.isascii() and f.isdigit() for f in header):
        raise ParseError(f"header must be '<V> <D>', got {first!r}", line=1)
    V, D = int(header[0]), int(header[1])
    if V < 1 or D < 1:
        raise ParseError(f"V and D must be positive, got {V} {D}", line=1)

    body = lines[1:]
    if len(body) != V:
        raise ParseError(
            f"expected {V} embedding rows, found {len(body)}",
            line=min(len(body), V) + 2,
        )

    vocab = []
    seen = {}
    rests = []
    for i, line in enumerate(body):
        line_no = i + 2
        token, sep, rest = line.partition(" ")
        if not sep or not token:
            raise ParseError("row must be '<token> <x1> ...'", line=line_no)
        if lowercase:
            token = token.lower()
        if token in seen:
            raise ParseError(f"duplicate token {token!r}", line=line_no)
        if (
            not rest
            or rest[0] == " "
            or rest[-1] == " "
            or "  " in rest
            or rest.count(" ") != D - 1
        ):
            found = 0 if not rest else rest.count(" ") + 1
            raise ParseError(
                f"expected {D} values for token {token!r}, found {found}",
                line=line_no,
            )
        seen[token] = line_no
        vocab.append(token)
        rests.append(rest)

    try:
        arr = np.loadtxt(iter(rests), dtype=np.float64, ndmin=2, comments=None)
    except ValueError:
        # Re-parse slowly to attribute the malformed field to its line.
        for i, rest in enumerate(rests):
            for field in rest.split(" "):
                if not _FLOAT_RE.match(field):
                    raise ParseError(
                        f"not a decimal float: {field!r}", line=i + 2
                    ) from None
        raise ParseError("malformed numeric row") from None
    if arr.shape != (V, D):
        raise ParseError(f"expected a {V} x {D} table, parsed {arr.shape}")
    finite_rows = np.isfinite(arr).all(axis=1)
    if not finite_rows.all():
        bad = int(np.argmin(finite_rows))
        raise ParseError(f"non-finite value in row for {vocab[bad]!r}", line=bad + 2)

    return EmbeddingTable(vocab, arr)


def save_embeddings_text(table):
    """Serialize a table to the text format as bytes.

    Floats are written with 17 significant digits, enough for the
    load(save(t)) round-trip to be exact, well inside the 1e-8 contract.
    """
    out = [f"{table.V} {table.D}"]
    arr = table._array
    for i, token in enumerate(table.vocab):
        row = " ".join(f"{x:.17g}" for x in arr[i])
        out.append(f"{token} {row}")
    out.append("")
    return "\n".join(out).encode("utf-8")


def load_embeddings_binary(source):
    """Parse the EMB1 binary embedding format into an EmbeddingTable."""
    raw = _read_bytes(source)
    if raw[:4] != _MAGIC:
        raise ParseError(f"bad magic: {raw[:4]!r}, expected {_MAGIC!r}")
    if len(raw) < 20:
        raise ParseError("truncated header")
    V, D = struct.unpack_from("<QQ", raw, 4)
    if V < 1 or D < 1:
        raise ParseError(f"V and D must be positive, got {V} {D}")
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
            token = raw[pos : pos + n].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"vocabulary entry is not UTF-8: {exc}") from None
        pos += n
        vocab.append(token)
    need = V * D * 4
    if len(raw) - pos != need:
        raise ParseError(
            f"expected {need} bytes of matrix data, found {len(raw) - pos}"
        )
    arr = np.frombuffer(raw, dtype="<f4", count=V * D, offset=pos)
    arr = arr.astype(np.float64).reshape(V, D)
    if not np.isfinite(arr).all():
        raise ParseError("non-finite value in matrix data")
    try:
        return EmbeddingTable(vocab, arr)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def save_embeddings_binary(table):
    """Serialize a table to the EMB1 binary format as bytes.

    Matrix entries are stored as little-endian float32; vocabulary entries
    are UTF-8 with a little-endian u32 byte-length prefix.
    """
    parts = [_MAGIC, struct.pack("<QQ", table.V, table.D)]
    for token in table.vocab:
        b = token.encode("utf-8")
        parts.append(struct.pack("<I", len(b)))
        parts.append(b)
    parts.append(table._array.astype("<f4").tobytes())
    return b"".join(parts)


def nearest_neighbors(table, token, k, filter=None):
    """Top-k vocabulary tokens by cosine similarity to ``token``'s row.

    The query token is always excluded. ``filter``, when given, is applied
    to candidates before ranking. Ties break by vocabulary insertion order.
    Candidate rows with zero norm have no direction and are skipped; a
    zero-norm query raises ZeroVectorError.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    qi = table.index_of(token)
    arr = table._array
    norms = table._row_norms()
    qnorm = norms[qi]
    if qnorm == 0.0:
        raise ZeroVectorError(f"query token {token!r} has a zero-norm row")

    keep = np.ones(table.V, dtype=bool)
    keep[qi] = False
    if filter is not None:
        for i, t in enumerate(table.vocab):
            if keep[i] and not filter(t):
                keep[i] = False
    keep &= norms > 0.0

    (cand,) = np.nonzero(keep)
    if cand.size == 0:
        return NeighborList(query=token, entries=())

    sims = (arr[cand] @ arr[qi]) / (norms[cand] * qnorm)
    np.clip(sims, -1.0, 1.0, out=sims)
    # Stable sort on descending similarity: equal scores keep vocab order.
    order = np.argsort(-sims, kind="stable")[:k]
    entries = tuple(
        Neighbor(table.vocab[int(cand[j])], float(sims[j])) for j in order
    )
    return NeighborList(query=token, entries=entries)
