"""Dense vector/matrix primitives used by every other module.

Everything here is plain 64-bit Python floats and tuples: exact, immutable,
and free of third-party dependencies. Throughput is a non-goal; the point
is that each operation is small enough to verify by hand.
"""

import math
from operator import mul

from .errors import DimensionError, EmptyInputError, ZeroVectorError

__all__ = [
    "Vector",
    "Matrix",
    "dot",
    "norm",
    "cosine",
    "softmax",
    "linear_apply",
    "mean_vector",
    "concat",
    "split",
]


def _check_finite(values):
    # Fast path: a finite sum proves nothing is nan/inf unless the sum
    # itself overflowed, so only then inspect element by element.
    if math.isfinite(sum(values)):
        return
    for x in values:
        if not math.isfinite(x):
            raise ValueError(f"non-finite component: {x!r}")


class Vector:
    """An ordered, immutable list of finite real numbers."""

    __slots__ = ("_data",)

    def __init__(self, components):
        if isinstance(components, Vector):
            self._data = components._data
            return
        data = tuple(float(x) for x in components)
        if not data:
            raise EmptyInputError("a vector needs at least one component")
        _check_finite(data)
        self._data = data

    @property
    def components(self):
        return self._data

    @property
    def dim(self):
        return len(self._data)

    def __len__(self):
        return len(self._data)

    def __iter__(self):
        return iter(self._data)

    def __getitem__(self, i):
        return self._data[i]

    def __eq__(self, other):
        if isinstance(other, Vector):
            return self._data == other._data
        return NotImplemented

    def __hash__(self):
        return hash(self._data)

    def __add__(self, other):
        other = Vector(other)
        if other.dim != self.dim:
            raise DimensionError(f"cannot add dim {self.dim} and dim {other.dim}")
        return Vector(a + b for a, b in zip(self._data, other._data))

    def __sub__(self, other):
        other = Vector(other)
        if other.dim != self.dim:
            raise DimensionError(f"cannot subtract dim {other.dim} from dim {self.dim}")
        return Vector(a - b for a, b in zip(self._data, other._data))

    def __mul__(self, scalar):
        return Vector(a * scalar for a in self._data)

    __rmul__ = __mul__

    def __repr__(self):
        if self.dim <= 8:
            return f"Vector({list(self._data)!r})"
        head = ", ".join(repr(x) for x in self._data[:4])
        return f"Vector([{head}, ...], dim={self.dim})"


def _components(v):
    """Coerce a Vector or any sequence of reals to a validated tuple."""
    if isinstance(v, Vector):
        return v.components
    return Vector(v).components


class Matrix:
    """An immutable rows x cols matrix of finite reals, stored row-major."""

    __slots__ = ("_rows",)

    def __init__(self, rows):
        if isinstance(rows, Matrix):
            self._rows = rows._rows
            return
        packed = tuple(tuple(float(x) for x in row) for row in rows)
        if not packed or not packed[0]:
            raise EmptyInputError("a matrix needs at least one row and one column")
        width = len(packed[0])
        for i, row in enumerate(packed):
            if len(row) != width:
                raise DimensionError(
                    f"row {i} has {len(row)} entries, expected {width}"
                )
            _check_finite(row)
        self._rows = packed

    @classmethod
    def from_flat(cls, rows, cols, entries):
        entries = tuple(float(x) for x in entries)
        if rows < 1 or cols < 1:
            raise EmptyInputError("a matrix needs at least one row and one column")
        if len(entries) != rows * cols:
            raise DimensionError(
                f"{len(entries)} entries cannot fill a {rows}x{cols} matrix"
            )
        return cls(entries[i * cols : (i + 1) * cols] for i in range(rows))

    @classmethod
    def identity(cls, n):
        return cls(
            tuple(1.0 if i == j else 0.0 for j in range(n)) for i in range(n)
        )

    @classmethod
    def zeros(cls, rows, cols):
        row = (0.0,) * cols
        return cls(row for _ in range(rows))

    @property
    def rows(self):
        return len(self._rows)

    @property
    def cols(self):
        return len(self._rows[0])

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def entries(self):
        """Row-major flat tuple of all entries."""
        return tuple(x for row in self._rows for x in row)

    def row(self, i):
        return Vector(self._rows[i])

    def row_tuples(self):
        return self._rows

    def transpose(self):
        return Matrix(zip(*self._rows))

    def __eq__(self, other):
        if isinstance(other, Matrix):
            return self._rows == other._rows
        return NotImplemented

    def __hash__(self):
        return hash(self._rows)

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


def dot(a, b):
    """Inner product of two equal-dimension vectors."""
    xa, xb = _components(a), _components(b)
    if len(xa) != len(xb):
        raise DimensionError(f"dot of dim {len(xa)} against dim {len(xb)}")
    return sum(map(mul, xa, xb))


def norm(v):
    """Euclidean length."""
    x = _components(v)
    return math.sqrt(sum(map(mul, x, x)))


def cosine(a, b):
    """Cosine similarity; both arguments must have nonzero norm."""
    xa, xb = _components(a), _components(b)
    if len(xa) != len(xb):
        raise DimensionError(f"cosine of dim {len(xa)} against dim {len(xb)}")
    na = math.sqrt(sum(map(mul, xa, xa)))
    nb = math.sqrt(sum(map(mul, xb, xb)))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine is undefined for zero-norm vectors")
    return sum(map(mul, xa, xb)) / (na * nb)


def softmax(scores):
    """Normalize scores to a strictly positive vector summing to 1.

    The maximum is subtracted before exponentiation so large inputs cannot
    overflow; the result is unchanged because softmax is shift-invariant.
    Entries that underflow to zero are floored at the smallest subnormal
    float: the true softmax is strictly positive everywhere, and the floor
    perturbs the unit sum by far less than any tolerance we promise.
    """
    x = _components(scores)
    m = max(x)
    exps = [math.exp(s - m) for s in x]
    total = sum(exps)
    tiny = math.ulp(0.0)
    return Vector(max(e / total, tiny) for e in exps)


def linear_apply(weights, x):
    """Apply a linear layer (a bare matrix, no bias) to a vector."""
    xs = _components(x)
    if weights.cols != len(xs):
        raise DimensionError(
            f"matrix with {weights.cols} columns applied to dim {len(xs)}"
        )
    return Vector(sum(map(mul, row, xs)) for row in weights.row_tuples())


def mean_vector(vectors):
    """Component-wise arithmetic mean of equal-dimension vectors."""
    rows = [_components(v) for v in vectors]
    if not rows:
        raise EmptyInputError("mean of an empty collection")
    width = len(rows[0])
    for r in rows:
        if len(r) != width:
            raise DimensionError(f"mixed dims in mean: {len(r)} != {width}")
    n = len(rows)
    return Vector(sum(col) / n for col in zip(*rows))


def concat(vectors):
    """Join vectors end to end, preserving order."""
    rows = [_components(v) for v in vectors]
    if not rows:
        raise EmptyInputError("concat of an empty collection")
    return Vector(x for row in rows for x in row)


def split(v, dims):
    """Inverse of concat: cut a vector into pieces of the given dims."""
    xs = _components(v)
    dims = list(dims)
    if sum(dims) != len(xs):
        raise DimensionError(f"cannot split dim {len(xs)} into pieces {dims}")
    out = []
    start = 0
    for d in dims:
        out.append(Vector(xs[start : start + d]))
        start += d
    return out
