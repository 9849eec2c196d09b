"""Geometry of word senses in embedding space, plus linear probes.

Covers four analyses: sense centroids (means of same-sense occurrence
vectors), distances between senses and between a token and its
contextualized occurrences, a deterministic two-cluster separation of a
homonym's occurrences, and one-vs-rest logistic probes that read sense
classes and ambiguity off embeddings.
"""

import math
import random
import struct
import warnings
from dataclasses import dataclass
from operator import mul
from typing import NamedTuple

from . import linalg
from .errors import (
    DegenerateClassError,
    DegenerateClustersWarning,
    DimensionError,
    EmptyInputError,
    InsufficientDataError,
    ParseError,
    ZeroVectorError,
)
from .linalg import Matrix, Vector

__all__ = [
    "SenseInventory",
    "SenseReport",
    "ProbeModel",
    "ProbeConfig",
    "ProbeExample",
    "sense_centroid",
    "sense_distance",
    "contextual_shift",
    "homonym_separation",
    "inventory_report",
    "probe_train",
    "probe_predict",
    "ambiguity_flag",
    "probe_accuracy",
    "load_sense_tsv",
    "save_sense_tsv",
    "load_probe_tsv",
    "save_probe_tsv",
    "save_probe_model",
    "load_probe_model",
]

_PROBE_MAGIC = b"PRB1"

METRICS = ("cosine", "euclidean")


def _check_metric(metric):
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


@dataclass(frozen=True)
class SenseInventory:
    """All occurrence vectors of one word, grouped by sense name."""

    word: str
    senses: dict

    def __post_init__(self):
        if not self.senses:
            raise EmptyInputError("an inventory needs at least one sense")
        dims = set()
        clean = {}
        for name, occurrences in self.senses.items():
            occurrences = tuple(Vector(v) for v in occurrences)
            if not occurrences:
                raise EmptyInputError(f"sense {name!r} has no occurrences")
            dims.update(v.dim for v in occurrences)
            clean[name] = occurrences
        if len(dims) != 1:
            raise DimensionError(f"mixed occurrence dims: {sorted(dims)}")
        object.__setattr__(self, "senses", clean)

    @property
    def d(self):
        return next(iter(self.senses.values()))[0].dim


@dataclass(frozen=True)
class SenseReport:
    """Centroid geometry for one word's senses or clusters.

    ``pairwise_distances`` is symmetric with a zero diagonal;
    ``betweenness`` maps each centroid pair (i, j), i < j, to whether the
    word's token embedding sits at least as close to both centroids as the
    centroids sit to each other. Cosine distances live in [0, 2].
    """

    names: tuple
    centroids: tuple
    pairwise_distances: Matrix
    metric: str
    token_to_centroid: tuple = None
    betweenness: dict = None
    assignments: tuple = None
    purity: float = None
    degenerate: bool = False

    def __post_init__(self):
        k = len(self.centroids)
        m = self.pairwise_distances
        if len(self.names) != k or m.shape != (k, k):
            raise DimensionError("report fields disagree on the number of senses")
        rows = m.row_tuples()
        for i in range(k):
            if rows[i][i] != 0.0:
                raise ValueError("pairwise distance diagonal must be zero")
            for j in range(k):
                if abs(rows[i][j] - rows[j][i]) > 1e-12:
                    raise ValueError("pairwise distances must be symmetric")
                if self.metric == "cosine" and not -1e-12 <= rows[i][j] <= 2 + 1e-12:
                    raise ValueError("cosine distances must lie in [0, 2]")


def sense_centroid(occurrences):
    """Mean of the occurrence vectors of one sense."""
    occurrences = list(occurrences)
    if not occurrences:
        raise EmptyInputError("a centroid needs at least one occurrence")
    return linalg.mean_vector(occurrences)


def _distance(a, b, metric):
    if metric == "euclidean":
        return linalg.norm(Vector(a) - Vector(b))
    return 1.0 - linalg.cosine(a, b)


def sense_distance(c1, c2, metric="cosine"):
    """Distance between two sense centroids (cosine distance by default)."""
    _check_metric(metric)
    return _distance(c1, c2, metric)


def contextual_shift(token_emb, ctx_emb, metric="cosine"):
    """How far a contextualized occurrence moved from its token embedding.

    Larger shifts signal stronger context effects; idiomatic usage tends
    to shift further than literal usage.
    """
    _check_metric(metric)
    return _distance(token_emb, ctx_emb, metric)


def _norm_tuple(x):
    return math.sqrt(sum(map(mul, x, x)))


def _point_distance(x, xnorm, c, cnorm, metric):
    # distance between an occurrence and a centroid on raw tuples
    if metric == "euclidean":
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, c)))
    if xnorm == 0.0 or cnorm == 0.0:
        raise ZeroVectorError("cosine distance is undefined for zero-norm vectors")
    return 1.0 - sum(map(mul, x, c)) / (xnorm * cnorm)


def _mean_rows(points, members):
    d = len(points[0])
    acc = [0.0] * d
    for i in members:
        row = points[i]
        for j in range(d):
            acc[j] += row[j]
    inv = 1.0 / len(members)
    return tuple(a * inv for a in acc)


def _lloyd(points, norms, init_pair, metric, max_iter):
    """Two-centroid k-means from one starting pair; returns (assign, centroids, cost)."""
    n = len(points)
    centroids = [points[init_pair[0]], points[init_pair[1]]]
    assign = [-1] * n
    for _ in range(max_iter):
        cnorms = [_norm_tuple(c) for c in centroids]
        changed = False
        for i, x in enumerate(points):
            d0 = _point_distance(x, norms[i], centroids[0], cnorms[0], metric)
            d1 = _point_distance(x, norms[i], centroids[1], cnorms[1], metric)
            best = 0 if d0 <= d1 else 1
            if assign[i] != best:
                assign[i] = best
                changed = True
        members = ([i for i in range(n) if assign[i] == 0],
                   [i for i in range(n) if assign[i] == 1])
        # an emptied cluster keeps its previous centroid
        centroids = [
            _mean_rows(points, members[k]) if members[k] else centroids[k]
            for k in range(2)
        ]
        if not changed:
            break
    cnorms = [_norm_tuple(c) for c in centroids]
    cost = sum(
        _point_distance(x, norms[i], centroids[assign[i]], cnorms[assign[i]], metric)
        for i, x in enumerate(points)
    )
    return assign, centroids, cost


def _farthest_pair(points, norms, metric):
    best = None
    best_d = -1.0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            d = _point_distance(points[i], norms[i], points[j], norms[j], metric)
            if d > best_d:
                best_d = d
                best = (i, j)
    return best


def _purity(assign, gold_labels):
    labels = list(gold_labels)
    if len(labels) != len(assign):
        raise DimensionError(
            f"{len(labels)} gold labels for {len(assign)} occurrences"
        )
    if len(set(labels)) > 2:
        raise ValueError("gold labeling must be two-way")
    correct = 0
    for cluster in (0, 1):
        counts = {}
        for a, lab in zip(assign, labels):
            if a == cluster:
                counts[lab] = counts.get(lab, 0) + 1
        if counts:
            correct += max(counts.values())
    return correct / len(assign)


def homonym_separation(token_emb, occurrences, gold_labels=None, seed=0,
                       metric="cosine", restarts=10, max_iter=100):
    """Split a homonym's occurrence vectors into two sense clusters.

    Runs k-means with k=2: the first restart initializes centroids at the
    farthest occurrence pair, the remaining ``restarts - 1`` at seeded
    random distinct pairs; the run with the lowest within-cluster distance
    sum wins (first winner on ties). The report carries both centroids,
    their distance, the token embedding's distance to each, purity against
    ``gold_labels`` when given, and the betweenness flag: whether the token
    embedding is at least as similar to each centroid as the centroids are
    to each other.
    """
    _check_metric(metric)
    token = Vector(token_emb)
    points = [Vector(v) for v in occurrences]
    if len(points) < 4:
        raise InsufficientDataError(
            f"homonym separation needs at least 4 occurrences, got {len(points)}"
        )
    for p in points:
        if p.dim != token.dim:
            raise DimensionError(
                f"occurrence dim {p.dim} does not match token dim {token.dim}"
            )
    raw = [p.components for p in points]
    norms = [_norm_tuple(x) for x in raw]

    rng = random.Random(seed)
    n = len(raw)
    inits = [_farthest_pair(raw, norms, metric)]
    while len(inits) < restarts:
        i = rng.randrange(n)
        j = rng.randrange(n)
        if i != j:
            inits.append((i, j))

    best = None
    for pair in inits:
        assign, centroids, cost = _lloyd(raw, norms, pair, metric, max_iter)
        if best is None or cost < best[2] - 1e-12:
            best = (assign, centroids, cost)
    assign, centroids, _ = best

    c0, c1 = Vector(centroids[0]), Vector(centroids[1])
    dist = _distance(c0, c1, metric)
    degenerate = dist <= 1e-9
    if degenerate:
        warnings.warn(
            "clustering produced (near-)identical centroids",
            DegenerateClustersWarning,
            stacklevel=2,
        )
    t2c = (_distance(token, c0, metric), _distance(token, c1, metric))
    # under cosine this is exactly: cos(token, each centroid) >= cos(c0, c1)
    flag = t2c[0] <= dist and t2c[1] <= dist
    purity = None if gold_labels is None else _purity(assign, gold_labels)
    return SenseReport(
        names=("cluster-0", "cluster-1"),
        centroids=(c0, c1),
        pairwise_distances=Matrix([[0.0, dist], [dist, 0.0]]),
        metric=metric,
        token_to_centroid=t2c,
        betweenness={(0, 1): flag},
        assignments=tuple(assign),
        purity=purity,
        degenerate=degenerate,
    )


def inventory_report(inventory, token_emb=None, metric="cosine"):
    """Centroid geometry of a labeled sense inventory.

    Senses are ordered by name. When ``token_emb`` is given the report
    also carries token-to-centroid distances and per-pair betweenness.
    """
    _check_metric(metric)
    names = tuple(sorted(inventory.senses))
    centroids = tuple(sense_centroid(inventory.senses[n]) for n in names)
    k = len(names)
    rows = [[0.0] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            d = _distance(centroids[i], centroids[j], metric)
            rows[i][j] = rows[j][i] = d
    t2c = None
    flags = None
    if token_emb is not None:
        token = Vector(token_emb)
        t2c = tuple(_distance(token, c, metric) for c in centroids)
        flags = {}
        for i in range(k):
            for j in range(i + 1, k):
                flags[(i, j)] = t2c[i] <= rows[i][j] and t2c[j] <= rows[i][j]
    return SenseReport(
        names=names,
        centroids=centroids,
        pairwise_distances=Matrix(rows) if k > 1 else Matrix([[0.0]]),
        metric=metric,
        token_to_centroid=t2c,
        betweenness=flags,
    )


class ProbeExample(NamedTuple):
    token: str
    labels: frozenset
    vector: Vector


@dataclass(frozen=True)
class ProbeConfig:
    """Hyperparameters for probe training."""

    learning_rate: float = 0.5
    epochs: int = 200
    seed: int = 42

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


@dataclass(frozen=True)
class ProbeModel:
    """One-vs-rest linear classifiers: a weight vector and bias per class."""

    classes: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        if not self.classes:
            raise EmptyInputError("a probe needs at least one class")
        if not (len(self.classes) == len(self.weights) == len(self.biases)):
            raise DimensionError("classes, weights, and biases must align")
        d = self.weights[0].dim
        for w in self.weights:
            if w.dim != d:
                raise DimensionError("all class weights must share one dim")

    @property
    def d(self):
        return self.weights[0].dim


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _normalize_examples(examples):
    pairs = []
    for vec, labels in examples:
        if isinstance(labels, str):
            raise TypeError("labels must be a set of class names, not a string")
        pairs.append((Vector(vec), frozenset(labels)))
    if not pairs:
        raise EmptyInputError("probe training needs at least one example")
    d = pairs[0][0].dim
    for v, _ in pairs:
        if v.dim != d:
            raise DimensionError("probe examples must share one embedding dim")
    return pairs


def probe_train(examples, config=None):
    """Fit one logistic classifier per class on (vector, label-set) pairs.

    Classes are the sorted union of all labels; each classifier treats
    examples carrying its class as positives and everything else as
    negatives. Weights start at zero and follow seeded-shuffle SGD on the
    log loss, so a fixed config yields a fixed model. A class with no
    positives or no negatives is untrainable one-vs-rest and raises
    DegenerateClassError.
    """
    if config is None:
        config = ProbeConfig()
    pairs = _normalize_examples(examples)
    classes = sorted(set().union(*(labels for _, labels in pairs)))
    if len(classes) < 2:
        raise DegenerateClassError(
            f"probing needs at least 2 classes, got {len(classes)}"
        )
    n = len(pairs)
    for c in classes:
        positives = sum(1 for _, labels in pairs if c in labels)
        if positives == n:
            raise DegenerateClassError(f"class {c!r} has no negative examples")

    d = pairs[0][0].dim
    xs = [v.components for v, _ in pairs]
    ys = {c: [1.0 if c in labels else 0.0 for _, labels in pairs] for c in classes}
    weights = {c: [0.0] * d for c in classes}
    biases = {c: 0.0 for c in classes}

    rng = random.Random(config.seed)
    order = list(range(n))
    lr = config.learning_rate
    for _ in range(config.epochs):
        rng.shuffle(order)
        for k in order:
            x = xs[k]
            for c in classes:
                w = weights[c]
                g = _sigmoid(sum(map(mul, w, x)) + biases[c]) - ys[c][k]
                if g:
                    f = lr * g
                    w[:] = [wj - f * xj for wj, xj in zip(w, x)]
                    biases[c] -= f
    return ProbeModel(
        classes=tuple(classes),
        weights=tuple(Vector(weights[c]) for c in classes),
        biases=tuple(biases[c] for c in classes),
    )


def probe_scores(model, emb):
    """Sigmoid score per class, in model class order."""
    x = Vector(emb)
    if x.dim != model.d:
        raise DimensionError(f"embedding dim {x.dim} does not match probe {model.d}")
    return tuple(
        _sigmoid(linalg.dot(w, x) + b) for w, b in zip(model.weights, model.biases)
    )


def probe_predict(model, emb, threshold=0.5):
    """All classes whose score reaches the threshold (inclusive)."""
    scores = probe_scores(model, emb)
    return {c for c, s in zip(model.classes, scores) if s >= threshold}


def ambiguity_flag(model, emb, threshold=0.5):
    """True when the embedding is claimed by two or more sense classes."""
    return len(probe_predict(model, emb, threshold)) >= 2


def probe_accuracy(model, examples, threshold=0.5):
    """Fraction of examples whose predicted label set matches exactly."""
    pairs = _normalize_examples(examples)
    hits = sum(
        1 for v, labels in pairs if probe_predict(model, v, threshold) == labels
    )
    return hits / len(pairs)


def _parse_vector_fields(text, line_no):
    fields = text.split(" ")
    try:
        return Vector(float(f) for f in fields)
    except (ValueError, EmptyInputError) as exc:
        raise ParseError(f"bad embedding values: {exc}", line=line_no) from None


def _decode_lines(source):
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8: {exc}") from None
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_sense_tsv(source):
    """Parse `word<TAB>sense<TAB>x1 ... xD` lines into SenseInventory objects.

    Returns a dict keyed by word, preserving first-appearance order.
    """
    grouped = {}
    for i, line in enumerate(_decode_lines(source)):
        line_no = i + 1
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(
                f"expected 3 tab-separated columns, found {len(parts)}", line=line_no
            )
        word, sense, rest = parts
        if not word or not sense:
            raise ParseError("empty word or sense label", line=line_no)
        vec = _parse_vector_fields(rest, line_no)
        grouped.setdefault(word, {}).setdefault(sense, []).append(vec)
    if not grouped:
        raise ParseError("no occurrences found")
    out = {}
    for word, senses in grouped.items():
        try:
            out[word] = SenseInventory(word=word, senses=senses)
        except DimensionError as exc:
            raise ParseError(f"word {word!r}: {exc}") from None
    return out


def save_sense_tsv(inventories):
    """Serialize SenseInventory objects back to the TSV occurrence format."""
    rows = []
    for inv in inventories:
        for sense in inv.senses:
            for vec in inv.senses[sense]:
                values = " ".join(f"{x:.17g}" for x in vec)
                rows.append(f"{inv.word}\t{sense}\t{values}")
    rows.append("")
    return "\n".join(rows).encode("utf-8")


def load_probe_tsv(source):
    """Parse `token<TAB>labels<TAB>x1 ... xD` lines into ProbeExamples.

    Labels are comma-separated; an empty label column means the example
    is a negative for every class.
    """
    out = []
    for i, line in enumerate(_decode_lines(source)):
        line_no = i + 1
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(
                f"expected 3 tab-separated columns, found {len(parts)}", line=line_no
            )
        token, labels, rest = parts
        if not token:
            raise ParseError("empty token", line=line_no)
        label_set = frozenset(l for l in labels.split(",") if l)
        vec = _parse_vector_fields(rest, line_no)
        out.append(ProbeExample(token=token, labels=label_set, vector=vec))
    if not out:
        raise ParseError("no examples found")
    return out


def save_probe_tsv(examples):
    """Serialize ProbeExamples back to the TSV probe-dataset format."""
    rows = []
    for ex in examples:
        labels = ",".join(sorted(ex.labels))
        values = " ".join(f"{x:.17g}" for x in ex.vector)
        rows.append(f"{ex.token}\t{labels}\t{values}")
    rows.append("")
    return "\n".join(rows).encode("utf-8")


def save_probe_model(model):
    """Serialize a ProbeModel: per class, a name, f64 bias, and f64 weights."""
    parts = [_PROBE_MAGIC, struct.pack("<QQ", len(model.classes), model.d)]
    for c, w, b in zip(model.classes, model.weights, model.biases):
        name = c.encode("utf-8")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<d", b))
        parts.append(struct.pack(f"<{model.d}d", *w.components))
    return b"".join(parts)


def load_probe_model(source):
    """Rebuild a ProbeModel serialized by :func:`save_probe_model`."""
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    raw = bytes(raw)
    if raw[:4] != _PROBE_MAGIC:
        raise ParseError(f"bad magic: {raw[:4]!r}, expected {_PROBE_MAGIC!r}")
    if len(raw) < 20:
        raise ParseError("truncated header")
    k, d = struct.unpack_from("<QQ", raw, 4)
    if k < 1 or d < 1:
        raise ParseError(f"class count and dim must be positive, got {k} {d}")
    pos = 20
    classes, weights, biases = [], [], []
    for _ in range(k):
        if pos + 4 > len(raw):
            raise ParseError("truncated class name")
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + n + 8 + d * 8 > len(raw):
            raise ParseError("truncated class payload")
        try:
            classes.append(raw[pos : pos + n].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ParseError(f"class name is not UTF-8: {exc}") from None
        pos += n
        (b,) = struct.unpack_from("<d", raw, pos)
        pos += 8
        biases.append(b)
        weights.append(Vector(struct.unpack_from(f"<{d}d", raw, pos)))
        pos += d * 8
    if pos != len(raw):
        raise ParseError(f"{len(raw) - pos} trailing bytes after last class")
    return ProbeModel(
        classes=tuple(classes), weights=tuple(weights), biases=tuple(biases)
    )
