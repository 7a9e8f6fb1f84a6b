"""Core value types, model initialization, and persistence.

Matrices follow one orientation throughout the package:

* co-occurrence ``D`` and its negative-sampling bound ``Q`` are
  ``contexts x labels``,
* attribute association ``A`` and its observation mask ``I`` are
  ``labels x attributes``,
* embedding factors ``W`` (labels), ``C`` (contexts) and ``U``
  (attributes) each store one column per vocabulary entry, so they are
  ``dim x count``.

All value objects are immutable after construction: array payloads are
copied to C-ordered float64 and marked read-only.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, UnsupportedVersionError

_MODEL_MAGIC = b"PHCLE1"
_MODEL_MAGIC_GENERAL = b"PHCLG1"

# Uniform half-width of the default random initialization.
DEFAULT_INIT_SCHEME = "uniform_random(0.1)"


def _frozen_array(x, name, *, ndim=2):
    arr = np.array(x, dtype=np.float64, order="C", copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def format_float(x: float) -> str:
    """Shortest decimal string that parses back to exactly ``x``."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _check_name(name: str, kind: str) -> None:
    if not name:
        raise ValueError(f"empty {kind} name")
    if any(ch in name for ch in "\t\n\r"):
        raise ValueError(f"{kind} name {name!r} contains a tab or newline")


@dataclass(frozen=True)
class VocabularyMaps:
    """Bijective name<->index maps for labels, contexts, and attributes."""

    labels: tuple[str, ...]
    contexts: tuple[str, ...]
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "contexts", tuple(self.contexts))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        for kind, names in (
            ("label", self.labels),
            ("context", self.contexts),
            ("attribute", self.attributes),
        ):
            for name in names:
                _check_name(name, kind)
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {kind} names")
        object.__setattr__(self, "_label_idx", {n: i for i, n in enumerate(self.labels)})
        object.__setattr__(self, "_context_idx", {n: i for i, n in enumerate(self.contexts)})
        object.__setattr__(self, "_attribute_idx", {n: i for i, n in enumerate(self.attributes)})

    def label_index(self, name: str) -> int:
        try:
            return self._label_idx[name]
        except KeyError:
            raise ValueError(f"label {name!r} unknown") from None

    def context_index(self, name: str) -> int:
        try:
            return self._context_idx[name]
        except KeyError:
            raise ValueError(f"context {name!r} unknown") from None

    def attribute_index(self, name: str) -> int:
        try:
            return self._attribute_idx[name]
        except KeyError:
            raise ValueError(f"attribute {name!r} unknown") from None


@dataclass(frozen=True, eq=False)
class CooccurrenceMatrix:
    """Label/context co-occurrence counts, ``contexts x labels``, >= 0."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, "cooccurrence matrix")
        if not np.isfinite(arr).all():
            raise ValueError("cooccurrence matrix contains non-finite entries")
        if (arr < 0).any():
            raise ValueError("cooccurrence matrix contains negative entries")
        object.__setattr__(self, "values", arr)

    def check_shapes(self, vocab: VocabularyMaps) -> None:
        expect = (len(vocab.contexts), len(vocab.labels))
        if self.values.shape != expect:
            raise ValueError(
                f"cooccurrence shape {self.values.shape} does not match "
                f"vocabulary (contexts={expect[0]}, labels={expect[1]})"
            )


@dataclass(frozen=True, eq=False)
class NegativeBoundMatrix:
    """Per-entry negative-sampling budget, same orientation as the counts."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, "negative bound matrix")
        if not np.isfinite(arr).all():
            raise ValueError("negative bound matrix contains non-finite entries")
        if (arr < 0).any():
            raise ValueError("negative bound matrix contains negative entries")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True, eq=False)
class AttributeContext:
    """Attribute associations with a binary observation mask.

    Entries of ``assoc`` where ``mask`` is 0 carry no information: any
    value (even a non-finite one) is permitted there and must never
    influence a computation.
    """

    assoc: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        assoc = np.array(self.assoc, dtype=np.float64, order="C", copy=True)
        if assoc.ndim != 2:
            raise ValueError(f"assoc must be 2-dimensional, got shape {assoc.shape}")
        assoc.setflags(write=False)
        mask = _frozen_array(self.mask, "mask")
        if mask.shape != assoc.shape:
            raise ValueError(f"mask shape {mask.shape} does not match assoc shape {assoc.shape}")
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")
        observed = assoc[mask == 1.0]
        if not np.isfinite(observed).all():
            raise ValueError("assoc contains non-finite observed entries")
        object.__setattr__(self, "assoc", assoc)
        object.__setattr__(self, "mask", mask)

    def check_shapes(self, vocab: VocabularyMaps) -> None:
        expect = (len(vocab.labels), len(vocab.attributes))
        if self.assoc.shape != expect:
            raise ValueError(
                f"attribute table shape {self.assoc.shape} does not match "
                f"vocabulary (labels={expect[0]}, attributes={expect[1]})"
            )


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    """The three learned factors sharing one embedding dimension."""

    W: np.ndarray
    C: np.ndarray
    U: np.ndarray
    dim: int

    def __post_init__(self):
        for name in ("W", "C", "U"):
            arr = _frozen_array(getattr(self, name), name)
            if not np.isfinite(arr).all():
                raise ValueError(f"factor {name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        if self.dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        for name in ("W", "C", "U"):
            if getattr(self, name).shape[0] != self.dim:
                raise ValueError(f"factor {name} has {getattr(self, name).shape[0]} rows, expected dim={self.dim}")

    def check_shapes(self, vocab: VocabularyMaps) -> None:
        for name, count, kind in (
            ("W", len(vocab.labels), "labels"),
            ("C", len(vocab.contexts), "contexts"),
            ("U", len(vocab.attributes), "attributes"),
        ):
            if getattr(self, name).shape[1] != count:
                raise ValueError(
                    f"factor {name} has {getattr(self, name).shape[1]} columns, "
                    f"vocabulary has {count} {kind}"
                )


@dataclass(frozen=True, eq=False)
class GeneralizedEmbeddingModel:
    """Shared label factor with one context factor per relational context
    and one attribute factor per descriptive context."""

    W: np.ndarray
    Cs: tuple[np.ndarray, ...]
    Us: tuple[np.ndarray, ...]
    dim: int

    def __post_init__(self):
        W = _frozen_array(self.W, "W")
        if not np.isfinite(W).all():
            raise ValueError("factor W contains non-finite entries")
        object.__setattr__(self, "W", W)
        for attr in ("Cs", "Us"):
            mats = []
            for i, m in enumerate(getattr(self, attr)):
                arr = _frozen_array(m, f"{attr[0]}[{i}]")
                if not np.isfinite(arr).all():
                    raise ValueError(f"factor {attr[0]}[{i}] contains non-finite entries")
                mats.append(arr)
            object.__setattr__(self, attr, tuple(mats))
        if self.dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        for arr in (self.W, *self.Cs, *self.Us):
            if arr.shape[0] != self.dim:
                raise ValueError("all factors must share the embedding dimension")


@dataclass(frozen=True)
class GeneralizedVocabulary:
    """Names for a generalized model: one context list per relational
    context and one attribute list per descriptive context."""

    labels: tuple[str, ...]
    context_lists: tuple[tuple[str, ...], ...]
    attribute_lists: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "context_lists", tuple(tuple(c) for c in self.context_lists))
        object.__setattr__(self, "attribute_lists", tuple(tuple(a) for a in self.attribute_lists))
        for name in self.labels:
            _check_name(name, "label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate label names")


def _simplex_weights(values, name, *, require_nonnegative):
    weights = tuple(float(v) for v in values)
    if not weights:
        raise ValueError(f"{name} must contain at least one weight")
    if require_nonnegative and any(w < 0 for w in weights):
        raise ValueError(f"{name} weights must be >= 0")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"{name} weights must sum to 1, got {sum(weights)!r}")
    return weights


@dataclass(frozen=True)
class HyperParams:
    """Training knobs. ``lambda1`` weighs the descriptive misfit,
    ``lambda2`` the l1 penalty, and ``lambda3`` the l2 penalty."""

    lambda1: float = 1.0
    lambda2: float = 0.01
    lambda3: float = 0.01
    negative_samples: int = 10
    step_size: float = 1e-5
    outer_iters: int = 50
    inner_steps_c: int = 5
    inner_steps_w: int = 5
    inner_max_iter: int = 50
    tolerance: float = 1e-4
    seed: int = 0
    init_scheme: str = DEFAULT_INIT_SCHEME
    dim: int = 100
    alpha: tuple[float, ...] = (1.0,)
    beta: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.negative_samples < 0:
            raise ValueError("negative_samples must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        for name in ("outer_iters", "inner_steps_c", "inner_steps_w", "inner_max_iter", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        parse_init_scheme(self.init_scheme)
        object.__setattr__(
            self, "alpha", _simplex_weights(self.alpha, "alpha", require_nonnegative=True)
        )
        # A negative descriptive weight would make the smooth subproblem
        # unbounded below, so nonnegativity is enforced here as well.
        object.__setattr__(
            self, "beta", _simplex_weights(self.beta, "beta", require_nonnegative=True)
        )


_INIT_SCHEME_RE = re.compile(r"uniform_random\(\s*([^)\s]+)\s*\)")


def parse_init_scheme(scheme: str) -> tuple[str, float]:
    """Split an init scheme string into its kind and scale.

    Accepted forms: ``ones`` and ``uniform_random(<scale>)``.
    """
    s = scheme.strip()
    if s == "ones":
        return "ones", 0.0
    m = _INIT_SCHEME_RE.fullmatch(s)
    if m:
        try:
            scale = float(m.group(1))
        except ValueError:
            raise ValueError(f"bad init scale in {scheme!r}") from None
        if not np.isfinite(scale) or scale < 0:
            raise ValueError(f"init scale must be a finite nonnegative number, got {scheme!r}")
        return "uniform_random", scale
    raise ValueError(f"unknown init scheme {scheme!r} (expected 'ones' or 'uniform_random(scale)')")


def _draw_factor(kind, scale, rng, shape):
    if kind == "ones":
        return np.ones(shape)
    return rng.uniform(-scale, scale, size=shape)


def init_model(
    vocab: VocabularyMaps,
    dim: int,
    scheme: str = DEFAULT_INIT_SCHEME,
    seed: int = 0,
) -> EmbeddingModel:
    """Deterministically initialize the three factors.

    ``uniform_random(s)`` draws i.i.d. uniform entries from [-s, s] with a
    seeded generator; the draw order is W, then C, then U, so identical
    inputs always produce bitwise-identical models.
    """
    if dim < 1:
        raise ValueError("embedding dimension must be >= 1")
    if not vocab.labels or not vocab.contexts:
        raise ValueError("vocabulary must contain at least one label and one context")
    kind, scale = parse_init_scheme(scheme)
    rng = np.random.default_rng(seed)
    W = _draw_factor(kind, scale, rng, (dim, len(vocab.labels)))
    C = _draw_factor(kind, scale, rng, (dim, len(vocab.contexts)))
    U = _draw_factor(kind, scale, rng, (dim, len(vocab.attributes)))
    return EmbeddingModel(W=W, C=C, U=U, dim=dim)


# ---------------------------------------------------------------------------
# Text embedding persistence


def save_embeddings(model: EmbeddingModel | GeneralizedEmbeddingModel, labels, path) -> None:
    """Write label vectors as text: a "count dim" header, then one
    "name v1 ... vn" line per label at full round-trip precision."""
    labels = tuple(labels)
    if len(labels) != model.W.shape[1]:
        raise ValueError(f"{len(labels)} names for {model.W.shape[1]} label vectors")
    for name in labels:
        _check_name(name, "label")
        if any(ch.isspace() for ch in name):
            raise ValueError(f"label name {name!r} contains whitespace, not storable in text format")
    lines = [f"{len(labels)} {model.dim}"]
    for j, name in enumerate(labels):
        vec = " ".join(format_float(v) for v in model.W[:, j])
        lines.append(f"{name} {vec}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Read the text embedding format back into an ordered name->vector map."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty embedding file", path=path, line=1)
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError(f"header must be 'count dim', got {lines[0]!r}", path=path, line=1)
    try:
        count, dim = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError(f"non-integer header {lines[0]!r}", path=path, line=1) from None
    if count < 0 or dim < 0:
        raise ParseError("header counts must be >= 0", path=path, line=1)
    if len(lines) - 1 != count:
        lineno = min(len(lines), count) + 1
        raise ParseError(
            f"header promises {count} rows, file has {len(lines) - 1}", path=path, line=lineno
        )
    out: dict[str, np.ndarray] = {}
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise ParseError(f"expected 1 name and {dim} values, got {len(parts)} fields", path=path, line=i)
        name = parts[0]
        if name in out:
            raise ParseError(f"duplicate label {name!r}", path=path, line=i)
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError:
            raise ParseError(f"non-numeric value in row for {name!r}", path=path, line=i) from None
        out[name] = vec
    return out


# ---------------------------------------------------------------------------
# Binary model persistence


class _Writer:
    def __init__(self):
        self.chunks = []

    def raw(self, b: bytes):
        self.chunks.append(b)

    def u64(self, v: int):
        self.chunks.append(struct.pack("<Q", v))

    def i64(self, v: int):
        self.chunks.append(struct.pack("<q", v))

    def f64(self, v: float):
        self.chunks.append(struct.pack("<d", v))

    def matrix(self, arr: np.ndarray):
        self.chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def string(self, s: str):
        b = s.encode("utf-8")
        self.u64(len(b))
        self.raw(b)

    def names(self, names):
        self.u64(len(names))
        for n in names:
            self.string(n)

    def floats(self, values):
        self.u64(len(values))
        for v in values:
            self.f64(v)

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError("truncated model file", path=self.path)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u64(self) -> int:
        return struct.unpack("<Q", self.raw(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.raw(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.raw(8))[0]

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        buf = self.raw(rows * cols * 8)
        return np.frombuffer(buf, dtype="<f8").reshape(rows, cols).astype(np.float64)

    def string(self) -> str:
        n = self.u64()
        try:
            return self.raw(n).decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("invalid UTF-8 in name table", path=self.path) from None

    def names(self) -> tuple[str, ...]:
        return tuple(self.string() for _ in range(self.u64()))

    def floats(self) -> tuple[float, ...]:
        return tuple(self.f64() for _ in range(self.u64()))

    def expect_end(self):
        if self.pos != len(self.data):
            raise ParseError("trailing bytes after model payload", path=self.path)


def _write_hyper(w: _Writer, hyper: HyperParams):
    for v in (hyper.lambda1, hyper.lambda2, hyper.lambda3, hyper.step_size, hyper.tolerance):
        w.f64(v)
    for v in (
        hyper.negative_samples,
        hyper.outer_iters,
        hyper.inner_steps_c,
        hyper.inner_steps_w,
        hyper.inner_max_iter,
        hyper.seed,
        hyper.dim,
    ):
        w.i64(v)
    w.string(hyper.init_scheme)
    w.floats(hyper.alpha)
    w.floats(hyper.beta)


def _read_hyper(r: _Reader) -> HyperParams:
    lambda1, lambda2, lambda3, step_size, tolerance = (r.f64() for _ in range(5))
    (negative_samples, outer_iters, inner_steps_c, inner_steps_w,
     inner_max_iter, seed, dim) = (r.i64() for _ in range(7))
    init_scheme = r.string()
    alpha = r.floats()
    beta = r.floats()
    return HyperParams(
        lambda1=lambda1, lambda2=lambda2, lambda3=lambda3,
        negative_samples=negative_samples, step_size=step_size,
        outer_iters=outer_iters, inner_steps_c=inner_steps_c,
        inner_steps_w=inner_steps_w, inner_max_iter=inner_max_iter,
        tolerance=tolerance, seed=seed, init_scheme=init_scheme, dim=dim,
        alpha=alpha, beta=beta,
    )


def save_model(path, model, vocab, hyper: HyperParams) -> None:
    """Serialize a trained model, its vocabulary, and its hyperparameters.

    Layout: a 6-byte magic, little-endian uint64 dimensions, row-major
    float64 factor payloads, length-prefixed UTF-8 name tables, then the
    hyperparameter block. The round-trip is bitwise lossless.
    """
    w = _Writer()
    if isinstance(model, EmbeddingModel):
        if not isinstance(vocab, VocabularyMaps):
            raise ValueError("single-context models require VocabularyMaps")
        model.check_shapes(vocab)
        w.raw(_MODEL_MAGIC)
        w.u64(model.dim)
        w.u64(len(vocab.labels))
        w.u64(len(vocab.contexts))
        w.u64(len(vocab.attributes))
        w.matrix(model.W)
        w.matrix(model.C)
        w.matrix(model.U)
        w.names(vocab.labels)
        w.names(vocab.contexts)
        w.names(vocab.attributes)
    elif isinstance(model, GeneralizedEmbeddingModel):
        if not isinstance(vocab, GeneralizedVocabulary):
            raise ValueError("generalized models require GeneralizedVocabulary")
        if len(vocab.context_lists) != len(model.Cs) or len(vocab.attribute_lists) != len(model.Us):
            raise ValueError("vocabulary context counts do not match model factors")
        w.raw(_MODEL_MAGIC_GENERAL)
        w.u64(model.dim)
        w.u64(len(vocab.labels))
        w.u64(len(model.Cs))
        w.u64(len(model.Us))
        w.matrix(model.W)
        w.names(vocab.labels)
        for C, names in zip(model.Cs, vocab.context_lists):
            if C.shape[1] != len(names):
                raise ValueError("context name list does not match factor width")
            w.u64(C.shape[1])
            w.matrix(C)
            w.names(names)
        for U, names in zip(model.Us, vocab.attribute_lists):
            if U.shape[1] != len(names):
                raise ValueError("attribute name list does not match factor width")
            w.u64(U.shape[1])
            w.matrix(U)
            w.names(names)
    else:
        raise ValueError(f"cannot serialize {type(model).__name__}")
    _write_hyper(w, hyper)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_model(path):
    """Read a model file back. Returns ``(model, vocab, hyper)``.

    Raises UnsupportedVersionError for a known family with an unknown
    version digit, ParseError for anything else malformed. A truncated
    file never yields a partial model.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    magic = r.raw(6)
    for known in (_MODEL_MAGIC, _MODEL_MAGIC_GENERAL):
        if magic[:5] == known[:5] and magic != known:
            raise UnsupportedVersionError(
                f"{path}: model format version {magic!r} not supported (expected {known!r})"
            )
    if magic == _MODEL_MAGIC:
        dim = r.u64()
        n_labels = r.u64()
        n_contexts = r.u64()
        n_attrs = r.u64()
        W = r.matrix(dim, n_labels)
        C = r.matrix(dim, n_contexts)
        U = r.matrix(dim, n_attrs)
        labels = r.names()
        contexts = r.names()
        attributes = r.names()
        hyper = _read_hyper(r)
        r.expect_end()
        if len(labels) != n_labels or len(contexts) != n_contexts or len(attributes) != n_attrs:
            raise ParseError("name table sizes disagree with header", path=path)
        vocab = VocabularyMaps(labels=labels, contexts=contexts, attributes=attributes)
        return EmbeddingModel(W=W, C=C, U=U, dim=dim), vocab, hyper
    if magic == _MODEL_MAGIC_GENERAL:
        dim = r.u64()
        n_labels = r.u64()
        n_rel = r.u64()
        n_desc = r.u64()
        W = r.matrix(dim, n_labels)
        labels = r.names()
        if len(labels) != n_labels:
            raise ParseError("label table size disagrees with header", path=path)
        Cs, context_lists = [], []
        for _ in range(n_rel):
            cols = r.u64()
            Cs.append(r.matrix(dim, cols))
            names = r.names()
            if len(names) != cols:
                raise ParseError("context table size disagrees with factor width", path=path)
            context_lists.append(names)
        Us, attribute_lists = [], []
        for _ in range(n_desc):
            cols = r.u64()
            Us.append(r.matrix(dim, cols))
            names = r.names()
            if len(names) != cols:
                raise ParseError("attribute table size disagrees with factor width", path=path)
            attribute_lists.append(names)
        hyper = _read_hyper(r)
        r.expect_end()
        model = GeneralizedEmbeddingModel(W=W, Cs=tuple(Cs), Us=tuple(Us), dim=dim)
        vocab = GeneralizedVocabulary(
            labels=labels,
            context_lists=tuple(context_lists),
            attribute_lists=tuple(attribute_lists),
        )
        return model, vocab, hyper
    raise ParseError(f"not a model file (magic {magic!r})", path=path)
