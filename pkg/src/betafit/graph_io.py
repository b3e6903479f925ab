"""Edge-list / degree-file ingestion and the degree histogram.

Everything downstream (objectives, Newton iterations, selection) runs on the
degree histogram, so this module is the only place that ever touches raw
edges.  All three containers are immutable after construction and safe to
share across concurrent fits.
"""

from __future__ import annotations

import gzip
import io
from array import array
from dataclasses import dataclass
from typing import IO, Iterator

import numpy as np

_GZIP_MAGIC = b"\x1f\x8b"


class EdgeListParseError(ValueError):
    """Malformed or empty input file."""


@dataclass(frozen=True)
class EdgeList:
    """Undirected simple graph stored as a deduplicated array of index pairs.

    ``edges`` has shape (E, 2) with ``edges[:, 0] < edges[:, 1]``, sorted
    lexicographically, no self-loops and no duplicates.  ``node_labels[i]``
    is the external name of internal node ``i``; ``None`` means labels are
    the stringified indices.
    """

    n: int
    edges: np.ndarray
    node_labels: tuple[str, ...] | None = None
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0

    def __post_init__(self) -> None:
        edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 1:
            raise ValueError("EdgeList needs at least one node")
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if (edges[:, 0] >= edges[:, 1]).any():
                raise ValueError("edges must satisfy u < v (no self-loops)")
            keys = edges[:, 0] * self.n + edges[:, 1]
            if (np.diff(keys) <= 0).any():
                raise ValueError("edges must be sorted and unique")
        if self.node_labels is not None and len(self.node_labels) != self.n:
            raise ValueError("node_labels length must equal n")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def label_of(self, i: int) -> str:
        return self.node_labels[i] if self.node_labels is not None else str(i)

    @classmethod
    def from_pairs(
        cls,
        pairs: np.ndarray,
        n: int | None = None,
        node_labels: tuple[str, ...] | None = None,
    ) -> "EdgeList":
        """Normalize an arbitrary (E, 2) int array: drop self-loops, dedup."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if n is None:
            if pairs.size == 0:
                raise ValueError("cannot infer node count from an empty pair array")
            n = int(pairs.max()) + 1
        n = int(n)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ValueError("edge endpoint out of range")
        loops = pairs[:, 0] == pairs[:, 1]
        n_loops = int(loops.sum())
        pairs = pairs[~loops]
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        keys = np.unique(lo * n + hi)
        n_dup = int(lo.shape[0] - keys.shape[0])
        edges = np.empty((keys.shape[0], 2), dtype=np.int64)
        np.floor_divide(keys, n, out=edges[:, 0])
        np.remainder(keys, n, out=edges[:, 1])
        return cls(
            n=n,
            edges=edges,
            node_labels=node_labels,
            dropped_self_loops=n_loops,
            dropped_duplicates=n_dup,
        )


@dataclass(frozen=True)
class DegreeSequence:
    """Per-node degrees, optionally carrying external node labels."""

    degrees: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        d = np.ascontiguousarray(self.degrees, dtype=np.int64)
        n = d.shape[0]
        if n < 1:
            raise ValueError("empty degree sequence")
        if d.min() < 0:
            raise ValueError("degrees must be non-negative")
        if d.max() > n - 1:
            raise ValueError(f"degree {int(d.max())} exceeds n-1={n - 1}")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels length must equal number of degrees")
        d.setflags(write=False)
        object.__setattr__(self, "degrees", d)

    @property
    def n(self) -> int:
        return int(self.degrees.shape[0])


@dataclass(frozen=True)
class DegreeHistogram:
    """The m distinct observed degrees with multiplicities.

    ``degrees`` is strictly increasing, ``counts`` positive with
    ``counts.sum() == n``, and ``node_to_class[i]`` is the class index of
    node ``i``.  This is the reduced coordinate system every fit runs in.
    """

    n: int
    degrees: np.ndarray
    counts: np.ndarray
    node_to_class: np.ndarray

    def __post_init__(self) -> None:
        degrees = np.ascontiguousarray(self.degrees, dtype=np.int64)
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        n2c = np.ascontiguousarray(self.node_to_class, dtype=np.int64)
        if degrees.ndim != 1 or degrees.shape != counts.shape:
            raise ValueError("degrees and counts must be 1-d and equal length")
        if degrees.shape[0] == 0:
            raise ValueError("histogram needs at least one class")
        if (np.diff(degrees) <= 0).any():
            raise ValueError("class degrees must be strictly increasing")
        if (counts <= 0).any():
            raise ValueError("class counts must be positive")
        if int(counts.sum()) != self.n or n2c.shape[0] != self.n:
            raise ValueError("class counts must sum to n")
        if degrees.max() > self.n - 1:
            raise ValueError("degree exceeds n-1")
        for a in (degrees, counts, n2c):
            a.setflags(write=False)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "node_to_class", n2c)

    @property
    def m(self) -> int:
        return int(self.degrees.shape[0])

    @property
    def d_max(self) -> int:
        return int(self.degrees[-1])

    @property
    def total_degree(self) -> int:
        return int(self.counts @ self.degrees)

    def node_degrees(self) -> np.ndarray:
        """Recover the length-n degree vector."""
        return self.degrees[self.node_to_class]


def _text_lines(source: str | IO) -> Iterator[str]:
    """Stream text lines from a path or a (binary/text) file object.

    Gzip input is detected by magic bytes, not by file extension.
    """
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, str):
            yield from io.StringIO(data)
            return
        if data[:2] == _GZIP_MAGIC:
            data = gzip.decompress(data)
        yield from io.StringIO(data.decode("utf-8"))
        return
    fh = open(source, "rb")
    try:
        buffered = io.BufferedReader(fh)
        if buffered.peek(2)[:2] == _GZIP_MAGIC:
            wrapped = io.TextIOWrapper(
                gzip.GzipFile(fileobj=buffered), encoding="utf-8"
            )
        else:
            wrapped = io.TextIOWrapper(buffered, encoding="utf-8")
        yield from wrapped
    finally:
        fh.close()


def read_edge_list(source: str | IO, num_nodes: int | None = None) -> EdgeList:
    """Parse a whitespace-separated "u v" edge list into an :class:`EdgeList`.

    Labels are arbitrary strings mapped to dense 0-based indices in
    first-appearance order.  Lines starting with '#' are comments.
    Self-loops and duplicate edges are dropped with counters, and
    ``num_nodes`` may declare trailing isolated nodes an edge list cannot
    express on its own.
    """
    labels: dict[str, int] = {}
    us = array("q")
    vs = array("q")
    n_loops = 0
    for lineno, raw in enumerate(_text_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(
                f"line {lineno}: expected two whitespace-separated tokens, "
                f"got {len(parts)}"
            )
        a = labels.setdefault(parts[0], len(labels))
        b = labels.setdefault(parts[1], len(labels))
        if a == b:
            n_loops += 1
            continue
        us.append(a)
        vs.append(b)
    if not labels:
        raise EdgeListParseError("empty input: no edges found")
    n_obs = len(labels)
    if num_nodes is None:
        n = n_obs
    else:
        if num_nodes < n_obs:
            raise EdgeListParseError(
                f"num_nodes={num_nodes} smaller than {n_obs} observed nodes"
            )
        n = int(num_nodes)
    label_list = list(labels)
    label_list.extend(str(i) for i in range(n_obs, n))

    if len(us):
        u = np.frombuffer(us, dtype=np.int64)
        v = np.frombuffer(vs, dtype=np.int64)
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        keys = np.unique(lo * n + hi)
        n_dup = int(u.shape[0] - keys.shape[0])
        edges = np.empty((keys.shape[0], 2), dtype=np.int64)
        np.floor_divide(keys, n, out=edges[:, 0])
        np.remainder(keys, n, out=edges[:, 1])
    else:
        n_dup = 0
        edges = np.empty((0, 2), dtype=np.int64)
    return EdgeList(
        n=n,
        edges=edges,
        node_labels=tuple(label_list),
        dropped_self_loops=n_loops,
        dropped_duplicates=n_dup,
    )


def read_degree_file(source: str | IO) -> DegreeSequence:
    """Parse a degree file with lines "degree" or "label degree".

    Degree-only inputs cover data releases that disclose node degrees but
    not the adjacency itself.  The token layout must be consistent across
    lines; degrees are validated as integers in [0, n-1].
    """
    mode: int | None = None
    degrees: list[int] = []
    labels: list[str] = []
    for lineno, raw in enumerate(_text_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if mode is None:
            if len(parts) not in (1, 2):
                raise EdgeListParseError(
                    f"line {lineno}: expected 'degree' or 'label degree'"
                )
            mode = len(parts)
        elif len(parts) != mode:
            raise EdgeListParseError(
                f"line {lineno}: inconsistent token count (expected {mode})"
            )
        try:
            d = int(parts[-1])
        except ValueError:
            raise EdgeListParseError(
                f"line {lineno}: degree must be an integer, got {parts[-1]!r}"
            ) from None
        if d < 0:
            raise EdgeListParseError(f"line {lineno}: negative degree {d}")
        degrees.append(d)
        if mode == 2:
            labels.append(parts[0])
    if not degrees:
        raise EdgeListParseError("empty input: no degrees found")
    n = len(degrees)
    arr = np.asarray(degrees, dtype=np.int64)
    if arr.max() > n - 1:
        bad = int(np.argmax(arr))
        raise EdgeListParseError(
            f"degree {int(arr[bad])} at entry {bad + 1} exceeds n-1={n - 1}"
        )
    return DegreeSequence(degrees=arr, labels=tuple(labels) if labels else None)


def degrees_of(g: EdgeList) -> DegreeSequence:
    """Degree of every node; linear in the edge count."""
    counts = np.bincount(g.edges.ravel(), minlength=g.n)
    return DegreeSequence(degrees=counts.astype(np.int64), labels=g.node_labels)


def build_histogram(d: DegreeSequence | np.ndarray) -> DegreeHistogram:
    """Group nodes by observed degree into the reduced coordinate system."""
    degrees = d.degrees if isinstance(d, DegreeSequence) else np.asarray(d, np.int64)
    uniq, inverse, counts = np.unique(degrees, return_inverse=True, return_counts=True)
    return DegreeHistogram(
        n=int(degrees.shape[0]),
        degrees=uniq,
        counts=counts.astype(np.int64),
        node_to_class=inverse.astype(np.int64),
    )


def as_degree_histogram(X, num_nodes: int | None = None) -> DegreeHistogram:
    """Coerce estimator input into a :class:`DegreeHistogram`.

    Accepts a DegreeHistogram, DegreeSequence or EdgeList, a 1-d integer
    array of degrees, or a 2-d (E, 2) integer array of edge pairs (node
    count inferred as max index + 1 unless ``num_nodes`` is given).
    """
    if isinstance(X, DegreeHistogram):
        return X
    if isinstance(X, DegreeSequence):
        return build_histogram(X)
    if isinstance(X, EdgeList):
        return build_histogram(degrees_of(X))
    arr = np.asarray(X)
    if arr.ndim == 1:
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.array_equal(arr, arr.astype(np.int64)):
                raise ValueError("degree vector must contain integers")
            arr = arr.astype(np.int64)
        return build_histogram(DegreeSequence(degrees=arr))
    if arr.ndim == 2 and arr.shape[1] == 2:
        g = EdgeList.from_pairs(arr, n=num_nodes)
        return build_histogram(degrees_of(g))
    raise TypeError(
        "expected an EdgeList, DegreeSequence, DegreeHistogram, 1-d degree "
        f"array or (E, 2) edge array, got shape {getattr(arr, 'shape', None)}"
    )
