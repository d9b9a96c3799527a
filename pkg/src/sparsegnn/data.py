"""Graph and feature file I/O, and seeded synthetic datasets.

Graphs are Matrix Market coordinate files. Features, labels and masks are
whitespace-separated text with a count header::

    features:  "n k" then n lines of k numbers
    labels:    "n"   then n integers
    mask:      "n"   then n values in {0, 1}

Random draws use numpy's PCG64 generator, seeded explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .sparse import DEFAULT_DTYPE, CsrMatrix, csr_from_arrays

_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric")


@dataclass(frozen=True)
class Dataset:
    adjacency: CsrMatrix
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    name: str = ""

    def __post_init__(self):
        n = self.adjacency.n_rows
        if self.adjacency.n_cols != n:
            raise ConfigError(f"adjacency must be square, got {self.adjacency.shape}")
        if self.features.shape[0] != n or self.labels.shape != (n,) or self.train_mask.shape != (n,):
            raise ConfigError(
                f"{n} nodes but features {self.features.shape}, labels {self.labels.shape}, "
                f"mask {self.train_mask.shape}"
            )

    @property
    def n_nodes(self) -> int:
        return self.adjacency.n_rows

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from None


def load_mtx(path, dtype=DEFAULT_DTYPE) -> CsrMatrix:
    """Read a Matrix Market coordinate file (real/integer/pattern, general/symmetric)."""
    lines = _read_lines(path)
    if not lines:
        raise ParseError("empty file", 1, path)
    banner = lines[0].split()
    if len(banner) != 5 or banner[0] != "%%MatrixMarket" or banner[1].lower() != "matrix":
        raise ParseError(f"bad header {lines[0]!r}", 1, path)
    fmt, field, symmetry = (t.lower() for t in banner[2:])
    if fmt != "coordinate":
        raise ParseError(f"only coordinate format is supported, got {fmt!r}", 1, path)
    if field not in _FIELDS:
        raise ParseError(f"unsupported field {field!r}", 1, path)
    if symmetry not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry {symmetry!r}", 1, path)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        line = lines[lineno - 1].strip()
        if line and not line.startswith("%"):
            size = line.split()
            break
    if size is None:
        raise ParseError("missing size line", lineno, path)
    try:
        n_rows, n_cols, nnz = (int(t) for t in size)
    except ValueError:
        raise ParseError(f"size line must be 'rows cols nnz', got {' '.join(size)!r}", lineno, path) from None
    if min(n_rows, n_cols, nnz) < 0:
        raise ParseError("negative size", lineno, path)
    if symmetry == "symmetric" and n_rows != n_cols:
        raise ParseError(f"symmetric matrix must be square, got {n_rows}x{n_cols}", lineno, path)

    width = 2 if field == "pattern" else 3
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz, dtype=np.float64)
    count = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        line = lines[lineno - 1]
        tokens = line.split()
        if not tokens or tokens[0].startswith("%"):
            continue
        if count == nnz:
            raise ParseError(f"more than {nnz} entries", lineno, path)
        if len(tokens) != width:
            raise ParseError(f"expected {width} fields for {field} entries, got {len(tokens)}", lineno, path)
        try:
            i, j = int(tokens[0]), int(tokens[1])
            if width == 3:
                vals[count] = int(tokens[2]) if field == "integer" else float(tokens[2])
        except ValueError:
            raise ParseError(f"non-numeric entry {line.strip()!r}", lineno, path) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise ParseError(f"index ({i}, {j}) outside {n_rows}x{n_cols}", lineno, path)
        rows[count], cols[count] = i - 1, j - 1
        count += 1
    if count != nnz:
        raise ParseError(f"header declares {nnz} entries, found {count}", len(lines), path)
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return csr_from_arrays(n_rows, n_cols, rows, cols, vals.astype(dtype), dtype)


def write_mtx(path, a: CsrMatrix, comment: str | None = None) -> None:
    """Write ``a`` as a general real coordinate file (shortest round-trip decimals)."""
    out = ["%%MatrixMarket matrix coordinate real general"]
    if comment:
        out += [f"% {line}" for line in comment.splitlines()]
    out.append(f"{a.n_rows} {a.n_cols} {a.nnz}")
    rows = a.row_ids() + 1
    cols = a.col_idx.astype(np.int64) + 1
    out += [f"{i} {j} {float(v)!r}" for i, j, v in zip(rows.tolist(), cols.tolist(), a.values.tolist())]
    Path(path).write_text("\n".join(out) + "\n")


def _content_lines(path):
    """Nonblank lines with their 1-based numbers."""
    return [(n, line.split()) for n, line in enumerate(_read_lines(path), start=1) if line.strip()]


def _header(lines, path, fields: int) -> tuple[int, ...]:
    if not lines:
        raise ParseError("empty file", 1, path)
    lineno, tokens = lines[0]
    try:
        values = tuple(int(t) for t in tokens)
    except ValueError:
        raise ParseError(f"bad header {' '.join(tokens)!r}", lineno, path) from None
    if len(values) != fields or min(values) < 0:
        raise ParseError(f"header needs {fields} nonnegative integer(s), got {' '.join(tokens)!r}", lineno, path)
    return values


def _check_count(lines, n, path):
    body = lines[1:]
    if len(body) != n:
        where = body[n][0] if len(body) > n else (lines[-1][0] + 1)
        raise ParseError(f"header declares {n} rows, file has {len(body)}", where, path)
    return body


def load_features(path, dtype=DEFAULT_DTYPE) -> np.ndarray:
    lines = _content_lines(path)
    n, k = _header(lines, path, 2)
    out = np.empty((n, k), dtype=np.float64)
    for r, (lineno, tokens) in enumerate(_check_count(lines, n, path)):
        if len(tokens) != k:
            raise ParseError(f"expected {k} values, got {len(tokens)}", lineno, path)
        try:
            out[r] = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(f"non-numeric token in {' '.join(tokens)!r}", lineno, path) from None
    return out.astype(dtype)


def _load_vector(path, parse, what):
    lines = _content_lines(path)
    (n,) = _header(lines, path, 1)
    values = []
    for lineno, tokens in _check_count(lines, n, path):
        if len(tokens) != 1:
            raise ParseError(f"expected one {what} per line, got {len(tokens)}", lineno, path)
        try:
            values.append(parse(tokens[0]))
        except ValueError as exc:
            raise ParseError(f"bad {what} {tokens[0]!r}: {exc}", lineno, path) from None
    return values


def load_labels(path) -> np.ndarray:
    def parse(tok):
        v = int(tok)
        if v < 0:
            raise ValueError("labels must be nonnegative")
        return v

    return np.array(_load_vector(path, parse, "label"), dtype=np.int64)


def load_mask(path) -> np.ndarray:
    def parse(tok):
        if tok not in ("0", "1"):
            raise ValueError("mask values must be 0 or 1")
        return tok == "1"

    return np.array(_load_vector(path, parse, "mask value"), dtype=bool)


def write_features(path, x) -> None:
    x = np.asarray(x)
    body = [" ".join(repr(float(v)) for v in row) for row in x.tolist()]
    Path(path).write_text("\n".join([f"{x.shape[0]} {x.shape[1]}", *body]) + "\n")


def write_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    Path(path).write_text("\n".join([str(labels.size), *map(str, labels.tolist())]) + "\n")


def write_mask(path, mask) -> None:
    mask = np.asarray(mask, dtype=bool)
    Path(path).write_text("\n".join([str(mask.size), *("1" if m else "0" for m in mask.tolist())]) + "\n")


def load_dataset(graph, features, labels, mask=None, name: str | None = None, dtype=DEFAULT_DTYPE) -> Dataset:
    a = load_mtx(graph, dtype)
    y = load_labels(labels)
    m = load_mask(mask) if mask is not None else np.ones(y.shape, dtype=bool)
    return Dataset(a, load_features(features, dtype), y, m, name or Path(graph).stem)


def _triangle_pairs(k: np.ndarray):
    """Decode index k into (i, j), i < j, enumerating pairs column by column."""
    j = ((1 + np.sqrt(1 + 8 * k.astype(np.float64))) // 2).astype(np.int64)
    # correct float rounding at triangular-number boundaries
    j -= (j * (j - 1) // 2) > k
    j += ((j + 1) * j // 2) <= k
    i = k - j * (j - 1) // 2
    return i, j


def _sample_block(rng, lo_a, size_a, lo_b, size_b, same, p):
    total = size_a * (size_a - 1) // 2 if same else size_a * size_b
    if total == 0 or p <= 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    m = int(rng.binomial(total, p))
    picks = rng.choice(total, size=m, replace=False)
    if same:
        i, j = _triangle_pairs(picks)
        return lo_a + i, lo_a + j
    return lo_a + picks // size_b, lo_b + picks % size_b


def synth_planted(
    n: int,
    classes: int,
    p_intra: float,
    p_inter: float,
    feat_dim: int,
    noise: float,
    seed: int = 0,
    dtype=DEFAULT_DTYPE,
) -> Dataset:
    """Planted-partition graph with one-hot-plus-noise features.

    Nodes are split into ``classes`` contiguous, near-equal blocks. Each
    unordered pair is an edge with probability ``p_intra`` inside a block and
    ``p_inter`` across blocks; edges are stored in both directions with
    weight 1. Every node is in the training mask.
    """
    if n < 1 or classes < 1 or classes > n:
        raise ConfigError(f"need 1 <= classes <= n, got n={n}, classes={classes}")
    if not (0 <= p_inter < p_intra <= 1):
        raise ConfigError(f"need 0 <= p_inter < p_intra <= 1, got {p_inter}, {p_intra}")
    if feat_dim < classes:
        raise ConfigError(f"feat_dim ({feat_dim}) must be >= classes ({classes})")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    rng = np.random.Generator(np.random.PCG64(seed))
    bounds = [c * n // classes for c in range(classes + 1)]
    labels = np.repeat(np.arange(classes), np.diff(bounds))
    src, dst = [], []
    for a in range(classes):
        for b in range(a, classes):
            i, j = _sample_block(
                rng, bounds[a], bounds[a + 1] - bounds[a], bounds[b], bounds[b + 1] - bounds[b], a == b,
                p_intra if a == b else p_inter,
            )
            src.append(i)
            dst.append(j)
    src, dst = np.concatenate(src), np.concatenate(dst)
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    adjacency = csr_from_arrays(n, n, rows, cols, np.ones(rows.size), dtype)
    features = np.zeros((n, feat_dim))
    features[np.arange(n), labels] = 1.0
    features += noise * rng.standard_normal((n, feat_dim))
    name = f"planted-n{n}-c{classes}-s{seed}"
    return Dataset(adjacency, features.astype(dtype), labels, np.ones(n, dtype=bool), name)


def planted_for_degree(n: int, classes: int, avg_degree: float, intra_fraction: float = 0.8, **kwargs) -> Dataset:
    """Planted partition whose expected average degree is ``avg_degree``."""
    block = n / classes
    intra_pairs_per_node = block - 1
    inter_pairs_per_node = n - block
    p_intra = min(1.0, avg_degree * intra_fraction / max(intra_pairs_per_node, 1))
    p_inter = avg_degree * (1 - intra_fraction) / max(inter_pairs_per_node, 1)
    return synth_planted(n, classes, p_intra, p_inter, **kwargs)
