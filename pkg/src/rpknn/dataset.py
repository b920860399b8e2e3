"""Data model, file formats, synthetic data and stratified folds.

A data matrix is a C-contiguous ``float32`` array of shape ``(n, d)`` with
``n, d >= 1`` and only finite values; :func:`as_matrix` enforces that.

On-disk formats (little-endian):

* ANNM: ``b"ANNM"``, u32 version=1, u64 n, u64 d, then n*d f32 row-major.
* ANNL: ``b"ANNL"``, u32 version=1, u64 n, u64 C, n u32 class ids, then C
  names, each a u32 byte length followed by UTF-8 bytes.
"""
import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .projection import RngStream

ANNM_MAGIC = b"ANNM"
ANNL_MAGIC = b"ANNL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def as_matrix(x) -> np.ndarray:
    """Validate and convert ``x`` into a data matrix."""
    m = np.ascontiguousarray(x, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError(f"data matrix must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"data matrix needs n >= 1 and d >= 1, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("data matrix contains non-finite values")
    return m


@dataclass(frozen=True)
class LabelVector:
    ids: np.ndarray
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "class_names", [str(c) for c in self.class_names])
        c = len(self.class_names)
        if ids.ndim != 1:
            raise ValueError("label ids must be 1-D")
        if ids.size and (ids.min() < 0 or ids.max() >= c):
            raise ValueError(f"label ids must lie in [0, {c})")
        if np.unique(ids).size != c:
            raise ValueError("every class must appear at least once")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self):
        return int(self.ids.shape[0])

    def subset(self, rows) -> "LabelVector":
        """Labels for ``rows``; class ids and names are kept even if a class drops out."""
        out = object.__new__(LabelVector)
        object.__setattr__(out, "ids", self.ids[rows])
        object.__setattr__(out, "class_names", list(self.class_names))
        return out


@dataclass(frozen=True)
class FoldPlan:
    folds: list  # of (train_indices, test_indices)
    fold_count: int
    seed: int


def _factorize(values):
    names, ids, seen = [], [], {}
    for v in values:
        if v not in seen:
            seen[v] = len(names)
            names.append(v)
        ids.append(seen[v])
    return LabelVector(np.array(ids, dtype=np.int64), names)


def load_csv(path, has_header=False, label_column=None):
    """Read a numeric CSV, optionally splitting off one label column.

    ``label_column`` is a 0-based column number or, with a header, a column
    name. Labels are factorized in order of first appearance. Returns
    ``(matrix, labels_or_None)``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    header = None
    if has_header and rows:
        header, rows = rows[0], rows[1:]
    if not rows:
        raise FormatError(f"{path}: no data rows")

    width = len(rows[0])
    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise FormatError(f"{path}: label column {label_column!r} not found in header")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
        if not 0 <= label_idx < width:
            raise FormatError(f"{path}: label column {label_idx} out of range for {width} columns")

    first_line = 2 if header is not None else 1
    values, labels = [], []
    for r, row in enumerate(rows):
        line = r + first_line
        if len(row) != width:
            raise FormatError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        nums = []
        for c, cell in enumerate(row):
            if c == label_idx:
                labels.append(cell.strip())
                continue
            try:
                x = float(cell)
            except ValueError:
                raise FormatError(f"{path}: row {line}, column {c + 1}: cannot parse {cell!r}") from None
            if not np.isfinite(x):
                raise FormatError(f"{path}: row {line}, column {c + 1}: non-finite value {cell!r}")
            nums.append(x)
        values.append(nums)

    if width - (label_idx is not None) < 1:
        raise FormatError(f"{path}: no feature columns")
    matrix = as_matrix(np.array(values, dtype=np.float64))
    return matrix, (_factorize(labels) if label_idx is not None else None)


def save_csv(matrix, path, labels=None):
    matrix = as_matrix(matrix)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for i, row in enumerate(matrix):
            cells = [repr(float(x)) for x in row]
            if labels is not None:
                cells = [labels.class_names[labels.ids[i]]] + cells
            w.writerow(cells)


def save_binary(matrix, path):
    m = as_matrix(matrix)
    n, d = m.shape
    path = Path(path)
    try:
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(ANNM_MAGIC, FORMAT_VERSION, n, d))
            fh.write(m.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _read_header(buf, magic, path):
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(buf)} bytes)")
    got, version, a, b = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return a, b


def load_binary(path) -> np.ndarray:
    path = Path(path)
    buf = path.read_bytes()
    n, d = _read_header(buf, ANNM_MAGIC, path)
    need = n * d * 4
    have = len(buf) - _HEADER.size
    if have < need:
        raise FormatError(f"{path}: truncated payload, {have} bytes present, {need} required")
    if have > need:
        raise FormatError(f"{path}: {have - need} unexpected trailing bytes")
    if n < 1 or d < 1:
        raise FormatError(f"{path}: empty matrix (n={n}, d={d})")
    m = np.frombuffer(buf, dtype="<f4", count=n * d, offset=_HEADER.size)
    m = m.reshape(n, d).astype(np.float32)
    if not np.all(np.isfinite(m)):
        raise FormatError(f"{path}: non-finite values in payload")
    return m


def save_labels(labels: LabelVector, path):
    parts = [
        _HEADER.pack(ANNL_MAGIC, FORMAT_VERSION, len(labels), labels.n_classes),
        labels.ids.astype("<u4").tobytes(),
    ]
    for name in labels.class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    Path(path).write_bytes(b"".join(parts))


def load_labels(path) -> LabelVector:
    path = Path(path)
    buf = path.read_bytes()
    n, c = _read_header(buf, ANNL_MAGIC, path)
    pos = _HEADER.size
    if len(buf) < pos + 4 * n:
        raise FormatError(f"{path}: truncated class ids")
    ids = np.frombuffer(buf, dtype="<u4", count=n, offset=pos).astype(np.int64)
    pos += 4 * n
    names = []
    for _ in range(c):
        if len(buf) < pos + 4:
            raise FormatError(f"{path}: truncated class names")
        (ln,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if len(buf) < pos + ln:
            raise FormatError(f"{path}: truncated class names")
        names.append(buf[pos:pos + ln].decode("utf-8"))
        pos += ln
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} unexpected trailing bytes")
    try:
        return LabelVector(ids, names)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def generate_synthetic(n, d, c, spread, seed):
    """Gaussian blobs around ``c`` centers drawn uniformly from [-1, 1]^d.

    Point ``i`` belongs to class ``i % c``. Returns ``(matrix, labels)``.
    """
    if not (n >= c >= 1 and d >= 1):
        raise ValueError(f"need n >= c >= 1 and d >= 1, got n={n}, c={c}, d={d}")
    if not spread > 0:
        raise ValueError(f"spread must be > 0, got {spread}")
    gen = RngStream(seed, 0).generator
    centers = gen.uniform(-1.0, 1.0, size=(c, d))
    ids = np.arange(n, dtype=np.int64) % c
    points = centers[ids] + spread * gen.standard_normal((n, d))
    names = [f"class{j}" for j in range(c)]
    return as_matrix(points), LabelVector(ids, names)


def stratified_kfold(labels: LabelVector, fold_count: int, seed: int) -> FoldPlan:
    """Shuffle each class (seeded) and deal its members round-robin over folds.

    The dealing position carries over between classes so total fold sizes
    stay balanced as well.
    """
    n = len(labels)
    if fold_count < 2:
        raise ValueError(f"fold_count must be >= 2, got {fold_count}")
    if fold_count > n:
        raise ValueError(f"fold_count {fold_count} exceeds number of points {n}")
    gen = RngStream(seed, 0).generator
    fold_of = np.empty(n, dtype=np.int64)
    pos = 0
    for c in range(labels.n_classes):
        members = np.flatnonzero(labels.ids == c)
        members = members[gen.permutation(members.size)]
        fold_of[members] = (pos + np.arange(members.size)) % fold_count
        pos = (pos + members.size) % fold_count
    folds = []
    for f in range(fold_count):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, test))
    return FoldPlan(folds, fold_count, seed)
