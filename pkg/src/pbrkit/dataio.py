"""Feature files, synthetic Dirichlet data and the toy histograms."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .histcore import Dataset, FeatureVector, NegativeElement, normalize

BINARY_MAGIC = b"PBRF"
BINARY_VERSION = 1

TOY_RAW = (
    (1, 15, 24, 32, 2),
    (3, 15, 26, 33, 52),
    (20, 20, 20, 20, 20),
)


class ParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class NegativeFeature(NegativeElement):
    def __init__(self, line, column, value):
        ValueError.__init__(self, f"line {line}: negative feature {value!r} in column {column}")
        self.line = line
        self.index = column
        self.value = value


def toy_fixture() -> tuple[FeatureVector, FeatureVector, FeatureVector]:
    """The normalized toy histograms (d), (e), (f)."""
    return tuple(normalize(list(map(float, raw))) for raw in TOY_RAW)


def _dataset_from_rows(X, label_strings, normalized=False) -> Dataset:
    names = sorted(set(label_strings))
    index = {name: k for k, name in enumerate(names)}
    labels = np.array([index[s] for s in label_strings], dtype=np.int64)
    return Dataset(X, labels, {k: name for name, k in index.items()}, normalized=normalized)


def load_csv(path) -> Dataset:
    """Read ``label,f0,f1,...`` rows. Class ids follow sorted label order."""
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if not header or header[0].strip() != "label":
            raise ParseError("first column must be 'label'", 1)
        width = len(header) - 1
        if width < 2:
            raise ParseError("need at least two feature columns", 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != width + 1:
                raise ParseError(f"expected {width + 1} fields, got {len(rec)}", lineno)
            try:
                vals = [float(f) for f in rec[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            for col, v in enumerate(vals):
                if not np.isfinite(v):
                    raise ParseError(f"non-finite value in column {col}", lineno)
                if v < 0:
                    raise NegativeFeature(lineno, col, v)
            labels.append(rec[0])
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows", 2)
    return _dataset_from_rows(np.asarray(rows), labels)


def save_csv(data: Dataset, path) -> None:
    """Write a dataset with 17 significant digits so reloading is exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("label," + ",".join(f"f{k}" for k in range(data.dim)) + "\n")
        for row, lab in zip(data.X, data.labels):
            name = data.class_names[int(lab)]
            fh.write(name + "," + ",".join(format(v, ".17g") for v in row) + "\n")


def save_binary(data: Dataset, path) -> None:
    """``PBRF`` magic, header, row-major little-endian float64, label table."""
    names = [data.class_names[k] for k in sorted(data.class_names)]
    ids = sorted(data.class_names)
    pos = {k: i for i, k in enumerate(ids)}
    out = bytearray(BINARY_MAGIC)
    out += struct.pack("<IIIB", BINARY_VERSION, data.dim, len(data), 1)
    out += np.ascontiguousarray(data.X, dtype="<f8").tobytes()
    out += struct.pack("<I", len(names))
    for name in names:
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    out += np.asarray([pos[int(v)] for v in data.labels], dtype="<u4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_binary(path) -> Dataset:
    blob = Path(path).read_bytes()
    if blob[:4] != BINARY_MAGIC:
        raise ParseError("bad magic; not a PBRF feature file")
    version, n, m, has_labels = struct.unpack_from("<IIIB", blob, 4)
    if version != BINARY_VERSION:
        raise ParseError(f"unsupported version {version}")
    if n < 2 or m < 1:
        raise ParseError(f"invalid header N={n} M={m}")
    off = 4 + 13
    X = np.frombuffer(blob, dtype="<f8", count=m * n, offset=off).reshape(m, n).astype(np.float64)
    off += 8 * m * n
    if not has_labels:
        return Dataset(X, np.zeros(m, dtype=np.int64), {0: "0"})
    (k,) = struct.unpack_from("<I", blob, off)
    off += 4
    names = []
    for _ in range(k):
        (ln,) = struct.unpack_from("<I", blob, off)
        off += 4
        names.append(blob[off:off + ln].decode("utf-8"))
        off += ln
    labels = np.frombuffer(blob, dtype="<u4", count=m, offset=off).astype(np.int64)
    return Dataset(X, labels, dict(enumerate(names)))


def load(path) -> Dataset:
    """Dispatch on content: binary files start with the ``PBRF`` magic."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return load_binary(path) if head == BINARY_MAGIC else load_csv(path)


def synth_dirichlet(classes: int, dims: int, per_class: int, concentration: float,
                    separation: float = 1.0, seed: int = 0) -> Dataset:
    """Histogram-valued classes scattered around random simplex centers.

    Class ``k`` gets the center ``normalize(1/dims + separation * g_k)``
    with ``g_k ~ Dirichlet(1, ..., 1)``; its samples are drawn from
    ``Dirichlet(concentration * center)``. Larger ``separation`` pulls the
    centers apart and larger ``concentration`` tightens each class.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if dims < 2:
        raise ValueError("need at least 2 dimensions")
    if per_class < 1:
        raise ValueError("per_class must be positive")
    if not concentration > 0:
        raise ValueError("concentration must be positive")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    centers = rng.dirichlet(np.ones(dims), size=classes)
    centers = (1.0 / dims + separation * centers)
    centers /= centers.sum(axis=1, keepdims=True)
    X = np.empty((classes * per_class, dims))
    labels = np.repeat(np.arange(classes), per_class)
    for k in range(classes):
        block = rng.dirichlet(concentration * centers[k], size=per_class)
        # gamma underflow can leave a row all zero for tiny concentrations
        empty = block.sum(axis=1) == 0
        block[empty] = centers[k]
        X[k * per_class:(k + 1) * per_class] = block
    X /= X.sum(axis=1, keepdims=True)
    width = len(str(classes - 1))
    names = {k: f"class{k:0{width}d}" for k in range(classes)}
    return Dataset(X, labels, names, normalized=True)
