"""Feature corpus store: on-disk format, validation, and synthetic generation.

On-disk layout is a UTF-8 JSON manifest next to a raw binary blob:

* manifest keys: ``format`` ("feature-corpus/v1"), ``dim``, ``count``,
  ``dtype`` (always "f32le"), ``normalized``, ``blob`` (filename relative to
  the manifest), ``ids``, ``class_labels``, ``splits``, optional
  ``display_paths``.
* blob: ``count * dim`` row-major little-endian 32-bit floats, no header.

The format is trivially writable from any embedding pipeline and the round
trip is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_FORMAT = "feature-corpus/v1"
VALID_SPLITS = ("train", "val", "test")
UNIT_NORM_TOL = 1e-5


def normalize_rows(data: np.ndarray) -> np.ndarray:
    """Return a row-wise L2-normalized copy; zero-norm rows are rejected."""
    data = np.asarray(data, dtype=np.float64)
    norms = np.linalg.norm(data, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"row {bad} has zero norm; cosine similarity would be undefined")
    return data / norms[:, None]


@dataclass
class FeatureCorpus:
    """Immutable matrix of feature vectors with per-row labels and split tags.

    ``data`` is float32 storage; numeric consumers promote to float64 on use.
    The instance is safe to share across threads: the data buffer is marked
    read-only and per-split indices are cached lazily.
    """

    data: np.ndarray
    ids: tuple[str, ...]
    class_labels: np.ndarray
    splits: tuple[str, ...]
    display_paths: tuple[str | None, ...] | None = None
    normalized: bool = False
    _split_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _id_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("corpus data must be a 2-D matrix")
        self.class_labels = np.asarray(self.class_labels, dtype=np.int64)
        self.ids = tuple(str(i) for i in self.ids)
        self.splits = tuple(str(s) for s in self.splits)
        self.validate()
        self.data.flags.writeable = False
        self._id_index = {item_id: row for row, item_id in enumerate(self.ids)}

    # -- invariants ---------------------------------------------------------

    def validate(self) -> None:
        n, _ = self.data.shape
        if len(self.ids) != n or len(self.splits) != n or self.class_labels.shape[0] != n:
            raise ValueError("ids, class_labels and splits must all match the row count")
        if self.display_paths is not None and len(self.display_paths) != n:
            raise ValueError("display_paths must match the row count")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("corpus contains non-finite feature values")
        if len(set(self.ids)) != n:
            raise ValueError("corpus ids must be unique")
        unknown = set(self.splits) - set(VALID_SPLITS)
        if unknown:
            raise ValueError(f"unknown split tag(s): {sorted(unknown)}")
        seen: dict[int, str] = {}
        for label, split in zip(self.class_labels.tolist(), self.splits):
            prior = seen.setdefault(label, split)
            if prior != split:
                raise ValueError(f"class {label} appears in both '{prior}' and '{split}' splits")
        if self.normalized:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            worst = float(np.abs(norms - 1.0).max()) if n else 0.0
            if worst > UNIT_NORM_TOL:
                raise ValueError(
                    f"corpus flagged normalized but a row norm deviates from 1 by {worst:.2e}")

    # -- accessors ----------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    def index_of(self, item_id: str) -> int:
        try:
            return self._id_index[item_id]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def split_rows(self, split: str) -> np.ndarray:
        """Row indices belonging to a split, ascending."""
        key = ("rows", split)
        if key not in self._split_cache:
            mask = np.fromiter((s == split for s in self.splits), dtype=bool, count=self.rows)
            self._split_cache[key] = np.flatnonzero(mask)
        return self._split_cache[key]

    def split_class_rows(self, split: str) -> dict[int, np.ndarray]:
        """Mapping class label -> ascending row indices within a split."""
        key = ("classes", split)
        if key not in self._split_cache:
            rows = self.split_rows(split)
            by_class: dict[int, list[int]] = {}
            for r in rows.tolist():
                by_class.setdefault(int(self.class_labels[r]), []).append(r)
            self._split_cache[key] = {c: np.asarray(v, dtype=np.int64) for c, v in sorted(by_class.items())}
        return self._split_cache[key]


@dataclass(frozen=True)
class SyntheticConfig:
    """Configuration for a synthetic Gaussian-blob corpus.

    Class means are drawn from an isotropic Gaussian with per-axis std
    ``mean_scale / sqrt(dim)`` (typical mean norm ~= mean_scale); samples add
    isotropic noise with per-axis std ``noise_sigma``. Defaults are sized so
    a single cosine query is imperfect, leaving headroom for feedback rounds,
    and the whole corpus generates in well under a second on CPU.
    """

    num_classes: int = 50
    per_class: int = 100
    dim: int = 64
    noise_sigma: float = 0.35
    mean_scale: float = 1.0
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    normalize: bool = True

    def __post_init__(self):
        if self.num_classes < 3:
            raise ValueError("num_classes must be >= 3 (open-set sampling needs spare classes)")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.mean_scale <= 0:
            raise ValueError("mean_scale must be positive")
        fr = self.split_fractions
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split_fractions must be three non-negative values summing to 1")


def _split_class_counts(num_classes: int, fractions: tuple[float, float, float]) -> list[int]:
    """Apportion classes to train/val/test by largest remainder."""
    raw = [f * num_classes for f in fractions]
    counts = [math.floor(r) for r in raw]
    remainders = [r - c for r, c in zip(raw, counts)]
    for _ in range(num_classes - sum(counts)):
        i = max(range(3), key=lambda j: (remainders[j], -j))
        counts[i] += 1
        remainders[i] = -1.0
    for frac, count, name in zip(fractions, counts, VALID_SPLITS):
        if frac > 0 and count < 1:
            raise ValueError(f"split '{name}' has fraction {frac} but rounding left it no classes")
    return counts


def generate_synthetic(cfg: SyntheticConfig) -> FeatureCorpus:
    """Generate a deterministic synthetic corpus; identical for identical cfg."""
    rng = np.random.default_rng(cfg.seed)
    d, c, k = cfg.dim, cfg.num_classes, cfg.per_class
    means = rng.standard_normal((c, d)) * (cfg.mean_scale / math.sqrt(d))
    data = np.repeat(means, k, axis=0)
    if cfg.noise_sigma > 0:
        data = data + rng.standard_normal((c * k, d)) * cfg.noise_sigma
    if cfg.normalize:
        data = normalize_rows(data)
    counts = _split_class_counts(c, cfg.split_fractions)
    class_split = []
    for split_name, count in zip(VALID_SPLITS, counts):
        class_split.extend([split_name] * count)
    labels = np.repeat(np.arange(c, dtype=np.int64), k)
    splits = tuple(class_split[label] for label in labels.tolist())
    ids = tuple(f"c{label:03d}-{i:04d}" for label in range(c) for i in range(k))
    return FeatureCorpus(
        data=data.astype(np.float32),
        ids=ids,
        class_labels=labels,
        splits=splits,
        normalized=cfg.normalize,
    )


def save_corpus(corpus: FeatureCorpus, out_dir: str | Path,
                blob_name: str = "features.f32", manifest_name: str = "manifest.json") -> Path:
    """Write manifest + blob into ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blob_path = out / blob_name
    blob_path.write_bytes(np.ascontiguousarray(corpus.data, dtype="<f4").tobytes())
    manifest = {
        "format": MANIFEST_FORMAT,
        "dim": corpus.dim,
        "count": corpus.rows,
        "dtype": "f32le",
        "normalized": corpus.normalized,
        "blob": blob_name,
        "ids": list(corpus.ids),
        "class_labels": corpus.class_labels.tolist(),
        "splits": list(corpus.splits),
    }
    if corpus.display_paths is not None:
        manifest["display_paths"] = list(corpus.display_paths)
    manifest_path = out / manifest_name
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


def load_corpus(path: str | Path, normalize: bool = False) -> FeatureCorpus:
    """Load a corpus from a manifest path (or a directory containing manifest.json).

    With ``normalize`` the rows are L2-normalized after reading (and the
    corpus is marked normalized). Raises ValueError on byte-length mismatch,
    duplicate ids, unknown split tags or non-finite values.
    """
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise ValueError(f"unsupported manifest format {manifest.get('format')!r}")
    if manifest.get("dtype", "f32le") != "f32le":
        raise ValueError(f"unsupported dtype {manifest.get('dtype')!r}, expected 'f32le'")
    dim = int(manifest["dim"])
    count = int(manifest["count"])
    blob_path = manifest_path.parent / manifest["blob"]
    if not blob_path.exists():
        raise FileNotFoundError(f"feature blob not found: {blob_path}")
    raw = blob_path.read_bytes()
    expected = dim * count * 4
    if len(raw) != expected:
        raise ValueError(
            f"blob length {len(raw)} bytes does not match dim*count*4 = {expected}")
    data = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()
    flagged = bool(manifest.get("normalized", False))
    if normalize:
        if not np.all(np.isfinite(data)):
            raise ValueError("corpus contains non-finite feature values")
        data = normalize_rows(data).astype(np.float32)
        flagged = True
    display = manifest.get("display_paths")
    return FeatureCorpus(
        data=data,
        ids=tuple(manifest["ids"]),
        class_labels=np.asarray(manifest["class_labels"], dtype=np.int64),
        splits=tuple(manifest["splits"]),
        display_paths=tuple(display) if display is not None else None,
        normalized=flagged,
    )
