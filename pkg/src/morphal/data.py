"""Dataset ingestion and synthesis.

Images are 8-bit binary PGM (P5, maxval 255) normalized to [0,1] floats;
labels are vote fractions in a two-column CSV. A synthetic generator
produces desk-scale galaxy-like images: class 0 is a centered smooth blob,
class 1 adds an elongated bar at a random angle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from morphal.errors import DataFormatError, InputError

LABELS_HEADER = ["id", "p_positive"]


@dataclass
class ImageRecord:
    """One grayscale image, pixels row-major in [0,1]."""

    id: str
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64).reshape(-1)
        if self.width < 1 or self.height < 1:
            raise InputError(f"image {self.id}: non-positive dimensions")
        if self.pixels.size != self.width * self.height:
            raise InputError(
                f"image {self.id}: {self.pixels.size} pixels for "
                f"{self.width}x{self.height}"
            )
        if ((self.pixels < 0.0) | (self.pixels > 1.0)).any():
            raise InputError(f"image {self.id}: pixels outside [0,1]")


@dataclass
class LabelRecord:
    """Vote fraction for one image id."""

    id: str
    p_positive: float

    def __post_init__(self):
        if not (0.0 <= self.p_positive <= 1.0):
            raise InputError(
                f"label {self.id}: p_positive {self.p_positive} outside [0,1]"
            )


@dataclass
class DatasetSplit:
    train_ids: list[str]
    val_ids: list[str]
    test_ids: list[str]


def _read_pgm_token(data: bytes, pos: int, path, what: str) -> tuple[bytes, int]:
    """Read one whitespace-delimited header token, skipping # comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DataFormatError(f"{path}: truncated header while reading {what}")
    return data[start:pos], pos


def load_pgm(path) -> ImageRecord:
    """Parse a binary PGM (P5, maxval 255); id is the file stem."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise DataFormatError(f"{path}: bad magic {data[:2]!r}, expected P5")
    pos = 2
    fields = {}
    for what in ("width", "height", "maxval"):
        token, pos = _read_pgm_token(data, pos, path, what)
        try:
            fields[what] = int(token)
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric {what} {token!r}") from None
    if fields["maxval"] != 255:
        raise DataFormatError(f"{path}: maxval {fields['maxval']} unsupported, expected 255")
    if fields["width"] < 1 or fields["height"] < 1:
        raise DataFormatError(f"{path}: non-positive dimensions in header")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos:pos + fields["width"] * fields["height"]]
    if len(payload) != fields["width"] * fields["height"]:
        raise DataFormatError(
            f"{path}: truncated payload, expected "
            f"{fields['width'] * fields['height']} bytes, got {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return ImageRecord(path.stem, fields["width"], fields["height"], pixels)


def write_pgm(record: ImageRecord, path) -> None:
    """Write a binary PGM with a canonical header."""
    raw = np.clip(np.rint(record.pixels * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{record.width} {record.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + raw.tobytes())


def pixels_to_bytes(pixels: np.ndarray) -> bytes:
    """Quantize [0,1] pixels back to the raw 8-bit payload."""
    return np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8).tobytes()


def load_labels_csv(path) -> list[LabelRecord]:
    """Read 'id,p_positive' rows; rejects duplicates and bad fractions."""
    path = Path(path)
    records: list[LabelRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELS_HEADER:
            raise DataFormatError(
                f"{path}: header {header} does not match {LABELS_HEADER}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}:{row_no}: expected 2 columns, got {len(row)}")
            image_id, raw_p = row
            try:
                p = float(raw_p)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{row_no}: p_positive {raw_p!r} is not a number"
                ) from None
            if not (0.0 <= p <= 1.0):
                raise DataFormatError(
                    f"{path}:{row_no}: p_positive {p} outside [0,1]"
                )
            if image_id in seen:
                raise DataFormatError(f"{path}:{row_no}: duplicate id {image_id!r}")
            seen.add(image_id)
            records.append(LabelRecord(image_id, p))
    return records


def write_labels_csv(records: list[LabelRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABELS_HEADER)
        for rec in records:
            writer.writerow([rec.id, repr(rec.p_positive)])


def binarize_label(p_positive: float, threshold: float = 0.5) -> int:
    """Majority-vote binarization; ties (p == threshold) go to class 1."""
    if not (0.0 <= p_positive <= 1.0):
        raise InputError(f"p_positive {p_positive} outside [0,1]")
    return 1 if p_positive >= threshold else 0


def make_splits(ids, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Deterministic shuffled partition; floor counts for val/test,
    remainder to train."""
    ids = sorted(ids)
    n = len(ids)
    if n < 10:
        raise InputError(f"need at least 10 ids to split, got {n}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InputError(f"fractions {fractions} do not sum to 1")
    n_val = int(fractions[1] * n)
    n_test = int(fractions[2] * n)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise InputError(f"fractions {fractions} leave an empty split for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    return DatasetSplit(
        train_ids=shuffled[:n_train],
        val_ids=shuffled[n_train:n_train + n_val],
        test_ids=shuffled[n_train + n_val:],
    )


@dataclass
class Dataset:
    """Joined image + label store with matrix accessors."""

    images: dict[str, ImageRecord]
    labels: dict[str, LabelRecord] = field(default_factory=dict)

    def __post_init__(self):
        dims = {(rec.width, rec.height) for rec in self.images.values()}
        if len(dims) > 1:
            raise InputError(f"mixed image dimensions in dataset: {sorted(dims)}")

    @property
    def ids(self) -> list[str]:
        return sorted(self.images)

    @property
    def n_pixels(self) -> int:
        rec = next(iter(self.images.values()))
        return rec.width * rec.height

    def require_labels(self, ids=None) -> None:
        """Referential check: every requested image id must carry a label."""
        wanted = self.ids if ids is None else list(ids)
        missing = [i for i in wanted if i not in self.labels]
        if missing:
            raise InputError(
                f"{len(missing)} image id(s) have no label, e.g. {missing[:5]}"
            )

    def pixel_matrix(self, ids) -> np.ndarray:
        ids = list(ids)
        unknown = [i for i in ids if i not in self.images]
        if unknown:
            raise InputError(f"unknown image id(s), e.g. {unknown[:5]}")
        out = np.empty((len(ids), self.n_pixels))
        for row, image_id in enumerate(ids):
            out[row] = self.images[image_id].pixels
        return out

    def binary_labels(self, ids, threshold: float = 0.5) -> np.ndarray:
        self.require_labels(ids)
        return np.array([binarize_label(self.labels[i].p_positive, threshold)
                         for i in ids], dtype=np.int64)


def load_dataset(image_dir, labels_path=None) -> Dataset:
    """Load every *.pgm under image_dir plus an optional label CSV.

    With labels present, image ids and label ids must coincide exactly.
    """
    image_dir = Path(image_dir)
    paths = sorted(image_dir.glob("*.pgm"))
    if not paths:
        raise InputError(f"no .pgm images under {image_dir}")
    images: dict[str, ImageRecord] = {}
    for p in paths:
        rec = load_pgm(p)
        if rec.id in images:
            raise DataFormatError(f"duplicate image id {rec.id!r}")
        images[rec.id] = rec
    labels: dict[str, LabelRecord] = {}
    if labels_path is not None:
        for rec in load_labels_csv(labels_path):
            labels[rec.id] = rec
        unlabeled = sorted(set(images) - set(labels))
        orphaned = sorted(set(labels) - set(images))
        if unlabeled or orphaned:
            raise InputError(
                "image/label join failed: "
                f"{len(unlabeled)} image(s) without labels (e.g. {unlabeled[:3]}), "
                f"{len(orphaned)} label(s) without images (e.g. {orphaned[:3]})"
            )
    return Dataset(images, labels)


def generate_synthetic(n: int, side: int = 16, p_class1: float = 0.5,
                       noise_sigma: float = 0.05, seed: int = 0,
                       with_masks: bool = False):
    """Synthesize n labeled galaxy-like images.

    Class 0 ("smooth"): a centered isotropic Gaussian blob with random
    radius, its amplitude scaled so total blob mass varies only mildly.
    Class 1 ("featured"): the same blob plus an elongated bar through the
    center at a random angle; bar strength varies so weak bars create
    genuinely ambiguous images. Additive pixel noise, clamped to [0,1].

    The per-image parameter draws do not depend on the label, so runs with
    p_class1=0 and p_class1=1 on one seed yield matched blob/bar pairs.
    Returns (images, labels); with_masks additionally returns each image's
    bar mask (all-False for class 0).
    """
    if n < 2:
        raise InputError("need n >= 2")
    if side < 8:
        raise InputError("need side >= 8")
    rng = np.random.default_rng(seed)
    center = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    dx = xx - center
    dy = yy - center
    dist2 = dx * dx + dy * dy

    images: list[ImageRecord] = []
    labels: list[LabelRecord] = []
    masks: list[np.ndarray] = []
    width = len(str(max(n - 1, 1)))
    for i in range(n):
        label = 1 if rng.random() < p_class1 else 0
        radius = rng.uniform(0.14, 0.20) * side
        blob_mass = rng.normal(0.086, 0.008) * side * side
        amp = min(max(blob_mass / (2.0 * math.pi * radius * radius), 0.05), 0.9)
        blob = amp * np.exp(-dist2 / (2.0 * radius * radius))

        # Bar parameters are always drawn to keep the stream label-independent.
        theta = rng.uniform(0.0, math.pi)
        length = rng.uniform(0.55, 0.95) * side
        halfwidth = rng.uniform(0.6, 1.1)
        bar_mass = rng.uniform(0.012, 0.055) * side * side
        along = dx * math.cos(theta) + dy * math.sin(theta)
        across = -dx * math.sin(theta) + dy * math.cos(theta)
        mask = (np.abs(along) <= length / 2.0) & (np.abs(across) <= halfwidth)

        img = blob.copy()
        if label == 1:
            add = min(max(bar_mass / max(int(mask.sum()), 1), 0.06), 0.5)
            img = img + add * mask

        noise = rng.normal(0.0, 1.0, size=(side, side))
        if noise_sigma > 0.0:
            img = img + noise_sigma * noise
        img = np.clip(img, 0.0, 1.0)

        image_id = f"syn{i:0{width}d}"
        images.append(ImageRecord(image_id, side, side, img.reshape(-1)))
        labels.append(LabelRecord(image_id, float(label)))
        if with_masks:
            masks.append(mask.reshape(-1) if label == 1
                         else np.zeros(side * side, dtype=bool))
    if with_masks:
        return images, labels, masks
    return images, labels


def synthetic_dataset(n: int, side: int = 16, p_class1: float = 0.5,
                      noise_sigma: float = 0.05, seed: int = 0) -> Dataset:
    images, labels = generate_synthetic(n, side, p_class1, noise_sigma, seed)
    return Dataset({r.id: r for r in images}, {r.id: r for r in labels})
