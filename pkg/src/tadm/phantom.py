"""Deterministic synthetic longitudinal phantom dataset.

Each subject is a 2D "brain": an outer ellipse of gray matter (0.5)
around a white-matter interior (0.8) with a central CSF ventricle (0.2)
on a black background.  Anatomy evolves linearly with age:

  * the ventricle radius grows at the subject's atrophy rate
    k = k_base * (1 + D) * u pixels/month (D = cognitive status),
  * the brain's outer semi-axes shrink at k/2,
  * the gray-matter ring thins along a global, subject-independent law
    (the cortical-thinning analogue), which is what makes age readable
    from a single scan: every other progression rate is private to the
    subject, the ring thickness is not.

The gray/white interface is rendered with one pixel of coverage blending
so sub-pixel thickness changes are visible to a regressor; the blend is
threshold-consistent (it crosses the 0.65 gray/white threshold exactly at
50% coverage), every other boundary is hard.  A static low-amplitude
subject texture is added inside the brain away from the blended band; it
cancels exactly in within-subject residuals.

All geometry except the atrophy rate scales with size/64; k stays in
absolute pixels/month at every size.  Everything is a pure function of
(seed, config): images are rendered from SubjectParams alone and written
as 8-bit binary PGM with a CSV manifest.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, GenerationError
from .numerics.rng import Rng, derive_seed

AGE_MIN = 504.0
AGE_MAX = 1140.0
K_BASE = 0.01           # px/month before the (1+D)*u modulation
GAP_MIN, GAP_MAX = 6.0, 72.0
RING_T0, RING_T1 = 9.0, 2.0   # gray ring thickness in px at AGE_MIN/AGE_MAX (64px scale)
VENTRICLE_CAP = 0.6     # ventricle radius never exceeds this fraction of a semi-axis
WHITE_MARGIN = 1.2      # minimum white ring width in px (64px scale)

GRAY, WHITE, CSF = 0.5, 0.8, 0.2
MASK_LABELS = {"background": 0, "csf": 64, "gray": 128, "white": 192}


@dataclass
class SubjectParams:
    subject_id: str
    axis_a: float        # base semi-axis along x, pixels, at AGE_MIN
    axis_b: float        # base semi-axis along y
    cx: float
    cy: float
    r0: float            # ventricle radius at AGE_MIN
    k: float             # atrophy rate, px/month
    u: float             # the subject's rate jitter (k = K_BASE*(1+D)*u)
    status: int
    texture_seed: int
    size: int


def subject_params(index: int, seed: int, size: int = 64,
                   status: int | None = None) -> SubjectParams:
    """Deterministic subject draw; status defaults to round-robin."""
    sid = f"S{index:04d}"
    rng = Rng(derive_seed(seed, "subject", sid))
    sc = size / 64.0
    d = index % 3 if status is None else int(status)
    if d not in (0, 1, 2):
        raise DomainError(f"status must be 0, 1 or 2, got {d}")
    u = float(rng.uniform(0.8, 1.2))
    return SubjectParams(
        subject_id=sid,
        axis_a=(24.0 + 2.0 * float(rng.uniform(0, 1))) * sc,
        axis_b=(20.0 + 2.0 * float(rng.uniform(0, 1))) * sc,
        cx=size / 2.0 + float(rng.uniform(-1, 1)) * sc,
        cy=size / 2.0 + float(rng.uniform(-1, 1)) * sc,
        r0=(4.0 + 2.0 * float(rng.uniform(0, 1))) * sc,
        k=K_BASE * (1 + d) * u,
        u=u,
        status=d,
        texture_seed=derive_seed(seed, "texture", sid),
        size=size,
    )


def ring_thickness(age: float, size: int) -> float:
    """The global gray-ring thinning law, in pixels."""
    frac = (age - AGE_MIN) / (AGE_MAX - AGE_MIN)
    return (RING_T0 + (RING_T1 - RING_T0) * frac) * (size / 64.0)


def max_valid_age(p: SubjectParams) -> float:
    """Largest age at which this subject's anatomy stays self-consistent.

    Two constraints, both linear in age: the ventricle stays under
    VENTRICLE_CAP of the smaller semi-axis, and a white ring of at least
    WHITE_MARGIN px survives between ventricle and gray band.
    """
    sc = p.size / 64.0
    b = min(p.axis_a, p.axis_b)
    # r0 + k*x <= CAP*(b - k*x/2)
    cap1 = (VENTRICLE_CAP * b - p.r0) / (p.k * (1 + VENTRICLE_CAP / 2))
    # r0 + k*x + margin <= b - k*x/2 - tau(x); tau linear with slope ts
    ts = (RING_T1 - RING_T0) * sc / (AGE_MAX - AGE_MIN)
    cap2 = (b - ring_thickness(AGE_MIN, p.size) - WHITE_MARGIN * sc - p.r0) / (1.5 * p.k + ts)
    return min(AGE_MAX, AGE_MIN + max(0.0, min(cap1, cap2)))


def _signed_px(xx, yy, cx, cy, a, b):
    """Approximate signed distance (px) to an axis-aligned ellipse."""
    dx = (xx - cx) / a
    dy = (yy - cy) / b
    q = np.sqrt(dx * dx + dy * dy)
    grad = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
    return (q - 1.0) * q / np.maximum(grad, 1e-9)


def _texture(seed: int, size: int) -> np.ndarray:
    """Smooth static field in [-1, 1]: a coarse grid upsampled bilinearly."""
    g = Rng(seed).uniform(-1.0, 1.0, (9, 9)).astype(np.float64)
    src = np.linspace(0, 8, size)
    i0 = np.clip(src.astype(int), 0, 7)
    f = src - i0
    rows = g[i0, :] * (1 - f)[:, None] + g[i0 + 1, :] * f[:, None]
    cols = rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]
    return cols


def gen_phantom(p: SubjectParams, age: float, size: int | None = None):
    """Render one scan: float image in [0,1] plus exact region masks.

    Returns (image [H,W] float32, masks dict of boolean [H,W] arrays with
    keys csf/gray/white/total_brain).
    """
    size = p.size if size is None else size
    if size != p.size:
        raise GenerationError(f"params are for size {p.size}, asked to render {size}")
    if not AGE_MIN <= age <= AGE_MAX:
        raise DomainError(f"age {age} outside [{AGE_MIN}, {AGE_MAX}] months")
    sc = size / 64.0
    months = age - AGE_MIN
    a = p.axis_a - 0.5 * p.k * months
    b = p.axis_b - 0.5 * p.k * months
    r = p.r0 + p.k * months
    tau = ring_thickness(age, size)
    if r > VENTRICLE_CAP * min(a, b) or min(a, b) - tau < r + WHITE_MARGIN * sc:
        raise GenerationError(
            f"{p.subject_id} at age {age:.0f}: ventricle r={r:.2f} overruns brain "
            f"axes ({a:.2f}, {b:.2f}) with ring {tau:.2f}")

    ax = np.arange(size, dtype=np.float64) + 0.5
    xx, yy = np.meshgrid(ax, ax)
    outer = _signed_px(xx, yy, p.cx, p.cy, a, b) <= 0.0
    inner_d = _signed_px(xx, yy, p.cx, p.cy, a - tau, b - tau)
    cov = np.clip(0.5 - inner_d, 0.0, 1.0)       # white-matter coverage
    vent = _signed_px(xx, yy, p.cx, p.cy, r, r) <= 0.0

    img = np.zeros((size, size), np.float64)
    img[outer] = GRAY + (WHITE - GRAY) * cov[outer]
    img[vent] = CSF
    flat = (cov <= 0.0) | (cov >= 1.0)           # off the blended band
    img[outer & flat] += 0.02 * _texture(p.texture_seed, size)[outer & flat]
    img = np.clip(img, 0.0, 1.0)

    white_side = cov >= 0.5
    masks = {
        "csf": vent,
        "white": outer & white_side & ~vent,
        "gray": outer & ~white_side,
        "total_brain": outer,
    }
    return img.astype(np.float32), masks


def mask_image(masks: dict) -> np.ndarray:
    """Encode masks as one labeled uint8 image."""
    out = np.zeros(masks["total_brain"].shape, np.uint8)
    for name in ("csf", "gray", "white"):
        out[masks[name]] = MASK_LABELS[name]
    return out


# ---------------------------------------------------------------------------
# PGM interchange

def write_pgm(path: str, image: np.ndarray) -> None:
    """Binary 8-bit PGM; float inputs in [0,1] are quantized by rounding.

    Writes are atomic (temp file + rename)."""
    if image.dtype != np.uint8:
        image = np.clip(np.rint(np.asarray(image, np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())
    os.replace(tmp, path)


def read_pgm(path: str) -> np.ndarray:
    """Read binary PGM to float32 in [0,1]."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if not m:
        raise DataError(f"{path}: not a binary PGM")
    w, h, maxval = (int(m.group(i)) for i in (1, 2, 3))
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    raw = blob[m.end():m.end() + w * h]
    if len(raw) != w * h:
        raise DataError(f"{path}: truncated pixel data")
    return (np.frombuffer(raw, np.uint8).reshape(h, w).astype(np.float32) / 255.0)


# ---------------------------------------------------------------------------
# dataset generation and loading

@dataclass
class ScanRecord:
    subject_id: str
    scan_id: int
    age_months: int
    status: int
    split: str
    path: str


MANIFEST_HEADER = "subject_id,scan_id,age_months,status,split,path"


def split_of(subject_id: str) -> str:
    """70/10/20 split by a stable hash of the subject id alone."""
    frac = derive_seed("split", subject_id) / 2.0 ** 64
    if frac < 0.7:
        return "train"
    if frac < 0.8:
        return "val"
    return "test"


def _scan_ages(p: SubjectParams, n: int, rng: Rng) -> list[int]:
    """Integer ages with gaps ~ U[6,72] months inside the valid window.

    Small sizes with fast atrophy leave narrow windows, so gaps are
    rescaled to fit and rounded ages are clamped back under the cap."""
    window = int(max_valid_age(p) - AGE_MIN - 1.0)
    if window < n - 1:
        raise GenerationError(
            f"{p.subject_id}: valid age window of {window} months cannot hold "
            f"{n} scans (size {p.size}, k={p.k:.3f})")
    gaps = np.asarray(rng.uniform(GAP_MIN, GAP_MAX, max(n - 1, 1))[:n - 1], np.float64)
    span = float(gaps.sum())
    if span > window * 0.98:
        gaps *= window * 0.98 / span
        span = float(gaps.sum())
    start = float(rng.uniform(0, 1)) * (window - span)
    ages = np.rint(AGE_MIN + start + np.concatenate([[0.0], np.cumsum(gaps)]))
    ages = np.minimum(ages, AGE_MIN + window).astype(int)
    for i in range(len(ages) - 2, -1, -1):      # keep gaps strictly positive
        ages[i] = min(ages[i], ages[i + 1] - 1)
    return [int(a) for a in ages]


def gen_dataset(n_subjects: int, scans_per_subject: int, size: int, seed: int,
                out_dir: str, emit_masks: bool = False) -> str:
    """Write PGMs plus manifest.csv; returns the manifest path."""
    if n_subjects < 1 or scans_per_subject < 2:
        raise DomainError("need at least 1 subject and 2 scans per subject")
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    if emit_masks:
        os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    rows = []
    for i in range(n_subjects):
        p = subject_params(i, seed, size)
        ages = _scan_ages(p, scans_per_subject, Rng(derive_seed(seed, "ages", p.subject_id)))
        split = split_of(p.subject_id)
        for j, age in enumerate(ages):
            img, masks = gen_phantom(p, age)
            rel = f"images/{p.subject_id}_{j:02d}.pgm"
            write_pgm(os.path.join(out_dir, rel), img)
            if emit_masks:
                write_pgm(os.path.join(out_dir, f"masks/{p.subject_id}_{j:02d}.pgm"),
                          mask_image(masks))
            rows.append(f"{p.subject_id},{j},{age},{p.status},{split},{rel}")
    manifest = os.path.join(out_dir, "manifest.csv")
    tmp = manifest + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(MANIFEST_HEADER + "\n")
        f.write("\n".join(rows) + "\n")
    os.replace(tmp, manifest)
    return manifest


class Dataset:
    """Loaded manifest: validated records, image access, and pair index."""

    def __init__(self, records: list[ScanRecord], root: str):
        self.records = records
        self.root = root
        self._cache: dict[str, np.ndarray] = {}
        self.by_subject: dict[str, list[ScanRecord]] = {}
        for r in records:
            self.by_subject.setdefault(r.subject_id, []).append(r)

    def scans(self, split: str | None = None) -> list[ScanRecord]:
        return [r for r in self.records if split is None or r.split == split]

    def pairs(self, split: str | None = None) -> list[tuple[ScanRecord, ScanRecord]]:
        """All within-subject ordered pairs with a positive age gap."""
        out = []
        for sid in sorted(self.by_subject):
            recs = self.by_subject[sid]
            if split is not None and recs[0].split != split:
                continue
            for i in range(len(recs)):
                for j in range(i + 1, len(recs)):
                    if recs[j].age_months > recs[i].age_months:
                        out.append((recs[i], recs[j]))
        return out

    def load_image(self, rec: ScanRecord) -> np.ndarray:
        img = self._cache.get(rec.path)
        if img is None:
            img = read_pgm(os.path.join(self.root, rec.path))
            self._cache[rec.path] = img
        return img


def load_dataset(manifest_path: str) -> Dataset:
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read manifest {manifest_path}: {e}") from e
    if not lines or lines[0] != MANIFEST_HEADER:
        raise DataError(f"{manifest_path}: bad or missing header")
    root = os.path.dirname(os.path.abspath(manifest_path))
    records = []
    last_age: dict[str, tuple[int, int]] = {}
    status_of: dict[str, int] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise DataError(f"{manifest_path}:{ln}: expected 6 fields, got {len(parts)}")
        sid, scan_s, age_s, status_s, split, rel = parts
        try:
            scan_id, age, status = int(scan_s), int(age_s), int(status_s)
        except ValueError as e:
            raise DataError(f"{manifest_path}:{ln}: {e}") from e
        if split not in ("train", "val", "test"):
            raise DataError(f"{manifest_path}:{ln}: unknown split {split!r}")
        if status not in (0, 1, 2):
            raise DataError(f"{manifest_path}:{ln}: status {status} not in 0..2")
        if sid in last_age:
            pid, page = last_age[sid]
            if scan_id != pid + 1 or age <= page:
                raise DataError(
                    f"{manifest_path}:{ln}: ages must strictly increase with scan_id "
                    f"for {sid} (scan {scan_id} at {age} after scan {pid} at {page})")
        if status_of.setdefault(sid, status) != status:
            raise DataError(f"{manifest_path}:{ln}: status changed within subject {sid}")
        full = os.path.join(root, rel)
        if not os.path.isfile(full):
            raise DataError(f"{manifest_path}:{ln}: missing image file {rel}")
        last_age[sid] = (scan_id, age)
        records.append(ScanRecord(sid, scan_id, age, status, split, rel))
    if not records:
        raise DataError(f"{manifest_path}: no records")
    return Dataset(records, root)
