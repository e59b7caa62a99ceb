"""Scan pairs, residuals, and training batch assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ShapeError
from ..phantom import Dataset

# Conditioning age is the age at BASELINE by contract; the batch builder
# below is the single place pair metadata turns into arrays, and it only
# ever reads age_a.


@dataclass
class ScanPair:
    i_ta: np.ndarray        # [H,W] float32 in [0,1]
    i_tb: np.ndarray
    delta: float            # months, > 0
    age_a: float            # age at baseline, months
    status: int
    subject_id: str

    def __post_init__(self):
        if self.i_ta.shape != self.i_tb.shape:
            raise ShapeError(
                f"pair images differ: {self.i_ta.shape} vs {self.i_tb.shape}")
        if self.delta <= 0:
            raise DataError(f"{self.subject_id}: pair delta must be positive, got {self.delta}")


@dataclass
class ResidualImage:
    values: np.ndarray      # [H,W], in [-1,1], exactly i_tb - i_ta
    delta: float


def make_residual(pair: ScanPair) -> ResidualImage:
    return ResidualImage(values=pair.i_tb - pair.i_ta, delta=pair.delta)


def pairs_from_dataset(ds: Dataset, split: str) -> list[ScanPair]:
    out = []
    for a, b in ds.pairs(split):
        out.append(ScanPair(
            i_ta=ds.load_image(a),
            i_tb=ds.load_image(b),
            delta=float(b.age_months - a.age_months),
            age_a=float(a.age_months),
            status=a.status,
            subject_id=a.subject_id,
        ))
    return out


@dataclass
class PairBatch:
    base: np.ndarray        # [N,H,W,1] float32
    residual: np.ndarray    # [N,H,W,1] float32
    delta: np.ndarray       # [N] float64
    age: np.ndarray         # [N] float64, baseline ages
    status: np.ndarray      # [N] int64


def batch_from_pairs(pairs: list[ScanPair], idx: np.ndarray) -> PairBatch:
    chosen = [pairs[int(i)] for i in idx]
    base = np.stack([p.i_ta for p in chosen])[..., None].astype(np.float32)
    res = np.stack([make_residual(p).values for p in chosen])[..., None].astype(np.float32)
    return PairBatch(
        base=base,
        residual=res,
        delta=np.array([p.delta for p in chosen], np.float64),
        age=np.array([p.age_a for p in chosen], np.float64),
        status=np.array([p.status for p in chosen], np.int64),
    )
