"""Measurement suite: SSIM, PSNR, region-size errors, and ablations.

Region segmentation is plain intensity thresholding, which is exact on
phantoms because tissue intensities are separated by construction.  All
region errors are expressed in percent of total brain area except the
total-brain error itself, which is relative to the true brain area (the
report would otherwise hide global shrink/growth errors).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .diffusion import NoiseSchedule
from .errors import MetricError, ShapeError
from .models import ModelBundle
from .numerics import Rng, derive_seed
from .phantom import Dataset
from .pipeline.config import TrainConfig
from .pipeline.inference import infer_batch

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP_DB = 100.0

REPORT_HEADER = "subject_id,delta_months,ssim,psnr_db,gray_err,white_err,csf_err,total_brain_err"
_COLS = REPORT_HEADER.split(",")[1:]


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma=1.5, dynamic range 1."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    mu_a = convolve2d(a, _WINDOW, mode="valid")
    mu_b = convolve2d(b, _WINDOW, mode="valid")
    var_a = convolve2d(a * a, _WINDOW, mode="valid") - mu_a * mu_a
    var_b = convolve2d(b * b, _WINDOW, mode="valid") - mu_b * mu_b
    cov = convolve2d(a * b, _WINDOW, mode="valid") - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for dynamic range 1, capped at 100 dB."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * np.log10(1.0 / mse)


def segment_regions(image: np.ndarray, csf_lo: float = 0.1, gray_lo: float = 0.35,
                    white_lo: float = 0.65) -> dict[str, np.ndarray]:
    """Threshold segmentation into csf/gray/white plus their union."""
    csf = (image >= csf_lo) & (image < gray_lo)
    gray = (image >= gray_lo) & (image < white_lo)
    white = (image >= white_lo) & (image <= 1.0)
    return {"csf": csf, "gray": gray, "white": white,
            "total_brain": csf | gray | white}


def region_size_error(pred: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """Absolute area differences: tissues in % of total brain, brain in %
    of the true brain area."""
    if pred.shape != truth.shape:
        raise ShapeError(f"region_size_error: shapes differ {pred.shape} vs {truth.shape}")
    mp, mt = segment_regions(pred), segment_regions(truth)
    tb_p, tb_t = int(mp["total_brain"].sum()), int(mt["total_brain"].sum())
    if tb_t == 0:
        raise MetricError("region_size_error: empty total brain in truth image")
    out = {}
    for name in ("gray", "white", "csf"):
        pct_p = 100.0 * mp[name].sum() / tb_p if tb_p else 0.0
        pct_t = 100.0 * mt[name].sum() / tb_t
        out[name] = abs(pct_p - pct_t)
    out["total_brain"] = 100.0 * abs(tb_p - tb_t) / tb_t
    return out


def _metric_row(subject_id: str, delta: float, pred: np.ndarray,
                truth: np.ndarray) -> dict:
    err = region_size_error(pred, truth)
    return {"subject_id": subject_id, "delta_months": float(delta),
            "ssim": ssim(pred, truth), "psnr_db": psnr(pred, truth),
            "gray_err": err["gray"], "white_err": err["white"],
            "csf_err": err["csf"], "total_brain_err": err["total_brain"]}


@dataclass
class EvalReport:
    rows: list[dict]
    aggregate: dict

    def to_csv(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(REPORT_HEADER + "\n")
            for row in self.rows + [self.aggregate]:
                cells = [str(row["subject_id"])]
                cells += [f"{row[c]:.6g}" for c in _COLS]
                f.write(",".join(cells) + "\n")
        os.replace(tmp, path)


def _finish(rows: list[dict]) -> EvalReport:
    if not rows:
        raise MetricError("evaluate: no pairs in the requested split")
    agg = {"subject_id": "AGGREGATE"}
    for c in _COLS:
        agg[c] = float(np.mean([r[c] for r in rows]))
    return EvalReport(rows=rows, aggregate=agg)


def evaluate(bundle: ModelBundle, sched: NoiseSchedule, ds: Dataset, split: str,
             seed: int, eval_batch: int = 12, cond_mode: str = "gap",
             out_csv: str | None = None) -> EvalReport:
    """Sample a prediction for every pair in the split at its true gap.

    Pure function of (weights, pairs, seed): per-pair noise streams are
    derived from (seed, subject, scan ids), so neither batch size nor row
    order affects the draws.
    """
    pairs = ds.pairs(split)
    rows = []
    for i in range(0, len(pairs), eval_batch):
        chunk = pairs[i:i + eval_batch]
        images = np.stack([ds.load_image(a) for a, _ in chunk])
        deltas = [float(b.age_months - a.age_months) for a, b in chunk]
        ages = [float(a.age_months) for a, _ in chunk]
        statuses = [a.status for a, _ in chunk]
        rngs = [Rng(derive_seed(seed, "eval", a.subject_id, a.scan_id, b.scan_id))
                for a, b in chunk]
        preds = infer_batch(bundle, sched, images, deltas, ages, statuses, rngs,
                            cond_mode=cond_mode)
        for (a, b), pred, delta in zip(chunk, preds, deltas):
            rows.append(_metric_row(a.subject_id, delta, pred, ds.load_image(b)))
    report = _finish(rows)
    if out_csv is not None:
        report.to_csv(out_csv)
    return report


def evaluate_copy_baseline(ds: Dataset, split: str,
                           out_csv: str | None = None) -> EvalReport:
    """The no-progression reference predictor: follow-up := baseline."""
    rows = []
    for a, b in ds.pairs(split):
        rows.append(_metric_row(a.subject_id, b.age_months - a.age_months,
                                ds.load_image(a), ds.load_image(b)))
    report = _finish(rows)
    if out_csv is not None:
        report.to_csv(out_csv)
    return report


# ---------------------------------------------------------------------------
# ablation runner

ABLATION_VARIANTS = ("full", "no_bae", "absolute_age", "no_patient")
ABLATION_HEADER = ("variant,ssim,psnr_db,gray_err,white_err,csf_err,total_brain_err")


def variant_config(cfg: TrainConfig, variant: str, seed: int) -> TrainConfig:
    import dataclasses

    out = dataclasses.replace(cfg, seed=seed)
    if variant == "full":
        pass
    elif variant == "no_bae":
        out.lambda_bae = 0.0
    elif variant == "absolute_age":
        out.cond_mode = "absolute_age"
    elif variant == "no_patient":
        out.cond_mode = "no_patient"
    else:
        raise MetricError(f"unknown ablation variant {variant!r}")
    return out


def ablate(ds: Dataset, cfg: TrainConfig, out_dir: str, seeds=(0, 1, 2),
           split: str = "test") -> dict[str, dict]:
    """Train the four conditioning/loss variants over seeds; table of means.

    The BAE is pretrained once (it is frozen and identical across
    variants) and shared.  Writes per-run rows to runs.csv, the 4-row
    mean table to ablation.csv, and returns {variant: mean metrics}.
    """
    from .pipeline.training import pretrain_bae, train

    os.makedirs(out_dir, exist_ok=True)
    bae_ckpt = os.path.join(out_dir, "bae.ckpt")
    pretrain_bae(ds, cfg, bae_ckpt)
    sched = cfg.schedule()

    run_rows = []
    table: dict[str, dict] = {}
    for variant in ABLATION_VARIANTS:
        reports = []
        for seed in seeds:
            vcfg = variant_config(cfg, variant, seed)
            ckpt = os.path.join(out_dir, f"{variant}_s{seed}.ckpt")
            bundle, _ = train(ds, vcfg, bae_ckpt, ckpt,
                              os.path.join(out_dir, f"{variant}_s{seed}_log.csv"))
            rep = evaluate(bundle, sched, ds, split, seed=derive_seed(seed, variant),
                           eval_batch=cfg.eval_batch, cond_mode=vcfg.cond_mode)
            reports.append(rep)
            run_rows.append((variant, seed, rep.aggregate))
        table[variant] = {c: float(np.mean([r.aggregate[c] for r in reports]))
                          for c in _COLS if c != "delta_months"}

    with open(os.path.join(out_dir, "runs.csv"), "w", encoding="utf-8") as f:
        f.write("variant,seed," + ",".join(c for c in _COLS if c != "delta_months") + "\n")
        for variant, seed, agg in run_rows:
            cells = [variant, str(seed)] + [f"{agg[c]:.6g}" for c in _COLS if c != "delta_months"]
            f.write(",".join(cells) + "\n")
    with open(os.path.join(out_dir, "ablation.csv"), "w", encoding="utf-8") as f:
        f.write(ABLATION_HEADER + "\n")
        for variant in ABLATION_VARIANTS:
            cells = [variant] + [f"{table[variant][c]:.6g}"
                                 for c in _COLS if c != "delta_months"]
            f.write(",".join(cells) + "\n")
    return table
