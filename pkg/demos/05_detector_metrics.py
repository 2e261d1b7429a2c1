"""Scoring a pole-base detector: matching, PR sweep, mAP and MAE.

Fakes a detector over 60 images with position noise, misses and false
alarms, then evaluates it the way the harness scores real prediction
files.  Writes the precision-recall curve to demos/out/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from polemap.evaluate import PredictionRecord, evaluate_detections

rng = np.random.default_rng(8)
W, H = 1280, 720

gts_by_image = {}
preds_by_image = {}
for k in range(60):
    image_id = f"im{k:03d}"
    n = int(rng.integers(1, 6))
    gts = [(float(u), float(v), 200 / W, 200 / H)
           for u, v in rng.uniform([0.15, 0.3], [0.85, 0.8], (n, 2))]
    preds = []
    for gt in gts:
        if rng.random() < 0.75:  # detected, with localization noise
            du, dv = rng.normal(0, 6.0 / W), rng.normal(0, 6.0 / H)
            conf = float(np.clip(rng.normal(0.75, 0.15), 0.05, 0.99))
            preds.append(PredictionRecord(
                image_id, (gt[0] + du, gt[1] + dv, gt[2], gt[3]), conf))
    for _ in range(rng.poisson(0.7)):  # false alarms at low confidence
        u, v = rng.uniform([0.1, 0.2], [0.9, 0.9])
        conf = float(np.clip(rng.normal(0.3, 0.12), 0.05, 0.9))
        preds.append(PredictionRecord(image_id,
                                      (float(u), float(v), 200 / W, 200 / H),
                                      conf))
    gts_by_image[image_id] = gts
    preds_by_image[image_id] = preds

report = evaluate_detections(preds_by_image, gts_by_image, image_width=W,
                             conf_threshold=0.25)
print(f"precision {report.precision:.3f}  recall {report.recall:.3f}  "
      f"(tp={report.tp} fp={report.fp} fn={report.fn})")
print(f"mAP 0.5:0.95 = {report.map_50_95:.3f}")
print(f"horizontal MAE = {report.mae_px:.2f} px over {report.mae_n_tp} TPs")
print("AP by IoU threshold:")
for thr, ap in report.ap_per_iou.items():
    print(f"  {thr:.2f}: {ap.value:.3f}")

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
curve = report.pr_curve
fig, ax = plt.subplots(figsize=(4.2, 3.6))
ax.plot([r for r, _ in curve], [p for _, p in curve], "-")
ax.set_xlabel("recall")
ax.set_ylabel("precision")
ax.set_xlim(0, 1)
ax.set_ylim(0, 1.02)
ax.set_title("PR curve, IoU 0.5")
fig.tight_layout()
fig.savefig(out / "pr_curve.png", dpi=130)
print(f"\nfigure written to {out / 'pr_curve.png'}")
