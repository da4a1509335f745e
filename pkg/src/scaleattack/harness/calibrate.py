"""Detector threshold calibration on a synthetic clean/attacked corpus.

Run ``python -m scaleattack.harness.calibrate`` to regenerate the shipped
default threshold.
"""

from __future__ import annotations

import argparse
import math
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from ..attack import EmbedPlan, generate_attack
from ..detect import detection_score
from ..image import load_image
from ..resize import VULNERABLE, ScaleSpec, resize
from .corpus import synthesize_corpus
from .pairing import pair_corpus

CALIBRATION_SEED = 20240601
CALIBRATION_SIZE = 100


@dataclass(frozen=True)
class Calibration:
    threshold: float
    tpr: float
    fpr: float

    @property
    def youden_j(self) -> float:
        return self.tpr - self.fpr


def rates(clean, attacked, threshold: float) -> tuple[float, float]:
    tpr = sum(s > threshold for s in attacked) / len(attacked)
    fpr = sum(s > threshold for s in clean) / len(clean)
    return tpr, fpr


def calibrate_threshold(clean, attacked) -> Calibration:
    """Threshold maximizing Youden's J = TPR - FPR.

    All cuts inside the same gap between observed scores tie; the widest
    optimal gap is chosen and its geometric midpoint returned, which keeps the
    margin symmetric on the log scale scores live on.
    """
    if not clean or not attacked:
        raise ValueError("need both clean and attacked scores")
    values = sorted(set(clean) | set(attacked))
    cuts = [(values[0] / 2 if values[0] > 0 else values[0] - 1.0, values[0])]
    cuts += list(zip(values[:-1], values[1:]))
    best, best_j, best_width = None, -math.inf, -math.inf
    for lo, hi in cuts:
        t = math.sqrt(lo * hi) if lo > 0 else (lo + hi) / 2
        tpr, fpr = rates(clean, attacked, t)
        j = tpr - fpr
        width = math.log(hi / lo) if lo > 0 else math.inf
        if j > best_j + 1e-12 or (abs(j - best_j) <= 1e-12 and width > best_width):
            best, best_j, best_width = Calibration(t, tpr, fpr), j, width
    return best


def corpus_scores(paths, seed: int, carrier_scale: ScaleSpec, attack_scale: ScaleSpec):
    clean, attacked = [], []
    for carrier_path, small_path in pair_corpus(paths, seed):
        carrier = resize(load_image(carrier_path), carrier_scale, VULNERABLE)
        small = resize(load_image(small_path), attack_scale, VULNERABLE)
        combined, _ = generate_attack(EmbedPlan.single(carrier, small))
        clean.append(detection_score(carrier))
        attacked.append(detection_score(combined))
    return clean, attacked


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Calibrate the detection threshold on a synthetic corpus.")
    ap.add_argument("--count", type=int, default=CALIBRATION_SIZE)
    ap.add_argument("--seed", type=int, default=CALIBRATION_SEED)
    ap.add_argument("--carrier", default="2000x2000")
    ap.add_argument("--target", default="299x299")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        paths = synthesize_corpus(Path(tmp), args.count, args.seed)
        clean, attacked = corpus_scores(paths, args.seed, ScaleSpec.parse(args.carrier), ScaleSpec.parse(args.target))
    cal = calibrate_threshold(clean, attacked)
    print(f"clean scores: max {max(clean):.2f}  attacked scores: min {min(attacked):.2f}", file=sys.stderr)
    print(f"threshold={cal.threshold:.6g} tpr={cal.tpr:.3f} fpr={cal.fpr:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
