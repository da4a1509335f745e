"""Corpus-level evaluation of attacks and defenses with pixel-level oracles.

For every carrier/small pair the carrier is stretched to ``carrier_scale``, the
small image is embedded at ``attack_scale``, and each condition (clean or
attacked input, resized under a given policy) is evaluated at both the attack
scale and an off scale.

Mapping of the classifier-accuracy grid onto pixel metrics:

* "Big" rows compare the output with the clean carrier resized by the
  vulnerable path at the same scale. Clean/vulnerable is therefore exact,
  and the gap of clean/antialias measures the blur the defense costs.
* "Small" rows compare the output with the embedded small image at the
  attack scale, and with the small image antialias-resized to the off scale.
"""

from __future__ import annotations

import configparser
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..attack import EmbedPlan, generate_attack
from ..detect import DEFAULT_THRESHOLD, detect
from ..image import Image, ImageFormatError, load_image
from ..metrics import SimilarityReport, compare
from ..resize import ANTIALIASED, VULNERABLE, Mode, ResizePolicy, ScaleSpec, resize
from .pairing import pair_corpus

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")
KINDS = ("clean", "attacked")
DEFAULT_CONDITIONS = (
    ("clean", Mode.VULNERABLE),
    ("attacked", Mode.VULNERABLE),
    ("clean", Mode.ANTIALIASED),
    ("attacked", Mode.ANTIALIASED),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_dir: Path
    carrier_scale: ScaleSpec = ScaleSpec(2000, 2000)
    attack_scale: ScaleSpec = ScaleSpec(299, 299)
    off_scale: ScaleSpec = ScaleSpec(224, 224)
    seed: int = 0
    conditions: tuple[tuple[str, Mode], ...] = DEFAULT_CONDITIONS
    out_dir: Path | None = None
    workers: int = 1
    limit: int | None = None
    detect: bool = False
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "corpus_dir", Path(self.corpus_dir))
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.attack_scale == self.off_scale:
            raise ConfigError("attack_scale and off_scale must differ")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.conditions:
            raise ConfigError("at least one condition is required")
        for kind, mode in self.conditions:
            if kind not in KINDS or not isinstance(mode, Mode):
                raise ConfigError(f"bad condition {kind}/{mode}")

    @classmethod
    def from_file(cls, path, **overrides) -> ExperimentConfig:
        """Read a flat ``key = value`` file; keyword overrides win."""
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string("[bench]\n" + path.read_text())
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        raw = dict(parser["bench"])
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw, base_dir=path.parent)

    @classmethod
    def from_mapping(cls, raw: dict, base_dir=None) -> ExperimentConfig:
        raw = dict(raw)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "corpus_dir" not in raw:
            raise ConfigError("corpus_dir is required")
        base = Path(base_dir) if base_dir is not None else Path(".")
        try:
            kw = {"corpus_dir": base / Path(str(raw["corpus_dir"]))}
            for key in ("carrier_scale", "attack_scale", "off_scale"):
                if key in raw:
                    v = raw[key]
                    kw[key] = v if isinstance(v, ScaleSpec) else ScaleSpec.parse(str(v))
            if "seed" in raw:
                kw["seed"] = int(raw["seed"])
            if "workers" in raw:
                kw["workers"] = int(raw["workers"])
            if raw.get("limit") not in (None, ""):
                kw["limit"] = int(raw["limit"])
            if "threshold" in raw:
                kw["threshold"] = float(raw["threshold"])
            if "detect" in raw:
                kw["detect"] = _parse_bool(raw["detect"])
            if raw.get("out_dir") not in (None, ""):
                kw["out_dir"] = base / Path(str(raw["out_dir"]))
            if "conditions" in raw:
                kw["conditions"] = _parse_conditions(raw["conditions"])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cls(**kw)


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_conditions(v) -> tuple[tuple[str, Mode], ...]:
    if not isinstance(v, str):
        return tuple((k, Mode(m)) for k, m in v)
    out = []
    for item in v.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, mode = item.partition("/")
        try:
            out.append((kind.strip(), Mode(mode.strip())))
        except ValueError:
            raise ConfigError(f"bad condition {item!r} (expected kind/policy)") from None
    return tuple(out)


# ---------------------------------------------------------------------------
# Aggregates


def quantile(values, q: float) -> float:
    """Linear-interpolated quantile that tolerates infinities."""
    xs = sorted(values)
    if not xs:
        return math.nan
    pos = q * (len(xs) - 1)
    lo, hi = math.floor(pos), math.ceil(pos)
    a, b = xs[lo], xs[hi]
    if lo == hi or a == b:
        return a
    if math.isinf(a) or math.isinf(b):
        return b if pos - lo >= 0.5 or math.isinf(a) else a
    return a + (b - a) * (pos - lo)


@dataclass(frozen=True)
class SimilarityStats:
    exact_rate: float
    psnr_median: float
    psnr_q1: float
    psnr_q3: float
    ncc_median: float
    ncc_q1: float
    ncc_q3: float

    @classmethod
    def of(cls, reports: list[SimilarityReport]) -> SimilarityStats:
        psnr = [r.psnr for r in reports]
        ncc = [r.ncc for r in reports]
        return cls(
            exact_rate=sum(r.exact for r in reports) / len(reports) if reports else math.nan,
            psnr_median=quantile(psnr, 0.5),
            psnr_q1=quantile(psnr, 0.25),
            psnr_q3=quantile(psnr, 0.75),
            ncc_median=quantile(ncc, 0.5),
            ncc_q1=quantile(ncc, 0.25),
            ncc_q3=quantile(ncc, 0.75),
        )

    def to_record(self) -> dict:
        return {k: _json_float(v) for k, v in self.__dict__.items()}


def _json_float(v):
    # null marks an infinite PSNR (exact match) or an empty aggregate
    if isinstance(v, float) and (math.isinf(v) or math.isnan(v)):
        return None
    return v


@dataclass(frozen=True)
class ConditionResult:
    kind: str
    policy: Mode
    scale: ScaleSpec
    role: str  # "attack" or "off"
    big_similarity: SimilarityStats
    small_similarity: SimilarityStats
    n: int

    @property
    def condition(self) -> str:
        return f"{self.kind}/{self.policy.value}@{self.scale}"

    def to_record(self) -> dict:
        return {
            "type": "condition",
            "condition": self.condition,
            "scale_role": self.role,
            "n": self.n,
            "big": self.big_similarity.to_record(),
            "small": self.small_similarity.to_record(),
        }


@dataclass
class PairOutcome:
    index: int
    carrier: str
    small: str
    # (kind, mode, role, scale) -> (big, small)
    results: dict = field(default_factory=dict)
    detection: dict | None = None
    error: str | None = None

    def records(self) -> list[dict]:
        if self.error is not None:
            return [{"type": "error", "pair": self.index, "carrier": self.carrier, "small": self.small,
                     "error": self.error}]
        out = []
        for (kind, mode, role, scale), (big, small) in self.results.items():
            out.append({
                "type": "pair",
                "pair": self.index,
                "carrier": self.carrier,
                "small": self.small,
                "condition": f"{kind}/{mode.value}@{scale}",
                "scale_role": role,
                "big": big.to_record(),
                "small_sim": small.to_record(),
            })
        if self.detection is not None:
            out.append({"type": "detection", "pair": self.index, **self.detection})
        return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    pairs: list[PairOutcome]
    conditions: list[ConditionResult]

    @property
    def completed(self) -> list[PairOutcome]:
        return [p for p in self.pairs if p.error is None]

    def records(self) -> list[dict]:
        out = []
        for p in self.pairs:
            out.extend(p.records())
        out.extend(c.to_record() for c in self.conditions)
        return out

    def condition(self, kind: str, policy: Mode, role: str = "attack") -> ConditionResult:
        for c in self.conditions:
            if (c.kind, c.policy, c.role) == (kind, policy, role):
                return c
        raise KeyError(f"{kind}/{policy.value} at {role} scale was not run")


# ---------------------------------------------------------------------------
# Running


def corpus_paths(corpus_dir: Path, limit: int | None = None) -> list[Path]:
    paths = sorted(p for p in Path(corpus_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return paths[:limit] if limit else paths


def _match_channels(a: Image, b: Image) -> tuple[Image, Image]:
    # gray images are replicated to RGB when paired with a colour image
    if a.channels == b.channels:
        return a, b
    rgb = lambda im: im if im.channels == 3 else Image(np.repeat(im.pixels, 3, axis=2))  # noqa: E731
    return rgb(a), rgb(b)


def evaluate_pair(index: int, carrier_path, small_path, cfg: ExperimentConfig) -> PairOutcome:
    outcome = PairOutcome(index, str(carrier_path), str(small_path))
    try:
        carrier_src = load_image(carrier_path)
        small_src = load_image(small_path)
    except (OSError, ImageFormatError) as exc:
        outcome.error = f"{type(exc).__name__}: {exc}"
        return outcome
    carrier_src, small_src = _match_channels(carrier_src, small_src)
    carrier = resize(carrier_src, cfg.carrier_scale, VULNERABLE)
    small = resize(small_src, cfg.attack_scale, VULNERABLE)
    combined, _ = generate_attack(EmbedPlan.single(carrier, small))
    inputs = {"clean": carrier, "attacked": combined}
    scales = {"attack": cfg.attack_scale, "off": cfg.off_scale}
    big_ref = {role: resize(carrier, s, VULNERABLE) for role, s in scales.items()}
    small_ref = {"attack": small, "off": resize(small, cfg.off_scale, ANTIALIASED)}
    for kind, mode in cfg.conditions:
        for role, scale in scales.items():
            out = resize(inputs[kind], scale, ResizePolicy(mode))
            outcome.results[(kind, mode, role, scale)] = (compare(out, big_ref[role]), compare(out, small_ref[role]))
    if cfg.detect:
        clean_rep = detect(carrier, cfg.threshold)
        att_rep = detect(combined, cfg.threshold)
        outcome.detection = {
            "clean_score": clean_rep.score,
            "attacked_score": att_rep.score,
            "clean_verdict": clean_rep.verdict,
            "attacked_verdict": att_rep.verdict,
            "attacked_inferred": [str(s) for s in att_rep.inferred_scales],
        }
    return outcome


def _evaluate_star(args):
    return evaluate_pair(*args)


def aggregate(pairs: list[PairOutcome], cfg: ExperimentConfig) -> list[ConditionResult]:
    done = [p for p in pairs if p.error is None]
    out = []
    for kind, mode in cfg.conditions:
        for role, scale in (("attack", cfg.attack_scale), ("off", cfg.off_scale)):
            key = (kind, mode, role, scale)
            bigs = [p.results[key][0] for p in done]
            smalls = [p.results[key][1] for p in done]
            out.append(ConditionResult(kind, mode, scale, role, SimilarityStats.of(bigs),
                                       SimilarityStats.of(smalls), len(done)))
    return out


def run_experiment(cfg: ExperimentConfig, paths=None) -> ExperimentResult:
    """Pair the corpus, evaluate every pair, and aggregate per condition.

    Pairs whose images fail to load are recorded as errors and left out of
    the aggregates. Results are ordered by pair index regardless of
    ``workers``.
    """
    if paths is None:
        paths = corpus_paths(cfg.corpus_dir, cfg.limit)
    pairs = pair_corpus(paths, cfg.seed)
    jobs = [(k, c, s, cfg) for k, (c, s) in enumerate(pairs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_evaluate_star, jobs))
    else:
        outcomes = [_evaluate_star(j) for j in jobs]
    result = ExperimentResult(cfg, outcomes, aggregate(outcomes, cfg))
    if cfg.out_dir is not None:
        write_results(result, cfg.out_dir)
    return result


# ---------------------------------------------------------------------------
# Output

ROW_LABELS = {
    ("clean", Mode.VULNERABLE): "Clean",
    ("attacked", Mode.VULNERABLE): "Attacked",
    ("clean", Mode.ANTIALIASED): "Antialiased Clean",
    ("attacked", Mode.ANTIALIASED): "Antialiased Attacked",
    ("clean", Mode.MULTISTEP): "Multistep Clean",
    ("attacked", Mode.MULTISTEP): "Multistep Attacked",
}


def _fmt(v: float, width: int = 7, digits: int = 2) -> str:
    if math.isinf(v):
        return "inf".rjust(width)
    if math.isnan(v):
        return "-".rjust(width)
    return f"{v:{width}.{digits}f}"


def summary_table(result: ExperimentResult) -> str:
    cfg = result.config
    head = (
        f"{'Images':<22}{'Ref':<7}"
        f"{'exact@' + str(cfg.attack_scale):>14}{'PSNR':>8}{'NCC':>8}"
        f"{'exact@' + str(cfg.off_scale):>14}{'PSNR':>8}{'NCC':>8}"
    )
    lines = [head, "-" * len(head)]
    for kind, mode in cfg.conditions:
        label = ROW_LABELS[(kind, mode)]
        at = result.condition(kind, mode, "attack")
        off = result.condition(kind, mode, "off")
        for ref, a, o in (("Big", at.big_similarity, off.big_similarity),
                          ("Small", at.small_similarity, off.small_similarity)):
            lines.append(
                f"{label:<22}{ref:<7}{_fmt(a.exact_rate, 14, 3)}{_fmt(a.psnr_median, 8)}{_fmt(a.ncc_median, 8, 3)}"
                f"{_fmt(o.exact_rate, 14, 3)}{_fmt(o.psnr_median, 8)}{_fmt(o.ncc_median, 8, 3)}"
            )
            label = ""
    n = result.conditions[0].n if result.conditions else 0
    failed = len(result.pairs) - len(result.completed)
    lines.append(f"pairs evaluated: {n}  failed: {failed}  (PSNR/NCC columns are medians)")
    return "\n".join(lines) + "\n"


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, allow_nan=False)


def write_results(result: ExperimentResult, out_dir: Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = out_dir / "records.jsonl"
    summary = out_dir / "summary.txt"
    records.write_text("".join(dumps_record(r) + "\n" for r in result.records()))
    summary.write_text(summary_table(result))
    return records, summary


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
