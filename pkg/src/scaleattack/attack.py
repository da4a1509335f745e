"""Downscaling attack generation.

Every pixel of a small image is copied into the (up to) four carrier pixels
that a vulnerable bilinear resize to the small image's size reads for it. All
four interpolation inputs then carry the same value, so the resize returns
the small image exactly whatever the interpolation weights are.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .image import Image
from .resize import ScaleSpec, axis_neighbors


class PlanError(ValueError):
    """An EmbedPlan violates its size or channel invariants."""


@dataclass(frozen=True)
class EmbedPlan:
    carrier: Image
    embeds: tuple[tuple[Image, ScaleSpec], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "embeds", tuple(self.embeds))
        self.validate()

    @classmethod
    def single(cls, carrier: Image, small: Image) -> EmbedPlan:
        return cls(carrier, ((small, ScaleSpec(small.width, small.height)),))

    def validate(self):
        c = self.carrier
        for k, (small, at) in enumerate(self.embeds):
            if (at.out_width, at.out_height) != (small.width, small.height):
                raise PlanError(f"embed {k}: target {at} does not match small image {small.width}x{small.height}")
            if not (at.out_width < c.width and at.out_height < c.height):
                raise PlanError(f"embed {k}: target {at} must be strictly smaller than carrier {c.width}x{c.height}")
            if small.channels != c.channels:
                raise PlanError(f"embed {k}: small has {small.channels} channels, carrier has {c.channels}")


@dataclass
class EmbedReport:
    pixels_written: list[int]
    collisions: int
    fraction_perturbed: float
    # positions written twice by the same embed; nonzero only when an axis
    # shrinks by less than 2x, and then the reveal is no longer exact
    overlaps: list[int] = field(default_factory=list)
    collision_mask: np.ndarray | None = field(default=None, repr=False)

    def to_record(self) -> dict:
        return {
            "pixels_written": list(self.pixels_written),
            "collisions": self.collisions,
            "fraction_perturbed": self.fraction_perturbed,
            "overlaps": list(self.overlaps),
        }


@dataclass(frozen=True)
class _Footprint:
    cols: np.ndarray  # written carrier columns
    rows: np.ndarray  # written carrier rows
    src_cols: np.ndarray  # small-image column whose value lands in each written column
    src_rows: np.ndarray
    overlaps: int


def _last_writer(n_out: int, n_in: int):
    # Algorithm order is i-major then j, four writes per target pixel. The
    # writers of a carrier position form a product set, so the final value
    # comes from the largest writing index on each axis independently.
    nb = axis_neighbors(n_out, n_in)
    idx = np.arange(n_out)
    last = np.full(n_in, -1, dtype=np.int64)
    np.maximum.at(last, nb.lower, idx)
    np.maximum.at(last, nb.upper, idx)
    count = np.bincount(nb.lower, minlength=n_in) + np.bincount(nb.upper[nb.upper != nb.lower], minlength=n_in)
    return last, count


def _footprint(carrier: Image, at: ScaleSpec) -> _Footprint:
    last_c, count_c = _last_writer(at.out_width, carrier.width)
    last_r, count_r = _last_writer(at.out_height, carrier.height)
    cols = np.flatnonzero(last_c >= 0)
    rows = np.flatnonzero(last_r >= 0)
    single = np.count_nonzero(count_c == 1) * np.count_nonzero(count_r == 1)
    return _Footprint(cols, rows, last_c[cols], last_r[rows], cols.size * rows.size - single)


def _write_masks(plan: EmbedPlan):
    h, w = plan.carrier.height, plan.carrier.width
    for small, at in plan.embeds:
        fp = _footprint(plan.carrier, at)
        mask = np.zeros((h, w), dtype=bool)
        mask[np.ix_(fp.rows, fp.cols)] = True
        yield small, fp, mask


def generate_attack(plan: EmbedPlan) -> tuple[Image, EmbedReport]:
    """Embed each small image of ``plan`` into a copy of the carrier, in order.

    Later embeds overwrite earlier ones where their footprints collide.
    """
    plan.validate()
    out = np.array(plan.carrier.pixels)
    h, w = out.shape[:2]
    writes = np.zeros((h, w), dtype=np.int32)
    written, overlaps = [], []
    for small, fp, mask in _write_masks(plan):
        out[np.ix_(fp.rows, fp.cols)] = small.pixels[np.ix_(fp.src_rows, fp.src_cols)]
        writes += mask
        written.append(int(fp.rows.size * fp.cols.size))
        overlaps.append(int(fp.overlaps))
    collision_mask = writes >= 2
    report = EmbedReport(
        pixels_written=written,
        collisions=int(collision_mask.sum()),
        fraction_perturbed=float(np.count_nonzero(writes)) / (h * w),
        overlaps=overlaps,
        collision_mask=collision_mask,
    )
    return Image(out), report


def perturbation_mask(plan: EmbedPlan) -> Image:
    """Binary image (255 where the attack writes, 0 elsewhere) at carrier size."""
    plan.validate()
    any_write = np.zeros((plan.carrier.height, plan.carrier.width), dtype=bool)
    for _, _, mask in _write_masks(plan):
        any_write |= mask
    return Image(any_write.astype(np.uint8) * 255)
