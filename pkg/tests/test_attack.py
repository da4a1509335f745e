from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_attack, written_positions
from scaleattack.attack import EmbedPlan, PlanError, generate_attack, perturbation_mask
from scaleattack.image import Image
from scaleattack.resize import ANTIALIASED, VULNERABLE, ScaleSpec, axis_neighbors, resize


def _random(rng, w, h, c=3):
    return Image(rng.integers(0, 256, (h, w, c), dtype=np.uint8))


@st.composite
def plans(draw, min_ratio=1.0, max_side=40):
    c = draw(st.sampled_from([1, 3]))
    w = draw(st.integers(2, max_side))
    h = draw(st.integers(2, max_side))
    sw = draw(st.integers(1, max(1, int(w / min_ratio) if min_ratio > 1 else w - 1)))
    sh = draw(st.integers(1, max(1, int(h / min_ratio) if min_ratio > 1 else h - 1)))
    assume(sw < w and sh < h)
    carrier = draw(arrays(np.uint8, (h, w, c)))
    small = draw(arrays(np.uint8, (sh, sw, c)))
    return EmbedPlan.single(Image(carrier), Image(small))


@settings(max_examples=150, deadline=None)
@given(plans())
def test_matches_sequential_algorithm(plan):
    combined, _ = generate_attack(plan)
    small = plan.embeds[0][0]
    assert np.array_equal(combined.pixels, naive_attack(plan.carrier.pixels, [small.pixels]))


@settings(max_examples=150, deadline=None)
@given(plans(min_ratio=2.0, max_side=60))
def test_exact_reveal(plan):
    combined, report = generate_attack(plan)
    small, at = plan.embeds[0]
    assert report.overlaps == [0]
    assert resize(combined, at, VULNERABLE) == small


@settings(max_examples=100, deadline=None)
@given(plans())
def test_locality_and_mask(plan):
    combined, report = generate_attack(plan)
    mask = perturbation_mask(plan).pixels[..., 0]
    assert set(np.unique(mask)) <= {0, 255}
    changed = np.any(combined.pixels != plan.carrier.pixels, axis=2)
    assert not np.any(changed & (mask == 0))
    # mean / 255 evaluated exactly
    assert report.fraction_perturbed == float(Fraction(int(mask.sum()), 255 * mask.size))
    assert 0 <= report.fraction_perturbed <= 1
    assert report.collisions == 0
    small = plan.embeds[0][0]
    expected = written_positions(plan.carrier.width, plan.carrier.height, small.width, small.height)
    assert set(map(tuple, np.argwhere(mask))) == expected


@settings(max_examples=30, deadline=None)
@given(plans())
def test_idempotent(plan):
    a, ra = generate_attack(plan)
    b, rb = generate_attack(plan)
    assert a == b and ra.to_record() == rb.to_record()


def test_exact_reveal_full_scale():
    rng = np.random.default_rng(7)
    carrier = _random(rng, 2000, 2000)
    small = _random(rng, 299, 299)
    combined, report = generate_attack(EmbedPlan.single(carrier, small))
    assert resize(combined, ScaleSpec(299, 299)) == small
    # distinct written positions, counted by brute force
    n = len(written_positions(2000, 2000, 299, 299))
    assert report.fraction_perturbed == n / 4_000_000
    assert report.fraction_perturbed <= 0.089401
    assert report.pixels_written == [n]


def test_scale_sensitivity():
    rng = np.random.default_rng(8)
    carrier = _random(rng, 600, 600)
    small = _random(rng, 100, 100)
    combined, _ = generate_attack(EmbedPlan.single(carrier, small))
    for s in (99, 101):
        spec = ScaleSpec(s, s)
        assert resize(combined, spec) != resize(small, spec, ANTIALIASED)
        assert resize(combined, spec) != resize(small, spec, VULNERABLE)


def test_dense_case_writes_everything():
    carrier = Image.filled(4, 4, 0)
    small = Image(np.array([[10, 20], [30, 40]], dtype=np.uint8))
    plan = EmbedPlan.single(carrier, small)
    combined, report = generate_attack(plan)
    assert report.fraction_perturbed == 1.0
    assert np.all(perturbation_mask(plan).pixels == 255)
    assert resize(combined, ScaleSpec(2, 2)) == small


def test_empty_plan():
    carrier = Image.filled(5, 5, 9, channels=3)
    plan = EmbedPlan(carrier, ())
    combined, report = generate_attack(plan)
    assert combined == carrier
    assert report.fraction_perturbed == 0 and report.collisions == 0
    assert not perturbation_mask(plan).pixels.any()


def test_plan_errors():
    carrier = Image.filled(10, 10, 0, channels=3)
    with pytest.raises(PlanError):
        EmbedPlan.single(carrier, Image.filled(10, 10, 0, channels=3))
    with pytest.raises(PlanError):
        EmbedPlan.single(carrier, Image.filled(4, 12, 0, channels=3))
    with pytest.raises(PlanError):
        EmbedPlan(carrier, ((Image.filled(4, 4, 0, channels=3), ScaleSpec(5, 4)),))
    with pytest.raises(PlanError):
        EmbedPlan.single(carrier, Image.filled(4, 4, 0, channels=1))


def test_shallow_ratio_reports_overlaps():
    rng = np.random.default_rng(9)
    plan = EmbedPlan.single(_random(rng, 30, 30), _random(rng, 20, 20))
    combined, report = generate_attack(plan)
    assert report.overlaps[0] > 0
    assert np.array_equal(combined.pixels, naive_attack(plan.carrier.pixels, [plan.embeds[0][0].pixels]))


def test_two_embeds_collisions():
    rng = np.random.default_rng(10)
    carrier = _random(rng, 1200, 900)
    first = _random(rng, 299, 299)
    second = _random(rng, 224, 224)
    plan = EmbedPlan(carrier, ((first, ScaleSpec(299, 299)), (second, ScaleSpec(224, 224))))
    combined, report = generate_attack(plan)
    assert np.array_equal(combined.pixels, naive_attack(carrier.pixels, [first.pixels, second.pixels]))
    assert resize(combined, ScaleSpec(224, 224)) == second
    assert report.collisions == int(report.collision_mask.sum()) > 0

    revealed = resize(combined, ScaleSpec(299, 299)).pixels
    # a revealed pixel is damaged only if one of its source positions was overwritten
    wrong = np.any(revealed != first.pixels, axis=2)
    assert wrong.any()
    cx, cy = axis_neighbors(299, 1200), axis_neighbors(299, 900)
    m = report.collision_mask
    touched = m[np.ix_(cy.lower, cx.lower)] | m[np.ix_(cy.upper, cx.upper)] | m[np.ix_(cy.lower, cx.upper)] | m[np.ix_(cy.upper, cx.lower)]
    assert not np.any(wrong & ~touched)
