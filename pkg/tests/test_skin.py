from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from handpoint.imgcore import InputError
from handpoint.skin import (Rect, SkinHistogram, backproject, binarize, build_histogram, connected_components,
                            forehead_from_face, histogram_of, posterior_table, skin_posterior)


def exact_bin(rgb):
    """(hue bin, saturation bin) by rational hexcone arithmetic."""
    r, g, b = (int(c) for c in rgb)
    mx, mn = max(r, g, b), min(r, g, b)
    if mx == 0 or mx == mn:
        return 0, (0 if mx == 0 else min(int(Fraction(mx - mn, mx) * 32), 31))
    d = mx - mn
    if mx == r:
        h = 60 * Fraction(g - b, d)
    elif mx == g:
        h = 60 * (2 + Fraction(b - r, d))
    else:
        h = 60 * (4 + Fraction(r - g, d))
    h %= 360
    return min(int(h // 12), 29), min(int(Fraction(d, mx) * 32), 31)


# ---------------------------------------------------------------------------
# forehead


def test_forehead_examples():
    assert forehead_from_face(Rect(0, 0, 90, 100)) == (30, 10, 30, 20)
    assert forehead_from_face(Rect(60, 40, 60, 60)) == (80, 46, 20, 12)


def test_forehead_degenerate_face():
    with pytest.raises(InputError):
        forehead_from_face(Rect(0, 0, 2, 5))


@given(st.integers(0, 500), st.integers(0, 500), st.integers(3, 300), st.integers(10, 300))
def test_forehead_inside_face(x, y, w, h):
    fx, fy, fw, fh = forehead_from_face(Rect(x, y, w, h))
    assert fw >= 1 and fh >= 1
    assert x <= fx and fx + fw <= x + w
    assert y <= fy and fy + fh <= y + h


# ---------------------------------------------------------------------------
# histograms


def test_histogram_uniform_red_patch():
    f = np.zeros((20, 20, 3), np.uint8)
    f[5:15, 5:15] = (255, 0, 0)
    hist = build_histogram(f, Rect(5, 5, 10, 10))
    assert hist.total == 100
    assert np.count_nonzero(hist.counts) == 1
    assert hist.counts[0, 31] == 100  # hue 0, saturation 1 clamps to the last bin


def test_histogram_half_red_half_green():
    f = np.zeros((10, 10, 3), np.uint8)
    f[:, :5] = (255, 0, 0)
    f[:, 5:] = (0, 255, 0)
    hist = build_histogram(f, Rect(0, 0, 10, 10))
    assert np.count_nonzero(hist.counts) == 2
    assert hist.counts[0, 31] == 50
    assert hist.counts[10, 31] == 50  # hue 120 / 12


def test_histogram_masked_out_roi_is_error():
    f = np.zeros((10, 10, 3), np.uint8)
    with pytest.raises(InputError):
        build_histogram(f, Rect(0, 0, 5, 5), mask=np.zeros((10, 10), bool))
    with pytest.raises(InputError):
        build_histogram(f, Rect(0, 0, 0, 5))
    with pytest.raises(InputError):
        build_histogram(f, Rect(8, 8, 5, 5))


@settings(max_examples=30)
@given(hnp.arrays(np.uint8, (6, 7, 3)), hnp.arrays(bool, (6, 7)))
def test_histogram_total_conservation(f, mask):
    if not mask[1:5, 2:6].any():
        return
    hist = build_histogram(f, Rect(2, 1, 4, 4), mask=mask)
    assert hist.total == int(mask[1:5, 2:6].sum())


def test_histogram_bins_match_exact_hexcone():
    rng = np.random.default_rng(5)
    px = rng.integers(0, 256, (2000, 3))
    hist = histogram_of(px)
    oracle = np.zeros((30, 32), int)
    for p in px:
        oracle[exact_bin(p)] += 1
    assert np.array_equal(hist.counts, oracle)


def test_histogram_text_round_trip():
    hist = histogram_of(np.random.default_rng(2).integers(0, 256, (50, 3)))
    text = hist.to_text()
    assert text.splitlines()[0] == "30 32 50"
    back = SkinHistogram.from_text(text)
    assert np.array_equal(back.counts, hist.counts)
    with pytest.raises(InputError):
        SkinHistogram.from_text("30 32 51\n" + "\n".join(text.splitlines()[1:]))


# ---------------------------------------------------------------------------
# posterior


def two_bin(s, ts, n, tn):
    hs = np.zeros((30, 32), np.int64)
    hn = np.zeros((30, 32), np.int64)
    hs[0, 0], hs[1, 1] = s, ts - s
    hn[0, 0], hn[1, 1] = n, tn - n
    return SkinHistogram(hs), SkinHistogram(hn)


def test_posterior_hand_computed():
    hs, hn = two_bin(8, 10, 1, 10)
    assert abs(skin_posterior(hs, hn, (0, 0)) - 8 / 9) <= 1e-12


def test_posterior_identical_tables_equal_prior():
    counts = np.random.default_rng(1).integers(0, 5, (30, 32))
    hs = SkinHistogram(counts.copy())
    hn = SkinHistogram(counts.copy())
    prior = hs.total / (hs.total + hn.total)
    for b in zip(*np.nonzero(counts)):
        assert skin_posterior(hs, hn, b) == prior


def test_posterior_zero_cases():
    hs, hn = two_bin(0, 10, 4, 10)
    assert skin_posterior(hs, hn, (0, 0)) == 0.0
    assert skin_posterior(hs, hn, (5, 5)) == 0.0  # empty in both


def test_posterior_untrained_is_error():
    with pytest.raises(InputError):
        skin_posterior(SkinHistogram(), SkinHistogram.uniform(), (0, 0))


@settings(max_examples=30)
@given(hnp.arrays(np.int64, (30, 32), elements=st.integers(0, 20)),
       hnp.arrays(np.int64, (30, 32), elements=st.integers(0, 20)))
def test_posterior_table_is_probability(a, b):
    if a.sum() == 0 or b.sum() == 0:
        return
    t = posterior_table(SkinHistogram(a), SkinHistogram(b))
    assert ((t >= 0) & (t <= 1)).all()
    for hi, si in [(0, 0), (3, 7), (29, 31)]:
        assert t[hi, si] == pytest.approx(skin_posterior(SkinHistogram(a), SkinHistogram(b), (hi, si)), abs=1e-15)


# ---------------------------------------------------------------------------
# back-projection


def oracle_backproject(frame, fg, hs, hn):
    out = np.zeros(fg.shape)
    for y in range(frame.shape[0]):
        for x in range(frame.shape[1]):
            if not fg[y, x]:
                continue
            out[y, x] = skin_posterior(hs, hn, exact_bin(frame[y, x]))
    return out


def test_backproject_matches_per_pixel_oracle():
    rng = np.random.default_rng(9)
    frame = rng.integers(0, 256, (12, 15, 3)).astype(np.uint8)
    fg = rng.random((12, 15)) < 0.7
    hs = histogram_of(frame[:6].reshape(-1, 3))
    hn = histogram_of(frame[6:].reshape(-1, 3))
    assert np.allclose(backproject(frame, fg, hs, hn), oracle_backproject(frame, fg, hs, hn), atol=1e-15)


def test_backproject_single_bin_is_uniform():
    frame = np.full((4, 5, 3), (200, 150, 120), np.uint8)
    hs = histogram_of(frame[0, :1])
    hn = SkinHistogram.uniform()
    fg = np.ones((4, 5), bool)
    fg[0, 0] = False
    p = backproject(frame, fg, hs, hn)
    assert p[0, 0] == 0
    assert len(set(p[fg].tolist())) == 1 and p[1, 1] > 0


def test_backproject_empty_bin_is_zero():
    frame = np.full((2, 2, 3), (0, 0, 255), np.uint8)
    hs = histogram_of(np.array([[200, 150, 120]]))
    hn = histogram_of(np.array([[30, 200, 30]]))
    assert not backproject(frame, np.ones((2, 2), bool), hs, hn).any()


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31 - 1))
def test_backproject_commutes_with_pixel_permutation(seed):
    rng = np.random.default_rng(seed)
    frame = rng.integers(0, 256, (6, 8, 3)).astype(np.uint8)
    fg = rng.random((6, 8)) < 0.6
    hs = histogram_of(frame[:3].reshape(-1, 3))
    hn = SkinHistogram.uniform()
    perm = rng.permutation(48)
    pf = frame.reshape(-1, 3)[perm].reshape(6, 8, 3)
    pm = fg.reshape(-1)[perm].reshape(6, 8)
    a = backproject(frame, fg, hs, hn).reshape(-1)[perm]
    b = backproject(pf, pm, hs, hn).reshape(-1)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# binarize


def test_binarize_examples():
    m = np.array([0.0, 0.2, 0.5, 0.9])
    assert binarize(m, 0.25).tolist() == [False, False, True, True]
    assert binarize(m, 0).tolist() == [False, True, True, True]
    assert not binarize(m, 1).any()
    with pytest.raises(InputError):
        binarize(m, 1.5)


@given(hnp.arrays(np.float64, 20, elements=st.floats(0, 1)), st.floats(0, 1), st.floats(0, 1))
def test_binarize_monotone(p, t1, t2):
    lo, hi = sorted((t1, t2))
    assert not (binarize(p, hi) & ~binarize(p, lo)).any()


# ---------------------------------------------------------------------------
# connected components


def bfs_components(mask):
    seen = np.zeros(mask.shape, bool)
    comps = []
    h, w = mask.shape
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            comp = set()
            q = deque([(y, x)])
            seen[y, x] = True
            while q:
                cy, cx = q.popleft()
                comp.add((cx, cy))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
            comps.append(comp)
    return comps


def test_components_examples():
    m = np.zeros((5, 5), bool)
    assert connected_components(m) == []
    m[2, 3] = True
    (b,) = connected_components(m)
    assert b.area == 1 and b.pixel_set == {(3, 2)}
    m[3, 4] = True  # diagonal neighbour
    assert len(connected_components(m)) == 1


def test_components_sorted_and_filtered():
    m = np.zeros((10, 10), bool)
    m[0, 0] = True
    m[5:8, 5:8] = True
    m[0:2, 7:9] = True
    blobs = connected_components(m)
    assert [b.area for b in blobs] == [9, 4, 1]
    assert [b.area for b in connected_components(m, min_area=2)] == [9, 4]


@settings(max_examples=40)
@given(hnp.arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_components_match_bfs_and_partition(mask):
    blobs = connected_components(mask)
    got = sorted((frozenset(b.pixel_set) for b in blobs), key=lambda s: sorted(s))
    want = sorted((frozenset(c) for c in bfs_components(mask)), key=lambda s: sorted(s))
    assert got == want
    union = set().union(*[b.pixel_set for b in blobs]) if blobs else set()
    assert sum(b.area for b in blobs) == len(union) == int(mask.sum())
    assert [b.area for b in blobs] == sorted((b.area for b in blobs), reverse=True)
