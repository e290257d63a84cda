"""Classic halftoning baselines: Bayer ordered dither, Floyd-Steinberg error
diffusion, white-noise thresholding, and direct binary search (DBS).

DBS greedily minimizes the HVS-filtered squared error with toggle and
8-neighbor swap moves, sweeping pixels in raster order and applying the best
strictly-improving candidate at each site. Because a pixel edit moves the
filtered map only inside the kernel window, every candidate is scored from
window sums in O(kernel area).
"""

import numpy as np

from .hvs import HvsConfig, build_kernel, convolve_same
from .imagecore import validate_contone

# swap neighborhood in fixed evaluation order (after the toggle candidate)
_MOVES = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]  # N NE E SE S SW W NW


def bayer_matrix(order):
    """Recursive Bayer index matrix; order must be a power of two."""
    if order < 1 or order & (order - 1):
        raise ValueError("Bayer order must be a power of two")
    m = np.zeros((1, 1), dtype=np.int64)
    n = 1
    while n < order:
        m = np.block([[4 * m, 4 * m + 2], [4 * m + 3, 4 * m + 1]])
        n *= 2
    return m

def ordered_dither(c, order=8):
    """Tile thresholds (index + 0.5)/order^2 and binarize c > threshold."""
    c = validate_contone(c)
    thresholds = (bayer_matrix(order) + 0.5) / float(order * order)
    hgt, wid = c.shape
    ty = np.arange(hgt) % order
    tx = np.arange(wid) % order
    return (c > thresholds[ty[:, None], tx[None, :]]).astype(np.float64)


def floyd_steinberg(c, serpentine=False):
    """Error diffusion with the 7/16, 3/16, 5/16, 1/16 kernel.

    Raster scan by default; serpentine reverses odd rows and mirrors the
    kernel. Accumulated value >= 0.5 rounds to white.
    """
    c = validate_contone(c)
    hgt, wid = c.shape
    acc = c.copy()
    out = np.zeros_like(acc)
    for y in range(hgt):
        reverse = serpentine and (y % 2 == 1)
        xs = range(wid - 1, -1, -1) if reverse else range(wid)
        ahead = -1 if reverse else 1
        for x in xs:
            v = acc[y, x]
            q = 1.0 if v >= 0.5 else 0.0
            out[y, x] = q
            err = v - q
            if 0 <= x + ahead < wid:
                acc[y, x + ahead] += err * (7.0 / 16.0)
            if y + 1 < hgt:
                if 0 <= x - ahead < wid:
                    acc[y + 1, x - ahead] += err * (3.0 / 16.0)
                acc[y + 1, x] += err * (5.0 / 16.0)
                if 0 <= x + ahead < wid:
                    acc[y + 1, x + ahead] += err * (1.0 / 16.0)
    return out


def white_noise_threshold(c, rng):
    """h_a = 1 where c_a exceeds an i.i.d. uniform draw."""
    c = validate_contone(c)
    u = rng.uniforms(c.size).reshape(c.shape)
    return (c > u).astype(np.float64)


def _window_dot(e, k, y, x, half, hgt, wid):
    # sum over the in-image part of the kernel window centred at (y, x)
    y0, y1 = max(0, y - half), min(hgt, y + half + 1)
    x0, x1 = max(0, x - half), min(wid, x + half + 1)
    ks = k[y0 - y + half:y1 - y + half, x0 - x + half:x1 - x + half]
    return float(np.sum(e[y0:y1, x0:x1] * ks))


def _cross_term(k, ya, xa, yb, xb, half, hgt, wid):
    # sum_j K[j-a] * K[j-b] over in-image j in both windows
    y0 = max(0, ya - half, yb - half)
    y1 = min(hgt, ya + half + 1, yb + half + 1)
    x0 = max(0, xa - half, xb - half)
    x1 = min(wid, xa + half + 1, xb + half + 1)
    if y0 >= y1 or x0 >= x1:
        return 0.0
    ka = k[y0 - ya + half:y1 - ya + half, x0 - xa + half:x1 - xa + half]
    kb = k[y0 - yb + half:y1 - yb + half, x0 - xb + half:x1 - xb + half]
    return float(np.sum(ka * kb))


def dbs_search(c, rng=None, hvs_cfg=None, seed_halftone=None, max_sweeps=20):
    """Direct binary search from a white-noise seed.

    Returns (halftone, trace) where trace rows are (sweep, hvs_mse) built
    from the accumulated accepted deltas, so it is non-increasing by
    construction; sweep 0 is the seed error.
    """
    c = validate_contone(c)
    if seed_halftone is None:
        if rng is None:
            raise ValueError("dbs_search needs an rng when no seed is given")
        h = white_noise_threshold(c, rng)
    else:
        h = np.array(seed_halftone, dtype=np.float64)
        if h.shape != c.shape:
            raise ValueError("seed halftone shape mismatch")
    kernel = build_kernel(hvs_cfg or HvsConfig())
    k = kernel.weights
    half = kernel.size // 2
    hgt, wid = c.shape
    n = c.size

    e = convolve_same(h, kernel) - convolve_same(c, kernel)
    # in-image window energy sum_j K^2[(j-a)]: feed the flipped square so the
    # convolution's own flip cancels
    k2 = convolve_same(np.ones_like(c), (k * k)[::-1, ::-1])
    sse = float(np.sum(e * e))
    trace = [(0, sse / n)]

    for sweep in range(1, max_sweeps + 1):
        changed = 0
        for y in range(hgt):
            for x in range(wid):
                da = 1.0 - 2.0 * h[y, x]
                s1a = _window_dot(e, k, y, x, half, hgt, wid)
                best = 2.0 * da * s1a + k2[y, x]     # toggle candidate
                best_move = 0
                for i, (dy, dx) in enumerate(_MOVES, start=1):
                    yb, xb = y + dy, x + dx
                    if not (0 <= yb < hgt and 0 <= xb < wid):
                        continue
                    if h[yb, xb] == h[y, x]:
                        continue                     # equal pixels: identity
                    db = -da
                    d = (2.0 * da * s1a + k2[y, x]
                         + 2.0 * db * _window_dot(e, k, yb, xb, half, hgt, wid)
                         + k2[yb, xb]
                         + 2.0 * da * db * _cross_term(k, y, x, yb, xb,
                                                       half, hgt, wid))
                    if d < best:
                        best = d
                        best_move = i
                if best < 0.0:
                    _apply(h, e, k, y, x, da, half, hgt, wid)
                    if best_move:
                        dy, dx = _MOVES[best_move - 1]
                        _apply(h, e, k, y + dy, x + dx, -da, half, hgt, wid)
                    sse += best
                    changed += 1
        if changed == 0:
            break
        trace.append((sweep, sse / n))
    return h, trace


def _apply(h, e, k, y, x, delta, half, hgt, wid):
    h[y, x] += delta
    y0, y1 = max(0, y - half), min(hgt, y + half + 1)
    x0, x1 = max(0, x - half), min(wid, x + half + 1)
    e[y0:y1, x0:x1] += delta * k[y0 - y + half:y1 - y + half,
                                 x0 - x + half:x1 - x + half]
