"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``ROOMCOMP_DISABLE_NUMBA=1`` (or have numba missing) to force the numpy
implementations. Window sums are bit-identical between the two; the image
kernel sums in a different order, so it agrees to rounding only.
"""

import os

import numpy as np

SINC_TAPS = 32
_HALF = SINC_TAPS // 2

# Directivity model codes used inside the image kernel.
DIR_OMNI = 0
DIR_TWO_WAY = 1


def _numba_requested():
    flag = os.environ.get("ROOMCOMP_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and _numba_requested()


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# fractional-octave window sums
# ---------------------------------------------------------------------------

def window_bounds(n_bins, n_fft, sample_rate, fraction):
    """Inclusive bin ranges ``[lo, hi]`` of the log-frequency window per bin."""
    k = np.arange(n_bins, dtype=np.float64)
    half = 2.0 ** (fraction / 2.0)
    df = sample_rate / n_fft
    f = k * df
    lo = np.ceil(f / half / df - 1e-9).astype(np.int64)
    hi = np.floor(f * half / df + 1e-9).astype(np.int64)
    idx = np.arange(n_bins, dtype=np.int64)
    lo = np.clip(np.minimum(lo, idx), 0, n_bins - 1)
    hi = np.clip(np.maximum(hi, idx), 0, n_bins - 1)
    return lo, hi


def _pairwise_levels(power):
    """Flat binary sum tree over ``power`` plus per-level start offsets.

    Windows are summed from tree nodes that lie inside the window, so a quiet
    window next to a loud region keeps its relative precision (a cumulative
    sum difference would not).
    """
    size = 1
    while size < power.shape[0]:
        size *= 2
    level = np.zeros(size)
    level[:power.shape[0]] = power
    levels = [level]
    while level.shape[0] > 1:
        level = level[0::2] + level[1::2]
        levels.append(level)
    offsets = np.cumsum([0] + [lv.shape[0] for lv in levels[:-1]]).astype(np.int64)
    return np.concatenate(levels), offsets


def _window_mean_numpy(power, lo, hi):
    tree, offsets = _pairwise_levels(power)
    left = np.zeros(lo.shape[0])
    right = np.zeros(lo.shape[0])
    a = lo.astype(np.int64)
    b = hi.astype(np.int64) + 1
    for off in offsets:
        live = a < b
        if not live.any():
            break
        take = live & (a & 1 == 1)
        left[take] += tree[off + a[take]]
        a[take] += 1
        take = live & (b & 1 == 1)
        b[take] -= 1
        right[take] = tree[off + b[take]] + right[take]
        a >>= 1
        b >>= 1
    return (left + right) / (hi - lo + 1)


def _window_mean_query(tree, offsets, lo, hi):
    n = lo.shape[0]
    out = np.empty(n)
    for k in range(n):
        left = 0.0
        right = 0.0
        a = lo[k]
        b = hi[k] + 1
        for off in offsets:
            if a >= b:
                break
            if a & 1:
                left += tree[off + a]
                a += 1
            if b & 1:
                b -= 1
                right = tree[off + b] + right
            a >>= 1
            b >>= 1
        out[k] = (left + right) / (hi[k] - lo[k] + 1)
    return out


# ---------------------------------------------------------------------------
# image-source accumulation
# ---------------------------------------------------------------------------

def _band_gains_two_way(cos_theta, band_freqs, f_lo, f_hi, rear_lin, out):
    # High-frequency pattern is a cardioid lifted to the rear floor; in dB it
    # is interpolated linearly over log-frequency between f_lo and f_hi.
    hi_gain = rear_lin + (1.0 - rear_lin) * 0.5 * (1.0 + cos_theta)
    hi_db = 20.0 * np.log10(hi_gain)
    span = np.log(f_hi / f_lo)
    for b in range(band_freqs.shape[0]):
        f = band_freqs[b]
        if f <= f_lo:
            t = 0.0
        elif f >= f_hi:
            t = 1.0
        else:
            t = np.log(f / f_lo) / span
        out[b] = 10.0 ** (t * hi_db / 20.0)


def _image_loop(src, rcv, dims, pow_table, dir_kind, aim, dir_params, band_freqs,
                c, fs, n_samples, direct_acc, rev_acc):
    """Scalar image-source loop; compiled by numba when available."""
    n_bands = band_freqs.shape[0]
    max_dist = c * n_samples / fs
    nx_max = int(np.ceil(max_dist / (2.0 * dims[0]))) + 1
    ny_max = int(np.ceil(max_dist / (2.0 * dims[1]))) + 1
    nz_max = int(np.ceil(max_dist / (2.0 * dims[2]))) + 1
    gains = np.empty(n_bands)
    dgain = np.ones(n_bands)
    k_idx = np.arange(-_HALF + 1, _HALF + 1)
    win_cos = np.cos(np.pi * k_idx / _HALF)
    win_sin = np.sin(np.pi * k_idx / _HALF)
    taps = np.empty(SINC_TAPS)
    f_lo = dir_params[0]
    f_hi = dir_params[1]
    rear_lin = 10.0 ** (-dir_params[2] / 20.0)
    for qx in range(2):
        for nx in range(-nx_max, nx_max + 1):
            ix = (1 - 2 * qx) * src[0] + 2 * nx * dims[0]
            dx = rcv[0] - ix
            cx0 = abs(nx - qx)
            cx1 = abs(nx)
            if abs(dx) > max_dist:
                continue
            for qy in range(2):
                for ny in range(-ny_max, ny_max + 1):
                    iy = (1 - 2 * qy) * src[1] + 2 * ny * dims[1]
                    dy = rcv[1] - iy
                    if dx * dx + dy * dy > max_dist * max_dist:
                        continue
                    cy0 = abs(ny - qy)
                    cy1 = abs(ny)
                    for qz in range(2):
                        for nz in range(-nz_max, nz_max + 1):
                            iz = (1 - 2 * qz) * src[2] + 2 * nz * dims[2]
                            dz = rcv[2] - iz
                            r = np.sqrt(dx * dx + dy * dy + dz * dz)
                            tau = r / c * fs
                            n0 = int(np.floor(tau))
                            if n0 - _HALF + 1 >= n_samples or r > max_dist:
                                continue
                            cz0 = abs(nz - qz)
                            cz1 = abs(nz)
                            inv_r = 1.0 / r
                            for b in range(n_bands):
                                gains[b] = (inv_r * pow_table[0, b, cx0]
                                            * pow_table[1, b, cx1]
                                            * pow_table[2, b, cy0]
                                            * pow_table[3, b, cy1]
                                            * pow_table[4, b, cz0]
                                            * pow_table[5, b, cz1])
                            if dir_kind == DIR_TWO_WAY:
                                # ray leaving the real source: image-to-receiver
                                # direction with mirrored axes flipped back
                                ex = dx * (1 - 2 * qx)
                                ey = dy * (1 - 2 * qy)
                                ez = dz * (1 - 2 * qz)
                                cos_t = (ex * aim[0] + ey * aim[1] + ez * aim[2]) / r
                                cos_t = min(1.0, max(-1.0, cos_t))
                                _band_gains_two_way(cos_t, band_freqs, f_lo, f_hi,
                                                    rear_lin, dgain)
                                for b in range(n_bands):
                                    gains[b] *= dgain[b]
                            frac = tau - n0
                            s = np.sin(np.pi * frac)
                            cw = np.cos(np.pi * frac / _HALF)
                            sw = np.sin(np.pi * frac / _HALF)
                            for i in range(SINC_TAPS):
                                t = k_idx[i] - frac
                                if abs(t) < 1e-12:
                                    sinc = 1.0
                                else:
                                    # sin(pi*(k - frac)) = -(-1)^k sin(pi*frac)
                                    sign = 1.0 if (k_idx[i] % 2 == 0) else -1.0
                                    sinc = -sign * s / (np.pi * t)
                                # Hann over |t| <= HALF: 0.5 * (1 + cos(pi*t/HALF))
                                w = 0.5 * (1.0 + win_cos[i] * cw + win_sin[i] * sw)
                                taps[i] = sinc * w
                            is_direct = (nx == 0 and ny == 0 and nz == 0
                                         and qx == 0 and qy == 0 and qz == 0)
                            for i in range(SINC_TAPS):
                                n = n0 + k_idx[i]
                                if n < 0 or n >= n_samples:
                                    continue
                                for b in range(n_bands):
                                    if is_direct:
                                        direct_acc[n, b] += gains[b] * taps[i]
                                    else:
                                        rev_acc[n, b] += gains[b] * taps[i]


def _enumerate_images_numpy(src, rcv, dims, c, fs, n_samples):
    """Vectorized image enumeration: returns per-image arrays."""
    max_dist = c * n_samples / fs
    nmax = [int(np.ceil(max_dist / (2.0 * d))) + 1 for d in dims]
    axes = []
    for a in range(3):
        n = np.arange(-nmax[a], nmax[a] + 1)
        q = np.array([0, 1])
        nn, qq = np.meshgrid(n, q, indexing="ij")
        nn = nn.ravel()
        qq = qq.ravel()
        pos = (1 - 2 * qq) * src[a] + 2 * nn * dims[a]
        d = rcv[a] - pos
        keep = np.abs(d) <= max_dist
        axes.append((nn[keep], qq[keep], d[keep]))
    (nx, qx, dx), (ny, qy, dy) = axes[0], axes[1]
    ix, iy = np.meshgrid(np.arange(dx.size), np.arange(dy.size), indexing="ij")
    ix = ix.ravel()
    iy = iy.ravel()
    dxy2 = dx[ix] ** 2 + dy[iy] ** 2
    keep = dxy2 <= max_dist ** 2
    ix, iy, dxy2 = ix[keep], iy[keep], dxy2[keep]
    nz, qz, dz = axes[2]
    # order matches the scalar loop closely enough; sums are compared with
    # a relative tolerance, not bit-exactly
    out = []
    for j in range(dz.size):
        r = np.sqrt(dxy2 + dz[j] ** 2)
        sel = r <= max_dist
        if not np.any(sel):
            continue
        out.append((ix[sel], iy[sel], np.full(int(sel.sum()), j), r[sel]))
    if not out:
        empty = np.zeros(0, dtype=np.int64)
        return (empty,) * 9 + (np.zeros(0),)
    ixs = np.concatenate([o[0] for o in out])
    iys = np.concatenate([o[1] for o in out])
    izs = np.concatenate([o[2] for o in out])
    r = np.concatenate([o[3] for o in out])
    return (nx[ixs], qx[ixs], dx[ixs], ny[iys], qy[iys], dy[iys],
            nz[izs], qz[izs], dz[izs], r)


def _image_accumulate_numpy(src, rcv, dims, beta, dir_kind, aim, dir_params,
                            band_freqs, c, fs, n_samples, direct_acc, rev_acc):
    (nx, qx, dx, ny, qy, dy, nz, qz, dz, r) = _enumerate_images_numpy(
        src, rcv, dims, c, fs, n_samples)
    if r.size == 0:
        return
    tau = r / c * fs
    n0 = np.floor(tau).astype(np.int64)
    live = n0 - _HALF + 1 < n_samples
    sel = lambda a: a[live]  # noqa: E731
    nx, qx, dx, ny, qy, dy = map(sel, (nx, qx, dx, ny, qy, dy))
    nz, qz, dz, r, tau, n0 = map(sel, (nz, qz, dz, r, tau, n0))
    counts = np.stack([np.abs(nx - qx), np.abs(nx), np.abs(ny - qy), np.abs(ny),
                       np.abs(nz - qz), np.abs(nz)])
    n_bands = band_freqs.size
    gains = np.empty((n_bands, r.size))
    with np.errstate(divide="ignore"):
        for b in range(n_bands):
            g = 1.0 / r
            for w in range(6):
                g = g * np.where(counts[w] > 0, beta[w, b] ** counts[w], 1.0)
            gains[b] = g
    if dir_kind == DIR_TWO_WAY:
        ex = dx * (1 - 2 * qx)
        ey = dy * (1 - 2 * qy)
        ez = dz * (1 - 2 * qz)
        cos_t = np.clip((ex * aim[0] + ey * aim[1] + ez * aim[2]) / r, -1.0, 1.0)
        f_lo, f_hi, rear_db = dir_params
        rear_lin = 10.0 ** (-rear_db / 20.0)
        hi_db = 20.0 * np.log10(rear_lin + (1.0 - rear_lin) * 0.5 * (1.0 + cos_t))
        t = np.clip(np.log(band_freqs / f_lo) / np.log(f_hi / f_lo), 0.0, 1.0)
        gains *= 10.0 ** (t[:, None] * hi_db[None, :] / 20.0)
    frac = tau - n0
    k_idx = np.arange(-_HALF + 1, _HALF + 1)
    t = k_idx[None, :] - frac[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(np.abs(t) < 1e-12, 1.0, np.sin(np.pi * t) / (np.pi * t))
    taps = sinc * 0.5 * (1.0 + np.cos(np.pi * t / _HALF))
    is_direct = ((nx == 0) & (ny == 0) & (nz == 0)
                 & (qx == 0) & (qy == 0) & (qz == 0))
    for acc, mask in ((direct_acc, is_direct), (rev_acc, ~is_direct)):
        if not np.any(mask):
            continue
        pos = n0[mask][:, None] + k_idx[None, :]
        ok = (pos >= 0) & (pos < n_samples)
        flat_pos = pos[ok]
        tap_vals = taps[mask][ok]
        for b in range(n_bands):
            weights = (gains[b, mask][:, None] * np.ones(SINC_TAPS))[ok] * tap_vals
            acc[b] += np.bincount(flat_pos, weights=weights, minlength=n_samples)


if USE_NUMBA:
    _jit = _numba.njit(cache=True, nogil=True)
    _band_gains_two_way = _jit(_band_gains_two_way)
    _image_loop_jit = _jit(_image_loop)
    _window_mean_jit = _jit(_window_mean_query)
else:
    _image_loop_jit = None
    _window_mean_jit = None


def window_mean(power, lo, hi, use_numba=None):
    """Mean of ``power[lo[k]:hi[k]+1]`` for every bin ``k``."""
    use = USE_NUMBA if use_numba is None else use_numba
    power = np.ascontiguousarray(power, dtype=np.float64)
    if use and _window_mean_jit is not None:
        tree, offsets = _pairwise_levels(power)
        return _window_mean_jit(tree, offsets, np.asarray(lo, np.int64),
                                np.asarray(hi, np.int64))
    return _window_mean_numpy(power, lo, hi)


def image_accumulate(src, rcv, dims, beta, dir_kind, aim, dir_params, band_freqs,
                     c, fs, n_samples, use_numba=None):
    """Place every image pulse into per-band accumulators.

    Returns
    -------
    direct_acc, rev_acc : ndarray, shape (n_bands, n_samples)
        Band-wise fractional-delay pulse trains for the zeroth-order image
        and for all other images.
    """
    use = USE_NUMBA if use_numba is None else use_numba
    band_freqs = np.asarray(band_freqs, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if use and _image_loop_jit is not None:
        max_order = int(np.ceil(c * n_samples / fs / (2.0 * min(dims)))) + 3
        exps = np.arange(max_order + 1, dtype=np.float64)
        # beta**0 == 1 even for a fully absorbing surface
        beta = beta[:, :, None] ** exps[None, None, :]
    direct_acc = np.zeros((band_freqs.size, n_samples))
    rev_acc = np.zeros((band_freqs.size, n_samples))
    args = (np.asarray(src, dtype=np.float64), np.asarray(rcv, dtype=np.float64),
            np.asarray(dims, dtype=np.float64),
            np.ascontiguousarray(beta, dtype=np.float64), int(dir_kind),
            np.asarray(aim, dtype=np.float64),
            np.asarray(dir_params, dtype=np.float64), band_freqs,
            float(c), float(fs), int(n_samples), direct_acc, rev_acc)
    if use and _image_loop_jit is not None:
        # sample-major accumulators keep the per-tap band writes contiguous
        direct_t = np.zeros((n_samples, band_freqs.size))
        rev_t = np.zeros((n_samples, band_freqs.size))
        _image_loop_jit(*args[:-2], direct_t, rev_t)
        direct_acc[:] = direct_t.T
        rev_acc[:] = rev_t.T
    else:
        _image_accumulate_numpy(*args)
    return direct_acc, rev_acc
