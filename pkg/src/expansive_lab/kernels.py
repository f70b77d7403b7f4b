"""Hot numeric kernels: window metrics, reparameterized-ball dynamic programming.

Every kernel exists in two flavors: a numba ``@njit`` version (``*_nb``) and a
vectorized pure-numpy fallback (``*_np``).  The public, unsuffixed names are
bound to the numba versions unless the ``EXPANSIVE_LAB_NO_NUMBA`` environment
variable is set (to anything other than ``0``) or numba is unavailable, in
which case the numpy path is selected.  ``benchmarks/bench_kernels.py``
compares the two.

Bit-window conventions: a symbol window of radius W is packed into a uint64,
index i in [-W, W] at bit position i + W.  The one-step left shift of the
window is a right rotation of the packed word inside its 2W+1 bits.
"""

import math
import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "HAVE_NUMBA",
    "backend_name",
    "rotate_word",
    "window_distance",
    "bw_unit_bits",
    "bw_unit_vec",
    "dp_member_matrix",
    "flow_member_vec",
    "susp_member_bits",
    "susp_member_vec",
    "map_ball_bits_batch",
    "susp_map_ball_bits_batch",
    "bw_batch_bits",
    "bw_batch_vec",
    "tube_any_bits",
    "tube_any_vec",
]

_flag = os.environ.get("EXPANSIVE_LAB_NO_NUMBA", "").strip()
_disabled = _flag not in ("", "0") or "NUMBA_DISABLE_JIT" in os.environ

try:
    if _disabled:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


_U0 = np.uint64(0)
_U1 = np.uint64(1)


# ---------------------------------------------------------------------------
# scalar bit helpers (plain python; jitted copies below when numba is on)
# ---------------------------------------------------------------------------

def _py_rotr1(m, nbits):
    return np.uint64((m >> _U1) | ((m & _U1) << np.uint64(nbits - 1)))


def _py_rotl1(m, nbits):
    full = np.uint64((1 << nbits) - 1)
    top = m >> np.uint64(nbits - 1)
    return np.uint64(((m << _U1) & full) | top)


def _py_rot_k(m, k, nbits):
    if k >= 0:
        for _ in range(k):
            m = _py_rotr1(m, nbits)
    else:
        for _ in range(-k):
            m = _py_rotl1(m, nbits)
    return m


def _py_minsep(x, W):
    # smallest |i| with bit i set (centered indexing), -1 when x == 0
    if x == _U0:
        return -1
    for r in range(W + 1):
        if ((x >> np.uint64(W - r)) & _U1) != _U0:
            return r
        if ((x >> np.uint64(W + r)) & _U1) != _U0:
            return r
    return -1


def _py_bit_dist(x, W):
    r = _py_minsep(x, W)
    if r < 0:
        return 0.0
    return 2.0 ** (-r)


def _py_bw_bits(bx, fx, by, fy, W, nbits):
    # Mapping-torus path metric over the unit-height model: shortest chain of
    # horizontal segments (level u costs (1-u) d(x,y) + u d(fx,fy)) and
    # vertical segments, crossing at most one identification.  Exact for base
    # diameter <= 1; longer chains are never shorter then.
    sbx = _py_rotr1(bx, nbits)
    sby = _py_rotr1(by, nbits)
    d0 = _py_bit_dist(bx ^ by, W)
    d1 = _py_bit_dist(sbx ^ sby, W)
    best = abs(fx - fy) + min((1.0 - fx) * d0 + fx * d1, (1.0 - fy) * d0 + fy * d1)
    c = fx + fy + d0
    if c < best:
        best = c
    c = (2.0 - fx - fy) + d1
    if c < best:
        best = c
    a0 = _py_bit_dist(sbx ^ by, W)
    a1 = _py_bit_dist(_py_rotr1(sbx, nbits) ^ sby, W)
    c = (1.0 - fx) + fy + min(a0, (1.0 - fy) * a0 + fy * a1)
    if c < best:
        best = c
    b0 = _py_bit_dist(sby ^ bx, W)
    b1 = _py_bit_dist(_py_rotr1(sby, nbits) ^ sbx, W)
    c = (1.0 - fy) + fx + min(b0, (1.0 - fx) * b0 + fx * b1)
    if c < best:
        best = c
    return best


def _py_arcmax(a, ai, b, bi):
    # max over coordinates of wraparound arc distance, points in [0,1)^d
    m = 0.0
    for c in range(a.shape[1]):
        t = a[ai, c] - b[bi, c]
        t = t - math.floor(t)
        if t > 0.5:
            t = 1.0 - t
        if t > m:
            m = t
    return m


def _py_bw_vec(ox, ix, fx, oy, iy, fy):
    # same chain metric with base points given as rows of orbit arrays;
    # row i+1 holds the base-map image of row i
    d0 = _py_arcmax(ox, ix, oy, iy)
    d1 = _py_arcmax(ox, ix + 1, oy, iy + 1)
    best = abs(fx - fy) + min((1.0 - fx) * d0 + fx * d1, (1.0 - fy) * d0 + fy * d1)
    c = fx + fy + d0
    if c < best:
        best = c
    c = (2.0 - fx - fy) + d1
    if c < best:
        best = c
    a0 = _py_arcmax(ox, ix + 1, oy, iy)
    a1 = _py_arcmax(ox, ix + 2, oy, iy + 1)
    c = (1.0 - fx) + fy + min(a0, (1.0 - fy) * a0 + fy * a1)
    if c < best:
        best = c
    b0 = _py_arcmax(oy, iy + 1, ox, ix)
    b1 = _py_arcmax(oy, iy + 2, ox, ix + 1)
    c = (1.0 - fy) + fx + min(b0, (1.0 - fx) * b0 + fx * b1)
    if c < best:
        best = c
    return best


# ---------------------------------------------------------------------------
# numba-compiled scalar helpers and member kernels
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    _rotr1 = _jit(_py_rotr1)
    _rotl1 = _jit(_py_rotl1)

    @_jit
    def _rot_k(m, k, nbits):
        if k >= 0:
            for _ in range(k):
                m = _rotr1(m, nbits)
        else:
            for _ in range(-k):
                m = _rotl1(m, nbits)
        return m

    @_jit
    def _minsep(x, W):
        if x == _U0:
            return -1
        for r in range(W + 1):
            if ((x >> np.uint64(W - r)) & _U1) != _U0:
                return r
            if ((x >> np.uint64(W + r)) & _U1) != _U0:
                return r
        return -1

    @_jit
    def _bit_dist(x, W):
        r = _minsep(x, W)
        if r < 0:
            return 0.0
        return 2.0 ** (-r)

    @_jit
    def _bw_bits(bx, fx, by, fy, W, nbits):
        sbx = _rotr1(bx, nbits)
        sby = _rotr1(by, nbits)
        d0 = _bit_dist(bx ^ by, W)
        d1 = _bit_dist(sbx ^ sby, W)
        best = abs(fx - fy) + min((1.0 - fx) * d0 + fx * d1, (1.0 - fy) * d0 + fy * d1)
        c = fx + fy + d0
        if c < best:
            best = c
        c = (2.0 - fx - fy) + d1
        if c < best:
            best = c
        a0 = _bit_dist(sbx ^ by, W)
        a1 = _bit_dist(_rotr1(sbx, nbits) ^ sby, W)
        c = (1.0 - fx) + fy + min(a0, (1.0 - fy) * a0 + fy * a1)
        if c < best:
            best = c
        b0 = _bit_dist(sby ^ bx, W)
        b1 = _bit_dist(_rotr1(sby, nbits) ^ sbx, W)
        c = (1.0 - fy) + fx + min(b0, (1.0 - fx) * b0 + fx * b1)
        if c < best:
            best = c
        return best

    @_jit
    def _arcmax(a, ai, b, bi):
        m = 0.0
        for c in range(a.shape[1]):
            t = a[ai, c] - b[bi, c]
            t = t - math.floor(t)
            if t > 0.5:
                t = 1.0 - t
            if t > m:
                m = t
        return m

    @_jit
    def _bw_vec(ox, ix, fx, oy, iy, fy):
        d0 = _arcmax(ox, ix, oy, iy)
        d1 = _arcmax(ox, ix + 1, oy, iy + 1)
        best = abs(fx - fy) + min((1.0 - fx) * d0 + fx * d1, (1.0 - fy) * d0 + fy * d1)
        c = fx + fy + d0
        if c < best:
            best = c
        c = (2.0 - fx - fy) + d1
        if c < best:
            best = c
        a0 = _arcmax(ox, ix + 1, oy, iy)
        a1 = _arcmax(ox, ix + 2, oy, iy + 1)
        c = (1.0 - fx) + fy + min(a0, (1.0 - fy) * a0 + fy * a1)
        if c < best:
            best = c
        b0 = _arcmax(oy, iy + 1, ox, ix)
        b1 = _arcmax(oy, iy + 2, ox, ix + 1)
        c = (1.0 - fy) + fx + min(b0, (1.0 - fx) * b0 + fx * b1)
        if c < best:
            best = c
        return best

    @_jit
    def _dp_member_matrix_nb(M, i0, j0):
        n = M.shape[0]
        width = j0 + 1
        prev = np.zeros(width, np.bool_)
        alive = False
        for j in range(width):
            v = M[0, j]
            prev[j] = v
            alive = alive or v
        if i0 > 0:
            if not alive:
                return False
            cur = np.zeros(width, np.bool_)
            for i in range(1, i0 + 1):
                alive = False
                left = False
                for j in range(width):
                    v = False
                    if M[i, j]:
                        up = prev[j]
                        diag = prev[j - 1] if j > 0 else False
                        v = up or diag or left
                    cur[j] = v
                    left = v
                    alive = alive or v
                tmp = prev
                prev = cur
                cur = tmp
                if not alive:
                    return False
        if not prev[j0]:
            return False
        widthB = M.shape[1] - j0
        prevB = np.zeros(widthB, np.bool_)
        prevB[0] = True
        for j in range(1, widthB):
            prevB[j] = M[i0, j0 + j] and prevB[j - 1]
        curB = np.zeros(widthB, np.bool_)
        for i in range(i0 + 1, n):
            alive = False
            left = False
            for j in range(widthB):
                v = False
                if M[i, j0 + j]:
                    up = prevB[j]
                    diag = prevB[j - 1] if j > 0 else False
                    v = up or diag or left
                curB[j] = v
                left = v
                alive = alive or v
            tmp = prevB
            prevB = curB
            curB = tmp
            if not alive:
                return False
        return True

    @_jit
    def _flow_member_vec_nb(xs, ys, i0, j0, delta):
        n = xs.shape[0]
        ny = ys.shape[0]
        width = j0 + 1
        prev = np.zeros(width, np.bool_)
        alive = False
        for j in range(width):
            v = _arcmax(xs, 0, ys, j) <= delta
            prev[j] = v
            alive = alive or v
        if i0 > 0:
            if not alive:
                return False
            cur = np.zeros(width, np.bool_)
            for i in range(1, i0 + 1):
                alive = False
                left = False
                for j in range(width):
                    v = False
                    if _arcmax(xs, i, ys, j) <= delta:
                        up = prev[j]
                        diag = prev[j - 1] if j > 0 else False
                        v = up or diag or left
                    cur[j] = v
                    left = v
                    alive = alive or v
                tmp = prev
                prev = cur
                cur = tmp
                if not alive:
                    return False
        if not prev[j0]:
            return False
        widthB = ny - j0
        prevB = np.zeros(widthB, np.bool_)
        prevB[0] = True
        for j in range(1, widthB):
            prevB[j] = (_arcmax(xs, i0, ys, j0 + j) <= delta) and prevB[j - 1]
        curB = np.zeros(widthB, np.bool_)
        for i in range(i0 + 1, n):
            alive = False
            left = False
            for j in range(widthB):
                v = False
                if _arcmax(xs, i, ys, j0 + j) <= delta:
                    up = prevB[j]
                    diag = prevB[j - 1] if j > 0 else False
                    v = up or diag or left
                curB[j] = v
                left = v
                alive = alive or v
            tmp = prevB
            prevB = curB
            curB = tmp
            if not alive:
                return False
        return True

    @_jit
    def _susp_member_bits_nb(x_rots, x_idx, x_fib, y_rots, y_idx, y_fib,
                             i0, j0, delta, W, nbits):
        n = x_idx.shape[0]
        ny = y_idx.shape[0]
        width = j0 + 1
        prev = np.zeros(width, np.bool_)
        alive = False
        for j in range(width):
            v = _bw_bits(x_rots[x_idx[0]], x_fib[0],
                         y_rots[y_idx[j]], y_fib[j], W, nbits) <= delta
            prev[j] = v
            alive = alive or v
        if i0 > 0:
            if not alive:
                return False
            cur = np.zeros(width, np.bool_)
            for i in range(1, i0 + 1):
                alive = False
                left = False
                for j in range(width):
                    v = False
                    if _bw_bits(x_rots[x_idx[i]], x_fib[i],
                                y_rots[y_idx[j]], y_fib[j], W, nbits) <= delta:
                        up = prev[j]
                        diag = prev[j - 1] if j > 0 else False
                        v = up or diag or left
                    cur[j] = v
                    left = v
                    alive = alive or v
                tmp = prev
                prev = cur
                cur = tmp
                if not alive:
                    return False
        if not prev[j0]:
            return False
        widthB = ny - j0
        prevB = np.zeros(widthB, np.bool_)
        prevB[0] = True
        for j in range(1, widthB):
            ok = _bw_bits(x_rots[x_idx[i0]], x_fib[i0],
                          y_rots[y_idx[j0 + j]], y_fib[j0 + j], W, nbits) <= delta
            prevB[j] = ok and prevB[j - 1]
        curB = np.zeros(widthB, np.bool_)
        for i in range(i0 + 1, n):
            alive = False
            left = False
            for j in range(widthB):
                v = False
                if _bw_bits(x_rots[x_idx[i]], x_fib[i],
                            y_rots[y_idx[j0 + j]], y_fib[j0 + j], W, nbits) <= delta:
                    up = prevB[j]
                    diag = prevB[j - 1] if j > 0 else False
                    v = up or diag or left
                curB[j] = v
                left = v
                alive = alive or v
            tmp = prevB
            prevB = curB
            curB = tmp
            if not alive:
                return False
        return True

    @_jit
    def _susp_member_vec_nb(x_orb, x_idx, x_fib, y_orb, y_idx, y_fib,
                            i0, j0, delta):
        n = x_idx.shape[0]
        ny = y_idx.shape[0]
        width = j0 + 1
        prev = np.zeros(width, np.bool_)
        alive = False
        for j in range(width):
            v = _bw_vec(x_orb, x_idx[0], x_fib[0],
                        y_orb, y_idx[j], y_fib[j]) <= delta
            prev[j] = v
            alive = alive or v
        if i0 > 0:
            if not alive:
                return False
            cur = np.zeros(width, np.bool_)
            for i in range(1, i0 + 1):
                alive = False
                left = False
                for j in range(width):
                    v = False
                    if _bw_vec(x_orb, x_idx[i], x_fib[i],
                               y_orb, y_idx[j], y_fib[j]) <= delta:
                        up = prev[j]
                        diag = prev[j - 1] if j > 0 else False
                        v = up or diag or left
                    cur[j] = v
                    left = v
                    alive = alive or v
                tmp = prev
                prev = cur
                cur = tmp
                if not alive:
                    return False
        if not prev[j0]:
            return False
        widthB = ny - j0
        prevB = np.zeros(widthB, np.bool_)
        prevB[0] = True
        for j in range(1, widthB):
            ok = _bw_vec(x_orb, x_idx[i0], x_fib[i0],
                         y_orb, y_idx[j0 + j], y_fib[j0 + j]) <= delta
            prevB[j] = ok and prevB[j - 1]
        curB = np.zeros(widthB, np.bool_)
        for i in range(i0 + 1, n):
            alive = False
            left = False
            for j in range(widthB):
                v = False
                if _bw_vec(x_orb, x_idx[i], x_fib[i],
                           y_orb, y_idx[j0 + j], y_fib[j0 + j]) <= delta:
                    up = prevB[j]
                    diag = prevB[j - 1] if j > 0 else False
                    v = up or diag or left
                curB[j] = v
                left = v
                alive = alive or v
            tmp = prevB
            prevB = curB
            curB = tmp
            if not alive:
                return False
        return True

    @_jit
    def _map_ball_bits_batch_nb(center, atoms, N, delta, W, nbits):
        out = np.zeros(atoms.shape[0], np.bool_)
        for a in range(atoms.shape[0]):
            x = center ^ atoms[a]
            ok = _bit_dist(x, W) <= delta
            if ok:
                f = x
                b = x
                for _ in range(N):
                    f = _rotr1(f, nbits)
                    b = _rotl1(b, nbits)
                    if _bit_dist(f, W) > delta or _bit_dist(b, W) > delta:
                        ok = False
                        break
            out[a] = ok
        return out

    @_jit
    def _susp_map_ball_bits_batch_nb(c_mask, c_fib, a_masks, a_fibs,
                                     T, N, tau, delta, W, nbits):
        out = np.zeros(a_masks.shape[0], np.bool_)
        for a in range(a_masks.shape[0]):
            ok = True
            for n in range(-N, N + 1):
                tc = c_fib + n * T
                kc = int(math.floor(tc / tau))
                fc = (tc - kc * tau) / tau
                ta = a_fibs[a] + n * T
                ka = int(math.floor(ta / tau))
                fa = (ta - ka * tau) / tau
                bc = _rot_k(c_mask, kc, nbits)
                ba = _rot_k(a_masks[a], ka, nbits)
                if _bw_bits(bc, fc, ba, fa, W, nbits) > delta:
                    ok = False
                    break
            out[a] = ok
        return out

    @_jit
    def _bw_batch_bits_nb(c_mask, c_fib, a_masks, a_fibs, W, nbits):
        out = np.empty(a_masks.shape[0], np.float64)
        for a in range(a_masks.shape[0]):
            out[a] = _bw_bits(c_mask, c_fib, a_masks[a], a_fibs[a], W, nbits)
        return out

    @_jit
    def _bw_batch_vec_nb(c_orb, c_idx, c_fib, a_orbs, a_fibs):
        # a_orbs rows hold [base, f(base), f2(base)] stacked as (na, 3, d)
        out = np.empty(a_orbs.shape[0], np.float64)
        for a in range(a_orbs.shape[0]):
            out[a] = _bw_vec(c_orb, c_idx, c_fib, a_orbs[a], 0, a_fibs[a])
        return out

    @_jit
    def _tube_any_bits_nb(orb_rots, orb_idx, orb_fib, a_masks, a_fibs, tube, W, nbits):
        out = np.zeros(a_masks.shape[0], np.bool_)
        for a in range(a_masks.shape[0]):
            for s in range(orb_idx.shape[0]):
                if _bw_bits(orb_rots[orb_idx[s]], orb_fib[s],
                            a_masks[a], a_fibs[a], W, nbits) <= tube:
                    out[a] = True
                    break
        return out

    @_jit
    def _tube_any_vec_nb(orb, orb_idx, orb_fib, a_orbs, a_fibs, tube):
        out = np.zeros(a_orbs.shape[0], np.bool_)
        for a in range(a_orbs.shape[0]):
            for s in range(orb_idx.shape[0]):
                if _bw_vec(orb, orb_idx[s], orb_fib[s],
                           a_orbs[a], 0, a_fibs[a]) <= tube:
                    out[a] = True
                    break
        return out


# ---------------------------------------------------------------------------
# vectorized numpy fallbacks
# ---------------------------------------------------------------------------

def _rotr1_arr(m, nbits):
    return (m >> _U1) | ((m & _U1) << np.uint64(nbits - 1))


def minsep_array(xors, W):
    """Vectorized smallest set-bit |index|, -1 where the word is zero."""
    xors = np.asarray(xors, dtype=np.uint64)
    out = np.full(xors.shape, -1, dtype=np.int64)
    undecided = xors != _U0
    for r in range(W + 1):
        if not undecided.any():
            break
        m = np.uint64((1 << (W - r)) | (1 << (W + r)))
        hit = undecided & ((xors & m) != _U0)
        out[hit] = r
        undecided &= ~hit
    return out


def _bit_dist_arr(xors, W):
    r = minsep_array(xors, W)
    return np.where(r < 0, 0.0, np.ldexp(1.0, -np.maximum(r, 0)))


def _arcmax_rows(A, B):
    # A: (n, d), B: (n, d) aligned rows -> arc-max per row
    t = (A - B) % 1.0
    t = np.minimum(t, 1.0 - t)
    return t.max(axis=1)


def _bw_row_bits_np(bx, fx, my, fy, W, nbits):
    bx = np.uint64(bx)
    my = np.asarray(my, dtype=np.uint64)
    sbx = _rotr1_arr(bx, nbits)
    smy = _rotr1_arr(my, nbits)
    d0 = _bit_dist_arr(bx ^ my, W)
    d1 = _bit_dist_arr(sbx ^ smy, W)
    c = np.abs(fx - fy) + np.minimum((1 - fx) * d0 + fx * d1,
                                     (1 - fy) * d0 + fy * d1)
    c = np.minimum(c, fx + fy + d0)
    c = np.minimum(c, (2.0 - fx - fy) + d1)
    a0 = _bit_dist_arr(sbx ^ my, W)
    a1 = _bit_dist_arr(_rotr1_arr(sbx, nbits) ^ smy, W)
    c = np.minimum(c, (1.0 - fx) + fy + np.minimum(a0, (1 - fy) * a0 + fy * a1))
    b0 = _bit_dist_arr(smy ^ bx, W)
    b1 = _bit_dist_arr(_rotr1_arr(smy, nbits) ^ sbx, W)
    c = np.minimum(c, (1.0 - fy) + fx + np.minimum(b0, (1 - fx) * b0 + fx * b1))
    return c


def _bw_row_vec_np(ox, ix, fx, oy, iy, fy):
    base_x = ox[ix]
    j = np.asarray(iy)
    d0 = _arcmax_rows(np.broadcast_to(base_x, (len(j), ox.shape[1])), oy[j])
    d1 = _arcmax_rows(np.broadcast_to(ox[ix + 1], (len(j), ox.shape[1])), oy[j + 1])
    c = np.abs(fx - fy) + np.minimum((1 - fx) * d0 + fx * d1,
                                     (1 - fy) * d0 + fy * d1)
    c = np.minimum(c, fx + fy + d0)
    c = np.minimum(c, (2.0 - fx - fy) + d1)
    a0 = _arcmax_rows(np.broadcast_to(ox[ix + 1], (len(j), ox.shape[1])), oy[j])
    a1 = _arcmax_rows(np.broadcast_to(ox[ix + 2], (len(j), ox.shape[1])), oy[j + 1])
    c = np.minimum(c, (1.0 - fx) + fy + np.minimum(a0, (1 - fy) * a0 + fy * a1))
    b0 = _arcmax_rows(oy[j + 1], np.broadcast_to(ox[ix], (len(j), ox.shape[1])))
    b1 = _arcmax_rows(oy[j + 2], np.broadcast_to(ox[ix + 1], (len(j), ox.shape[1])))
    c = np.minimum(c, (1.0 - fy) + fx + np.minimum(b0, (1 - fx) * b0 + fx * b1))
    return c


def _chain_row_np(ok, cand):
    # reach[j] = ok[j] and (cand[j] or reach[j-1]); vectorized run fill
    n = ok.shape[0]
    idx = np.arange(n)
    seeded = cand & ok
    last_block = np.maximum.accumulate(np.where(~ok, idx, -1))
    last_seed = np.maximum.accumulate(np.where(seeded, idx, -1))
    return ok & (last_seed >= 0) & (last_seed > last_block)


def _member_np_rows(okrow, n, ny, i0, j0):
    reach = okrow(0, 0, j0 + 1)
    if i0 > 0:
        if not reach.any():
            return False
        for i in range(1, i0 + 1):
            ok = okrow(i, 0, j0 + 1)
            seed = reach.copy()
            seed[1:] |= reach[:-1]
            reach = _chain_row_np(ok, seed)
            if not reach.any():
                return False
    if not reach[j0]:
        return False
    okB = okrow(i0, j0, ny)
    seedB = np.zeros(ny - j0, dtype=bool)
    seedB[0] = True
    reachB = _chain_row_np(okB, seedB)
    for i in range(i0 + 1, n):
        okB = okrow(i, j0, ny)
        seed = reachB.copy()
        seed[1:] |= reachB[:-1]
        reachB = _chain_row_np(okB, seed)
        if not reachB.any():
            return False
    return bool(reachB.any())


def dp_member_matrix_np(M, i0, j0):
    M = np.asarray(M, dtype=bool)

    def okrow(i, a, b):
        return M[i, a:b].copy()

    return _member_np_rows(okrow, M.shape[0], M.shape[1], i0, j0)


def flow_member_vec_np(xs, ys, i0, j0, delta):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)

    def okrow(i, a, b):
        t = (xs[i][None, :] - ys[a:b]) % 1.0
        t = np.minimum(t, 1.0 - t)
        return t.max(axis=1) <= delta

    return _member_np_rows(okrow, xs.shape[0], ys.shape[0], i0, j0)


def susp_member_bits_np(x_rots, x_idx, x_fib, y_rots, y_idx, y_fib,
                        i0, j0, delta, W, nbits):
    my_all = y_rots[y_idx]

    def okrow(i, a, b):
        row = _bw_row_bits_np(x_rots[x_idx[i]], x_fib[i],
                              my_all[a:b], y_fib[a:b], W, nbits)
        return row <= delta

    return _member_np_rows(okrow, x_idx.shape[0], y_idx.shape[0], i0, j0)


def susp_member_vec_np(x_orb, x_idx, x_fib, y_orb, y_idx, y_fib,
                       i0, j0, delta):
    def okrow(i, a, b):
        row = _bw_row_vec_np(x_orb, x_idx[i], x_fib[i],
                             y_orb, y_idx[a:b], y_fib[a:b])
        return row <= delta

    return _member_np_rows(okrow, x_idx.shape[0], y_idx.shape[0], i0, j0)


def map_ball_bits_batch_np(center, atoms, N, delta, W, nbits):
    atoms = np.asarray(atoms, dtype=np.uint64)
    x = np.uint64(center) ^ atoms
    ok = _bit_dist_arr(x, W) <= delta
    f = x.copy()
    b = x.copy()
    full = np.uint64((1 << nbits) - 1)
    for _ in range(N):
        f = _rotr1_arr(f, nbits)
        b = ((b << _U1) & full) | (b >> np.uint64(nbits - 1))
        ok &= _bit_dist_arr(f, W) <= delta
        ok &= _bit_dist_arr(b, W) <= delta
    return ok


def susp_map_ball_bits_batch_np(c_mask, c_fib, a_masks, a_fibs,
                                T, N, tau, delta, W, nbits):
    a_masks = np.asarray(a_masks, dtype=np.uint64)
    na = a_masks.shape[0]
    ok = np.ones(na, dtype=bool)
    for n in range(-N, N + 1):
        tc = c_fib + n * T
        kc = int(math.floor(tc / tau))
        fc = (tc - kc * tau) / tau
        ta = a_fibs + n * T
        ka = np.floor(ta / tau).astype(np.int64)
        fa = (ta - ka * tau) / tau
        bc = np.uint64(_py_rot_k(np.uint64(c_mask), kc, nbits))
        # group atoms by rotation count (few distinct values)
        row = np.empty(na, dtype=np.float64)
        for k in np.unique(ka):
            sel = ka == k
            rm = a_masks[sel]
            r = rm
            if k >= 0:
                for _ in range(int(k)):
                    r = _rotr1_arr(r, nbits)
            else:
                full = np.uint64((1 << nbits) - 1)
                for _ in range(int(-k)):
                    r = ((r << _U1) & full) | (r >> np.uint64(nbits - 1))
            row[sel] = _bw_row_bits_np(bc, fc, r, fa[sel], W, nbits)
        ok &= row <= delta
        if not ok.any():
            break
    return ok


def bw_batch_bits_np(c_mask, c_fib, a_masks, a_fibs, W, nbits):
    return _bw_row_bits_np(np.uint64(c_mask), c_fib,
                           np.asarray(a_masks, dtype=np.uint64),
                           np.asarray(a_fibs, dtype=np.float64), W, nbits)


def bw_batch_vec_np(c_orb, c_idx, c_fib, a_orbs, a_fibs):
    a_orbs = np.asarray(a_orbs, dtype=np.float64)
    na = a_orbs.shape[0]
    out = np.empty(na, dtype=np.float64)
    for a in range(na):
        out[a] = _py_bw_vec(c_orb, c_idx, c_fib, a_orbs[a], 0, a_fibs[a])
    return out


def tube_any_bits_np(orb_rots, orb_idx, orb_fib, a_masks, a_fibs, tube, W, nbits):
    a_masks = np.asarray(a_masks, dtype=np.uint64)
    out = np.zeros(a_masks.shape[0], dtype=bool)
    pending = np.arange(a_masks.shape[0])
    for s in range(orb_idx.shape[0]):
        if pending.size == 0:
            break
        row = _bw_row_bits_np(orb_rots[orb_idx[s]], orb_fib[s],
                              a_masks[pending], a_fibs[pending], W, nbits)
        hit = row <= tube
        out[pending[hit]] = True
        pending = pending[~hit]
    return out


def tube_any_vec_np(orb, orb_idx, orb_fib, a_orbs, a_fibs, tube):
    a_orbs = np.asarray(a_orbs, dtype=np.float64)
    out = np.zeros(a_orbs.shape[0], dtype=bool)
    for a in range(a_orbs.shape[0]):
        for s in range(orb_idx.shape[0]):
            if _py_bw_vec(orb, orb_idx[s], orb_fib[s], a_orbs[a], 0, a_fibs[a]) <= tube:
                out[a] = True
                break
    return out


# ---------------------------------------------------------------------------
# public bindings
# ---------------------------------------------------------------------------

def rotate_word(mask, k, nbits):
    """Apply k steps of the window shift (negative k for the inverse)."""
    return np.uint64(_py_rot_k(np.uint64(mask), int(k), int(nbits)))


def window_distance(a, b, W):
    """2^-(smallest disagreeing |index|) between two packed windows."""
    return _py_bit_dist(np.uint64(a) ^ np.uint64(b), W)


def bw_unit_bits(bx, fx, by, fy, W, nbits):
    """Suspension-space distance (unit height) between two fibered windows."""
    return _py_bw_bits(np.uint64(bx), float(fx), np.uint64(by), float(fy), W, nbits)


def bw_unit_vec(ox, ix, fx, oy, iy, fy):
    """Suspension-space distance (unit height) with vector bases from orbit rows."""
    return _py_bw_vec(ox, int(ix), float(fx), oy, int(iy), float(fy))


if USE_NUMBA:
    dp_member_matrix = _dp_member_matrix_nb
    flow_member_vec = _flow_member_vec_nb
    susp_member_bits = _susp_member_bits_nb
    susp_member_vec = _susp_member_vec_nb
    map_ball_bits_batch = _map_ball_bits_batch_nb
    susp_map_ball_bits_batch = _susp_map_ball_bits_batch_nb
    bw_batch_bits = _bw_batch_bits_nb
    bw_batch_vec = _bw_batch_vec_nb
    tube_any_bits = _tube_any_bits_nb
    tube_any_vec = _tube_any_vec_nb
else:
    dp_member_matrix = dp_member_matrix_np
    flow_member_vec = flow_member_vec_np
    susp_member_bits = susp_member_bits_np
    susp_member_vec = susp_member_vec_np
    map_ball_bits_batch = map_ball_bits_batch_np
    susp_map_ball_bits_batch = susp_map_ball_bits_batch_np
    bw_batch_bits = bw_batch_bits_np
    bw_batch_vec = bw_batch_vec_np
    tube_any_bits = tube_any_bits_np
    tube_any_vec = tube_any_vec_np
