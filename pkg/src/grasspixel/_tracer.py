"""Numba path-tracing kernels: BVH, counter-based RNG, light sampling.

Everything here is deterministic per pixel: the random stream is keyed on
(seed, pixel index, sample index) with a splitmix64-style hash, so the image
is bit-identical however the rows are scheduled across worker threads.

Per path vertex the estimator takes one environment sample (luminance-CDF
texel importance sampling, or cosine-hemisphere for tiny/uniform maps), one
sun shadow ray, and one cosine-distributed diffuse bounce. Environment hits
after a bounce terminate the path without adding radiance, since the
environment was already counted by next-event estimation at the vertex.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# environment sampling strategies
ENV_BLACK = 0
ENV_COSINE = 1
ENV_CDF = 2

# below this texel count the cosine-hemisphere sampler beats the CDF
TINY_ENV_TEXELS = 64

_U = np.uint64
_EPS_T = 1e-9
_RAY_OFFSET = 1e-7


# ---------------------------------------------------------------------------
# BVH construction (host side, numpy)
# ---------------------------------------------------------------------------

def build_bvh(tri_verts: np.ndarray, leaf_size: int = 4):
    """Median-split BVH. Returns flattened node arrays and the triangle order.

    Nodes: (bbox_min, bbox_max, left, right, start, count); count > 0 marks a
    leaf whose triangles are contiguous in the reordered triangle arrays.
    """
    n = tri_verts.shape[0]
    if n == 0:
        raise ValueError("cannot build a BVH over an empty scene")
    lo = tri_verts.min(axis=1)
    hi = tri_verts.max(axis=1)
    centroids = (lo + hi) * 0.5

    order = np.arange(n)
    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []

    def new_node():
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_min) - 1

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        ni, s, e = stack.pop()
        idx = order[s:e]
        node_min[ni] = lo[idx].min(axis=0)
        node_max[ni] = hi[idx].max(axis=0)
        if e - s <= leaf_size:
            node_start[ni] = s
            node_count[ni] = e - s
            continue
        cen = centroids[idx]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(cen[:, axis], mid)
        order[s:e] = idx[part]
        left = new_node()
        right = new_node()
        node_left[ni] = left
        node_right[ni] = right
        stack.append((left, s, s + mid))
        stack.append((right, s + mid, e))

    return (
        np.ascontiguousarray(node_min, dtype=np.float64),
        np.ascontiguousarray(node_max, dtype=np.float64),
        np.asarray(node_left, dtype=np.int32),
        np.asarray(node_right, dtype=np.int32),
        np.asarray(node_start, dtype=np.int32),
        np.asarray(node_count, dtype=np.int32),
        order,
    )


def build_env_distribution(radiance: np.ndarray, luma: np.ndarray):
    """Luminance-weighted texel CDF for equirectangular importance sampling.

    Returns (cdf, pdf) flattened row-major; pdf is per steradian for a
    direction drawn uniformly inside the chosen texel.
    """
    h, w = radiance.shape[:2]
    lum = radiance @ luma
    theta_edges = np.pi * np.arange(h + 1) / h
    band = (2 * np.pi / w) * (np.cos(theta_edges[:-1]) - np.cos(theta_edges[1:]))
    omega = np.repeat(band[:, None], w, axis=1)
    weight = (lum * omega).ravel()
    total = weight.sum()
    if total <= 0.0:
        return np.zeros(h * w), np.zeros(h * w), 0.0
    cdf = np.cumsum(weight) / total
    cdf[-1] = 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        pdf = np.where(omega.ravel() > 0, weight / (total * omega.ravel()), 0.0)
    return cdf, pdf, float(total)


# ---------------------------------------------------------------------------
# Device-style helpers (numba)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@njit(cache=True, inline="always")
def _rng_init(seed, pixel, sample):
    s = _mix64(_U(seed) ^ _U(0x9E3779B97F4A7C15))
    s = _mix64(s ^ (_U(pixel) * _U(0xD1342543DE82EF95)))
    s = _mix64(s ^ (_U(sample) * _U(0xAF251AF3B0F025B5)))
    return s


@njit(cache=True, inline="always")
def _rng_next(state):
    state = state + _U(0x9E3779B97F4A7C15)
    z = _mix64(state)
    return state, (z >> _U(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def _safe_component(d):
    if abs(d) < 1e-12:
        return 1e-12 if d >= 0.0 else -1e-12
    return d


@njit(cache=True, inline="always")
def _normalize3(x, y, z):
    inv = 1.0 / math.sqrt(x * x + y * y + z * z)
    return x * inv, y * inv, z * inv


@njit(cache=True)
def _bvh_nearest(ox, oy, oz, dx, dy, dz, t_max,
                 node_min, node_max, node_left, node_right, node_start, node_count,
                 v0, e1, e2, stack):
    ivx = 1.0 / _safe_component(dx)
    ivy = 1.0 / _safe_component(dy)
    ivz = 1.0 / _safe_component(dz)
    best_t = t_max
    best_i = -1
    sp = 0
    stack[sp] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        tx1 = (node_min[ni, 0] - ox) * ivx
        tx2 = (node_max[ni, 0] - ox) * ivx
        tlo = min(tx1, tx2)
        thi = max(tx1, tx2)
        ty1 = (node_min[ni, 1] - oy) * ivy
        ty2 = (node_max[ni, 1] - oy) * ivy
        tlo = max(tlo, min(ty1, ty2))
        thi = min(thi, max(ty1, ty2))
        tz1 = (node_min[ni, 2] - oz) * ivz
        tz2 = (node_max[ni, 2] - oz) * ivz
        tlo = max(tlo, min(tz1, tz2))
        thi = min(thi, max(tz1, tz2))
        if tlo > thi or tlo > best_t or thi < _EPS_T:
            continue
        cnt = node_count[ni]
        if cnt > 0:
            start = node_start[ni]
            for k in range(start, start + cnt):
                pvx = dy * e2[k, 2] - dz * e2[k, 1]
                pvy = dz * e2[k, 0] - dx * e2[k, 2]
                pvz = dx * e2[k, 1] - dy * e2[k, 0]
                det = e1[k, 0] * pvx + e1[k, 1] * pvy + e1[k, 2] * pvz
                if abs(det) < 1e-14:
                    continue
                inv = 1.0 / det
                tvx = ox - v0[k, 0]
                tvy = oy - v0[k, 1]
                tvz = oz - v0[k, 2]
                u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv
                if u < 0.0 or u > 1.0:
                    continue
                qvx = tvy * e1[k, 2] - tvz * e1[k, 1]
                qvy = tvz * e1[k, 0] - tvx * e1[k, 2]
                qvz = tvx * e1[k, 1] - tvy * e1[k, 0]
                v = (dx * qvx + dy * qvy + dz * qvz) * inv
                if v < 0.0 or u + v > 1.0:
                    continue
                t = (e2[k, 0] * qvx + e2[k, 1] * qvy + e2[k, 2] * qvz) * inv
                if _EPS_T < t < best_t:
                    best_t = t
                    best_i = k
        else:
            stack[sp] = node_left[ni]
            sp += 1
            stack[sp] = node_right[ni]
            sp += 1
    return best_t, best_i


@njit(cache=True)
def _bvh_occluded(ox, oy, oz, dx, dy, dz, t_max,
                  node_min, node_max, node_left, node_right, node_start, node_count,
                  v0, e1, e2, stack):
    ivx = 1.0 / _safe_component(dx)
    ivy = 1.0 / _safe_component(dy)
    ivz = 1.0 / _safe_component(dz)
    sp = 0
    stack[sp] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        tx1 = (node_min[ni, 0] - ox) * ivx
        tx2 = (node_max[ni, 0] - ox) * ivx
        tlo = min(tx1, tx2)
        thi = max(tx1, tx2)
        ty1 = (node_min[ni, 1] - oy) * ivy
        ty2 = (node_max[ni, 1] - oy) * ivy
        tlo = max(tlo, min(ty1, ty2))
        thi = min(thi, max(ty1, ty2))
        tz1 = (node_min[ni, 2] - oz) * ivz
        tz2 = (node_max[ni, 2] - oz) * ivz
        tlo = max(tlo, min(tz1, tz2))
        thi = min(thi, max(tz1, tz2))
        if tlo > thi or tlo > t_max or thi < _EPS_T:
            continue
        cnt = node_count[ni]
        if cnt > 0:
            start = node_start[ni]
            for k in range(start, start + cnt):
                pvx = dy * e2[k, 2] - dz * e2[k, 1]
                pvy = dz * e2[k, 0] - dx * e2[k, 2]
                pvz = dx * e2[k, 1] - dy * e2[k, 0]
                det = e1[k, 0] * pvx + e1[k, 1] * pvy + e1[k, 2] * pvz
                if abs(det) < 1e-14:
                    continue
                inv = 1.0 / det
                tvx = ox - v0[k, 0]
                tvy = oy - v0[k, 1]
                tvz = oz - v0[k, 2]
                u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv
                if u < 0.0 or u > 1.0:
                    continue
                qvx = tvy * e1[k, 2] - tvz * e1[k, 1]
                qvy = tvz * e1[k, 0] - tvx * e1[k, 2]
                qvz = tvx * e1[k, 1] - tvy * e1[k, 0]
                v = (dx * qvx + dy * qvy + dz * qvz) * inv
                if v < 0.0 or u + v > 1.0:
                    continue
                t = (e2[k, 0] * qvx + e2[k, 1] * qvy + e2[k, 2] * qvz) * inv
                if _EPS_T < t < t_max:
                    return True
        else:
            stack[sp] = node_left[ni]
            sp += 1
            stack[sp] = node_right[ni]
            sp += 1
    return False


@njit(cache=True, inline="always")
def _env_lookup(env, dx, dy, dz):
    h = env.shape[0]
    w = env.shape[1]
    c = dy
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    theta = math.acos(c)
    row = int(theta / math.pi * h)
    if row > h - 1:
        row = h - 1
    u = math.atan2(dx, dz) / (2.0 * math.pi)
    u = u - math.floor(u)
    col = int(u * w)
    if col > w - 1:
        col = w - 1
    return row, col


@njit(cache=True, inline="always")
def _onb(nx, ny, nz):
    """Orthonormal tangents for a unit normal (Duff et al. construction)."""
    s = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (s + nz)
    b = nx * ny * a
    t1x = 1.0 + s * nx * nx * a
    t1y = s * b
    t1z = -s * nx
    t2x = b
    t2y = s + ny * ny * a
    t2z = -ny
    return t1x, t1y, t1z, t2x, t2y, t2z


@njit(cache=True, inline="always")
def _cosine_dir(nx, ny, nz, u1, u2):
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    lx = r * math.cos(phi)
    ly = r * math.sin(phi)
    lz = math.sqrt(max(1.0 - u1, 0.0))
    t1x, t1y, t1z, t2x, t2y, t2z = _onb(nx, ny, nz)
    dx = lx * t1x + ly * t2x + lz * nx
    dy = lx * t1y + ly * t2y + lz * ny
    dz = lx * t1z + ly * t2z + lz * nz
    return _normalize3(dx, dy, dz)


@njit(cache=True, inline="always")
def _ggx_spec(nx, ny, nz, wox, woy, woz, wix, wiy, wiz, alpha):
    """White GGX lobe (F = 1) with Smith G1*G1 masking. Returns scalar."""
    ni = nx * wix + ny * wiy + nz * wiz
    no = nx * wox + ny * woy + nz * woz
    if ni <= 0.0 or no <= 0.0:
        return 0.0
    hx, hy, hz = _normalize3(wix + wox, wiy + woy, wiz + woz)
    nh = nx * hx + ny * hy + nz * hz
    if nh <= 0.0:
        return 0.0
    a2 = alpha * alpha
    d = nh * nh * (a2 - 1.0) + 1.0
    D = a2 / (math.pi * d * d)
    g1i = 2.0 * ni / (ni + math.sqrt(a2 + (1.0 - a2) * ni * ni))
    g1o = 2.0 * no / (no + math.sqrt(a2 + (1.0 - a2) * no * no))
    return D * g1i * g1o / (4.0 * ni * no)


@njit(cache=True)
def render_rows(out, y0, y1, width, height,
                cpx, cpy, cpz, rx, ry, rz, ux, uy, uz, fx, fy, fz, half_w, half_h,
                v0, e1, e2, tri_n, tri_mat,
                node_min, node_max, node_left, node_right, node_start, node_count,
                mat_albedo, mat_spec_w, mat_alpha,
                env, env_cdf, env_pdf, env_mode,
                sun_x, sun_y, sun_z, sun_r, sun_g, sun_b, has_sun,
                spp, seed, bounces):
    """Render rows [y0, y1) into ``out``. Deterministic per pixel."""
    stack = np.empty(64, dtype=np.int32)
    env_h = env.shape[0]
    env_w = env.shape[1]
    strata = int(math.sqrt(spp))
    if strata * strata != spp:
        strata = 0

    for py in range(y0, y1):
        for px in range(width):
            pixel = py * width + px
            acc_r = 0.0
            acc_g = 0.0
            acc_b = 0.0
            for s in range(spp):
                state = _rng_init(seed, pixel, s)
                state, u1 = _rng_next(state)
                state, u2 = _rng_next(state)
                if strata > 0:
                    jx = ((s % strata) + u1) / strata
                    jy = ((s // strata) + u2) / strata
                else:
                    jx = u1
                    jy = u2
                ndc_x = 2.0 * ((px + jx) / width) - 1.0
                ndc_y = 1.0 - 2.0 * ((py + jy) / height)
                dx = fx + ndc_x * half_w * rx + ndc_y * half_h * ux
                dy = fy + ndc_x * half_w * ry + ndc_y * half_h * uy
                dz = fz + ndc_x * half_w * rz + ndc_y * half_h * uz
                dx, dy, dz = _normalize3(dx, dy, dz)
                ox, oy, oz = cpx, cpy, cpz

                t, idx = _bvh_nearest(ox, oy, oz, dx, dy, dz, 1e18,
                                      node_min, node_max, node_left, node_right,
                                      node_start, node_count, v0, e1, e2, stack)
                if idx < 0:
                    if env_mode != ENV_BLACK:
                        r0, c0 = _env_lookup(env, dx, dy, dz)
                        acc_r += env[r0, c0, 0]
                        acc_g += env[r0, c0, 1]
                        acc_b += env[r0, c0, 2]
                    continue

                tp_r = 1.0
                tp_g = 1.0
                tp_b = 1.0
                for bounce in range(bounces + 1):
                    hx_ = ox + t * dx
                    hy_ = oy + t * dy
                    hz_ = oz + t * dz
                    nx = tri_n[idx, 0]
                    ny = tri_n[idx, 1]
                    nz = tri_n[idx, 2]
                    if nx * dx + ny * dy + nz * dz > 0.0:  # two-sided
                        nx = -nx
                        ny = -ny
                        nz = -nz
                    hx_ += nx * _RAY_OFFSET
                    hy_ += ny * _RAY_OFFSET
                    hz_ += nz * _RAY_OFFSET
                    m = tri_mat[idx]
                    al_r = mat_albedo[m, 0]
                    al_g = mat_albedo[m, 1]
                    al_b = mat_albedo[m, 2]
                    spec_w = mat_spec_w[m]
                    alpha = mat_alpha[m]
                    wox = -dx
                    woy = -dy
                    woz = -dz
                    kd = (1.0 - spec_w) / math.pi

                    # --- environment next-event estimation
                    if env_mode == ENV_COSINE:
                        state, u1 = _rng_next(state)
                        state, u2 = _rng_next(state)
                        wix, wiy, wiz = _cosine_dir(nx, ny, nz, u1, u2)
                        cosi = nx * wix + ny * wiy + nz * wiz
                        if cosi > 0.0 and not _bvh_occluded(
                            hx_, hy_, hz_, wix, wiy, wiz, 1e18,
                            node_min, node_max, node_left, node_right,
                            node_start, node_count, v0, e1, e2, stack,
                        ):
                            r0, c0 = _env_lookup(env, wix, wiy, wiz)
                            sp = 0.0
                            if spec_w > 0.0:
                                sp = spec_w * _ggx_spec(nx, ny, nz, wox, woy, woz, wix, wiy, wiz, alpha)
                            # pdf = cos/pi cancels the cosine
                            w_d = math.pi
                            acc_r += tp_r * (kd * al_r + sp) * env[r0, c0, 0] * w_d
                            acc_g += tp_g * (kd * al_g + sp) * env[r0, c0, 1] * w_d
                            acc_b += tp_b * (kd * al_b + sp) * env[r0, c0, 2] * w_d
                    elif env_mode == ENV_CDF:
                        state, ur = _rng_next(state)
                        lo = 0
                        hi = env_h * env_w - 1
                        while lo < hi:
                            mid = (lo + hi) >> 1
                            if env_cdf[mid] <= ur:
                                lo = mid + 1
                            else:
                                hi = mid
                        r0 = lo // env_w
                        c0 = lo - r0 * env_w
                        pdf = env_pdf[lo]
                        if pdf > 0.0:
                            state, u1 = _rng_next(state)
                            state, u2 = _rng_next(state)
                            ct0 = math.cos(math.pi * r0 / env_h)
                            ct1 = math.cos(math.pi * (r0 + 1) / env_h)
                            ct = ct0 + (ct1 - ct0) * u1
                            stq = math.sqrt(max(1.0 - ct * ct, 0.0))
                            phi = 2.0 * math.pi * (c0 + u2) / env_w
                            wix = stq * math.sin(phi)
                            wiy = ct
                            wiz = stq * math.cos(phi)
                            cosi = nx * wix + ny * wiy + nz * wiz
                            if cosi > 0.0 and not _bvh_occluded(
                                hx_, hy_, hz_, wix, wiy, wiz, 1e18,
                                node_min, node_max, node_left, node_right,
                                node_start, node_count, v0, e1, e2, stack,
                            ):
                                sp = 0.0
                                if spec_w > 0.0:
                                    sp = spec_w * _ggx_spec(nx, ny, nz, wox, woy, woz, wix, wiy, wiz, alpha)
                                w_d = cosi / pdf
                                acc_r += tp_r * (kd * al_r + sp) * env[r0, c0, 0] * w_d
                                acc_g += tp_g * (kd * al_g + sp) * env[r0, c0, 1] * w_d
                                acc_b += tp_b * (kd * al_b + sp) * env[r0, c0, 2] * w_d

                    # --- sun next-event estimation (delta directional light)
                    if has_sun:
                        cosi = nx * sun_x + ny * sun_y + nz * sun_z
                        if cosi > 0.0 and not _bvh_occluded(
                            hx_, hy_, hz_, sun_x, sun_y, sun_z, 1e18,
                            node_min, node_max, node_left, node_right,
                            node_start, node_count, v0, e1, e2, stack,
                        ):
                            sp = 0.0
                            if spec_w > 0.0:
                                sp = spec_w * _ggx_spec(nx, ny, nz, wox, woy, woz, sun_x, sun_y, sun_z, alpha)
                            acc_r += tp_r * (kd * al_r + sp) * sun_r * cosi
                            acc_g += tp_g * (kd * al_g + sp) * sun_g * cosi
                            acc_b += tp_b * (kd * al_b + sp) * sun_b * cosi

                    if bounce == bounces:
                        break
                    # --- diffuse bounce (cosine pdf cancels brdf cosine)
                    state, u1 = _rng_next(state)
                    state, u2 = _rng_next(state)
                    wix, wiy, wiz = _cosine_dir(nx, ny, nz, u1, u2)
                    tp_r *= (1.0 - spec_w) * al_r
                    tp_g *= (1.0 - spec_w) * al_g
                    tp_b *= (1.0 - spec_w) * al_b
                    ox, oy, oz = hx_, hy_, hz_
                    dx, dy, dz = wix, wiy, wiz
                    t, idx = _bvh_nearest(ox, oy, oz, dx, dy, dz, 1e18,
                                          node_min, node_max, node_left, node_right,
                                          node_start, node_count, v0, e1, e2, stack)
                    if idx < 0:
                        break

            inv = 1.0 / spp
            out[py, px, 0] = acc_r * inv
            out[py, px, 1] = acc_g * inv
            out[py, px, 2] = acc_b * inv
