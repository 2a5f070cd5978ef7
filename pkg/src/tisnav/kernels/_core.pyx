# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the user-fix optimisers.

Same contracts and operation order as ``pyfallback``; see that module for
the behavioural documentation.
"""

from libc.math cimport sqrt

import numpy as np

__all__ = [
    "ray_objective",
    "ray_objective_gradient",
    "gradient_descent",
    "nelder_mead",
]


cdef double _objective(double px, double py, double pz,
                       const double[:, ::1] o, const double[:, ::1] d,
                       Py_ssize_t n) noexcept nogil:
    cdef double total = 0.0
    cdef double vx, vy, vz, t, rx, ry, rz
    cdef Py_ssize_t i
    for i in range(n):
        vx = px - o[i, 0]
        vy = py - o[i, 1]
        vz = pz - o[i, 2]
        t = vx * d[i, 0] + vy * d[i, 1] + vz * d[i, 2]
        if t > 0.0:
            rx = vx - t * d[i, 0]
            ry = vy - t * d[i, 1]
            rz = vz - t * d[i, 2]
        else:
            rx = vx
            ry = vy
            rz = vz
        total += sqrt(rx * rx + ry * ry + rz * rz)
    return total


cdef double _gradient(double px, double py, double pz,
                      const double[:, ::1] o, const double[:, ::1] d,
                      Py_ssize_t n, double* gx, double* gy,
                      double* gz) noexcept nogil:
    cdef double total = 0.0
    cdef double vx, vy, vz, t, rx, ry, rz, dist
    cdef Py_ssize_t i
    gx[0] = 0.0
    gy[0] = 0.0
    gz[0] = 0.0
    for i in range(n):
        vx = px - o[i, 0]
        vy = py - o[i, 1]
        vz = pz - o[i, 2]
        t = vx * d[i, 0] + vy * d[i, 1] + vz * d[i, 2]
        if t > 0.0:
            rx = vx - t * d[i, 0]
            ry = vy - t * d[i, 1]
            rz = vz - t * d[i, 2]
        else:
            rx = vx
            ry = vy
            rz = vz
        dist = sqrt(rx * rx + ry * ry + rz * rz)
        total += dist
        if dist > 0.0:
            gx[0] += rx / dist
            gy[0] += ry / dist
            gz[0] += rz / dist
    return total


cdef _check(origins, directions):
    o = np.ascontiguousarray(origins, dtype=np.float64)
    d = np.ascontiguousarray(directions, dtype=np.float64)
    if o.ndim != 2 or o.shape[1] != 3 or o.shape != d.shape:
        raise ValueError("origins and directions must both be (n, 3)")
    return o, d


def ray_objective(point, origins, directions):
    """Sum of distances from ``point`` to each forward half-line."""
    o, d = _check(origins, directions)
    p = np.asarray(point, dtype=np.float64)
    cdef const double[:, ::1] ov = o
    cdef const double[:, ::1] dv = d
    cdef double px = p[0], py = p[1], pz = p[2]
    cdef double out
    with nogil:
        out = _objective(px, py, pz, ov, dv, ov.shape[0])
    return out


def ray_objective_gradient(point, origins, directions):
    """Objective value and its subgradient at ``point``."""
    o, d = _check(origins, directions)
    p = np.asarray(point, dtype=np.float64)
    cdef const double[:, ::1] ov = o
    cdef const double[:, ::1] dv = d
    cdef double px = p[0], py = p[1], pz = p[2]
    cdef double f, gx, gy, gz
    with nogil:
        f = _gradient(px, py, pz, ov, dv, ov.shape[0], &gx, &gy, &gz)
    return f, np.array([gx, gy, gz])


def gradient_descent(origins, directions, start, double step_m, double tol_m,
                     int max_iterations, bint backtracking=True):
    """Normalised-direction descent with optional step halving."""
    o, d = _check(origins, directions)
    s0 = np.asarray(start, dtype=np.float64)
    cdef const double[:, ::1] ov = o
    cdef const double[:, ::1] dv = d
    cdef Py_ssize_t n = ov.shape[0]
    cdef double px = s0[0], py = s0[1], pz = s0[2]
    cdef double f, fc, gx, gy, gz, gn, s, cx, cy, cz, delta
    cdef double min_step = step_m * 9.5367431640625e-07
    cdef int iterations = 0
    cdef bint converged = False
    cdef bint accepted
    cdef int k
    with nogil:
        f = _objective(px, py, pz, ov, dv, n)
        for k in range(1, max_iterations + 1):
            iterations = k
            _gradient(px, py, pz, ov, dv, n, &gx, &gy, &gz)
            gn = sqrt(gx * gx + gy * gy + gz * gz)
            if gn < 1e-15:
                converged = True
                break
            s = step_m
            accepted = False
            while True:
                cx = px - (s / gn) * gx
                cy = py - (s / gn) * gy
                cz = pz - (s / gn) * gz
                fc = _objective(cx, cy, cz, ov, dv, n)
                if fc < f:
                    accepted = True
                    break
                if not backtracking:
                    break
                s *= 0.5
                if s < min_step:
                    break
            if not accepted:
                converged = True
                break
            delta = f - fc
            px = cx
            py = cy
            pz = cz
            f = fc
            if delta < tol_m:
                converged = True
                break
    return np.array([px, py, pz]), iterations, bool(converged), f


def nelder_mead(origins, directions, start, double edge_m, double tol_m,
                int max_evaluations):
    """Downhill simplex on the summed ray distance."""
    o, d = _check(origins, directions)
    s0 = np.asarray(start, dtype=np.float64)
    cdef const double[:, ::1] ov = o
    cdef const double[:, ::1] dv = d
    cdef Py_ssize_t n = ov.shape[0]
    cdef double verts[4][3]
    cdef double fvals[4]
    cdef double tmpv[3]
    cdef double tmpf
    cdef double cx, cy, cz, rx, ry, rz, fr, ex, ey, ez, fe
    cdef double ox_, oy_, oz_, fo, ix, iy, iz, fi, diam, e
    cdef int evals, i, j
    cdef bint converged = False
    cdef bint shrink
    verts[0][0] = s0[0]; verts[0][1] = s0[1]; verts[0][2] = s0[2]
    verts[1][0] = s0[0] + edge_m; verts[1][1] = s0[1]; verts[1][2] = s0[2]
    verts[2][0] = s0[0]; verts[2][1] = s0[1] + edge_m; verts[2][2] = s0[2]
    verts[3][0] = s0[0]; verts[3][1] = s0[1]; verts[3][2] = s0[2] + edge_m
    with nogil:
        for i in range(4):
            fvals[i] = _objective(verts[i][0], verts[i][1], verts[i][2],
                                  ov, dv, n)
        evals = 4
        while True:
            for i in range(1, 4):
                tmpv[0] = verts[i][0]
                tmpv[1] = verts[i][1]
                tmpv[2] = verts[i][2]
                tmpf = fvals[i]
                j = i - 1
                while j >= 0 and fvals[j] > tmpf:
                    verts[j + 1][0] = verts[j][0]
                    verts[j + 1][1] = verts[j][1]
                    verts[j + 1][2] = verts[j][2]
                    fvals[j + 1] = fvals[j]
                    j -= 1
                verts[j + 1][0] = tmpv[0]
                verts[j + 1][1] = tmpv[1]
                verts[j + 1][2] = tmpv[2]
                fvals[j + 1] = tmpf
            diam = 0.0
            for i in range(1, 4):
                ex = verts[i][0] - verts[0][0]
                ey = verts[i][1] - verts[0][1]
                ez = verts[i][2] - verts[0][2]
                e = sqrt(ex * ex + ey * ey + ez * ez)
                if e > diam:
                    diam = e
            if diam <= tol_m:
                converged = True
                break
            if evals >= max_evaluations:
                break
            cx = (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0
            cy = (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0
            cz = (verts[0][2] + verts[1][2] + verts[2][2]) / 3.0
            rx = 2.0 * cx - verts[3][0]
            ry = 2.0 * cy - verts[3][1]
            rz = 2.0 * cz - verts[3][2]
            fr = _objective(rx, ry, rz, ov, dv, n)
            evals += 1
            shrink = False
            if fr < fvals[0]:
                ex = 2.0 * rx - cx
                ey = 2.0 * ry - cy
                ez = 2.0 * rz - cz
                fe = _objective(ex, ey, ez, ov, dv, n)
                evals += 1
                if fe < fr:
                    verts[3][0] = ex; verts[3][1] = ey; verts[3][2] = ez
                    fvals[3] = fe
                else:
                    verts[3][0] = rx; verts[3][1] = ry; verts[3][2] = rz
                    fvals[3] = fr
            elif fr < fvals[2]:
                verts[3][0] = rx; verts[3][1] = ry; verts[3][2] = rz
                fvals[3] = fr
            else:
                if fr < fvals[3]:
                    ox_ = cx + 0.5 * (rx - cx)
                    oy_ = cy + 0.5 * (ry - cy)
                    oz_ = cz + 0.5 * (rz - cz)
                    fo = _objective(ox_, oy_, oz_, ov, dv, n)
                    evals += 1
                    if fo <= fr:
                        verts[3][0] = ox_; verts[3][1] = oy_; verts[3][2] = oz_
                        fvals[3] = fo
                    else:
                        shrink = True
                else:
                    ix = cx + 0.5 * (verts[3][0] - cx)
                    iy = cy + 0.5 * (verts[3][1] - cy)
                    iz = cz + 0.5 * (verts[3][2] - cz)
                    fi = _objective(ix, iy, iz, ov, dv, n)
                    evals += 1
                    if fi < fvals[3]:
                        verts[3][0] = ix; verts[3][1] = iy; verts[3][2] = iz
                        fvals[3] = fi
                    else:
                        shrink = True
            if shrink:
                for i in range(1, 4):
                    verts[i][0] = verts[0][0] + 0.5 * (verts[i][0] - verts[0][0])
                    verts[i][1] = verts[0][1] + 0.5 * (verts[i][1] - verts[0][1])
                    verts[i][2] = verts[0][2] + 0.5 * (verts[i][2] - verts[0][2])
                    fvals[i] = _objective(verts[i][0], verts[i][1],
                                          verts[i][2], ov, dv, n)
                evals += 3
    return (np.array([verts[0][0], verts[0][1], verts[0][2]]),
            evals, bool(converged), fvals[0])
