"""Pure-Python kernels for the user-fix optimisers.

Mirror of the compiled extension, kept in exactly the same operation order
so both implementations agree to rounding.  These run when the extension
failed to build; they are slower but otherwise equivalent.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ray_objective",
    "ray_objective_gradient",
    "gradient_descent",
    "nelder_mead",
]


def _as_rays(origins, directions):
    o = np.ascontiguousarray(origins, dtype=float)
    d = np.ascontiguousarray(directions, dtype=float)
    if o.ndim != 2 or o.shape[1] != 3 or o.shape != d.shape:
        raise ValueError("origins and directions must both be (n, 3)")
    return [tuple(row_o) + tuple(row_d) for row_o, row_d in zip(o.tolist(), d.tolist())]


def _objective(px, py, pz, rays):
    total = 0.0
    for ox, oy, oz, dx, dy, dz in rays:
        vx = px - ox
        vy = py - oy
        vz = pz - oz
        t = vx * dx + vy * dy + vz * dz
        if t > 0.0:
            rx = vx - t * dx
            ry = vy - t * dy
            rz = vz - t * dz
        else:
            rx = vx
            ry = vy
            rz = vz
        total += math.sqrt(rx * rx + ry * ry + rz * rz)
    return total


def _gradient(px, py, pz, rays):
    total = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for ox, oy, oz, dx, dy, dz in rays:
        vx = px - ox
        vy = py - oy
        vz = pz - oz
        t = vx * dx + vy * dy + vz * dz
        if t > 0.0:
            rx = vx - t * dx
            ry = vy - t * dy
            rz = vz - t * dz
        else:
            rx = vx
            ry = vy
            rz = vz
        dist = math.sqrt(rx * rx + ry * ry + rz * rz)
        total += dist
        if dist > 0.0:
            gx += rx / dist
            gy += ry / dist
            gz += rz / dist
    return total, gx, gy, gz


def ray_objective(point, origins, directions) -> float:
    """Sum of distances from ``point`` to each forward half-line."""
    rays = _as_rays(origins, directions)
    px, py, pz = (float(v) for v in np.asarray(point, dtype=float))
    return _objective(px, py, pz, rays)


def ray_objective_gradient(point, origins, directions):
    """Objective value and its subgradient at ``point``.

    Rays the point sits on contribute zero to the gradient.
    """
    rays = _as_rays(origins, directions)
    px, py, pz = (float(v) for v in np.asarray(point, dtype=float))
    f, gx, gy, gz = _gradient(px, py, pz, rays)
    return f, np.array([gx, gy, gz])


def gradient_descent(
    origins,
    directions,
    start,
    step_m: float,
    tol_m: float,
    max_iterations: int,
    backtracking: bool = True,
):
    """Normalised-direction descent with optional step halving.

    Each move has length exactly ``step_m`` (or a halved value during
    backtracking).  Stops when the gradient vanishes, no step improves the
    objective, or one accepted step improves it by less than ``tol_m``.

    Returns:
        ``(point, iterations, converged, objective)``; ``converged`` is
        False only when the iteration budget ran out.
    """
    rays = _as_rays(origins, directions)
    px, py, pz = (float(v) for v in np.asarray(start, dtype=float))
    f = _objective(px, py, pz, rays)
    iterations = 0
    converged = False
    min_step = step_m * 9.5367431640625e-07  # step / 2**20
    for k in range(1, max_iterations + 1):
        iterations = k
        _, gx, gy, gz = _gradient(px, py, pz, rays)
        gn = math.sqrt(gx * gx + gy * gy + gz * gz)
        if gn < 1e-15:
            converged = True
            break
        s = step_m
        accepted = False
        while True:
            cx = px - (s / gn) * gx
            cy = py - (s / gn) * gy
            cz = pz - (s / gn) * gz
            fc = _objective(cx, cy, cz, rays)
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
        px, py, pz = cx, cy, cz
        f = fc
        if delta < tol_m:
            converged = True
            break
    return np.array([px, py, pz]), iterations, converged, f


def nelder_mead(
    origins,
    directions,
    start,
    edge_m: float,
    tol_m: float,
    max_evaluations: int,
):
    """Downhill simplex on the summed ray distance.

    The initial simplex has one vertex at ``start`` and one ``edge_m``
    along each coordinate axis.  Stops when the simplex diameter falls
    below ``tol_m``; standard reflection, expansion, contraction and
    shrink moves with coefficients 1, 2, 0.5, 0.5.

    Returns:
        ``(point, evaluations, converged, objective)``.
    """
    rays = _as_rays(origins, directions)
    sx, sy, sz = (float(v) for v in np.asarray(start, dtype=float))
    verts = [
        [sx, sy, sz],
        [sx + edge_m, sy, sz],
        [sx, sy + edge_m, sz],
        [sx, sy, sz + edge_m],
    ]
    fvals = [_objective(v[0], v[1], v[2], rays) for v in verts]
    evals = 4
    converged = False
    while True:
        # insertion sort, stable so equal values keep their vertex order
        for i in range(1, 4):
            v = verts[i]
            fv = fvals[i]
            j = i - 1
            while j >= 0 and fvals[j] > fv:
                verts[j + 1] = verts[j]
                fvals[j + 1] = fvals[j]
                j -= 1
            verts[j + 1] = v
            fvals[j + 1] = fv
        diam = 0.0
        for i in range(1, 4):
            ex = verts[i][0] - verts[0][0]
            ey = verts[i][1] - verts[0][1]
            ez = verts[i][2] - verts[0][2]
            e = math.sqrt(ex * ex + ey * ey + ez * ez)
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
        fr = _objective(rx, ry, rz, rays)
        evals += 1
        shrink = False
        if fr < fvals[0]:
            ex = 2.0 * rx - cx
            ey = 2.0 * ry - cy
            ez = 2.0 * rz - cz
            fe = _objective(ex, ey, ez, rays)
            evals += 1
            if fe < fr:
                verts[3] = [ex, ey, ez]
                fvals[3] = fe
            else:
                verts[3] = [rx, ry, rz]
                fvals[3] = fr
        elif fr < fvals[2]:
            verts[3] = [rx, ry, rz]
            fvals[3] = fr
        else:
            if fr < fvals[3]:
                ox = cx + 0.5 * (rx - cx)
                oy = cy + 0.5 * (ry - cy)
                oz = cz + 0.5 * (rz - cz)
                fo = _objective(ox, oy, oz, rays)
                evals += 1
                if fo <= fr:
                    verts[3] = [ox, oy, oz]
                    fvals[3] = fo
                else:
                    shrink = True
            else:
                ix = cx + 0.5 * (verts[3][0] - cx)
                iy = cy + 0.5 * (verts[3][1] - cy)
                iz = cz + 0.5 * (verts[3][2] - cz)
                fi = _objective(ix, iy, iz, rays)
                evals += 1
                if fi < fvals[3]:
                    verts[3] = [ix, iy, iz]
                    fvals[3] = fi
                else:
                    shrink = True
        if shrink:
            for i in range(1, 4):
                verts[i] = [
                    verts[0][0] + 0.5 * (verts[i][0] - verts[0][0]),
                    verts[0][1] + 0.5 * (verts[i][1] - verts[0][1]),
                    verts[0][2] + 0.5 * (verts[i][2] - verts[0][2]),
                ]
                fvals[i] = _objective(verts[i][0], verts[i][1], verts[i][2], rays)
            evals += 3
    return np.array(verts[0]), evals, converged, fvals[0]
