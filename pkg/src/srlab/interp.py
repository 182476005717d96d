"""Classical 2x upscalers used as baselines for the learned model.

Every function takes an ``(H, W, 3)`` image in [0, 1] and returns a
``(2H, 2W, 3)`` image in [0, 1]; channels are processed independently.

``fcbi`` and ``icbi`` are curvature-driven grid filling in the style of
Giachetti and Asuni: original pixels are copied to even HR coordinates,
holes are filled along the direction of lowest second-order difference,
and (for ``icbi``) the filled pixels are then relaxed by gradient descent
on a discrete curvature energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .image_core import check_plane, check_rgb, map_planes

METHODS = ("nearest", "bilinear", "bicubic", "fcbi", "icbi", "mlp")


@dataclass(frozen=True)
class UpscaleMethod:
    identifier: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.identifier not in METHODS:
            raise ValueError(f"unknown upscale method {self.identifier!r}; choose from {METHODS}")


# ---------------------------------------------------------------- nearest


def _nearest_plane(plane):
    return np.repeat(np.repeat(check_plane(plane), 2, axis=0), 2, axis=1)


def upscale_nearest(img):
    return map_planes(_nearest_plane, img)


# ---------------------------------------------------- separable resampling


def keys_kernel(t, a=-0.5):
    """Keys cubic-convolution kernel."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _linear_kernel(t):
    return np.maximum(0.0, 1.0 - np.abs(t))


def _resample_matrix(n, kernel, support):
    """Dense (2n, n) matrix mapping a length-n signal to its 2x resample.

    Output sample x sits at source coordinate (x + 0.5) / 2 - 0.5; taps
    falling outside [0, n) are clamped onto the border sample.
    """
    out = np.zeros((2 * n, n))
    for x in range(2 * n):
        src = (x + 0.5) / 2.0 - 0.5
        base = int(np.floor(src))
        for k in range(base - support + 1, base + support + 1):
            w = float(kernel(src - k))
            if w != 0.0:
                out[x, min(max(k, 0), n - 1)] += w
    return out


def _separable(img, kernel, support):
    img = check_rgb(img)
    h, w, _ = img.shape
    rows = _resample_matrix(h, kernel, support)
    cols = _resample_matrix(w, kernel, support)
    return np.einsum("yi,ijc,xj->yxc", rows, img, cols, optimize=True)


def upscale_bilinear(img):
    return np.clip(_separable(img, _linear_kernel, 1), 0.0, 1.0)


def upscale_bicubic(img, a=-0.5):
    if not -1.0 <= a <= 0.0:
        raise ValueError("bicubic coefficient a must lie in [-1, 0]")
    return np.clip(_separable(img, lambda t: keys_kernel(t, a), 2), 0.0, 1.0)


# ------------------------------------------------------------ grid filling

_FCBI_PAD = 3  # LR margin; HR stencils reach 3 pixels


def _shift(grid, dy, dx, m):
    """View of ``grid`` offset by (dy, dx), restricted to the interior margin m."""
    h, w = grid.shape
    return grid[m + dy : h - m + dy, m + dx : w - m + dx]


def _directional_fill(grid, holes, dir_a, dir_b, m):
    """Fill ``holes`` with the two-neighbour mean along the smoother direction.

    For each direction d, the second-order difference is summed at the two
    known neighbours lying on the line through the hole:
    |p(-3d) - 2p(-d) + p(d)| + |p(-d) - 2p(d) + p(3d)|. Ties go to ``dir_a``.
    """

    def along(d):
        dy, dx = d
        m3, m1 = _shift(grid, -3 * dy, -3 * dx, m), _shift(grid, -dy, -dx, m)
        p1, p3 = _shift(grid, dy, dx, m), _shift(grid, 3 * dy, 3 * dx, m)
        curvature = np.abs(m3 - 2 * m1 + p1) + np.abs(m1 - 2 * p1 + p3)
        return curvature, (m1 + p1) / 2.0

    curv_a, mean_a = along(dir_a)
    curv_b, mean_b = along(dir_b)
    filled = np.where(curv_a <= curv_b, mean_a, mean_b)
    inner = _shift(grid, 0, 0, m)
    mask = _shift(holes, 0, 0, m)
    inner[mask] = filled[mask]


def _fcbi_plane(plane):
    plane = check_plane(plane)
    h, w = plane.shape
    p = _FCBI_PAD
    lr = np.pad(plane, p, mode="edge")
    hh, ww = 2 * lr.shape[0], 2 * lr.shape[1]
    grid = np.zeros((hh, ww))
    grid[0::2, 0::2] = lr

    ys, xs = np.mgrid[0:hh, 0:ww]
    diagonal_holes = (ys % 2 == 1) & (xs % 2 == 1)
    axial_holes = (ys + xs) % 2 == 1

    # NW-SE before NE-SW, then horizontal before vertical
    _directional_fill(grid, diagonal_holes, (1, 1), (1, -1), 3)
    _directional_fill(grid, axial_holes, (0, 1), (1, 0), 3)

    out = grid[2 * p : 2 * p + 2 * h, 2 * p : 2 * p + 2 * w]
    return np.clip(out, 0.0, 1.0)


def upscale_fcbi(img):
    return map_planes(_fcbi_plane, img)


# ----------------------------------------------------- iterative correction

_CURVATURE_DIRS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _second_differences(grid):
    """Second differences of an edge-padded grid along the four directions."""
    g = np.pad(grid, 1, mode="edge")
    h, w = grid.shape
    out = []
    for dy, dx in _CURVATURE_DIRS:
        prev = g[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        nxt = g[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        out.append(prev - 2 * grid + nxt)
    return out


def curvature_energy(grid, interpolated):
    """Sum of squared second differences evaluated at interpolated pixels."""
    total = 0.0
    for d2 in _second_differences(grid):
        total += float(np.sum(d2[interpolated] ** 2))
    return total


def _unpad_adjoint(padded):
    """Adjoint of one-pixel edge padding: fold the border back onto the edge."""
    g = padded.copy()
    g[1, :] += g[0, :]
    g[-2, :] += g[-1, :]
    g[:, 1] += g[:, 0]
    g[:, -2] += g[:, -1]
    return g[1:-1, 1:-1]


def curvature_gradient(grid, interpolated):
    """Gradient of :func:`curvature_energy` with respect to every grid value."""
    h, w = grid.shape
    weight = interpolated.astype(np.float64)
    acc = np.zeros((h + 2, w + 2))
    for (dy, dx), d2 in zip(_CURVATURE_DIRS, _second_differences(grid)):
        r = 2.0 * weight * d2
        acc[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w] += r
        acc[1:-1, 1:-1] -= 2.0 * r
        acc[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] += r
    return _unpad_adjoint(acc)


def icbi_plane(plane, iterations=10, step=0.1, energy_log=None):
    """Curvature-corrected grid fill of a single plane.

    Starts from the FCBI fill and takes ``iterations`` descent steps on
    :func:`curvature_energy`, moving only the interpolated pixels. A step
    that would raise the energy is retried at half the step size.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if step <= 0:
        raise ValueError("step must be > 0")
    grid = _fcbi_plane(plane)
    if iterations == 0:
        return grid

    h, w = grid.shape
    ys, xs = np.mgrid[0:h, 0:w]
    interpolated = ~((ys % 2 == 0) & (xs % 2 == 0))
    energy = curvature_energy(grid, interpolated)
    if energy_log is not None:
        energy_log.append(energy)

    for _ in range(iterations):
        grad = curvature_gradient(grid, interpolated)
        grad[~interpolated] = 0.0
        trial_step = step
        while True:
            trial = grid - trial_step * grad
            trial_energy = curvature_energy(trial, interpolated)
            if trial_energy <= energy:
                grid, energy = trial, trial_energy
                break
            trial_step /= 2.0
            if trial_step < 1e-12:
                break
        if energy_log is not None:
            energy_log.append(energy)
    return np.clip(grid, 0.0, 1.0)


def upscale_icbi(img, iterations=10, step=0.1, energy_log=None):
    """ICBI-style upscale. ``energy_log``, if given, receives one list per channel."""
    img = check_rgb(img)
    out = []
    for c in range(3):
        log = [] if energy_log is not None else None
        out.append(icbi_plane(img[:, :, c], iterations, step, log))
        if energy_log is not None:
            energy_log.append(log)
    return np.stack(out, axis=-1)


def upscale(img, method="bicubic", *, bicubic_a=-0.5, icbi_iters=10, icbi_step=0.1):
    """Dispatch to a classical upscaler by name."""
    if method == "nearest":
        return upscale_nearest(img)
    if method == "bilinear":
        return upscale_bilinear(img)
    if method == "bicubic":
        return upscale_bicubic(img, bicubic_a)
    if method == "fcbi":
        return upscale_fcbi(img)
    if method == "icbi":
        return upscale_icbi(img, icbi_iters, icbi_step)
    raise ValueError(f"{method!r} is not a classical upscaler")
