"""Closed-form real roots of cubic polynomials.

Every steady-state problem in this package (Kerr mode, three-mode reduction,
two-level fixed points) collapses to a cubic of the form
``x * ((d + x)**2 + h**2) = e`` after scaling, so a robust real-root finder is
shared here.
"""

import math

import numpy as np


def _newton_polish(coeffs, x, steps=2):
    a, b, c, d = coeffs
    for _ in range(steps):
        f = ((a * x + b) * x + c) * x + d
        df = (3 * a * x + 2 * b) * x + c
        if df == 0:
            break
        step = f / df
        if not math.isfinite(step):
            break
        x = x - step
    return x


def real_cubic_roots(a, b, c, d, polish=True):
    """Real roots of ``a x^3 + b x^2 + c x + d``, sorted ascending.

    Uses the trigonometric form when the discriminant says three real roots
    exist and Cardano's formula otherwise; each root is then polished by
    Newton steps. Degenerate leading coefficients fall back to the quadratic
    or linear formula.
    """
    a, b, c, d = float(a), float(b), float(c), float(d)
    if a == 0.0:
        if b == 0.0:
            return [] if c == 0.0 else [-d / c]
        disc = c * c - 4 * b * d
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        # numerically stable quadratic roots
        q = -0.5 * (c + math.copysign(sq, c))
        roots = [q / b] if q == 0 else [q / b, d / q]
        return sorted(roots)

    p_b, p_c, p_d = b / a, c / a, d / a
    shift = p_b / 3.0
    p = p_c - p_b * p_b / 3.0
    q = 2.0 * p_b ** 3 / 27.0 - p_b * p_c / 3.0 + p_d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3

    scale = max(abs(p) ** 1.5, abs(q), 1e-300)
    if disc < -1e-14 * scale * scale:
        r = math.sqrt(-p / 3.0)
        arg = -q / (2.0 * r ** 3)
        arg = min(1.0, max(-1.0, arg))
        phi = math.acos(arg)
        t = [2 * r * math.cos((phi - 2 * math.pi * k) / 3.0) for k in range(3)]
        roots = [ti - shift for ti in t]
    elif disc <= 1e-14 * scale * scale:
        # double root (fold point)
        u = np.cbrt(-q / 2.0)
        roots = [2 * u - shift, -u - shift]
    else:
        sq = math.sqrt(disc)
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        roots = [u + v - shift]

    coeffs = (a, b, c, d)
    if polish:
        roots = [_newton_polish(coeffs, r) for r in roots]
    return sorted(float(r) for r in roots)


def kerr_cubic_roots(detuning, halfwidth, drive_sq, nonlinearity):
    """Non-negative roots ``n`` of ``n * ((detuning + k n)^2 + halfwidth^2) = drive_sq``.

    This is the driven-Kerr steady-state equation with effective
    nonlinearity ``k``. The problem is solved in the scaled variable
    ``x = k n / halfwidth`` so coefficients stay of order one. ``k = 0``
    returns the linear Lorentzian occupation.
    """
    if drive_sq == 0.0:
        return [0.0]
    h = float(halfwidth)
    if nonlinearity == 0.0:
        return [drive_sq / (detuning ** 2 + h ** 2)]
    k = float(nonlinearity)
    dd = detuning / h
    e = drive_sq * k / h ** 3
    xs = real_cubic_roots(1.0, 2 * dd, dd * dd + 1.0, -e)
    out = []
    for x in xs:
        n = x * h / k
        if n >= 0.0:
            out.append(n)
    if not out:
        # the product form guarantees a root of matching sign; recover it
        out = [max(xs, key=lambda x: x * k) * h / k]
    return sorted(out)
