"""Reference computations that share no code with the package.

Everything here is written from the equations directly: central finite
differences, closed-form trajectories and hand-expanded field equations.
"""

from __future__ import annotations

import math

import numpy as np


def fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(F, x, h=1e-6):
    """Columns are central differences of a vector function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    N = x.size
    H = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            ei = np.zeros(N)
            ej = np.zeros(N)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def rel_err(a, b, floor=1.0):
    """Entrywise ``|a - b| / max(|b|, floor)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor))) if a.size else 0.0


# -- closed-form trajectories ---------------------------------------------------------


def harmonic_exact(q0, v0, t):
    return q0 * np.cos(t) + v0 * np.sin(t), -q0 * np.sin(t) + v0 * np.cos(t)


def knife_edge_exact(q0, v0, t):
    """Unit-inertia knife edge: the spin is constant and the edge moves at fixed speed along its heading."""
    x0, y0, th0 = q0
    _, _, w = v0
    u = math.cos(th0) * v0[0] + math.sin(th0) * v0[1]
    th = th0 + w * t
    if abs(w) < 1e-14:
        x = x0 + u * math.cos(th0) * t
        y = y0 + u * math.sin(th0) * t
    else:
        x = x0 + u / w * (np.sin(th) - math.sin(th0))
        y = y0 - u / w * (np.cos(th) - math.cos(th0))
    q = np.stack([x, y, th], axis=-1)
    v = np.stack([u * np.cos(th), u * np.sin(th), np.full_like(th, w)], axis=-1)
    return q, v


def knife_edge_accel(q, v):
    """Accelerations and multiplier from eliminating the reaction by hand."""
    th = q[2]
    s, c = math.sin(th), math.cos(th)
    lam = v[2] * (c * v[0] + s * v[1])
    return np.array([-lam * s, lam * c, 0.0]), lam


def rk4_dense(f, y0, t_end, h):
    y = np.array(y0, dtype=float)
    for _ in range(int(round(t_end / h))):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


# -- rod equations, expanded by hand -------------------------------------------------


def cosserat_rows(w_q, w_v, accel, lam, rho, alpha, beta, K, R):
    """The seven Euler-Lagrange rows of the rod Lagrangian with its explicit reaction forms.

    ``accel[A][B*7 + j]`` is the second derivative of field ``j`` along
    ``t^A`` then ``t^B``; ``lam[a][B]`` multiplies the form ``eta^B_a``.
    Only the time block of each form is nonzero.
    """
    q = w_q
    v = w_v  # v[i][A]
    xtt, ytt, tht = accel[0][0], accel[0][1], accel[0][2]
    thss = accel[1][7 + 2]
    q4ss, q5ss = accel[1][7 + 3], accel[1][7 + 4]
    l1, l2 = lam[0][0], lam[1][0]
    return np.array(
        [
            rho * xtt - v[5][1] + l1,
            rho * ytt - v[6][1] + l2,
            alpha * tht - beta * thss + l1 * R * v[1][1] - l2 * R * v[0][1],
            -K * q4ss - q[5],
            -K * q5ss - q[6],
            -(q[3] - v[0][1]),
            -(q[4] - v[1][1]),
        ]
    )


def cosserat_momentum(q, v, rho, alpha, beta, R):
    """Momentum components for the section ``(-R v^2_2, R v^1_2, 1, 0, 0, 0, 0)``."""
    J1 = -rho * R * v[0][0] * v[1][1] + rho * R * v[1][0] * v[0][1] + alpha * v[2][0]
    J2 = q[5] * R * v[1][1] - q[6] * R * v[0][1] - beta * v[2][1]
    return J1, J2
