"""Compiled inner loops shared by the solver and the sampler.

Spins are carried as unit vectors ``(c, s)`` and rotated in place.  All
arithmetic is arranged so that negating every ``c`` (an E/W mirror) and
every proposal sine gives a bit-exact mirrored trajectory.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _field_at(k, c, s, indptr, indices, weights, fx, fy):
    bx = fx[k]
    by = fy[k]
    for p in range(indptr[k], indptr[k + 1]):
        j = indices[p]
        w = weights[p]
        bx += w * c[j]
        by += w * s[j]
    return bx, by


@njit(cache=True, nogil=True)
def descent_sweep(c, s, indptr, indices, weights, fx, fy, order, degenerate):
    """Align every spin with its local field once, in ``order``.

    Returns the largest angle change.  Spins with a vanishing field are
    left alone and marked in ``degenerate``.
    """
    biggest = 0.0
    for q in range(order.shape[0]):
        k = order[q]
        bx, by = _field_at(k, c, s, indptr, indices, weights, fx, fy)
        r = math.hypot(bx, by)
        if r == 0.0:
            degenerate[k] = True
            continue
        degenerate[k] = False
        cn = bx / r
        sn = by / r
        chord = math.hypot(cn - c[k], sn - s[k])
        change = 2.0 * math.asin(min(1.0, 0.5 * chord))
        if change > biggest:
            biggest = change
        c[k] = cn
        s[k] = sn
    return biggest


@njit(cache=True, nogil=True)
def metropolis_chunk(
    c, s, indptr, indices, weights, fx, fy, order, beta,
    cosd, sind, uniforms, hidden, probe, energy,
    out_probe, out_mew, out_energy,
):
    """Run ``len(uniforms)`` sweeps; returns (accepted moves, final energy).

    Row t of ``cosd``/``sind``/``uniforms`` drives sweep t, column q the
    q-th site of ``order``.  ``probe < 0`` records zeros in ``out_probe``.
    """
    accepted = 0
    n_sweeps = uniforms.shape[0]
    nh = hidden.shape[0]
    for t in range(n_sweeps):
        for q in range(order.shape[0]):
            k = order[q]
            bx, by = _field_at(k, c, s, indptr, indices, weights, fx, fy)
            ck = c[k]
            sk = s[k]
            cn = ck * cosd[t, q] - sk * sind[t, q]
            sn = sk * cosd[t, q] + ck * sind[t, q]
            dE = -(bx * (cn - ck) + by * (sn - sk))
            if dE <= 0.0 or uniforms[t, q] < math.exp(-beta * dE):
                c[k] = cn
                s[k] = sn
                energy += dE
                accepted += 1
        total = 0.0
        for m in range(nh):
            total += c[hidden[m]]
        out_mew[t] = total / nh if nh > 0 else 0.0
        out_probe[t] = c[probe] if probe >= 0 else 0.0
        out_energy[t] = energy
    # undo slow drift off the unit circle; symmetric under c -> -c
    for k in range(c.shape[0]):
        r = math.hypot(c[k], s[k])
        c[k] /= r
        s[k] /= r
    return accepted, energy
