"""Compiled Gillespie loop used by simulator.run_replica.

Mirrors simulator.step event for event; kept separate so the Python path
stays readable and can serve as a reference.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GAUSSIAN, BALL, BOX = 0, 1, 2


@njit(cache=True)
def _displacement(rng, family, dim, mean, chol, radius, half):
    out = np.empty(dim)
    if family == GAUSSIAN:
        z = np.empty(dim)
        for a in range(dim):
            z[a] = rng.standard_normal()
        for a in range(dim):
            acc = mean[a]
            for b in range(dim):
                acc += chol[a, b] * z[b]
            out[a] = acc
    elif family == BALL:
        norm = 0.0
        for a in range(dim):
            out[a] = rng.standard_normal()
            norm += out[a] * out[a]
        scale = radius * rng.random() ** (1.0 / dim) / math.sqrt(norm)
        for a in range(dim):
            out[a] *= scale
    else:
        for a in range(dim):
            out[a] = (2.0 * rng.random() - 1.0) * half[a]
    return out


@njit(cache=True)
def _draw(cdf, u):
    for i in range(cdf.size - 1):
        if u < cdf[i]:
            return i
    return cdf.size - 1


@njit(cache=True)
def _update_pairs(pos, marks, size, x, s, hist, box, r_max, width, n_bins, m, sign):
    dim = x.size
    for j in range(size):
        r2 = 0.0
        for a in range(dim):
            d = pos[j, a] - x[a]
            d -= box * np.rint(d / box)
            r2 += d * d
        r = math.sqrt(r2)
        if r <= r_max:
            b = int(r / width)
            if b >= n_bins:
                b = n_bins - 1
            o = marks[j]
            hist[b * m * m + s * m + o] += sign
            hist[b * m * m + o * m + s] += sign


@njit(cache=True)
def run_loop(rng, pos, marks, size, counts, hist, kappa, box, b_w, b_max, child_cdf,
             imm_rate, imm_cdf, family, mean, chol, radius, half, burn_in, horizon,
             n_batches, r_max, width, n_bins, cap,
             count_time, pair_time, batch_time, events, rate_time):
    """Run from t = 0 to horizon.  Returns (final size, failed flag, fail time)."""
    m = counts.size
    dim = pos.shape[1]
    span = (horizon - burn_in) / n_batches
    t = 0.0
    while True:
        contact = 0.0
        for s in range(m):
            contact += counts[s] * b_w[s]
        contact *= kappa
        death = float(size)
        total = death + contact + imm_rate
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            dt = horizon - t
        # hold the current state over [t, t + dt)
        rate_time[0] += death * dt
        rate_time[1] += contact * dt
        rate_time[2] += imm_rate * dt
        t0 = max(t, burn_in)
        t1 = t + dt
        while t1 > t0:
            b = min(int((t0 - burn_in) / span), n_batches - 1)
            end = t1 if b == n_batches - 1 else min(t1, burn_in + (b + 1) * span)
            w = end - t0
            for s in range(m):
                count_time[b, s] += w * counts[s]
            for k in range(hist.size):
                if hist[k] != 0:
                    pair_time[b, k] += w * hist[k]
            batch_time[b] += w
            t0 = end
        if t + dt >= horizon:
            return size, False, horizon
        t += dt
        u = rng.random() * total
        if u < death:
            idx = rng.integers(0, size)
            s = marks[idx]
            x = pos[idx].copy()
            last = size - 1
            pos[idx] = pos[last]
            marks[idx] = marks[last]
            size = last
            _update_pairs(pos, marks, size, x, s, hist, box, r_max, width, n_bins, m, -1)
            counts[s] -= 1
            events[0] += 1
            continue
        if u < death + contact:
            if m == 1:
                parent = rng.integers(0, size)
            else:
                while True:
                    parent = rng.integers(0, size)
                    if rng.random() * b_max < b_w[marks[parent]]:
                        break
            x = pos[parent] + _displacement(rng, family, dim, mean, chol, radius, half)
            for a in range(dim):
                x[a] = x[a] % box
                if x[a] >= box:
                    x[a] = 0.0
            s = 0 if m == 1 else _draw(child_cdf[marks[parent]], rng.random())
            events[1] += 1
        else:
            x = np.empty(dim)
            for a in range(dim):
                x[a] = rng.random() * box
            s = 0 if m == 1 else _draw(imm_cdf, rng.random())
            events[2] += 1
        _update_pairs(pos, marks, size, x, s, hist, box, r_max, width, n_bins, m, 1)
        pos[size] = x
        marks[size] = s
        counts[s] += 1
        size += 1
        if size > cap:
            return size, True, t
