"""Pure-Python sampling kernels over :class:`pssim.tables.KernelTables`.

Same algorithm, same uniforms and same packed keys as the compiled module,
so both produce identical output for a given bit generator state.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

MISSING = -1


class KernelConsistencyError(RuntimeError):
    pass


def _first_above(cdf, u: float, last: int) -> int:
    j = bisect.bisect_right(cdf, u)
    return j if j < last else last - 1


def sketch(M, range_cdf, ball_delta, ball_start, F_keys, bit_generator, step_cap, t_budget):
    """Returns (sites, ks, times, residual, t_stop, truncated)."""
    rand = _uniforms(bit_generator)
    cum = list(range_cdf)
    ncum = len(cum)
    deltas = [int(x) for x in ball_delta]
    starts = [int(x) for x in ball_start]
    C = sorted(int(x) for x in F_keys)
    index = set(C)
    sites, ks, times = [], [], []
    T = 0.0
    truncated = False
    while C:
        if step_cap >= 0 and len(ks) >= step_cap:
            truncated = True
            break
        u1 = rand()
        u2 = rand()
        u3 = rand()
        n = len(C)
        j = int(u1 * n)
        if j > n - 1:
            j = n - 1
        I = C[j]
        K = _first_above(cum, u2, ncum) - 1
        T_next = T - math.log1p(-u3) / (M * n)
        if T_next >= t_budget:
            T = t_budget
            break
        T = T_next
        if K < 0:
            del C[j]
            index.discard(I)
        else:
            for delta in deltas[starts[K]:starts[K + 1]]:
                s = I + delta
                if s not in index:
                    index.add(s)
                    bisect.insort(C, s)
        sites.append(I)
        ks.append(K)
        times.append(T)
    return (np.array(sites, dtype=np.int64), np.array(ks, dtype=np.int32), np.array(times, dtype=np.float64),
            np.array(C, dtype=np.int64), T, truncated)


def assign(n_atoms, pm1_cdf, pk_flat, pk_start, ball_delta, ball_start, ev_site, ev_k,
           init_keys, init_vals, query, bit_generator):
    """Returns atom indices on ``query`` (-1 where a site was never assigned)."""
    rand = _uniforms(bit_generator)
    width = n_atoms + 1
    pm1 = list(pm1_cdf)
    flat = pk_flat.tolist() if hasattr(pk_flat, "tolist") else list(pk_flat)
    deltas = [int(x) for x in ball_delta]
    starts = [int(x) for x in ball_start]
    sigma = {int(k): int(v) for k, v in zip(init_keys, init_vals)}
    sites = [int(x) for x in ev_site]
    kk = [int(x) for x in ev_k]
    for idx in range(len(kk) - 1, -1, -1):
        I, K = sites[idx], kk[idx]
        u = rand()
        if K < 0:
            row = pm1
        else:
            base = int(pk_start[K])
            if base < 0:
                raise KernelConsistencyError(f"range {K} drawn with lambda = 0")
            code = 0
            for delta in deltas[starts[K]:starts[K + 1]]:
                v = sigma.get(I + delta, MISSING)
                if v == MISSING:
                    raise KernelConsistencyError("conditioning site still undetermined")
                code = code * n_atoms + v
            off = base + code * width
            row = flat[off:off + width]
        j = _first_above(row, u, width)
        if j < n_atoms:
            sigma[I] = j
    return np.array([sigma.get(int(q), MISSING) for q in query], dtype=np.int32)


def _uniforms(bit_generator):
    # Generator.random() reads the same next_double stream as the C kernel
    gen = np.random.Generator(bit_generator)
    return gen.random
