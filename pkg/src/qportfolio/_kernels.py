"""Numba kernels: counter-based Gaussian generation and hot-path SDE integration.

Every Gaussian variate is a pure function of (master_seed, stream_id, counter):
a splitmix64-style Weyl sequence is finalized with the Stafford mix13 avalanche,
two 53-bit uniforms are drawn from the even/odd counters of a pair, and a
Box-Muller trigonometric transform yields the pair of normals.  Because no
sequential state is involved, any slice of any stream can be (re)generated in
any order, which is what makes ensemble simulation independent of worker count.

All integrators below consume noise through this one generator, so a given
entry point is bit-reproducible across runs and thread counts.  The compiled
ensemble kernels and the generic numpy stepper in `sde.py` agree on the noise
stream exactly; their update arithmetic may differ in the last ulp because of
instruction selection (fused multiply-add), which is why the single-path
integrator routes through the same kernels whenever one is available.
"""

import numpy as np
from numba import njit, prange, uint64

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * np.pi


@njit(uint64(uint64), cache=True, inline="always")
def _mix64(z):
    # Stafford mix13 finalizer: full avalanche on 64 bits.
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(uint64(uint64, uint64), cache=True, inline="always")
def stream_key(master_seed, stream_id):
    return _mix64(_mix64(master_seed + GOLDEN) + stream_id)


@njit(cache=True, inline="always")
def _pair(key, j):
    """Box-Muller pair for pair index j (counters 2j and 2j+1)."""
    c = np.uint64(2) * np.uint64(j)
    w1 = _mix64(key + GOLDEN * c)
    w2 = _mix64(key + GOLDEN * (c + np.uint64(1)))
    # u1 in (0, 1] so log never sees zero; u2 in [0, 1).
    u1 = np.float64((w1 >> np.uint64(11)) + np.uint64(1)) * _INV53
    u2 = np.float64(w2 >> np.uint64(11)) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    th = _TWO_PI * u2
    return r * np.cos(th), r * np.sin(th)


@njit(cache=True, inline="always")
def _normal_at(key, c):
    z0, z1 = _pair(key, c >> 1)
    return z0 if (c & 1) == 0 else z1


@njit(cache=True, parallel=True)
def fill_normals(master_seed, stream_id, c0, out):
    """Standard normals for counters [c0, c0+len(out)) of one stream."""
    key = stream_key(master_seed, stream_id)
    n = out.shape[0]
    for i in prange(n):
        out[i] = _normal_at(key, c0 + i)


@njit(cache=True, parallel=True)
def fill_normals_block(master_seed, first_stream, c0, out):
    """Normals for counters [c0, c0+dim) of streams first_stream..+n_paths.

    out has shape (n_paths, dim); row p is drawn from stream first_stream + p.
    """
    n_paths, dim = out.shape
    for p in prange(n_paths):
        key = stream_key(master_seed, np.uint64(first_stream + p))
        for d in range(dim):
            out[p, d] = _normal_at(key, c0 + d)


@njit(cache=True, parallel=True)
def sim_affine_2d(master_seed, first_stream, c0, n_paths, x0, a, amp, dt,
                  n_steps, rec_steps, out, err_step):
    """Euler-Maruyama for dx_i = a_i*x_i dt + amp_i dW_i, i = 0,1.

    Path p consumes stream first_stream+p from counter c0 (c0 must be even so
    each step maps onto one Box-Muller pair).  rec_steps: sorted step indices
    to record, starting with 0.  out: (n_paths, len(rec_steps), 2).
    err_step: -1, or the first step at which the state went non-finite.
    """
    sqdt = np.sqrt(dt)
    n_rec = rec_steps.shape[0]
    j0 = c0 >> 1
    a0, a1 = a[0], a[1]
    amp0, amp1 = amp[0], amp[1]
    for p in prange(n_paths):
        key = stream_key(master_seed, np.uint64(first_stream + p))
        xa = x0[0]
        xb = x0[1]
        err_step[p] = -1
        r_ptr = 1
        out[p, 0, 0] = xa
        out[p, 0, 1] = xb
        for k in range(n_steps):
            z0, z1 = _pair(key, j0 + k)
            xa = xa + (a0 * xa) * dt + amp0 * (z0 * sqdt)
            xb = xb + (a1 * xb) * dt + amp1 * (z1 * sqdt)
            if not (np.isfinite(xa) and np.isfinite(xb)):
                err_step[p] = k + 1
                break
            if r_ptr < n_rec and rec_steps[r_ptr] == k + 1:
                out[p, r_ptr, 0] = xa
                out[p, r_ptr, 1] = xb
                r_ptr += 1


@njit(cache=True, parallel=True)
def sim_affine_1d(master_seed, first_stream, c0, n_paths, x_init, a, amp, dt,
                  n_steps, rec_steps, out, err_step):
    """Euler-Maruyama for dx = a*x dt + amp dW on one component."""
    sqdt = np.sqrt(dt)
    n_rec = rec_steps.shape[0]
    for p in prange(n_paths):
        key = stream_key(master_seed, np.uint64(first_stream + p))
        x = x_init
        err_step[p] = -1
        r_ptr = 1
        out[p, 0, 0] = x
        for k in range(n_steps):
            zk = _normal_at(key, c0 + k)
            x = x + (a * x) * dt + amp * (zk * sqdt)
            if not np.isfinite(x):
                err_step[p] = k + 1
                break
            if r_ptr < n_rec and rec_steps[r_ptr] == k + 1:
                out[p, r_ptr, 0] = x
                r_ptr += 1


@njit(cache=True, parallel=True)
def sim_bounded_1d(master_seed, first_stream, c0, n_paths, z_init, beta, gcub,
                   s_amp, dt, n_steps, lo, hi, rec_steps, out, absorbed_step,
                   err_step):
    """Euler-Maruyama for dz = [beta*z + gcub*z(1-z^2)] dt + s_amp*(1-z^2) dW
    on [lo, hi] with clamp-absorb: an overshooting path is set to the bound and
    frozen for all later steps.

    out: (n_paths, len(rec_steps), 1).  absorbed_step: -1 or absorbing step.
    """
    sqdt = np.sqrt(dt)
    n_rec = rec_steps.shape[0]
    for p in prange(n_paths):
        key = stream_key(master_seed, np.uint64(first_stream + p))
        z = z_init
        absorbed_step[p] = -1
        err_step[p] = -1
        r_ptr = 1
        out[p, 0, 0] = z
        frozen = False
        for k in range(n_steps):
            if not frozen:
                zk = _normal_at(key, c0 + k)
                drift = beta * z + gcub * (z * (1.0 - z * z))
                ampl = s_amp * (1.0 - z * z)
                z = z + drift * dt + ampl * (zk * sqdt)
                if not np.isfinite(z):
                    err_step[p] = k + 1
                    break
                if z > hi:
                    z = hi
                    absorbed_step[p] = k + 1
                    frozen = True
                elif z < lo:
                    z = lo
                    absorbed_step[p] = k + 1
                    frozen = True
            if r_ptr < n_rec and rec_steps[r_ptr] == k + 1:
                out[p, r_ptr, 0] = z
                r_ptr += 1
