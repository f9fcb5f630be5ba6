"""Pure numpy selective-scan kernels (fallback for the compiled extension).

Shapes: ``u, delta`` (B, T, Din); ``A`` (Din, N); ``Bm, C`` (B, T, N);
``Dskip`` (Din). States ``hs`` are kept as (B, T, Din, N) for the backward pass.
"""
import numpy as np


def scan_forward(u, delta, A, Bm, C, Dskip):
    b, t_len, din = u.shape
    n = A.shape[1]
    hs = np.empty((b, t_len, din, n))
    y = np.empty((b, t_len, din))
    h = np.zeros((b, din, n))
    for t in range(t_len):
        dt = delta[:, t, :, None]
        h = np.exp(dt * A) * h + dt * Bm[:, t, None, :] * u[:, t, :, None]
        hs[:, t] = h
        y[:, t] = np.einsum("bdn,bn->bd", h, C[:, t]) + Dskip * u[:, t]
    return y, hs


def scan_backward(dy, u, delta, A, Bm, C, Dskip, hs):
    b, t_len, din = u.shape
    n = A.shape[1]
    du = dy * Dskip
    ddelta = np.zeros_like(delta)
    dA = np.zeros_like(A)
    dB = np.zeros_like(Bm)
    dC = np.einsum("btd,btdn->btn", dy, hs)
    dD = np.einsum("btd,btd->d", dy, u)
    gh = np.zeros((b, din, n))
    for t in range(t_len - 1, -1, -1):
        gh = gh + dy[:, t, :, None] * C[:, t, None, :]
        dt = delta[:, t, :, None]
        ut = u[:, t, :, None]
        bt = Bm[:, t, None, :]
        # input injection dt * B * u
        ddelta[:, t] += np.einsum("bdn,bdn->bd", gh, bt * ut)
        dB[:, t] += np.einsum("bdn,bdn->bn", gh, dt * ut)
        du[:, t] += np.einsum("bdn,bdn->bd", gh, dt * bt)
        # decay exp(dt * A) applied to the previous state
        abar = np.exp(dt * A)
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((b, din, n))
        gabar = gh * h_prev * abar
        ddelta[:, t] += np.einsum("bdn,dn->bd", gabar, A)
        dA += np.einsum("bdn,bd->dn", gabar, delta[:, t])
        gh = gh * abar
    return du, ddelta, dA, dB, dC, dD
