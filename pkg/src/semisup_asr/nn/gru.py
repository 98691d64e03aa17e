"""Gated recurrent cell with hand-derived gradients.

Parameters for a cell live under a prefix:
  {prefix}.W  (3u x in)  input weights, gate rows stacked [update; reset; cand]
  {prefix}.U  (3u x u)   recurrent weights, same stacking
  {prefix}.b  (3u,)      bias

Update rule:
  z = sigmoid(W_z x + U_z h + b_z)
  r = sigmoid(W_r x + U_r h + b_r)
  n = tanh(W_n x + U_n (r * h) + b_n)
  h' = (1 - z) * h + z * n

The sequence functions batch the input projection and the weight-gradient
outer products across time; only the recurrent matvecs stay in the loop.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def cell_shapes(prefix, input_dim, hidden):
    return {
        "%s.W" % prefix: (3 * hidden, input_dim),
        "%s.U" % prefix: (3 * hidden, hidden),
        "%s.b" % prefix: (3 * hidden,),
    }


def gru_step(x, h_prev, params, prefix):
    W = params["%s.W" % prefix]
    U = params["%s.U" % prefix]
    b = params["%s.b" % prefix]
    u = h_prev.shape[0]
    wx = W @ x + b
    uh = U[:2 * u] @ h_prev
    z = _sigmoid(wx[:u] + uh[:u])
    r = _sigmoid(wx[u:2 * u] + uh[u:])
    rh = r * h_prev
    n = np.tanh(wx[2 * u:] + U[2 * u:] @ rh)
    h = (1.0 - z) * h_prev + z * n
    cache = (x, h_prev, z, r, n, rh)
    return h, cache


def gru_step_backward(dh, cache, params, prefix, grads):
    """Accumulates parameter grads into `grads`; returns (dx, dh_prev)."""
    W = params["%s.W" % prefix]
    U = params["%s.U" % prefix]
    x, h_prev, z, r, n, rh = cache
    u = h_prev.shape[0]

    dz = dh * (n - h_prev)
    dn = dh * z
    dh_prev = dh * (1.0 - z)

    dn_pre = dn * (1.0 - n * n)
    dz_pre = dz * z * (1.0 - z)
    drh = U[2 * u:].T @ dn_pre
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r
    dr_pre = dr * r * (1.0 - r)

    dpre = np.concatenate([dz_pre, dr_pre, dn_pre])
    grads["%s.W" % prefix] += np.outer(dpre, x)
    grads["%s.b" % prefix] += dpre
    gU = grads["%s.U" % prefix]
    gU[:u] += np.outer(dz_pre, h_prev)
    gU[u:2 * u] += np.outer(dr_pre, h_prev)
    gU[2 * u:] += np.outer(dn_pre, rh)

    dx = W.T @ dpre
    dh_prev = dh_prev + U[:u].T @ dz_pre + U[u:2 * u].T @ dr_pre
    return dx, dh_prev


def gru_sequence_forward(xs, params, prefix, h0=None):
    """Run the cell over xs (T x in); returns hidden states (T x u) + cache."""
    W = params["%s.W" % prefix]
    U = params["%s.U" % prefix]
    b = params["%s.b" % prefix]
    u = W.shape[0] // 3
    T = xs.shape[0]
    wx_all = xs @ W.T + b
    Uzr = U[:2 * u]
    Un = U[2 * u:]
    h = np.zeros(u) if h0 is None else h0
    HS = np.empty((T, u))
    HPREV = np.empty((T, u))
    Z = np.empty((T, u))
    R = np.empty((T, u))
    N = np.empty((T, u))
    RH = np.empty((T, u))
    for t in range(T):
        wx = wx_all[t]
        uh = Uzr @ h
        z = _sigmoid(wx[:u] + uh[:u])
        r = _sigmoid(wx[u:2 * u] + uh[u:])
        rh = r * h
        n = np.tanh(wx[2 * u:] + Un @ rh)
        HPREV[t] = h
        h = (1.0 - z) * h + z * n
        HS[t] = h
        Z[t], R[t], N[t], RH[t] = z, r, n, rh
    cache = (xs, HS, HPREV, Z, R, N, RH)
    return HS, cache


def gru_sequence_backward(dhs, cache, params, prefix, grads):
    """dhs (T x u): gradient w.r.t. each emitted hidden state.

    Returns dxs (T x in); the initial state is a constant zero, so its
    gradient is dropped.
    """
    W = params["%s.W" % prefix]
    U = params["%s.U" % prefix]
    xs, HS, HPREV, Z, R, N, RH = cache
    T, u = HS.shape
    Uzr = U[:2 * u]
    Un = U[2 * u:]
    DPRE = np.empty((T, 3 * u))
    dh = np.zeros(u)
    for t in range(T - 1, -1, -1):
        dh = dh + dhs[t]
        z, r, n, rh, h_prev = Z[t], R[t], N[t], RH[t], HPREV[t]
        dz = dh * (n - h_prev)
        dn = dh * z
        dh_prev = dh * (1.0 - z)
        dn_pre = dn * (1.0 - n * n)
        dz_pre = dz * z * (1.0 - z)
        drh = Un.T @ dn_pre
        dh_prev = dh_prev + drh * r
        dr_pre = (drh * h_prev) * r * (1.0 - r)
        DPRE[t, :u] = dz_pre
        DPRE[t, u:2 * u] = dr_pre
        DPRE[t, 2 * u:] = dn_pre
        dh = dh_prev + Uzr.T @ DPRE[t, :2 * u]
    grads["%s.W" % prefix] += DPRE.T @ xs
    grads["%s.b" % prefix] += DPRE.sum(axis=0)
    gU = grads["%s.U" % prefix]
    gU[:u] += DPRE[:, :u].T @ HPREV
    gU[u:2 * u] += DPRE[:, u:2 * u].T @ HPREV
    gU[2 * u:] += DPRE[:, 2 * u:].T @ RH
    return DPRE @ W
