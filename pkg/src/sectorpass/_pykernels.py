"""Pure numpy implementations of the hot kernels (fallback for the compiled core)."""
import numpy as np

from .nonlinearity import ALPHA0


def _f(s, model, lam, truncated, eps):
    if model == 0:
        out = np.zeros_like(s)
    elif model == 1:
        out = lam * np.sign(s) * (-np.expm1(-s * s)) * np.exp(ALPHA0 * s * s)
    else:
        out = lam * (s * s * s) * np.exp(ALPHA0 * s * s)
    if eps != 0.0:
        out = out + eps * np.exp(s * s)
    if truncated:
        out[s <= 0] = 0.0
    return out


def _F(s, model, lam, truncated, eps, tab_s, tab_F, tab_f, use_table):
    if use_table:
        # without the even perturbation F is even; the table is read at |s|
        x = np.abs(s) if eps == 0.0 else s
        k = np.clip(np.searchsorted(tab_s, x, side="right") - 1, 0, tab_s.size - 2)
        s0 = tab_s[k]
        h = tab_s[k + 1] - s0
        t = (x - s0) / h
        t2 = t * t
        t3 = t2 * t
        out = ((2 * t3 - 3 * t2 + 1) * tab_F[k] + (t3 - 2 * t2 + t) * h * tab_f[k]
               + (-2 * t3 + 3 * t2) * tab_F[k + 1] + (t3 - t2) * h * tab_f[k + 1])
    elif model == 0:
        out = np.zeros_like(s)
    else:
        s2 = s * s
        out = lam * (s2 * np.exp(ALPHA0 * s2) / (8 * np.pi) - np.expm1(ALPHA0 * s2) / (32 * np.pi**2))
    if truncated:
        out[s <= 0] = 0.0
    return out


def nonlinear_terms(tri, area, u, bary, wts, model, lam, truncated, eps,
                    tab_s, tab_F, tab_f, use_table, want_load):
    """Return (sum_T |T| sum_q w_q F(u_q), load) with load_i = sum_T |T| sum_q w_q f(u_q) phi_i(x_q)."""
    uq = u[tri] @ bary.T  # (nt, nq)
    Fq = _F(uq.ravel(), model, lam, truncated, eps, tab_s, tab_F, tab_f, use_table).reshape(uq.shape)
    total = float(area @ (Fq @ wts))
    if not want_load:
        return total, None
    fq = _f(uq.ravel(), model, lam, truncated, eps).reshape(uq.shape)
    local = area[:, None] * ((fq * wts) @ bary)  # (nt, 3)
    load = np.bincount(tri.ravel(), weights=local.ravel(), minlength=u.size)
    return total, load


def count_components(n_items, pairs, sign):
    """Union-find over items with nonzero ``sign``; a pair is merged when both
    signs agree. Returns (count, labels) with label -1 for inactive items."""
    parent = list(range(n_items))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    sg = sign.tolist()
    act = [v != 0 for v in sg]
    for a, b in pairs.tolist():
        if sg[a] != 0 and sg[a] == sg[b]:
            ra, rb = find(a), find(b)
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    labels = np.full(n_items, -1, dtype=np.int64)
    roots = {}
    for i in range(n_items):
        if act[i]:
            r = find(i)
            labels[i] = roots.setdefault(r, len(roots))
    return len(roots), labels
