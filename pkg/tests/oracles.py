"""Independent slow implementations used as test oracles."""

import math

import numpy as np


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def rotate_inverse(q, v):
    """conj(q) * v * q: express world vector v in the frame of q."""
    conj = (q[0], -q[1], -q[2], -q[3])
    out = _qmul(_qmul(conj, (0.0, v[0], v[1], v[2])), q)
    return out[1:]


def _dist(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def naive_metrics(body, root_pos, root_quat, q, tau, ref_body, ref_root_pos, ref_root_quat, ref_q) -> dict:
    T, nb = len(body), len(body[0])
    na = len(q[0])
    g = l = r = d = 0.0
    step_tau = []
    for t in range(T):
        for b in range(nb):
            g += _dist(body[t][b], ref_body[t][b])
            rel = [body[t][b][i] - root_pos[t][i] for i in range(3)]
            ref_rel = [ref_body[t][b][i] - ref_root_pos[t][i] for i in range(3)]
            l += _dist(rotate_inverse(root_quat[t], rel), rotate_inverse(ref_root_quat[t], ref_rel))
        r += _dist(root_pos[t], ref_root_pos[t])
        s = 0.0
        for j in range(na):
            d += abs(float(q[t][j]) - float(ref_q[t][j]))
            s += abs(float(tau[t][j]))
        step_tau.append(s / na)
    mean_tau = sum(step_tau) / T
    var = sum((x - mean_tau) ** 2 for x in step_tau) / T
    return {
        "e_mgbp": g / (T * nb),
        "e_mlbp": l / (T * nb),
        "e_mgrp": r / T,
        "e_mdp": d / (T * na),
        "m_jt": mean_tau,
        "sigma_mjt": math.sqrt(var),
    }


def dense_ik_oracle(model, root, q, tasks, lam, jacobian, positions, gain=1.0):
    """Weighted damped least squares via lstsq on the stacked augmented system."""
    rows, rhs = [], []
    pos = positions(model, root, q)
    for t in tasks:
        jac = jacobian(model, root, q, t.frame)
        rows.append(np.sqrt(t.weight) * jac)
        rhs.append(np.sqrt(t.weight) * gain * (t.target_pos - pos[t.frame]))
    rows.append(np.sqrt(lam) * np.eye(model.n))
    rhs.append(np.zeros(model.n))
    return np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]


def fd_jacobian(model, root, q, frame, positions, h=1e-6):
    cols = []
    for j in range(model.n):
        dq = np.zeros(model.n)
        dq[j] = h
        cols.append((positions(model, root, q + dq)[frame] - positions(model, root, q - dq)[frame]) / (2 * h))
    return np.stack(cols, axis=1)


def curriculum_oracle(lo, hi, rate, updates):
    """Value after ``updates`` successful updates, clamped at ``hi``."""
    v = lo
    for _ in range(updates):
        v = min(v * (1.0 + rate), hi)
    return v


def fd_disc_gradient(net, real, fake, loss_fn, h=1e-5):
    """Central differences of -L_D with respect to every discriminator parameter.

    The default step sits near the cube root of machine epsilon, where
    truncation and roundoff error balance.
    """
    params = net.params()
    grads = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[i][idx] += h
            minus[i][idx] -= h
            lp = loss_fn(net.with_params(plus), real, fake)[0]
            lm = loss_fn(net.with_params(minus), real, fake)[0]
            g[idx] = -(lp - lm) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
