"""Compiled inner loops of the engine.

Array mirror of :mod:`lightadopt.behavior`. Random numbers come from
pre-drawn pools so a plain-Python replay can reproduce every choice.
"""

from __future__ import annotations

import numpy as np
from numba import njit

REPETITION, IMITATION, DELIBERATION, SOCIAL_COMPARISON = 0, 1, 2, 3

# kernel status codes
OK = 0
EMPTY_MARKET = 1
POOL_EXHAUSTED = 2


@njit(cache=True)
def _better(s_a, p_a, id_a, s_b, p_b, id_b):
    """Is candidate a preferred over b? Higher satisfaction, then lower price, then lower id."""
    if s_a != s_b:
        return s_a > s_b
    if p_a != p_b:
        return p_a < p_b
    return id_a < id_b


@njit(cache=True)
def _deliberate(S, i, price, avail):
    best = -1
    for m in range(S.shape[1]):
        if not avail[m]:
            continue
        if best < 0 or _better(S[i, m], price[m], m, S[i, best], price[best], best):
            best = m
    return best


@njit(cache=True)
def _select_peer(i, n, prefvec, agree, sim0, loosen, max_attempts, U, pos):
    radius = sim0 * (1.0 + agree[i])
    attempts = 0
    while True:
        if pos >= U.shape[0]:
            return -1, pos
        j = int(U[pos] * (n - 1))
        pos += 1
        if j >= i:
            j += 1
        if attempts >= max_attempts:
            return j, pos
        d = 0.0
        for k in range(prefvec.shape[1]):
            d += abs(prefvec[i, k] - prefvec[j, k])
        if d <= radius:
            return j, pos
        radius *= loosen
        attempts += 1


@njit(cache=True)
def _peer_model_mask(snap_model, n_lamps, j, avail, mask):
    mask[:] = False
    found = 0
    for k in range(n_lamps[j]):
        m = snap_model[j, k]
        if avail[m] and not mask[m]:
            mask[m] = True
            found += 1
    return found


@njit(cache=True)
def process_month(
    order,
    inv_model,
    inv_life,
    n_lamps,
    snap_model,
    S,
    price,
    avail,
    mean_life,
    certainty,
    prefvec,
    agree,
    tau_s,
    tau_c,
    sim0,
    loosen,
    max_attempts,
    U,
    Z,
    ev_agent,
    ev_strategy,
    ev_model,
    ev_expected,
    ev_blocked,
    last_strategy,
):
    """Replace every broken lamp (remaining lifetime <= 0) in agent ``order``.

    Returns (status, number of events, uniforms consumed).
    """
    n = order.shape[0]
    n_models = S.shape[1]
    mask = np.zeros(n_models, dtype=np.bool_)
    n_avail = 0
    for m in range(n_models):
        if avail[m]:
            n_avail += 1
    pos = 0
    ne = 0
    for oi in range(n):
        i = order[oi]
        for slot in range(n_lamps[i]):
            if inv_life[i, slot] > 0.0:
                continue
            if n_avail == 0:
                return EMPTY_MARKET, ne, pos
            cur = 0.0
            for k in range(n_lamps[i]):
                cur += S[i, inv_model[i, k]]
            cur /= n_lamps[i]
            broken = inv_model[i, slot]

            satisfied = cur >= tau_s
            certain = certainty[i] >= tau_c
            if satisfied:
                strat = REPETITION if certain else IMITATION
            else:
                strat = DELIBERATION if certain else SOCIAL_COMPARISON

            blocked = False
            chosen = -1
            if strat == REPETITION:
                if avail[broken]:
                    chosen = broken
                else:
                    blocked = True
                    strat = DELIBERATION
            if strat == IMITATION or strat == SOCIAL_COMPARISON:
                if n < 2:
                    strat = DELIBERATION
                else:
                    j, pos = _select_peer(i, n, prefvec, agree, sim0, loosen, max_attempts, U, pos)
                    if j < 0:
                        return POOL_EXHAUSTED, ne, pos
                    found = _peer_model_mask(snap_model, n_lamps, j, avail, mask)
                    if strat == IMITATION:
                        if pos >= U.shape[0]:
                            return POOL_EXHAUSTED, ne, pos
                        u = U[pos]
                        pos += 1
                        if found == 0:
                            for m in range(n_models):
                                mask[m] = avail[m]
                            found = n_avail
                        pick = int(u * found)
                        c = 0
                        for m in range(n_models):
                            if mask[m]:
                                if c == pick:
                                    chosen = m
                                    break
                                c += 1
                    else:
                        if found == 0:
                            strat = DELIBERATION
                        else:
                            best = -1
                            for m in range(n_models):
                                if mask[m] and (best < 0 or _better(S[i, m], price[m], m, S[i, best], price[best], best)):
                                    best = m
                            chosen = best
                            if avail[broken] and S[i, best] < S[i, broken]:
                                chosen = broken
            if strat == DELIBERATION:
                chosen = _deliberate(S, i, price, avail)

            life = mean_life[chosen]
            inv_model[i, slot] = chosen
            inv_life[i, slot] = max(0.5, life + life / 5.0 * Z[ne])
            ev_agent[ne] = i
            ev_strategy[ne] = strat
            ev_model[ne] = chosen
            ev_expected[ne] = S[i, chosen]
            ev_blocked[ne] = blocked
            last_strategy[i] = strat
            ne += 1
    return OK, ne, pos


@njit(cache=True)
def apply_updates(
    ev_agent, ev_model, ev_expected, ev_blocked, model_type, S_now, experience, certainty, eta, gamma, penalty
):
    """Deferred experience/certainty updates; realized satisfaction is read from ``S_now``."""
    for e in range(ev_agent.shape[0]):
        i = ev_agent[e]
        m = ev_model[e]
        t = model_type[m]
        realized = S_now[i, m]
        experience[i, t] = (1.0 - eta) * experience[i, t] + eta * realized
        c = certainty[i]
        if ev_blocked[e]:
            c *= penalty
        c = (1.0 - gamma) * c + gamma * (1.0 - abs(realized - ev_expected[e]))
        certainty[i] = min(1.0, max(0.0, c))


@njit(cache=True)
def type_counts(inv_model, n_lamps, model_type):
    n = inv_model.shape[0]
    counts = np.zeros((n, 3), dtype=np.int64)
    for i in range(n):
        for k in range(n_lamps[i]):
            counts[i, model_type[inv_model[i, k]]] += 1
    return counts


@njit(cache=True)
def peer_type_shares(modal, peers):
    n, k = peers.shape
    shares = np.zeros((n, 3))
    if k == 0:
        return shares
    for i in range(n):
        for j in range(k):
            shares[i, modal[peers[i, j]]] += 1.0
        for t in range(3):
            shares[i, t] /= k
    return shares


@njit(cache=True)
def blend_satisfaction(personal, experience, shares, model_type, beta, sigma):
    """(1 - sigma_i) * (beta * experience + (1 - beta) * personal) + sigma_i * social, clipped."""
    n, m_count = personal.shape
    S = np.empty((n, m_count))
    for i in range(n):
        s_i = sigma[i]
        for m in range(m_count):
            t = model_type[m]
            v = (1.0 - s_i) * (beta * experience[i, t] + (1.0 - beta) * personal[i, m]) + s_i * shares[i, t]
            S[i, m] = min(1.0, max(0.0, v))
    return S
