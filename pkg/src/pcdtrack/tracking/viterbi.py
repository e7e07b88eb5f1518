"""First-, second- and mixed-order Viterbi over per-step restricted state sets.

The cores work on log-probability arrays so they can be checked against
exhaustive enumeration; the wrappers build those arrays from a grid model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statespace import DecodeError, HmmModel, StateSpace

NEG_INF = -np.inf


@dataclass
class DecodedPath:
    window: int
    cells: np.ndarray
    step_loglik: np.ndarray
    frames: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    target: int = -1
    score: float = 0.0

    def __len__(self):
        return len(self.cells)


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def viterbi_core(log_init, log_emis, log_trans1, log_trans2=None, second_order=None):
    """Best path through a trellis whose step sets may differ in size.

    log_init: (S0,); log_emis: list of (S_t,); log_trans1[t]: (S_{t-1}, S_t)
    for t >= 1 (index 0 unused). When ``second_order[t]`` is true the step-t
    transition is ``log_trans2[t]`` with shape (S_{t-2}, S_{t-1}, S_t).
    Returns (path of per-step indices, total log score, per-step increments).
    """
    T = len(log_emis)
    if T == 0:
        raise DecodeError("nothing to decode")
    orders = list(second_order) if second_order is not None else [False] * T
    if T == 1 or not any(orders[2:]):
        return _first_order(log_init, log_emis, log_trans1)
    return _pair_order(log_init, log_emis, log_trans1, log_trans2, orders)


def _first_order(log_init, log_emis, log_trans):
    T = len(log_emis)
    delta = np.asarray(log_init, float) + np.asarray(log_emis[0], float)
    back = []
    for t in range(1, T):
        cand = delta[:, None] + log_trans[t]
        arg = np.argmax(cand, axis=0)
        delta = cand[arg, np.arange(cand.shape[1])] + log_emis[t]
        back.append(arg)
    last = int(np.argmax(delta))
    score = float(delta[last])
    if not np.isfinite(score):
        raise DecodeError("no finite-probability path")
    path = [last]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    path.reverse()
    return np.array(path, dtype=np.int64), score, _increments(path, log_init, log_emis, log_trans)


def _increments(path, log_init, log_emis, log_trans, log_trans2=None, orders=None):
    inc = np.empty(len(path))
    inc[0] = log_init[path[0]] + log_emis[0][path[0]]
    for t in range(1, len(path)):
        if orders is not None and orders[t] and t >= 2:
            tr = log_trans2[t][path[t - 2], path[t - 1], path[t]]
        else:
            tr = log_trans[t][path[t - 1], path[t]]
        inc[t] = tr + log_emis[t][path[t]]
    return inc


def _pair_order(log_init, log_emis, log_trans1, log_trans2, orders):
    T = len(log_emis)
    # psi[i, j]: best score ending with states (i at t-1, j at t)
    psi = (np.asarray(log_init, float) + np.asarray(log_emis[0], float))[:, None] + log_trans1[1] + log_emis[1][None, :]
    backs = []
    for t in range(2, T):
        if orders[t]:
            cand = psi[:, :, None] + log_trans2[t]
        else:
            cand = psi[:, :, None] + log_trans1[t][None, :, :]
        arg = np.argmax(cand, axis=0)  # (S_{t-1}, S_t)
        psi = np.take_along_axis(cand, arg[None], axis=0)[0] + log_emis[t][None, :]
        backs.append(arg)
    i, j = np.unravel_index(int(np.argmax(psi)), psi.shape)
    score = float(psi[i, j])
    if not np.isfinite(score):
        raise DecodeError("no finite-probability path")
    path = [int(j), int(i)]
    for arg in reversed(backs):
        path.append(int(arg[path[-1], path[-2]]))
    path.reverse()
    return (
        np.array(path, dtype=np.int64),
        score,
        _increments(path, log_init, log_emis, log_trans1, log_trans2, orders),
    )


# -- grid wrappers -----------------------------------------------------------------


def _grid_arrays(observations, model: HmmModel, active_sets, state_space: StateSpace, init_cells=None, sigma_scale=None):
    sets = [np.asarray(a, dtype=np.int64) for a in active_sets]
    if len(sets) != len(observations):
        raise ValueError("one active set per observation required")
    scales = [1.0] * len(sets) if sigma_scale is None else list(sigma_scale)
    log_emis = []
    for obs, cells, sc in zip(observations, sets, scales):
        if obs is not None and not state_space.contains(obs):
            raise DecodeError(f"observation {tuple(obs)} lies outside the state grid")
        e = model.log_emission(obs, cells, state_space, sc)
        if obs is not None and not np.any(np.exp(e) > 0):
            raise DecodeError("all-zero emission row")
        log_emis.append(e)
    if init_cells is None:
        log_init = np.full(len(sets[0]), -np.log(len(sets[0])))
    else:
        log_init = _log(model.transition_matrix(init_cells, sets[0], state_space)).max(axis=0)
    log_trans = [None] + [
        _log(model.transition_matrix(sets[t - 1], sets[t], state_space)) for t in range(1, len(sets))
    ]
    return sets, log_init, log_emis, log_trans


def viterbi_first_order(observations, model: HmmModel, active_sets, state_space: StateSpace, init_cells=None, window: int = 0):
    sets, log_init, log_emis, log_trans = _grid_arrays(observations, model, active_sets, state_space, init_cells)
    path, score, inc = _first_order(log_init, log_emis, log_trans)
    cells = np.array([sets[t][k] for t, k in enumerate(path)], dtype=np.int64)
    return DecodedPath(window, cells, inc, score=score)


def viterbi_second_order(observations, model: HmmModel, active_sets, state_space: StateSpace, init_cells=None, window: int = 0):
    return viterbi_adaptive(
        observations, model, active_sets, state_space, [True] * len(observations), init_cells, window
    )


def viterbi_adaptive(
    observations, model: HmmModel, active_sets, state_space: StateSpace, second_order, init_cells=None, window: int = 0, sigma_scale=None
):
    """Per-step order selection: step t uses second-order transitions when
    ``second_order[t]`` is set (and t >= 2). ``sigma_scale`` optionally widens
    the emission per step."""
    sets, log_init, log_emis, log_trans = _grid_arrays(observations, model, active_sets, state_space, init_cells, sigma_scale)
    orders = list(second_order)
    log_trans2 = [None] * len(sets)
    for t in range(2, len(sets)):
        if orders[t]:
            log_trans2[t] = _log(model.transition_tensor(sets[t - 2], sets[t - 1], sets[t], state_space))
    path, score, inc = viterbi_core(log_init, log_emis, log_trans, log_trans2, orders)
    cells = np.array([sets[t][k] for t, k in enumerate(path)], dtype=np.int64)
    return DecodedPath(window, cells, inc, score=score)
