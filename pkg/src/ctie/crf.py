"""Linear-chain CRF: log-partition, NLL, marginals, and Viterbi decoding.

All scores live in log space. The transition matrix is square of side
L + 2 where the last two rows/columns are virtual START and STOP states:
``trans[START, j]`` scores starting in label j, ``trans[i, STOP]`` scores
ending in label i, and ``trans[i, j]`` (i, j < L) scores the step i -> j.
Entries out of those three blocks are never read and get zero gradient.

A path y over a sequence of emissions e scores

    score(y) = trans[START, y_0] + sum_t e_t[y_t]
             + sum_t trans[y_{t-1}, y_t] + trans[y_last, STOP]

and the NLL of a gold path is logZ - score(gold), with logZ computed by
the forward recursion. Positions where ``mask`` is 0 are excluded: the
chain is the compacted subsequence of unmasked steps.
"""

from __future__ import annotations

import numpy as np


def _logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out


def _split_transitions(transitions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    size = transitions.shape[0]
    if transitions.shape != (size, size) or size < 3:
        raise ValueError(f"transition matrix must be square (L+2), got {transitions.shape}")
    num_labels = size - 2
    start = transitions[num_labels, :num_labels]
    stop = transitions[:num_labels, num_labels + 1]
    inner = transitions[:num_labels, :num_labels]
    return inner, start, stop, num_labels


def _compact(emissions: np.ndarray, mask) -> tuple[np.ndarray, np.ndarray]:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2:
        raise ValueError("emissions must be (T, L)")
    if mask is None:
        keep = np.arange(emissions.shape[0])
    else:
        keep = np.flatnonzero(np.asarray(mask) != 0)
    return emissions[keep], keep


def crf_score(
    emissions: np.ndarray,
    labels,
    transitions: np.ndarray,
    attention_mask=None,
) -> float:
    """Score of one label path (unmasked steps only)."""
    inner, start, stop, _ = _split_transitions(transitions)
    em, keep = _compact(emissions, attention_mask)
    y = np.asarray(labels)[keep] if attention_mask is not None else np.asarray(labels)
    if em.shape[0] == 0:
        return 0.0
    total = start[y[0]] + em[np.arange(len(y)), y].sum() + stop[y[-1]]
    if len(y) > 1:
        total += inner[y[:-1], y[1:]].sum()
    return float(total)


def crf_log_partition(
    emissions: np.ndarray, transitions: np.ndarray, attention_mask=None
) -> float:
    """log sum over all label paths, by the forward recursion."""
    inner, start, stop, _ = _split_transitions(transitions)
    em, _ = _compact(emissions, attention_mask)
    if em.shape[0] == 0:
        return 0.0
    alpha = start + em[0]
    for t in range(1, em.shape[0]):
        alpha = _logsumexp(alpha[:, None] + inner, axis=0) + em[t]
    return float(_logsumexp(alpha + stop, axis=0))


def crf_nll(
    emissions: np.ndarray,
    labels,
    transitions: np.ndarray,
    attention_mask=None,
) -> float:
    """Negative log-likelihood of the gold path; >= 0 by construction."""
    return crf_log_partition(emissions, transitions, attention_mask) - crf_score(
        emissions, labels, transitions, attention_mask
    )


def crf_marginals(
    emissions: np.ndarray, transitions: np.ndarray, attention_mask=None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Forward-backward node and edge marginals over unmasked steps.

    Returns (node (n, L), edge (n-1, L, L), logZ) on the compacted chain.
    """
    inner, start, stop, num_labels = _split_transitions(transitions)
    em, _ = _compact(emissions, attention_mask)
    n = em.shape[0]
    if n == 0:
        return (
            np.zeros((0, num_labels)),
            np.zeros((0, num_labels, num_labels)),
            0.0,
        )
    alpha = np.empty((n, num_labels))
    alpha[0] = start + em[0]
    for t in range(1, n):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + inner, axis=0) + em[t]
    beta = np.empty((n, num_labels))
    beta[n - 1] = stop
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(inner + (em[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = float(_logsumexp(alpha[n - 1] + stop, axis=0))
    node = np.exp(alpha + beta - log_z)
    edge = np.zeros((max(n - 1, 0), num_labels, num_labels))
    for t in range(n - 1):
        edge[t] = np.exp(
            alpha[t][:, None] + inner + (em[t + 1] + beta[t + 1])[None, :] - log_z
        )
    return node, edge, log_z


def crf_nll_grad(
    emissions: np.ndarray,
    labels,
    transitions: np.ndarray,
    attention_mask=None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """(nll, d nll/d emissions, d nll/d transitions) for one sequence.

    Emission gradients are node marginals minus the gold one-hot; transition
    gradients are expected edge counts minus gold counts, including the
    START and STOP blocks.
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    node, edge, log_z = crf_marginals(emissions, transitions, attention_mask)
    em, keep = _compact(emissions, attention_mask)
    y = np.asarray(labels)[keep] if attention_mask is not None else np.asarray(labels)
    n = em.shape[0]
    num_labels = transitions.shape[0] - 2
    start_idx, stop_idx = num_labels, num_labels + 1

    d_emissions = np.zeros_like(emissions)
    d_transitions = np.zeros_like(np.asarray(transitions, dtype=np.float64))
    if n == 0:
        return 0.0, d_emissions, d_transitions

    gold = crf_score(em, y, transitions)
    nll = log_z - gold

    d_compact = node.copy()
    d_compact[np.arange(n), y] -= 1.0
    d_emissions[keep] = d_compact

    d_transitions[:num_labels, :num_labels] += edge.sum(axis=0)
    if n > 1:
        np.add.at(d_transitions, (y[:-1], y[1:]), -1.0)
    d_transitions[start_idx, :num_labels] += node[0]
    d_transitions[start_idx, y[0]] -= 1.0
    d_transitions[:num_labels, stop_idx] += node[n - 1]
    d_transitions[y[n - 1], stop_idx] -= 1.0
    return float(nll), d_emissions, d_transitions


def crf_decode(
    emissions: np.ndarray,
    transitions: np.ndarray,
    attention_mask=None,
    allowed: np.ndarray | None = None,
) -> list[int]:
    """Viterbi argmax path over unmasked steps.

    ``allowed`` is an optional boolean (L+2, L+2) matrix; forbidden
    transitions score -inf at decode time only. Ties break toward the
    lower label id (np.argmax takes the first maximum).
    """
    inner, start, stop, num_labels = _split_transitions(transitions)
    if allowed is not None:
        neg = np.where(allowed, 0.0, -np.inf)
        a_inner, a_start, a_stop, _ = _split_transitions(neg)
        inner = inner + a_inner
        start = start + a_start
        stop = stop + a_stop
    em, _ = _compact(emissions, attention_mask)
    n = em.shape[0]
    if n == 0:
        return []
    score = start + em[0]
    back = np.zeros((n, num_labels), dtype=np.int64)
    for t in range(1, n):
        grid = score[:, None] + inner
        back[t] = np.argmax(grid, axis=0)
        score = grid[back[t], np.arange(num_labels)] + em[t]
    last = int(np.argmax(score + stop))
    path = [last]
    for t in range(n - 1, 0, -1):
        last = int(back[t, last])
        path.append(last)
    path.reverse()
    return path


def bio_allowed_transitions(bio_labels) -> np.ndarray:
    """Boolean (L+2, L+2) matrix of BIO-consistent transitions.

    I-T may only follow B-T or I-T, may not start a sequence, and START/STOP
    follow the usual virtual-state rules. Used only when constrained
    decoding is switched on.
    """
    num = len(bio_labels)
    start_idx, stop_idx = num, num + 1
    allowed = np.zeros((num + 2, num + 2), dtype=bool)

    def continues(prev: str, nxt: str) -> bool:
        if not nxt.startswith("I-"):
            return True
        return prev == f"B-{nxt[2:]}" or prev == nxt

    for i, prev in enumerate(bio_labels):
        for j, nxt in enumerate(bio_labels):
            allowed[i, j] = continues(prev, nxt)
        allowed[i, stop_idx] = True
    for j, nxt in enumerate(bio_labels):
        allowed[start_idx, j] = not nxt.startswith("I-")
    return allowed
