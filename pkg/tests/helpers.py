"""Shared test utilities: paths, random-corpus generators, brute-force oracles."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ctie.corpus import OntologySchema, load_corpus

DATA_DIR = Path(__file__).resolve().parent / "data"

FIG_CORPUS = DATA_DIR / "fig_corpus.json"
DANGLING_I = DATA_DIR / "dangling_i.json"
USE_CASE_CORPUS = DATA_DIR / "use_case_corpus.json"
SMOKE_CORPUS = DATA_DIR / "smoke_corpus.json"


def load_fig_corpus():
    return load_corpus(FIG_CORPUS, OntologySchema.default())


def bio_for_spans(n_tokens: int, spans) -> list[str]:
    labels = ["O"] * n_tokens
    for start, end, name in spans:
        labels[start] = f"B-{name}"
        for pos in range(start + 1, end):
            labels[pos] = f"I-{name}"
    return labels


def random_record(rng: np.random.Generator, type_names=("HackOrg", "Tool", "Org", "Time")):
    """One random well-formed corpus record with 0-4 entities and relations
    labeled over a toy closed relation set."""
    n_tokens = int(rng.integers(3, 15))
    tokens = [f"w{rng.integers(0, 40)}" for _ in range(n_tokens)]
    n_entities = int(rng.integers(0, min(5, n_tokens // 2 + 1)))
    positions = sorted(rng.choice(n_tokens, size=min(n_entities * 2, n_tokens), replace=False))
    spans = []
    used = 0
    while used + 1 < len(positions) and len(spans) < n_entities:
        start = int(positions[used])
        width = 1 if rng.random() < 0.7 else 2
        end = min(start + width, int(positions[used + 1]) + 1)
        name = type_names[int(rng.integers(len(type_names)))]
        spans.append((start, max(end, start + 1), name))
        used += 2
    # keep spans disjoint by construction: clip each end at the next start
    spans = sorted(spans)
    for k in range(len(spans) - 1):
        s, e, n = spans[k]
        spans[k] = (s, min(e, spans[k + 1][0]), n)
    spans = [(s, e, n) for s, e, n in spans if e > s]

    relations = []
    seen = set()
    for _ in range(int(rng.integers(0, 4))):
        if len(spans) < 2:
            break
        i, j = rng.choice(len(spans), size=2, replace=False)
        if (int(i), int(j)) in seen:
            continue
        seen.add((int(i), int(j)))
        name = ["uses", "targets", "noRelation"][int(rng.integers(3))]
        relations.append([int(i), name, int(j)])
    return {
        "text": " ".join(tokens),
        "entities": [[s, e, n] for s, e, n in spans],
        "relations": relations,
        "entity_labels": bio_for_spans(n_tokens, spans),
    }


def random_corpus(rng: np.random.Generator, n_sentences: int):
    records = [random_record(rng) for _ in range(n_sentences)]
    return load_corpus(json.dumps(records).encode("utf-8"))


# ---------------------------------------------------------------------------
# Brute-force CRF oracle (independent of ctie.crf: explicit path enumeration)
# ---------------------------------------------------------------------------


def enumerate_paths(n_steps: int, n_labels: int):
    if n_steps == 0:
        yield ()
        return
    for rest in enumerate_paths(n_steps - 1, n_labels):
        for label in range(n_labels):
            yield rest + (label,)


def brute_force_path_score(emissions, path, transitions) -> float:
    n_labels = emissions.shape[1]
    start, stop = n_labels, n_labels + 1
    total = transitions[start, path[0]]
    prev = path[0]
    total += emissions[0, path[0]]
    for t in range(1, len(path)):
        total += transitions[prev, path[t]] + emissions[t, path[t]]
        prev = path[t]
    total += transitions[prev, stop]
    return float(total)


def brute_force_log_partition(emissions, transitions) -> float:
    n_steps, n_labels = emissions.shape
    scores = [
        brute_force_path_score(emissions, path, transitions)
        for path in enumerate_paths(n_steps, n_labels)
    ]
    m = max(scores)
    return m + float(np.log(sum(np.exp(s - m) for s in scores)))


def brute_force_best_path(emissions, transitions):
    n_steps, n_labels = emissions.shape
    best, best_score = None, -np.inf
    for path in enumerate_paths(n_steps, n_labels):
        score = brute_force_path_score(emissions, path, transitions)
        if score > best_score:
            best, best_score = path, score
    return list(best), best_score


def sample_crf_case(rng: np.random.Generator, max_t: int = 4, max_l: int = 3):
    n_steps = int(rng.integers(1, max_t + 1))
    n_labels = int(rng.integers(2, max_l + 1))
    emissions = rng.normal(scale=2.0, size=(n_steps, n_labels))
    transitions = np.zeros((n_labels + 2, n_labels + 2))
    transitions[: n_labels + 1, : n_labels + 2] = rng.normal(
        scale=1.5, size=(n_labels + 1, n_labels + 2)
    )
    labels = rng.integers(0, n_labels, size=n_steps)
    return emissions, transitions, labels


def build_type_determined_corpus(n_sentences=120, seed=13, reveal=0.6):
    """Synthetic corpus where the relation label is a deterministic function
    of the ordered (head type, tail type) pair: the alphabetically first
    admissible relation in the bundled ontology, else noRelation. Entity
    surfaces reveal their type with probability ``reveal`` and are otherwise
    drawn from a shared ambiguous pool, so masks alone carry only partial
    type information."""
    schema = OntologySchema.default()
    types = ("HackOrg", "Tool", "Org", "SecTeam")
    surfaces = {t: [f"{t.lower()}{k}" for k in range(5)] for t in types}
    ambiguous = ["alpha", "beta", "gamma", "delta", "epsilon"]
    fillers = ["the", "report", "says", "that", "was", "seen", "with", "near", "by"]
    rng = np.random.default_rng(seed)

    def relation_for(t1, t2):
        admissible = schema.admissible_relations(t1, t2)
        return admissible[0] if admissible else "noRelation"

    records = []
    for _ in range(n_sentences):
        ent_types = [types[int(rng.integers(len(types)))] for _ in range(3)]
        tokens, spans = [], []
        for t in ent_types:
            tokens.append(fillers[int(rng.integers(len(fillers)))])
            if rng.random() < reveal:
                word = surfaces[t][int(rng.integers(5))]
            else:
                word = ambiguous[int(rng.integers(len(ambiguous)))]
            spans.append((len(tokens), len(tokens) + 1, t))
            tokens.append(word)
        tokens.append(".")
        relations = []
        for i in range(3):
            for j in range(i + 1, 3):
                relations.append([i, relation_for(ent_types[i], ent_types[j]), j])
        records.append({
            "text": " ".join(tokens),
            "entities": [[s, e, t] for s, e, t in spans],
            "relations": relations,
            "entity_labels": bio_for_spans(len(tokens), spans),
        })
    return load_corpus(json.dumps(records).encode("utf-8"), schema)


# ---------------------------------------------------------------------------
# Tiny model setup shared by gradient and acceptance tests
# ---------------------------------------------------------------------------


def tiny_config(use_mask: bool = True, use_type: bool = True, dropout: float = 0.0,
                alpha: float = 1.0, beta: float = 1.0):
    from ctie.model import ModelConfig

    return ModelConfig(
        vocab_size=9, num_ner_labels=5, num_relations=3, num_entity_types=4,
        embed_dim=4, hidden_dim=3, dropout=dropout,
        use_entity_mask=use_mask, use_entity_type=use_type,
        alpha=alpha, beta=beta,
    )


def tiny_batch():
    """Two rows, T=5, with one padded row so masking is exercised."""
    from ctie.mslr import Batch

    return Batch(
        token_ids=np.array([[2, 3, 4, 5, 6], [7, 8, 2, 0, 0]], dtype=np.int64),
        attention_mask=np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=np.float64),
        entity_mask=np.array([[1, 0, 0, 1, 0], [0, 1, 1, 0, 0]], dtype=np.float64),
        head_type=np.array([1, 0], dtype=np.int64),
        tail_type=np.array([2, 3], dtype=np.int64),
        ner_labels=np.array([[1, 2, 0, 3, 4], [0, 1, 2, 0, 0]], dtype=np.int64),
        relation_label=np.array([1, 2], dtype=np.int64),
        lengths=np.array([5, 3], dtype=np.int64),
        origins=((0, 0), (1, 0)),
    )


def finite_difference_check(config, seed: int = 20, step: float = 1e-5,
                            dropout_seed: int = 777):
    """Compare analytic gradients with central finite differences on every
    parameter array. Returns {name: (analytic, numeric)}. The dropout rng is
    re-seeded per evaluation so train-mode forwards see identical masks."""
    from ctie.model import backward, forward, init_params

    batch = tiny_batch()
    params = init_params(config, seed=seed)

    def loss(p):
        rng = np.random.default_rng(dropout_seed)
        return forward(batch, p, config, mode="train", rng=rng).joint

    rng = np.random.default_rng(dropout_seed)
    result = forward(batch, params, config, mode="train", rng=rng)
    analytic = backward(result.trace, params)

    out = {}
    for name, arr in params.items():
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss(params)
            flat[k] = orig - step
            down = loss(params)
            flat[k] = orig
            numeric_flat[k] = (up - down) / (2 * step)
        out[name] = (analytic[name], numeric)
    return out
