import numpy as np
import pytest

from typespace import synth
from typespace.ingest import (
    CooccurrenceTable,
    ENTITY_WORD,
    TripleStore,
    TypeSystem,
    WORD_WORD,
)
from typespace.params import Hyperparams, init_parameters


@pytest.fixture(scope="session")
def micro_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro")
    paths = synth.make_micro_corpus(str(out))
    return paths


def random_instance(seed, n=4, n_entities=6, n_words=5):
    """A small random model + data instance for gradient checking: random
    tables, two overlapping types, a handful of triples with groups, and
    parameters perturbed away from initialization (coefficients stay on the
    simplex)."""
    rng = np.random.default_rng(seed)
    ww = {}
    for _ in range(8):
        ww[(int(rng.integers(n_words)), int(rng.integers(n_words)))] = float(rng.integers(1, 30))
    ew = {}
    for _ in range(8):
        ew[(int(rng.integers(n_entities)), int(rng.integers(n_words)))] = float(rng.integers(1, 30))
    ww_t = CooccurrenceTable.from_dict(WORD_WORD, ww)
    ew_t = CooccurrenceTable.from_dict(ENTITY_WORD, ew)

    members1 = tuple(sorted(int(x) for x in rng.choice(n_entities, size=3, replace=False)))
    members2 = tuple(sorted(int(x) for x in rng.choice(n_entities, size=4, replace=False)))
    ts = TypeSystem(
        ("t1", "t2"),
        (),
        {"t1": members1, "t2": members2},
        {"t1": members1, "t2": members2},
        {"t1": frozenset({"t1"}), "t2": frozenset({"t2"})},
    )

    triples = sorted(
        {(int(rng.integers(n_entities)), int(rng.integers(2)), int(rng.integers(n_entities))) for _ in range(5)}
    )
    rhs: dict = {}
    lhs: dict = {}
    for e, k, f in triples:
        rhs.setdefault((e, k), []).append(f)
        lhs.setdefault((k, f), []).append(e)
    store = TripleStore(
        ("r0", "r1"),
        {"r0": 0, "r1": 1},
        tuple(triples),
        {k: tuple(sorted(v)) for k, v in sorted(rhs.items())},
        {k: tuple(sorted(v)) for k, v in sorted(lhs.items())},
    )

    hp = Hyperparams(n=n, seed=seed, epochs=1)
    params = init_parameters(n_entities, n_words, ts, store, hp)
    m = params.model
    for arr in (m.entity_points, m.word_vecs, m.ctx_vecs):
        arr += rng.normal(scale=0.3, size=arr.shape)
    for arr in (m.word_bias, m.ctx_bias, m.entity_bias):
        arr += rng.normal(scale=0.2, size=arr.shape)
    params.rels.vectors += rng.normal(scale=0.3, size=params.rels.vectors.shape)
    for tp in params.types.per_type.values():
        tp.anchors += rng.normal(scale=0.4, size=tp.anchors.shape)
        raw = rng.uniform(0.1, 1.0, size=tp.coeffs.shape)
        tp.coeffs[:] = raw / raw.sum(axis=1, keepdims=True)
    for groups in (params.rels.rhs_groups, params.rels.lhs_groups):
        for gp in groups.values():
            gp.anchors += rng.normal(scale=0.4, size=gp.anchors.shape)
            raw = rng.uniform(0.1, 1.0, size=gp.coeffs.shape)
            gp.coeffs[:] = raw / raw.sum(axis=1, keepdims=True)
    return ww_t, ew_t, store, params, hp
