"""Loss components and their analytic gradients.

The combined objective mixes a text part (word-word and entity-word
weighted least squares), a type part (entities as convex combinations of
per-type anchor points, optionally with an anchor-cohesion penalty), a
relation part (translation distances and relation-group subspace fits) and
nuclear-norm regularizers on the anchor span matrices:

    total = alpha * J_text + (1 - alpha) * (J_type + J_rel) + beta * J_reg

The nuclear norms are non-smooth and contribute no gradient here; the
optimizer treats them with a proximal step.  Everything else is smooth and
its partials are computed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from typespace.ingest import ENTITY_WORD, WORD_WORD, CooccurrenceTable, TripleStore
from typespace.params import (
    EmbeddingModel,
    GroupParams,
    Hyperparams,
    ModelParams,
    RelationParams,
    TypeParams,
    TypeSubspaceParams,
    anchor_span_matrix,
)

_SIMPLEX_SUM_TOL = 1e-6
_SIMPLEX_NEG_TOL = 1e-9


class SimplexViolationError(ValueError):
    """A lambda/mu coefficient row left the probability simplex."""


@dataclass(frozen=True)
class VariantFlags:
    """Which objective components a model variant activates."""

    type_active: bool
    comb: bool
    rel_dim_active: bool
    rel_dist_active: bool
    reg1: bool
    reg2: bool


_VARIANT_TABLE = {
    "full": VariantFlags(True, False, True, True, True, True),
    "no_rel": VariantFlags(True, False, False, False, True, False),
    "no_type": VariantFlags(False, False, True, True, False, True),
    "no_nn": VariantFlags(False, False, True, True, False, False),
    "text": VariantFlags(False, False, False, False, False, False),
    "rel_dim": VariantFlags(True, False, True, False, True, True),
    "rel_dist": VariantFlags(True, False, False, True, True, False),
    "type_comb": VariantFlags(True, True, True, True, True, True),
    "type_dist": VariantFlags(True, True, True, True, False, True),
}


def variant_flags(variant: str) -> VariantFlags:
    try:
        return _VARIANT_TABLE[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}") from None


@dataclass
class LossBreakdown:
    j_glove: float = 0.0
    j_text_entity: float = 0.0
    j_type: float = 0.0
    j_type_comb_penalty: float = 0.0
    j_rel_dim: float = 0.0
    j_rel_dist: float = 0.0
    j_reg1: float = 0.0
    j_reg2: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "j_glove": self.j_glove,
            "j_text_entity": self.j_text_entity,
            "j_type": self.j_type,
            "j_type_comb_penalty": self.j_type_comb_penalty,
            "j_rel_dim": self.j_rel_dim,
            "j_rel_dist": self.j_rel_dist,
            "j_reg1": self.j_reg1,
            "j_reg2": self.j_reg2,
            "total": self.total,
        }


def weight_f(x: float, x_max: float, exp: float) -> float:
    """Co-occurrence weighting: (x/x_max)**exp below x_max, 1 beyond."""
    if x < 0:
        raise ValueError("co-occurrence count must be non-negative")
    if x < x_max:
        return (x / x_max) ** exp
    return 1.0


def _weights(counts: np.ndarray, hp: Hyperparams) -> np.ndarray:
    w = np.power(counts / hp.x_max, hp.weight_exp)
    return np.minimum(w, 1.0)


def glove_loss(table: CooccurrenceTable, model: EmbeddingModel, hp: Hyperparams) -> float:
    """Weighted least-squares fit of word-word log co-occurrence."""
    if table.kind != WORD_WORD:
        raise ValueError("glove_loss expects a word-word table")
    if len(table) == 0:
        return 0.0
    wi = model.word_vecs[table.rows]
    cj = model.ctx_vecs[table.cols]
    pred = np.einsum("ij,ij->i", wi, cj) + model.word_bias[table.rows] + model.ctx_bias[table.cols]
    resid = pred - np.log(table.weights)
    return float(np.sum(_weights(table.weights, hp) * resid * resid))


def entity_word_loss(table: CooccurrenceTable, model: EmbeddingModel, hp: Hyperparams) -> float:
    """Weighted least-squares fit of entity-word log co-occurrence; rows are
    entity points, columns word vectors, biases are the entity and word
    biases."""
    if table.kind != ENTITY_WORD:
        raise ValueError("entity_word_loss expects an entity-word table")
    if len(table) == 0:
        return 0.0
    pe = model.entity_points[table.rows]
    wj = model.word_vecs[table.cols]
    pred = np.einsum("ij,ij->i", pe, wj) + model.entity_bias[table.rows] + model.word_bias[table.cols]
    resid = pred - np.log(table.weights)
    return float(np.sum(_weights(table.weights, hp) * resid * resid))


def _check_simplex(coeffs: np.ndarray, what: str) -> None:
    sums = coeffs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > _SIMPLEX_SUM_TOL) or np.any(coeffs < -_SIMPLEX_NEG_TOL):
        raise SimplexViolationError(f"{what} coefficients violate the simplex constraint")


def type_loss(types: TypeSubspaceParams, model: EmbeddingModel, comb: bool = False) -> float:
    """Sum of squared residuals of entity points against their convex
    combination of type anchors; with comb=True adds the anchor-cohesion
    penalty (unsquared distances to the anchor centroid)."""
    total = 0.0
    for type_id, tp in types.items():
        if len(tp.members) == 0:
            continue
        _check_simplex(tp.coeffs, f"type {type_id!r} lambda")
        resid = model.entity_points[tp.members] - tp.coeffs @ tp.anchors
        total += float(np.sum(resid * resid))
    if comb:
        total += type_comb_penalty(types)
    return total


def type_comb_penalty(types: TypeSubspaceParams) -> float:
    """Sum over types and anchors of the Euclidean distance between each
    anchor and the anchor centroid."""
    total = 0.0
    for tp in types.per_type.values():
        centered = tp.anchors - tp.anchors.mean(axis=0)
        total += float(np.sum(np.linalg.norm(centered, axis=1)))
    return total


def rel_dist_loss(store: TripleStore, model: EmbeddingModel, rels: RelationParams) -> float:
    """Translation loss summed through both group indexes: each triple is
    visited once through its (head, rel) group and once through its
    (rel, tail) group, so the total is twice the per-triple sum."""
    total = 0.0
    for (e, k), tails in store.rhs.items():
        target = model.entity_points[e] + rels.vectors[k]
        diffs = model.entity_points[np.array(tails)] - target
        total += float(np.sum(diffs * diffs))
    for (k, f), heads in store.lhs.items():
        target = model.entity_points[f] - rels.vectors[k]
        diffs = model.entity_points[np.array(heads)] - target
        total += float(np.sum(diffs * diffs))
    return total


def _group_points(gp: GroupParams, model: EmbeddingModel, rels: RelationParams, key, side: str) -> np.ndarray:
    pts = model.entity_points[gp.members]
    if side == "rhs":
        e, k = key
        virtual = model.entity_points[e] + rels.vectors[k]
    else:
        k, f = key
        virtual = model.entity_points[f] - rels.vectors[k]
    return np.vstack([pts, virtual[None, :]])


def rel_dim_loss(model: EmbeddingModel, rels: RelationParams) -> float:
    """Subspace fit of relation groups: each member point (tails of a head,
    heads of a tail, plus the translated endpoint) against its convex
    combination of the group anchors."""
    total = 0.0
    for side, groups in (("rhs", rels.rhs_groups), ("lhs", rels.lhs_groups)):
        for key, gp in groups.items():
            _check_simplex(gp.coeffs, f"group {side}{key} mu")
            pts = _group_points(gp, model, rels, key, side)
            resid = pts - gp.coeffs @ gp.anchors
            total += float(np.sum(resid * resid))
    return total


def nuclear_norm(m: np.ndarray) -> float:
    """Sum of singular values."""
    if not np.all(np.isfinite(m)):
        raise ValueError("nuclear norm of a non-finite matrix")
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def regularizer(types: TypeSubspaceParams, rels: RelationParams, variant: str) -> tuple[float, float]:
    """Nuclear norms of the anchor span matrices, zeroed for variants that
    exclude each component."""
    flags = variant_flags(variant)
    j1 = 0.0
    j2 = 0.0
    if flags.reg1:
        for tp in types.per_type.values():
            j1 += nuclear_norm(anchor_span_matrix(tp.anchors))
    if flags.reg2:
        for groups in (rels.rhs_groups, rels.lhs_groups):
            for gp in groups.values():
                j2 += nuclear_norm(anchor_span_matrix(gp.anchors))
    return j1, j2


def total_objective(
    word_word: CooccurrenceTable | None,
    entity_word: CooccurrenceTable | None,
    store: TripleStore | None,
    params: ModelParams,
    hp: Hyperparams,
) -> LossBreakdown:
    """Assemble the full objective for the configured variant; inactive
    components are reported as zero."""
    flags = variant_flags(hp.variant)
    out = LossBreakdown()
    if word_word is not None:
        out.j_glove = glove_loss(word_word, params.model, hp)
    if entity_word is not None:
        out.j_text_entity = entity_word_loss(entity_word, params.model, hp)
    if flags.type_active:
        out.j_type = type_loss(params.types, params.model, comb=False)
        if flags.comb:
            out.j_type_comb_penalty = type_comb_penalty(params.types)
    if flags.rel_dim_active:
        out.j_rel_dim = rel_dim_loss(params.model, params.rels)
    if flags.rel_dist_active and store is not None:
        out.j_rel_dist = rel_dist_loss(store, params.model, params.rels)
    out.j_reg1, out.j_reg2 = regularizer(params.types, params.rels, hp.variant)
    alpha = hp.alpha_mix
    out.total = (
        alpha * (out.j_glove + out.j_text_entity)
        + (1.0 - alpha) * (out.j_type + out.j_type_comb_penalty + out.j_rel_dim + out.j_rel_dist)
        + hp.beta_reg * (out.j_reg1 + out.j_reg2)
    )
    return out


# ---------------------------------------------------------------------------
# Per-item smooth terms and their exact partials.  The trainer applies these
# one item at a time; loss_and_gradients sums them over a batch.  Gradient
# addresses are tuples: ("entity", e), ("word", j), ("ctx", j),
# ("word_bias", j), ("ctx_bias", j), ("entity_bias", e), ("rel", k),
# ("anchors", type_id), ("lambda", type_id, row),
# ("q", side, key), ("mu", side, key, row).


def glove_entry_terms(model: EmbeddingModel, i: int, j: int, x: float, hp: Hyperparams):
    """Loss and partials of one word-word entry."""
    fx = weight_f(x, hp.x_max, hp.weight_exp)
    resid = float(model.word_vecs[i] @ model.ctx_vecs[j]) + model.word_bias[i] + model.ctx_bias[j] - math.log(x)
    coef = 2.0 * fx * resid
    loss = fx * resid * resid
    grads = {
        ("word", i): coef * model.ctx_vecs[j],
        ("ctx", j): coef * model.word_vecs[i],
        ("word_bias", i): coef,
        ("ctx_bias", j): coef,
    }
    return loss, grads


def entity_word_entry_terms(model: EmbeddingModel, e: int, j: int, y: float, hp: Hyperparams):
    """Loss and partials of one entity-word entry."""
    fy = weight_f(y, hp.x_max, hp.weight_exp)
    resid = float(model.entity_points[e] @ model.word_vecs[j]) + model.entity_bias[e] + model.word_bias[j] - math.log(y)
    coef = 2.0 * fy * resid
    loss = fy * resid * resid
    grads = {
        ("entity", e): coef * model.word_vecs[j],
        ("word", j): coef * model.entity_points[e],
        ("entity_bias", e): coef,
        ("word_bias", j): coef,
    }
    return loss, grads


def type_term_gradients(model: EmbeddingModel, type_id: str, tp: TypeParams):
    """Loss and partials of one type's convex-combination residuals,
    vectorized over member entities."""
    if len(tp.members) == 0:
        return 0.0, {}
    resid = model.entity_points[tp.members] - tp.coeffs @ tp.anchors
    loss = float(np.sum(resid * resid))
    grads: dict = {("anchors", type_id): -2.0 * tp.coeffs.T @ resid}
    lam_grad = -2.0 * resid @ tp.anchors.T
    for row, e in enumerate(tp.members):
        grads[("lambda", type_id, row)] = lam_grad[row]
        key = ("entity", int(e))
        if key in grads:
            grads[key] = grads[key] + 2.0 * resid[row]
        else:
            grads[key] = 2.0 * resid[row]
    return loss, grads


def comb_penalty_gradients(type_id: str, tp: TypeParams, tiny: float = 1e-12):
    """Loss and anchor partials of the anchor-cohesion penalty.  At a kink
    (anchor exactly at the centroid) the zero subgradient is used."""
    centered = tp.anchors - tp.anchors.mean(axis=0)
    norms = np.linalg.norm(centered, axis=1)
    loss = float(np.sum(norms))
    safe = np.where(norms > tiny, norms, 1.0)
    units = np.where((norms > tiny)[:, None], centered / safe[:, None], 0.0)
    grad = units - units.mean(axis=0)
    return loss, {("anchors", type_id): grad}


def rel_dist_triple_terms(model: EmbeddingModel, rels: RelationParams, e: int, k: int, f: int):
    """Loss and partials of one triple's translation residual; the factor 2
    reflects the triple's appearance in both group sums."""
    r = model.entity_points[f] - model.entity_points[e] - rels.vectors[k]
    loss = 2.0 * float(r @ r)
    grads = {
        ("entity", f): 4.0 * r,
        ("entity", e): -4.0 * r,
        ("rel", k): -4.0 * r,
    }
    if e == f:
        grads = {("entity", e): np.zeros_like(r), ("rel", k): -4.0 * r}
    return loss, grads


def rel_group_gradients(model: EmbeddingModel, rels: RelationParams, side: str, key: tuple[int, int], gp: GroupParams):
    """Loss and partials of one relation group's subspace residuals."""
    pts = _group_points(gp, model, rels, key, side)
    resid = pts - gp.coeffs @ gp.anchors
    loss = float(np.sum(resid * resid))
    grads: dict = {("q", side, key): -2.0 * gp.coeffs.T @ resid}
    mu_grad = -2.0 * resid @ gp.anchors.T
    for row in range(resid.shape[0]):
        grads[("mu", side, key, row)] = mu_grad[row]

    def bump(addr, vec):
        if addr in grads:
            grads[addr] = grads[addr] + vec
        else:
            grads[addr] = vec.copy()

    for row, member in enumerate(gp.members):
        bump(("entity", int(member)), 2.0 * resid[row])
    virt = 2.0 * resid[-1]
    if side == "rhs":
        e, k = key
        bump(("entity", e), virt)
        bump(("rel", k), virt)
    else:
        k, f = key
        bump(("entity", f), virt)
        bump(("rel", k), -virt)
    return loss, grads


@dataclass
class Batch:
    """A subset of smooth objective terms for loss_and_gradients.

    ww/ew are (row, col, count) entries; type_ids name whole type terms;
    triples are (head, rel, tail) index triples; rhs_keys/lhs_keys name
    relation groups.
    """

    ww: list = field(default_factory=list)
    ew: list = field(default_factory=list)
    type_ids: list = field(default_factory=list)
    comb: bool = False
    triples: list = field(default_factory=list)
    rhs_keys: list = field(default_factory=list)
    lhs_keys: list = field(default_factory=list)

    @classmethod
    def full(
        cls,
        word_word: CooccurrenceTable | None,
        entity_word: CooccurrenceTable | None,
        store: TripleStore | None,
        params: ModelParams,
        comb: bool = False,
        include_rel_dim: bool = True,
    ) -> "Batch":
        b = cls(comb=comb)
        if word_word is not None:
            b.ww = [(int(r), int(c), float(w)) for r, c, w in zip(word_word.rows, word_word.cols, word_word.weights)]
        if entity_word is not None:
            b.ew = [(int(r), int(c), float(w)) for r, c, w in zip(entity_word.rows, entity_word.cols, entity_word.weights)]
        b.type_ids = sorted(params.types.per_type)
        if store is not None:
            b.triples = list(store.triples)
        if include_rel_dim:
            b.rhs_keys = sorted(params.rels.rhs_groups)
            b.lhs_keys = sorted(params.rels.lhs_groups)
        return b


def _merge(into: dict, grads: dict) -> None:
    for key, val in grads.items():
        if key in into:
            into[key] = into[key] + val
        else:
            into[key] = val


def loss_and_gradients(batch: Batch, params: ModelParams, hp: Hyperparams):
    """Unweighted sum of the batch's smooth terms and its exact partials.

    The alpha mixing weights are the optimizer's business; nuclear norms
    never contribute here.
    """
    model, types, rels = params.model, params.types, params.rels
    total = 0.0
    grads: dict = {}
    for i, j, x in batch.ww:
        loss, g = glove_entry_terms(model, i, j, x, hp)
        total += loss
        _merge(grads, g)
    for e, j, y in batch.ew:
        loss, g = entity_word_entry_terms(model, e, j, y, hp)
        total += loss
        _merge(grads, g)
    for type_id in batch.type_ids:
        loss, g = type_term_gradients(model, type_id, types[type_id])
        total += loss
        _merge(grads, g)
        if batch.comb:
            loss, g = comb_penalty_gradients(type_id, types[type_id])
            total += loss
            _merge(grads, g)
    for e, k, f in batch.triples:
        loss, g = rel_dist_triple_terms(model, rels, e, k, f)
        total += loss
        _merge(grads, g)
    for key in batch.rhs_keys:
        loss, g = rel_group_gradients(model, rels, "rhs", key, rels.rhs_groups[key])
        total += loss
        _merge(grads, g)
    for key in batch.lhs_keys:
        loss, g = rel_group_gradients(model, rels, "lhs", key, rels.lhs_groups[key])
        total += loss
        _merge(grads, g)
    return total, grads
