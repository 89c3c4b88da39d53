"""Stochastic proximal training.

Each epoch makes three passes: (1) a shuffled pass over word-word and
entity-word entries with per-entry AdaGrad updates, (2) a pass over types
updating the simplex coefficients by projected gradient and the anchors by
a gradient step followed by singular-value thresholding of the anchor span
matrix, (3) a symmetric pass over relation triples and groups.  The
nuclear norms are handled only by the proximal step, never by gradients.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from typespace.ingest import CooccurrenceTable, EntityCatalog, TripleStore, TypeSystem, Vocabulary
from typespace.objective import (
    LossBreakdown,
    _group_points,
    comb_penalty_gradients,
    rel_group_gradients,
    total_objective,
    type_term_gradients,
    variant_flags,
    weight_f,
)
from typespace.params import (
    Hyperparams,
    ModelParams,
    anchor_span_matrix,
    clone_params,
    init_parameters,
    set_anchor_span_matrix,
)
from typespace.subspace import effective_rank

ADAGRAD_EPS = 1e-8


class NonFiniteGradientError(FloatingPointError):
    """A gradient went NaN/Inf; the message names the parameter."""


class TrainingDivergedError(RuntimeError):
    """Total loss became non-finite; carries the last finite-epoch params."""

    def __init__(self, message, last_good: ModelParams | None, last_epoch: int):
        super().__init__(message)
        self.last_good = last_good
        self.last_epoch = last_epoch


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum(x) = 1} (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = int(np.nonzero(cond)[0][-1]) + 1
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def prox_nuclear(m: np.ndarray, tau: float) -> np.ndarray:
    """Proximal operator of tau * nuclear norm: shrink every singular value
    by tau, clamping at zero."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if not np.all(np.isfinite(m)):
        raise ValueError("cannot threshold a non-finite matrix")
    if tau == 0.0:
        return m.copy()
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vt


def adagrad_step(values: np.ndarray, grad, state: np.ndarray, lr: float, name: str = "param") -> None:
    """In-place AdaGrad update: accumulate g**2, then move each coordinate
    by -lr * g / sqrt(G + eps)."""
    g = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(f"non-finite gradient for {name}")
    state += g * g
    values -= lr * g / np.sqrt(state + ADAGRAD_EPS)


def anchor_prox_scale(lr: float, accum: np.ndarray) -> float:
    """Effective AdaGrad scale of an anchor block, used to couple the
    nuclear-norm strength to the current step size: lr / sqrt(mean G + eps).

    This coupling is deliberately isolated here so it can be revised in one
    place.
    """
    return lr / math.sqrt(float(np.mean(accum)) + ADAGRAD_EPS)


@dataclass
class TrainConfig:
    hp: Hyperparams
    threads: int = 1
    deterministic: bool = True
    shuffle_seed: int = 0
    log_path: str | None = None

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.deterministic and self.threads != 1:
            raise ValueError("deterministic mode requires threads=1")


@dataclass
class TrainReport:
    losses: list[LossBreakdown] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    dim_trace: list[dict[str, int]] = field(default_factory=list)
    prox_calls: int = 0

    @property
    def epochs(self):
        return len(self.losses)


@dataclass
class TrainData:
    """Everything ingestion hands the trainer."""

    n_entities: int
    n_words: int
    word_word: CooccurrenceTable | None
    entity_word: CooccurrenceTable | None
    type_system: TypeSystem
    triples: TripleStore

    @classmethod
    def from_ingest(
        cls,
        vocab: Vocabulary,
        catalog: EntityCatalog,
        word_word: CooccurrenceTable | None,
        entity_word: CooccurrenceTable | None,
        type_system: TypeSystem,
        triples: TripleStore,
    ) -> "TrainData":
        return cls(len(catalog), len(vocab), word_word, entity_word, type_system, triples)


class _AdaState:
    """Accumulated squared gradients, parallel to every trainable array."""

    def __init__(self, params: ModelParams):
        m = params.model
        self.entity = np.zeros_like(m.entity_points)
        self.word = np.zeros_like(m.word_vecs)
        self.ctx = np.zeros_like(m.ctx_vecs)
        self.word_bias = np.zeros_like(m.word_bias)
        self.ctx_bias = np.zeros_like(m.ctx_bias)
        self.entity_bias = np.zeros_like(m.entity_bias)
        self.rel = np.zeros_like(params.rels.vectors)
        self.anchors = {t: np.zeros_like(tp.anchors) for t, tp in params.types.items()}
        self.coeffs = {t: np.zeros_like(tp.coeffs) for t, tp in params.types.items()}
        self.q = {
            ("rhs", key): np.zeros_like(g.anchors) for key, g in params.rels.rhs_groups.items()
        } | {("lhs", key): np.zeros_like(g.anchors) for key, g in params.rels.lhs_groups.items()}
        self.mu = {
            ("rhs", key): np.zeros_like(g.coeffs) for key, g in params.rels.rhs_groups.items()
        } | {("lhs", key): np.zeros_like(g.coeffs) for key, g in params.rels.lhs_groups.items()}


def _text_pass(entries, order, params, state, hp, alpha):
    """Per-entry AdaGrad updates over precomputed text entries.

    entries is (tags, rows, cols, fvals, logs); tag 0 = word-word,
    1 = entity-word.
    """
    tags, rows, cols, fvals, logs = entries
    m = params.model
    lr = hp.learn_rate
    for idx in order:
        i = rows[idx]
        j = cols[idx]
        f = fvals[idx]
        if tags[idx] == 0:
            resid = float(m.word_vecs[i] @ m.ctx_vecs[j]) + m.word_bias[i] + m.ctx_bias[j] - logs[idx]
            coef = alpha * 2.0 * f * resid
            gi = coef * m.ctx_vecs[j]
            gj = coef * m.word_vecs[i]
            adagrad_step(m.word_vecs[i], gi, state.word[i], lr, name=f"word[{i}]")
            adagrad_step(m.ctx_vecs[j], gj, state.ctx[j], lr, name=f"ctx[{j}]")
            adagrad_step(m.word_bias[i : i + 1], [coef], state.word_bias[i : i + 1], lr, name=f"word_bias[{i}]")
            adagrad_step(m.ctx_bias[j : j + 1], [coef], state.ctx_bias[j : j + 1], lr, name=f"ctx_bias[{j}]")
        else:
            resid = float(m.entity_points[i] @ m.word_vecs[j]) + m.entity_bias[i] + m.word_bias[j] - logs[idx]
            coef = alpha * 2.0 * f * resid
            ge = coef * m.word_vecs[j]
            gj = coef * m.entity_points[i]
            adagrad_step(m.entity_points[i], ge, state.entity[i], lr, name=f"entity[{i}]")
            adagrad_step(m.word_vecs[j], gj, state.word[j], lr, name=f"word[{j}]")
            adagrad_step(m.entity_bias[i : i + 1], [coef], state.entity_bias[i : i + 1], lr, name=f"entity_bias[{i}]")
            adagrad_step(m.word_bias[j : j + 1], [coef], state.word_bias[j : j + 1], lr, name=f"word_bias[{j}]")


def _prepare_text_entries(data: TrainData, hp: Hyperparams):
    tags, rows, cols, fvals, logs = [], [], [], [], []
    for tag, table in ((0, data.word_word), (1, data.entity_word)):
        if table is None or len(table) == 0:
            continue
        tags.append(np.full(len(table), tag, dtype=np.int8))
        rows.append(table.rows)
        cols.append(table.cols)
        fvals.append(np.array([weight_f(x, hp.x_max, hp.weight_exp) for x in table.weights]))
        logs.append(np.log(table.weights))
    if not tags:
        return None
    return (
        np.concatenate(tags),
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(fvals),
        np.concatenate(logs),
    )


def _type_pass(params, state, hp, flags, report):
    """Projected-gradient updates of lambda rows, a gradient step on the
    anchors, then singular-value thresholding of the anchor span matrix
    (anchor 0 held as base point)."""
    m = params.model
    lr = hp.learn_rate
    scale = 1.0 - hp.alpha_mix
    for type_id in sorted(params.types.per_type):
        tp = params.types[type_id]
        if len(tp.members) == 0:
            continue
        acc_coeffs = state.coeffs[type_id]
        for row, e in enumerate(tp.members):
            resid = m.entity_points[e] - tp.coeffs[row] @ tp.anchors
            g = scale * (-2.0) * (tp.anchors @ resid)
            adagrad_step(tp.coeffs[row], g, acc_coeffs[row], lr, name=f"lambda[{type_id}][{row}]")
            tp.coeffs[row] = project_to_simplex(tp.coeffs[row])
        _, grads = type_term_gradients(m, type_id, tp)
        anchor_grad = grads[("anchors", type_id)]
        if flags.comb:
            _, comb_grads = comb_penalty_gradients(type_id, tp)
            anchor_grad = anchor_grad + comb_grads[("anchors", type_id)]
        adagrad_step(tp.anchors, scale * anchor_grad, state.anchors[type_id], lr, name=f"anchors[{type_id}]")
        if flags.reg1 and hp.beta_reg > 0.0:
            tau = hp.beta_reg * anchor_prox_scale(lr, state.anchors[type_id])
            span = prox_nuclear(anchor_span_matrix(tp.anchors), tau)
            set_anchor_span_matrix(tp.anchors, span)
            report.prox_calls += 1


def _rel_dist_pass(params, state, data, hp, rng):
    """Per-triple AdaGrad updates of both entity points and the relation
    vector; the factor 2 reflects each triple's membership in the two
    grouped sums."""
    m = params.model
    lr = hp.learn_rate
    scale = 1.0 - hp.alpha_mix
    triples = data.triples.triples
    for idx in rng.permutation(len(triples)):
        e, k, f = triples[idx]
        r = m.entity_points[f] - m.entity_points[e] - params.rels.vectors[k]
        if e != f:
            adagrad_step(m.entity_points[f], scale * 4.0 * r, state.entity[f], lr, name=f"entity[{f}]")
            adagrad_step(m.entity_points[e], scale * (-4.0) * r, state.entity[e], lr, name=f"entity[{e}]")
        adagrad_step(params.rels.vectors[k], scale * (-4.0) * r, state.rel[k], lr, name=f"rel[{k}]")


def _rel_dim_pass(params, state, hp, flags, report):
    """Symmetric to the type pass, over relation groups: projected mu
    updates, member-point and relation-vector updates, an anchor step, and
    thresholding of the group span matrix when regularization is active."""
    m = params.model
    lr = hp.learn_rate
    scale = 1.0 - hp.alpha_mix
    for side, groups in (("rhs", params.rels.rhs_groups), ("lhs", params.rels.lhs_groups)):
        for key in sorted(groups):
            gp = groups[key]
            acc_mu = state.mu[(side, key)]
            pts = _group_points(gp, m, params.rels, key, side)
            for row in range(gp.coeffs.shape[0]):
                resid = pts[row] - gp.coeffs[row] @ gp.anchors
                g = scale * (-2.0) * (gp.anchors @ resid)
                adagrad_step(gp.coeffs[row], g, acc_mu[row], lr, name=f"mu[{side}{key}][{row}]")
                gp.coeffs[row] = project_to_simplex(gp.coeffs[row])
            _, grads = rel_group_gradients(m, params.rels, side, key, gp)
            adagrad_step(gp.anchors, scale * grads[("q", side, key)], state.q[(side, key)], lr, name=f"q[{side}{key}]")
            for addr, g in grads.items():
                if addr[0] == "entity":
                    e = addr[1]
                    adagrad_step(m.entity_points[e], scale * g, state.entity[e], lr, name=f"entity[{e}]")
                elif addr[0] == "rel":
                    k = addr[1]
                    adagrad_step(params.rels.vectors[k], scale * g, state.rel[k], lr, name=f"rel[{k}]")
            if flags.reg2 and hp.beta_reg > 0.0:
                tau = hp.beta_reg * anchor_prox_scale(lr, state.q[(side, key)])
                span = prox_nuclear(anchor_span_matrix(gp.anchors), tau)
                set_anchor_span_matrix(gp.anchors, span)
                report.prox_calls += 1


def train(
    data: TrainData, cfg: TrainConfig, params: ModelParams | None = None
) -> tuple[ModelParams, TrainReport]:
    """Run cfg.hp.epochs epochs of stochastic proximal optimization.

    With deterministic=True the result is a pure function of the inputs and
    seeds.  threads > 1 shards the text pass over lock-free workers; races
    on shared word vectors are accepted and results are not reproducible.
    """
    hp = cfg.hp
    flags = variant_flags(hp.variant)
    if params is None:
        params = init_parameters(data.n_entities, data.n_words, data.type_system, data.triples, hp)
    state = _AdaState(params)
    rng = np.random.default_rng(cfg.shuffle_seed)
    report = TrainReport()
    entries = _prepare_text_entries(data, hp)
    alpha = hp.alpha_mix

    log_fh = open(cfg.log_path, "w", encoding="utf-8") if cfg.log_path else None
    last_good: ModelParams | None = None
    try:
        for epoch in range(hp.epochs):
            t0 = time.perf_counter()
            try:
                if entries is not None and alpha > 0.0:
                    order = rng.permutation(len(entries[0]))
                    if cfg.threads == 1:
                        _text_pass(entries, order, params, state, hp, alpha)
                    else:
                        shards = np.array_split(order, cfg.threads)
                        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                            list(
                                pool.map(
                                    lambda shard: _text_pass(entries, shard, params, state, hp, alpha),
                                    shards,
                                )
                            )
                if flags.type_active:
                    _type_pass(params, state, hp, flags, report)
                if flags.rel_dist_active and len(data.triples) > 0:
                    _rel_dist_pass(params, state, data, hp, rng)
                if flags.rel_dim_active:
                    _rel_dim_pass(params, state, hp, flags, report)
            except NonFiniteGradientError as exc:
                raise TrainingDivergedError(
                    f"diverged at epoch {epoch + 1}: {exc}", last_good, epoch
                ) from exc

            breakdown = total_objective(data.word_word, data.entity_word, data.triples, params, hp)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            if not math.isfinite(breakdown.total):
                raise TrainingDivergedError(
                    f"total loss became non-finite at epoch {epoch + 1}", last_good, epoch
                )
            dims = {
                t: effective_rank(anchor_span_matrix(tp.anchors), hp.rank_eps)
                for t, tp in params.types.items()
            }
            report.losses.append(breakdown)
            report.wall_ms.append(wall_ms)
            report.dim_trace.append(dims)
            if log_fh is not None:
                record = {"epoch": epoch + 1, **breakdown.as_dict(), "wall_ms": wall_ms, "dims": dims}
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            last_good = clone_params(params)
    finally:
        if log_fh is not None:
            log_fh.close()
    return params, report


def tune(objective, base_hp: Hyperparams, alphas=None, betas=None) -> Hyperparams:
    """Grid search over the mixing weight and regularization strength,
    maximizing the validation callback; ties prefer smaller beta, then
    smaller alpha."""
    if alphas is None:
        alphas = [round(0.1 * i, 1) for i in range(11)]
    if betas is None:
        betas = [50.0 * i for i in range(1, 9)]
    alphas = sorted(alphas)
    betas = sorted(betas)
    if not alphas or not betas:
        raise ValueError("empty tuning grid")
    best_hp = None
    best_score = -math.inf
    for beta in betas:
        for alpha in alphas:
            hp = replace(base_hp, alpha_mix=alpha, beta_reg=beta)
            score = float(objective(hp))
            if score > best_score:
                best_hp = hp
                best_score = score
    return best_hp
