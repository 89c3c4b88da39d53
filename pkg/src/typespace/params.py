"""Trainable parameters, hyperparameters, and the model file format.

The model file is a little-endian binary layout: magic, format version, the
hyperparameters, id tables for entities/words/relations, every parameter
array as raw float64, and a trailing CRC32 of everything before it.  The
format round-trips losslessly; a text export is available for interop.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from typespace.ingest import TripleStore, TypeSystem

MAGIC = b"TYSPACE1"
FORMAT_VERSION = 1

VARIANTS = (
    "full",
    "no_rel",
    "no_type",
    "no_nn",
    "text",
    "rel_dim",
    "rel_dist",
    "type_comb",
    "type_dist",
)


class ModelFormatError(ValueError):
    """Wrong magic string or incompatible format version."""


class ModelIntegrityError(ValueError):
    """Truncated or corrupted model file (checksum mismatch)."""


@dataclass(frozen=True)
class Hyperparams:
    n: int = 50
    alpha_mix: float = 0.5
    beta_reg: float = 300.0
    x_max: float = 100.0
    weight_exp: float = 0.75
    epochs: int = 20
    learn_rate: float = 0.05
    variant: str = "full"
    rank_eps: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("embedding dimension must be >= 1")
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ValueError("alpha_mix must lie in [0, 1]")
        if self.beta_reg < 0.0:
            raise ValueError("beta_reg must be non-negative")
        if self.x_max <= 0.0:
            raise ValueError("x_max must be positive")
        if not 0.0 < self.weight_exp <= 1.0:
            raise ValueError("weight_exp must lie in (0, 1]")
        if self.learn_rate <= 0.0:
            raise ValueError("learn_rate must be positive")
        if self.rank_eps <= 0.0:
            raise ValueError("rank_eps must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass
class EmbeddingModel:
    """Entity points, word/context vectors and all biases."""

    entity_points: np.ndarray  # (E, n)
    word_vecs: np.ndarray      # (V, n)
    ctx_vecs: np.ndarray       # (V, n)
    word_bias: np.ndarray      # (V,)
    ctx_bias: np.ndarray       # (V,)
    entity_bias: np.ndarray    # (E,)

    @property
    def n_entities(self):
        return self.entity_points.shape[0]

    @property
    def n_words(self):
        return self.word_vecs.shape[0]

    @property
    def dim(self):
        return self.entity_points.shape[1]


@dataclass
class TypeParams:
    """Per-type subspace parameters: n+1 anchor points and one simplex
    coefficient row per member entity."""

    anchors: np.ndarray  # (n+1, n)
    members: np.ndarray  # (m,) entity indices, ascending
    coeffs: np.ndarray   # (m, n+1) rows on the probability simplex


@dataclass
class TypeSubspaceParams:
    per_type: dict[str, TypeParams] = field(default_factory=dict)

    def __getitem__(self, type_id: str) -> TypeParams:
        return self.per_type[type_id]

    def __contains__(self, type_id: str) -> bool:
        return type_id in self.per_type

    def __iter__(self):
        return iter(self.per_type)

    def items(self):
        return self.per_type.items()


@dataclass
class GroupParams:
    """Subspace parameters for one relation group.

    Member points of a tail group (e, k) are the embeddings of the tails
    plus the translated head; of a head group (k, f), the heads plus the
    translated tail.  `coeffs` has one simplex row per real member and a
    final row for the translated virtual member.
    """

    anchors: np.ndarray  # (n+1, n)
    members: np.ndarray  # (m,) entity indices, ascending
    coeffs: np.ndarray   # (m+1, n+1)


@dataclass
class RelationParams:
    vectors: np.ndarray  # (R, n) translation vector per relation
    rhs_groups: dict[tuple[int, int], GroupParams] = field(default_factory=dict)  # (head, rel)
    lhs_groups: dict[tuple[int, int], GroupParams] = field(default_factory=dict)  # (rel, tail)

    @property
    def n_relations(self):
        return self.vectors.shape[0]


@dataclass
class ModelParams:
    """Everything the optimizer trains, as one bundle."""

    model: EmbeddingModel
    types: TypeSubspaceParams
    rels: RelationParams


def anchor_span_matrix(anchors: np.ndarray) -> np.ndarray:
    """The n x n matrix whose i-th row is anchor i minus anchor 0; its rank
    is the dimension of the anchors' affine span."""
    return anchors[1:] - anchors[0]


def set_anchor_span_matrix(anchors: np.ndarray, span: np.ndarray) -> None:
    """Rewrite anchors 1..n from a span matrix, keeping anchor 0 as base."""
    anchors[1:] = anchors[0] + span


def init_parameters(
    n_entities: int,
    n_words: int,
    type_system: TypeSystem,
    triples: TripleStore,
    hp: Hyperparams,
) -> ModelParams:
    """Deterministic initialization given hp.seed.

    Vectors are uniform in [-0.5/n, 0.5/n] per coordinate, biases zero.
    Type and group anchors start at the centroid of their member points
    plus uniform noise of scale 0.1/n, and every simplex coefficient row
    starts uniform at 1/(n+1).
    """
    if n_entities < 1:
        raise ValueError("cannot initialize a model with zero entities")
    if n_words < 1:
        raise ValueError("cannot initialize a model with zero words")
    n = hp.n
    rng = np.random.default_rng(hp.seed)
    scale = 0.5 / n

    def uniform(shape):
        return rng.uniform(-scale, scale, size=shape)

    model = EmbeddingModel(
        entity_points=uniform((n_entities, n)),
        word_vecs=uniform((n_words, n)),
        ctx_vecs=uniform((n_words, n)),
        word_bias=np.zeros(n_words),
        ctx_bias=np.zeros(n_words),
        entity_bias=np.zeros(n_entities),
    )

    noise = 0.1 / n
    types = TypeSubspaceParams()
    for type_id in type_system.type_ids:
        members = np.array(type_system.instances[type_id], dtype=np.int64)
        centroid = model.entity_points[members].mean(axis=0)
        anchors = centroid[None, :] + rng.uniform(-noise, noise, size=(n + 1, n))
        coeffs = np.full((len(members), n + 1), 1.0 / (n + 1))
        types.per_type[type_id] = TypeParams(anchors=anchors, members=members, coeffs=coeffs)

    vectors = uniform((len(triples.relation_ids), n))
    rels = RelationParams(vectors=vectors)
    for (e, k), tails in triples.rhs.items():
        members = np.array(tails, dtype=np.int64)
        points = np.vstack([model.entity_points[members], model.entity_points[e] + vectors[k]])
        anchors = points.mean(axis=0)[None, :] + rng.uniform(-noise, noise, size=(n + 1, n))
        coeffs = np.full((len(members) + 1, n + 1), 1.0 / (n + 1))
        rels.rhs_groups[(e, k)] = GroupParams(anchors=anchors, members=members, coeffs=coeffs)
    for (k, f), heads in triples.lhs.items():
        members = np.array(heads, dtype=np.int64)
        points = np.vstack([model.entity_points[members], model.entity_points[f] - vectors[k]])
        anchors = points.mean(axis=0)[None, :] + rng.uniform(-noise, noise, size=(n + 1, n))
        coeffs = np.full((len(members) + 1, n + 1), 1.0 / (n + 1))
        rels.lhs_groups[(k, f)] = GroupParams(anchors=anchors, members=members, coeffs=coeffs)

    return ModelParams(model=model, types=types, rels=rels)


@dataclass
class LoadedModel:
    model: EmbeddingModel
    types: TypeSubspaceParams
    rels: RelationParams
    hp: Hyperparams
    entity_ids: tuple[str, ...]
    word_ids: tuple[str, ...]
    relation_ids: tuple[str, ...]

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.model, self.types, self.rels)


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def raw(self, b: bytes):
        self.chunks.append(b)

    def u64(self, v: int):
        self.raw(struct.pack("<Q", v))

    def i64(self, v: int):
        self.raw(struct.pack("<q", v))

    def f64(self, v: float):
        self.raw(struct.pack("<d", v))

    def string(self, s: str):
        b = s.encode("utf-8")
        self.u64(len(b))
        self.raw(b)

    def strings(self, items):
        self.u64(len(items))
        for s in items:
            self.string(s)

    def array(self, a: np.ndarray):
        a = np.ascontiguousarray(a, dtype=np.float64)
        self.u64(a.ndim)
        for d in a.shape:
            self.u64(d)
        self.raw(a.astype("<f8").tobytes())

    def index_array(self, a: np.ndarray):
        a = np.ascontiguousarray(a, dtype=np.int64)
        self.u64(a.shape[0])
        self.raw(a.astype("<i8").tobytes())

    def payload(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise ModelIntegrityError("model file ends prematurely")
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def u64(self) -> int:
        return struct.unpack("<Q", self.raw(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.raw(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.raw(8))[0]

    def string(self) -> str:
        return self.raw(self.u64()).decode("utf-8")

    def strings(self) -> tuple[str, ...]:
        return tuple(self.string() for _ in range(self.u64()))

    def array(self) -> np.ndarray:
        ndim = self.u64()
        shape = tuple(self.u64() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.raw(count * 8), dtype="<f8")
        return data.reshape(shape).copy()

    def index_array(self) -> np.ndarray:
        count = self.u64()
        return np.frombuffer(self.raw(count * 8), dtype="<i8").astype(np.int64)


def _write_hyperparams(w: _Writer, hp: Hyperparams):
    w.i64(hp.n)
    w.f64(hp.alpha_mix)
    w.f64(hp.beta_reg)
    w.f64(hp.x_max)
    w.f64(hp.weight_exp)
    w.i64(hp.epochs)
    w.f64(hp.learn_rate)
    w.string(hp.variant)
    w.f64(hp.rank_eps)
    w.i64(hp.seed)


def _read_hyperparams(r: _Reader) -> Hyperparams:
    return Hyperparams(
        n=r.i64(),
        alpha_mix=r.f64(),
        beta_reg=r.f64(),
        x_max=r.f64(),
        weight_exp=r.f64(),
        epochs=r.i64(),
        learn_rate=r.f64(),
        variant=r.string(),
        rank_eps=r.f64(),
        seed=r.i64(),
    )


def save_model(
    path,
    model: EmbeddingModel,
    types: TypeSubspaceParams,
    rels: RelationParams,
    hp: Hyperparams,
    entity_ids,
    word_ids,
    relation_ids,
) -> None:
    """Write the versioned binary model file (lossless round-trip)."""
    w = _Writer()
    w.raw(MAGIC)
    w.u64(FORMAT_VERSION)
    _write_hyperparams(w, hp)
    w.strings(tuple(entity_ids))
    w.strings(tuple(word_ids))
    w.strings(tuple(relation_ids))

    w.array(model.entity_points)
    w.array(model.word_vecs)
    w.array(model.ctx_vecs)
    w.array(model.word_bias)
    w.array(model.ctx_bias)
    w.array(model.entity_bias)

    w.u64(len(types.per_type))
    for type_id in sorted(types.per_type):
        tp = types.per_type[type_id]
        w.string(type_id)
        w.array(tp.anchors)
        w.index_array(tp.members)
        w.array(tp.coeffs)

    w.array(rels.vectors)
    for groups in (rels.rhs_groups, rels.lhs_groups):
        w.u64(len(groups))
        for key in sorted(groups):
            gp = groups[key]
            w.i64(key[0])
            w.i64(key[1])
            w.array(gp.anchors)
            w.index_array(gp.members)
            w.array(gp.coeffs)

    payload = w.payload()
    checksum = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(checksum)


def load_model(path) -> LoadedModel:
    """Read a model file written by save_model, verifying the checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4:
        raise ModelIntegrityError("model file too short")
    payload, checksum = blob[:-4], blob[-4:]
    if not payload.startswith(MAGIC):
        raise ModelFormatError("not a typespace model file (bad magic)")
    if struct.unpack("<I", checksum)[0] != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise ModelIntegrityError("model file checksum mismatch (truncated or corrupted)")

    r = _Reader(payload)
    r.raw(len(MAGIC))
    version = r.u64()
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version} not supported (expected {FORMAT_VERSION})")
    hp = _read_hyperparams(r)
    entity_ids = r.strings()
    word_ids = r.strings()
    relation_ids = r.strings()

    model = EmbeddingModel(
        entity_points=r.array(),
        word_vecs=r.array(),
        ctx_vecs=r.array(),
        word_bias=r.array(),
        ctx_bias=r.array(),
        entity_bias=r.array(),
    )

    types = TypeSubspaceParams()
    for _ in range(r.u64()):
        type_id = r.string()
        types.per_type[type_id] = TypeParams(anchors=r.array(), members=r.index_array(), coeffs=r.array())

    vectors = r.array()
    rels = RelationParams(vectors=vectors)
    for groups in (rels.rhs_groups, rels.lhs_groups):
        for _ in range(r.u64()):
            key = (r.i64(), r.i64())
            groups[key] = GroupParams(anchors=r.array(), members=r.index_array(), coeffs=r.array())

    if r.pos != len(payload):
        raise ModelIntegrityError("trailing bytes after model payload")
    return LoadedModel(model, types, rels, hp, entity_ids, word_ids, relation_ids)


def export_text(path, model: EmbeddingModel, entity_ids, word_ids) -> None:
    """Lossy text export: one "id v1 ... vn" line per entity, then per word."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, eid in enumerate(entity_ids):
            coords = " ".join(repr(float(v)) for v in model.entity_points[i])
            fh.write(f"{eid} {coords}\n")
        for j, wid in enumerate(word_ids):
            coords = " ".join(repr(float(v)) for v in model.word_vecs[j])
            fh.write(f"{wid} {coords}\n")


def clone_params(params: ModelParams) -> ModelParams:
    """Deep copy of all trainable arrays (used for divergence snapshots)."""
    model = EmbeddingModel(
        entity_points=params.model.entity_points.copy(),
        word_vecs=params.model.word_vecs.copy(),
        ctx_vecs=params.model.ctx_vecs.copy(),
        word_bias=params.model.word_bias.copy(),
        ctx_bias=params.model.ctx_bias.copy(),
        entity_bias=params.model.entity_bias.copy(),
    )
    types = TypeSubspaceParams(
        {
            t: TypeParams(tp.anchors.copy(), tp.members.copy(), tp.coeffs.copy())
            for t, tp in params.types.items()
        }
    )
    rels = RelationParams(
        vectors=params.rels.vectors.copy(),
        rhs_groups={
            key: GroupParams(g.anchors.copy(), g.members.copy(), g.coeffs.copy())
            for key, g in params.rels.rhs_groups.items()
        },
        lhs_groups={
            key: GroupParams(g.anchors.copy(), g.members.copy(), g.coeffs.copy())
            for key, g in params.rels.lhs_groups.items()
        },
    )
    return ModelParams(model, types, rels)
