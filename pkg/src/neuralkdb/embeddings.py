"""Embedding-parameterized conditional probabilities and their maximum-likelihood trainer.

Each feature value carries two vectors: a parent-role vector ``v_x`` used when its
feature conditions another one, and a child-role vector ``v'_x`` used when its
feature is predicted. Each label value carries one vector ``v_y``. For a child
feature ``i`` with parent values ``x_s`` and label ``y``::

    phi = sum(v_x for x in x_s) + v_y
    P(X_i = a | x_s, y) = softmax_a(<phi, v'_a>)   over a in A_i

All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DataError
from .structure import DependenceStructure
from .tabular import Dataset


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 0.01
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.dim < 1 or self.batch_size < 1:
            raise ValueError("dim and batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls(**d)


class EmbeddingStore:
    """Parent-role, child-role, and label embeddings.

    Feature value vectors are stacked into flat ``(sum |A_i|, dim)`` arrays;
    feature ``i`` owns rows ``offsets[i] : offsets[i] + sizes[i]``.
    """

    def __init__(self, alphabet_sizes: Sequence[int], num_labels: int, dim: int,
                 parent: np.ndarray | None = None, child: np.ndarray | None = None,
                 label: np.ndarray | None = None):
        self.sizes = np.asarray(alphabet_sizes, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64) \
            if len(self.sizes) else np.zeros(0, dtype=np.int64)
        self.num_labels = int(num_labels)
        self.dim = int(dim)
        total = int(self.sizes.sum())
        self.parent = np.zeros((total, dim)) if parent is None else np.asarray(parent, dtype=np.float64)
        self.child = np.zeros((total, dim)) if child is None else np.asarray(child, dtype=np.float64)
        self.label = np.zeros((num_labels, dim)) if label is None else np.asarray(label, dtype=np.float64)
        for name, arr, rows in (("parent", self.parent, total), ("child", self.child, total),
                                ("label", self.label, num_labels)):
            if arr.shape != (rows, dim):
                raise ValueError(f"{name} embeddings have shape {arr.shape}, expected {(rows, dim)}")

    @classmethod
    def random(cls, alphabet_sizes, num_labels, dim, rng: np.random.Generator, scale: float):
        total = int(np.sum(alphabet_sizes))
        parent = rng.uniform(-scale, scale, size=(total, dim))
        child = rng.uniform(-scale, scale, size=(total, dim))
        label = rng.uniform(-scale, scale, size=(num_labels, dim))
        return cls(alphabet_sizes, num_labels, dim, parent, child, label)

    @property
    def m(self) -> int:
        return len(self.sizes)

    def parent_vector(self, i: int, r: int) -> np.ndarray:
        return self.parent[self.offsets[i] + r]

    def child_vector(self, i: int, r: int) -> np.ndarray:
        return self.child[self.offsets[i] + r]

    def child_matrix(self, i: int) -> np.ndarray:
        """``W'_i``: row ``r`` is the child-role vector of value ``r``."""
        o = self.offsets[i]
        return self.child[o:o + self.sizes[i]]

    def label_vector(self, y: int) -> np.ndarray:
        return self.label[y]

    def copy(self) -> EmbeddingStore:
        return EmbeddingStore(self.sizes, self.num_labels, self.dim,
                              self.parent.copy(), self.child.copy(), self.label.copy())

    def identical(self, other: EmbeddingStore) -> bool:
        return (np.array_equal(self.sizes, other.sizes) and self.num_labels == other.num_labels
                and np.array_equal(self.parent, other.parent)
                and np.array_equal(self.child, other.child)
                and np.array_equal(self.label, other.label))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "parent": [self.parent[o:o + s].tolist() for o, s in zip(self.offsets, self.sizes)],
            "child": [self.child[o:o + s].tolist() for o, s in zip(self.offsets, self.sizes)],
            "label": self.label.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, alphabet_sizes, num_labels) -> EmbeddingStore:
        dim = int(d["dim"])

        def stack(blocks):
            rows = [np.asarray(b, dtype=np.float64).reshape(-1, dim) for b in blocks]
            return np.concatenate(rows) if rows else np.zeros((0, dim))

        return cls(alphabet_sizes, num_labels, dim, stack(d["parent"]), stack(d["child"]),
                   np.asarray(d["label"], dtype=np.float64).reshape(num_labels, dim))


class Instantiation(NamedTuple):
    """One ``(x_i, x_s, y)`` value instantiation for child feature ``child``."""

    child: int
    value: int
    parents: tuple[tuple[int, int], ...]
    label: int


def aggregate_context(store: EmbeddingStore, parents: Sequence[tuple[int, int]], y: int) -> np.ndarray:
    """Elementwise sum of the parent-role vectors and the label vector.

    A parent value index below zero (unseen at training time) contributes nothing.
    """
    phi = store.label_vector(y).copy()
    for j, r in parents:
        if r >= 0:
            phi += store.parent_vector(j, r)
    return phi


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max())
    return z / z.sum()


def conditional_distribution(store: EmbeddingStore, i: int, parents: Sequence[tuple[int, int]],
                             y: int) -> np.ndarray:
    """Distribution of child feature ``i`` over its alphabet given parents and label."""
    phi = aggregate_context(store, parents, y)
    return _softmax(store.child_matrix(i) @ phi)


# -- packed batches --------------------------------------------------------------

@dataclass
class Packed:
    """Array form of a list of instantiations.

    ``parent_ids`` holds global embedding rows, padded with ``-1``; ``value`` is
    ``-1`` for a child value unseen at training time.
    """

    child: np.ndarray
    value: np.ndarray
    parent_ids: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return len(self.child)

    def take(self, idx) -> Packed:
        return Packed(self.child[idx], self.value[idx], self.parent_ids[idx], self.label[idx])


def pack(store: EmbeddingStore, batch: Sequence[Instantiation]) -> Packed:
    kmax = max((len(t.parents) for t in batch), default=0)
    pids = np.full((len(batch), kmax), -1, dtype=np.int64)
    for b, t in enumerate(batch):
        for s, (j, r) in enumerate(t.parents):
            if r >= 0:
                pids[b, s] = store.offsets[j] + r
    return Packed(
        np.array([t.child for t in batch], dtype=np.int64),
        np.array([t.value for t in batch], dtype=np.int64),
        pids,
        np.array([t.label for t in batch], dtype=np.int64),
    )


def pack_rows(store: EmbeddingStore, structure: DependenceStructure, X: np.ndarray,
              y: np.ndarray) -> Packed:
    """Instantiations for every (row, feature) pair, row-major, without building tuples.

    ``X`` entries of ``-1`` mark unseen values.
    """
    X = np.asarray(X, dtype=np.int64)
    n, m = X.shape
    kmax = max((len(p) for p in structure.parents), default=0)
    pids = np.full((n, m, kmax), -1, dtype=np.int64)
    for i, ps in enumerate(structure.parents):
        for s, p in enumerate(ps):
            v = X[:, p]
            pids[:, i, s] = np.where(v >= 0, store.offsets[p] + v, -1)
    return Packed(np.tile(np.arange(m, dtype=np.int64), n), X.reshape(-1),
                  pids.reshape(n * m, kmax), np.repeat(np.asarray(y, dtype=np.int64), m))


def _contexts(store: EmbeddingStore, packed: Packed) -> np.ndarray:
    phi = store.label[packed.label].copy()
    if packed.parent_ids.shape[1]:
        valid = packed.parent_ids >= 0
        rows = store.parent[np.where(valid, packed.parent_ids, 0)]
        phi += np.sum(rows * valid[..., None], axis=1)
    return phi


def _candidates(store: EmbeddingStore, packed: Packed):
    sizes = store.sizes[packed.child]
    width = int(sizes.max()) if len(sizes) else 0
    slots = np.arange(width)
    mask = slots[None, :] < sizes[:, None]
    ids = np.where(mask, store.offsets[packed.child][:, None] + slots[None, :], 0)
    return ids, mask


def _forward(store: EmbeddingStore, packed: Packed):
    phi = _contexts(store, packed)
    ids, mask = _candidates(store, packed)
    W = store.child[ids]
    logits = np.einsum("bcd,bd->bc", W, phi)
    logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_p = np.where(mask, shifted - log_z, -np.inf)
    return phi, ids, mask, W, log_p


def log_probabilities(store: EmbeddingStore, packed: Packed) -> np.ndarray:
    """``ln P(x_i | x_s, y)`` per instantiation; an unseen child value scores ``-ln |A_i|``."""
    if len(packed) == 0:
        return np.zeros(0)
    _, _, _, _, log_p = _forward(store, packed)
    known = packed.value >= 0
    picked = log_p[np.arange(len(packed)), np.where(known, packed.value, 0)]
    return np.where(known, picked, -np.log(store.sizes[packed.child]))


@dataclass
class DenseGradients:
    parent: np.ndarray
    child: np.ndarray
    label: np.ndarray
    touched_parent: np.ndarray
    touched_child: np.ndarray
    touched_label: np.ndarray


def _loss_and_dense_gradients(store: EmbeddingStore, packed: Packed) -> tuple[float, DenseGradients]:
    if np.any(packed.value < 0):
        raise DataError("training instantiations must have known child values")
    b = len(packed)
    phi, ids, mask, W, log_p = _forward(store, packed)
    rows = np.arange(b)
    loss = -float(np.sum(log_p[rows, packed.value]))

    delta = np.where(mask, np.exp(log_p), 0.0)
    delta[rows, packed.value] -= 1.0
    # d loss / d v'_{a_r} = (p_r - e_r) * phi ; d loss / d phi = sum_r (p_r - e_r) v'_{a_r}
    g_phi = np.einsum("bc,bcd->bd", delta, W)

    g_child = np.zeros_like(store.child)
    np.add.at(g_child, ids[mask], (delta[:, :, None] * phi[:, None, :])[mask])
    g_parent = np.zeros_like(store.parent)
    pids = packed.parent_ids
    valid = pids >= 0
    if pids.shape[1]:
        np.add.at(g_parent, pids[valid], np.broadcast_to(g_phi[:, None, :], pids.shape + (store.dim,))[valid])
    g_label = np.zeros_like(store.label)
    np.add.at(g_label, packed.label, g_phi)
    grads = DenseGradients(g_parent, g_child, g_label,
                           np.unique(pids[valid]), np.unique(ids[mask]), np.unique(packed.label))
    return loss, grads


def nll_and_gradient(store: EmbeddingStore, batch: Sequence[Instantiation]):
    """Summed negative log-likelihood of ``batch`` and its exact gradient.

    Gradients are a sparse map keyed by ``("parent", feature, value)``,
    ``("child", feature, value)`` or ``("label", y)``; only parameters the batch
    touches appear.
    """
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    loss, g = _loss_and_dense_gradients(store, pack(store, batch))
    feature_of = np.repeat(np.arange(store.m), store.sizes)
    out: dict[tuple, np.ndarray] = {}
    for gid in g.touched_parent.tolist():
        f = int(feature_of[gid])
        out[("parent", f, gid - int(store.offsets[f]))] = g.parent[gid]
    for gid in g.touched_child.tolist():
        f = int(feature_of[gid])
        out[("child", f, gid - int(store.offsets[f]))] = g.child[gid]
    for c in g.touched_label.tolist():
        out[("label", c)] = g.label[c]
    return loss, out


# -- training --------------------------------------------------------------------

def collect_instantiations(dataset: Dataset, structure: DependenceStructure) -> list[Instantiation]:
    """One instantiation per (row, feature) pair, duplicates kept.

    Features are visited in index order, independent of the visitation order
    stored in ``structure``.
    """
    if structure.m != dataset.m:
        raise DataError(f"structure covers {structure.m} features, dataset has {dataset.m}")
    out = []
    for x, c in zip(dataset.X.tolist(), dataset.y.tolist()):
        for i, ps in enumerate(structure.parents):
            out.append(Instantiation(i, x[i], tuple((p, x[p]) for p in ps), c))
    return out


def train(dataset: Dataset, structure: DependenceStructure, config: TrainConfig,
          on_epoch: Callable[[int, float], None] | None = None) -> EmbeddingStore:
    """Mini-batch gradient descent on the summed negative log-likelihood.

    One generator seeded with ``config.seed`` draws the initial embeddings and
    then every epoch's shuffle. ``on_epoch(epoch, mean_nll)`` receives the mean
    per-instantiation loss accumulated over the epoch's batches.
    """
    rng = np.random.default_rng(config.seed)
    store = EmbeddingStore.random(dataset.alphabet_sizes, dataset.num_labels, config.dim,
                                  rng, config.init_scale)
    packed = pack(store, collect_instantiations(dataset, structure))
    n = len(packed)
    if n == 0:
        return store
    lr = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            loss, g = _loss_and_dense_gradients(store, packed.take(perm[start:start + config.batch_size]))
            store.parent -= lr * g.parent
            store.child -= lr * g.child
            store.label -= lr * g.label
            total += loss
        if on_epoch is not None:
            on_epoch(epoch, total / n)
    return store
