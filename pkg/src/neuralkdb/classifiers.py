"""The classifier family behind one fit/predict interface.

Generative kinds score ``ln P(y) + sum_i ln P(x_i | pa_i, y)`` and predict the
argmax; their conditionals come from embeddings (``neural_kdb``, ``neural_nb``)
or Laplace-smoothed frequency tables (``kdb``, ``tan``, ``nb``). ``nn`` is a
discriminative baseline: one linear map over concatenated value embeddings.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .embeddings import EmbeddingStore, TrainConfig, log_probabilities, pack_rows, train
from .errors import DataError, ModelFormatError
from .structure import (
    DependenceStructure,
    build_empty_structure,
    build_kdb_structure,
    build_tan_structure,
)
from .tabular import Dataset, Preprocessor

KINDS = ("neural_kdb", "neural_nb", "nn", "kdb", "tan", "nb")
NEURAL_KINDS = ("neural_kdb", "neural_nb")
COUNT_KINDS = ("kdb", "tan", "nb")
K_KINDS = ("neural_kdb", "kdb")

FORMAT_NAME = "neuralkdb-model"
FORMAT_VERSION = 1

_ALIASES = {"neuralkdb": "neural_kdb", "neuralnb": "neural_nb"}


def normalize_kind(kind: str) -> str:
    k = _ALIASES.get(kind.lower().replace("-", "_"), kind.lower().replace("-", "_"))
    if k not in KINDS:
        raise ValueError(f"unknown classifier {kind!r}; choose from {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class ClassPrior:
    probs: np.ndarray

    def log(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)


def estimate_prior(dataset: Dataset) -> ClassPrior:
    """Unsmoothed class proportions; classes absent from ``dataset`` get 0."""
    if dataset.n == 0:
        raise DataError("cannot estimate a class prior from an empty dataset")
    return ClassPrior(dataset.class_counts() / dataset.n)


@dataclass
class FrequencyCPT:
    """Add-one smoothed conditional tables.

    ``counts[i]`` maps a context ``(parent values..., y)`` to the count vector
    over ``A_i``; contexts never observed are absent and read as uniform.
    """

    parents: tuple[tuple[int, ...], ...]
    sizes: tuple[int, ...]
    counts: list[dict[tuple[int, ...], np.ndarray]] = field(default_factory=list)

    def distribution(self, i: int, context: tuple[int, ...]) -> np.ndarray:
        size = self.sizes[i]
        c = self.counts[i].get(context)
        if c is None:
            return np.full(size, 1.0 / size)
        return (c + 1.0) / (c.sum() + size)

    def log_prob(self, i: int, value: int, context: tuple[int, ...]) -> float:
        size = self.sizes[i]
        if value < 0:
            return -np.log(size)
        c = self.counts[i].get(context)
        if c is None:
            return -np.log(size)
        return float(np.log((c[value] + 1.0) / (c.sum() + size)))

    def to_dict(self) -> dict:
        return {"tables": [
            {",".join(map(str, ctx)): c.tolist() for ctx, c in sorted(table.items())}
            for table in self.counts
        ]}

    @classmethod
    def from_dict(cls, d: dict, structure: DependenceStructure, sizes) -> FrequencyCPT:
        counts = []
        for table in d["tables"]:
            counts.append({
                tuple(int(v) for v in key.split(",")): np.asarray(c, dtype=np.int64)
                for key, c in table.items()
            })
        return cls(structure.parents, tuple(sizes), counts)


def fit_frequency_cpt(dataset: Dataset, structure: DependenceStructure) -> FrequencyCPT:
    sizes = dataset.alphabet_sizes
    tables = []
    for i, ps in enumerate(structure.parents):
        table: dict[tuple[int, ...], np.ndarray] = defaultdict(lambda s=sizes[i]: np.zeros(s, dtype=np.int64))
        cols = dataset.X[:, list(ps)] if ps else np.zeros((dataset.n, 0), dtype=np.int64)
        for ctx, v, c in zip(cols.tolist(), dataset.X[:, i].tolist(), dataset.y.tolist()):
            table[tuple(ctx) + (c,)][v] += 1
        tables.append(dict(table))
    return FrequencyCPT(structure.parents, sizes, tables)


@dataclass
class NNHead:
    """Value embeddings, concatenated per row, then one affine map to label logits."""

    embed: EmbeddingStore  # only the ``parent`` block is used
    weight: np.ndarray     # (|Y|, m * dim)
    bias: np.ndarray       # (|Y|,)

    def features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        known = X >= 0
        ids = np.where(known, self.embed.offsets[None, :] + np.where(known, X, 0), 0)
        h = self.embed.parent[ids] * known[..., None]
        return h.reshape(X.shape[0], -1)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.features(X) @ self.weight.T + self.bias

    def to_dict(self) -> dict:
        e = self.embed
        return {
            "dim": e.dim,
            "embeddings": [e.parent[o:o + s].tolist() for o, s in zip(e.offsets, e.sizes)],
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, sizes, num_labels) -> NNHead:
        dim = int(d["dim"])
        blocks = [np.asarray(b, dtype=np.float64).reshape(-1, dim) for b in d["embeddings"]]
        embed = EmbeddingStore(sizes, num_labels, dim,
                               parent=np.concatenate(blocks) if blocks else np.zeros((0, dim)))
        return cls(embed, np.asarray(d["weight"], dtype=np.float64).reshape(num_labels, -1),
                   np.asarray(d["bias"], dtype=np.float64))


def _log_softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def train_nn_head(dataset: Dataset, config: TrainConfig) -> NNHead:
    """Cross-entropy gradient descent on the summed batch loss.

    Embeddings start uniform in ``+-init_scale``; the linear weights start
    uniform in ``+-1/sqrt(m * dim)`` so the head is not stuck near zero.
    """
    rng = np.random.default_rng(config.seed)
    embed = EmbeddingStore(dataset.alphabet_sizes, dataset.num_labels, config.dim,
                           parent=rng.uniform(-config.init_scale, config.init_scale,
                                              size=(sum(dataset.alphabet_sizes), config.dim)))
    width = dataset.m * config.dim
    bound = 1.0 / np.sqrt(width)
    head = NNHead(embed, rng.uniform(-bound, bound, size=(dataset.num_labels, width)),
                  np.zeros(dataset.num_labels))
    n, lr = dataset.n, config.learning_rate
    ids_all = embed.offsets[None, :] + dataset.X
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            ids = ids_all[idx]
            h = embed.parent[ids].reshape(len(idx), width)
            p = np.exp(_log_softmax_rows(h @ head.weight.T + head.bias))
            p[np.arange(len(idx)), dataset.y[idx]] -= 1.0
            g_w = p.T @ h
            g_b = p.sum(axis=0)
            g_h = (p @ head.weight).reshape(len(idx), dataset.m, config.dim)
            g_e = np.zeros_like(embed.parent)
            np.add.at(g_e, ids.reshape(-1), g_h.reshape(-1, config.dim))
            head.weight -= lr * g_w
            head.bias -= lr * g_b
            embed.parent -= lr * g_e
    return head


@dataclass
class TrainedModel:
    kind: str
    structure: DependenceStructure
    prior: ClassPrior
    params: EmbeddingStore | FrequencyCPT | NNHead
    feature_names: tuple[str, ...]
    feature_alphabets: tuple[tuple[str, ...], ...]
    label_name: str
    label_alphabet: tuple[str, ...]
    config: TrainConfig
    k: int = 0
    preprocessor: Preprocessor | None = None

    def __post_init__(self):
        expected = {**{k: EmbeddingStore for k in NEURAL_KINDS},
                    **{k: FrequencyCPT for k in COUNT_KINDS}, "nn": NNHead}[self.kind]
        if not isinstance(self.params, expected):
            raise TypeError(f"{self.kind} model needs {expected.__name__} parameters")
        self._dicts = [{t: r for r, t in enumerate(a)} for a in self.feature_alphabets]

    @property
    def m(self) -> int:
        return len(self.feature_names)

    @property
    def generative(self) -> bool:
        return self.kind != "nn"

    @property
    def value_dictionaries(self) -> list[dict[str, int]]:
        return self._dicts

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Feature tokens to indices; unseen tokens become ``-1``."""
        if len(tokens) != self.m:
            raise DataError(f"row has {len(tokens)} features, model expects {self.m}")
        return np.array([d.get(t, -1) for d, t in zip(self._dicts, tokens)], dtype=np.int64)


def fit(dataset: Dataset, kind: str, k: int = 2, config: TrainConfig = TrainConfig(),
        on_epoch: Callable[[int, float], None] | None = None) -> TrainedModel:
    """Build the structure and parameters for ``kind``; ``k`` is ignored by tan/nb/neural_nb/nn.

    ``on_epoch(epoch, mean_nll)`` is forwarded to the embedding trainer.
    """
    kind = normalize_kind(kind)
    if kind in K_KINDS and k < 0:
        raise ValueError("k must be non-negative")
    prior = estimate_prior(dataset)
    if kind in ("neural_kdb", "kdb"):
        structure = build_kdb_structure(dataset, k)
    elif kind == "tan":
        structure = build_tan_structure(dataset)
    else:
        structure = build_empty_structure(dataset.m)
    if kind in NEURAL_KINDS:
        params = train(dataset, structure, config, on_epoch)
    elif kind == "nn":
        params = train_nn_head(dataset, config)
    else:
        params = fit_frequency_cpt(dataset, structure)
    return TrainedModel(kind, structure, prior, params, dataset.feature_names,
                        dataset.feature_alphabets, dataset.label_name, dataset.label_alphabet,
                        config, k if kind in K_KINDS else structure.k)


def log_joint_matrix(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """``(n, |Y|)`` matrix of ``ln P(x, y)`` for encoded rows (``-1`` = unseen value)."""
    if not model.generative:
        raise ValueError("log_joint is undefined for the discriminative nn baseline")
    X = np.asarray(X, dtype=np.int64).reshape(-1, model.m)
    n, ny, m = X.shape[0], len(model.label_alphabet), model.m
    if isinstance(model.params, EmbeddingStore):
        Xr = np.repeat(X, ny, axis=0)
        yr = np.tile(np.arange(ny), n)
        lp = log_probabilities(model.params, pack_rows(model.params, model.structure, Xr, yr))
        per_feature = lp.reshape(n, ny, m)
    else:
        cpt = model.params
        per_feature = np.empty((n, ny, m))
        for r, x in enumerate(X.tolist()):
            for i, ps in enumerate(model.structure.parents):
                pa = tuple(x[p] for p in ps)
                for c in range(ny):
                    per_feature[r, c, i] = cpt.log_prob(i, x[i], pa + (c,))
    # features summed in index order so structures differing only in visitation order agree bitwise
    total = model.prior.log()[None, :].copy()
    for i in range(m):
        total = total + per_feature[:, :, i]
    return total


def log_joint(model: TrainedModel, x: Sequence[int], y: int) -> float:
    return float(log_joint_matrix(model, np.asarray(x)[None, :])[0, y])


def posterior_matrix(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64).reshape(-1, model.m)
    if model.generative:
        scores = log_joint_matrix(model, X)
    else:
        scores = model.params.logits(X)
    return np.exp(_log_softmax_rows(scores))


def predict_encoded(model: TrainedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted label indices (ties to the first label) and posteriors."""
    post = posterior_matrix(model, X)
    if model.generative:
        pred = np.argmax(log_joint_matrix(model, X), axis=1)
    else:
        pred = np.argmax(post, axis=1)
    return pred, post


def predict(model: TrainedModel, tokens: Sequence[str]) -> tuple[str, np.ndarray]:
    pred, post = predict_encoded(model, model.encode(tokens)[None, :])
    return model.label_alphabet[int(pred[0])], post[0]


def predict_tokens(model: TrainedModel, rows: Sequence[Sequence[str]]) -> tuple[list[str], np.ndarray]:
    if not rows:
        return [], np.zeros((0, len(model.label_alphabet)))
    X = np.stack([model.encode(r) for r in rows])
    pred, post = predict_encoded(model, X)
    return [model.label_alphabet[int(p)] for p in pred], post


# -- persistence -----------------------------------------------------------------

def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "k": model.k,
        "dictionaries": {
            "features": [{"name": n, "values": list(a)}
                         for n, a in zip(model.feature_names, model.feature_alphabets)],
            "label": {"name": model.label_name, "values": list(model.label_alphabet)},
        },
        "structure": model.structure.to_dict(),
        "prior": model.prior.probs.tolist(),
        "parameters": model.params.to_dict(),
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "preprocessing": None if model.preprocessor is None else model.preprocessor.to_dict(),
    }


def model_from_dict(d: dict) -> TrainedModel:
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a neuralkdb model file (missing or wrong 'format' marker)")
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format_version {d.get('format_version')!r}; expected {FORMAT_VERSION}"
        )
    try:
        kind = normalize_kind(d["kind"])
        feats = d["dictionaries"]["features"]
        names = tuple(f["name"] for f in feats)
        alphabets = tuple(tuple(f["values"]) for f in feats)
        label = d["dictionaries"]["label"]
        labels = tuple(label["values"])
        sizes = [len(a) for a in alphabets]
        structure = DependenceStructure.from_dict(d["structure"])
        if kind in NEURAL_KINDS:
            params = EmbeddingStore.from_dict(d["parameters"], sizes, len(labels))
        elif kind == "nn":
            params = NNHead.from_dict(d["parameters"], sizes, len(labels))
        else:
            params = FrequencyCPT.from_dict(d["parameters"], structure, sizes)
        pre = d.get("preprocessing")
        return TrainedModel(
            kind, structure, ClassPrior(np.asarray(d["prior"], dtype=np.float64)), params,
            names, alphabets, label["name"], labels, TrainConfig.from_dict(d["config"]),
            int(d.get("k", 0)), None if pre is None else Preprocessor.from_dict(pre),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from exc


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return model_from_dict(d)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
