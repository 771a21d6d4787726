"""Repeated (stratified) holdout evaluation and one-parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classifiers import K_KINDS, NEURAL_KINDS, fit, normalize_kind, predict_tokens
from .embeddings import TrainConfig
from .errors import DataError
from .tabular import ColumnRule, Dataset, Preprocessor, PreprocessSpec, RawTable, column_mode, encode

SWEEP_PARAMETERS = ("k", "dim", "batch", "epochs")


@dataclass(frozen=True)
class SplitSpec:
    repeats: int = 5
    test_fraction: float = 0.3
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    k: int = 2
    config: TrainConfig = TrainConfig()

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))

    @property
    def k_label(self) -> str:
        return str(self.k) if self.kind in K_KINDS else ""


def parse_classifiers(text: str, default_k: int = 2, config: TrainConfig = TrainConfig()) -> list[ClassifierSpec]:
    """Parse ``"nb,kdb:2,neuralkdb:3"``; a bare name uses ``default_k``."""
    out = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        name, _, k = item.partition(":")
        try:
            kk = int(k) if k else default_k
        except ValueError:
            raise ValueError(f"bad dependence order in classifier {item!r}") from None
        out.append(ClassifierSpec(name, kk, config))
    if not out:
        raise ValueError("no classifiers given")
    return out


def _test_quotas(class_sizes: Sequence[int], fraction: float) -> list[int]:
    n = sum(class_sizes)
    total = int(math.floor(fraction * n + 0.5))
    ideal = [fraction * s for s in class_sizes]
    quotas = [min(int(math.floor(v + 1e-9)), max(s - 1, 0)) for v, s in zip(ideal, class_sizes)]
    order = sorted(range(len(class_sizes)), key=lambda c: (-(ideal[c] - quotas[c]), c))
    remaining = total - sum(quotas)
    for c in order:
        if remaining <= 0:
            break
        if quotas[c] < class_sizes[c] - 1:
            quotas[c] += 1
            remaining -= 1
    return quotas


def split_indices(labels: np.ndarray, num_labels: int, spec: SplitSpec, repeat: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted ``(train, test)`` row indices; a pure function of ``(spec.seed, repeat)``.

    Stratified splits give each class ``floor`` or ``ceil`` of its proportional
    test share (largest remainders first) and never move a class's last row out
    of training.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    rng = np.random.default_rng([spec.seed, repeat])
    if spec.stratified:
        members = [np.flatnonzero(labels == c) for c in range(num_labels)]
        empty = [c for c, idx in enumerate(members) if len(idx) == 0]
        if empty:
            raise DataError(f"stratified split: classes {empty} have no rows")
        quotas = _test_quotas([len(idx) for idx in members], spec.test_fraction)
        test = np.concatenate([rng.permutation(idx)[:q] for idx, q in zip(members, quotas)])
    else:
        test = rng.permutation(n)[: int(math.floor(spec.test_fraction * n + 0.5))]
    test = np.sort(test)
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def split(dataset: Dataset, spec: SplitSpec, repeat: int) -> tuple[Dataset, Dataset]:
    """Partition rows; each side's feature alphabets are rebuilt from its own rows.

    The label alphabet is kept whole on both sides.
    """
    train_idx, test_idx = split_indices(dataset.y, dataset.num_labels, spec, repeat)
    labels = dataset.label_alphabet
    return (encode(dataset.subset(train_idx).decode(), labels),
            encode(dataset.subset(test_idx).decode(), labels))


@dataclass
class EvalRecord:
    classifier: str
    k: str
    repeat: int
    accuracy: float
    param: str = ""
    value: str = ""


@dataclass
class EvalReport:
    dataset: str
    records: list[EvalRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def _group_keys(self):
        seen = []
        for r in self.records:
            key = (r.param, r.value, r.classifier, r.k)
            if key not in seen:
                seen.append(key)
        return seen

    def aggregates(self) -> list[dict]:
        """Mean and sample standard deviation per (parameter value, classifier, k)."""
        out = []
        for param, value, clf, k in self._group_keys():
            accs = [r.accuracy for r in self.records
                    if (r.param, r.value, r.classifier, r.k) == (param, value, clf, k)]
            out.append({
                "classifier": clf, "k": k, "param": param, "value": value,
                "repeats": len(accs), "mean": statistics.fmean(accs),
                "std": statistics.stdev(accs) if len(accs) > 1 else 0.0,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        swept = any(r.param for r in self.records)
        head = ["dataset", "classifier", "k"] + (["param", "value"] if swept else []) + ["repeat", "accuracy"]
        w.writerow(head)
        for r in self.records:
            w.writerow([self.dataset, r.classifier, r.k] + ([r.param, r.value] if swept else [])
                       + [r.repeat, repr(r.accuracy)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"dataset": self.dataset, "metadata": self.metadata,
                           "aggregates": self.aggregates()}, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = []
        for a in self.aggregates():
            tag = f"{a['param']}={a['value']} " if a["param"] else ""
            k = f"(k={a['k']})" if a["k"] else ""
            lines.append(f"{tag}{a['classifier']}{k}: {100 * a['mean']:.2f} +- {100 * a['std']:.2f}")
        return "\n".join(lines)


def _passthrough(table: RawTable) -> Preprocessor:
    rules = tuple(ColumnRule(c, column_mode(table.column(c))) for c in table.feature_columns)
    return Preprocessor(table.label_column, column_mode(table.column(table.label_column)), rules)


def _holdout_runs(data: Dataset | RawTable, spec: SplitSpec, preprocess: PreprocessSpec | None):
    """Yield ``(repeat, train Dataset, test feature tokens, test labels)``."""
    if isinstance(data, Dataset):
        table, preprocess = data.decode(), None
    else:
        table = data
    li = table.label_index
    fill = column_mode(table.column(table.label_column))
    labels_tok = [row[li] if row[li] is not None else fill for row in table.cells]
    alphabet = tuple(sorted(set(labels_tok)))
    if len(alphabet) < 2:
        raise DataError(f"label column {table.label_column!r} needs at least 2 classes")
    lookup = {t: c for c, t in enumerate(alphabet)}
    y = np.array([lookup[t] for t in labels_tok], dtype=np.int64)
    for repeat in range(spec.repeats):
        train_idx, test_idx = split_indices(y, len(alphabet), spec, repeat)
        if len(test_idx) == 0 or len(train_idx) == 0:
            raise DataError("holdout split left an empty partition")
        train_table = table.select_rows(train_idx.tolist())
        pre = _passthrough(train_table) if preprocess is None else Preprocessor.fit(train_table, preprocess)
        train_ds = encode(pre.transform(train_table), alphabet)
        test_rows = [pre.feature_tokens(table.column_names, table.cells[i]) for i in test_idx.tolist()]
        yield repeat, train_ds, test_rows, [labels_tok[i] for i in test_idx.tolist()]


def _run(data, entries: Sequence[tuple[ClassifierSpec, str, str]], spec: SplitSpec,
         preprocess: PreprocessSpec | None, name: str) -> EvalReport:
    cells = {}
    for repeat, train_ds, test_rows, test_labels in _holdout_runs(data, spec, preprocess):
        for j, (clf, param, value) in enumerate(entries):
            model = fit(train_ds, clf.kind, clf.k, clf.config)
            predicted, _ = predict_tokens(model, test_rows)
            correct = sum(p == t for p, t in zip(predicted, test_labels))
            cells[j, repeat] = EvalRecord(clf.kind, clf.k_label, repeat, correct / len(test_labels), param, value)
    report = EvalReport(name, [cells[key] for key in sorted(cells)])
    report.metadata = {
        "split": dataclasses.asdict(spec),
        "preprocess": None if preprocess is None or isinstance(data, Dataset) else dataclasses.asdict(preprocess),
        "classifiers": [
            {"classifier": c.kind, "k": c.k_label, "param": p, "value": v, "config": c.config.to_dict()}
            for c, p, v in entries
        ],
    }
    return report


def evaluate(data: Dataset | RawTable, classifiers: Sequence[ClassifierSpec], spec: SplitSpec = SplitSpec(),
             preprocess: PreprocessSpec | None = PreprocessSpec(), name: str = "") -> EvalReport:
    """Fit every classifier on each training partition and score test accuracy.

    A :class:`RawTable` is imputed and discretized with statistics fitted on the
    training partition only; a :class:`Dataset` is used as is.
    """
    if not classifiers:
        raise ValueError("no classifiers to evaluate")
    return _run(data, [(c, "", "") for c in classifiers], spec, preprocess, name)


def sweep_entries(kind: str, parameter: str, values: Iterable, k: int = 2,
                  config: TrainConfig = TrainConfig()) -> list[tuple[ClassifierSpec, str, str]]:
    kind = normalize_kind(kind)
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    if parameter == "k" and kind not in K_KINDS:
        raise ValueError(f"{kind} has no dependence order to sweep")
    if parameter != "k" and kind not in NEURAL_KINDS + ("nn",):
        raise ValueError(f"{kind} has no {parameter} hyperparameter")
    field_name = {"dim": "dim", "batch": "batch_size", "epochs": "epochs"}
    out = []
    for v in values:
        v = int(v)
        if parameter == "k":
            clf = ClassifierSpec(kind, v, config)
        else:
            clf = ClassifierSpec(kind, k, dataclasses.replace(config, **{field_name[parameter]: v}))
        out.append((clf, parameter, str(v)))
    return out


def sweep(data: Dataset | RawTable, kind: str, parameter: str, values: Iterable, spec: SplitSpec = SplitSpec(),
          k: int = 2, config: TrainConfig = TrainConfig(),
          preprocess: PreprocessSpec | None = PreprocessSpec(), name: str = "") -> EvalReport:
    """One evaluation per parameter value under the same split seed."""
    return _run(data, sweep_entries(kind, parameter, values, k, config), spec, preprocess, name)
