"""Feature dependence DAGs: k-dependence (KDB), TAN spanning tree, and the empty graph."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .infotheory import cmi_matrix, mi_vector
from .tabular import Dataset

# MI/CMI scores are compared after rounding so that mathematically equal scores
# computed along different float paths tie, and the tie goes to the lower index.
TIE_DECIMALS = 10


def rank_score(value: float) -> float:
    return round(float(value), TIE_DECIMALS)


@dataclass(frozen=True)
class DependenceStructure:
    """Parent sets plus the visitation order witnessing acyclicity."""

    order: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    k: int

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        parents = tuple(tuple(sorted(int(p) for p in ps)) for ps in self.parents)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "parents", parents)
        m = len(parents)
        if sorted(order) != list(range(m)):
            raise ValueError("order must be a permutation of the feature indices")
        pos = {f: t for t, f in enumerate(order)}
        for child, ps in enumerate(parents):
            if len(set(ps)) != len(ps):
                raise ValueError(f"feature {child} lists a parent twice")
            for p in ps:
                if not 0 <= p < m or pos[p] >= pos[child]:
                    raise ValueError(f"parent {p} of feature {child} does not precede it in order")

    @property
    def m(self) -> int:
        return len(self.parents)

    def edges(self) -> list[tuple[int, int]]:
        """``(parent, child)`` pairs."""
        return [(p, c) for c, ps in enumerate(self.parents) for p in ps]

    def to_dict(self) -> dict:
        return {"order": list(self.order), "parents": [list(p) for p in self.parents], "k": self.k}

    @classmethod
    def from_dict(cls, d: dict) -> DependenceStructure:
        return cls(tuple(d["order"]), tuple(tuple(p) for p in d["parents"]), int(d["k"]))

    def describe(self, names=None) -> str:
        """``child <- parent,parent`` lines in visitation order."""
        name = (lambda i: names[i]) if names is not None else str
        return "\n".join(
            f"{name(c)} <- {','.join(name(p) for p in self.parents[c])}" for c in self.order
        )

    def adjacency_json(self, names=None) -> str:
        name = (lambda i: names[i]) if names is not None else str
        return json.dumps({name(c): [name(p) for p in self.parents[c]] for c in self.order})


def _require_rows(dataset: Dataset) -> None:
    if dataset.n == 0:
        raise DataError("structure learning needs a non-empty dataset")


def _visit_order(mi: np.ndarray) -> list[int]:
    return sorted(range(len(mi)), key=lambda i: (-rank_score(mi[i]), i))


def build_kdb_structure(dataset: Dataset, k: int) -> DependenceStructure:
    """k-dependence structure: visit by descending MI with the label, pick top-k CMI parents."""
    if k < 0:
        raise ValueError("k must be non-negative")
    _require_rows(dataset)
    mi = mi_vector(dataset)
    cmi = cmi_matrix(dataset)
    order = _visit_order(mi)
    parents: list[tuple[int, ...]] = [()] * dataset.m
    visited: list[int] = []
    for child in order:
        ranked = sorted(visited, key=lambda j: (-rank_score(cmi[child, j]), j))
        parents[child] = tuple(ranked[: min(k, len(visited))])
        visited.append(child)
    return DependenceStructure(tuple(order), tuple(parents), k)


def build_tan_structure(dataset: Dataset) -> DependenceStructure:
    """Maximum-weight spanning tree over CMI edge weights, rooted at the top-MI feature.

    Prim's algorithm grown from the root; among equal-weight frontier edges the
    one with the smallest ``(child, parent)`` indices is taken.
    """
    _require_rows(dataset)
    m = dataset.m
    if m == 0:
        raise DataError("TAN needs at least one feature")
    mi = mi_vector(dataset)
    w = cmi_matrix(dataset)
    root = _visit_order(mi)[0]
    parents: list[tuple[int, ...]] = [()] * m
    order = [root]
    in_tree = {root}
    while len(order) < m:
        best = None
        for child in range(m):
            if child in in_tree:
                continue
            for parent in order:
                key = (-rank_score(w[parent, child]), child, parent)
                if best is None or key < best:
                    best = key
        _, child, parent = best
        parents[child] = (parent,)
        order.append(child)
        in_tree.add(child)
    return DependenceStructure(tuple(order), tuple(parents), 1 if m > 1 else 0)


def build_empty_structure(m: int) -> DependenceStructure:
    if m < 1:
        raise ValueError("m must be at least 1")
    return DependenceStructure(tuple(range(m)), ((),) * m, 0)
