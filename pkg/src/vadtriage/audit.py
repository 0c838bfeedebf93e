"""Label auditing: isolation analysis on an explainable tree, near-duplicate
disagreement detection, tree export, and conflict resolution.

Audit trees are fit on the labeled rows themselves with every feature
available at each split and no bootstrap, so the tree shown to experts is
exactly the tree that produced the flags.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .domain import FEATURE_NAMES, LabelRecord, LabelValue, Provenance
from .errors import AlreadyResolved, UnknownConflict
from .features import standardize
from .forest import ForestParams, Tree, fit_tree


class ConflictKind(str, Enum):
    ISOLATION = "Isolation"
    DISAGREEMENT = "Disagreement"


class ConflictStatus(str, Enum):
    OPEN = "Open"
    RESOLVED = "Resolved"


@dataclass
class ConflictItem:
    conflict_id: str
    kind: ConflictKind
    parcel_ids: tuple[str, ...]
    evidence: dict
    isolation_score: float = 0.0
    status: ConflictStatus = ConflictStatus.OPEN
    resolution: Optional[dict] = None

    def __post_init__(self):
        if not self.evidence:
            raise ValueError("conflict evidence must be non-empty")
        expected = 1 if self.kind is ConflictKind.ISOLATION else 2
        if len(self.parcel_ids) != expected:
            raise ValueError(
                f"{self.kind.value} conflicts reference {expected} parcel(s), "
                f"got {len(self.parcel_ids)}"
            )

    def to_dict(self) -> dict:
        return {
            "conflict_id": self.conflict_id,
            "kind": self.kind.value,
            "parcel_ids": list(self.parcel_ids),
            "evidence": self.evidence,
            "isolation_score": self.isolation_score,
            "status": self.status.value,
            "resolution": self.resolution,
        }

    @classmethod
    def from_dict(cls, d) -> "ConflictItem":
        return cls(
            conflict_id=d["conflict_id"],
            kind=ConflictKind(d["kind"]),
            parcel_ids=tuple(d["parcel_ids"]),
            evidence=d["evidence"],
            isolation_score=d["isolation_score"],
            status=ConflictStatus(d["status"]),
            resolution=d.get("resolution"),
        )


@dataclass(frozen=True)
class AuditConfig:
    min_depth: int = 3            # splits a row must pass before it counts as isolated
    max_leaf_allies: int = 2      # own-label rows allowed in the terminal leaf
    min_opposite_mass: int = 20   # opposite-label rows in some ancestor's sibling
    disagreement_eps: float = 0.5 # standardized L2 radius for near-duplicate pairs


def fit_audit_tree(X: np.ndarray, y: np.ndarray, max_depth: Optional[int] = None) -> Tree:
    """One explainable tree per parcel kind: all features at every split."""
    params = ForestParams(n_trees=1, max_depth=max_depth, min_leaf=1, mtry=X.shape[1])
    return fit_tree(X, y, params)


def _sibling(tree: Tree, parent: int, child: int) -> int:
    return int(tree.right[parent]) if int(tree.left[parent]) == child else int(tree.left[parent])


def flag_isolated_labels(
    tree: Tree,
    X: np.ndarray,
    y: np.ndarray,
    parcel_ids: Sequence[str],
    cfg: AuditConfig = AuditConfig(),
    feature_names: Sequence[str] = FEATURE_NAMES,
) -> list[ConflictItem]:
    """Flag labeled rows that the tree walls off behind many splits, ending
    in a nearly-empty leaf while a large opposite-label group sits in an
    ancestor's sibling subtree."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    items: list[ConflictItem] = []
    for i, pid in enumerate(parcel_ids):
        nodes = tree.route(X[i])
        path_len = len(nodes) - 1
        if path_len < cfg.min_depth:
            continue
        leaf = nodes[-1]
        leaf_vad, leaf_total = tree.node_counts(leaf)
        allies = leaf_vad if y[i] else leaf_total - leaf_vad
        if allies > cfg.max_leaf_allies:
            continue
        opposite_mass = 0
        for parent, child in zip(nodes[:-1], nodes[1:]):
            sib = _sibling(tree, parent, child)
            sib_vad, sib_total = tree.node_counts(sib)
            opp = sib_total - sib_vad if y[i] else sib_vad
            opposite_mass = max(opposite_mass, opp)
        if opposite_mass < cfg.min_opposite_mass:
            continue
        steps, terminal = tree.path(X[i])
        items.append(
            ConflictItem(
                conflict_id=f"iso-{pid}",
                kind=ConflictKind.ISOLATION,
                parcel_ids=(pid,),
                evidence={
                    "label": LabelValue.VAD.value if y[i] else LabelValue.NOT_VAD.value,
                    "path": [
                        {
                            "feature": feature_names[s.feature_index],
                            "feature_index": s.feature_index,
                            "threshold": s.threshold,
                            "went_left": s.went_left,
                        }
                        for s in steps
                    ],
                    "leaf": {"vad": terminal.vad_count, "total": terminal.total},
                    "leaf_allies": int(allies),
                    "opposite_mass": int(opposite_mass),
                },
                isolation_score=path_len * (opposite_mass / (allies + 1)),
            )
        )
    return items


def flag_disagreements(
    labels: Mapping[str, LabelValue],
    features: Mapping[str, np.ndarray],
    cfg: AuditConfig = AuditConfig(),
) -> list[ConflictItem]:
    """Near-duplicate parcels labeled oppositely: every unordered pair within
    ``disagreement_eps`` standardized L2 distance, reported once."""
    ids = sorted(labels)
    if len(ids) < 2:
        return []
    X = np.vstack([np.asarray(features[pid], dtype=np.float64) for pid in ids])
    Z, _, _ = standardize(X)
    is_vad = np.array([labels[pid] is LabelValue.VAD for pid in ids])
    items: list[ConflictItem] = []
    for a in range(len(ids)):
        d = np.sqrt(((Z[a + 1:] - Z[a]) ** 2).sum(axis=1))
        close = np.nonzero((d <= cfg.disagreement_eps))[0]
        for off in close:
            b = a + 1 + off
            if is_vad[a] == is_vad[b]:
                continue
            pa, pb = ids[a], ids[b]
            items.append(
                ConflictItem(
                    conflict_id=f"dis-{pa}-{pb}",
                    kind=ConflictKind.DISAGREEMENT,
                    parcel_ids=(pa, pb),
                    evidence={
                        "distance": float(d[off]),
                        "labels": {
                            pa: labels[pa].value,
                            pb: labels[pb].value,
                        },
                    },
                )
            )
    return items


def export_tree(tree: Tree, feature_names: Sequence[str] = FEATURE_NAMES) -> dict:
    """Nested JSON-ready structure with per-node split descriptions and class
    counts, plus DOT text under the "dot" key."""
    nodes: dict[int, dict] = {}
    for i in range(tree.n_nodes - 1, -1, -1):
        vad, total = tree.node_counts(i)
        if tree.feature[i] < 0:
            nodes[i] = {"type": "leaf", "vad": vad, "total": total}
        else:
            nodes[i] = {
                "type": "split",
                "feature": feature_names[int(tree.feature[i])],
                "feature_index": int(tree.feature[i]),
                "threshold": float(tree.threshold[i]),
                "vad": vad,
                "total": total,
                "left": nodes[int(tree.left[i])],
                "right": nodes[int(tree.right[i])],
            }
    dot_lines = ["digraph audit_tree {"]
    for i in range(tree.n_nodes):
        vad, total = tree.node_counts(i)
        if tree.feature[i] < 0:
            dot_lines.append(f'  n{i} [shape=box label="VAD {vad}/{total}"];')
        else:
            name = feature_names[int(tree.feature[i])]
            dot_lines.append(
                f'  n{i} [label="{name} <= {float(tree.threshold[i]):g}\\n{vad}/{total}"];'
            )
            dot_lines.append(f'  n{i} -> n{int(tree.left[i])} [label="yes"];')
            dot_lines.append(f'  n{i} -> n{int(tree.right[i])} [label="no"];')
    dot_lines.append("}")
    return {"version": 1, "root": nodes[0], "dot": "\n".join(dot_lines)}


def tree_from_export(exported: Mapping) -> Tree:
    """Rebuild a Tree from :func:`export_tree` output (inverse up to node order)."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    vad: list[int] = []
    total: list[int] = []

    stack: list[tuple[Mapping, int, bool]] = [(exported["root"], -1, False)]
    while stack:
        node, parent, is_left = stack.pop()
        idx = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = idx
            else:
                right[parent] = idx
        vad.append(int(node["vad"]))
        total.append(int(node["total"]))
        if node["type"] == "leaf":
            feature.append(-1)
            threshold.append(float("nan"))
            left.append(-1)
            right.append(-1)
        else:
            feature.append(int(node["feature_index"]))
            threshold.append(float(node["threshold"]))
            left.append(-1)
            right.append(-1)
            stack.append((node["right"], idx, False))
            stack.append((node["left"], idx, True))
    return Tree(feature, threshold, left, right, vad, total)


def apply_resolution(
    conflict: ConflictItem,
    final_label: LabelValue,
    rationale: str,
    resolver_id: str,
    round_no: int,
    timestamp: str,
) -> list[LabelRecord]:
    """Resolve a conflict: returns superseding resolution records (one per
    parcel) for the append-only log and marks the conflict Resolved. Original
    records are never touched."""
    if conflict.status is ConflictStatus.RESOLVED:
        raise AlreadyResolved(f"conflict {conflict.conflict_id} already resolved")
    records = [
        LabelRecord(
            parcel_id=pid,
            annotator_id=resolver_id,
            value=final_label,
            round=round_no,
            timestamp=timestamp,
            provenance=Provenance.RESOLUTION,
            comment=rationale,
        )
        for pid in conflict.parcel_ids
    ]
    conflict.status = ConflictStatus.RESOLVED
    conflict.resolution = {
        "final_label": final_label.value,
        "rationale": rationale,
        "resolver_id": resolver_id,
        "timestamp": timestamp,
    }
    return records


def find_conflict(conflicts: Iterable[ConflictItem], conflict_id: str) -> ConflictItem:
    for c in conflicts:
        if c.conflict_id == conflict_id:
            return c
    raise UnknownConflict(f"no conflict with id {conflict_id!r}")
