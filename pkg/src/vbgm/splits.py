"""Session-splitting: one labeled offline set, T unlabeled online streams.

A fully labeled source corpus is carved into the continual-discovery
protocol: half the classes (configurable) form the supervised offline set
with most of their training samples; the remaining classes debut in equal
groups across the online sessions. Every session also carries a fixed
number of samples from each previously seen class, drawn without
replacement from that class's leftover training pool. Test sets are
cumulative: session t's test set holds the held-out samples of every class
seen through t.

Class ids are remapped to protocol order (offline classes first, then
session by session); the manifest records the mapping and the source row
indices of every subset so a split can be rebuilt from the original file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import InsufficientSamples, MissingLabels
from .features import FeatureMatrix

SCHEMA_VERSION = 1


@dataclass
class SessionSplit:
    """Materialized protocol data with protocol-ordered labels.

    Online matrices keep their ground-truth labels for evaluation; the
    learner must only ever see `masked_online(t)`.
    """

    offline: FeatureMatrix
    online: list[FeatureMatrix]
    tests: list[FeatureMatrix]
    new_classes_per_session: list[int]

    @property
    def num_sessions(self) -> int:
        return len(self.online)

    @property
    def labeled_class_count(self) -> int:
        return int(self.offline.class_ids().size)

    def masked_online(self, session: int) -> FeatureMatrix:
        """Label-stripped view of online session t (1-based)."""
        return self.online[session - 1].without_labels()

    def online_truth(self, session: int) -> np.ndarray:
        """Ground-truth labels of online session t, for evaluation only."""
        return self.online[session - 1].labels.copy()

    def known_classes_before(self, session: int) -> int:
        return self.labeled_class_count + int(sum(self.new_classes_per_session[: session - 1]))


@dataclass
class SplitManifest:
    """Row-index view of a split, tied to the source feature file."""

    seed: int
    class_map: dict[int, int]  # source label -> protocol id
    offline_rows: list[int]
    online_rows: list[list[int]]
    test_rows: list[list[int]]
    new_classes_per_session: list[int]
    labeled_class_count: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "class_map": {str(k): v for k, v in sorted(self.class_map.items())},
            "offline_rows": self.offline_rows,
            "online_rows": self.online_rows,
            "test_rows": self.test_rows,
            "new_classes_per_session": self.new_classes_per_session,
            "labeled_class_count": self.labeled_class_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "SplitManifest":
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema: {payload.get('schema_version')}")
        return cls(
            seed=int(payload["seed"]),
            class_map={int(k): int(v) for k, v in payload["class_map"].items()},
            offline_rows=[int(i) for i in payload["offline_rows"]],
            online_rows=[[int(i) for i in rows] for rows in payload["online_rows"]],
            test_rows=[[int(i) for i in rows] for rows in payload["test_rows"]],
            new_classes_per_session=[int(v) for v in payload["new_classes_per_session"]],
            labeled_class_count=int(payload["labeled_class_count"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        return cls.from_dict(json.loads(text))


def build_split(
    data: FeatureMatrix, config: PipelineConfig, seed: int
) -> tuple[SessionSplit, SplitManifest]:
    """Deterministic seeded partition of a fully labeled corpus.

    Raises
    ------
    MissingLabels : any unlabeled row.
    ValueError : the class count does not fit the session schedule.
    InsufficientSamples : a class's pools cannot cover the schedule,
        reported with the offending source class id.
    """
    if data.n == 0 or not data.is_fully_labeled:
        raise MissingLabels("split construction needs a fully labeled corpus")
    rng = np.random.default_rng(seed)
    source_classes = data.class_ids()
    num_classes = int(source_classes.size)
    num_labeled = int(round(config.labeled_class_fraction * num_classes))
    num_novel = num_classes - num_labeled
    expected = config.sessions * config.new_per_session
    if num_labeled < 1 or num_novel != expected:
        raise ValueError(
            f"{num_classes} classes do not fit the schedule: {num_labeled} labeled + "
            f"{config.sessions} sessions x {config.new_per_session} new != {num_classes}"
        )

    order = rng.permutation(source_classes)
    class_map = {int(src): proto for proto, src in enumerate(order)}

    test_pool: dict[int, list[int]] = {}
    debut_pool: dict[int, list[int]] = {}
    carry_pool: dict[int, list[int]] = {}
    for src in source_classes:
        rows = np.nonzero(data.labels == src)[0]
        rows = rows[rng.permutation(rows.size)]
        n_test = int(round(config.test_fraction * rows.size))
        train = rows[n_test:]
        n_debut = int(round(config.labeled_sample_fraction * train.size))
        if n_debut < 1:
            raise InsufficientSamples(f"class {int(src)} has no training samples after the split")
        test_pool[int(src)] = [int(i) for i in rows[:n_test]]
        debut_pool[int(src)] = [int(i) for i in train[:n_debut]]
        carry_pool[int(src)] = [int(i) for i in train[n_debut:]]

    by_protocol = {proto: src for src, proto in class_map.items()}
    offline_rows: list[int] = []
    for proto in range(num_labeled):
        offline_rows.extend(debut_pool[by_protocol[proto]])

    online_rows: list[list[int]] = []
    new_per_session: list[int] = []
    for session in range(1, config.sessions + 1):
        first_new = num_labeled + (session - 1) * config.new_per_session
        rows: list[int] = []
        for proto in range(first_new, first_new + config.new_per_session):
            rows.extend(debut_pool[by_protocol[proto]])
        for proto in range(first_new):
            src = by_protocol[proto]
            pool = carry_pool[src]
            if len(pool) < config.carryover_per_known:
                raise InsufficientSamples(
                    f"class {src} has {len(pool)} carryover samples left, "
                    f"session {session} needs {config.carryover_per_known}"
                )
            rows.extend(pool[: config.carryover_per_known])
            carry_pool[src] = pool[config.carryover_per_known :]
        online_rows.append(rows)
        new_per_session.append(config.new_per_session)

    test_rows: list[list[int]] = []
    for session in range(config.sessions + 1):
        seen = num_labeled + session * config.new_per_session
        rows = []
        for proto in range(seen):
            rows.extend(test_pool[by_protocol[proto]])
        test_rows.append(rows)

    manifest = SplitManifest(
        seed=seed,
        class_map=class_map,
        offline_rows=offline_rows,
        online_rows=online_rows,
        test_rows=test_rows,
        new_classes_per_session=new_per_session,
        labeled_class_count=num_labeled,
    )
    return split_from_manifest(data, manifest), manifest


def split_from_manifest(data: FeatureMatrix, manifest: SplitManifest) -> SessionSplit:
    """Rebuild the materialized split from the source corpus and a manifest."""
    remap = np.full(int(data.labels.max()) + 1, -1, dtype=np.int64)
    for src, proto in manifest.class_map.items():
        remap[src] = proto

    def materialize(rows: list[int]) -> FeatureMatrix:
        idx = np.asarray(rows, dtype=np.int64)
        subset = data.select(idx)
        return FeatureMatrix(subset.data, remap[subset.labels])

    return SessionSplit(
        offline=materialize(manifest.offline_rows),
        online=[materialize(rows) for rows in manifest.online_rows],
        tests=[materialize(rows) for rows in manifest.test_rows],
        new_classes_per_session=list(manifest.new_classes_per_session),
    )
