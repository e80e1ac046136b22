"""Grouped observations: CSV ingestion and synthetic scenario generators.

The synthetic scenarios draw each observation by first picking a mixture
component and then sampling the Gaussian around its mean, so the truth
record can report the exact component of every observation alongside the
group-level distribution labels. Observations drawn around the same mean
form one true cluster even across groups.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "GroupedData",
    "ScenarioTruth",
    "ingest_csv",
    "generate_scenario",
    "SCENARIO_NAMES",
]

_COMPONENT_SD = math.sqrt(0.6)

# mixture weights and mean indices per group distribution
_NESTED_DISTRIBUTIONS = {
    "A": ((0.5, 0.25, 0.25), (0, 1, 3)),
    "B": ((0.5, 0.5), (0, 2)),
    "C": ((0.4, 0.2, 0.2, 0.2), (0, 1, 3, 4)),
}
_CORM_DISTRIBUTIONS = {
    "Y1": ((0.5, 0.25, 0.25), (0, 1, 2)),
    "Y2": ((0.25, 0.5, 0.25), (1, 2, 3)),
    "Y3": ((0.5, 0.5), (0, 1)),
    "Y4": ((0.2, 0.2, 0.2, 0.4), (2, 3, 4, 5)),
    "Y5": ((0.5, 0.5), (4, 2)),
    "Y6": ((0.25, 0.25, 0.25, 0.25), (0, 1, 2, 4)),
}

_SCENARIOS = {
    "nested_i": (
        (0.0, 3.0, 6.0, 10.0, 15.0),
        ("A", "A", "A", "B", "B", "C"),
        _NESTED_DISTRIBUTIONS,
    ),
    "nested_ii": (
        (0.0, 2.0, 4.0, 6.66, 10.0),
        ("A", "A", "A", "B", "B", "C"),
        _NESTED_DISTRIBUTIONS,
    ),
    "nested_iii": (
        (0.0, 3.0, 6.0, 10.0, 15.0),
        ("A",) * 10 + ("B",) * 10,
        _NESTED_DISTRIBUTIONS,
    ),
    "corm_1": (
        (6.0, 10.0, 15.0, 20.0, 0.0, 3.0),
        ("Y1", "Y2", "Y3", "Y4", "Y5", "Y6"),
        _CORM_DISTRIBUTIONS,
    ),
    "corm_2": (
        (4.0, 6.66, 10.0, 13.33, 0.0, 2.0),
        ("Y1", "Y2", "Y3", "Y4", "Y5", "Y6"),
        _CORM_DISTRIBUTIONS,
    ),
}

SCENARIO_NAMES = tuple(sorted(_SCENARIOS))


@dataclass(frozen=True)
class GroupedData:
    """Observations split into named groups, ordered by first appearance."""

    ids: tuple[str, ...]
    groups: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.ids) != len(self.groups):
            raise ValidationError("one id per group required")
        if not self.groups:
            raise ValidationError("need at least one group")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("group ids must be distinct")
        for gid, y in zip(self.ids, self.groups):
            if y.ndim != 1 or y.size == 0:
                raise ValidationError(f"group {gid!r} has no observations")
            if not np.all(np.isfinite(y)):
                raise ValidationError(f"group {gid!r} has non-finite values")

    @property
    def d(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(y.size) for y in self.groups)

    def as_list(self) -> list[np.ndarray]:
        return [np.asarray(y, dtype=float) for y in self.groups]


@dataclass(frozen=True)
class ScenarioTruth:
    """Generating truth of a synthetic scenario.

    nested_labels holds the distribution index of each group (None for
    the plain CoRM scenarios, whose groups all differ); assignments holds
    the mean index of every observation, so observations sharing an index
    form one true cluster across the whole data set.
    """

    name: str
    means: tuple[float, ...]
    group_distributions: tuple[str, ...]
    component_weights: tuple[tuple[float, ...], ...]
    component_means: tuple[tuple[float, ...], ...]
    nested_labels: np.ndarray | None
    assignments: tuple[np.ndarray, ...]

    def partition_labels(self) -> np.ndarray:
        """True cluster label of every observation, groups concatenated."""
        return np.concatenate([np.asarray(a) for a in self.assignments])


def ingest_csv(
    path, group_column: str = "group", value_column: str = "value"
) -> GroupedData:
    """Read (group, value) rows into groups ordered by first appearance.

    Errors name the physical row of the file, counting the header as row
    one.
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValidationError(f"{path} is empty; a header row is required")
        for column in (group_column, value_column):
            if column not in reader.fieldnames:
                raise ValidationError(
                    f"{path} is missing required column {column!r}"
                )
        order: list[str] = []
        values: dict[str, list[float]] = {}
        for row_number, row in enumerate(reader, start=2):
            raw = row.get(value_column)
            gid = row.get(group_column)
            if gid is None or raw is None or raw == "":
                raise ValidationError(f"row {row_number}: missing field")
            try:
                value = float(raw)
            except ValueError as exc:
                raise ValidationError(
                    f"row {row_number}: cannot parse value {raw!r}"
                ) from exc
            if not math.isfinite(value):
                raise ValidationError(f"row {row_number}: non-finite value")
            if gid not in values:
                order.append(gid)
                values[gid] = []
            values[gid].append(value)
    if not order:
        raise ValidationError(f"{path} contains no observations")
    return GroupedData(
        ids=tuple(order),
        groups=tuple(np.asarray(values[g], dtype=float) for g in order),
    )


def generate_scenario(
    name: str, n_per_group: int, seed: int
) -> tuple[GroupedData, ScenarioTruth]:
    """Draw one synthetic data set with its generating truth.

    Every group mixes Gaussians of variance 0.6 around a subset of the
    scenario's shared means; which subset, and with which weights, is
    fixed by the scenario's distribution table.
    """
    if name not in _SCENARIOS:
        raise ValidationError(
            f"unknown scenario {name!r}; choose one of {', '.join(SCENARIO_NAMES)}"
        )
    if n_per_group < 1:
        raise ValidationError("n_per_group must be at least 1")
    means, layout, table = _SCENARIOS[name]
    rng = np.random.default_rng(seed)
    groups: list[np.ndarray] = []
    assignments: list[np.ndarray] = []
    weights_per_group: list[tuple[float, ...]] = []
    means_per_group: list[tuple[float, ...]] = []
    for dist in layout:
        weights, indices = table[dist]
        picks = rng.choice(np.asarray(indices), p=weights, size=n_per_group)
        y = rng.normal(np.asarray(means)[picks], _COMPONENT_SD)
        groups.append(y)
        assignments.append(picks.astype(int))
        weights_per_group.append(tuple(weights))
        means_per_group.append(tuple(float(means[i]) for i in indices))
    distinct = sorted(set(layout), key=layout.index)
    nested = (
        np.asarray([distinct.index(dist) for dist in layout], dtype=int)
        if name.startswith("nested")
        else None
    )
    data = GroupedData(
        ids=tuple(str(j + 1) for j in range(len(layout))),
        groups=tuple(groups),
    )
    truth = ScenarioTruth(
        name=name,
        means=tuple(float(m) for m in means),
        group_distributions=tuple(layout),
        component_weights=tuple(weights_per_group),
        component_means=tuple(means_per_group),
        nested_labels=nested,
        assignments=tuple(assignments),
    )
    return data, truth
