"""Chain persistence: newline-delimited JSON records with a header line.

The first line of a chain file describes the format (name, version,
field list and, when densities are stored, the evaluation grid). Every
following line is one record, flushed as soon as it is written so a
killed run leaves a readable prefix. Floats serialize through Python's
shortest-repr rule, which reads back to the identical double. Records
carry a chain id, so several chains may append to one file and be
separated on read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .samplers import ChainState

__all__ = [
    "ChainRecord",
    "ChainFile",
    "ChainWriter",
    "write_chain",
    "read_chain",
    "records_by_chain",
]

_FORMAT = "corms-chain"
_VERSION = 1
_FIELDS = [
    "chain",
    "iteration",
    "k",
    "n_jumps",
    "sigma",
    "phi",
    "u",
    "comp",
    "pi",
    "labels",
    "functionals",
    "densities",
]


@dataclass
class ChainRecord:
    """One emitted sweep: partition, labels and scalar functionals."""

    chain_id: int
    iteration: int
    k: int
    n_jumps: int
    sigma: float
    phi: float
    u: np.ndarray
    comp: np.ndarray
    pi: np.ndarray
    labels: np.ndarray
    functionals: dict = field(default_factory=dict)
    densities: dict | None = None

    @classmethod
    def from_state(
        cls,
        iteration: int,
        state: ChainState,
        chain_id: int = 0,
        functionals: dict | None = None,
        densities: dict | None = None,
    ) -> "ChainRecord":
        return cls(
            chain_id=chain_id,
            iteration=iteration,
            k=state.k,
            n_jumps=int(state.jumps.size),
            sigma=float(state.sigma),
            phi=float(state.phi),
            u=np.asarray(state.u, dtype=float),
            comp=np.asarray(state.comp, dtype=int),
            pi=np.asarray(state.pi, dtype=float),
            labels=state.partition_labels(),
            functionals=dict(functionals or {}),
            densities=densities,
        )

    def to_line(self) -> str:
        payload = {
            "chain": int(self.chain_id),
            "iteration": int(self.iteration),
            "k": int(self.k),
            "n_jumps": int(self.n_jumps),
            "sigma": float(self.sigma),
            "phi": float(self.phi),
            "u": np.asarray(self.u, dtype=float).tolist(),
            "comp": np.asarray(self.comp, dtype=int).tolist(),
            "pi": np.asarray(self.pi, dtype=float).tolist(),
            "labels": np.asarray(self.labels, dtype=int).tolist(),
            "functionals": {
                k: float(v) for k, v in sorted(self.functionals.items())
            },
            "densities": (
                None
                if self.densities is None
                else {
                    k: np.asarray(v, dtype=float).tolist()
                    for k, v in sorted(self.densities.items())
                }
            ),
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_payload(cls, payload: dict) -> "ChainRecord":
        try:
            densities = payload.get("densities")
            return cls(
                chain_id=int(payload["chain"]),
                iteration=int(payload["iteration"]),
                k=int(payload["k"]),
                n_jumps=int(payload["n_jumps"]),
                sigma=float(payload["sigma"]),
                phi=float(payload["phi"]),
                u=np.asarray(payload["u"], dtype=float),
                comp=np.asarray(payload["comp"], dtype=int),
                pi=np.asarray(payload["pi"], dtype=float),
                labels=np.asarray(payload["labels"], dtype=int),
                functionals=dict(payload["functionals"]),
                densities=(
                    None
                    if densities is None
                    else {
                        k: np.asarray(v, dtype=float)
                        for k, v in densities.items()
                    }
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed chain record: {exc}") from exc


@dataclass
class ChainFile:
    """Parsed chain file: header, records, and truncation flags."""

    header: dict
    records: list[ChainRecord]
    partial: bool = False
    truncated: bool = False

    @property
    def grid(self) -> np.ndarray | None:
        grid = self.header.get("grid")
        return None if grid is None else np.asarray(grid, dtype=float)


class ChainWriter:
    """Record sink writing the header lazily and flushing every record."""

    def __init__(
        self,
        path,
        grid: np.ndarray | None = None,
        meta: dict | None = None,
    ) -> None:
        self.path = path
        self.grid = None if grid is None else np.asarray(grid, dtype=float)
        self.meta = dict(meta or {})
        self._handle = None

    def __enter__(self) -> "ChainWriter":
        existing = False
        try:
            with open(self.path, "r", encoding="utf-8") as probe:
                existing = probe.readline().strip() != ""
        except OSError:
            existing = False
        self._handle = open(self.path, "a", encoding="utf-8")
        if not existing:
            header = {
                "format": _FORMAT,
                "version": _VERSION,
                "fields": _FIELDS,
                "grid": None if self.grid is None else self.grid.tolist(),
                "meta": self.meta,
            }
            self._write_line(json.dumps(header, separators=(",", ":")))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc is not None:
            self.mark_partial(repr(exc))
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def _write_line(self, line: str) -> None:
        self._handle.write(line + "\n")
        self._handle.flush()

    def write(self, record: ChainRecord) -> None:
        self._write_line(record.to_line())

    def mark_partial(self, reason: str) -> None:
        try:
            self._write_line(
                json.dumps(
                    {"partial": True, "reason": reason},
                    separators=(",", ":"),
                )
            )
        except OSError:
            pass


def write_chain(records, path, grid: np.ndarray | None = None) -> int:
    """Write records to path; returns the number written.

    A failure while producing or writing records leaves a partial-output
    marker line at the end of the file and re-raises.
    """
    count = 0
    with ChainWriter(path, grid=grid) as sink:
        for record in records:
            sink.write(record)
            count += 1
    return count


def read_chain(path) -> ChainFile:
    """Parse a chain file, tolerating a torn final line."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise ValidationError(f"{path} is empty; expected a chain header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} has a malformed header") from exc
    if header.get("format") != _FORMAT:
        raise ValidationError(f"{path} is not a {_FORMAT} file")
    if header.get("version") != _VERSION:
        raise ValidationError(
            f"{path} has unsupported version {header.get('version')!r}"
        )
    records: list[ChainRecord] = []
    partial = False
    truncated = False
    for index, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            if index == len(lines):
                truncated = True
                break
            raise ValidationError(f"{path} line {index}: malformed record")
        if payload.get("partial"):
            partial = True
            continue
        records.append(ChainRecord.from_payload(payload))
    return ChainFile(
        header=header, records=records, partial=partial, truncated=truncated
    )


def records_by_chain(records) -> dict[int, list[ChainRecord]]:
    """Split interleaved records into per-chain lists, ids ascending."""
    out: dict[int, list[ChainRecord]] = {}
    for record in records:
        out.setdefault(int(record.chain_id), []).append(record)
    return {key: out[key] for key in sorted(out)}
