"""Ranking file formats, JSON helpers, and reproducible run manifests.

A ranking file is plain text, one complete ranking per row, items numbered
1..n.  Two row conventions exist in the wild and both are supported:

* ``ordering`` — the row lists item ids, most preferred first (how complete
  preference datasets are usually distributed); this is the canonical format.
* ``ranks`` — the j-th field is the rank assigned to item j.

Fields are separated by commas or whitespace (auto-detected on read).  When a
sample carries labels, the writer prepends a header row and appends a final
``label`` column, so unlabeled consumers can simply ignore the extra column.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import RankingParseError, RejectedInputError
from .perms import Permutation, RankingSample


class RankingFileFormat(str, Enum):
    ORDERING = "ordering"
    RANKS = "ranks"


def _as_format(fmt) -> RankingFileFormat:
    if isinstance(fmt, RankingFileFormat):
        return fmt
    try:
        return RankingFileFormat(str(fmt).lower())
    except ValueError:
        names = ", ".join(f.value for f in RankingFileFormat)
        raise RejectedInputError(
            f"unknown ranking file format {fmt!r}; expected one of {names}"
        )


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def _split_row(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        delimiter = "," if "," in line else "whitespace"
    if delimiter == "whitespace":
        return line.split()
    return [t.strip() for t in line.split(delimiter)]


def _perm_from_row(vals: list[int], fmt: RankingFileFormat, row_no: int) -> Permutation:
    n = len(vals)
    if sorted(vals) != list(range(1, n + 1)):
        raise RankingParseError(
            f"fields {vals} are not a permutation of 1..{n}", row=row_no
        )
    if fmt is RankingFileFormat.ORDERING:
        return Permutation.from_ordering(tuple(v - 1 for v in vals))
    return Permutation(tuple(v - 1 for v in vals))


def load_rankings(path, format="ordering", delimiter: str | None = None) -> RankingSample:
    """Parse a ranking file; raises RankingParseError with the offending row.

    ``delimiter`` is ``","``, ``"whitespace"``, or None to auto-detect per
    row.  A first row containing any non-integer field is treated as a
    header; the sample is labeled iff that header's last column is ``label``.
    """
    fmt = _as_format(format)
    lines = Path(path).read_text().splitlines()
    rows = [(no + 1, ln.strip()) for no, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise RankingParseError(f"{path}: no ranking rows found")
    head = _split_row(rows[0][1], delimiter)
    has_header = not all(_is_int(t) for t in head)
    labeled = has_header and head[-1].strip().lower() == "label"
    data = rows[1:] if has_header else rows
    if not data:
        raise RankingParseError(f"{path}: no ranking rows after the header")

    perms: list[Permutation] = []
    raw_labels: list[str] = []
    n: int | None = None
    for row_no, line in data:
        tokens = _split_row(line, delimiter)
        if labeled:
            if len(tokens) < 2:
                raise RankingParseError("labeled row needs at least 2 fields", row=row_no)
            raw_labels.append(tokens[-1])
            tokens = tokens[:-1]
        bad = [t for t in tokens if not _is_int(t)]
        if bad:
            raise RankingParseError(f"non-integer field {bad[0]!r}", row=row_no)
        vals = [int(t) for t in tokens]
        if n is None:
            n = len(vals)
        elif len(vals) != n:
            raise RankingParseError(
                f"expected {n} ranking fields, found {len(vals)}", row=row_no
            )
        perms.append(_perm_from_row(vals, fmt, row_no))

    labels = None
    if labeled:
        # numeric-looking labels come back as ints so component ids round-trip
        labels = (
            tuple(int(t) for t in raw_labels)
            if all(_is_int(t) for t in raw_labels)
            else tuple(raw_labels)
        )
    return RankingSample(tuple(perms), labels)


def write_rankings(sample: RankingSample, path, format="ordering", delimiter=",") -> None:
    fmt = _as_format(format)
    sep = " " if delimiter == "whitespace" else str(delimiter)
    labels = sample.labels
    out: list[str] = []
    if labels is not None:
        stem = "item" if fmt is RankingFileFormat.ORDERING else "rank"
        out.append(sep.join([f"{stem}_{k + 1}" for k in range(sample.n)] + ["label"]))
    for i, p in enumerate(sample.rankings):
        if fmt is RankingFileFormat.ORDERING:
            vals = [v + 1 for v in p.ordering()]
        else:
            vals = [r + 1 for r in p.ranks]
        row = [str(v) for v in vals]
        if labels is not None:
            row.append(str(labels[i]))
        out.append(sep.join(row))
    Path(path).write_text("\n".join(out) + "\n")


# --- JSON + digests -------------------------------------------------------------


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- run manifests ----------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a CLI run and check it did reproduce.

    The data outputs of a run are a pure function of (command, config,
    inputs); wall times are recorded here precisely so they never have to
    appear inside an output file, keeping reruns byte-identical.
    """

    command: str
    argv: tuple[str, ...]
    seed: int | None
    config: dict
    inputs: dict
    outputs: dict
    wall_times: dict

    def to_json_obj(self) -> dict:
        return {
            "command": self.command,
            "argv": list(self.argv),
            "seed": self.seed,
            "config": dict(self.config),
            "inputs": dict(self.inputs),
            "outputs": dict(self.outputs),
            "wall_times": dict(self.wall_times),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunManifest":
        try:
            return cls(
                command=str(obj["command"]),
                argv=tuple(str(a) for a in obj["argv"]),
                seed=None if obj.get("seed") is None else int(obj["seed"]),
                config=dict(obj["config"]),
                inputs=dict(obj["inputs"]),
                outputs=dict(obj["outputs"]),
                wall_times=dict(obj["wall_times"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RejectedInputError(f"malformed run manifest: {exc}") from exc


def write_manifest(manifest: RunManifest, path) -> None:
    write_json(manifest.to_json_obj(), path)
