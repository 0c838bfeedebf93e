"""Spreadsheet export/import in the annotators' layout: each column is a
parcel, each row an attribute. Labels are filled into the "label" row with
free-text comments underneath; blank labels mean "not judged yet".
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from ..domain import Dataset, FEATURE_NAMES, LabelRecord, LabelValue, Provenance
from ..errors import BadLabelToken, MalformedSheet, UnknownParcelColumn

ATTRIBUTE_ROWS = ("id", "kind") + FEATURE_NAMES + ("label", "comment")


def export_sheet(
    parcel_ids: Sequence[str],
    ds: Dataset,
    path=None,
    labels: Optional[Mapping[str, str]] = None,
    comments: Optional[Mapping[str, str]] = None,
) -> str:
    """Write the transposed labeling sheet; returns the CSV text."""
    labels = labels or {}
    comments = comments or {}
    grid: list[list[str]] = []
    for attr in ATTRIBUTE_ROWS:
        row = [attr]
        for pid in parcel_ids:
            parcel = ds.parcels[pid]
            fv = ds.features[pid]
            if attr == "id":
                row.append(pid)
            elif attr == "kind":
                row.append(parcel.kind.value)
            elif attr == "label":
                row.append(labels.get(pid, ""))
            elif attr == "comment":
                row.append(comments.get(pid, ""))
            else:
                row.append(repr(getattr(fv, attr)))
        grid.append(row)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(grid)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def import_sheet(
    source,
    annotator_id: str,
    round_no: int,
    known_ids: Optional[Iterable[str]] = None,
    provenance: Provenance = Provenance.EXPERT,
) -> list[LabelRecord]:
    """Parse a filled sheet back to label records (blank labels are skipped).

    ``source`` is a path or raw CSV text. Raises MalformedSheet for layout
    problems, UnknownParcelColumn when an id is not in ``known_ids``, and
    BadLabelToken for labels outside {VAD, NotVAD, blank}.
    """
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        text = Path(source).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) != len(ATTRIBUTE_ROWS):
        raise MalformedSheet(
            f"expected {len(ATTRIBUTE_ROWS)} attribute rows, found {len(rows)}"
        )
    by_attr: dict[str, list[str]] = {}
    width = None
    for expected, row in zip(ATTRIBUTE_ROWS, rows):
        if not row or row[0] != expected:
            raise MalformedSheet(
                f"attribute row {expected!r} missing or out of order "
                f"(found {row[0]!r} instead)" if row else "empty row in sheet"
            )
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise MalformedSheet(
                f"ragged sheet: row {expected!r} has {len(row)} cells, expected {width}"
            )
        by_attr[expected] = row[1:]

    known = set(known_ids) if known_ids is not None else None
    records: list[LabelRecord] = []
    for col, pid in enumerate(by_attr["id"]):
        if known is not None and pid not in known:
            raise UnknownParcelColumn(f"column {col + 2}: unknown parcel id {pid!r}")
        token = by_attr["label"][col].strip()
        if token == "":
            continue
        try:
            value = LabelValue(token)
        except ValueError as exc:
            raise BadLabelToken(
                f"column {col + 2} (parcel {pid}): bad label token {token!r}"
            ) from exc
        records.append(
            LabelRecord(
                parcel_id=pid,
                annotator_id=annotator_id,
                value=value,
                round=round_no,
                timestamp="",
                provenance=provenance,
                comment=by_attr["comment"][col],
            )
        )
    return records
