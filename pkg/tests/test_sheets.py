import pytest

from vadtriage.domain import LabelValue
from vadtriage.errors import BadLabelToken, MalformedSheet, UnknownParcelColumn
from vadtriage.session.sheets import ATTRIBUTE_ROWS, export_sheet, import_sheet

from conftest import grid_dataset


@pytest.fixture
def ds():
    return grid_dataset(n=6, n_neighborhoods=2, seed=1)


def test_layout_columns_are_parcels(ds):
    ids = sorted(ds.parcels)[:3]
    text = export_sheet(ids, ds)
    lines = text.splitlines()
    assert len(lines) == len(ATTRIBUTE_ROWS)
    assert lines[0].split(",") == ["id"] + ids
    assert lines[1].startswith("kind,")
    assert lines[-2].startswith("label,")
    assert lines[-1].startswith("comment,")


def test_round_trip_with_awkward_comments(ds):
    ids = sorted(ds.parcels)[:4]
    labels = {ids[0]: "VAD", ids[1]: "NotVAD", ids[3]: "VAD"}
    comments = {
        ids[0]: 'roof caved, "unsafe", mow needed',
        ids[1]: "fine,\nreally",
        ids[3]: "",
    }
    text = export_sheet(ids, ds, labels=labels, comments=comments)
    records = import_sheet(text, annotator_id="ann1", round_no=2, known_ids=ids)
    assert [r.parcel_id for r in records] == [ids[0], ids[1], ids[3]]
    by_id = {r.parcel_id: r for r in records}
    assert by_id[ids[0]].value is LabelValue.VAD
    assert by_id[ids[0]].comment == 'roof caved, "unsafe", mow needed'
    assert by_id[ids[1]].comment == "fine,\nreally"
    assert all(r.round == 2 and r.annotator_id == "ann1" for r in records)


def test_blank_labels_skipped(ds):
    ids = sorted(ds.parcels)[:3]
    text = export_sheet(ids, ds)
    assert import_sheet(text, "ann1", 1) == []


def test_bad_label_token_names_the_column(ds):
    ids = sorted(ds.parcels)[:3]
    text = export_sheet(ids, ds, labels={ids[1]: "maybe"})
    with pytest.raises(BadLabelToken, match=ids[1]):
        import_sheet(text, "ann1", 1)


def test_unknown_parcel_column(ds):
    ids = sorted(ds.parcels)[:2]
    text = export_sheet(ids, ds, labels={ids[0]: "VAD"})
    with pytest.raises(UnknownParcelColumn):
        import_sheet(text, "ann1", 1, known_ids=[ids[1]])


def test_malformed_sheet_rejected(ds):
    ids = sorted(ds.parcels)[:2]
    text = export_sheet(ids, ds)
    truncated = "\n".join(text.splitlines()[:5]) + "\n"
    with pytest.raises(MalformedSheet):
        import_sheet(truncated, "ann1", 1)
    shuffled = text.splitlines()
    shuffled[0], shuffled[1] = shuffled[1], shuffled[0]
    with pytest.raises(MalformedSheet):
        import_sheet("\n".join(shuffled) + "\n", "ann1", 1)


def test_file_round_trip(ds, tmp_path):
    ids = sorted(ds.parcels)[:3]
    path = tmp_path / "sheet.csv"
    export_sheet(ids, ds, path=path, labels={ids[2]: "NotVAD"})
    records = import_sheet(path, "ann2", 1, known_ids=ids)
    assert len(records) == 1
    assert records[0].parcel_id == ids[2]
