import json

import pytest

from conftest import arrays_equal, copy_tree
from sdsa.errors import FormatError
from sdsa.model import AwarenessLevel
from sdsa.pipeline.persist import FORMAT_VERSION, load_bundle, save_bundle


@pytest.fixture(scope="module")
def bundle3(smoke_run):
    return load_bundle(smoke_run / "b3")


def test_round_trip_bit_exact(bundle3, tmp_path):
    save_bundle(bundle3, tmp_path / "copy")
    again = load_bundle(tmp_path / "copy")
    assert again.awareness_level == AwarenessLevel.LEVEL3
    assert again.features == bundle3.features
    assert again.history == bundle3.history and again.provenance == bundle3.provenance
    for tag, e in bundle3.entries.items():
        f = again.entries[tag]
        assert f.params.names == e.params.names
        assert arrays_equal(f.params.arrays, e.params.arrays)
        assert f.params.region_tag == tag == e.params.region_tag
        assert f.norm == e.norm
    assert list(again.entries) == list(bundle3.entries) == ["illinois", "iowa", "indiana"]


def test_resave_is_byte_identical(bundle3, tmp_path, smoke_run):
    save_bundle(bundle3, tmp_path / "copy")
    for p in (smoke_run / "b3").iterdir():
        assert (tmp_path / "copy" / p.name).read_bytes() == p.read_bytes()


def test_missing_bundle(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_bundle(tmp_path / "nothing")


def test_version_mismatch_names_both(smoke_run, tmp_path):
    d = copy_tree(smoke_run / "b1", tmp_path / "b")
    doc = json.loads((d / "bundle.json").read_text())
    doc["format_version"] = 99
    (d / "bundle.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError) as e:
        load_bundle(d)
    assert "99" in str(e.value) and str(FORMAT_VERSION) in str(e.value)


@pytest.mark.parametrize("target,edit", [
    ("bundle.json", lambda t: t[: len(t) // 2]),
    ("params_pooled.json", lambda t: t.replace('"att.W_a"', '"att.W_x"')),
    ("params_pooled.json", lambda t: "{}"),
    ("history.json", lambda t: "not json"),
    ("bundle.json", lambda t: t.replace('"entry_order": [', '"entry_order": ["extra", ')),
])
def test_corruption_is_a_format_error(smoke_run, tmp_path, target, edit):
    d = copy_tree(smoke_run / "b1", tmp_path / "b")
    (d / target).write_text(edit((d / target).read_text()))
    with pytest.raises(FormatError):
        load_bundle(d)


def test_missing_params_file(smoke_run, tmp_path):
    d = copy_tree(smoke_run / "b3", tmp_path / "b")
    (d / "params_iowa.json").unlink()
    with pytest.raises(FormatError):
        load_bundle(d)


def test_bad_shape_is_a_format_error(smoke_run, tmp_path):
    d = copy_tree(smoke_run / "b1", tmp_path / "b")
    doc = json.loads((d / "params_pooled.json").read_text())
    doc["arrays"]["flux.b_f"] = {"shape": [3], "data": [0.0, 0.0, 0.0]}
    (d / "params_pooled.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_bundle(d)
