"""Ranking file parsing/writing and run manifests."""

import hashlib
import json

import pytest

from coastrank.errors import RankingParseError, RejectedInputError
from coastrank.fileio import (
    RankingFileFormat,
    RunManifest,
    load_rankings,
    read_json,
    sha256_of,
    write_manifest,
    write_rankings,
)
from coastrank.perms import Permutation, RankingSample

from conftest import random_sample


def test_ordering_row_semantics(tmp_path):
    # "3 1 2" means: item 3 first, item 1 second, item 2 third
    path = tmp_path / "r.txt"
    path.write_text("3 1 2\n")
    s = load_rankings(path, format="ordering")
    assert len(s) == 1
    assert s.rankings[0].ranks == (1, 2, 0)


def test_ranks_row_identity(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("1 2 3\n")
    s = load_rankings(path, format="ranks")
    assert s.rankings[0] == Permutation.identity(3)


def test_ordering_vs_ranks_same_row_differ(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("2 3 1\n")
    as_ordering = load_rankings(path, format="ordering").rankings[0]
    as_ranks = load_rankings(path, format="ranks").rankings[0]
    assert as_ordering.ranks == (2, 0, 1)
    assert as_ranks.ranks == (1, 2, 0)


@pytest.mark.parametrize("fmt", ["ordering", "ranks"])
@pytest.mark.parametrize("delim", [",", "whitespace"])
@pytest.mark.parametrize("labeled", [False, True])
def test_round_trip(tmp_path, rng, fmt, delim, labeled):
    base = random_sample(rng, 5, 20)
    labels = tuple(int(v) for v in rng.integers(0, 3, size=20)) if labeled else None
    sample = RankingSample(base.rankings, labels)
    path = tmp_path / "sample.txt"
    write_rankings(sample, path, format=fmt, delimiter=delim)
    back = load_rankings(path, format=fmt)
    assert back.rankings == sample.rankings
    assert back.labels == sample.labels


def test_string_labels_round_trip(tmp_path):
    sample = RankingSample(
        (Permutation.identity(3), Permutation((1, 0, 2))), labels=("good", "bad")
    )
    path = tmp_path / "s.csv"
    write_rankings(sample, path)
    back = load_rankings(path)
    assert back.labels == ("good", "bad")


def test_duplicate_item_reports_row(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("1 2 3\n1 1 3\n")
    with pytest.raises(RankingParseError) as err:
        load_rankings(path)
    assert err.value.row == 2
    assert "row 2" in str(err.value)


def test_out_of_range_item_rejected(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("0 1 2\n")
    with pytest.raises(RankingParseError) as err:
        load_rankings(path)
    assert err.value.row == 1


def test_inconsistent_width_reports_row(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("2 1 3\n1 2\n2 3 1\n")
    with pytest.raises(RankingParseError) as err:
        load_rankings(path)
    assert err.value.row == 2


def test_non_integer_field_reports_row(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("1 2 3\n1 x 3\n")
    with pytest.raises(RankingParseError) as err:
        load_rankings(path)
    assert err.value.row == 2 and "'x'" in str(err.value)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("\n\n")
    with pytest.raises(RankingParseError):
        load_rankings(path)


def test_header_only_rejected(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("item_1,item_2,label\n")
    with pytest.raises(RankingParseError):
        load_rankings(path)


def test_header_without_label_column(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("item_1,item_2,item_3\n3,1,2\n")
    s = load_rankings(path)
    assert s.labels is None
    assert len(s) == 1


def test_delimiter_autodetect(tmp_path):
    comma = tmp_path / "c.txt"
    comma.write_text("2,1,3\n")
    space = tmp_path / "w.txt"
    space.write_text("2 1 3\n")
    assert load_rankings(comma).rankings == load_rankings(space).rankings


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("\n1 2 3\n\n3 2 1\n\n")
    assert len(load_rankings(path)) == 2


def test_bad_format_name(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(RejectedInputError):
        load_rankings(path, format="sideways")
    assert RankingFileFormat("ordering") is RankingFileFormat.ORDERING


def test_sha256_of(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"hello\n")
    assert sha256_of(path) == hashlib.sha256(b"hello\n").hexdigest()


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest(
        command="fit",
        argv=("fit", "--input", "a.csv"),
        seed=7,
        config={"epsilon": 0.25, "rule": "min-distortion"},
        inputs={"rankings": "ab" * 32},
        outputs={"tree": "cd" * 32},
        wall_times={"total": 0.125},
    )
    path = tmp_path / "run.manifest.json"
    write_manifest(manifest, path)
    doc = read_json(path)
    assert RunManifest.from_json_obj(doc) == manifest
    # the manifest file itself is valid JSON with the documented keys
    raw = json.loads(path.read_text())
    assert set(raw) == {
        "command", "argv", "seed", "config", "inputs", "outputs", "wall_times"
    }
    with pytest.raises(RejectedInputError):
        RunManifest.from_json_obj({"command": "fit"})
