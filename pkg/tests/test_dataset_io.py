import json

import numpy as np
import pytest

from handmotion.datagen import generate_corpus
from handmotion.dataset_io import read_dataset, read_motion_file, write_dataset
from handmotion.errors import ChecksumError, FormatError
from handmotion.motion import flatten


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(50, seed=77)


def test_roundtrip_field_by_field(tmp_path, corpus):
    write_dataset(corpus, tmp_path)
    back = read_dataset(tmp_path)
    assert len(back) == len(corpus)
    for a, b in zip(corpus, back):
        assert a.id == b.id
        assert a.caption_high == b.caption_high
        assert a.caption_fine == b.caption_fine
        assert a.motion.fps == b.motion.fps
        assert np.array_equal(flatten(a.motion), flatten(b.motion))
        assert np.array_equal(a.visibility, b.visibility)
        assert a.filter_log == b.filter_log


def test_roundtrip_is_nan_free_and_stable(tmp_path, corpus):
    d1 = tmp_path / "one"
    d2 = tmp_path / "two"
    write_dataset(corpus, d1)
    write_dataset(read_dataset(d1), d2)
    for rec in read_dataset(d2):
        assert np.all(np.isfinite(flatten(rec.motion)))
    for f in sorted(d1.iterdir()):
        assert f.read_bytes() == (d2 / f.name).read_bytes()


def test_manifest_line_count_matches_records(tmp_path, corpus):
    manifest = write_dataset(corpus, tmp_path)
    lines = [l for l in manifest.read_text().splitlines() if l.strip()]
    assert len(lines) == len(corpus)
    entry = json.loads(lines[0])
    assert set(entry) >= {
        "id",
        "file",
        "num_frames",
        "fps",
        "caption_high",
        "caption_fine",
        "filter_log",
    }


def test_corrupted_payload_fails_checksum_for_that_id_only(tmp_path, corpus):
    write_dataset(corpus[:5], tmp_path)
    victim = corpus[2].id
    path = tmp_path / f"{victim}.hmw"
    blob = bytearray(path.read_bytes())
    blob[40] ^= 0xFF  # flip one payload byte
    path.write_bytes(bytes(blob))

    with pytest.raises(ChecksumError) as exc:
        read_dataset(tmp_path)
    assert victim in str(exc.value)

    # every other record file still reads cleanly on its own
    for rec in corpus[:5]:
        if rec.id == victim:
            continue
        rows = read_motion_file(tmp_path / f"{rec.id}.hmw")
        assert rows.shape[0] == rec.motion.frames


def test_bad_magic_rejected(tmp_path, corpus):
    write_dataset(corpus[:1], tmp_path)
    path = tmp_path / f"{corpus[0].id}.hmw"
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="magic"):
        read_motion_file(path)


def test_truncation_rejected(tmp_path, corpus):
    write_dataset(corpus[:1], tmp_path)
    path = tmp_path / f"{corpus[0].id}.hmw"
    blob = path.read_bytes()
    path.write_bytes(blob[:-7])
    with pytest.raises(FormatError):
        read_motion_file(path)


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(FormatError, match="manifest"):
        read_dataset(tmp_path)
