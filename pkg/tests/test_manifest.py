import pytest

from res2spoof.errors import DataError
from res2spoof.manifest import check_disjoint, read_manifest


def touch(root, *names):
    for n in names:
        p = root / n
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(b"")


def test_three_column_layout(tmp_path):
    touch(tmp_path, "a/u1.wav", "u2.wav")
    (tmp_path / "m.lst").write_text("# header\nu1 a/u1.wav bonafide\nu2 u2.wav spoof A03\nu3 u2.wav\n")
    entries = read_manifest(tmp_path / "m.lst")
    assert [(e.utt_id, e.label, e.attack) for e in entries] == [
        ("u1", "bonafide", "-"), ("u2", "spoof", "A03"), ("u3", None, "-")]
    assert entries[0].path == tmp_path / "a" / "u1.wav"


def test_asvspoof_five_column_layout(tmp_path):
    touch(tmp_path, "LA_T_1.wav", "wav/LA_T_2.wav", "flac/LA_T_3.flac")
    (tmp_path / "proto.txt").write_text(
        "LA_0079 LA_T_1 - - bonafide\nLA_0079 LA_T_2 - A01 spoof\nLA_0080 LA_T_3 - A02 spoof\n")
    entries = read_manifest(tmp_path / "proto.txt")
    assert [(e.utt_id, e.label, e.attack) for e in entries] == [
        ("LA_T_1", "bonafide", "-"), ("LA_T_2", "spoof", "A01"), ("LA_T_3", "spoof", "A02")]
    assert entries[1].path == tmp_path / "wav" / "LA_T_2.wav"
    assert entries[2].path.suffix == ".flac"


def test_audio_root_override(tmp_path):
    touch(tmp_path, "audio/x.wav")
    (tmp_path / "m.lst").write_text("x x.wav\n")
    assert read_manifest(tmp_path / "m.lst", tmp_path / "audio")[0].path == tmp_path / "audio" / "x.wav"


def test_duplicate_ids(tmp_path):
    touch(tmp_path, "a.wav")
    (tmp_path / "m.lst").write_text("u a.wav\nu a.wav\n")
    with pytest.raises(DataError, match="m.lst:2: duplicate"):
        read_manifest(tmp_path / "m.lst")


def test_missing_files_listed(tmp_path):
    (tmp_path / "m.lst").write_text("u1 nope.wav\nu2 gone.wav\n")
    with pytest.raises(DataError, match="2 audio files missing: u1 u2"):
        read_manifest(tmp_path / "m.lst")
    assert len(read_manifest(tmp_path / "m.lst", check_files=False)) == 2


@pytest.mark.parametrize("line", ["lonely", "u a.wav fake", "a b c d e f"])
def test_bad_lines(tmp_path, line):
    (tmp_path / "m.lst").write_text(line + "\n")
    with pytest.raises(DataError, match="m.lst:1"):
        read_manifest(tmp_path / "m.lst", check_files=False)


def test_partitions_disjoint(tmp_path):
    (tmp_path / "a.lst").write_text("u1 x.wav\nu2 x.wav\n")
    (tmp_path / "b.lst").write_text("u3 x.wav\nu2 x.wav\n")
    a = read_manifest(tmp_path / "a.lst", check_files=False)
    b = read_manifest(tmp_path / "b.lst", check_files=False)
    check_disjoint(a, a[:0])
    with pytest.raises(DataError, match="share utterances: u2"):
        check_disjoint(a, b)
