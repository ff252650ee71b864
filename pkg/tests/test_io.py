import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ivmask import io as ivio
from ivmask.dwsl.networks import DiscriminatorParams, GeneratorParams
from ivmask.dwsl.train import HistoryRow
from ivmask.errors import (
    BadMagic,
    BadVersion,
    DuplicateId,
    MalformedLine,
    RecordIOError,
    SizeMismatch,
    TruncatedFile,
    UnsupportedFormat,
    ValueOutOfRange,
)
from ivmask.heatmap import BBox, Heatmap, ImageBuffer
from ivmask.records import AnnotationRecord
from ivmask.synth import build_mixed_dataset


def rec(i, **kw):
    return AnnotationRecord(f"r{i}", "pick the red disk", "human", "e", f"images/r{i}.ppm", f"labels/r{i}.ivmh", **kw)


def test_manifest_roundtrip(tmp_path):
    recs = [rec(0), rec(1, bbox=BBox(1, 2, 3, 4)), rec(2, meta={"extra": [1, 2], "note": "ü"})]
    p = tmp_path / "m.jsonl"
    ivio.write_manifest(p, recs)
    back = ivio.read_manifest(p)
    assert back == recs
    ivio.write_manifest(tmp_path / "again.jsonl", back)
    assert (tmp_path / "again.jsonl").read_bytes() == p.read_bytes()


def test_empty_manifest(tmp_path):
    p = tmp_path / "e.jsonl"
    ivio.write_manifest(p, [])
    assert p.read_bytes() == b"" and ivio.read_manifest(p) == []


def test_manifest_errors(tmp_path):
    with pytest.raises(DuplicateId):
        ivio.write_manifest(tmp_path / "d.jsonl", [rec(0), rec(0)])
    p = tmp_path / "bad.jsonl"
    good = ivio.record_to_json(rec(0))
    p.write_text(good + "\n\n" + "{not json\n")
    with pytest.raises(MalformedLine) as err:
        ivio.read_manifest(p)
    assert err.value.line_no == 3
    p.write_text(good + "\n" + good + "\n")
    with pytest.raises(DuplicateId):
        ivio.read_manifest(p)
    p.write_text('{"id": "x"}\n')
    with pytest.raises(MalformedLine):
        ivio.read_manifest(p)
    with pytest.raises(ValueError):
        ivio.record_to_json(rec(0, meta={"split": "o"}))


def test_pnm_format():
    white = ImageBuffer(np.full((1, 1, 3), 255, dtype=np.uint8))
    assert ivio.encode_pnm(white) == b"P6\n1 1\n255\n\xff\xff\xff"
    gray = ImageBuffer(np.array([[[7], [9]]], dtype=np.uint8))
    assert ivio.encode_pnm(gray) == b"P5\n2 1\n255\n\x07\x09"
    assert ivio.decode_pnm(b"P5 # c\n2 # w\n1\n255\n\x07\x09") == gray
    with pytest.raises(UnsupportedFormat):
        ivio.decode_pnm(b"P6\n1 1\n65535\n" + b"\0" * 6)
    with pytest.raises(UnsupportedFormat):
        ivio.decode_pnm(b"P3\n1 1\n255\n0 0 0")
    with pytest.raises(TruncatedFile):
        ivio.decode_pnm(b"P6\n2 2\n255\n\0\0\0")
    with pytest.raises(TruncatedFile):
        ivio.decode_pnm(b"P6\n2 2")


@given(arrays(np.uint8, st.tuples(st.integers(1, 16), st.integers(1, 16), st.sampled_from([1, 3]))))
def test_pnm_roundtrip(px):
    img = ImageBuffer(px)
    data = ivio.encode_pnm(img)
    assert ivio.decode_pnm(data) == img
    assert ivio.encode_pnm(ivio.decode_pnm(data)) == data


def test_ivmh_layout():
    data = ivio.encode_ivmh(Heatmap(np.full((2, 2), 0.5)))
    assert len(data) == 29
    assert data[:5] == b"IVMH\x01" and struct.unpack("<II", data[5:13]) == (2, 2)
    assert struct.unpack("<4f", data[13:]) == (0.5,) * 4


def test_ivmh_errors():
    good = ivio.encode_ivmh(Heatmap(np.full((2, 3), 0.25)))
    with pytest.raises(BadMagic):
        ivio.decode_ivmh(b"XXXX" + good[4:])
    with pytest.raises(BadVersion):
        ivio.decode_ivmh(good[:4] + b"\x02" + good[5:])
    with pytest.raises(SizeMismatch):
        ivio.decode_ivmh(good[:-4])
    with pytest.raises(TruncatedFile):
        ivio.decode_ivmh(good[:7])
    with pytest.raises(ValueOutOfRange):
        ivio.decode_ivmh(good[:13] + struct.pack("<6f", 0, 0, 0, 0, 0, 1.5))


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(0, 1)))
def test_ivmh_roundtrip(v):
    back = ivio.decode_ivmh(ivio.encode_ivmh(Heatmap(v)))
    assert back.values.shape == v.shape
    assert np.max(np.abs(back.values - v)) <= 6e-8


def test_params_roundtrip(tmp_path, rng):
    g = GeneratorParams.init(rng, 7)
    d = DiscriminatorParams.init(rng, 5)
    ivio.save_params(tmp_path / "g.npy", g)
    ivio.save_params(tmp_path / "d.npy", d)
    g2, d2 = ivio.load_generator(tmp_path / "g.npy"), ivio.load_discriminator(tmp_path / "d.npy")
    assert g2.hidden == 7 and np.array_equal(g2.flat, g.flat)
    assert d2.hidden == 5 and np.array_equal(d2.flat, d.flat)
    with pytest.raises(ValueError):
        ivio.load_generator(tmp_path / "d.npy")


def test_history_csv():
    rows = [HistoryRow(0, 1, 0.1, 0.5, float("nan")), HistoryRow(1, 2, 1 / 3, 1.0, 0.25)]
    text = ivio.history_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "step,stage,loss,mean_weight_e,mean_weight_o"
    assert float(lines[2].split(",")[2]) == 1 / 3


def test_dataset_roundtrip(tmp_path):
    ds = build_mixed_dataset(2, n_e=2, n_o=5, corruption_rate=0.6)
    path = ivio.write_dataset(tmp_path, "o.jsonl", ds.mixed)
    back = ivio.load_dataset(path)
    for a, b in zip(ds.mixed, back):
        assert a.id == b.id and a.image == b.image and a.meta["is_clean"] == b.meta["is_clean"]
        assert np.max(np.abs(a.heatmap.values - b.heatmap.values)) <= 6e-8
        assert b.ground_truth == a.ground_truth
    (tmp_path / back[0].image_path).unlink()
    with pytest.raises(RecordIOError) as err:
        ivio.load_dataset(path)
    assert err.value.record_id == back[0].id


def labelled(i, v, source):
    return AnnotationRecord(f"s{i}", "x", source, "o", heatmap=Heatmap(v))


def test_dataset_stats_examples():
    zeros = [labelled(i, np.zeros((4, 5)), "a") for i in range(3)]
    s = ivio.dataset_stats(zeros)
    assert s.histograms["a"].tolist() == [3] + [0] * 9 and s.fraction_below == 1.0
    recs = []
    for i, k in enumerate([5, 15, 95]):
        v = np.zeros(100)
        v[:k] = 1.0
        recs.append(labelled(i, v.reshape(10, 10), "b"))
    recs.append(labelled(9, np.ones((10, 10)), "c"))
    s = ivio.dataset_stats(recs)
    assert np.flatnonzero(s.histograms["b"]).tolist() == [0, 1, 9]
    assert s.histograms["c"].tolist()[-1] == 1
    assert s.n_records == sum(h.sum() for h in s.histograms.values())
    assert s.fraction_below == 0.5
    assert s.lines()[1] == "fraction_below_0.4=0.5000"


def test_dataset_stats_boundary_is_exact():
    v = np.zeros(10)
    v[:4] = 1.0
    s = ivio.dataset_stats([labelled(0, v.reshape(2, 5), "a")])
    assert s.n_below == 0  # ratio 0.4 is not below 0.4
    with pytest.raises(RecordIOError):
        ivio.dataset_stats([AnnotationRecord("z", "x", "a", "o")])
