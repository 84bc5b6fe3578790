import numpy as np
import pytest

from prefall.errors import (
    AnnotationError,
    ConfigError,
    FormatVersionError,
    MappingError,
    ParseError,
    StructureError,
)
from prefall.ingest import (
    JOINT_MAP_PRESETS,
    JointMap,
    Keypoint,
    Label,
    ManifestEntry,
    SkeletonFrame,
    SkeletonSequence,
    load_activity_map,
    load_manifest,
    map_joints,
    parse_keypoint_file,
    write_keypoint_file,
    write_manifest,
)
from prefall.synth import SynthSpec, gen_sequence

from conftest import write_text

HEADER = "frame,joint,x,y,conf\n"


def test_three_row_file(tmp_path):
    p = write_text(tmp_path / "a.csv", HEADER + "0,0,1.5,2.5,0.9\n0,1,3,4,\n1,0,5,6,1\n1,1,7,8,0\n")
    seq = parse_keypoint_file(p)
    assert seq.n_frames == 2 and seq.n_joints == 2
    assert seq.xy[0, 0].tolist() == [1.5, 2.5]
    assert np.isnan(seq.conf[0, 1])
    assert seq.frame(0).keypoints[1].effective_confidence == 1.0
    assert seq.sequence_id == "a" and seq.label is Label.NONFALL


def test_single_frame(tmp_path):
    p = write_text(tmp_path / "one.csv", HEADER + "0,0,1,2,\n0,1,3,4,\n0,2,5,6,\n")
    seq = parse_keypoint_file(p)
    assert seq.n_frames == 1 and seq.n_joints == 3


def test_out_of_order_frames(tmp_path):
    rows = "".join(f"{f},0,1,2,\n" for f in (0, 2, 1))
    p = write_text(tmp_path / "b.csv", HEADER + rows)
    with pytest.raises(StructureError, match=":4:"):
        parse_keypoint_file(p)


@pytest.mark.parametrize(
    "body, err, line",
    [
        ("0,0,1,2,\n0,0,3,4,\n", StructureError, 3),
        ("0,0,1,2,\n0,2,3,4,\n", StructureError, 3),
        ("0,0,x,2,\n", ParseError, 2),
        ("0,0,1,2,1.5\n", ParseError, 2),
        ("0,0,1,2\n", ParseError, 2),
        ("0,0,1,nan,\n", ParseError, 2),
        ("-1,0,1,2,\n", ParseError, 2),
    ],
)
def test_malformed_rows(tmp_path, body, err, line):
    p = write_text(tmp_path / "bad.csv", HEADER + body)
    with pytest.raises(err) as info:
        parse_keypoint_file(p)
    assert f":{line}" in str(info.value)


def test_joint_count_must_be_constant(tmp_path):
    p = write_text(tmp_path / "c.csv", HEADER + "0,0,1,2,\n0,1,1,2,\n1,0,1,2,\n")
    with pytest.raises(StructureError, match="expected 2"):
        parse_keypoint_file(p)


def test_bad_header(tmp_path):
    p = write_text(tmp_path / "d.csv", "frame,joint,x,y\n0,0,1,2\n")
    with pytest.raises(ParseError):
        parse_keypoint_file(p)


def test_newer_keypoint_version_refused(tmp_path):
    p = write_text(tmp_path / "e.csv", "# prefall-keypoints 2\n" + HEADER + "0,0,1,2,\n")
    with pytest.raises(FormatVersionError):
        parse_keypoint_file(p)


def test_synth_round_trip_exact(tmp_path):
    seq, entry = gen_sequence(SynthSpec(seed=3, label=Label.FALL, sequence_id="rt"))
    path = tmp_path / "rt.csv"
    write_keypoint_file(path, seq)
    back = parse_keypoint_file(path, entry)
    assert back == seq
    assert back.xy.tobytes() == seq.xy.tobytes()


def _manifest(tmp_path, rows, header="file,subject,activity,trial,label,fps,impact_frame"):
    for r in rows:
        name = r.split(",")[0]
        write_text(tmp_path / name, HEADER + "".join(f"{f},0,1,{f},\n" for f in range(60)))
    return write_text(tmp_path / "manifest.csv", header + "\n" + "\n".join(rows) + "\n")


def test_manifest_fall_and_nonfall(tmp_path):
    m = _manifest(tmp_path, ["s1.csv,1,1,1,fall,18,40", "s2.csv,1,7,1,,,"])
    entries = load_manifest(m)
    assert [e.label for e in entries] == [Label.FALL, Label.NONFALL]
    assert entries[0].impact_frame == 40 and entries[1].impact_frame is None
    assert entries[1].fps == 18.0
    assert entries[0].file == tmp_path / "s1.csv"


def test_manifest_unknown_activity(tmp_path):
    m = _manifest(tmp_path, ["s1.csv,1,99,1,,18,"])
    with pytest.raises(MappingError, match="99"):
        load_manifest(m)


def test_manifest_label_disagrees(tmp_path):
    m = _manifest(tmp_path, ["s1.csv,1,7,1,fall,18,10"])
    with pytest.raises(MappingError):
        load_manifest(m)


@pytest.mark.parametrize("row", ["s1.csv,1,1,1,fall,18,", "s1.csv,1,7,1,nonfall,18,10"])
def test_manifest_impact_coupling(tmp_path, row):
    m = _manifest(tmp_path, [row])
    with pytest.raises(AnnotationError):
        load_manifest(m)


def test_impact_outside_sequence(tmp_path):
    m = _manifest(tmp_path, ["s1.csv,1,1,1,fall,18,500"])
    entry = load_manifest(m)[0]
    with pytest.raises(AnnotationError):
        parse_keypoint_file(entry.file, entry)


def test_upfall_sized_manifest(tmp_path):
    """17 subjects x 11 activities x 3 trials = 561 entries, 255 falls."""
    amap = load_activity_map()
    rows = []
    for s in range(1, 18):
        for a in range(1, 12):
            for t in range(1, 4):
                impact = "40" if amap[str(a)] is Label.FALL else ""
                rows.append(f"S{s}A{a}T{t}.csv,{s},{a},{t},,18,{impact}")
    m = write_text(tmp_path / "manifest.csv", "file,subject,activity,trial,label,fps,impact_frame\n" + "\n".join(rows))
    entries = load_manifest(m)
    assert len(entries) == 561
    assert sum(e.label is Label.FALL for e in entries) == 255
    assert sum(e.label is Label.NONFALL for e in entries) == 306


def test_activity_map_bundled():
    amap = load_activity_map()
    assert {k for k, v in amap.items() if v is Label.FALL} == {"1", "2", "3", "4", "5"}
    assert len(amap) == 11


def test_manifest_round_trip(tmp_path):
    entries = [
        ManifestEntry(tmp_path / "a.csv", "1", "1", "1", Label.FALL, 18.0, 30),
        ManifestEntry(tmp_path / "b.csv", "2", "6", "3", Label.NONFALL, 30.0, None),
    ]
    write_manifest(tmp_path / "m.csv", entries)
    assert load_manifest(tmp_path / "m.csv") == entries


def test_newer_manifest_version_refused(tmp_path):
    m = write_text(tmp_path / "m.csv", "# prefall-manifest 9\nfile,subject,activity,trial,label,fps,impact_frame\n")
    with pytest.raises(FormatVersionError):
        load_manifest(m)


def _frame(n, conf=None):
    return SkeletonFrame(0, tuple(Keypoint(float(i), float(10 * i), conf) for i in range(n)))


def test_map_joints_body25_planted_values():
    sjf = map_joints(_frame(25), JOINT_MAP_PRESETS["body25"])
    assert [k.x for k in sjf.keypoints] == [0, 12, 9, 13, 10, 14, 11]
    assert [k.y for k in sjf.keypoints] == [0, 120, 90, 130, 100, 140, 110]
    assert all(sjf.validity)


def test_map_joints_coco17():
    sjf = map_joints(_frame(17), JointMap.for_skeleton(17))
    assert [k.x for k in sjf.keypoints] == [0, 11, 12, 13, 14, 15, 16]


def test_map_joints_identity_for_seven():
    sjf = map_joints(_frame(7), JointMap.for_skeleton(7))
    assert [k.x for k in sjf.keypoints] == list(range(7))


def test_map_joints_confidence_threshold():
    sjf = map_joints(_frame(25, conf=0.2), JOINT_MAP_PRESETS["body25"], conf_threshold=0.5)
    assert not any(sjf.validity)
    sjf = map_joints(_frame(25, conf=None), JOINT_MAP_PRESETS["body25"], conf_threshold=0.5)
    assert all(sjf.validity)


def test_map_joints_index_out_of_range():
    with pytest.raises(ConfigError):
        map_joints(_frame(10), JOINT_MAP_PRESETS["body25"])
    with pytest.raises(ConfigError):
        JointMap.for_skeleton(18)


def test_joint_map_file(tmp_path):
    p = write_text(tmp_path / "jm.txt", JOINT_MAP_PRESETS["coco17"].to_text())
    assert JointMap.load(p) == JOINT_MAP_PRESETS["coco17"]
    with pytest.raises(ConfigError):
        JointMap(0, 1, 1, 2, 3, 4, 5)


def test_sequence_invariants():
    with pytest.raises(StructureError):
        SkeletonSequence("x", [0, 0], np.zeros((2, 7, 2)), np.full((2, 7), np.nan))
    with pytest.raises(AnnotationError):
        SkeletonSequence("x", [0, 1], np.zeros((2, 7, 2)), np.full((2, 7), np.nan), label=Label.FALL)
    seq = SkeletonSequence("x", [0, 3], np.zeros((2, 7, 2)), np.full((2, 7), np.nan))
    with pytest.raises(ValueError):
        seq.xy[0, 0, 0] = 1.0
