import numpy as np
import pytest

from prefall.errors import ConfigError
from prefall.features import sequence_features
from prefall.ingest import Label, load_manifest, parse_keypoint_file
from prefall.synth import SynthSpec, angle_trajectories, corpus_specs, gen_corpus, gen_sequence


def test_nonfall_noise_zero_is_constant():
    seq, _ = gen_sequence(SynthSpec(seed=1, noise_stddev=0.0))
    th = sequence_features(seq).theta
    assert np.max(np.abs(th - th[0])) < 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_fall_hip_reaches_amplitude_at_impact(seed):
    spec = SynthSpec(seed=seed, label=Label.FALL, deviation_amplitude=45.0, noise_stddev=0.0,
                     base_jitter=0.0, standing_pose=False)
    seq, _ = gen_sequence(spec)
    fs = sequence_features(seq)
    F = spec.impact_frame
    assert abs(abs(fs.theta[F, 0]) - 45.0) < 1e-6
    assert abs(abs(fs.theta[F, 1]) - 45.0) < 1e-6
    # before onset, nothing has moved yet
    onset = F - round(spec.onset_lead_s * spec.fps)
    assert np.max(np.abs(fs.theta[:onset + 1])) < 1e-6


def test_fall_deviation_relative_to_posture():
    spec = SynthSpec(seed=5, label=Label.FALL, deviation_amplitude=30.0, noise_stddev=0.0)
    fs = sequence_features(gen_sequence(spec)[0])
    dev = fs.theta[spec.impact_frame] - fs.theta[0]
    assert np.allclose(np.abs(dev), 30.0, atol=1e-6)


@pytest.mark.parametrize("label", [Label.FALL, Label.NONFALL])
def test_generator_feature_inverse(label):
    spec = SynthSpec(seed=2, label=label, noise_stddev=2.0, sway_amplitude=3.0)
    fs = sequence_features(gen_sequence(spec)[0])
    assert np.max(np.abs(fs.theta - angle_trajectories(spec))) < 1e-6
    assert fs.valid.all()


def test_determinism(tmp_path):
    tmpl = SynthSpec(duration_s=2.0, impact_time_s=1.5, onset_lead_s=0.5)
    gen_corpus(tmp_path / "a", 3, 3, 11, tmpl)
    gen_corpus(tmp_path / "b", 3, 3, 11, tmpl)
    for f in sorted((tmp_path / "a").rglob("*.csv")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_empty_corpus(tmp_path):
    manifest, entries = gen_corpus(tmp_path, 0, 0)
    assert entries == []
    assert load_manifest(manifest) == []
    assert not (tmp_path / "keypoints").exists()


def test_corpus_is_ingest_compatible(tmp_path):
    manifest, entries = gen_corpus(tmp_path, 2, 3, base_seed=4)
    loaded = load_manifest(manifest)
    assert loaded == entries
    assert [e.label for e in loaded] == [Label.FALL] * 2 + [Label.NONFALL] * 3
    for e in loaded:
        seq = parse_keypoint_file(e.file, e)
        assert seq.n_joints == 25 and seq.n_frames == 73


def test_corpus_seeds_distinct():
    seeds = [s.seed for s in corpus_specs(20, 20, base_seed=0)]
    assert len(set(seeds)) == 40
    assert seeds != [s.seed for s in corpus_specs(20, 20, base_seed=1)]


def test_fall_sign_varies():
    signs = set()
    for spec in corpus_specs(20, 0, base_seed=0, template=SynthSpec(noise_stddev=0.0)):
        th = angle_trajectories(spec)
        signs.add(np.sign(th[spec.impact_frame, 0] - th[0, 0]))
    assert signs == {-1.0, 1.0}


@pytest.mark.parametrize(
    "kw",
    [
        dict(label=Label.FALL, onset_lead_s=3.0, impact_time_s=3.0),
        dict(label=Label.FALL, impact_time_s=5.0),
        dict(noise_stddev=-1.0),
        dict(fps=0.0),
        dict(deviation_amplitude=-5.0),
    ],
)
def test_invalid_specs(kw):
    with pytest.raises(ConfigError):
        gen_sequence(SynthSpec(**kw))
