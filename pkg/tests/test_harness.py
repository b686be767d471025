"""Harness tests: config parsing, checkpoint persistence, synthetic
corpus, stage ordering, mid-run resume, CLI plumbing, and the rule that
training code never reads the hidden 3D files."""

import builtins
import io
import json
import pathlib

import numpy as np
import pytest

from motionlift import ndgrad as ng
from motionlift.harness import cli
from motionlift.harness import pipeline as pl
from motionlift.harness import synthetic as syn
from motionlift.harness.checkpoint import (CheckpointError, load_checkpoint,
                                           pack_rng_state, save_checkpoint,
                                           unpack_rng_state)
from motionlift.harness.config import (Config, load_config, paper_profile,
                                       parse_config, save_config,
                                       worker_count)
from motionlift.losses import loss_ori
from motionlift.motion import decompose, default_skeleton


def tiny_config(**kw):
    base = dict(
        n_sequences=8, frames=16, batch_size=8,
        width=16, code_dim=16, n_levels=2, codebook_size=8,
        prior_width=16, prior_code_dim=16, prior_codebook_size=8,
        steps_prior=4, steps_mlrq_pretrain=4, steps_mlrq_finetune=2,
        steps_masked=4, steps_residual=4,
        masked_width=16, masked_heads=2, masked_blocks=1,
        text_width=16, fx_width=8, fx_steps=4,
        eval_prompts=2, eval_repeats=2, div_pairs=2,
        n_rot=2, gen_steps=2,
    )
    base.update(kw)
    return Config(**base)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    cfg = tiny_config()
    corpus = syn.generate_corpus(cfg.n_sequences, cfg.seed, cfg.frames,
                                 cfg.fps)
    syn.write_corpus(corpus, d, cfg.fps)
    return d


@pytest.fixture(scope="module")
def trained(corpus_dir, tmp_path_factory):
    """Tiny end-to-end training run shared by the pipeline tests."""
    d = tmp_path_factory.mktemp("ckpts")
    cfg = tiny_config()
    pl.train_prior(cfg, corpus_dir, d / "prior.ckpt", d / "prior.csv")
    pl.train_mlrq(cfg, corpus_dir, d / "prior.ckpt", d / "mlrq.ckpt",
                  d / "mlrq.csv")
    pl.train_masked(cfg, corpus_dir, d / "mlrq.ckpt", d / "masked.ckpt")
    pl.train_residual(cfg, corpus_dir, d / "mlrq.ckpt", d / "masked.ckpt",
                      d / "residual.ckpt")
    return cfg, d


# ---------------------------------------------------------------------------
# config


def test_config_text_roundtrip():
    cfg = Config(seed=3, width=24, lr_pretrain=5e-4, share_encoder=False,
                 representation="joint")
    assert parse_config(cfg.to_text()) == cfg


def test_config_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("widht = 10\n")


def test_config_comments_and_blanks():
    cfg = parse_config("# comment\n\nseed = 7  # trailing\n")
    assert cfg.seed == 7


def test_config_bad_values():
    with pytest.raises(ValueError):
        parse_config("seed\n")
    with pytest.raises(ValueError, match="bool"):
        parse_config("disable_rec = maybe\n")
    with pytest.raises(ValueError):
        Config(rotation_mode="pitch")
    with pytest.raises(ValueError):
        Config(representation="voxels")


def test_config_file_roundtrip(tmp_path):
    cfg = Config(seed=11, beta=1.5)
    save_config(cfg, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == cfg


def test_paper_profile_is_larger():
    desk, paper = Config(), paper_profile()
    assert paper.width > desk.width
    assert paper.steps_mlrq_pretrain > desk.steps_mlrq_pretrain


def test_worker_count(monkeypatch):
    monkeypatch.delenv("F3D_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("F3D_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("F3D_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("F3D_THREADS", "lots")
    with pytest.raises(ValueError):
        worker_count()


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"b": rng.normal(size=(3, 4)), "a.x": rng.normal(size=7),
              "scalar": np.array(2.5)}
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, arrays, "seed = 1\n")
    loaded, cfg_text = load_checkpoint(p)
    assert cfg_text == "seed = 1\n"
    assert sorted(loaded) == sorted(arrays)
    for k in arrays:
        got = loaded[k].reshape(np.shape(arrays[k]))
        np.testing.assert_array_equal(got, arrays[k])


def test_checkpoint_bytes_deterministic(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3)}
    save_checkpoint(tmp_path / "a.ckpt", arrays, "x")
    save_checkpoint(tmp_path / "b.ckpt", dict(reversed(arrays.items())), "x")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_tamper_detected(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {"w": np.ones(4)}, "")
    raw = bytearray(p.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_checkpoint_truncation_detected(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {"w": np.ones(4)}, "")
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {"w": np.ones(4)}, "")
    raw = bytearray(p.read_bytes())
    raw[:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_rng_state_pack_roundtrip():
    vals = np.array([0, 1, 2**63, 2**64 - 1], dtype=np.uint64)
    assert (unpack_rng_state(pack_rng_state(vals)) == vals).all()


# ---------------------------------------------------------------------------
# synthetic corpus


def test_corpus_deterministic(tmp_path):
    a = syn.generate_corpus(8, seed=5, frames=16)
    b = syn.generate_corpus(8, seed=5, frames=16)
    for (ja, ca), (jb, cb) in zip(a, b):
        np.testing.assert_array_equal(ja, jb)
        assert ca == cb


def test_corpus_write_bytes_deterministic(tmp_path):
    syn.write_corpus(syn.generate_corpus(8, seed=5, frames=16), tmp_path / "a")
    syn.write_corpus(syn.generate_corpus(8, seed=5, frames=16), tmp_path / "b")
    for pa in sorted((tmp_path / "a").iterdir()):
        pb = tmp_path / "b" / pa.name
        assert pa.read_bytes() == pb.read_bytes()


def test_corpus_too_small():
    with pytest.raises(ValueError, match="at least 8"):
        syn.generate_corpus(4, seed=0)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown family"):
        syn.generate_sequence("moonwalk", np.random.default_rng(0))


def test_corpus_orientation_penalty_zero(corpus_dir):
    sk = default_skeleton()
    for joints, _, fps in syn.read_corpus_3d(corpus_dir):
        m = decompose(joints, sk, fps)
        pen, _ = loss_ori(ng.tensor(m.limbs[None]), sk)
        assert float(pen.data) < 1e-6


def test_corpus_readers(corpus_dir):
    two = syn.read_corpus_2d(corpus_dir)
    three = syn.read_corpus_3d(corpus_dir)
    caps = syn.read_captions(corpus_dir)
    assert len(two) == len(three) == len(caps) == 8
    assert two[0][0].shape[-1] == 2 and three[0][0].shape[-1] == 3
    # the 2D files are exactly the camera projection of the 3D files
    np.testing.assert_allclose(two[3][0], three[3][0][..., :2], atol=1e-12)


def test_captions_cycle_families(corpus_dir):
    caps = syn.read_captions(corpus_dir)
    texts = [caps[f"seq_{i:04d}"] for i in range(8)]
    assert "walks forward" in texts[0]
    assert texts[0] != texts[1]


# ---------------------------------------------------------------------------
# stage ordering and 3D access audit


def test_stage_order_errors(corpus_dir, tmp_path):
    cfg = tiny_config()
    with pytest.raises(pl.StageOrderError, match="prior"):
        pl.train_mlrq(cfg, corpus_dir, tmp_path / "missing.ckpt",
                      tmp_path / "out.ckpt")
    with pytest.raises(pl.StageOrderError, match="mlrq"):
        pl.train_masked(cfg, corpus_dir, tmp_path / "missing.ckpt",
                        tmp_path / "out.ckpt")
    with pytest.raises(pl.StageOrderError, match="mlrq"):
        pl.lift_file(cfg, tmp_path / "missing.ckpt",
                     corpus_dir / "seq_0000.2d.json", tmp_path / "o.json")
    with pytest.raises(pl.StageOrderError, match="mlrq"):
        pl.generate_motion(cfg, tmp_path / "missing.ckpt",
                           tmp_path / "missing2.ckpt", None, "walk", 0)


class _Audit:
    """open() wrapper that fails the test on any .3d.json read."""

    def __init__(self):
        self.real_open = builtins.open

    def __call__(self, file, *a, **kw):
        if str(file).endswith(".3d.json"):
            raise AssertionError(f"training path opened 3D file {file}")
        return self.real_open(file, *a, **kw)


def test_training_never_reads_3d(corpus_dir, tmp_path, monkeypatch):
    cfg = tiny_config()
    audit = _Audit()
    monkeypatch.setattr(builtins, "open", audit)
    pl.train_prior(cfg, corpus_dir, tmp_path / "prior.ckpt")
    pl.train_mlrq(cfg, corpus_dir, tmp_path / "prior.ckpt",
                  tmp_path / "mlrq.ckpt")
    pl.train_masked(cfg, corpus_dir, tmp_path / "mlrq.ckpt",
                    tmp_path / "masked.ckpt")
    pl.train_residual(cfg, corpus_dir, tmp_path / "mlrq.ckpt",
                      tmp_path / "masked.ckpt", tmp_path / "residual.ckpt")
    pl.lift_file(cfg, tmp_path / "mlrq.ckpt",
                 corpus_dir / "seq_0000.2d.json", tmp_path / "lifted.json")
    pl.generate_motion(cfg, tmp_path / "mlrq.ckpt", tmp_path / "masked.ckpt",
                       tmp_path / "residual.ckpt", "a person walks", 0)


# ---------------------------------------------------------------------------
# resume and loss-log shape


def test_mlrq_resume_bitwise(corpus_dir, trained, tmp_path):
    cfg, d = trained
    full = tmp_path / "full.ckpt"
    half = tmp_path / "half.ckpt"
    resumed = tmp_path / "resumed.ckpt"
    pl.train_mlrq(cfg, corpus_dir, d / "prior.ckpt", full)
    pl.train_mlrq(cfg, corpus_dir, d / "prior.ckpt", half, stop_after=3)
    pl.train_mlrq(cfg, corpus_dir, d / "prior.ckpt", resumed,
                  resume_from=half)
    assert full.read_bytes() == resumed.read_bytes()


def test_loss_log_columns(trained):
    cfg, d = trained
    with open(d / "mlrq.csv", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        first = fh.readline().strip().split(",")
    assert header == ["step", "l2d", "lrec", "lori", "lfeat", "lcommit",
                      "total"]
    # linearity: total equals the weighted sum of the parts
    step, l2d, lrec, lori, lfeat, lcommit, total = map(float, first)
    expect = (l2d + cfg.lambda1 * lrec + cfg.lambda2 * lori
              + cfg.lambda3 * lfeat + cfg.beta * lcommit)
    assert abs(total - expect) < 1e-6 * max(1.0, abs(total))


def test_lift_and_generate_outputs(trained, corpus_dir, tmp_path):
    cfg, d = trained
    info = pl.lift_file(cfg, d / "mlrq.ckpt",
                        corpus_dir / "seq_0001.2d.json",
                        tmp_path / "lifted.json")
    assert info["reprojection_error"] >= 0
    with open(tmp_path / "lifted.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    assert np.asarray(doc["frames"]).shape == (cfg.frames, 22, 3)

    joints, meta = pl.generate_motion(cfg, d / "mlrq.ckpt",
                                      d / "masked.ckpt", d / "residual.ckpt",
                                      "a person walks forward slowly", 0)
    assert joints.shape == (cfg.frames, 22, 3)
    assert np.isfinite(joints).all()
    assert meta["prompt"].startswith("a person")


def test_generate_deterministic(trained):
    cfg, d = trained
    args = (cfg, d / "mlrq.ckpt", d / "masked.ckpt", d / "residual.ckpt",
            "a person jumps", 3)
    a, _ = pl.generate_motion(*args)
    b, _ = pl.generate_motion(*args)
    np.testing.assert_array_equal(a, b)


def test_fid_proxy_finite(trained, corpus_dir):
    cfg, d = trained
    model = pl.load_mlrq(cfg, d / "mlrq.ckpt")
    val = pl.fid_proxy(cfg, model, corpus_dir)
    assert np.isfinite(val) and val >= 0


# ---------------------------------------------------------------------------
# report


def test_run_eval_outputs(trained, corpus_dir, tmp_path):
    from motionlift.harness.report import run_eval
    cfg, d = trained
    paths = run_eval(cfg, corpus_dir, d / "mlrq.ckpt", d / "masked.ckpt",
                     d / "residual.ckpt", tmp_path / "report",
                     [d / "mlrq.csv"])
    names = {pathlib.Path(p).name for p in paths}
    assert {"report.txt", "report.csv"} <= names
    assert "losses.png" in names
    text = (tmp_path / "report" / "report.txt").read_text()
    for key in ("reprojection_ratio", "mpjpe_lift", "fid_gen", "qm_score",
                "mmodality", "r_precision_top1"):
        assert key in text


def test_run_eval_deterministic(trained, corpus_dir, tmp_path):
    from motionlift.harness.report import run_eval
    cfg, d = trained
    for sub in ("r1", "r2"):
        run_eval(cfg, corpus_dir, d / "mlrq.ckpt", None, None,
                 tmp_path / sub)
    for name in ("report.txt", "report.csv"):
        assert ((tmp_path / "r1" / name).read_bytes()
                == (tmp_path / "r2" / name).read_bytes())


# ---------------------------------------------------------------------------
# CLI


def test_cli_gen_data_and_qm(tmp_path, capsys):
    cfg = tiny_config()
    cfg_path = tmp_path / "c.cfg"
    save_config(cfg, cfg_path)
    rc = cli.main(["gen-data", "--config", str(cfg_path),
                   "--out", str(tmp_path / "data")])
    assert rc == 0
    assert (tmp_path / "data" / "seq_0007.2d.json").exists()

    rc = cli.main(["qm", "0.045", "1.241"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "5.251" in out

    rc = cli.main(["qm", "0", "1.0"])
    assert rc == 0
    assert "inf" in capsys.readouterr().out


def test_cli_gradcheck(capsys):
    rc = cli.main(["gradcheck", "--seeds", "1"])
    assert rc == 0
    assert "all ops pass" in capsys.readouterr().out


def test_cli_train_and_lift(tmp_path, capsys):
    cfg = tiny_config()
    cfg_path = tmp_path / "c.cfg"
    save_config(cfg, cfg_path)
    data = tmp_path / "data"
    assert cli.main(["gen-data", "--config", str(cfg_path),
                     "--out", str(data)]) == 0
    assert cli.main(["train-prior", "--config", str(cfg_path),
                     "--data", str(data),
                     "--out", str(tmp_path / "prior.ckpt")]) == 0
    assert cli.main(["train-mlrq", "--config", str(cfg_path),
                     "--data", str(data),
                     "--prior", str(tmp_path / "prior.ckpt"),
                     "--out", str(tmp_path / "mlrq.ckpt")]) == 0
    assert cli.main(["lift", "--config", str(cfg_path),
                     "--mlrq", str(tmp_path / "mlrq.ckpt"),
                     "--input", str(data / "seq_0000.2d.json"),
                     "--out", str(tmp_path / "lifted.json")]) == 0
    info = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert "reprojection_error" in info
