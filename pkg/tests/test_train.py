import csv
import math

import numpy as np
import pytest

from xsep import arch as A
from xsep.checkpoint import decode_checkpoint, load_checkpoint, save_checkpoint
from xsep.data import Dataset, synth_dataset
from xsep.errors import DataError, FormatError, NonFiniteLossError
from xsep.model import build_model
from xsep.optim import Optimizer, imagenet_config, jft_config
from xsep.train import (ABLATIONS, PROFILE_COLUMNS, TrainRun, ablation_arch_options, capture,
                        evaluate, make_run, model_from_checkpoint, restore, train)

SMALL = dict(num_classes=4, input_hw=16, dropout=0.5)


def small_spec(**kw):
    return A.toy_xception(**{**SMALL, **kw})


@pytest.fixture(scope="module")
def sets():
    return synth_dataset(4, 48, 16, 1), synth_dataset(4, 20, 16, 2, split="val")


def small_run(sets, tmp_path, steps=4, name="run", **kw):
    tr, va = sets
    kw.setdefault("eval_every", 2)
    return make_run(small_spec(), imagenet_config(), tr, va, seed=3, steps=steps, batch_size=16,
                    shuffle_seed=5, profile_path=str(tmp_path / f"{name}.csv"),
                    checkpoint_path=str(tmp_path / f"{name}.ckpt"), record_wallclock=False, **kw)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_zero_steps_writes_header_and_checkpoint(sets, tmp_path):
    run = small_run(sets, tmp_path, steps=0)
    res = train(run)
    assert read_csv(tmp_path / "run.csv") == [list(PROFILE_COLUMNS)]
    assert res.rows == [] and res.epoch_loss == []
    ckpt = load_checkpoint(tmp_path / "run.ckpt")
    assert ckpt.meta["step"] == 0
    assert ckpt.spec.to_text() == run.model.spec.to_text()


def test_profile_rows(sets, tmp_path):
    run = small_run(sets, tmp_path, steps=5)
    res = train(run)
    rows = read_csv(tmp_path / "run.csv")
    # rows at steps 2, 4 and the final step 5
    assert [r[0] for r in rows[1:]] == ["2", "4", "5"]
    assert all(r[-1] == "" for r in rows[1:])
    assert rows[-1][1] == f"{5 / 3:.9g}"
    assert len(res.epoch_loss) == 2


def test_checkpoint_byte_identical_round_trip(sets, tmp_path):
    train(small_run(sets, tmp_path, steps=3))
    blob = (tmp_path / "run.ckpt").read_bytes()
    save_checkpoint(tmp_path / "again.ckpt", load_checkpoint(tmp_path / "run.ckpt"))
    assert (tmp_path / "again.ckpt").read_bytes() == blob
    ckpt = decode_checkpoint(blob)
    assert next(iter(ckpt.tensors)) == "meta.archspec"
    groups = {k.split(".")[0] for k in ckpt.tensors}
    assert groups == {"meta", "param", "optim", "polyak"}
    assert ckpt.meta["step"] == 3 and ckpt.meta["samples_seen"] == 48


@pytest.mark.parametrize("mutate", [
    lambda b: b"garbage" + b,
    lambda b: b[:-1],
    lambda b: b + b"\x00",
    lambda b: b.replace(b"\nend\n", b"\n"),
])
def test_corrupted_checkpoint_rejected(sets, tmp_path, mutate):
    train(small_run(sets, tmp_path, steps=0))
    with pytest.raises(FormatError):
        decode_checkpoint(mutate((tmp_path / "run.ckpt").read_bytes()))


def test_resume_matches_uninterrupted(sets, tmp_path):
    full = small_run(sets, tmp_path, steps=6, name="full")
    train(full)
    part = small_run(sets, tmp_path, steps=3, name="part")
    train(part)
    resumed = small_run(sets, tmp_path, steps=6, name="resumed")
    resumed.step = restore(load_checkpoint(tmp_path / "part.ckpt"), resumed.model,
                           resumed.optimizer)
    assert resumed.step == 3
    train(resumed)
    assert (tmp_path / "resumed.ckpt").read_bytes() == (tmp_path / "full.ckpt").read_bytes()
    # evaluation from the reloaded checkpoint reproduces the live result
    model, opt, _ = model_from_checkpoint(tmp_path / "resumed.ckpt")
    assert evaluate(model, sets[1], opt) == evaluate(full.model, sets[1], full.optimizer)


def test_deterministic_short_runs(sets, tmp_path):
    train(small_run(sets, tmp_path, steps=4, name="a"))
    train(small_run(sets, tmp_path, steps=4, name="b"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_eval_leaves_state_untouched(sets):
    model = build_model(small_spec(), 0)
    opt = Optimizer(imagenet_config(), model.store)
    before = model.store.checksum()
    counter = model.rng.counter
    evaluate(model, sets[1], opt)
    evaluate(model, sets[1])
    assert model.store.checksum() == before and model.rng.counter == counter


def test_untrained_top1_near_chance():
    val = synth_dataset(10, 1000, 32, 8, noise=3.0, split="val")
    model = build_model(A.toy_xception(10), 7)
    top1 = evaluate(model, val).top1
    assert abs(top1 - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / 1000)


def test_multilabel_map_hand_fixture():
    spec = A.loads("0 input shape=3,1,1\n1 gap\n2 dense in=3 units=3 bias=1\n3 loss fn=sigmoid\n")
    model = build_model(spec, 0, np.float64)
    model.store[A.param_name(2, "weight")] = np.eye(3)
    scores = np.array([[0.9, 0.1, 0.5], [0.8, 0.7, 0.2], [0.3, 0.6, 0.9], [0.2, 0.8, 0.1]])
    labels = np.array([[1, 0, 0], [0, 1, 1], [1, 0, 1], [0, 0, 0]], np.uint8)
    ds = Dataset(scores.reshape(4, 3, 1, 1), labels, 3, "val")
    # AP per class: (1 + 2/3)/2, 1/2, (1 + 2/3)/2
    rep = evaluate(model, ds)
    assert abs(rep.wmap100 - 13 / 18) < 1e-12
    assert math.isnan(rep.top1)


def test_non_finite_loss_keeps_last_checkpoint(sets, tmp_path):
    tr, va = sets
    run = small_run(sets, tmp_path, steps=2)
    train(run)
    good = (tmp_path / "run.ckpt").read_bytes()
    bad = Dataset(np.full_like(tr.images, np.nan), tr.labels, 4)
    cont = TrainRun(run.model, run.optimizer, bad, va, steps=4, batch_size=16, eval_every=2,
                    checkpoint_path=str(tmp_path / "run.ckpt"), step=2)
    with pytest.raises(NonFiniteLossError):
        train(cont)
    assert (tmp_path / "run.ckpt").read_bytes() == good


def test_head_and_task_mismatch(sets):
    tr, _ = sets
    with pytest.raises(DataError):
        make_run(A.toy_xception(10, 16), imagenet_config(), tr, None, seed=0)
    with pytest.raises(DataError):
        make_run(A.toy_xception(4, 32), imagenet_config(), tr, None, seed=0)
    with pytest.raises(DataError):
        make_run(small_spec(task="multi-label"), imagenet_config(), tr, None, seed=0)


def test_multilabel_training_with_rmsprop(tmp_path):
    tr = synth_dataset(5, 40, 16, 3, multi_label=True)
    va = synth_dataset(5, 20, 16, 4, multi_label=True, split="val")
    run = make_run(A.toy_xception(5, 16, task="multi-label"), jft_config(), tr, va, seed=1,
                   steps=3, batch_size=20, eval_every=3)
    res = train(run)
    assert 0 <= res.report.wmap100 <= 1 and math.isnan(res.report.top1)
    assert run.optimizer.samples_seen == 60


def test_ablation_variants_differ_only_in_their_switch():
    base = A.toy_xception(10)
    for variant in ABLATIONS:
        spec = A.toy_xception(10, **ablation_arch_options(variant))
        if variant == "baseline":
            assert spec.to_text() == base.to_text()
        elif variant == "residuals-off":
            assert spec.to_text() == A.strip_residuals(base).to_text()
        else:
            seps = [(a, b) for a, b in zip(base.nodes, spec.nodes) if a != b]
            assert len(base.nodes) == len(spec.nodes)
            assert seps and all(a.kind == "sepconv" and b["act"] == variant for a, b in seps)
    with pytest.raises(Exception):
        ablation_arch_options("tanh")


def test_capture_counters(sets, tmp_path):
    run = small_run(sets, tmp_path, steps=4)
    train(run)
    ckpt = capture(run)
    assert ckpt.meta["step"] == 4 and ckpt.meta["epoch"] == 1 and ckpt.meta["optim_steps"] == 4
    assert ckpt.meta["rng_counter"] == run.model.rng.counter > 0
