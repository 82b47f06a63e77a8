"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

The lines are printed in the pytest terminal summary. Running this file as a
script prints them directly.
"""
import contextlib
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from hqnn import qsim
from hqnn.autodiff import Tensor
from hqnn.checkpoint import encode_checkpoint, load_checkpoint, save_checkpoint
from hqnn.dataio import PairTask, build_pair_task, gen_synthetic, load_samples, split_train_val
from hqnn.models import FAMILIES, ModelSpec, build_model, forward, param_count
from hqnn.training import DEFAULT_SEEDS, TrainConfig, seed_sweep, train, variance_stats

from conftest import ACCEPTANCE, model_gradients
from oracles import ModelFD, chain_p1, closed_form_count, rel_err

pytestmark = pytest.mark.acceptance

VARIANTS = [(f, q) for f in FAMILIES for q in (False, True)]
GRID = [k * math.pi / 16 for k in range(33)]


@contextlib.contextmanager
def criterion(name):
    """Record PASS with the collected detail, or FAIL with the assertion text."""
    detail = []
    t0 = time.perf_counter()
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE.append(f"FAIL  {name}: {exc}".splitlines()[0])
        raise
    ACCEPTANCE.append(f"PASS  {name}: {'; '.join(detail)} ({time.perf_counter() - t0:.1f}s)")


# ---------------------------------------------------------------------------
@pytest.mark.slow
def test_gradient_oracle():
    with criterion("gradient oracle, 8 variants x 3 inputs, rel err < 1e-4, < 2 min") as info:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        inputs = [(rng.random((3, 64, 64)), int(rng.integers(0, 2))) for _ in range(3)]
        worst, refined, smallest, total = 0.0, 0, 1e-5, 0
        for family, quantum in VARIANTS:
            spec = ModelSpec(family, quantum_head=quantum)
            model = build_model(spec, 0)
            raw = {k: t.data for k, t in model.params.items()}
            for image, label in inputs:
                loss, grads = model_gradients(model, image, label)
                fd = ModelFD(spec, raw, image, label)
                assert abs(fd.loss - loss) < 1e-12, f"{spec.display_name}: oracle loss differs"
                for name, (num, smooth) in fd.gradients(h=1e-5).items():
                    num, back = num.ravel().copy(), grads[name].ravel()
                    # where the +-1e-5 stencil straddles a relu/pool/clamp kink the
                    # secant is not a derivative; shrink the step for those entries
                    kinked = np.flatnonzero(~smooth.ravel())
                    if kinked.size:
                        fine, steps, ok = fd.refine(name, kinked, h=1e-5)
                        assert ok.all(), f"{spec.display_name} {name}: {int((~ok).sum())} entries sit on a kink"
                        num[kinked] = fine
                        refined += kinked.size
                        smallest = min(smallest, float(steps.min()))
                    err = rel_err(back, num)
                    worst = max(worst, float(err.max()))
                    assert err.max() < 1e-4, f"{spec.display_name} {name}: rel err {err.max():.3g}"
                total += param_count(model)
        elapsed = time.perf_counter() - t0
        assert elapsed < 120, f"took {elapsed:.0f}s"
        info.append(f"{total} gradient entries, max rel err {worst:.2e}, {refined} re-stepped near kinks (h >= {smallest:.1e})")


def test_quantum_exactness():
    with criterion("quantum layer exactness on 33 angles, < 1 s") as info:
        t0 = time.perf_counter()
        fwd = max(abs(qsim.circuit_forward(t) - chain_p1(t)) for t in GRID)
        h = 1e-6
        grad = max(abs(qsim.param_shift_grad(t) - (chain_p1(t + h) - chain_p1(t - h)) / (2 * h)) for t in GRID)
        elapsed = time.perf_counter() - t0
        assert fwd <= 1e-12, f"forward deviation {fwd:.3g}"
        assert grad <= 1e-9, f"parameter-shift deviation {grad:.3g}"
        assert elapsed < 1.0, f"took {elapsed:.2f}s"
        info.append(f"forward dev {fwd:.1e}, shift-vs-FD dev {grad:.1e}")


def test_unitarity_and_normalization():
    with criterion("unitarity and norm over 1e4 random gate sequences, < 5 s") as info:
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        fixed = [qsim.HADAMARD, qsim.PAULI_Y, qsim.IDENTITY] + [qsim.ry_gate(t) for t in GRID]
        gate_dev = max(g.deviation() for g in fixed)
        norm_dev, applied = 0.0, 0
        for _ in range(10_000):
            v = rng.normal(size=4)
            state = qsim.QubitState(complex(v[0], v[1]), complex(v[2], v[3]))
            n = math.sqrt(state.norm_sq)
            state = qsim.QubitState(state.alpha / n, state.beta / n)
            for _ in range(int(rng.integers(1, 16))):
                k = int(rng.integers(0, 3))
                gate = qsim.HADAMARD if k == 0 else qsim.PAULI_Y if k == 1 else qsim.ry_gate(rng.uniform(-4 * math.pi, 4 * math.pi))
                gate_dev = max(gate_dev, gate.deviation())
                state = qsim.apply_gate(state, gate)
                norm_dev = max(norm_dev, abs(state.norm_sq - 1.0))
                applied += 1
        elapsed = time.perf_counter() - t0
        assert gate_dev <= 1e-12, f"gate deviation {gate_dev:.3g}"
        assert norm_dev <= 1e-12, f"norm deviation {norm_dev:.3g}"
        assert elapsed < 5.0, f"took {elapsed:.2f}s"
        info.append(f"{applied} gate applications, max gate dev {gate_dev:.1e}, max norm dev {norm_dev:.1e}")


def test_parameter_counts():
    with criterion("parameter counts: v1 = 6,601, ViT < 34,000, all equal closed form") as info:
        counts = {}
        for family, quantum in VARIANTS:
            spec = ModelSpec(family, quantum_head=quantum)
            n = param_count(build_model(spec, 0))
            assert n == closed_form_count(family, spec.conv_channels), f"{spec.display_name}: {n}"
            counts[spec.display_name] = n
        assert counts["NN4EOv1"] == 6601 and counts["HQNN4EOv1"] == 6601
        assert counts["ViT"] < 34_000 and counts["HQViT"] == counts["ViT"]
        info.append(", ".join(f"{k} {v}" for k, v in counts.items() if not k.startswith("HQ")))


@pytest.mark.slow
def test_desk_learning():
    with criterion("desk learning: NN4EOv1/HQNN4EOv1 >= 95%, ViT/HQViT >= 90%, < 3 min") as info:
        t0 = time.perf_counter()
        pair = PairTask(0, 1)
        split = split_train_val(build_pair_task(gen_synthetic(50, 0), pair), seed=0)
        results = []
        for family, floor in (("nn4eo_v1", 95.0), ("vit", 90.0)):
            for quantum in (False, True):
                spec = ModelSpec(family, quantum_head=quantum)
                rec = train(TrainConfig(spec, pair, seed=0, epochs=5), split)
                results.append(f"{spec.display_name} {rec.best_val_accuracy:.0f}%@{rec.best_epoch}")
                assert rec.best_val_accuracy >= floor, f"{spec.display_name}: {rec.best_val_accuracy}% < {floor}%"
        elapsed = time.perf_counter() - t0
        assert elapsed < 180, f"took {elapsed:.0f}s"
        info.append(", ".join(results))


@pytest.mark.slow
def test_stability_machinery():
    with criterion("stability: variance examples exact, 10-seed sweep reproducible byte for byte") as info:
        assert variance_stats([88, 92]) == (90, 4)
        assert variance_stats([73.5] * 6)[1] == 0
        samples = build_pair_task(gen_synthetic(50, 0), PairTask(0, 1))
        template = TrainConfig(ModelSpec("nn4eo_v1"), PairTask(0, 1), epochs=2)
        first = seed_sweep(template, samples)
        second = seed_sweep(template, samples)
        assert first.seeds == [0, 12, 123, 1000, 1234, 10000, 12345, 100000, 123456, 1234567] == list(DEFAULT_SEEDS)
        assert first.to_csv().encode() == second.to_csv().encode()
        assert first.variance == variance_stats(first.accuracies)[1]
        info.append(f"mean Acc {first.mean_acc:.2f}, sigma^2 {first.variance:.4f}")


def test_checkpoint_round_trip(tmp_path):
    with criterion("checkpoint round trip bit-identical for all 8 variants") as info:
        img = Tensor(np.random.default_rng(3).random((3, 64, 64)))
        for family, quantum in VARIANTS:
            model = build_model(ModelSpec(family, quantum_head=quantum), 99)
            path = tmp_path / f"{model.spec.display_name}.ckpt"
            save_checkpoint(model, path)
            loaded = load_checkpoint(path)
            assert encode_checkpoint(loaded) == path.read_bytes()
            for name, t in model.params.items():
                assert loaded.params[name].data.tobytes() == t.data.tobytes(), name
            assert forward(loaded, img).data.tobytes() == forward(model, img).data.tobytes()
        info.append("params and outputs identical")


def test_sampled_convergence():
    with criterion("sampled backend: error shrinks 1e2 -> 1e6 shots, <= 0.01 at 1e5 for 10 seeds") as info:
        seeds = range(10)
        mean_err = []
        for shots in (10**2, 10**3, 10**4, 10**5, 10**6):
            errs = [abs(qsim.sample_probability(0.0, shots, s) - 0.5) for s in seeds]
            if shots == 10**5:
                assert max(errs) <= 0.01, f"max error {max(errs):.4f} at 1e5 shots"
            mean_err.append(float(np.mean(errs)))
        assert all(a > b for a, b in zip(mean_err, mean_err[1:])), f"not decreasing: {mean_err}"
        info.append("mean |err| " + " > ".join(f"{e:.1e}" for e in mean_err))


@pytest.mark.skipif("HQNN_EUROSAT_MANIFEST" not in os.environ, reason="set HQNN_EUROSAT_MANIFEST to a EuroSAT RGB manifest")
def test_eurosat_forest_vs_industrial():
    with criterion("EuroSAT forest vs industrial, HQNN4EOv1 >= 95%") as info:
        pair = PairTask(1, 5)
        samples = build_pair_task(load_samples(Path(os.environ["HQNN_EUROSAT_MANIFEST"])), pair)
        rec = train(TrainConfig(ModelSpec("nn4eo_v1", quantum_head=True), pair, seed=0), split_train_val(samples, seed=0))
        assert rec.best_val_accuracy >= 95.0, f"{rec.best_val_accuracy:.2f}%"
        info.append(f"{rec.best_val_accuracy:.2f}% at epoch {rec.best_epoch}")


if __name__ == "__main__":
    import sys
    import tempfile

    for fn in (
        test_gradient_oracle, test_quantum_exactness, test_unitarity_and_normalization, test_parameter_counts,
        test_desk_learning, test_stability_machinery, test_checkpoint_round_trip, test_sampled_convergence,
    ):
        try:
            if fn is test_checkpoint_round_trip:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            pass
        print(ACCEPTANCE[-1], flush=True)
    sys.exit(0 if all(line.startswith("PASS") for line in ACCEPTANCE) else 1)
