"""Acceptance gate: ten end-to-end checks, one printed PASS/FAIL line each.

Each check prints its verdict with the measured quantities before asserting,
so the one-line summary survives regardless of the assertion outcome.
"""

import json
import os
import time
from dataclasses import replace

import numpy as np

from mixlab.cli import main as cli_main
from mixlab.evaluation import ROBUSTNESS_GRID, curve_by_p, robustness_curve
from mixlab.metrics import compute_metrics
from mixlab.mixing import MixConfig, ModalBatch, manifold_mixup, multimix, powmix
from mixlab.model import ModelConfig, backward, encode, init_params, predict
from mixlab.rng import RngStream
from mixlab.synthdata import DataGenConfig, generate, subsample_train
from mixlab.training import TrainConfig, run_seeds, run_single

from _oracles import loop_manifold, loop_metrics, loop_multimix, loop_powmix


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def random_batch(gen, b, dims):
    hiddens = tuple(gen.standard_normal((b, d)) for d in dims)
    return ModalBatch(hiddens, gen.standard_normal(b))


def spearman(x, y):
    def ranks(vals):
        vals = np.asarray(vals, dtype=np.float64)
        order = np.argsort(vals, kind="stable")
        r = np.empty(len(vals))
        r[order] = np.arange(1, len(vals) + 1)
        for v in np.unique(vals):
            tie = vals == v
            if tie.sum() > 1:
                r[tie] = r[tie].mean()
        return r

    rx, ry = ranks(x) - ranks(x).mean(), ranks(y) - ranks(y).mean()
    return float(np.sum(rx * ry) / np.sqrt(np.sum(rx * rx) * np.sum(ry * ry)))


def test_criterion_01_mixing_matrix_invariants(capsys):
    started = time.perf_counter()
    gen = np.random.default_rng(20240801)
    worst_sum = 0.0
    worst_neg = 0.0
    worst_hull = 0.0
    for i in range(1000):
        bits = i % 16
        cfg = MixConfig(
            n_mixed=int(gen.integers(1, 513)),
            anisotropic=bool(bits & 1), reweight=bool(bits & 2),
            mask_share=bool(bits & 4), dynamic_mix=bool(bits & 8),
        )
        b = int(gen.integers(1, 65))
        m_count = int(gen.integers(1, 5))
        dims = tuple(int(gen.integers(1, 9)) for _ in range(m_count))
        batch = random_batch(gen, b, dims)
        mixed = powmix(batch, cfg, RngStream(i).split("mix"))
        for m in range(m_count):
            mat = mixed.mix_matrices[m]
            worst_neg = max(worst_neg, float(-mat.min()))
            worst_sum = max(worst_sum, float(np.max(np.abs(mat.sum(axis=1) - 1.0))))
            lo = batch.hiddens[m].min(axis=0)
            hi = batch.hiddens[m].max(axis=0)
            worst_hull = max(worst_hull,
                             float(np.max(lo - mixed.hiddens[m])),
                             float(np.max(mixed.hiddens[m] - hi)))
    elapsed = time.perf_counter() - started
    ok = worst_neg <= 1e-9 and worst_sum <= 1e-9 and worst_hull <= 1e-9 and elapsed < 30
    report(capsys, 1, ok,
           f"1000 configs: worst row-sum dev {worst_sum:.2e}, most negative entry "
           f"{worst_neg:.2e}, worst hull violation {worst_hull:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_sparsity_statistic(capsys):
    started = time.perf_counter()
    gen = np.random.default_rng(7)
    cfg = MixConfig(n_mixed=512)  # all defaults on, subset range U(2, 4)
    counts = []
    rng = RngStream(42).split("sparsity")
    for rep in range(20):
        # positive features keep every attention weight nonzero, so row
        # sparsity reflects the subset mask alone
        hiddens = tuple(np.abs(gen.standard_normal((32, d))) + 0.1 for d in (5, 4, 3))
        batch = ModalBatch(hiddens, gen.standard_normal(32))
        mixed = powmix(batch, cfg, rng.split(rep))
        for mat in mixed.mix_matrices:
            counts.append(np.count_nonzero(mat, axis=1))
    mean_nnz = float(np.mean(np.concatenate(counts)))
    n_rows = sum(c.size for c in counts)
    elapsed = time.perf_counter() - started
    ok = 2.8 <= mean_nnz <= 3.2 and n_rows >= 10_000 and elapsed < 10
    report(capsys, 2, ok,
           f"mean nonzeros per row {mean_nnz:.3f} over {n_rows} rows "
           f"(target [2.8, 3.2]), {elapsed:.1f}s")
    assert ok


def test_criterion_03_oracle_equivalence(capsys):
    started = time.perf_counter()
    worst = 0.0

    def dev(a, b):
        return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))

    for seed in range(3):
        data_gen = np.random.default_rng(100 + seed)
        for bits in range(16):
            cfg = MixConfig(n_mixed=8, anisotropic=bool(bits & 1),
                            reweight=bool(bits & 2), mask_share=bool(bits & 4),
                            dynamic_mix=bool(bits & 8))
            batch = random_batch(data_gen, 6, (3, 2, 1))
            got = powmix(batch, cfg, RngStream(seed).split("p"))
            hiddens, labels, mod_labels, mats = loop_powmix(batch, cfg,
                                                            RngStream(seed).split("p"))
            for m in range(3):
                worst = max(worst, dev(got.mix_matrices[m], mats[m]),
                            dev(got.hiddens[m], hiddens[m]),
                            dev(got.modality_labels[m], mod_labels[m]))
            worst = max(worst, dev(got.labels, labels))

        batch = random_batch(np.random.default_rng(200 + seed), 5, (2, 3))
        got = multimix(batch, 7, RngStream(seed).split("mm"))
        hiddens, labels = loop_multimix(batch, 7, RngStream(seed).split("mm"))
        worst = max(worst, dev(got.labels, labels),
                    max(dev(got.hiddens[m], hiddens[m]) for m in range(2)))

        batch = random_batch(np.random.default_rng(300 + seed), 6, (3, 2))
        got = manifold_mixup(batch, 1.0, RngStream(seed).split("mf"))
        hiddens, labels = loop_manifold(batch, 1.0, RngStream(seed).split("mf"))
        worst = max(worst, dev(got.labels, labels),
                    max(dev(got.hiddens[m], hiddens[m]) for m in range(2)))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-12 and elapsed < 10
    report(capsys, 3, ok,
           f"max abs deviation from loop oracles {worst:.2e} "
           f"(bound 1e-12), {elapsed:.1f}s")
    assert ok


def test_criterion_04_degenerate_reductions(capsys):
    # (a) all structural toggles off: identical to the shared-matrix baseline
    gen = np.random.default_rng(11)
    batch = random_batch(gen, 7, (3, 2))
    cfg = MixConfig(n_mixed=9, anisotropic=False, reweight=False, dynamic_mix=False)
    a = powmix(batch, cfg, RngStream(5).split("shared"))
    b = multimix(batch, 9, RngStream(5).split("shared"))
    bit_exact = all(np.array_equal(a.hiddens[m], b.hiddens[m]) for m in range(2)) \
        and np.array_equal(a.labels, b.labels)

    # (b) single-example batch: every mixed row is that example
    single = ModalBatch((gen.standard_normal((1, 3)),), gen.standard_normal(1))
    mixed = powmix(single, MixConfig(n_mixed=6), RngStream(1).split("mix"))
    single_ok = np.array_equal(mixed.hiddens[0],
                               np.repeat(single.hiddens[0], 6, axis=0)) \
        and np.array_equal(mixed.labels, np.full(6, single.labels[0]))

    # (c) mix_prob = 0: trajectory bit-identical to the no-mixing baseline
    ds = generate(DataGenConfig(n_examples=200, dims=(6, 4), rho=(0.9, 0.5), seed=5))
    base = TrainConfig(epochs=4, batch_size=32, patience=0, algorithm="none", seed=2,
                       mix=MixConfig(n_mixed=16, warmup_epochs=0),
                       model=ModelConfig(hidden=6, embed=4, fusion_hidden=6))
    run_none = run_single(ds, base)
    run_zero = run_single(ds, replace(base, algorithm="powmix",
                                      mix=MixConfig(n_mixed=16, mix_prob=0.0,
                                                    warmup_epochs=0)))
    traj_ok = all(
        np.array_equal(run_none.result.params.tensors[k], run_zero.result.params.tensors[k])
        for k in run_none.result.params.tensors
    ) and [r.train_loss for r in run_none.result.records] == \
        [r.train_loss for r in run_zero.result.records]

    ok = bit_exact and single_ok and traj_ok
    report(capsys, 4, ok,
           f"toggle-off == shared-baseline bit-exact: {bit_exact}; "
           f"B=1 rows equal the example: {single_ok}; "
           f"mix_prob=0 trajectory identical: {traj_ok}")
    assert ok


def test_criterion_05_gradient_correctness(capsys):
    started = time.perf_counter()
    cfg = ModelConfig(hidden=4, embed=2, fusion_hidden=3)
    params = init_params((3, 2, 2), cfg, RngStream(3).split("init"))
    n_params = params.n_parameters()
    gen = np.random.default_rng(17)
    xs = [gen.standard_normal((6, d)) for d in params.dims]
    y = gen.standard_normal(6)

    hs = encode(params, xs)
    mixed = powmix(ModalBatch(tuple(hs), y), MixConfig(n_mixed=8, warmup_epochs=0),
                   RngStream(9).split("mix"))
    mix = list(mixed.mix_matrices)
    targets = mixed.labels

    _, grads = backward(params, xs, targets, mix)
    worst = 0.0
    step = 1e-6
    for name, tensor in params.tensors.items():
        flat = tensor.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = backward(params, xs, targets, mix)
            flat[i] = orig - step
            down, _ = backward(params, xs, targets, mix)
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            a = grads[name].reshape(-1)[i]
            worst = max(worst, abs(a - fd) / max(1e-6, abs(a), abs(fd)))
    elapsed = time.perf_counter() - started
    ok = n_params <= 200 and worst < 1e-4 and elapsed < 60
    report(capsys, 5, ok,
           f"{n_params} parameters through an active mixing step: "
           f"max rel err vs central differences {worst:.2e} "
           f"(bound 1e-4), {elapsed:.1f}s")
    assert ok


def test_criterion_06_regularization_effect(capsys):
    started = time.perf_counter()
    seeds = [1, 2, 3, 4, 5]
    ds = generate(DataGenConfig())  # shipped defaults
    sub = subsample_train(ds, 200, RngStream(seeds[0]).split("subsample"))
    cfg = TrainConfig()  # shipped defaults, algorithm powmix

    res_none = run_seeds(sub, replace(cfg, algorithm="none"), seeds)
    res_pow = run_seeds(sub, cfg, seeds)
    val_none = {r.seed: r.result.best_val_mae for r in res_none.runs}
    val_pow = {r.seed: r.result.best_val_mae for r in res_pow.runs}
    mean_none = float(np.mean([val_none[s] for s in seeds]))
    mean_pow = float(np.mean([val_pow[s] for s in seeds]))
    paired_gap = float(np.mean([val_none[s] - val_pow[s] for s in seeds]))
    elapsed = time.perf_counter() - started

    ok = mean_pow <= mean_none and paired_gap >= 0.0 and elapsed < 300
    report(capsys, 6, ok,
           f"200-example 5-seed val MAE: mixing {mean_pow:.4f} vs none {mean_none:.4f}, "
           f"paired gap {paired_gap:+.4f} (needs >= 0), {elapsed:.0f}s")
    assert ok, (
        "mixing regularization does not help on this synthetic task: "
        f"mean val MAE with mixing {mean_pow:.4f} > baseline {mean_none:.4f} "
        f"(paired gap {paired_gap:+.4f}; per-seed gaps "
        f"{[round(val_none[s] - val_pow[s], 4) for s in seeds]})"
    )


def test_criterion_07_ablation_grid(capsys, tmp_path):
    started = time.perf_counter()
    cfg = {
        "data": {"n_examples": 600, "seed": 7},
        "train": {"epochs": 25, "patience": 8},
        "mix": {"n_mixed": 128},
        "seeds": [1, 2, 3],
    }
    cfg_path = tmp_path / "ablate.json"
    cfg_path.write_text(json.dumps(cfg))
    out = str(tmp_path / "runs")
    code = cli_main(["ablate", "--config", str(cfg_path), "--out", out, "--no-plots"])
    rundir = os.path.join(out, "ablate", os.listdir(os.path.join(out, "ablate"))[0])
    with open(os.path.join(rundir, "summary.csv")) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    body = [line.split(",") for line in lines[1:]]
    hashes = {row[0]: row[1] for row in body}
    full = next(row for row in body if row[0] == "full")
    metrics_finite = all(np.isfinite(float(v)) for v in full[2:])
    distinct = all(hashes["full"] != h for v, h in hashes.items() if v != "full")
    elapsed = time.perf_counter() - started
    ok = (code == 0 and header == ["variant", "config_hash", "acc2", "acc5", "mae"]
          and len(body) == 5 and metrics_finite and distinct and elapsed < 600)
    report(capsys, 7, ok,
           f"5 variants x 3 seeds end-to-end: exit {code}, full row finite "
           f"{metrics_finite}, hashes distinct {distinct}, {elapsed:.0f}s")
    assert ok


def test_criterion_08_metric_oracle(capsys):
    gen = np.random.default_rng(23)
    worst = 0.0
    inclusion_exact = True
    for _ in range(1000):
        n = int(gen.integers(1, 60))
        target = np.round(gen.uniform(-4, 4, n), 1)  # exact zeros occur
        pred = gen.uniform(-4, 4, n)
        want = loop_metrics(pred, target)
        got = compute_metrics(pred, target)
        worst = max(worst, abs(got.mae - want["mae"]),
                    abs(got.acc5 - want["acc5"]), abs(got.acc7 - want["acc7"]))
        if want["corr_defined"]:
            worst = max(worst, abs(got.corr - want["corr"]))
        if want["n_binary_included"] > 0:
            worst = max(worst, abs(got.acc2 - want["acc2"]), abs(got.f1 - want["f1"]))
        if got.n_binary_included != int(np.sum(target != 0.0)):
            inclusion_exact = False
        if got.n_binary_included != want["n_binary_included"]:
            inclusion_exact = False
    ok = worst <= 1e-12 and inclusion_exact
    report(capsys, 8, ok,
           f"1000 random vectors: max metric deviation {worst:.2e} (bound 1e-12), "
           f"inclusion counts exact: {inclusion_exact}")
    assert ok


def test_criterion_09_robustness_trend(capsys):
    started = time.perf_counter()
    ds = generate(DataGenConfig(n_examples=600, seed=7))
    base = TrainConfig(epochs=40, patience=10, mix=MixConfig(n_mixed=128), seed=1)
    runs = {
        "none": run_single(ds, replace(base, algorithm="none")),
        "powmix": run_single(ds, base),
    }
    kinds = ["feature_drop_aligned", "feature_drop_independent"]

    exact_at_zero = True
    rhos = {}
    for name, run in runs.items():
        clean = compute_metrics(predict(run.result.params, ds.features_for("test")),
                                ds.labels_for("test"))
        zero_cells = robustness_curve(run.result.params, ds, kinds, [0.0], 3,
                                      RngStream(1).split("noise"))
        exact_at_zero &= all(cell.report == clean for cell in zero_cells)

        cells = robustness_curve(run.result.params, ds, kinds, ROBUSTNESS_GRID, 10,
                                 RngStream(1).split("noise"))
        curve = curve_by_p(cells)
        ps = sorted(curve)
        rhos[name] = spearman(ps, [curve[p].f1 for p in ps])
    elapsed = time.perf_counter() - started
    ok = exact_at_zero and all(r < 0.0 for r in rhos.values()) and elapsed < 300
    report(capsys, 9, ok,
           f"p=0 equals clean: {exact_at_zero}; Spearman(p, F1) baseline "
           f"{rhos['none']:+.3f}, mixing {rhos['powmix']:+.3f} (both must be < 0), "
           f"{elapsed:.0f}s")
    assert ok


def test_criterion_10_byte_determinism(capsys, tmp_path):
    cfg = {
        "data": {"n_examples": 200, "dims": [6, 4], "rho": [0.9, 0.5], "seed": 3},
        "train": {"epochs": 3, "batch_size": 32, "patience": 0},
        "mix": {"n_mixed": 32, "warmup_epochs": 1},
        "model": {"hidden": 6, "embed": 4, "fusion_hidden": 6},
        "seeds": [1, 2, 3],
    }
    cfg_path = tmp_path / "det.json"
    cfg_path.write_text(json.dumps(cfg))
    previous = os.environ.get("MIXLAB_DETERMINISTIC")
    os.environ["MIXLAB_DETERMINISTIC"] = "1"
    try:
        outs = []
        for tag in ("a", "b"):
            out = str(tmp_path / tag)
            code = cli_main(["train", "--config", str(cfg_path), "--out", out,
                             "--no-plots"])
            assert code == 0
            rundir = os.path.join(out, "train", os.listdir(os.path.join(out, "train"))[0])
            with open(os.path.join(rundir, "results.csv"), "rb") as fh:
                outs.append(fh.read())
    finally:
        if previous is None:
            os.environ.pop("MIXLAB_DETERMINISTIC", None)
        else:
            os.environ["MIXLAB_DETERMINISTIC"] = previous
    ok = outs[0] == outs[1]
    report(capsys, 10, ok,
           f"two cmd_train reruns: results.csv byte-identical: {ok} "
           f"({len(outs[0])} bytes)")
    assert ok
