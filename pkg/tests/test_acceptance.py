"""Acceptance suite: one test per criterion, each records a one-line verdict.

Run with ``pytest tests/test_acceptance.py -v`` (verdicts appear in the
terminal summary) or ``python3 tests/test_acceptance.py``.
"""

import itertools
import json
import time

import numpy as np

import oracles
from acceptance_log import record
from fuseqa import fusion, questions, sarprep, synth
from fuseqa.cli import main as cli_main
from fuseqa.fileio import canonical_json
from fuseqa.metrics import MACRO, MICRO, WEIGHTED, aggregate, count_stats, hamming_distance, match_ratio, metric_report
from fuseqa.pipeline import ExperimentConfig, run_experiment
from fuseqa.taxonomy import bundled, class_frequencies, flat_nomenclature, inverse_frequency_weights

SEEDS5 = range(5)
TWELVE = [f"class {chr(97 + i)}" for i in range(12)]


def _pct(x):
    return 100.0 * x


# 1 ------------------------------------------------------------------------

def test_c1_metric_oracle():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        q, n = int(rng.integers(1, 51)), int(rng.integers(1, 11))
        density = rng.uniform(0.05, 0.95)
        pred = (rng.random((q, n)) < density).astype(np.uint8)
        gt = (rng.random((q, n)) < density).astype(np.uint8)
        beta = float(rng.choice([0.5, 1.0, 2.0]))
        c = count_stats(pred, gt)
        s = metric_report(pred, gt, [str(j) for j in range(n)], beta).f_score
        pairs = [
            (aggregate(s, c, MACRO, beta), oracles.macro(pred.tolist(), gt.tolist(), beta)),
            (aggregate(s, c, MICRO, beta), oracles.micro(pred.tolist(), gt.tolist(), beta)),
            (match_ratio(pred, gt), oracles.match_ratio(pred.tolist(), gt.tolist())),
            (hamming_distance(pred, gt), oracles.hamming(pred.tolist(), gt.tolist())),
        ]
        if c.occurrences.sum():
            pairs.append((aggregate(s, c, WEIGHTED, beta), oracles.weighted(pred.tolist(), gt.tolist(), beta)))
        worst = max(worst, max(abs(a - b) for a, b in pairs))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 5
    assert record(1, ok, f"max |diff| {worst:.2e} over 1000 instances in {elapsed:.2f}s (need <=1e-9, <5s)")


# 2 ------------------------------------------------------------------------

def test_c2_gradient_check():
    t0 = time.perf_counter()
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        sizes = [int(rng.integers(2, 9)), int(rng.integers(3, 11)), int(rng.integers(1, 6))]
        model = fusion.MlpModel.init(sizes, rng)
        for b in model.biases:
            b[...] = rng.normal(scale=0.1, size=b.shape)
        q = int(rng.integers(1, 9))
        x = rng.normal(size=(q, sizes[0]))
        y = (rng.random((q, sizes[-1])) < 0.5).astype(float)
        errs.append(fusion.gradient_check(model, (x, y), rng.uniform(0.2, 3.0, sizes[-1])))
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 1e-4 and elapsed < 5
    assert record(2, ok, f"max relative error {max(errs):.2e} over 20 seeds in {elapsed:.2f}s (need <1e-4, <5s)")


# 3 ------------------------------------------------------------------------

def _python_oracle(ids, ops, bits) -> bool:
    # Python's own `and`/`or` have the grammar's precedence and associativity
    expr = " ".join(itertools.chain.from_iterable(
        ([f"bool(bits[{i}])"] if k == 0 else [ops[k - 1], f"bool(bits[{i}])"]) for k, i in enumerate(ids)))
    return eval(expr, {"bits": bits})


def test_c3_qa_exhaustive():
    nom = flat_nomenclature(["pastures", "vineyards", "beaches", "water bodies", "arable land"])
    t0 = time.perf_counter()
    assignments = [np.array(b, dtype=np.uint8) for b in itertools.product([0, 1], repeat=5)]
    n_templates = n_checks = mismatches = 0
    for n_leaves in (1, 2, 3):
        for ids in itertools.product(range(5), repeat=n_leaves):
            for ops in itertools.product(("and", "or"), repeat=n_leaves - 1):
                ast = questions.QuestionAst("yes_no", questions.build_expr(list(ids), list(ops)))
                text = questions.render_question(ast, nom)
                parsed = questions.parse_question(text, nom)
                mismatches += parsed != ast
                n_templates += 1
                for bits in assignments:
                    want = "yes" if _python_oracle(ids, ops, bits) else "no"
                    mismatches += questions.answer(parsed, bits, nom) != want
                    n_checks += 1
    lc = questions.parse_question(questions.LAND_COVER_TEXT, nom)
    for bits in assignments:
        names = [nom.names[j] for j in range(5) if bits[j]]
        mismatches += questions.answer(lc, bits, nom) != (", ".join(names) if names else "none")
        n_checks += 1
    # every generated question re-parses to itself
    rng = np.random.default_rng(0)
    for sid in range(200):
        labels = rng.integers(0, 2, 5)
        for q in questions.generate_questions(labels, nom, 25, seed=0, sample_id=sid):
            ast = questions.parse_question(q.question, nom)
            mismatches += questions.render_question(ast, nom) != q.question
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 5
    assert record(3, ok, f"{mismatches} mismatches over {n_templates + 1} templates x 32 assignments "
                         f"({n_checks} answers) + 5000 round trips in {elapsed:.2f}s")


# 4 ------------------------------------------------------------------------

def test_c4_pipeline_consistency():
    worst = 1.0
    for nom in (bundled("RSVQA61"), bundled("BENMM19"), flat_nomenclature(list("abcde"))):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            gt = rng.integers(0, 2, (40, len(nom))).astype(np.uint8)
            gt[0] = 0
            qs = [questions.generate_questions(g, nom, 25, seed=seed, sample_id=i) for i, g in enumerate(gt)]
            worst = min(worst, questions.evaluate_vqa(gt, gt, qs, nom)["global"])
    assert record(4, worst == 1.0, f"min global accuracy with predictions = ground truth: {_pct(worst):.2f}%")


# 5 ------------------------------------------------------------------------

def _stage_f2(rep, stage):
    return _pct(rep["stages"][stage]["metrics"]["f_beta_macro"])


def test_c5_fusion_direction():
    rows, passes, single_ok, early_ok, slowest = [], 0, 0, 0, 0.0
    for seed in SEEDS5:
        t0 = time.perf_counter()
        base = {"nomenclature": TWELVE, "seed": seed, "sar_rasters": False, "synth": {"n_samples": 5000}}
        early = run_experiment(ExperimentConfig.from_dict({**base, "fusion": "EARLY"}))
        late = run_experiment(ExperimentConfig.from_dict({**base, "fusion": "LATE"}))
        slowest = max(slowest, time.perf_counter() - t0)
        lf, ef = _stage_f2(late, "lf"), _stage_f2(early, "ef")
        best = max(_stage_f2(late, "s1"), _stage_f2(late, "s2"))
        a, b = lf - best >= 5, lf - ef >= 2
        single_ok += a
        early_ok += b
        passes += a and b
        rows.append(f"s{seed}: LF-best {lf - best:+.2f} LF-EF {lf - ef:+.2f}")
    ok = passes >= 4 and slowest < 60
    assert record(5, ok, f"{passes}/5 seeds (LF-best>=5: {single_ok}/5, LF-EF>=2: {early_ok}/5), "
                         f"slowest seed {slowest:.1f}s; " + "; ".join(rows))


# 6 ------------------------------------------------------------------------

def _sar_f2(seed, mode_pairs, n=2000, size=16):
    nom = flat_nomenclature(["volume scatterer", "class b", "class c", "class d"])
    cfg = synth.SynthConfig(nom, n_samples=n, seed=seed)
    ds = synth.gen_dataset(cfg)
    pairs = {s: [synth.gen_sar_pair(ds[s].labels[i], cfg, size, int(ds[s].indices[i])) for i in range(len(ds[s]))]
             for s in synth.SPLITS}
    bounds = sarprep.compute_saturation_bounds(sarprep.stack_raw(vv, vh) for vv, vh in pairs["train"])
    y = ds["train"].labels
    w = inverse_frequency_weights(class_frequencies(y), len(y))
    out = {}
    for mode in mode_pairs:
        x = {s: np.stack([sarprep.summarize_features(sarprep.assemble_sar_input(vv, vh, mode, bounds))
                          for vv, vh in pairs[s]]) for s in synth.SPLITS}
        sc = fusion.Standardizer.fit(x["train"])
        model = fusion.train_classifier(sc(x["train"]), y, w, fusion.TrainConfig(seed=seed))
        t = fusion.optimize_thresholds(fusion.predict_probs(model, sc(x["val"])), ds["val"].labels)
        pred = fusion.apply_thresholds(fusion.predict_probs(model, sc(x["test"])), t)
        out[mode] = _pct(metric_report(pred, ds["test"].labels, nom.names).macro)
    return out


def test_c6_ratio_channel():
    t0 = time.perf_counter()
    gains = []
    for seed in SEEDS5:
        f = _sar_f2(seed, (sarprep.TWO_CH, sarprep.THREE_CH))
        gains.append(f[sarprep.THREE_CH] - f[sarprep.TWO_CH])
    elapsed = time.perf_counter() - t0
    wins = sum(g >= 2 for g in gains)
    ok = wins >= 4 and elapsed < 60
    assert record(6, ok, f"3CH-2CH F2-macro gain >=2 in {wins}/5 seeds "
                         f"({', '.join(f'{g:+.2f}' for g in gains)}) in {elapsed:.1f}s")


# 7 ------------------------------------------------------------------------

def test_c7_weighted_tradeoff():
    freqs = np.geomspace(0.35, 0.01, 12).tolist()
    passes, rows = 0, []
    for seed in SEEDS5:
        got = {}
        for weighted in (True, False):
            cfg = ExperimentConfig.from_dict({
                "nomenclature": TWELVE, "fusion": "NONE_S2", "seed": seed, "sar_rasters": False,
                "weighted_loss": weighted,
                "synth": {"preset": "uniform", "n_samples": 5000, "class_freqs": freqs},
            })
            st = run_experiment(cfg)["stages"]["s2"]
            got[weighted] = (st["metrics"]["f_beta_macro"], st["metrics"]["f1_micro"], st["vqa"]["global"])
        w, u = got[True], got[False]
        ok = w[0] >= u[0] and u[1] >= w[1] and u[2] >= w[2]
        passes += ok
        rows.append(f"s{seed}: dF2 {_pct(w[0] - u[0]):+.2f} dF1u {_pct(u[1] - w[1]):+.2f} dGA {_pct(u[2] - w[2]):+.2f}")
    assert record(7, passes >= 4, f"{passes}/5 seeds satisfy all three orderings; " + "; ".join(rows))


# 8 ------------------------------------------------------------------------

def test_c8_generalisation_drop():
    names = TWELVE[:6]
    ok, rows = True, []
    for seed in range(3):
        gaps = {}
        for split in ("RANDOM", "SHIFTED"):
            cfg = ExperimentConfig.from_dict({
                "nomenclature": names, "fusion": "NONE_S2", "seed": seed, "sar_rasters": False, "split": split,
                "synth": {"preset": "uniform", "n_samples": 5000, "class_freqs": [0.15] * 6},
            })
            st = run_experiment(cfg)["stages"]["s2"]
            gaps[split] = _pct(st["validation_f_beta_macro"] - st["metrics"]["f_beta_macro"])
        ok &= gaps["SHIFTED"] >= 5 and abs(gaps["RANDOM"]) < 5
        rows.append(f"s{seed}: shift-0 gap {gaps['RANDOM']:+.2f}, 2-sigma drop {gaps['SHIFTED']:+.2f}")
    assert record(8, ok, "; ".join(rows))


# 9 ------------------------------------------------------------------------

def test_c9_threshold_guarantee():
    rng = np.random.default_rng(9)
    worst = np.inf
    for _ in range(100):
        q, n = int(rng.integers(1, 51)), int(rng.integers(1, 11))
        y = (rng.random((q, n)) < rng.uniform(0.05, 0.9)).astype(np.uint8)
        p = np.clip(y * rng.uniform(0, 0.6) + rng.random((q, n)) * 0.7, 0, 1)
        names = [str(j) for j in range(n)]
        t = fusion.optimize_thresholds(p, y, beta=2.0, grid_step=0.05)
        tuned = metric_report(fusion.apply_thresholds(p, t), y, names).macro
        flat = metric_report(fusion.apply_thresholds(p, np.full(n, 0.5)), y, names).macro
        worst = min(worst, tuned - flat)
    assert record(9, worst >= 0, f"min (optimized - uniform 0.5) validation F2-macro over 100 instances: {worst:+.4f}")


# 10 -----------------------------------------------------------------------

def test_c10_determinism(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"step": "A", "fusion": "LATE", "synth": {"n_samples": 1000}}))
    blobs = []
    for name in ("first", "second"):
        assert cli_main(["run", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / name), "--no-plots"]) == 0
        rep = json.loads((tmp_path / name / "report.json").read_text())
        rep.pop("wall_time_s")
        blobs.append(canonical_json(rep).encode())
    assert record(10, blobs[0] == blobs[1], f"canonical reports {'identical' if blobs[0] == blobs[1] else 'differ'} "
                                            f"({len(blobs[0])} bytes)")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn(Path(tempfile.mkdtemp())) if "tmp_path" in fn.__code__.co_varnames[:1] else fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
