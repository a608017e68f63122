"""Evaluation metrics against a from-scratch reference evaluator.

``reference_report`` below recomputes everything with per-threshold boolean
counting and plain Python arithmetic; it was written from the metric
definitions before being compared against the package implementation, and
the acceptance suite reuses it on a larger corpus.
"""

import numpy as np
import pytest

from sodkit import metrics


def reference_report(preds, gts, aggregation="average_then_f"):
    """Brute-force dataset evaluation: no bincounts, no suffix sums."""
    n = len(preds)
    prec_sum = [0.0] * 256
    rec_sum = [0.0] * 256
    f_sum = [0.0] * 256
    rec_n = 0
    maes = []
    for pred, gt in zip(preds, gts):
        q = np.rint(np.asarray(pred) * 255.0)
        gtb = np.asarray(gt).astype(bool)
        npos = int(gtb.sum())
        if npos > 0:
            rec_n += 1
        maes.append(float(np.abs(pred - gtb.astype(np.float64)).mean()))
        for t in range(256):
            sel = q >= t
            tp = int((sel & gtb).sum())
            pp = int(sel.sum())
            p = tp / pp if pp > 0 else 0.0
            r = tp / npos if npos > 0 else 0.0
            prec_sum[t] += p
            if npos > 0:
                rec_sum[t] += r
            if p == 0.0 and r == 0.0:
                f = 0.0
            else:
                f = (1.0 + 0.3) * p * r / (0.3 * p + r)
            f_sum[t] += f
    avg_p = [s / n for s in prec_sum]
    avg_r = [s / rec_n if rec_n else 0.0 for s in rec_sum]
    if aggregation == "average_then_f":
        max_f = max(
            0.0 if (p == 0.0 and r == 0.0)
            else (1.0 + 0.3) * p * r / (0.3 * p + r)
            for p, r in zip(avg_p, avg_r)
        )
    else:
        max_f = max(s / n for s in f_sum)
    return {"max_f": max_f, "mae": float(np.mean(maes)), "avg_p": avg_p,
            "avg_r": avg_r, "empty": n - rec_n}


def random_corpus(rng, n, size=8, empty_every=7):
    preds, gts = [], []
    for i in range(n):
        preds.append(rng.uniform(size=(size, size)))
        if i % empty_every == 3:
            gts.append(np.zeros((size, size), dtype=np.uint8))
        else:
            gts.append((rng.uniform(size=(size, size)) < 0.5).astype(np.uint8))
    return preds, gts


@pytest.mark.parametrize("aggregation", ["average_then_f", "f_then_average"])
def test_matches_reference_evaluator(rng, aggregation):
    preds, gts = random_corpus(rng, 120)
    got = metrics.evaluate_dataset(preds, gts, aggregation=aggregation)
    want = reference_report(preds, gts, aggregation=aggregation)
    assert got.max_f == want["max_f"]    # identical accumulation order
    assert abs(got.mae - want["mae"]) < 1e-12
    assert got.empty_gt_count == want["empty"]
    for t, pt in enumerate(got.curve):
        assert pt.precision == want["avg_p"][t]
        assert pt.recall == want["avg_r"][t]


def test_f_beta_spot_values():
    for x in (0.0, 0.25, 0.5, 1.0):
        assert metrics.f_beta(x, x) == x
    assert metrics.f_beta(0.0, 0.5) == 0.0
    assert metrics.f_beta(1.0, 0.0) == 0.0
    # beta^2 = 0.3 weights precision more than recall
    assert metrics.f_beta(0.9, 0.1) > metrics.f_beta(0.1, 0.9)


def test_binarize_quantization():
    pred = np.array([[0.0, 0.499, 0.5, 1.0]])
    # 0.5 * 255 = 127.5 rounds to 128 (ties to even)
    assert np.array_equal(metrics.binarize(pred, 128), [[0, 0, 1, 1]])
    assert np.array_equal(metrics.binarize(pred, 0), [[1, 1, 1, 1]])
    with pytest.raises(ValueError):
        metrics.binarize(pred, 256)


def test_pr_at_conventions():
    pred = np.zeros((3, 3))
    gt = np.ones((3, 3), dtype=np.uint8)
    pt = metrics.pr_at(pred, gt, 200)
    assert pt.precision == 0.0 and pt.recall == 0.0    # nothing predicted
    empty = metrics.pr_at(np.ones((3, 3)), np.zeros((3, 3), np.uint8), 10)
    assert empty.precision == 0.0 and empty.recall == 0.0
    exact = metrics.pr_at(gt.astype(np.float64), gt, 255)
    assert exact.precision == 1.0 and exact.recall == 1.0


def test_mae_known_value():
    pred = np.array([[0.25, 0.75]])
    gt = np.array([[0, 1]], dtype=np.uint8)
    assert metrics.mae(pred, gt) == 0.25


def test_perfect_prediction_scores():
    gt = np.zeros((6, 6), dtype=np.uint8)
    gt[2:5, 1:4] = 1
    rep = metrics.evaluate_dataset([gt.astype(np.float64)], [gt])
    assert rep.max_f == 1.0
    assert rep.mae == 0.0


def test_aggregation_modes_differ_when_images_disagree(rng):
    # one sharp prediction and one low-precision blanket prediction:
    # averaging P/R first is not the same as averaging per-image F
    gt1 = np.zeros((8, 8), dtype=np.uint8)
    gt1[:4] = 1
    gt2 = np.zeros((8, 8), dtype=np.uint8)
    gt2[0, :4] = 1
    sharp = gt1.astype(np.float64)
    blanket = np.full((8, 8), 0.9)
    a = metrics.evaluate_dataset([sharp, blanket], [gt1, gt2], "average_then_f")
    b = metrics.evaluate_dataset([sharp, blanket], [gt1, gt2], "f_then_average")
    assert a.max_f != b.max_f


def test_input_validation(rng):
    with pytest.raises(ValueError):
        metrics.evaluate_dataset([], [])
    with pytest.raises(ValueError):
        metrics.evaluate_dataset([np.zeros((2, 2))], [])
    with pytest.raises(ValueError):
        metrics.evaluate_dataset([np.full((2, 2), 1.5)],
                                 [np.ones((2, 2), np.uint8)])
    with pytest.raises(ValueError):
        metrics.evaluate_dataset([np.zeros((2, 2))],
                                 [np.ones((3, 3), np.uint8)])


def test_csv_outputs(tmp_path, rng):
    preds, gts = random_corpus(rng, 4)
    rep = metrics.evaluate_dataset(preds, gts)
    mpath = str(tmp_path / "metrics.csv")
    ppath = str(tmp_path / "pr.csv")
    metrics.write_metrics_csv(rep, mpath, "toy")
    metrics.write_pr_csv(rep, ppath)
    mlines = open(mpath).read().splitlines()
    assert mlines[0] == "dataset,maxF,MAE"
    assert mlines[1] == f"toy,{rep.max_f:.6f},{rep.mae:.6f}"
    plines = open(ppath).read().splitlines()
    assert plines[0] == "threshold,precision,recall"
    assert len(plines) == 257
    t, p, r = plines[129].split(",")
    assert int(t) == 128
    assert float(p) == pytest.approx(rep.curve[128].precision, abs=5e-7)
