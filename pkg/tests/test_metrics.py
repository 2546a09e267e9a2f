import math
import random

import numpy as np
import pytest

import oracles
from suitmatrix.errors import EmptyTrace, InvalidArgument, NoMatchedPairs, TooFewReps
from suitmatrix.metrics import (
    aggregate,
    aggregate_values,
    RatioPair,
    histogram,
    pairs_histogram,
    ratio_histogram,
    ratio_pairs,
    summarize_by_operation,
    summary_csv,
    summary_to_csv,
    threshold_table,
)
from suitmatrix.rng import stream
from suitmatrix.simcore import parse_cluster_spec, run_sim
from suitmatrix.timemodel import DEFAULT_RATIOS, build_etc, sample_ratios
from suitmatrix.workload import ContentType, Operation, TraceRecord, generate_workload, parse_trace

ORDER = ["general", "cpu_opt", "mem_opt", "gpu"]


def rec(vm, t, video="v", gop=0, op=Operation.CODEC):
    return TraceRecord(video, gop, op, vm, ContentType.SLOW, 1.0, 30, t)


def test_two_pair_moments():
    trace = [rec("gpu", 1.0, gop=0), rec("gpu", 1.0, gop=1), rec("general", 2.0, gop=0), rec("general", 3.0, gop=1)]
    h = ratio_histogram(trace, bin_width=1.0)
    assert h.mean == 2.5
    assert h.std == pytest.approx(math.sqrt(0.5))
    assert h.counts == (1, 1) and h.bin_edges == (2.0, 3.0, 4.0)


def test_normal_round_trip():
    # untruncated draws include a few negative ratios, so go through matched pairs
    ratios = sample_ratios(DEFAULT_RATIOS["cpu_opt"], stream(8), 10**5, truncate=False)
    h = pairs_histogram(RatioPair("v", i, "codec", "cpu_opt", float(r)) for i, r in enumerate(ratios))
    assert abs(h.mean - 1.263) <= 0.01 and abs(h.std - 0.508) <= 0.01
    assert h.n == 10**5


def test_ratio_histogram_from_trace_round_trip():
    gen = np.random.default_rng(9)
    ratios = np.abs(gen.normal(1.263, 0.508, 10**5)) + 1e-9
    base = gen.uniform(1, 10, ratios.size)
    trace = []
    for i, (b, r) in enumerate(zip(base, ratios)):
        trace += [rec("gpu", float(b), gop=i), rec("cpu_opt", float(b * r), gop=i)]
    h = ratio_histogram(trace, bin_width=0.1)
    assert h.mean == pytest.approx(ratios.mean(), abs=1e-9)
    assert h.std == pytest.approx(ratios.std(ddof=1), abs=1e-9)


def test_baseline_only_trace():
    with pytest.raises(NoMatchedPairs):
        ratio_histogram([rec("gpu", 1.0)])
    with pytest.raises(NoMatchedPairs):
        threshold_table([rec("gpu", 1.0)])


def test_skipped_pairs_and_duplicates():
    trace = [rec("gpu", 2.0), rec("gpu", 4.0), rec("general", 6.0), rec("general", 9.0, gop=7)]
    pairs, skipped = ratio_pairs(trace)
    assert skipped == 1
    assert [p.ratio for p in pairs] == [2.0]


def test_histogram_bad_width():
    with pytest.raises(InvalidArgument):
        histogram([1.0], 0.0)


def test_histogram_counts_and_permutation():
    r = random.Random(3)
    vals = [r.uniform(0.2, 4) for _ in range(500)]
    h = histogram(vals, 0.25)
    assert h.n == len(vals)
    shuffled = vals[:]
    random.Random(1).shuffle(shuffled)
    h2 = histogram(shuffled, 0.25)
    assert h2.counts == h.counts
    assert h2.mean == pytest.approx(h.mean, rel=1e-12)
    assert h2.std == pytest.approx(h.std, rel=1e-12)


def test_sample_trace_goldens(sample_text):
    trace = parse_trace(sample_text)
    for theta, strict in [(1.0, True), (1.2, False), (2.0, True)]:
        assert threshold_table(trace, threshold=theta, strict=strict).to_csv() == oracles.threshold_csv(
            sample_text, theta, strict
        )
    assert summary_to_csv(summarize_by_operation(trace), ORDER) == oracles.summary_csv(sample_text)
    assert ratio_histogram(trace, bin_width=0.1).to_csv() == oracles.histogram_csv(sample_text, 0.1)
    for vm in ORDER[:3]:
        assert ratio_histogram(trace, bin_width=0.5, vm_type=vm).to_csv() == oracles.histogram_csv(sample_text, 0.5, vm)


def test_threshold_monotone(sample_text):
    trace = parse_trace(sample_text)
    grid = [0.5, 1.0, 1.2, 2.0, 3.0]
    for a in grid:
        for b in grid:
            if a <= b:
                lo = threshold_table(trace, threshold=a, strict=True).cells
                hi = threshold_table(trace, threshold=b, strict=False).cells
                assert all(lo[k] <= hi[k] for k in lo)


def test_summarize_examples():
    assert summarize_by_operation([rec("gpu", 3.5)]) == {("gpu", "codec"): (3.5, 1)}
    assert summarize_by_operation([rec("gpu", 4.0), rec("gpu", 6.0, gop=1)]) == {("gpu", "codec"): (5.0, 2)}
    with pytest.raises(EmptyTrace):
        summarize_by_operation([])


def test_summarize_per_video(sample_text):
    s = summarize_by_operation(parse_trace(sample_text), per_video=True)
    assert {k[0] for k in s} == {"v1", "v2", "v3"}
    assert summary_to_csv(s, ORDER).splitlines()[0] == "video_id,vm_type,operation,mean_s,n"


def test_aggregate_examples():
    flat = aggregate_values([1, 1, 1, 1], "miss_rate")
    assert (flat.mean, flat.ci_half_width, flat.n_reps) == (1.0, 0.0, 4)
    two = aggregate_values([0, 2], "cost_usd")
    assert two.mean == 1.0
    assert two.ci_half_width == pytest.approx(1.96)
    with pytest.raises(TooFewReps):
        aggregate_values([1.0], "miss_rate")
    with pytest.raises(InvalidArgument):
        aggregate_values([1.0, 2.0], "latency")


def test_half_width_scales_with_sqrt_n():
    r = random.Random(2)
    base = [r.random() for _ in range(60)]
    h1 = aggregate_values(base, "miss_rate").ci_half_width
    h4 = aggregate_values(base * 4, "miss_rate").ci_half_width
    # duplicating shifts the n-1 denominator, so compare against the exact ratio
    s1 = np.std(base, ddof=1)
    s4 = np.std(base * 4, ddof=1)
    assert h4 / h1 == pytest.approx((s4 / s1) / 2, rel=1e-12)
    assert h4 / h1 == pytest.approx(0.5, rel=0.01)


def test_aggregate_replications_deterministic():
    cluster = parse_cluster_spec("gpu=1,cpu_opt=1,general=1")

    def reps():
        out = []
        for seed in range(30):
            wl = generate_workload(20, {"mixed": 1.0}, 60.0, seed)
            out.append(run_sim(wl, build_etc(wl, seed=seed), cluster, pref=0.4, seed=seed))
        return out

    a, b = reps(), reps()
    for metric in ("startup_delay_s", "miss_rate", "cost_usd"):
        assert aggregate(a, metric) == aggregate(b, metric)
    text = summary_csv(a)
    assert text == summary_csv(b)
    assert text.splitlines()[0] == "metric,mean,ci_half_width,n_reps"
