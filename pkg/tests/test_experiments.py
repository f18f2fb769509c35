import json
import math
from fractions import Fraction

import pytest

from isoclass import experiments
from isoclass.exceptions import ConfigError, DegenerateBuckets, InternalInconsistency, TheoryUnavailable
from isoclass.experiments import (
    KINDS,
    EmpiricalDist,
    ExperimentConfig,
    SweepPoint,
    bootstrap_tv_se,
    chi_square,
    class_label,
    convergence_sweep,
    nonincreasing_within,
    parse_class_label,
    partition_law,
    pretty_label,
    report_from_json,
    report_to_csv,
    report_to_json,
    rows_from_csv,
    run,
    simulate,
    tv_distance,
    tv_to_truncated,
    z_score,
)
from isoclass.padic_linalg import Partition

SMALL = {
    "coker": dict(p=2, n=4, E=8),
    "coker_exhaustive": dict(p=2, n=2, E0=2, E=6),
    "stratum": dict(p=3, n=3, r=1, E=8),
    "rst": dict(p=2, n=3, r=0, E=8),
    "moment": dict(p=2, n=3, q=4, m=1, E=8),
    "igusa": dict(p=2, n=2, s=1, E=8),
    "pairing_match": dict(p=2, n=4, e_list=(0, 1), E=4),
    "global_sha": dict(r=1, prime_set=(2, 3), E=8),
    "kernel_dim": dict(p=2, n=5, E=1),
    "uniformity": dict(p=2, n=2, E=2),
}


def small_config(kind, trials=400, seed=3):
    return ExperimentConfig(kind=kind, trials=trials, master_seed=seed, **SMALL[kind])


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(kind="nope"),
            dict(kind="coker", p=4),
            dict(kind="coker", n=3),
            dict(kind="coker", trials=0),
            dict(kind="coker", E=10, E_cap=8),
            dict(kind="stratum", n=4, r=1),
            dict(kind="moment", p=2, q=9),
            dict(kind="moment", p=2, q=4, m=5, n=3),
            dict(kind="pairing_match", e_list=()),
            dict(kind="pairing_match", e_list=(3,), E=4),
            dict(kind="coker_exhaustive", n=6, E0=3, E=6),
            dict(kind="global_sha", prime_set=(4,)),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs)

    def test_rank_two_has_no_law(self):
        with pytest.raises(TheoryUnavailable):
            ExperimentConfig(kind="rst", r=2, n=4)

    def test_defaults(self):
        c = ExperimentConfig(kind="moment", p=3, n=2, E=5)
        assert c.q == 3 and c.E_cap == 20

    def test_dict_round_trip(self):
        c = small_config("global_sha")
        assert ExperimentConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kind": "coker", "bogus": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"p": 2})


class TestLabels:
    @pytest.mark.parametrize(
        "kind,key",
        [
            ("coker", Partition([2, 2, 1, 1])),
            ("coker", Partition()),
            ("rst", (1, Partition([1, 1]))),
            ("global_sha", ((2, Partition([1, 1])), (3, Partition()))),
            ("global_sha", ()),
            ("kernel_dim", 3),
            ("pairing_match", "no_match"),
            ("uniformity", (0, 1, 1, 0)),
        ],
    )
    def test_round_trip(self, kind, key):
        assert parse_class_label(kind, class_label(kind, key)) == key

    def test_pretty(self):
        assert pretty_label("coker", Partition([2, 1]), 3) == "Z/9 ⊕ Z/3"
        assert pretty_label("rst", (0, Partition()), 2) == "r=0, T=0"


class TestStatistics:
    def test_tv(self):
        assert tv_distance({"a": 0.5, "b": 0.5}, {"a": 1.0}) == 0.5
        assert tv_distance({"a": 1.0}, {"a": 1.0}) == 0

    def test_tv_truncated_tail_bucket(self):
        counts = {"a": 50, "b": 30, "c": 20}
        law = {"a": 0.5, "b": 0.3}
        assert tv_to_truncated(counts, law) == pytest.approx(0.0)
        assert tv_to_truncated({"a": 100}, law) == pytest.approx(0.5)

    def test_z_score(self):
        assert z_score(60, 100, 0.5) == pytest.approx(2.0)
        assert z_score(0, 100, 0.0) == 0.0
        assert math.isinf(z_score(1, 100, 0.0))

    def test_chi_square_against_scipy(self):
        from scipy.stats import chisquare

        counts = {"a": 480, "b": 270, "c": 250}
        law = {"a": 0.5, "b": 0.25, "c": 0.25}
        res = chi_square(counts, law)
        ref = chisquare([480, 270, 250], [500, 250, 250])
        assert res.stat == pytest.approx(ref.statistic)
        assert res.p_value == pytest.approx(ref.pvalue)
        assert res.dof == 2

    def test_chi_square_buckets_rare_classes(self):
        counts = {"a": 90, "b": 8, "c": 2}
        law = {"a": 0.9, "b": 0.08, "c": 0.02}
        res = chi_square(counts, law)
        assert res.buckets == 2

    def test_degenerate(self):
        with pytest.raises(DegenerateBuckets):
            chi_square({"a": 10}, {"a": 1.0})

    def test_bootstrap_is_deterministic(self):
        counts = {"a": 500, "b": 500}
        law = {"a": 0.5, "b": 0.5}
        assert bootstrap_tv_se(counts, law) == bootstrap_tv_se(counts, law)
        assert 0 < bootstrap_tv_se(counts, law) < 0.05

    def test_nonincreasing_within(self):
        pts = [SweepPoint(2, 0.2, 0.01, 100), SweepPoint(4, 0.1, 0.01, 100), SweepPoint(6, 0.11, 0.01, 100)]
        assert nonincreasing_within(pts)
        pts[2] = SweepPoint(6, 0.2, 0.01, 100)
        assert not nonincreasing_within(pts)

    def test_partition_law_finite(self):
        exact, limit = partition_law(2, 4, 0, finite=True)
        assert exact[Partition()] == Fraction(7, 16)
        # the finite-n mass of order 2^(2k) decays like 2^-k; k stops at LAW_MAX_K
        assert 0 < 1 - sum(exact.values()) < 2.0 ** -experiments.LAW_MAX_K
        assert Partition([3, 3]) in exact
        assert set(exact) <= set(limit)


class TestSimulate:
    def test_conservation(self):
        with pytest.raises(InternalInconsistency):
            EmpiricalDist("coker", {Partition(): 3}, 5, 1, 0, {})

    @pytest.mark.parametrize("kind", KINDS)
    def test_every_kind_runs_and_is_thread_invariant(self, kind):
        config = small_config(kind, trials=300)
        one = simulate(config, threads=1)
        many = simulate(config, threads=4)
        assert one == many
        assert sum(one.counts.values()) + one.unresolved_count == config.trials
        report = experiments.compare(config, one)
        assert report.checks

    def test_seed_changes_outcome(self):
        a = simulate(small_config("coker", seed=1))
        b = simulate(small_config("coker", seed=2))
        assert a.counts != b.counts

    def test_prefix_stable(self):
        # trial t depends only on (seed, t)
        short = simulate(small_config("uniformity", trials=100))
        long = simulate(small_config("uniformity", trials=101))
        diff = {k: long.counts.get(k, 0) - short.counts.get(k, 0) for k in long.counts}
        assert sum(diff.values()) == 1 and min(diff.values()) >= 0

    def test_wide_replay_matches_compiled(self, monkeypatch):
        config = ExperimentConfig(kind="coker", p=2, n=4, E=3, E_cap=24, trials=200, master_seed=9)
        fast = simulate(config)
        monkeypatch.setattr(experiments._backend, "fast_limit", lambda p: 3)
        mixed = simulate(config)
        monkeypatch.setattr(experiments._backend, "fast_limit", lambda p: 0)
        wide = simulate(config)
        assert fast.counts == mixed.counts == wide.counts
        assert mixed.diagnostics["wide_replays"] > 0
        assert wide.diagnostics["wide_replays"] == config.trials

    def test_beyond_int64_precision(self):
        config = ExperimentConfig(kind="coker", p=2, n=2, E=20, E_cap=40, trials=100, master_seed=4)
        dist = simulate(config)
        assert dist.unresolved_count == 0
        assert dist.diagnostics["wide_replays"] >= 0


class TestReports:
    def test_coker_report(self):
        config = ExperimentConfig(kind="coker", p=2, n=2, E=8, trials=20000, master_seed=11)
        dist, report = run(config)
        row = report.row("")
        assert row.theory_exact == "1/2"
        assert abs(row.z_score) < 4
        assert report.passed

    def test_rst_report_checks(self):
        dist, report = run(small_config("rst", trials=2000))
        assert report.check("rank_ge_2_after_escalation").value == 0
        assert abs(report.check("prob_rank0_z").value) < 4

    @pytest.mark.parametrize("kind", ["coker", "rst", "global_sha", "uniformity", "pairing_match"])
    def test_json_round_trip(self, kind):
        config = small_config(kind, trials=300)
        dist, report = run(config)
        text = report_to_json(config, dist, report)
        config2, dist2, report2 = report_from_json(text)
        assert config2 == config and dist2 == dist and report2 == report
        assert report_to_json(config2, dist2, report2) == text

    def test_json_schema(self):
        config = small_config("coker", trials=300)
        dist, report = run(config)
        data = json.loads(report_to_json(config, dist, report, runtime=1.5))
        for key in ("schema_version", "config", "seed", "distribution", "theory", "classes", "statistics", "checks", "passed"):
            assert key in data
        assert data["runtime_seconds"] == 1.5
        assert "runtime_seconds" not in json.loads(report_to_json(config, dist, report))

    def test_schema_version_checked(self):
        config = small_config("coker", trials=50)
        dist, report = run(config)
        data = json.loads(report_to_json(config, dist, report))
        data["schema_version"] = 99
        with pytest.raises(ConfigError):
            report_from_json(json.dumps(data))

    def test_csv_round_trip(self):
        config = small_config("coker", trials=500)
        dist, report = run(config)
        rows = rows_from_csv(report_to_csv(report))
        assert [r.label for r in rows] == [r.label for r in report.rows]
        for a, b in zip(rows, report.rows):
            assert a.count == b.count and a.theory_exact == b.theory_exact
            assert a.empirical == pytest.approx(b.empirical)


class TestSweep:
    def test_rejects_kind(self):
        with pytest.raises(ConfigError):
            convergence_sweep("igusa", [2])

    def test_coker_sweep(self):
        points = convergence_sweep("coker", [2, 6], p=2, E=8, trials=3000, master_seed=5)
        assert [pt.n for pt in points] == [2, 6]
        assert points[1].tv < points[0].tv
        assert all(pt.tv_se > 0 and pt.resolved > 0 for pt in points)
