import numpy as np
import pytest

from clutterwhiten.bench import (
    CSV_HEADER,
    BenchConfig,
    EquivalenceError,
    StrategySpec,
    rel_deviation,
    run_bench,
    verify_equivalence,
)


def test_strategy_parse():
    s = StrategySpec.parse("naive-serial")
    assert (s.backend, s.mode, s.workers) == ("naive", "serial", 1)
    s = StrategySpec.parse("recursive-parallel:6")
    assert (s.backend, s.mode, s.workers) == ("recursive", "parallel", 6)
    s = StrategySpec.parse("recursive-parallel", default_workers=3)
    assert s.workers == 3
    with pytest.raises(ValueError):
        StrategySpec.parse("naive-parallel:2")
    with pytest.raises(ValueError):
        StrategySpec.parse("quantum")


def test_config_validation(params):
    with pytest.raises(ValueError, match="repetitions"):
        BenchConfig(repetitions=2).validate(params)
    with pytest.raises(ValueError, match="frame count"):
        BenchConfig(frames=8).validate(params)
    with pytest.raises(ValueError, match="warmup"):
        BenchConfig(frames=12, warmup_frames=3).validate(params)
    with pytest.raises(ValueError, match="unknown stage"):
        BenchConfig(stages=("spectral",)).validate(params)
    BenchConfig().validate(params)


def _bundles():
    rng = np.random.default_rng(0)
    spectrum = rng.standard_normal((4, 4, 5)) + 1j * rng.standard_normal((4, 4, 5))
    residuals = rng.standard_normal((3, 8, 8)).astype(np.float32)
    return {
        "recursive-serial": {
            "backend": "recursive", "mode": "serial",
            "spectrum": spectrum, "residuals": residuals,
        },
        "recursive-parallel:4": {
            "backend": "recursive", "mode": "parallel",
            "spectrum": spectrum.copy(), "residuals": residuals.copy(),
        },
        "naive-serial": {
            "backend": "naive", "mode": "serial",
            "spectrum": spectrum * (1 + 2e-5), "residuals": residuals.copy(),
        },
    }


def test_verify_equivalence_accepts_matching_outputs():
    assert verify_equivalence(_bundles()) == []


def test_verify_equivalence_flags_spectrum_deviation():
    bundles = _bundles()
    bundles["naive-serial"]["spectrum"] = bundles["recursive-serial"]["spectrum"] * 1.01
    issues = verify_equivalence(bundles)
    assert len(issues) == 1
    assert "spectra deviate" in issues[0]


def test_verify_equivalence_flags_residual_bit_difference():
    bundles = _bundles()
    perturbed = bundles["recursive-parallel:4"]["residuals"].copy()
    perturbed[1, 3, 3] += np.float32(1e-6)
    bundles["recursive-parallel:4"]["residuals"] = perturbed
    issues = verify_equivalence(bundles)
    assert len(issues) == 1
    assert "not bit-identical" in issues[0]


def test_verify_equivalence_needs_two_strategies():
    bundles = _bundles()
    assert verify_equivalence({"recursive-serial": bundles["recursive-serial"]}) == []


def test_rel_deviation_metric():
    a = np.array([1.0, 2.0, 0.0])
    assert rel_deviation(a, a) == 0.0
    assert rel_deviation(a * (1 + 1e-5), a) == pytest.approx(1e-5, rel=1e-2)


@pytest.fixture(scope="module")
def small_report(params):
    config = BenchConfig(
        width=32,
        height=32,
        frames=10,
        repetitions=3,
        warmup_frames=5,
        strategies=(
            StrategySpec("naive", "serial"),
            StrategySpec("recursive", "serial"),
            StrategySpec("recursive", "parallel", workers=2),
        ),
        seed=7,
    )
    return run_bench(config, params)


def test_report_has_row_per_stage_strategy(small_report):
    combos = {(r.stage, r.strategy) for r in small_report.rows}
    for stage in ("spectrum", "conditioning", "autocorr", "filtering", "pipeline"):
        assert (stage, "naive-serial") in combos
        assert (stage, "recursive-serial") in combos
        assert (stage, "recursive-parallel") in combos
    assert small_report.core_count >= 1
    assert small_report.notes == []


def test_report_rates_positive_and_speedup_consistent(small_report):
    by_stage = {}
    for r in small_report.rows:
        assert r.fps_min <= r.fps_median <= r.fps_max
        assert r.fps_median > 0
        by_stage.setdefault(r.stage, {})[r.strategy] = r
    for stage, rows in by_stage.items():
        base = rows["naive-serial"].fps_median
        for r in rows.values():
            assert r.speedup == pytest.approx(r.fps_median / base, rel=1e-9)
        assert rows["naive-serial"].speedup == pytest.approx(1.0)
    # the recursive engine must beat the literal per-pixel recomputation
    assert by_stage["spectrum"]["recursive-serial"].speedup > 1.0


def test_report_csv_contract(small_report):
    lines = small_report.to_csv().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[0] == (
        "stage,strategy,workers,fps_median,fps_min,fps_max,speedup_vs_baseline"
    )
    assert len(lines) == 1 + len(small_report.rows)
    first = lines[1].split(",")
    assert first[0] in ("spectrum", "conditioning", "autocorr", "filtering", "pipeline")
    float(first[3]), float(first[6])


def test_report_markdown_mentions_rows(small_report):
    md = small_report.to_markdown()
    assert "| spectrum |" in md
    assert "CPU core" in md


def test_unavailable_strategy_is_reported_not_fatal(params):
    config = BenchConfig(
        width=32,
        height=32,
        frames=10,
        repetitions=3,
        warmup_frames=5,
        strategies=(
            StrategySpec("recursive", "serial"),
            StrategySpec("recursive", "parallel", workers=8),
        ),
        stages=("pipeline",),
        max_workers=2,
        seed=7,
    )
    report = run_bench(config, params)
    assert any("exceeds configured maximum" in n for n in report.notes)
    assert {r.strategy for r in report.rows} == {"recursive-serial"}


def test_equivalence_error_type():
    assert issubclass(EquivalenceError, RuntimeError)
