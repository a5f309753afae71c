import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixtures_data import DEVIATION_A_VS_B, EXPOSURE_1000
from stagemix import (
    BUILTIN_CONDITION_IDS,
    DatasetSource,
    InvalidScheduleError,
    ScheduleCondition,
    StagePlan,
    builtin_condition,
    builtin_registry,
    compare_exposure,
    compute_exposure,
    registry_digest,
    validate_condition,
)
from stagemix.schedule import condition_as_dict, condition_from_dict


@pytest.fixture
def registry():
    return builtin_registry()


def make_condition(cond_id="X", stages=None):
    if stages is None:
        stages = (
            StagePlan(1, 100, {"LLaVA-Pretrain": 1.0}),
            StagePlan(2, 1000, {"ShareGPT4V": 0.5, "AI2D": 0.5}),
        )
    return ScheduleCondition(id=cond_id, stages=stages)


class TestBuiltins:
    def test_all_builtin_conditions_validate(self, registry):
        for cond_id in BUILTIN_CONDITION_IDS:
            cond = builtin_condition(cond_id, (100, 1000, 1000))
            result = validate_condition(cond, registry)
            assert result.ok, result.violations
            assert result.violations == ()

    def test_first_stage_is_alignment_only(self, registry):
        align = {src.name for src in registry if src.group == "D0-alignment"}
        for cond_id in BUILTIN_CONDITION_IDS:
            stage1 = builtin_condition(cond_id, (1, 1, 1)).stages[0]
            assert set(stage1.distribution) <= align
            assert sum(stage1.distribution.values()) == 1.0

    def test_stage_probabilities_sum_to_one(self):
        for cond_id in BUILTIN_CONDITION_IDS:
            for stage in builtin_condition(cond_id, (1, 1, 1)).stages:
                assert math.isclose(sum(stage.distribution.values()), 1.0, abs_tol=1e-12)

    def test_direct_mixture_repeats_its_distribution(self):
        cond = builtin_condition("A", (1, 1, 1))
        assert cond.stages[1].distribution == cond.stages[2].distribution

    def test_reverse_curriculum_swaps_post_alignment_stages(self):
        b = builtin_condition("B", (1, 1, 1))
        d = builtin_condition("D", (1, 1, 1))
        assert d.stages[1].distribution == b.stages[2].distribution
        assert d.stages[2].distribution == b.stages[1].distribution

    def test_balanced_condition_is_uniform(self):
        cond = builtin_condition("C", (1, 1, 1))
        for stage in cond.stages[1:]:
            assert set(stage.distribution.values()) == {0.20}
            assert len(stage.distribution) == 5

    def test_unknown_condition_id(self):
        with pytest.raises(ValueError, match="unknown built-in condition"):
            builtin_condition("E", (1, 1, 1))

    def test_steps_must_be_three_nonnegative_ints(self):
        with pytest.raises(ValueError, match="exactly 3"):
            builtin_condition("A", (1, 1))
        with pytest.raises(ValueError, match="non-negative"):
            builtin_condition("A", (1, -1, 1))
        with pytest.raises(ValueError, match="non-negative"):
            builtin_condition("A", (1, 1.5, 1))


class TestValidation:
    def test_violations_come_back_as_data(self, registry):
        # an invalid condition must not raise, it must enumerate
        cond = make_condition(stages=(StagePlan(1, 10, {"ShareGPT4V": 1.0}),))
        result = validate_condition(cond, registry)
        assert not result.ok
        assert any("stage 1" in v and "D0-alignment" in v for v in result.violations)

    def test_ok_result_has_empty_violations(self, registry):
        result = validate_condition(make_condition(), registry)
        assert result.ok and result.violations == ()
        assert result.as_dict() == {"ok": True, "violations": []}

    def test_probability_sum_violation(self, registry):
        cond = make_condition(
            stages=(
                StagePlan(1, 10, {"LLaVA-Pretrain": 1.0}),
                StagePlan(2, 10, {"ShareGPT4V": 0.6, "AI2D": 0.6}),
            )
        )
        result = validate_condition(cond, registry)
        assert any("probability sum" in v for v in result.violations)

    def test_probability_range_violation(self, registry):
        cond = make_condition(
            stages=(
                StagePlan(1, 10, {"LLaVA-Pretrain": 1.0}),
                StagePlan(2, 10, {"ShareGPT4V": 1.5, "AI2D": -0.5}),
            )
        )
        result = validate_condition(cond, registry)
        assert sum("outside [0, 1]" in v for v in result.violations) == 2

    def test_unknown_dataset_reference(self, registry):
        cond = make_condition(
            stages=(
                StagePlan(1, 10, {"LLaVA-Pretrain": 1.0}),
                StagePlan(2, 10, {"Mystery": 1.0}),
            )
        )
        result = validate_condition(cond, registry)
        assert any("absent from the registry" in v for v in result.violations)

    def test_stage_indices_must_be_consecutive(self, registry):
        cond = make_condition(
            stages=(
                StagePlan(1, 10, {"LLaVA-Pretrain": 1.0}),
                StagePlan(3, 10, {"ShareGPT4V": 1.0}),
            )
        )
        result = validate_condition(cond, registry)
        assert any("consecutive" in v for v in result.violations)

    def test_single_stage_condition_rejected(self, registry):
        cond = make_condition(stages=(StagePlan(1, 10, {"LLaVA-Pretrain": 1.0}),))
        result = validate_condition(cond, registry)
        assert any("at least two stages" in v for v in result.violations)

    def test_negative_steps_rejected(self, registry):
        cond = make_condition(
            stages=(
                StagePlan(1, -5, {"LLaVA-Pretrain": 1.0}),
                StagePlan(2, 10, {"ShareGPT4V": 1.0}),
            )
        )
        result = validate_condition(cond, registry)
        assert any("non-negative integer" in v for v in result.violations)

    def test_registry_duplicate_names(self):
        registry = (
            DatasetSource("X", "D1-general", 10),
            DatasetSource("X", "D1-general", 10),
        )
        result = validate_condition(make_condition(), registry)
        assert any("duplicate dataset name" in v for v in result.violations)

    def test_registry_bad_group_and_size(self):
        registry = (
            DatasetSource("X", "D9-unknown", 10),
            DatasetSource("Y", "D1-general", 0),
        )
        result = validate_condition(make_condition(), registry)
        assert any("unknown group" in v for v in result.violations)
        assert any("positive integer" in v for v in result.violations)

    def test_builtin_ids_require_standard_registry(self):
        small = (
            DatasetSource("LLaVA-Pretrain", "D0-alignment", 10),
            DatasetSource("ShareGPT4V", "D1-general", 10),
        )
        cond = builtin_condition("A", (1, 1, 1))
        result = validate_condition(cond, small)
        assert not result.ok

    def test_zero_probability_outside_alignment_is_fine_in_stage_one(self, registry):
        # only positive mass is constrained to the alignment group
        cond = make_condition(
            stages=(
                StagePlan(1, 10, {"LLaVA-Pretrain": 1.0, "ShareGPT4V": 0.0}),
                StagePlan(2, 10, {"ShareGPT4V": 1.0}),
            )
        )
        assert validate_condition(cond, registry).ok

    def test_validation_is_pure(self, registry):
        cond = builtin_condition("B", (10, 10, 10))
        before = condition_as_dict(cond)
        validate_condition(cond, registry)
        validate_condition(cond, registry)
        assert condition_as_dict(cond) == before

    def test_revalidation_is_stable(self, registry):
        """Serializing and reparsing a condition must not change its verdict."""
        for cond_id in BUILTIN_CONDITION_IDS:
            cond = builtin_condition(cond_id, (5, 7, 9))
            again = condition_from_dict(condition_as_dict(cond))
            assert again == cond
            assert validate_condition(again, registry) == validate_condition(cond, registry)


class TestExposure:
    def test_frozen_exposure_table(self, registry):
        for cond_id, expected in EXPOSURE_1000.items():
            cond = builtin_condition(cond_id, (0, 1000, 1000))
            report = compute_exposure(cond, registry=registry)
            assert report.rows[0].per_dataset == expected

    def test_exposure_sums_to_post_alignment_budget(self, registry):
        for cond_id in BUILTIN_CONDITION_IDS:
            cond = builtin_condition(cond_id, (123, 1700, 300))
            row = compute_exposure(cond, registry=registry).rows[0]
            total = sum(row.per_dataset.values())
            assert math.isclose(total, 2000.0, rel_tol=1e-6)
            assert row.post_steps == 2000

    def test_stage_one_contributes_nothing(self, registry):
        small = compute_exposure(builtin_condition("A", (0, 10, 10)), registry=registry)
        big = compute_exposure(builtin_condition("A", (999_999, 10, 10)), registry=registry)
        assert small.rows[0].per_dataset == big.rows[0].per_dataset

    def test_a_vs_b_deviation(self, registry):
        a = builtin_condition("A", (0, 1000, 1000))
        b = builtin_condition("B", (0, 1000, 1000))
        report = compare_exposure([a, b], registry=registry)
        assert report.deviation == DEVIATION_A_VS_B
        assert report.deviation["DocVQA"] == 0.20
        # 0.20 exceeds the default 0.10 threshold; 1/26 and exactly-0.10 do not
        assert report.flagged == ("DocVQA", "TextVQA")
        assert report.budgets_match()

    def test_swapped_stage_order_gives_identical_exposure(self, registry):
        b = builtin_condition("B", (0, 1000, 1000))
        d = builtin_condition("D", (0, 1000, 1000))
        report = compare_exposure([b, d], registry=registry)
        assert all(v == 0.0 for v in report.deviation.values())
        assert all(v == 0.0 for v in report.group_deviation.values())
        assert report.flagged == ()

    def test_group_rollup(self, registry):
        report = compute_exposure(builtin_condition("B", (0, 1000, 1000)), registry=registry)
        groups = report.rows[0].per_group
        assert groups["D1-general"] == 900.0
        assert groups["D2-reasoning"] == 500.0
        assert groups["D3-ocr"] == 600.0
        assert groups["D0-alignment"] == 0.0

    def test_zero_over_zero_deviation_is_zero(self, registry):
        report = compare_exposure(
            [builtin_condition("A", (10, 5, 5)), builtin_condition("B", (10, 5, 5))],
            registry=registry,
        )
        assert report.deviation["LLaVA-Pretrain"] == 0.0

    def test_budget_mismatch_is_reported_not_raised(self, registry):
        report = compare_exposure(
            [builtin_condition("A", (0, 1000, 1000)), builtin_condition("B", (0, 500, 500))],
            registry=registry,
        )
        assert not report.budgets_match()
        assert report.as_dict()["budgets_match"] is False

    def test_duplicate_condition_ids_stay_separate_rows(self, registry):
        conds = [builtin_condition("A", (0, 10, 10)), builtin_condition("A", (0, 20, 20))]
        report = compare_exposure(conds, registry=registry)
        assert [row.condition for row in report.rows] == ["A", "A"]
        assert report.rows[0].post_steps == 20 and report.rows[1].post_steps == 40

    def test_invalid_condition_raises(self, registry):
        bad = make_condition(stages=(StagePlan(1, 10, {"ShareGPT4V": 1.0}),))
        with pytest.raises(InvalidScheduleError) as err:
            compute_exposure(bad, registry=registry)
        assert err.value.violations

    def test_without_registry_only_structure_is_checked(self):
        # stage-1 group rule needs a registry, so this passes structurally
        cond = make_condition(
            stages=(
                StagePlan(1, 10, {"Whatever": 1.0}),
                StagePlan(2, 10, {"Other": 1.0}),
            )
        )
        report = compute_exposure(cond)
        assert report.rows[0].per_dataset == {"Whatever": 0.0, "Other": 10.0}
        assert report.group_deviation == {}

    def test_empty_condition_list_rejected(self, registry):
        with pytest.raises(ValueError, match="at least one condition"):
            compare_exposure([], registry=registry)

    def test_negative_warn_threshold_rejected(self, registry):
        with pytest.raises(ValueError, match="non-negative"):
            compute_exposure(builtin_condition("A", (1, 1, 1)), registry=registry, warn_threshold=-0.1)

    @given(
        t2=st.integers(min_value=0, max_value=10_000),
        t3=st.integers(min_value=0, max_value=10_000),
        weights=st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=5),
    )
    def test_exposure_invariant_under_stage_swap(self, t2, t3, weights):
        """Swapping whole post-alignment stages (budget and distribution together)
        never changes any dataset's total exposure."""
        names = [f"ds{i}" for i in range(len(weights))]
        total = sum(weights)
        dist_a = {n: w / total for n, w in zip(names, weights)}
        dist_b = dict(reversed(list(dist_a.items())))
        stage1 = StagePlan(1, 1, {"ds0": 1.0})
        fwd = ScheduleCondition(id="f", stages=(stage1, StagePlan(2, t2, dist_a), StagePlan(3, t3, dist_b)))
        rev = ScheduleCondition(id="r", stages=(stage1, StagePlan(2, t3, dist_b), StagePlan(3, t2, dist_a)))
        report = compare_exposure([fwd, rev])
        assert all(v == 0.0 for v in report.deviation.values())


class TestRegistryDigest:
    def test_digest_is_order_insensitive(self, registry):
        assert registry_digest(registry) == registry_digest(tuple(reversed(registry)))

    def test_digest_changes_with_content(self, registry):
        changed = list(registry)
        changed[0] = DatasetSource(changed[0].name, changed[0].group, changed[0].size + 1)
        assert registry_digest(changed) != registry_digest(registry)

    def test_digest_format(self, registry):
        digest = registry_digest(registry)
        assert digest.startswith("sha256:") and len(digest) == len("sha256:") + 64
