"""Multi-stage data-mixture schedules: dataset registry, conditions, exposure accounting.

A schedule condition is an ordered list of stages. Each stage runs for a fixed
number of training steps under one categorical sampling distribution over
dataset names. Stage 1 is the alignment stage and may only draw from
``D0-alignment`` datasets; stages 2+ are the post-alignment stages that carry
the actual mixture strategy.

Four built-in conditions ship with the toolkit:

    A  direct mixture      same mixed distribution in both post-alignment stages
    B  curriculum          general/reasoning first, OCR-heavy supervision later
    C  balanced sampling   every post-alignment source at equal probability
    D  reverse curriculum  B with its post-alignment stages swapped

Expected exposure of a dataset is the budget-weighted probability mass it
receives across post-alignment stages: ``E(d) = sum over stages s >= 2 of
T_s * pi_s(d)``, measured in expected sampling steps.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .errors import FormatError, InvalidScheduleError

GROUPS = ("D0-alignment", "D1-general", "D2-reasoning", "D3-ocr")
ALIGNMENT_GROUP = "D0-alignment"

# Absolute tolerance on per-stage probability sums. The built-in rows sum to
# exactly 1.00 in decimal, so presets need no slack.
PROB_SUM_TOL = 1e-9

BUILTIN_CONDITION_IDS = ("A", "B", "C", "D")

BUILTIN_CONDITION_LABELS = {
    "A": "direct mixture",
    "B": "curriculum",
    "C": "balanced sampling",
    "D": "reverse curriculum",
}

# The alignment pool ships 558k image-text pairs; the other pools have no
# single published count, so the built-in registry uses a nominal size that
# callers override via a registry file when exact pool sizes matter.
ALIGNMENT_POOL_SIZE = 558_000
NOMINAL_POOL_SIZE = 100_000

_MIXED = {"ShareGPT4V": 0.50, "AI2D": 0.13, "ChartQA": 0.13, "TextVQA": 0.12, "DocVQA": 0.12}
_GENERAL_FIRST = {"ShareGPT4V": 0.70, "AI2D": 0.15, "ChartQA": 0.15}
_OCR_HEAVY = {"ShareGPT4V": 0.20, "AI2D": 0.10, "ChartQA": 0.10, "TextVQA": 0.30, "DocVQA": 0.30}
_BALANCED = {"ShareGPT4V": 0.20, "AI2D": 0.20, "ChartQA": 0.20, "TextVQA": 0.20, "DocVQA": 0.20}

# (stage-2 distribution, stage-3 distribution) per built-in id.
_BUILTIN_POST_STAGES = {
    "A": (_MIXED, _MIXED),
    "B": (_GENERAL_FIRST, _OCR_HEAVY),
    "C": (_BALANCED, _BALANCED),
    "D": (_OCR_HEAVY, _GENERAL_FIRST),
}

_ALIGNMENT_STAGE = {"LLaVA-Pretrain": 1.0}


@dataclass(frozen=True)
class DatasetSource:
    """One named sample pool: unique name, capability group, instance count."""

    name: str
    group: str
    size: int


@dataclass(frozen=True)
class StagePlan:
    """One stage: 1-based index, step budget, sampling distribution."""

    index: int
    steps: int
    distribution: dict[str, float]


@dataclass(frozen=True)
class ScheduleCondition:
    """A named multi-stage sampling plan."""

    id: str
    stages: tuple[StagePlan, ...]

    def total_steps(self) -> int:
        return sum(stage.steps for stage in self.stages)

    def post_alignment_steps(self) -> int:
        return sum(stage.steps for stage in self.stages if stage.index >= 2)


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate_condition: violations are data, not exceptions."""

    ok: bool
    violations: tuple[str, ...]

    def as_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def builtin_registry() -> tuple[DatasetSource, ...]:
    """The six-dataset registry required by the built-in conditions."""
    return (
        DatasetSource("LLaVA-Pretrain", "D0-alignment", ALIGNMENT_POOL_SIZE),
        DatasetSource("ShareGPT4V", "D1-general", NOMINAL_POOL_SIZE),
        DatasetSource("AI2D", "D2-reasoning", NOMINAL_POOL_SIZE),
        DatasetSource("ChartQA", "D2-reasoning", NOMINAL_POOL_SIZE),
        DatasetSource("TextVQA", "D3-ocr", NOMINAL_POOL_SIZE),
        DatasetSource("DocVQA", "D3-ocr", NOMINAL_POOL_SIZE),
    )


def builtin_condition(cond_id: str, steps) -> ScheduleCondition:
    """Build condition A/B/C/D with the given (stage1, stage2, stage3) step budgets.

    The step budgets are required inputs: the strategy tables fix only the
    distributions, never the budgets.
    """
    if cond_id not in BUILTIN_CONDITION_IDS:
        raise ValueError(
            f"unknown built-in condition {cond_id!r}; expected one of {', '.join(BUILTIN_CONDITION_IDS)}"
        )
    steps = tuple(steps)
    if len(steps) != 3:
        raise ValueError(f"built-in conditions take exactly 3 stage step counts, got {len(steps)}")
    for value in steps:
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ValueError(f"stage step counts must be non-negative integers, got {value!r}")
    stage2, stage3 = _BUILTIN_POST_STAGES[cond_id]
    return ScheduleCondition(
        id=cond_id,
        stages=(
            StagePlan(1, steps[0], dict(_ALIGNMENT_STAGE)),
            StagePlan(2, steps[1], dict(stage2)),
            StagePlan(3, steps[2], dict(stage3)),
        ),
    )


def registry_digest(registry) -> str:
    """Content digest binding a registry, as written into manifest headers."""
    canonical = json.dumps(
        [
            {"name": src.name, "group": src.group, "size": src.size}
            for src in sorted(registry, key=lambda src: src.name)
        ],
        separators=(",", ":"),
        sort_keys=True,
    )
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def registry_violations(registry) -> list[str]:
    """Registry-level rule violations (sizes, duplicate names)."""
    found = []
    seen = set()
    for src in registry:
        if src.name in seen:
            found.append(f"registry: duplicate dataset name {src.name!r}")
        seen.add(src.name)
        if src.group not in GROUPS:
            found.append(
                f"registry: dataset {src.name!r} has unknown group {src.group!r};"
                f" expected one of {', '.join(GROUPS)}"
            )
        if not isinstance(src.size, int) or isinstance(src.size, bool) or src.size < 1:
            found.append(f"registry: dataset {src.name!r} size must be a positive integer, got {src.size!r}")
    return found


def _structural_violations(cond: ScheduleCondition) -> list[str]:
    """Condition rules that need no registry: stage order, budgets, probability sums."""
    found = []
    if len(cond.stages) < 2:
        found.append(f"condition {cond.id!r}: needs at least two stages, got {len(cond.stages)}")
    for position, stage in enumerate(cond.stages, start=1):
        if stage.index != position:
            found.append(
                f"condition {cond.id!r}: stage indices must be consecutive from 1;"
                f" position {position} has index {stage.index}"
            )
    for stage in cond.stages:
        if not isinstance(stage.steps, int) or isinstance(stage.steps, bool) or stage.steps < 0:
            found.append(f"stage {stage.index}: step count must be a non-negative integer, got {stage.steps!r}")
        total = 0.0
        for name, prob in stage.distribution.items():
            if not isinstance(prob, (int, float)) or isinstance(prob, bool) or math.isnan(prob):
                found.append(f"stage {stage.index}: probability of {name!r} must be a real number, got {prob!r}")
                continue
            if prob < 0.0 or prob > 1.0:
                found.append(f"stage {stage.index}: probability of {name!r} is {prob!r}, outside [0, 1]")
            total += float(prob)
        if abs(total - 1.0) > PROB_SUM_TOL:
            found.append(f"stage {stage.index}: probability sum {total!r} differs from 1 by more than {PROB_SUM_TOL}")
    return found


def validate_condition(cond: ScheduleCondition, registry) -> ValidationResult:
    """Check every documented rule; never raises, violations come back as data."""
    found = registry_violations(registry)
    found.extend(_structural_violations(cond))
    by_name = {src.name: src for src in registry}
    for stage in cond.stages:
        for name in stage.distribution:
            if name not in by_name:
                found.append(f"stage {stage.index}: references dataset {name!r} absent from the registry")
        if stage.index == 1:
            for name, prob in stage.distribution.items():
                src = by_name.get(name)
                if src is not None and prob > 0.0 and src.group != ALIGNMENT_GROUP:
                    found.append(
                        f"stage 1: support must be {ALIGNMENT_GROUP} only;"
                        f" {name!r} belongs to group {src.group!r}"
                    )
    if cond.id in BUILTIN_CONDITION_IDS:
        expected = {src.name: src.group for src in builtin_registry()}
        actual = {src.name: src.group for src in registry}
        if actual != expected:
            found.append(
                f"condition {cond.id!r}: built-in conditions require exactly the six standard"
                f" datasets with their standard groups; registry has {sorted(actual)!r}"
            )
    return ValidationResult(ok=not found, violations=tuple(found))


@dataclass(frozen=True)
class ExposureRow:
    """Exposure of every dataset under one condition."""

    condition: str
    post_steps: int
    per_dataset: dict[str, float]
    per_group: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ExposureReport:
    """Per-dataset (and, with a registry, per-group) exposure plus cross-condition deviation."""

    rows: tuple[ExposureRow, ...]
    datasets: tuple[str, ...]
    deviation: dict[str, float]
    group_deviation: dict[str, float]
    warn_threshold: float
    flagged: tuple[str, ...]
    flagged_groups: tuple[str, ...]

    def budgets_match(self) -> bool:
        return len({row.post_steps for row in self.rows}) <= 1

    def as_dict(self) -> dict:
        return {
            "rows": [
                {
                    "condition": row.condition,
                    "post_alignment_steps": row.post_steps,
                    "per_dataset": row.per_dataset,
                    "per_group": row.per_group,
                }
                for row in self.rows
            ],
            "datasets": list(self.datasets),
            "max_relative_deviation": self.deviation,
            "group_max_relative_deviation": self.group_deviation,
            "warn_threshold": self.warn_threshold,
            "flagged_datasets": list(self.flagged),
            "flagged_groups": list(self.flagged_groups),
            "budgets_match": self.budgets_match(),
        }


def _require_valid(cond: ScheduleCondition, registry) -> None:
    if registry is None:
        found = _structural_violations(cond)
    else:
        found = list(validate_condition(cond, registry).violations)
    if found:
        raise InvalidScheduleError(found)


def _exposure_row(cond: ScheduleCondition, registry, datasets) -> ExposureRow:
    per_dataset = {name: 0.0 for name in datasets}
    for stage in cond.stages:
        if stage.index < 2:
            continue
        for name, prob in stage.distribution.items():
            per_dataset[name] = per_dataset.get(name, 0.0) + stage.steps * prob
    per_group: dict[str, float] = {}
    if registry is not None:
        group_of = {src.name: src.group for src in registry}
        per_group = {group: 0.0 for group in GROUPS}
        for name, exposure in per_dataset.items():
            per_group[group_of[name]] += exposure
    return ExposureRow(
        condition=cond.id,
        post_steps=cond.post_alignment_steps(),
        per_dataset=per_dataset,
        per_group=per_group,
    )


def _relative_deviation(values) -> float:
    top = max(values)
    if top == 0.0:
        return 0.0
    return (top - min(values)) / top


def compare_exposure(conds, registry=None, warn_threshold: float = 0.10) -> ExposureReport:
    """Expected-exposure report across conditions; mismatches warn, never fail.

    Deviation per dataset is (max - min) / max over the compared conditions,
    with 0/0 treated as 0. Datasets (or groups) whose deviation exceeds
    `warn_threshold` are flagged. Without a registry only structural
    validation runs and the per-group breakdown is omitted.
    """
    conds = list(conds)
    if not conds:
        raise ValueError("compare_exposure needs at least one condition")
    if warn_threshold < 0.0:
        raise ValueError(f"warn threshold must be non-negative, got {warn_threshold!r}")
    for cond in conds:
        _require_valid(cond, registry)
    if registry is not None:
        datasets = sorted(src.name for src in registry)
    else:
        names = set()
        for cond in conds:
            for stage in cond.stages:
                names.update(stage.distribution)
        datasets = sorted(names)
    rows = tuple(_exposure_row(cond, registry, datasets) for cond in conds)
    deviation = {
        name: _relative_deviation([row.per_dataset[name] for row in rows]) for name in datasets
    }
    group_deviation = {}
    if registry is not None:
        group_deviation = {
            group: _relative_deviation([row.per_group[group] for row in rows]) for group in GROUPS
        }
    flagged = tuple(name for name in datasets if deviation[name] > warn_threshold)
    flagged_groups = tuple(group for group in group_deviation if group_deviation[group] > warn_threshold)
    return ExposureReport(
        rows=rows,
        datasets=tuple(datasets),
        deviation=deviation,
        group_deviation=group_deviation,
        warn_threshold=warn_threshold,
        flagged=flagged,
        flagged_groups=flagged_groups,
    )


def compute_exposure(cond: ScheduleCondition, registry=None, warn_threshold: float = 0.10) -> ExposureReport:
    """Single-condition exposure report (deviations are all zero by construction)."""
    return compare_exposure([cond], registry=registry, warn_threshold=warn_threshold)


def condition_as_dict(cond: ScheduleCondition) -> dict:
    return {
        "id": cond.id,
        "stages": [
            {"index": s.index, "steps": s.steps, "distribution": dict(s.distribution)}
            for s in cond.stages
        ],
    }


def condition_from_dict(data) -> ScheduleCondition:
    """Parse one condition object; shape problems raise FormatError."""
    if not isinstance(data, dict):
        raise FormatError(f"condition must be an object, got {type(data).__name__}")
    cond_id = data.get("id")
    if not isinstance(cond_id, str) or not cond_id:
        raise FormatError("condition is missing a non-empty string 'id'")
    raw_stages = data.get("stages")
    if not isinstance(raw_stages, list):
        raise FormatError(f"condition {cond_id!r}: 'stages' must be a list")
    stages = []
    for pos, raw in enumerate(raw_stages, start=1):
        if not isinstance(raw, dict):
            raise FormatError(f"condition {cond_id!r}: stage at position {pos} must be an object")
        index = raw.get("index", pos)
        steps = raw.get("steps")
        dist = raw.get("distribution")
        if not isinstance(index, int) or isinstance(index, bool):
            raise FormatError(f"condition {cond_id!r}: stage at position {pos} has non-integer 'index'")
        if not isinstance(steps, int) or isinstance(steps, bool):
            raise FormatError(f"condition {cond_id!r}: stage {index} has non-integer 'steps'")
        if not isinstance(dist, dict):
            raise FormatError(f"condition {cond_id!r}: stage {index} has no 'distribution' object")
        parsed = {}
        for name, prob in dist.items():
            if not isinstance(name, str):
                raise FormatError(f"condition {cond_id!r}: stage {index} has a non-string dataset name")
            if not isinstance(prob, (int, float)) or isinstance(prob, bool):
                raise FormatError(
                    f"condition {cond_id!r}: stage {index} probability of {name!r} is not a number"
                )
            parsed[name] = float(prob)
        stages.append(StagePlan(index=index, steps=steps, distribution=parsed))
    return ScheduleCondition(id=cond_id, stages=tuple(stages))


def registry_as_list(registry) -> list[dict]:
    return [{"name": src.name, "group": src.group, "size": src.size} for src in registry]


def registry_from_list(data) -> tuple[DatasetSource, ...]:
    """Parse a dataset list; shape problems raise FormatError."""
    if not isinstance(data, list):
        raise FormatError(f"registry datasets must be a list, got {type(data).__name__}")
    sources = []
    for pos, raw in enumerate(data, start=1):
        if not isinstance(raw, dict):
            raise FormatError(f"registry entry {pos} must be an object")
        name = raw.get("name")
        group = raw.get("group")
        size = raw.get("size")
        if not isinstance(name, str) or not name:
            raise FormatError(f"registry entry {pos} is missing a non-empty string 'name'")
        if not isinstance(group, str):
            raise FormatError(f"registry entry {name!r} is missing a string 'group'")
        if not isinstance(size, int) or isinstance(size, bool):
            raise FormatError(f"registry entry {name!r} is missing an integer 'size'")
        sources.append(DatasetSource(name=name, group=group, size=size))
    return tuple(sources)
