"""Grounding-annotation parsing and triple-stage quality control.

An annotation block grounds numbered sub-tasks to frame intervals:

    # Instruction1: from frame 0 to frame 8;
    # Instruction2: from frame 8 to frame 21;
    # Instruction3: from frame 21 onwards;

Intervals are end-exclusive [start, end); 'onwards' resolves to the
trajectory frame count. Quality control runs three stages: format (grammar
plus index continuity), temporal (ordering / overlap / range), and semantic
(a pluggable judge scores each interval against its sub-task text).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable

GROUNDING_LINE_RE = re.compile(
    r"^# +Instruction(\d+): +from +frame +(\d+) +(?:to +frame +(\d+)|onwards) *;?$"
)

DEFAULT_FRAMES_PER_INTERVAL = 4
DEFAULT_FUTURE_WINDOW = 4
DEFAULT_HISTORY_LEN = 15


class GroundingFormatError(ValueError):
    kind = "format"

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class MalformedLine(GroundingFormatError):
    kind = "malformed_line"


class NonContinuousIndices(GroundingFormatError):
    kind = "non_continuous_indices"


class DuplicateIndex(GroundingFormatError):
    kind = "duplicate_index"


class JudgeUnavailable(RuntimeError):
    """The semantic judge cannot answer for this interval."""


class IntervalGap(ValueError):
    """Intervals do not tile the frame range."""


class WindowNonPositive(ValueError):
    """Future-window length must not be negative."""


@dataclass(frozen=True)
class SubTaskInterval:
    index: int           # 1-based instruction number
    start: int           # inclusive
    end: int             # exclusive
    from_onwards: bool = False

    def canonical(self) -> str:
        if self.from_onwards:
            return f"# Instruction{self.index}: from frame {self.start} onwards;"
        return f"# Instruction{self.index}: from frame {self.start} to frame {self.end};"


def parse_grounding(text: str, num_frames: int) -> list[SubTaskInterval]:
    """Parse an annotation block; grammar errors raise GroundingFormatError.

    Lines are trimmed, blank lines skipped, repeated internal spaces
    tolerated, the trailing semicolon optional. Instruction indices must be
    exactly 1..n with no duplicates (input order is preserved).
    """
    intervals: list[SubTaskInterval] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = " ".join(raw.split())
        if not line:
            continue
        m = GROUNDING_LINE_RE.match(line)
        if m is None:
            raise MalformedLine(f"line {line_no}: unparseable {raw!r}", line_no)
        index = int(m.group(1))
        start = int(m.group(2))
        if m.group(3) is None:
            intervals.append(SubTaskInterval(index, start, num_frames, from_onwards=True))
        else:
            intervals.append(SubTaskInterval(index, start, int(m.group(3))))
    indices = [iv.index for iv in intervals]
    seen = set()
    for idx in indices:
        if idx in seen:
            raise DuplicateIndex(f"instruction index {idx} repeated")
        seen.add(idx)
    if seen != set(range(1, len(indices) + 1)):
        raise NonContinuousIndices(
            f"indices {sorted(seen)} are not continuous from 1")
    return intervals


def serialize_grounding(intervals: list[SubTaskInterval]) -> str:
    return "\n".join(iv.canonical() for iv in intervals) + ("\n" if intervals else "")


@dataclass(frozen=True)
class TemporalViolation:
    kind: str        # start_order | overlap | out_of_range | empty_interval | negative_length
    indices: tuple[int, ...]
    detail: str


@dataclass(frozen=True)
class TemporalVerdict:
    ok: bool
    violations: tuple[TemporalViolation, ...]


def check_temporal(intervals: list[SubTaskInterval], num_frames: int) -> TemporalVerdict:
    """Temporal consistency after sorting by instruction index.

    Checks strictly increasing starts, pairwise non-overlap under [s, e),
    in-range frames, and flags empty (e == s) or reversed intervals.
    """
    ivs = sorted(intervals, key=lambda iv: iv.index)
    violations: list[TemporalViolation] = []
    for a, b in zip(ivs, ivs[1:]):
        if b.start <= a.start:
            violations.append(TemporalViolation(
                "start_order", (a.index, b.index),
                f"start {b.start} of instruction {b.index} not after {a.start}"))
    for i, a in enumerate(ivs):
        for b in ivs[i + 1:]:
            lo = max(a.start, b.start)
            hi = min(a.end, b.end)
            if lo < hi:
                violations.append(TemporalViolation(
                    "overlap", (a.index, b.index),
                    f"instructions {a.index} and {b.index} share frames [{lo}, {hi})"))
    for iv in ivs:
        if iv.start < 0 or iv.end > num_frames or iv.start > num_frames:
            violations.append(TemporalViolation(
                "out_of_range", (iv.index,),
                f"interval [{iv.start}, {iv.end}) outside [0, {num_frames}]"))
        if iv.end == iv.start:
            violations.append(TemporalViolation(
                "empty_interval", (iv.index,), f"interval at frame {iv.start} is empty"))
        elif iv.end < iv.start:
            violations.append(TemporalViolation(
                "negative_length", (iv.index,), f"interval [{iv.start}, {iv.end}) reversed"))
    return TemporalVerdict(ok=not violations, violations=tuple(violations))


# Semantic stage -------------------------------------------------------------

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
SKIPPED = "skipped"

Judge = Callable[[str, list[int], tuple], dict | str]


@dataclass(frozen=True)
class SemanticVerdict:
    index: int
    status: str                      # consistent | inconsistent | skipped
    confidence: float | None = None
    evidence_frames: tuple[int, ...] = ()
    reason: str = ""
    note: str = ""


def sample_interval_frames(interval: SubTaskInterval,
                           n: int = DEFAULT_FRAMES_PER_INTERVAL) -> list[int]:
    """Uniformly spaced frame indices inside [start, end), at most n, deterministic."""
    span = interval.end - interval.start
    if span <= 0:
        return []
    count = min(n, span)
    if count == 1:
        return [interval.start]
    step = (span - 1) / (count - 1)
    frames = sorted({interval.start + round(i * step) for i in range(count)})
    return frames


def _decode_judge_output(raw) -> dict:
    if isinstance(raw, str):
        raw = json.loads(raw)
    if not isinstance(raw, dict):
        raise ValueError("judge output is not an object")
    consistent = raw["consistent"]
    if not isinstance(consistent, bool):
        raise ValueError("'consistent' must be a boolean")
    confidence = float(raw["confidence"])
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    evidence = [int(f) for f in raw.get("evidence_frames", [])]
    reason = str(raw.get("reason", ""))
    return {"consistent": consistent, "confidence": confidence,
            "evidence_frames": evidence, "reason": reason}


def judge_semantic(subtask_text: str, interval: SubTaskInterval,
                   sampled_frames: list[int], judge: Judge | None,
                   context: tuple = ()) -> SemanticVerdict:
    """Score one interval with the pluggable judge.

    A missing judge or JudgeUnavailable yields Skipped; malformed judge
    output yields Skipped with a MalformedJudgeOutput note, never a crash.
    """
    if judge is None:
        return SemanticVerdict(interval.index, SKIPPED, note="no_judge")
    try:
        raw = judge(subtask_text, sampled_frames, context)
    except JudgeUnavailable as e:
        return SemanticVerdict(interval.index, SKIPPED, note=f"judge_unavailable: {e}")
    try:
        decoded = _decode_judge_output(raw)
    except Exception as e:
        return SemanticVerdict(interval.index, SKIPPED,
                               note=f"MalformedJudgeOutput: {e}")
    return SemanticVerdict(
        index=interval.index,
        status=CONSISTENT if decoded["consistent"] else INCONSISTENT,
        confidence=decoded["confidence"],
        evidence_frames=tuple(decoded["evidence_frames"]),
        reason=decoded["reason"],
    )


class StubJudge:
    """Deterministic judge backed by a fixture dict keyed 'trajectory_id:index'."""

    def __init__(self, fixture: dict):
        self.fixture = fixture

    @classmethod
    def from_file(cls, path) -> "StubJudge":
        with open(path) as f:
            return cls(json.load(f))

    def __call__(self, subtask_text: str, frames: list[int], context: tuple):
        traj_id, index = context
        key = f"{traj_id}:{index}"
        if key not in self.fixture:
            raise JudgeUnavailable(f"no fixture verdict for {key}")
        return self.fixture[key]


# Pipeline -------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    trajectory_id: str
    num_frames: int
    actions: tuple[str, ...]
    instruction: str
    sub_instructions: tuple[str, ...]

    def __post_init__(self):
        if len(self.actions) not in (0, self.num_frames):
            raise ValueError(
                f"{self.trajectory_id}: {len(self.actions)} actions for "
                f"{self.num_frames} frames")

    @classmethod
    def from_json(cls, obj: dict) -> "TrajectoryRecord":
        return cls(
            trajectory_id=str(obj["id"]),
            num_frames=int(obj["num_frames"]),
            actions=tuple(obj.get("actions", ())),
            instruction=str(obj.get("instruction", "")),
            sub_instructions=tuple(obj.get("sub_instructions", ())),
        )


@dataclass
class TQCMReport:
    trajectory_id: str
    format_ok: bool
    format_violation: dict | None
    temporal_ok: bool | None                 # None when format failed
    temporal_violations: tuple[TemporalViolation, ...]
    semantic: tuple[SemanticVerdict, ...]    # empty when not reached
    retained: bool

    def to_json(self) -> dict:
        return {
            "id": self.trajectory_id,
            "format_ok": self.format_ok,
            "format_violation": self.format_violation,
            "temporal_ok": self.temporal_ok,
            "temporal_violations": [
                {"kind": v.kind, "indices": list(v.indices), "detail": v.detail}
                for v in self.temporal_violations],
            "semantic": [
                {"index": s.index, "status": s.status, "confidence": s.confidence,
                 "evidence_frames": list(s.evidence_frames), "reason": s.reason,
                 "note": s.note}
                for s in self.semantic],
            "retained": self.retained,
        }


def run_tqcm(record: TrajectoryRecord, annotation_text: str,
             judge: Judge | None = None,
             frames_per_interval: int = DEFAULT_FRAMES_PER_INTERVAL) -> TQCMReport:
    """Run the three stages on one trajectory's annotation block.

    Later stages only run when earlier ones pass. An annotation is retained
    when format and temporal pass and no interval was judged inconsistent;
    skipped semantic checks do not block retention.
    """
    try:
        intervals = parse_grounding(annotation_text, record.num_frames)
    except GroundingFormatError as e:
        return TQCMReport(record.trajectory_id, False,
                          {"kind": e.kind, "line_no": e.line_no, "detail": str(e)},
                          None, (), (), False)
    verdict = check_temporal(intervals, record.num_frames)
    if not verdict.ok:
        return TQCMReport(record.trajectory_id, True, None, False,
                          verdict.violations, (), False)
    semantic: list[SemanticVerdict] = []
    for iv in intervals:
        text = ""
        if 1 <= iv.index <= len(record.sub_instructions):
            text = record.sub_instructions[iv.index - 1]
        semantic.append(judge_semantic(
            text, iv, sample_interval_frames(iv, frames_per_interval), judge,
            context=(record.trajectory_id, iv.index)))
    retained = all(s.status != INCONSISTENT for s in semantic)
    return TQCMReport(record.trajectory_id, True, None, True, (),
                      tuple(semantic), retained)


@dataclass(frozen=True)
class QualityMetrics:
    """Stage pass rates as percentages; None marks an undefined (0/0) rate."""

    n: int
    format_pct: float | None
    temporal_pct: float | None     # over format-passing annotations
    semantic_pct: float | None     # over judged (not skipped) intervals
    retained: int


def quality_metrics(reports: list[TQCMReport]) -> QualityMetrics:
    n = len(reports)
    format_pass = [r for r in reports if r.format_ok]
    temporal_pass = [r for r in format_pass if r.temporal_ok]
    judged = consistent = 0
    for r in temporal_pass:
        for s in r.semantic:
            if s.status == CONSISTENT:
                judged += 1
                consistent += 1
            elif s.status == INCONSISTENT:
                judged += 1
    return QualityMetrics(
        n=n,
        format_pct=100.0 * len(format_pass) / n if n else None,
        temporal_pct=100.0 * len(temporal_pass) / len(format_pass) if format_pass else None,
        semantic_pct=100.0 * consistent / judged if judged else None,
        retained=sum(1 for r in reports if r.retained),
    )


# Planning-sample extraction -------------------------------------------------

@dataclass(frozen=True)
class PlanningSample:
    trajectory_id: str
    current_frame: int
    history_frames: tuple[int, ...]
    goal_frame: int
    label: str
    label_index: int

    def to_json(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "current_frame": self.current_frame,
            "history_frames": list(self.history_frames),
            "goal_frame": self.goal_frame,
            "label": self.label,
            "label_index": self.label_index,
        }


def label_samples(record: TrajectoryRecord, intervals: list[SubTaskInterval],
                  window: int = DEFAULT_FUTURE_WINDOW,
                  history_len: int = DEFAULT_HISTORY_LEN) -> list[PlanningSample]:
    """One sample per frame, labelled by the future-window rule.

    The label at frame t is the sub-task starting within (t, t + window],
    otherwise the sub-task active at t. Intervals must tile [0, num_frames).
    """
    if window < 0:
        raise WindowNonPositive(f"window {window} is negative")
    if history_len < 0:
        raise ValueError("history_len must be >= 0")
    ivs = sorted(intervals, key=lambda iv: iv.index)
    if not ivs or ivs[0].start != 0:
        raise IntervalGap("first interval must start at frame 0")
    for a, b in zip(ivs, ivs[1:]):
        if b.start != a.end:
            raise IntervalGap(f"gap between instruction {a.index} and {b.index}")
    if ivs[-1].end != record.num_frames:
        raise IntervalGap(
            f"last interval ends at {ivs[-1].end}, expected {record.num_frames}")
    for iv in ivs:
        if not 1 <= iv.index <= len(record.sub_instructions):
            raise ValueError(f"no sub-instruction text for index {iv.index}")
    samples = []
    for t in range(record.num_frames):
        chosen = None
        for iv in ivs:
            if t < iv.start <= t + window:
                chosen = iv
                break
        if chosen is None:
            for iv in ivs:
                if iv.start <= t < iv.end:
                    chosen = iv
                    break
        samples.append(PlanningSample(
            trajectory_id=record.trajectory_id,
            current_frame=t,
            history_frames=tuple(range(max(0, t - history_len), t)),
            goal_frame=record.num_frames - 1,
            label=record.sub_instructions[chosen.index - 1],
            label_index=chosen.index,
        ))
    return samples
