"""Shared domain types, dataset line formats, and run-directory layout.

Every persistent artifact is a line-record file (one self-describing JSON
object per line, UTF-8) or a canonically serialized JSON document, so runs
are streamable, append-only where possible, and byte-stable for hashing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

DEFAULT_WALL_MS = 2000
DEFAULT_OUTPUT_CAP_BYTES = 1 << 20


class DatasetError(ValueError):
    """Malformed or inconsistent dataset file; carries path and line number."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        loc = str(path) if path is not None else ""
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = Path(path) if path is not None else None
        self.line = line


class IntegrityError(RuntimeError):
    """Stored artifact bytes no longer match their recorded digest."""


class ConfigError(ValueError):
    """Invalid or missing configuration."""


class Verdict(str, Enum):
    CORRECT = "Correct"
    SOFT_CORRECT = "SoftCorrect"
    INCORRECT = "Incorrect"
    UNPARSEABLE = "Unparseable"
    ERROR = "Error"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class ProblemKind(str, Enum):
    MATH = "math"
    CODE = "code"


class ModelKind(str, Enum):
    ENDPOINT = "endpoint"
    SIMULATED = "simulated"


class ModelFamily(str, Enum):
    GEMMA_LIKE = "gemma-like"
    LLAMA_LIKE = "llama-like"
    OTHER = "other"


class ExecStatus(str, Enum):
    PASS = "Pass"
    WRONG_OUTPUT = "WrongOutput"
    TIMEOUT = "Timeout"
    RUNTIME_ERROR = "RuntimeError"
    OUTPUT_OVERFLOW = "OutputOverflow"


@dataclass(frozen=True)
class TestCase:
    """One stdin/stdout check for a code problem.

    Test data must be UTF-8 text; it is stored as text in the line format
    and piped as bytes at execution time.
    """

    stdin: bytes
    expected_stdout: bytes
    wall_ms: int = DEFAULT_WALL_MS
    output_cap_bytes: int = DEFAULT_OUTPUT_CAP_BYTES

    def __post_init__(self) -> None:
        if self.wall_ms <= 0:
            raise ValueError(f"wall_ms must be > 0, got {self.wall_ms}")
        if self.output_cap_bytes <= 0:
            raise ValueError(f"output_cap_bytes must be > 0, got {self.output_cap_bytes}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "stdin": self.stdin.decode("utf-8"),
            "expected_stdout": self.expected_stdout.decode("utf-8"),
            "wall_ms": self.wall_ms,
            "output_cap_bytes": self.output_cap_bytes,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TestCase":
        return cls(
            stdin=str(d["stdin"]).encode("utf-8"),
            expected_stdout=str(d["expected_stdout"]).encode("utf-8"),
            wall_ms=int(d.get("wall_ms", DEFAULT_WALL_MS)),
            output_cap_bytes=int(d.get("output_cap_bytes", DEFAULT_OUTPUT_CAP_BYTES)),
        )


@dataclass(frozen=True)
class GroundTruth:
    """Exactly one of final_answer (math) or test_cases (code) is populated."""

    final_answer: str | None = None
    test_cases: tuple[TestCase, ...] | None = None

    def __post_init__(self) -> None:
        has_answer = self.final_answer is not None
        has_tests = self.test_cases is not None
        if has_answer == has_tests:
            raise ValueError("exactly one of final_answer / test_cases must be set")
        if has_tests and len(self.test_cases) == 0:
            raise ValueError("code problems need at least one test case")


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    prompt_body: str
    ground_truth: GroundTruth
    split: Split = Split.TRAIN

    @property
    def is_math(self) -> bool:
        return self.ground_truth.final_answer is not None

    @property
    def is_code(self) -> bool:
        return self.ground_truth.test_cases is not None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "prompt": self.prompt_body, "split": self.split.value}
        if self.is_math:
            d["final_answer"] = self.ground_truth.final_answer
        else:
            d["test_cases"] = [tc.to_dict() for tc in self.ground_truth.test_cases]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProblemSpec":
        answer = d.get("final_answer")
        raw_tests = d.get("test_cases")
        tests = tuple(TestCase.from_dict(t) for t in raw_tests) if raw_tests is not None else None
        return cls(
            id=str(d["id"]),
            prompt_body=str(d["prompt"]),
            ground_truth=GroundTruth(
                final_answer=None if answer is None else str(answer),
                test_cases=tests,
            ),
            split=Split(d.get("split", "train")),
        )


@dataclass(frozen=True)
class ExtractedAnswer:
    """Tail of the last answer marker: raw to end-of-line, plus its normalization."""

    raw_tail: str
    normalized: str
    marker_count: int

    def to_dict(self) -> dict[str, Any]:
        return {"raw_tail": self.raw_tail, "normalized": self.normalized, "marker_count": self.marker_count}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExtractedAnswer":
        return cls(str(d["raw_tail"]), str(d["normalized"]), int(d["marker_count"]))


@dataclass(frozen=True)
class ExecOutcome:
    test_index: int
    status: ExecStatus
    wall_ms_used: int

    def to_dict(self) -> dict[str, Any]:
        return {"test_index": self.test_index, "status": self.status.value, "wall_ms_used": self.wall_ms_used}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExecOutcome":
        return cls(int(d["test_index"]), ExecStatus(d["status"]), int(d["wall_ms_used"]))


@dataclass(frozen=True)
class Sampling:
    temperature: float
    seed: int


@dataclass(frozen=True)
class SolutionRecord:
    """One sampled solution with provenance; verdict is assigned by the pruner."""

    problem_id: str
    model_ref: str
    round: int
    text: str
    sampling: Sampling
    extracted: ExtractedAnswer | None = None
    exec: tuple[ExecOutcome, ...] | None = None
    verdict: Verdict | None = None
    truncated: bool = False

    def with_verdict(
        self,
        verdict: Verdict,
        extracted: ExtractedAnswer | None = None,
        exec_outcomes: tuple[ExecOutcome, ...] | None = None,
    ) -> "SolutionRecord":
        return replace(self, verdict=verdict, extracted=extracted, exec=exec_outcomes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_id": self.problem_id,
            "model_ref": self.model_ref,
            "round": self.round,
            "text": self.text,
            "sampling": {"temperature": self.sampling.temperature, "seed": self.sampling.seed},
            "extracted": self.extracted.to_dict() if self.extracted else None,
            "exec": [o.to_dict() for o in self.exec] if self.exec is not None else None,
            "verdict": self.verdict.value if self.verdict else None,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SolutionRecord":
        raw_exec = d.get("exec")
        return cls(
            problem_id=str(d["problem_id"]),
            model_ref=str(d["model_ref"]),
            round=int(d["round"]),
            text=str(d["text"]),
            sampling=Sampling(float(d["sampling"]["temperature"]), int(d["sampling"]["seed"])),
            extracted=ExtractedAnswer.from_dict(d["extracted"]) if d.get("extracted") else None,
            exec=tuple(ExecOutcome.from_dict(o) for o in raw_exec) if raw_exec is not None else None,
            verdict=Verdict(d["verdict"]) if d.get("verdict") else None,
            truncated=bool(d.get("truncated", False)),
        )


@dataclass(frozen=True)
class ModelRef:
    name: str
    kind: ModelKind
    family: ModelFamily = ModelFamily.OTHER
    uri_or_state: str = ""

    def __post_init__(self) -> None:
        if self.kind is ModelKind.ENDPOINT and not self.uri_or_state:
            raise ValueError("endpoint model refs need a non-empty address")

    def state_path(self) -> Path:
        """Readable state file backing a simulated model."""
        if self.kind is not ModelKind.SIMULATED:
            raise ValueError(f"{self.name} is not a simulated model")
        p = Path(self.uri_or_state)
        if not p.is_file():
            raise FileNotFoundError(f"simulated model state not readable: {p}")
        return p

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "family": self.family.value,
            "uri_or_state": self.uri_or_state,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelRef":
        return cls(
            name=str(d["name"]),
            kind=ModelKind(d["kind"]),
            family=ModelFamily(d.get("family", "other")),
            uri_or_state=str(d.get("uri_or_state", "")),
        )


@dataclass(frozen=True)
class Counts:
    generated: int
    pruned_kept: int
    curated: int

    def __post_init__(self) -> None:
        if not (0 <= self.curated <= self.pruned_kept <= self.generated):
            raise ValueError(
                f"count ordering violated: curated={self.curated} "
                f"pruned_kept={self.pruned_kept} generated={self.generated}"
            )


@dataclass(frozen=True)
class RoundManifest:
    """Immutable record of one round; the resume path trusts only this plus digests."""

    round: int
    input_model: str
    output_model: str | None
    counts: Counts
    dataset_digest: str
    config_snapshot: dict[str, Any]
    timestamps: dict[str, str]
    generation_failures: dict[str, int] = field(default_factory=dict)
    curation_shortfall: dict[str, int] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "input_model": self.input_model,
            "output_model": self.output_model,
            "counts": {
                "generated": self.counts.generated,
                "pruned_kept": self.counts.pruned_kept,
                "curated": self.counts.curated,
            },
            "dataset_digest": self.dataset_digest,
            "config_snapshot": self.config_snapshot,
            "timestamps": self.timestamps,
            "generation_failures": self.generation_failures,
            "curation_shortfall": self.curation_shortfall,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoundManifest":
        c = d["counts"]
        return cls(
            round=int(d["round"]),
            input_model=str(d["input_model"]),
            output_model=d.get("output_model"),
            counts=Counts(int(c["generated"]), int(c["pruned_kept"]), int(c["curated"])),
            dataset_digest=str(d["dataset_digest"]),
            config_snapshot=dict(d.get("config_snapshot", {})),
            timestamps=dict(d.get("timestamps", {})),
            generation_failures={str(k): int(v) for k, v in d.get("generation_failures", {}).items()},
            curation_shortfall=d.get("curation_shortfall"),
        )


# ---------------------------------------------------------------------------
# file operations


def load_problems(path: str | Path, kind: ProblemKind | str) -> list[ProblemSpec]:
    """Read a line-record problem set, validating ids and the ground-truth variant."""
    kind = ProblemKind(kind)
    path = Path(path)
    if not path.is_file():
        raise DatasetError("problem file not found", path)
    problems: list[ProblemSpec] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"malformed record: {e.msg}", path, lineno) from e
            if "final_answer" in raw and "test_cases" in raw:
                raise DatasetError("record has both final_answer and test_cases", path, lineno)
            try:
                spec = ProblemSpec.from_dict(raw)
            except (KeyError, ValueError) as e:
                raise DatasetError(f"invalid record: {e}", path, lineno) from e
            if kind is ProblemKind.MATH and not spec.is_math:
                raise DatasetError("math problem set requires final_answer", path, lineno)
            if kind is ProblemKind.CODE and not spec.is_code:
                raise DatasetError("code problem set requires test_cases", path, lineno)
            if spec.id in seen:
                raise DatasetError(f"duplicate problem id {spec.id!r}", path, lineno)
            seen.add(spec.id)
            problems.append(spec)
    return problems


def write_records(records: Iterable[SolutionRecord], path: str | Path) -> int:
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> list[SolutionRecord]:
    path = Path(path)
    records: list[SolutionRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(SolutionRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise DatasetError(f"corrupt record: {e}", path, lineno) from e
    return records


def digest_dataset(path: str | Path) -> str:
    """SHA-256 over raw file bytes; byte-exact provenance, no canonicalization."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError("cannot digest missing file", path)
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj: Any, path: str | Path) -> None:
    """Canonical JSON document write: sorted keys, 2-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# small shared helpers


def ws_collapse(text: str) -> str:
    """Whitespace-collapse normalization used for dedup and diversity counting."""
    return " ".join(text.split())


def stable_u64(*parts: Any) -> int:
    """Deterministic 64-bit key from a tuple of values; stable across processes."""
    joined = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(joined.encode("utf-8")).digest()[:8], "big")


def stable_key128(*parts: Any) -> int:
    joined = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(joined.encode("utf-8")).digest()[:16], "big")


# ---------------------------------------------------------------------------
# run directory layout


@dataclass(frozen=True)
class RunPaths:
    """Layout: runs_root/<run-id>/round-<i>/{generations,pruned,dataset,manifest,eval}."""

    runs_root: Path
    run_id: str

    @property
    def run_dir(self) -> Path:
        return self.runs_root / self.run_id

    @property
    def config_file(self) -> Path:
        return self.run_dir / "config.json"

    def round_dir(self, i: int) -> Path:
        return self.run_dir / f"round-{i}"

    def generations_file(self, i: int) -> Path:
        return self.round_dir(i) / "generations.jsonl"

    def pruned_file(self, i: int) -> Path:
        return self.round_dir(i) / "pruned.jsonl"

    def dataset_file(self, i: int) -> Path:
        return self.round_dir(i) / "dataset.jsonl"

    def manifest_file(self, i: int) -> Path:
        return self.round_dir(i) / "manifest.json"

    def eval_file(self, i: int) -> Path:
        return self.round_dir(i) / "eval.json"

    def train_dir(self, i: int) -> Path:
        return self.round_dir(i) / "train"
