"""Correctness verdicts and pruning.

Math solutions are verified by exact match on the extracted final answer;
code solutions by executing the first fenced program block against stdin/stdout
test cases in an isolated child process per test.
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .core import (
    ExecOutcome,
    ExecStatus,
    ExtractedAnswer,
    ProblemSpec,
    SolutionRecord,
    TestCase,
    Verdict,
)

ANSWER_MARKER = "#### "

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+.-]*[ \t]*\n(.*?)```", re.DOTALL)


class PruneMode(str, Enum):
    FULL = "Full"
    SOFT_POS = "SoftPos"
    NO_PRUNE = "NoPrune"


class Normalization(str, Enum):
    STRICT = "Strict"
    TRIM_ONLY = "TrimOnly"


@dataclass(frozen=True)
class PruneStrategy:
    mode: PruneMode = PruneMode.FULL
    normalization: Normalization = Normalization.STRICT

    def keeps(self, verdict: Verdict) -> bool:
        if self.mode is PruneMode.FULL:
            return verdict is Verdict.CORRECT
        if self.mode is PruneMode.SOFT_POS:
            return verdict in (Verdict.CORRECT, Verdict.SOFT_CORRECT)
        # NoPrune keeps everything that produced a readable solution at all.
        return verdict is not Verdict.UNPARSEABLE


class SandboxSetupError(RuntimeError):
    """The execution environment itself is broken (e.g. missing runner binary)."""


@dataclass(frozen=True)
class RunnerConfig:
    """How to launch one candidate program.

    command is a template; the placeholder "{program}" is replaced by the
    path of the program file written into a fresh temp dir per judge call.
    Per-test wall/output limits come from each TestCase.
    """

    command: tuple[str, ...] = (sys.executable, "{program}")
    program_filename: str = "program.py"
    exact_output: bool = False
    max_workers: int = 4


def extract_final_answer(text: str, marker: str = ANSWER_MARKER) -> ExtractedAnswer | None:
    """Take the tail of the LAST marker occurrence; None means unparseable.

    Traces may restate the format instruction mid-solution, so only the final
    marker counts. Markdown emphasis characters around the tail are stripped
    (models sometimes bold the whole answer line).
    """
    if not marker:
        raise ValueError("marker must be non-empty")
    count = text.count(marker)
    if count == 0:
        return None
    start = text.rfind(marker) + len(marker)
    end = text.find("\n", start)
    raw_tail = text[start:] if end < 0 else text[start:end]
    normalized = raw_tail.strip().strip("*_").strip()
    return ExtractedAnswer(raw_tail=raw_tail, normalized=normalized, marker_count=count)


def verify_math(
    extracted: ExtractedAnswer | None,
    truth: str,
    normalization: Normalization = Normalization.STRICT,
) -> Verdict:
    """Exact string match, including formatting; trim already happened at extraction."""
    if not truth:
        raise ValueError("ground truth answer must be non-empty")
    if extracted is None:
        return Verdict.UNPARSEABLE
    del normalization  # Strict and TrimOnly coincide after extraction-time trimming
    return Verdict.CORRECT if extracted.normalized == truth else Verdict.INCORRECT


def extract_code_block(text: str) -> str | None:
    """First fenced code block in the solution text, or None."""
    m = _FENCE_RE.search(text)
    return m.group(1) if m else None


def _canonical_output(out: bytes) -> list[bytes]:
    lines = [ln.rstrip() for ln in out.split(b"\n")]
    if lines and lines[-1] == b"":
        lines.pop()
    return lines


def _outputs_match(got: bytes, expected: bytes, exact: bool) -> bool:
    if exact:
        return got == expected
    return _canonical_output(got) == _canonical_output(expected)


def _kill_process(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), 9)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            proc.kill()
        except OSError:
            pass


def _run_one_test(cmd: list[str], workdir: Path, case: TestCase, index: int, exact: bool = False) -> ExecOutcome:
    start = time.monotonic()
    proc = subprocess.Popen(
        cmd,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        cwd=workdir,
        start_new_session=True,
    )
    overflow = threading.Event()
    chunks: list[bytes] = []

    def feed() -> None:
        try:
            proc.stdin.write(case.stdin)
            proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass

    def drain() -> None:
        total = 0
        try:
            while True:
                chunk = proc.stdout.read(65536)
                if not chunk:
                    return
                total += len(chunk)
                chunks.append(chunk)
                if total > case.output_cap_bytes:
                    overflow.set()
                    _kill_process(proc)
                    return
        except (ValueError, OSError):
            return

    feeder = threading.Thread(target=feed, daemon=True)
    drainer = threading.Thread(target=drain, daemon=True)
    feeder.start()
    drainer.start()

    timed_out = False
    try:
        proc.wait(timeout=case.wall_ms / 1000.0)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_process(proc)
        proc.wait()
    drainer.join(timeout=5.0)
    feeder.join(timeout=5.0)
    wall_ms_used = int((time.monotonic() - start) * 1000)

    if overflow.is_set():
        status = ExecStatus.OUTPUT_OVERFLOW
    elif timed_out:
        status = ExecStatus.TIMEOUT
    elif proc.returncode != 0:
        status = ExecStatus.RUNTIME_ERROR
    elif _outputs_match(b"".join(chunks), case.expected_stdout, exact=exact):
        status = ExecStatus.PASS
    else:
        status = ExecStatus.WRONG_OUTPUT
    return ExecOutcome(test_index=index, status=status, wall_ms_used=wall_ms_used)


def judge_code(
    program: str,
    tests: Sequence[TestCase],
    runner: RunnerConfig = RunnerConfig(),
) -> tuple[tuple[ExecOutcome, ...], Verdict]:
    """Run every test in its own child process; aggregate pass counts to a verdict.

    Correct iff all tests pass, SoftCorrect iff some but not all pass,
    Incorrect iff none pass. A program the OS refuses to launch yields the
    Error verdict with an empty outcome list; a broken runner binary is a
    SandboxSetupError instead (operation failure, not a program failure).
    """
    if not tests:
        raise ValueError("judge_code needs at least one test case")
    interpreter = runner.command[0]
    if shutil.which(interpreter) is None and not Path(interpreter).is_file():
        raise SandboxSetupError(f"runner binary not found: {interpreter}")

    with tempfile.TemporaryDirectory(prefix="judge-") as tmp:
        workdir = Path(tmp)
        program_path = workdir / runner.program_filename
        program_path.write_text(program, encoding="utf-8")
        cmd = [part.replace("{program}", str(program_path)) for part in runner.command]

        try:
            outcomes = tuple(
                _run_one_test(cmd, workdir, case, i, exact=runner.exact_output)
                for i, case in enumerate(tests)
            )
        except OSError:
            return (), Verdict.ERROR

    passes = sum(1 for o in outcomes if o.status is ExecStatus.PASS)
    if passes == len(outcomes):
        verdict = Verdict.CORRECT
    elif passes >= 1:
        verdict = Verdict.SOFT_CORRECT
    else:
        verdict = Verdict.INCORRECT
    return outcomes, verdict


def derive_verdict(
    problem: ProblemSpec,
    extracted: ExtractedAnswer | None,
    exec_outcomes: tuple[ExecOutcome, ...] | None,
    truncated: bool = False,
    normalization: Normalization = Normalization.STRICT,
) -> Verdict:
    """Pure verdict function over stored evidence; re-running it on stored
    records must reproduce the stored verdicts exactly."""
    if truncated:
        return Verdict.UNPARSEABLE
    if problem.is_math:
        return verify_math(extracted, problem.ground_truth.final_answer, normalization)
    if exec_outcomes is None:
        return Verdict.UNPARSEABLE
    if len(exec_outcomes) == 0:
        return Verdict.ERROR
    passes = sum(1 for o in exec_outcomes if o.status is ExecStatus.PASS)
    if passes == len(exec_outcomes):
        return Verdict.CORRECT
    return Verdict.SOFT_CORRECT if passes >= 1 else Verdict.INCORRECT


def assign_verdict(
    record: SolutionRecord,
    problem: ProblemSpec,
    *,
    marker: str = ANSWER_MARKER,
    normalization: Normalization = Normalization.STRICT,
    runner: RunnerConfig = RunnerConfig(),
) -> SolutionRecord:
    """Verify one record against its problem and return the annotated copy."""
    if record.truncated:
        return record.with_verdict(Verdict.UNPARSEABLE)
    if problem.is_math:
        extracted = extract_final_answer(record.text, marker)
        verdict = verify_math(extracted, problem.ground_truth.final_answer, normalization)
        return record.with_verdict(verdict, extracted=extracted)
    program = extract_code_block(record.text)
    if program is None:
        return record.with_verdict(Verdict.UNPARSEABLE)
    outcomes, verdict = judge_code(program, problem.ground_truth.test_cases, runner)
    return record.with_verdict(verdict, exec_outcomes=outcomes)


def assign_verdicts(
    records: Sequence[SolutionRecord],
    problems_by_id: dict[str, ProblemSpec],
    *,
    marker: str = ANSWER_MARKER,
    normalization: Normalization = Normalization.STRICT,
    runner: RunnerConfig = RunnerConfig(),
) -> list[SolutionRecord]:
    """Verdict pass over a batch, preserving order. Code judging fans out to
    threads since each execution owns its process and temp dir."""
    missing = {r.problem_id for r in records} - set(problems_by_id)
    if missing:
        raise KeyError(f"records reference unknown problems: {sorted(missing)[:5]}")

    any_code = any(problems_by_id[r.problem_id].is_code for r in records)
    if not any_code or runner.max_workers <= 1:
        return [
            assign_verdict(r, problems_by_id[r.problem_id], marker=marker, normalization=normalization, runner=runner)
            for r in records
        ]
    with ThreadPoolExecutor(max_workers=runner.max_workers) as pool:
        futures = [
            pool.submit(
                assign_verdict,
                r,
                problems_by_id[r.problem_id],
                marker=marker,
                normalization=normalization,
                runner=runner,
            )
            for r in records
        ]
        return [f.result() for f in futures]


def apply_strategy(records: Sequence[SolutionRecord], strategy: PruneStrategy) -> list[SolutionRecord]:
    """Pure order-preserving filter; every record must already carry a verdict."""
    for rec in records:
        if rec.verdict is None:
            raise ValueError(f"record for {rec.problem_id!r} has no verdict; prune after verification")
    return [rec for rec in records if strategy.keeps(rec.verdict)]
