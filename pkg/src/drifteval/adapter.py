"""Command protocol for driving external classifiers through the drift grid.

The contract is deliberately ecosystem-neutral: training data goes out as a
"label<TAB>text" TSV, predictions come back one line per input as
"label<TAB>p_negative<TAB>p_neutral<TAB>p_positive".  Command templates may
use the placeholders {train_file}, {model_dir}, {input_file}, {output_file}
and optionally {seed} (substituted with the per-cell model seed so external
models can mirror the toolkit's reproducibility scheme).
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .labels import Label, ProbVector


class AdapterError(RuntimeError):
    pass


class TrainFailed(AdapterError):
    def __init__(self, message: str, output: str = ""):
        super().__init__(message + (f"\n--- captured output ---\n{output}" if output else ""))
        self.output = output


class PredictFailed(AdapterError):
    def __init__(self, message: str, output: str = ""):
        super().__init__(message + (f"\n--- captured output ---\n{output}" if output else ""))
        self.output = output


class AdapterTimeout(AdapterError):
    pass


class EmptyModelDir(AdapterError):
    pass


class LineCountMismatch(AdapterError):
    pass


class BadPredictionRow(AdapterError):
    pass


@dataclass(frozen=True)
class ExternalModelSpec:
    train_command: str
    predict_command: str
    model_dir: str  # root directory; each trained model gets a subdirectory
    timeout_seconds: int = 600

    def __post_init__(self):
        if self.timeout_seconds < 1:
            raise ValueError("timeout_seconds must be >= 1")
        for placeholder in ("{train_file}", "{model_dir}"):
            if placeholder not in self.train_command:
                raise ValueError(f"train_command is missing {placeholder}")
        for placeholder in ("{model_dir}", "{input_file}", "{output_file}"):
            if placeholder not in self.predict_command:
                raise ValueError(f"predict_command is missing {placeholder}")


@dataclass(frozen=True)
class ExternalModelHandle:
    spec: ExternalModelSpec
    work_dir: Path
    model_dir: Path


def sanitize_text(text: str) -> str:
    """Flatten framing characters so one example stays one line, one field.

    Tabs, newlines and carriage returns become spaces; preprocessing folds
    whitespace runs anyway, so built-in predictions are unaffected.
    """
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


def write_train_file(examples: Iterable[tuple[Label, str]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for label, text in examples:
            f.write(f"{Label(label).text}\t{sanitize_text(text)}\n")


def read_train_file(path) -> list[tuple[Label, str]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            label_text, sep, text = line.partition("\t")
            if not sep:
                raise ValueError(f"train file line {line_no}: no tab separator")
            out.append((Label.from_text(label_text), text))
    return out


def _run_command(command: str, timeout_seconds: int, phase: str) -> subprocess.CompletedProcess:
    argv = shlex.split(command)
    try:
        return subprocess.run(
            argv,
            capture_output=True,
            text=True,
            timeout=timeout_seconds,
        )
    except subprocess.TimeoutExpired:
        raise AdapterTimeout(
            f"{phase} command exceeded {timeout_seconds}s: {command}"
        ) from None
    except OSError as exc:
        raise AdapterError(f"{phase} command failed to start: {exc}") from None


def train_external(
    spec: ExternalModelSpec,
    train_set: Sequence[tuple[Label, str]],
    tag: str = "model",
    seed: int | None = None,
) -> ExternalModelHandle:
    """Write the train file, run the train command, verify the model dir.

    Each call owns work_dir = <spec.model_dir>/<tag>, holding train.tsv
    and the model/ directory handed to the command.  Succeeds only on
    exit status 0 with a non-empty model/.
    """
    work_dir = Path(spec.model_dir) / tag
    model_dir = work_dir / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    train_file = work_dir / "train.tsv"
    write_train_file(train_set, train_file)
    fields = {"train_file": str(train_file), "model_dir": str(model_dir)}
    if "{seed}" in spec.train_command:
        if seed is None:
            raise ValueError("train_command wants {seed} but no seed was given")
        fields["seed"] = str(seed)
    command = spec.train_command.format(**fields)
    proc = _run_command(command, spec.timeout_seconds, "train")
    if proc.returncode != 0:
        raise TrainFailed(
            f"train command exited {proc.returncode}: {command}",
            output=proc.stdout + proc.stderr,
        )
    if not any(model_dir.iterdir()):
        raise EmptyModelDir(f"train command left {model_dir} empty: {command}")
    return ExternalModelHandle(spec=spec, work_dir=work_dir, model_dir=model_dir)


def _parse_prediction_line(line: str, line_no: int) -> ProbVector:
    parts = line.split()
    if len(parts) != 4:
        raise BadPredictionRow(
            f"prediction line {line_no}: expected 'label p_neg p_neu p_pos', got {line!r}"
        )
    try:
        Label.from_text(parts[0])
    except ValueError:
        raise BadPredictionRow(
            f"prediction line {line_no}: unknown label {parts[0]!r}"
        ) from None
    try:
        probs = [float(p) for p in parts[1:]]
    except ValueError:
        raise BadPredictionRow(
            f"prediction line {line_no}: non-numeric probability in {line!r}"
        ) from None
    if any(p < 0 for p in probs):
        raise BadPredictionRow(
            f"prediction line {line_no}: negative probability in {line!r}"
        )
    total = sum(probs)
    if not 0.99 <= total <= 1.01:
        raise BadPredictionRow(
            f"prediction line {line_no}: probabilities sum to {total}, "
            "outside [0.99, 1.01]"
        )
    probs = [p / total for p in probs]
    vec = ProbVector(*probs)
    vec.validate()
    return vec


def predict_external(
    handle: ExternalModelHandle, texts: Sequence[str]
) -> list[ProbVector]:
    """Run the predict command over texts; order-preserving, validated."""
    spec = handle.spec
    input_file = handle.work_dir / "input.txt"
    output_file = handle.work_dir / "predictions.tsv"
    with open(input_file, "w", encoding="utf-8") as f:
        for text in texts:
            f.write(sanitize_text(text) + "\n")
    command = spec.predict_command.format(
        model_dir=str(handle.model_dir),
        input_file=str(input_file),
        output_file=str(output_file),
    )
    proc = _run_command(command, spec.timeout_seconds, "predict")
    if proc.returncode != 0:
        raise PredictFailed(
            f"predict command exited {proc.returncode}: {command}",
            output=proc.stdout + proc.stderr,
        )
    if not output_file.exists():
        raise PredictFailed(f"predict command wrote no {output_file}: {command}")
    with open(output_file, encoding="utf-8") as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if len(lines) != len(texts):
        raise LineCountMismatch(
            f"sent {len(texts)} texts, got {len(lines)} prediction lines"
        )
    return [_parse_prediction_line(line, i + 1) for i, line in enumerate(lines)]
