"""
Artifact I/O
============

Schema-validated readers and writers for JSON, JSONL and CSV artifacts.
Every writer validates its records before touching the disk.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from ..core.errors import DataError
from ..core.schemas import (
    AblationSummary,
    AttentionRecord,
    CheckpointManifest,
    EpisodeReportRow,
    MetricsRow,
    ReportSummary,
    SuiteFile,
    TemplateManifest,
    TrajectoryRecord,
)

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)
PathLike = Union[str, Path]


def _coerce(model: Type[M], record: Union[M, Dict[str, Any]], where: str) -> M:
    if isinstance(record, model):
        return model.model_validate(record.model_dump(by_alias=True))
    try:
        return model.model_validate(record)
    except ValidationError as e:
        raise DataError(f"{where}: invalid {model.__name__}: {e}") from e


def write_json(path: PathLike, record: BaseModel) -> Path:
    path = Path(path)
    record = _coerce(type(record), record, str(path))
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(
            json.dumps(record.model_dump(mode="json", by_alias=True), indent=2, sort_keys=False) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise DataError(f"Failed to write {path}: {e}") from e
    return path


def read_json(path: PathLike, model: Type[M]) -> M:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DataError(f"Artifact not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Failed to read {path}: {e}") from e
    return _coerce(model, raw, str(path))


class JsonlWriter:
    """Append validated records to a JSONL file, one object per line."""

    def __init__(self, path: PathLike, model: Type[BaseModel]):
        self.path = Path(path)
        self.model = model
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self.count = 0

    def write(self, record: Union[BaseModel, Dict[str, Any]]) -> None:
        rec = _coerce(self.model, record, str(self.path))
        self._fh.write(json.dumps(rec.model_dump(mode="json", by_alias=True)) + "\n")
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def read_jsonl(path: PathLike, model: Type[M]) -> List[M]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Artifact not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed JSON: {e}") from e
            records.append(_coerce(model, raw, f"{path}:{lineno}"))
    return records


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(
    path: PathLike,
    rows: Iterable[BaseModel],
    columns: Sequence[str],
    append: bool = False,
) -> Path:
    """Write rows (validated) with a fixed column order; header only on new files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not append or not path.exists()
    with path.open("w" if not append else "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(columns)
        for row in rows:
            row = _coerce(type(row), row, str(path))
            data = row.model_dump(by_alias=True)
            writer.writerow([_csv_cell(data[c]) for c in columns])
    return path


def read_csv(path: PathLike, model: Type[M]) -> List[M]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Artifact not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            cleaned = {k: (None if v == "" else v) for k, v in raw.items()}
            rows.append(_coerce(model, cleaned, f"{path}:{lineno}"))
    return rows


def truncate_csv(path: PathLike, model: Type[M], keep: Any, columns: Sequence[str]) -> int:
    """Rewrite a CSV keeping only rows for which ``keep(row)`` is true."""
    path = Path(path)
    if not path.exists():
        return 0
    rows = [r for r in read_csv(path, model) if keep(r)]
    write_csv(path, rows, columns)
    return len(rows)


# Artifact detection for `dmtf-nav validate`
def _detect(path: Path) -> Optional[Type[BaseModel]]:
    name = path.name
    if name.endswith(".manifest.json"):
        return CheckpointManifest
    if name == "summary.json":
        return ReportSummary
    if name == "ablation.json":
        return AblationSummary
    if name == "templates.json":
        return TemplateManifest
    if name == "metrics.csv":
        return MetricsRow
    if name == "episodes.csv":
        return EpisodeReportRow
    if name.endswith(".jsonl"):
        return TrajectoryRecord if "traj" in name else AttentionRecord
    if name.endswith(".json"):
        return SuiteFile
    return None


def validate_artifact(path: PathLike) -> str:
    """
    Re-check an artifact against its schema.

    Returns:
        A one-line description of what was validated.

    Raises:
        DataError: if the file does not match its schema or its kind is unknown.
    """
    path = Path(path)
    model = _detect(path)
    if model is None:
        raise DataError(f"Unrecognized artifact type: {path}")
    if path.suffix == ".csv":
        count = len(read_csv(path, model))
    elif path.suffix == ".jsonl":
        count = len(read_jsonl(path, model))
    else:
        read_json(path, model)
        count = 1
    logger.debug(f"Validated {path} as {model.__name__}")
    return f"{path.name}: {count} {model.__name__} record(s) OK"
