"""Trace record validator for JSONL episode traces."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import jsonschema

from crowd_safety_navigator.errors import TraceFormatError

logger = logging.getLogger(__name__)


class TraceValidator:
    """Validates trace records against the JSON schema and checks per-episode consistency."""

    def __init__(self, schema_path: Path | None = None, strict: bool = False) -> None:
        """Initialize validator with schema.

        Args:
            schema_path: Path to JSON schema file. Defaults to contracts/trace_record_schema.json
            strict: Raise on the first invalid record instead of skipping it
        """
        if schema_path is None:
            package_root = Path(__file__).resolve().parent.parent
            schema_path = package_root / "contracts" / "trace_record_schema.json"

        self.schema_path = schema_path
        self.strict = strict
        with open(schema_path, "r", encoding="utf-8") as f:
            self.schema = json.load(f)

        self.validator = jsonschema.Draft7Validator(self.schema)

    def validate_header(self, record: Dict[str, Any]) -> Dict[str, Any]:
        """Validate a header record. Headers are always strict.

        Raises:
            TraceFormatError: If the record is not a valid header
        """
        if not isinstance(record, dict) or record.get("type") != "header":
            raise TraceFormatError("Trace must start with a header record")
        try:
            self.validator.validate(record)
        except jsonschema.ValidationError as e:
            raise TraceFormatError(f"Invalid trace header: {e.message}") from e
        if len(record["initial_human_positions"]) != len(record["human_radii"]):
            raise TraceFormatError("Trace header human count disagrees with human_radii")
        return record

    def validate_all(self, records: List[Dict[str, Any]], human_count: int | None = None) -> List[Dict[str, Any]]:
        """Validate step records.

        Args:
            records: Step record dictionaries in step order
            human_count: Expected number of humans per record, if known from the header

        Returns:
            Valid records, in their original order

        Raises:
            TraceFormatError: In strict mode, on the first invalid record
        """
        valid_records: List[Dict[str, Any]] = []

        for record in records:
            problem = self._problem(record, human_count)
            if problem is None:
                valid_records.append(record)
                continue
            step = record.get("step", "unknown") if isinstance(record, dict) else "unknown"
            if self.strict:
                raise TraceFormatError(f"Invalid trace record at step {step}: {problem}")
            logger.warning(f"Skipped invalid trace record: {problem}. Step: {step}")

        return valid_records

    def _problem(self, record: Any, human_count: int | None) -> str | None:
        if not isinstance(record, dict) or record.get("type") != "step":
            return "not a step record"
        try:
            self.validator.validate(record)
        except jsonschema.ValidationError as e:
            return e.message

        if human_count is not None:
            for key in ("human_positions", "human_velocities", "predictions", "uncertainty"):
                value = record.get(key)
                if value is not None and len(value) != human_count:
                    return f"'{key}' has {len(value)} humans, expected {human_count}"
        predictions, uncertainty = record.get("predictions"), record.get("uncertainty")
        if predictions is not None and uncertainty is not None:
            if [len(row) for row in predictions] != [len(row) for row in uncertainty]:
                return "predictions and uncertainty disagree on the horizon"
        return None
