"""File formats: design / table / corpus JSON and unit-level CSV.

Parsing is strict: unknown keys, wrong types and non-finite numbers raise
:class:`SchemaError` naming the offending field. In exact mode JSON numbers
are read from their literal text, so ``0.1`` becomes ``Fraction(1, 10)``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable

from .design import Assignment, BlockDesign
from .errors import BlockRandError, SchemaError
from .numeric import convert, format_number, to_exact
from .outcomes import ObservedStudy, PotentialOutcomeTable, observe

SCHEMA_VERSION = 1
ASSIGNMENT_HEADER = ["block_id", "unit_index", "treatment"]
STUDY_HEADER = ASSIGNMENT_HEADER + ["outcome"]


def _reject_constant(name: str):
    raise SchemaError(f"non-finite number {name} is not allowed")


def parse_json(text: str, exact: bool = False):
    try:
        if exact:
            return json.loads(text, parse_float=str, parse_constant=_reject_constant)
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc}") from exc


def read_json(path: str | Path, exact: bool = False):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_json(text, exact)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _check_keys(doc, required: set[str], where: str, optional: Iterable[str] = ("schema_version",)):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where} must be a JSON object")
    allowed = required | set(optional)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown field(s) {unknown}")
    missing = sorted(required - set(doc))
    if missing:
        raise SchemaError(f"{where}: missing field(s) {missing}")
    if "schema_version" in doc and doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"{where}.schema_version must be {SCHEMA_VERSION}, got {doc['schema_version']!r}")


def _int(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{field} must be an integer, got {value!r}")
    return value


def design_from_dict(doc, where: str = "design") -> BlockDesign:
    _check_keys(doc, {"r", "block_sizes"}, where)
    r = _int(doc["r"], f"{where}.r")
    sizes = doc["block_sizes"]
    if not isinstance(sizes, list) or not sizes:
        raise SchemaError(f"{where}.block_sizes must be a non-empty list")
    sizes = [_int(v, f"{where}.block_sizes[{i}]") for i, v in enumerate(sizes)]
    try:
        return BlockDesign(r, tuple(sizes))
    except BlockRandError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def design_to_dict(design: BlockDesign) -> dict:
    return {"r": design.r, "block_sizes": list(design.block_sizes)}


def _value(v, field: str, exact: bool):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise SchemaError(f"{field} must be a number, got {v!r}")
    try:
        # "p/q" strings are exact; in double mode they round once, here
        return convert(to_exact(v), exact) if isinstance(v, str) else convert(v, exact)
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{field}: {exc}") from exc


def table_from_dict(doc, exact: bool = False, where: str = "table") -> PotentialOutcomeTable:
    _check_keys(doc, {"blocks"}, where)
    blocks = doc["blocks"]
    if not isinstance(blocks, list) or not blocks:
        raise SchemaError(f"{where}.blocks must be a non-empty list")
    rows_out = []
    width = None
    for c, block in enumerate(blocks):
        bw = f"{where}.blocks[{c}]"
        _check_keys(block, {"units"}, bw, optional=())
        units = block["units"]
        if not isinstance(units, list) or not units:
            raise SchemaError(f"{bw}.units must be a non-empty list")
        rows = []
        for k, row in enumerate(units):
            uw = f"{bw}.units[{k}]"
            if not isinstance(row, list) or not row:
                raise SchemaError(f"{uw} must be a non-empty list of outcomes")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise SchemaError(f"{uw} has {len(row)} outcomes, expected {width}")
            rows.append(tuple(_value(v, f"{uw}[{s}]", exact) for s, v in enumerate(row)))
        rows_out.append(tuple(rows))
    return PotentialOutcomeTable(tuple(rows_out))


def _json_value(v, exact: bool):
    if exact and v.denominator == 1:
        return int(v)
    return format_number(v, exact)


def table_to_dict(table: PotentialOutcomeTable, exact: bool | None = None) -> dict:
    exact = table.exact if exact is None else exact
    return {
        "blocks": [
            {"units": [[_json_value(v, exact) for v in row] for row in block]}
            for block in table.blocks
        ]
    }


def load_design(path) -> BlockDesign:
    return design_from_dict(read_json(path))


def load_table(path, exact: bool = False, design: BlockDesign | None = None) -> PotentialOutcomeTable:
    table = table_from_dict(read_json(path, exact), exact)
    if design is not None:
        try:
            table.check_design(design)
        except BlockRandError as exc:
            raise SchemaError(f"table does not match design: {exc}") from exc
    return table


def assignment_csv(assignment: Assignment) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ASSIGNMENT_HEADER)
    for c, block in enumerate(assignment.labels):
        for k, s in enumerate(block):
            writer.writerow([c + 1, k + 1, s])
    return buf.getvalue()


def study_csv(study: ObservedStudy, exact: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STUDY_HEADER)
    for c, (labels, ys) in enumerate(zip(study.assignment.labels, study.responses)):
        for k, (s, y) in enumerate(zip(labels, ys)):
            writer.writerow([c + 1, k + 1, s, format_number(y, exact)])
    return buf.getvalue()


def parse_unit_csv(text: str, design: BlockDesign, exact: bool = False):
    """Parse assignment or study CSV into ``(Assignment, responses or None)``."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("CSV is empty; expected header " + ",".join(STUDY_HEADER)) from None
    if header not in (ASSIGNMENT_HEADER, STUDY_HEADER):
        raise SchemaError(
            f"CSV header must be {','.join(ASSIGNMENT_HEADER)}[,outcome], got {','.join(header)}"
        )
    has_outcome = len(header) == 4
    labels = [[None] * m for m in design.block_sizes]
    responses = [[None] * m for m in design.block_sizes] if has_outcome else None
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"CSV line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            block_id, unit, treatment = (int(x) for x in row[:3])
        except ValueError:
            raise SchemaError(f"CSV line {line}: block_id, unit_index and treatment must be integers") from None
        if not 1 <= block_id <= design.num_blocks:
            raise SchemaError(f"CSV line {line}: block_id {block_id} outside 1..{design.num_blocks}")
        size = design.block_sizes[block_id - 1]
        if not 1 <= unit <= size:
            raise SchemaError(f"CSV line {line}: unit_index {unit} outside 1..{size} for block {block_id}")
        if not 1 <= treatment <= design.r:
            raise SchemaError(f"CSV line {line}: treatment {treatment} outside 1..{design.r}")
        if labels[block_id - 1][unit - 1] is not None:
            raise SchemaError(f"CSV line {line}: duplicate unit (block {block_id}, unit {unit})")
        labels[block_id - 1][unit - 1] = treatment
        if has_outcome:
            try:
                responses[block_id - 1][unit - 1] = convert(row[3], exact)
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"CSV line {line}: outcome: {exc}") from exc
    for c, block in enumerate(labels):
        for k, s in enumerate(block):
            if s is None:
                raise SchemaError(f"CSV is missing unit (block {c + 1}, unit {k + 1})")
    assignment = Assignment(tuple(tuple(b) for b in labels))
    return assignment, (tuple(tuple(b) for b in responses) if has_outcome else None)


def load_study(path, design: BlockDesign, exact: bool = False, table: PotentialOutcomeTable | None = None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from exc
    assignment, responses = parse_unit_csv(text, design, exact)
    if responses is None:
        if table is None:
            raise SchemaError("CSV has no outcome column; pass --table to reveal outcomes from potential outcomes")
        return observe(table, assignment)
    return ObservedStudy(design, assignment, responses)


def corpus_from_dict(doc, exact: bool = True):
    from .oracle import Case

    _check_keys(doc, {"cases"}, "corpus")
    if not isinstance(doc["cases"], list) or not doc["cases"]:
        raise SchemaError("corpus.cases must be a non-empty list")
    cases = []
    for i, item in enumerate(doc["cases"]):
        where = f"corpus.cases[{i}]"
        _check_keys(item, {"label", "design", "table"}, where, optional=())
        if not isinstance(item["label"], str):
            raise SchemaError(f"{where}.label must be a string")
        design = design_from_dict(item["design"], f"{where}.design")
        table = table_from_dict(item["table"], exact, f"{where}.table")
        try:
            table.check_design(design)
        except BlockRandError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        cases.append(Case(item["label"], table))
    return cases


def corpus_to_dict(cases) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "cases": [
            {"label": c.label, "design": design_to_dict(c.design), "table": table_to_dict(c.table)}
            for c in cases
        ],
    }


def load_corpus(path):
    return corpus_from_dict(read_json(path, exact=True))
