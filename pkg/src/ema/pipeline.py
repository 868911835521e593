"""Questionnaire authoring pipeline: CSV workbook to seeded backend content.

A study is authored as a directory of CSV files:

    study.csv      key/value metadata (study_id, languages, names, schedule)
    baseline.csv   one element per row
    followup.csv   optional, same layout; `ref` rows copy a baseline question
    feedback.csv   optional key/rule/text rows

Element sheets use the column contract
`elem_type,question_type,optional,variable,ref,codes,label_<lang>,options_<lang>`
with one label/options pair per declared language. Choice questions join
option codes and texts with ";"; sliders encode their range as
`min;max;step` in the codes column and leave options empty.

Stages: parse_workbook (structure only), clean_strings (whitespace
normalization), convert (semantic checks, produces the canonical document),
emit_json (deterministic bytes), seed (pushes the document to a backend,
versioning questionnaires by content).

Failures carry structured findings so callers can print them as JSON lines;
`exit_code` separates validation problems (1) from I/O and network (2).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from datetime import time, timedelta
from pathlib import Path
from typing import Optional, Sequence

import httpx

from . import model
from .feedback import RuleSyntaxError, UnknownVariableError, bind_rule, parse_rule
from .model import Finding, ValidationReport

ELEMENT_COLUMNS = ("elem_type", "question_type", "optional", "variable", "ref", "codes")
FEEDBACK_COLUMNS = ("key", "rule")
FLAG_VALUES = {"": False, "0": False, "false": False, "no": False,
               "1": True, "true": True, "yes": True}

MEDIA_TYPE = "application/vnd.api+json"


class PipelineError(Exception):
    """Base for staged failures; findings print as JSON lines in the CLI."""

    exit_code = 1

    def __init__(self, findings: Sequence[Finding]):
        self.findings = list(findings)
        head = self.findings[0] if self.findings else None
        super().__init__(head.message if head else "pipeline error")


class MissingFileError(PipelineError):
    exit_code = 2

    def __init__(self, path: Path):
        super().__init__([Finding("E_MISSING_FILE", str(path), f"required file {path.name} not found")])


class BadCsvError(PipelineError):
    pass


class BadHeaderError(PipelineError):
    pass


class ConvertError(PipelineError):
    pass


class EmitError(PipelineError):
    exit_code = 2


class SeedError(PipelineError):
    exit_code = 2


class SeedAuthError(SeedError):
    pass


class SeedConflictError(SeedError):
    pass


class SeedNetworkError(SeedError):
    pass


@dataclass(frozen=True)
class ElementRow:
    line: int
    elem_type: str
    question_type: str
    optional: str
    variable: str
    ref: str
    codes: str
    labels: dict
    options: dict


@dataclass(frozen=True)
class FeedbackRow:
    line: int
    key: str
    rule: str
    texts: dict


@dataclass
class Workbook:
    directory: str
    meta_rows: list
    sheets: dict
    feedback_rows: list
    warnings: list


def _read_rows(path: Path) -> list:
    try:
        with path.open(encoding="utf-8-sig", newline="") as handle:
            return list(csv.reader(handle))
    except csv.Error as exc:
        raise BadCsvError([Finding("E_BAD_CSV", str(path), f"malformed CSV: {exc}")])


def _header_index(path: Path, rows: list, required: Sequence[str]) -> dict:
    if not rows:
        raise BadHeaderError([Finding("E_BAD_HEADER", str(path), "file has no header row")])
    header = [h.strip() for h in rows[0]]
    missing = [col for col in required if col not in header]
    if missing:
        raise BadHeaderError(
            [Finding("E_BAD_HEADER", str(path), f"missing required columns: {', '.join(missing)}")]
        )
    return {name: i for i, name in enumerate(header)}


def _check_width(path: Path, rows: list) -> None:
    width = len(rows[0])
    bad = [
        Finding("E_BAD_CSV", f"{path.name}:{i + 2}", f"row has {len(row)} cells, header has {width}")
        for i, row in enumerate(rows[1:])
        if row and len(row) != width
    ]
    if bad:
        raise BadCsvError(bad)


def _suffix_columns(index: dict, prefix: str) -> dict:
    return {name[len(prefix):]: i for name, i in index.items() if name.startswith(prefix)}


def _warn_unknown(path: Path, index: dict, known: Sequence[str], prefixes: Sequence[str], warnings: list) -> None:
    for name in index:
        if name in known or any(name.startswith(p) for p in prefixes):
            continue
        warnings.append(Finding("W_UNKNOWN_COLUMN", path.name, f"ignoring unknown column {name!r}"))


def _parse_element_sheet(path: Path, warnings: list) -> list:
    rows = _read_rows(path)
    index = _header_index(path, rows, ELEMENT_COLUMNS)
    _check_width(path, rows)
    _warn_unknown(path, index, ELEMENT_COLUMNS, ("label_", "options_"), warnings)
    labels = _suffix_columns(index, "label_")
    options = _suffix_columns(index, "options_")
    out = []
    for i, row in enumerate(rows[1:]):
        if not row or all(cell == "" for cell in row):
            continue
        out.append(
            ElementRow(
                line=i + 2,
                elem_type=row[index["elem_type"]],
                question_type=row[index["question_type"]],
                optional=row[index["optional"]],
                variable=row[index["variable"]],
                ref=row[index["ref"]],
                codes=row[index["codes"]],
                labels={lang: row[col] for lang, col in labels.items()},
                options={lang: row[col] for lang, col in options.items()},
            )
        )
    return out


def _parse_feedback_sheet(path: Path, warnings: list) -> list:
    rows = _read_rows(path)
    index = _header_index(path, rows, FEEDBACK_COLUMNS)
    _check_width(path, rows)
    _warn_unknown(path, index, FEEDBACK_COLUMNS, ("text_",), warnings)
    texts = _suffix_columns(index, "text_")
    out = []
    for i, row in enumerate(rows[1:]):
        if not row or all(cell == "" for cell in row):
            continue
        out.append(
            FeedbackRow(
                line=i + 2,
                key=row[index["key"]],
                rule=row[index["rule"]],
                texts={lang: row[col] for lang, col in texts.items()},
            )
        )
    return out


def parse_workbook(directory) -> Workbook:
    """Read a study directory into structured rows, preserving file order.

    Structural problems only: missing files, malformed CSV, missing required
    columns. Content rules are convert's job.
    """
    root = Path(directory)
    warnings: list = []

    study_path = root / "study.csv"
    if not study_path.is_file():
        raise MissingFileError(study_path)
    baseline_path = root / "baseline.csv"
    if not baseline_path.is_file():
        raise MissingFileError(baseline_path)

    meta_rows = []
    rows = _read_rows(study_path)
    index = _header_index(study_path, rows, ("key", "value"))
    _check_width(study_path, rows)
    _warn_unknown(study_path, index, ("key", "value"), (), warnings)
    for row in rows[1:]:
        if not row or all(cell == "" for cell in row):
            continue
        meta_rows.append((row[index["key"]], row[index["value"]]))

    sheets = {"baseline": _parse_element_sheet(baseline_path, warnings)}
    followup_path = root / "followup.csv"
    if followup_path.is_file():
        sheets["followup"] = _parse_element_sheet(followup_path, warnings)

    feedback_rows: list = []
    feedback_path = root / "feedback.csv"
    if feedback_path.is_file():
        feedback_rows = _parse_feedback_sheet(feedback_path, warnings)

    return Workbook(
        directory=str(root),
        meta_rows=meta_rows,
        sheets=sheets,
        feedback_rows=feedback_rows,
        warnings=warnings,
    )


_WHITESPACE = re.compile(r"\s+")


def _clean(value: str) -> str:
    return _WHITESPACE.sub(" ", value).strip()


def clean_strings(w: Workbook) -> Workbook:
    """Collapse whitespace runs (line breaks included) and trim every cell.

    Idempotent; spreadsheet exports love to smuggle stray spaces and manual
    line breaks into labels.
    """
    return Workbook(
        directory=w.directory,
        meta_rows=[(_clean(k), _clean(v)) for k, v in w.meta_rows],
        sheets={
            name: [
                ElementRow(
                    line=r.line,
                    elem_type=_clean(r.elem_type),
                    question_type=_clean(r.question_type),
                    optional=_clean(r.optional),
                    variable=_clean(r.variable),
                    ref=_clean(r.ref),
                    codes=_clean(r.codes),
                    labels={k: _clean(v) for k, v in r.labels.items()},
                    options={k: _clean(v) for k, v in r.options.items()},
                )
                for r in rows
            ]
            for name, rows in w.sheets.items()
        },
        feedback_rows=[
            FeedbackRow(
                line=r.line,
                key=_clean(r.key),
                rule=_clean(r.rule),
                texts={k: _clean(v) for k, v in r.texts.items()},
            )
            for r in w.feedback_rows
        ],
        warnings=list(w.warnings),
    )


def _parse_meta(w: Workbook, report: ValidationReport) -> dict:
    meta: dict = {}
    seen = set()
    for key, value in w.meta_rows:
        if key in seen:
            report.error("E_META", "study.csv", f"duplicate key {key!r}")
        seen.add(key)
        meta[key] = value

    out: dict = {}
    study_id = meta.get("study_id", "")
    if not study_id:
        report.error("E_META", "study.csv", "study_id is required")
    out["study_id"] = study_id

    languages = tuple(p.strip() for p in meta.get("languages", "").split(",") if p.strip())
    if not languages:
        report.error("E_META", "study.csv", "languages must list at least one language code")
    out["languages"] = languages

    out["names"] = {}
    out["descriptions"] = {}
    for lang in languages:
        name = meta.get(f"name_{lang}", "")
        if not name:
            report.error("E_LANG_GAP", "study.csv", f"name_{lang} is required")
        out["names"][lang] = name
        out["descriptions"][lang] = meta.get(f"description_{lang}", "")

    def number(key: str, default: str) -> float:
        raw = meta.get(key, default)
        try:
            return float(raw)
        except ValueError:
            report.error("E_META", "study.csv", f"{key} must be a number, got {raw!r}")
            return float(default)

    def clock(key: str, default: str) -> time:
        raw = meta.get(key, default)
        match = re.fullmatch(r"(\d{1,2}):(\d{2})", raw)
        if not match or int(match.group(1)) > 23 or int(match.group(2)) > 59:
            report.error("E_META", "study.csv", f"{key} must be HH:MM, got {raw!r}")
            match = re.fullmatch(r"(\d{1,2}):(\d{2})", default)
        return time(int(match.group(1)), int(match.group(2)))

    out["interval_days"] = number("interval_days", "7")
    out["window_start"] = clock("window_start", "09:00")
    out["window_end"] = clock("window_end", "20:00")
    out["max_pending"] = int(number("max_pending", "1"))
    return out


def _parse_codes(raw: str) -> Optional[list]:
    if raw == "":
        return []
    try:
        return [int(p.strip()) for p in raw.split(";")]
    except ValueError:
        return None


def _split_options(raw: str) -> list:
    return [p.strip() for p in raw.split(";")] if raw != "" else []


def _convert_question(row: ElementRow, lang: str, where: str, report: ValidationReport) -> model.Question:
    optional = FLAG_VALUES.get(row.optional.lower())
    if optional is None:
        report.error("E_FLAG", where, f"optional must be a boolean flag, got {row.optional!r}")
        optional = False
    label = row.labels.get(lang, "")
    options: tuple = ()
    slider = None
    if row.question_type == "slider":
        parts = row.codes.split(";") if row.codes else []
        try:
            numbers = [float(p) for p in parts]
        except ValueError:
            numbers = []
        if len(numbers) != 3:
            report.error("E_CODE_MISMATCH", where, f"slider codes must be min;max;step, got {row.codes!r}")
        else:
            slider = model.SliderRange(*numbers)
        if any(row.options.get(l, "") for l in row.options):
            report.error("E_CODE_MISMATCH", where, "slider rows must leave options empty")
    else:
        codes = _parse_codes(row.codes)
        texts = _split_options(row.options.get(lang, ""))
        if codes is None:
            report.error("E_CODE_MISMATCH", where, f"codes must be ;-joined integers, got {row.codes!r}")
            codes = []
        if len(codes) != len(texts):
            report.error(
                "E_CODE_MISMATCH",
                where,
                f"{len(codes)} codes but {len(texts)} options for language {lang!r}",
            )
        options = tuple(model.Option(c, t) for c, t in zip(codes, texts))
    return model.Question(
        variable=row.variable,
        question_type=row.question_type,
        optional=optional,
        label=label,
        options=options,
        slider_range=slider,
    )


def convert(w: Workbook) -> dict:
    """Compile a cleaned workbook into the canonical study document.

    Every row lands in exactly one element per language or produces at least
    one error finding; nothing is dropped silently. The result passes the
    core validators for every sheet and language before it is returned.
    """
    report = ValidationReport()
    meta = _parse_meta(w, report)
    languages = meta["languages"]
    if not languages:
        raise ConvertError(report.errors)

    # label/options gaps are per sheet and language, found during row scans
    baseline_questions: dict = {}
    sheet_elements: dict = {}
    sheet_variables: dict = {}

    for sheet in ("baseline", "followup"):
        rows = w.sheets.get(sheet)
        if rows is None:
            continue
        per_lang: dict = {lang: [] for lang in languages}
        own_vars: dict = {}
        for row in rows:
            where = f"{sheet}.csv:{row.line}"
            if row.elem_type not in model.ELEMENT_KINDS:
                report.error("E_ELEM_TYPE", where, f"unknown elem_type {row.elem_type!r}")
                continue

            if row.ref:
                conflict = row.codes or any(row.labels.values()) or any(row.options.values())
                if row.elem_type != "question" or sheet != "followup":
                    report.error("E_REF_CONFLICT", where, "ref is only valid on follow-up question rows")
                    continue
                if conflict:
                    report.error("E_REF_CONFLICT", where, "ref rows must leave label, options and codes empty")
                    continue
                if row.variable and row.variable != row.ref:
                    report.error("E_REF_CONFLICT", where, f"variable {row.variable!r} contradicts ref {row.ref!r}")
                    continue
                source = baseline_questions.get(row.ref)
                if source is None:
                    report.error("E_DANGLING_REF", where, f"ref {row.ref!r} names no baseline question")
                    continue
                if row.question_type and row.question_type != source[languages[0]].question_type:
                    report.error("E_REF_CONFLICT", where, f"question_type contradicts baseline {row.ref!r}")
                    continue
                if row.ref in own_vars:
                    report.error("E_DUP_VAR", where, f"variable {row.ref!r} already referenced on row {own_vars[row.ref]}")
                    continue
                for lang in languages:
                    per_lang[lang].append(source[lang])
                own_vars[row.ref] = row.line
                continue

            if row.elem_type == "page":
                for lang in languages:
                    per_lang[lang].append(model.Page())
                continue

            if row.elem_type in ("headline", "text", "media"):
                for lang in languages:
                    label = row.labels.get(lang, "")
                    if label == "":
                        report.error("E_LANG_GAP", where, f"label_{lang} is required for {row.elem_type} rows")
                    if row.elem_type == "headline":
                        per_lang[lang].append(model.Headline(label))
                    elif row.elem_type == "text":
                        per_lang[lang].append(model.Text(label))
                    else:
                        per_lang[lang].append(model.Media(label))
                continue

            # question row
            if row.variable and (
                row.variable in own_vars
                or (sheet == "followup" and row.variable in baseline_questions)
            ):
                report.error(
                    "E_DUP_VAR",
                    where,
                    f"variable {row.variable!r} is already defined; follow-up rows reuse it via ref",
                )
                continue
            by_lang = {}
            for lang in languages:
                if lang not in row.labels:
                    report.error("E_LANG_GAP", where, f"label_{lang} column is missing")
                elif row.labels[lang] == "":
                    report.error("E_LANG_GAP", where, f"label_{lang} is required for question rows")
                by_lang[lang] = _convert_question(row, lang, where, report)
                per_lang[lang].append(by_lang[lang])
            if row.variable:
                own_vars[row.variable] = row.line
                if sheet == "baseline":
                    baseline_questions[row.variable] = by_lang

        sheet_elements[sheet] = per_lang
        sheet_variables[sheet] = own_vars

    questionnaires = []
    for sheet, per_lang in sheet_elements.items():
        variants = {}
        for lang in languages:
            q = model.Questionnaire(
                questionnaire_id=f"{meta['study_id']}-{sheet}",
                study_id=meta["study_id"],
                kind=sheet,
                language=lang,
                version=1,
                elements=tuple(per_lang[lang]),
            )
            questionnaires.append(q)
            variants[lang] = q
            checked = model.validate_questionnaire(q)
            for f in checked.errors:
                report.error(f.code, f"{sheet}.csv {lang} {f.location}", f.message)
        if len(variants) == len(languages) and not report.errors:
            crossed = model.check_cross_language(variants)
            for f in crossed.errors:
                report.error(f.code, f"{sheet}.csv {f.location}", f.message)

    known_variables = set()
    for own in sheet_variables.values():
        known_variables.update(own)

    feedback = []
    seen_keys: dict = {}
    for row in w.feedback_rows:
        where = f"feedback.csv:{row.line}"
        if not row.key:
            report.error("E_META", where, "feedback key is required")
        elif row.key in seen_keys:
            report.error("E_DUP_KEY", where, f"feedback key {row.key!r} already used on row {seen_keys[row.key]}")
        else:
            seen_keys[row.key] = row.line
        texts = {}
        for lang in languages:
            text = row.texts.get(lang, "")
            if text == "":
                report.error("E_LANG_GAP", where, f"text_{lang} is required")
            texts[lang] = text
        try:
            expr = parse_rule(row.rule)
            bind_rule(expr, known_variables)
        except RuleSyntaxError as exc:
            report.error("E_SYNTAX", where, f"{exc} (offset {exc.offset})")
            continue
        except UnknownVariableError as exc:
            report.error("E_UNKNOWN_VAR", where, f"rule references unknown variables: {', '.join(exc.variables)}")
            continue
        feedback.append({"key": row.key, "rule": row.rule, "texts": texts})

    if report.errors:
        raise ConvertError(report.errors)

    schedule = model.ScheduleSpec(
        interval=timedelta(days=meta["interval_days"]),
        window_start=meta["window_start"],
        window_end=meta["window_end"],
        max_pending=meta["max_pending"],
    )
    refs = tuple(f"{meta['study_id']}-{sheet}" for sheet in ("baseline", "followup") if sheet in sheet_elements)
    study = model.Study(
        study_id=meta["study_id"],
        names=meta["names"],
        description=meta["descriptions"],
        languages=languages,
        schedule=schedule,
        questionnaire_refs=refs,
    )
    study.check()
    schedule.check()
    return model.document_from_parts(study, questionnaires, feedback)


def document_element_counts(doc: dict) -> dict:
    """Element tallies over one representative language per questionnaire,
    so multilingual studies are not double-counted."""
    first_lang = doc["meta"]["languages"][0]
    _, questionnaires, _ = model.document_to_parts(doc)
    return model.element_counts([q for q in questionnaires if q.language == first_lang])


def emit_json(doc: dict, output_path) -> None:
    """Write the canonical serialization; identical input, identical bytes."""
    try:
        Path(output_path).write_text(model.canonical_dumps(doc), encoding="utf-8")
    except OSError as exc:
        raise EmitError([Finding("E_IO", str(output_path), f"cannot write output: {exc}")])


def discover_studies(root) -> list:
    """A convertible path is either one study directory or a corpus of them."""
    base = Path(root)
    if (base / "study.csv").is_file():
        return [base]
    return sorted(p.parent for p in base.glob("*/study.csv"))


@dataclass(frozen=True)
class SeedResult:
    action: str  # created | unchanged | versioned
    questionnaire_id: str
    new_version: int


def seed(api_base: str, token: str, doc: dict, client=None) -> list:
    """Push one study document to the backend.

    New questionnaires are created at version 1; content-identical ones are
    left untouched; changed ones get a fresh version while the old stays
    retrievable. Requires a collaborator or admin token.
    """
    owns_client = client is None
    if owns_client:
        client = httpx.Client(base_url=api_base, timeout=30.0)
    try:
        body = {
            "data": {
                "type": "questionnaire-documents",
                "id": doc["meta"]["study_id"],
                "attributes": doc,
            }
        }
        headers = {
            "Authorization": f"Bearer {token}",
            "Content-Type": MEDIA_TYPE,
            "Accept": MEDIA_TYPE,
        }
        try:
            response = client.put("/api/v1/questionnaires", json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise SeedNetworkError(
                [Finding("E_NETWORK", api_base, f"request failed: {exc}; safe to retry")]
            )
        if response.status_code in (401, 403):
            raise SeedAuthError(
                [Finding("E_AUTH", api_base, "token lacks collaborator or admin role")]
            )
        if response.status_code == 409:
            raise SeedConflictError(
                [Finding("E_CONFLICT", api_base, "concurrent seed of the same study; retry")]
            )
        if response.status_code != 200:
            raise SeedError(
                [Finding("E_SEED", api_base, f"unexpected status {response.status_code}: {response.text[:200]}")]
            )
        payload = response.json()
        return [
            SeedResult(
                action=item["attributes"]["action"],
                questionnaire_id=item["id"],
                new_version=int(item["attributes"]["new_version"]),
            )
            for item in payload["data"]
        ]
    finally:
        if owns_client:
            client.close()
