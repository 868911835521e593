"""Domain types for studies and questionnaires, structural validation, and the
canonical questionnaire JSON contract shared by the content pipeline and the API."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import time, timedelta

VARIABLE_RE = re.compile(r"^[a-z][a-z0-9_]*$")

QUESTION_TYPES = ("single_choice", "multi_choice", "slider", "text_input", "date", "yesno")
CHOICE_TYPES = ("single_choice", "multi_choice")
ELEMENT_KINDS = ("page", "headline", "text", "question", "media")
QUESTIONNAIRE_KINDS = ("baseline", "followup")

# Codes accepted for yesno questions; they carry no authored option list.
YESNO_CODES = (0, 1)


@dataclass(frozen=True)
class Page:
    pass


@dataclass(frozen=True)
class Headline:
    text: str


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class Media:
    uri: str


@dataclass(frozen=True)
class Option:
    code: int
    text: str


@dataclass(frozen=True)
class SliderRange:
    min: float
    max: float
    step: float


@dataclass(frozen=True)
class Question:
    variable: str
    question_type: str
    optional: bool
    label: str
    options: tuple[Option, ...] = ()
    slider_range: SliderRange | None = None


Element = Page | Headline | Text | Media | Question


def element_kind(el: Element) -> str:
    if isinstance(el, Page):
        return "page"
    if isinstance(el, Headline):
        return "headline"
    if isinstance(el, Text):
        return "text"
    if isinstance(el, Media):
        return "media"
    if isinstance(el, Question):
        return "question"
    raise TypeError(f"not a questionnaire element: {el!r}")


@dataclass(frozen=True)
class ScheduleSpec:
    """Follow-up cadence: one tick per interval, delivered inside the daily window."""

    interval: timedelta
    window_start: time
    window_end: time
    max_pending: int = 1

    def check(self) -> None:
        if self.interval < timedelta(days=1):
            raise ValueError("schedule interval must be at least one day")
        if not self.window_start < self.window_end:
            raise ValueError("window_start must precede window_end")
        if self.max_pending < 1:
            raise ValueError("max_pending must be positive")


@dataclass(frozen=True)
class Study:
    study_id: str
    names: dict[str, str]
    description: dict[str, str]
    languages: tuple[str, ...]
    schedule: ScheduleSpec
    questionnaire_refs: tuple[str, ...]  # baseline id first

    def check(self) -> None:
        if not self.languages:
            raise ValueError("study declares no languages")
        declared = set(self.languages)
        for label, translated in (("names", self.names), ("description", self.description)):
            if set(translated) != declared:
                raise ValueError(f"{label} must cover exactly the declared languages")
        self.schedule.check()


@dataclass(frozen=True)
class Questionnaire:
    questionnaire_id: str
    study_id: str
    kind: str  # baseline | followup
    language: str
    version: int
    elements: tuple[Element, ...]


@dataclass(frozen=True)
class Finding:
    code: str
    location: str
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "location": self.location, "message": self.message}


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, location: str, message: str) -> None:
        self.errors.append(Finding(code, location, message))

    def warn(self, code: str, location: str, message: str) -> None:
        self.warnings.append(Finding(code, location, message))

    def extend(self, other: "ValidationReport") -> None:
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)


def validate_questionnaire(q: Questionnaire) -> ValidationReport:
    """Check every structural invariant of a questionnaire.

    Violations are reported as data, ordered by element index; a report with no
    errors means the questionnaire is valid.
    """
    report = ValidationReport()
    if q.kind not in QUESTIONNAIRE_KINDS:
        report.error("E_KIND", q.questionnaire_id, f"unknown questionnaire kind {q.kind!r}")
    if q.version < 1:
        report.error("E_VERSION", q.questionnaire_id, f"version must be >= 1, got {q.version}")
    if not q.elements:
        report.error("E_EMPTY", q.questionnaire_id, "questionnaire has no elements")
        return report

    seen: set[str] = set()
    for i, el in enumerate(q.elements):
        if not isinstance(el, Question):
            continue
        loc = el.variable or f"element[{i}]"
        if not VARIABLE_RE.match(el.variable):
            report.error("E_BAD_VAR", f"element[{i}]", f"variable {el.variable!r} is not lowercase snake case")
        elif el.variable in seen:
            report.error("E_DUP_VAR", loc, f"variable {el.variable!r} appears more than once")
        else:
            seen.add(el.variable)

        if el.question_type not in QUESTION_TYPES:
            report.error("E_QUESTION_TYPE", loc, f"unknown question type {el.question_type!r}")
            continue
        if el.question_type in CHOICE_TYPES:
            if len(el.options) < 2:
                report.error("E_FEW_OPTIONS", loc, f"choice question has {len(el.options)} options, needs at least 2")
            codes = [o.code for o in el.options]
            if len(codes) != len(set(codes)):
                report.error("E_DUP_CODE", loc, f"option codes {codes} contain duplicates")
        elif el.question_type == "slider":
            r = el.slider_range
            if r is None:
                report.error("E_SLIDER_RANGE", loc, "slider question has no range")
            elif not (r.min < r.max and r.step > 0):
                report.error("E_SLIDER_RANGE", loc, f"invalid slider range min={r.min} max={r.max} step={r.step}")
    return report


def element_counts(qs: list[Questionnaire]) -> dict[str, int]:
    """Tally elements by kind over a list of questionnaires. Counts always
    carry all five kinds and sum to the total element count."""
    counts = {kind: 0 for kind in ELEMENT_KINDS}
    for q in qs:
        for el in q.elements:
            counts[element_kind(el)] += 1
    return counts


def _questions_of(q: Questionnaire) -> dict[str, tuple[int, Question]]:
    out: dict[str, tuple[int, Question]] = {}
    for i, el in enumerate(q.elements):
        if isinstance(el, Question) and el.variable not in out:
            out[el.variable] = (i, el)
    return out


def check_cross_language(variants: dict[str, Questionnaire]) -> ValidationReport:
    """Compare language variants of one questionnaire for structural agreement.

    Only translated texts may differ between languages; question type, optionality,
    option count, option codes and slider ranges must match everywhere.
    """
    report = ValidationReport()
    if not variants:
        return report
    ids = {q.questionnaire_id for q in variants.values()}
    versions = {q.version for q in variants.values()}
    if len(ids) > 1 or len(versions) > 1:
        raise ValueError("variants must share questionnaire_id and version")

    langs = sorted(variants)
    ref_lang = langs[0]
    ref = _questions_of(variants[ref_lang])
    others = {lang: _questions_of(variants[lang]) for lang in langs[1:]}

    for var, (idx, ref_q) in sorted(ref.items(), key=lambda kv: kv[1][0]):
        for lang in langs[1:]:
            q = others[lang].get(var)
            if q is None:
                report.error("E_MISSING_VAR", var, f"variable present in {ref_lang!r} but missing in {lang!r}")
                continue
            other_q = q[1]
            if other_q.question_type != ref_q.question_type:
                report.error(
                    "E_QTYPE_DIFF", var,
                    f"question type differs: {ref_lang}={ref_q.question_type} {lang}={other_q.question_type}",
                )
            if other_q.optional != ref_q.optional:
                report.error("E_OPTIONAL_DIFF", var, f"optionality differs between {ref_lang} and {lang}")
            if len(other_q.options) != len(ref_q.options):
                report.error(
                    "E_OPTION_COUNT", var,
                    f"option count differs: {ref_lang}={len(ref_q.options)} {lang}={len(other_q.options)}",
                )
            elif [o.code for o in other_q.options] != [o.code for o in ref_q.options]:
                report.error("E_OPTION_CODES", var, f"option codes differ between {ref_lang} and {lang}")
            if other_q.slider_range != ref_q.slider_range:
                report.error("E_SLIDER_DIFF", var, f"slider range differs between {ref_lang} and {lang}")

    for lang in langs[1:]:
        for var, (idx, _) in sorted(others[lang].items(), key=lambda kv: kv[1][0]):
            if var not in ref:
                report.error("E_MISSING_VAR", var, f"variable present in {lang!r} but missing in {ref_lang!r}")
    return report


# --- canonical JSON contract -------------------------------------------------
#
# Top level: {"meta": {...}, "questionnaires": [...], "feedback": [...]}
# Element objects carry a "type" discriminator; question objects use the key
# names frozen by the golden files ("questiontype", "optional", "options", ...).


def element_to_json(el: Element) -> dict:
    if isinstance(el, Page):
        return {"type": "page"}
    if isinstance(el, Headline):
        return {"type": "headline", "text": el.text}
    if isinstance(el, Text):
        return {"type": "text", "text": el.text}
    if isinstance(el, Media):
        return {"type": "media", "uri": el.uri}
    if isinstance(el, Question):
        obj = {
            "type": "question",
            "variable": el.variable,
            "questiontype": el.question_type,
            "optional": el.optional,
            "label": el.label,
            "options": [{"code": o.code, "text": o.text} for o in el.options],
        }
        if el.slider_range is not None:
            obj["slider_range"] = {
                "min": el.slider_range.min,
                "max": el.slider_range.max,
                "step": el.slider_range.step,
            }
        return obj
    raise TypeError(f"not a questionnaire element: {el!r}")


def element_from_json(obj: dict) -> Element:
    kind = obj.get("type")
    if kind == "page":
        return Page()
    if kind == "headline":
        return Headline(text=obj["text"])
    if kind == "text":
        return Text(text=obj["text"])
    if kind == "media":
        return Media(uri=obj["uri"])
    if kind == "question":
        slider = obj.get("slider_range")
        return Question(
            variable=obj["variable"],
            question_type=obj["questiontype"],
            optional=bool(obj["optional"]),
            label=obj["label"],
            options=tuple(Option(int(o["code"]), o["text"]) for o in obj.get("options", [])),
            slider_range=SliderRange(slider["min"], slider["max"], slider["step"]) if slider else None,
        )
    raise ValueError(f"unknown element type {kind!r}")


def questionnaire_to_json(q: Questionnaire) -> dict:
    return {
        "questionnaire_id": q.questionnaire_id,
        "kind": q.kind,
        "language": q.language,
        "version": q.version,
        "elements": [element_to_json(el) for el in q.elements],
    }


def questionnaire_from_json(obj: dict, study_id: str) -> Questionnaire:
    return Questionnaire(
        questionnaire_id=obj["questionnaire_id"],
        study_id=study_id,
        kind=obj["kind"],
        language=obj["language"],
        version=int(obj["version"]),
        elements=tuple(element_from_json(e) for e in obj["elements"]),
    )


def schedule_to_json(s: ScheduleSpec) -> dict:
    return {
        "interval_days": s.interval.days + s.interval.seconds / 86400,
        "window_start": s.window_start.strftime("%H:%M"),
        "window_end": s.window_end.strftime("%H:%M"),
        "max_pending": s.max_pending,
    }


def schedule_from_json(obj: dict) -> ScheduleSpec:
    h1, m1 = obj["window_start"].split(":")
    h2, m2 = obj["window_end"].split(":")
    return ScheduleSpec(
        interval=timedelta(days=obj["interval_days"]),
        window_start=time(int(h1), int(m1)),
        window_end=time(int(h2), int(m2)),
        max_pending=int(obj.get("max_pending", 1)),
    )


def study_to_meta(study: Study) -> dict:
    return {
        "study_id": study.study_id,
        "languages": list(study.languages),
        "name": dict(study.names),
        "description": dict(study.description),
        "schedule": schedule_to_json(study.schedule),
    }


def study_from_meta(meta: dict, questionnaire_refs: tuple[str, ...]) -> Study:
    return Study(
        study_id=meta["study_id"],
        names=dict(meta["name"]),
        description=dict(meta["description"]),
        languages=tuple(meta["languages"]),
        schedule=schedule_from_json(meta["schedule"]),
        questionnaire_refs=questionnaire_refs,
    )


def document_from_parts(study: Study, questionnaires: list[Questionnaire], feedback: list[dict]) -> dict:
    """Assemble the canonical questionnaire document for one study.

    `feedback` entries are exchange-format dicts: {"key", "rule", "texts"}.
    """
    return {
        "meta": study_to_meta(study),
        "questionnaires": [questionnaire_to_json(q) for q in questionnaires],
        "feedback": feedback,
    }


def document_to_parts(doc: dict) -> tuple[Study, list[Questionnaire], list[dict]]:
    meta = doc["meta"]
    questionnaires = [questionnaire_from_json(obj, meta["study_id"]) for obj in doc["questionnaires"]]
    refs = []
    for q in questionnaires:
        if q.questionnaire_id not in refs:
            refs.append(q.questionnaire_id)
    refs.sort(key=lambda r: 0 if r.endswith("baseline") else 1)
    study = study_from_meta(meta, tuple(refs))
    return study, questionnaires, list(doc.get("feedback", []))


def canonical_dumps(doc: dict) -> str:
    """Pretty, key-sorted serialization; byte-identical for identical input."""
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def content_fingerprint(doc: dict, questionnaire_id: str) -> str:
    """Version-insensitive content identity of one logical questionnaire
    (all its language variants), used to decide seeding actions."""
    variants = [
        {k: v for k, v in obj.items() if k != "version"}
        for obj in doc["questionnaires"]
        if obj["questionnaire_id"] == questionnaire_id
    ]
    variants.sort(key=lambda o: o["language"])
    return json.dumps(variants, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
