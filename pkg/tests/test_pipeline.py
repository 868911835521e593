"""Workbook parsing, cleaning, conversion, emission and seeding."""

import csv
import json
import random
from pathlib import Path

import httpx
import pytest

from ema import model
from ema.pipeline import (
    BadCsvError,
    BadHeaderError,
    ConvertError,
    MissingFileError,
    SeedAuthError,
    SeedConflictError,
    SeedNetworkError,
    SeedResult,
    clean_strings,
    convert,
    discover_studies,
    document_element_counts,
    emit_json,
    parse_workbook,
    seed,
)

from oracles import independent_read_csv

MINI = Path(__file__).resolve().parent.parent / "fixtures" / "mini"

ELEMENT_HEADER = [
    "elem_type", "question_type", "optional", "variable", "ref", "codes",
    "label_en", "options_en", "label_de", "options_de",
]

STUDY_ROWS = [
    ["key", "value"],
    ["study_id", "tiny"],
    ["languages", "en,de"],
    ["name_en", "Tiny"],
    ["name_de", "Winzig"],
    ["description_en", "d"],
    ["description_de", "d"],
]

BASELINE_ROWS = [
    ELEMENT_HEADER,
    ["page", "", "", "", "", "", "", "", "", ""],
    ["question", "single_choice", "false", "phq1", "", "0;1;2", "Q1", "a;b;c", "F1", "x;y;z"],
    ["question", "slider", "false", "stress", "", "0;10;1", "Q2", "", "F2", ""],
]

FOLLOWUP_ROWS = [
    ELEMENT_HEADER,
    ["page", "", "", "", "", "", "", "", "", ""],
    ["question", "", "", "", "phq1", "", "", "", "", ""],
    ["question", "yesno", "true", "better", "", "0;1", "Q3", "no;yes", "F3", "nein;ja"],
]

FEEDBACK_ROWS = [
    ["key", "rule", "text_en", "text_de"],
    ["high", "phq1 >= 2", "high!", "hoch!"],
]


def write_study(root: Path, study=STUDY_ROWS, baseline=BASELINE_ROWS, followup=FOLLOWUP_ROWS,
                feedback=FEEDBACK_ROWS) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for name, rows in (("study.csv", study), ("baseline.csv", baseline),
                       ("followup.csv", followup), ("feedback.csv", feedback)):
        if rows is None:
            continue
        with (root / name).open("w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return root


def compile_dir(root: Path) -> dict:
    return convert(clean_strings(parse_workbook(root)))


def convert_error_codes(root: Path) -> list:
    with pytest.raises(ConvertError) as info:
        compile_dir(root)
    return [(f.code, f.location) for f in info.value.findings]


# --- parse_workbook -----------------------------------------------------------


def test_parse_collects_rows_in_file_order(tmp_path):
    w = parse_workbook(write_study(tmp_path / "s"))
    assert [r.elem_type for r in w.sheets["baseline"]] == ["page", "question", "question"]
    assert w.sheets["baseline"][1].labels == {"en": "Q1", "de": "F1"}
    assert w.sheets["followup"][1].ref == "phq1"
    assert w.meta_rows[0] == ("study_id", "tiny")
    assert w.feedback_rows[0].texts == {"en": "high!", "de": "hoch!"}
    assert w.warnings == []


def test_missing_files_are_named(tmp_path):
    with pytest.raises(MissingFileError) as info:
        parse_workbook(tmp_path)
    assert "study.csv" in str(info.value.findings[0].location)
    write_study(tmp_path, baseline=None, followup=None, feedback=None)
    with pytest.raises(MissingFileError) as info:
        parse_workbook(tmp_path)
    assert "baseline.csv" in str(info.value.findings[0].location)


def test_followup_and_feedback_are_optional(tmp_path):
    w = parse_workbook(write_study(tmp_path, followup=None, feedback=None))
    assert set(w.sheets) == {"baseline"}
    assert w.feedback_rows == []


def test_quoted_commas_and_newlines_match_independent_reader(tmp_path):
    tricky = [
        ELEMENT_HEADER,
        ["text", "", "", "", "", "", 'He said "hi, there"\nand left', "",
         "Zeile eins\nZeile zwei, ja", ""],
        ["question", "single_choice", "false", "q1", "", "1;2",
         "A, B, or C?", "first;second", "A, B oder C?", "erste;zweite"],
    ]
    root = write_study(tmp_path, baseline=tricky, followup=None, feedback=None)
    raw = (root / "baseline.csv").read_text(encoding="utf-8")
    cells = independent_read_csv(raw)
    assert cells[0] == ELEMENT_HEADER
    assert cells[1:] == tricky[1:]

    w = parse_workbook(root)
    got = w.sheets["baseline"][0]
    assert got.labels["en"] == 'He said "hi, there"\nand left'
    assert got.labels["de"] == "Zeile eins\nZeile zwei, ja"
    # field-by-field equality with the independent reader's row
    assert [got.elem_type, got.question_type, got.optional, got.variable, got.ref,
            got.codes, got.labels["en"], got.options["en"], got.labels["de"],
            got.options["de"]] == cells[1]


def test_inconsistent_column_count_is_rejected(tmp_path):
    root = write_study(tmp_path)
    with (root / "baseline.csv").open("a", encoding="utf-8", newline="") as fh:
        fh.write("question,yesno,false\n")
    with pytest.raises(BadCsvError) as info:
        parse_workbook(root)
    assert info.value.findings[0].code == "E_BAD_CSV"
    assert "baseline.csv:5" in info.value.findings[0].location


def test_missing_required_columns_is_rejected(tmp_path):
    bad = [["elem_type", "variable", "label_en"], ["page", "", ""]]
    root = write_study(tmp_path, baseline=bad, followup=None, feedback=None)
    with pytest.raises(BadHeaderError) as info:
        parse_workbook(root)
    assert "question_type" in info.value.findings[0].message


def test_unknown_columns_warn_but_parse(tmp_path):
    rows = [r[:] for r in BASELINE_ROWS]
    rows[0] = rows[0] + ["color"]
    for r in rows[1:]:
        r.append("red")
    w = parse_workbook(write_study(tmp_path, baseline=rows, followup=None, feedback=None))
    assert [f.code for f in w.warnings] == ["W_UNKNOWN_COLUMN"]
    assert len(w.sheets["baseline"]) == 3


# --- clean_strings -------------------------------------------------------------


def test_clean_strings_examples(tmp_path):
    rows = [r[:] for r in BASELINE_ROWS]
    rows[1] = ["page", "", "", "", "", "", "", "", "", ""]
    rows[2] = ["question", "single_choice", "false", "phq1", "", "0;1;2",
               "  How   are\nyou? ", "a;b;c", "Yes\n", "x;y;z"]
    w = clean_strings(parse_workbook(write_study(tmp_path, baseline=rows)))
    q = w.sheets["baseline"][1]
    assert q.labels["en"] == "How are you?"
    assert q.labels["de"] == "Yes"


def test_clean_strings_idempotent_on_random_strings():
    from ema.pipeline import _clean

    rng = random.Random(36)
    pieces = ["a", "bc", "Wort", "?", ",", ";", '"', " ", "  ", "\n", "\t", "\r\n", "ä"]
    for _ in range(1000):
        s = "".join(rng.choice(pieces) for _ in range(rng.randint(0, 12)))
        once = _clean(s)
        assert _clean(once) == once
        assert once == once.strip()
        assert "  " not in once and "\n" not in once and "\t" not in once


# --- convert -------------------------------------------------------------------


def test_convert_produces_one_questionnaire_per_sheet_and_language(tmp_path):
    doc = compile_dir(write_study(tmp_path))
    ids = [(q["questionnaire_id"], q["language"]) for q in doc["questionnaires"]]
    assert sorted(ids) == [
        ("tiny-baseline", "de"),
        ("tiny-baseline", "en"),
        ("tiny-followup", "de"),
        ("tiny-followup", "en"),
    ]
    # same element structure in every language, only texts differ
    by_id: dict = {}
    for q in doc["questionnaires"]:
        by_id.setdefault(q["questionnaire_id"], []).append(q)
    for variants in by_id.values():
        kinds = [[e["type"] for e in v["elements"]] for v in variants]
        assert kinds[0] == kinds[1]
        for a, b in zip(variants[0]["elements"], variants[1]["elements"]):
            if a["type"] == "question":
                assert a["variable"] == b["variable"]
                assert a["questiontype"] == b["questiontype"]
                assert [o["code"] for o in a["options"]] == [o["code"] for o in b["options"]]
    assert doc["meta"]["study_id"] == "tiny"
    assert doc["meta"]["schedule"]["interval_days"] == 7.0


def test_ref_row_copies_the_baseline_question(tmp_path):
    doc = compile_dir(write_study(tmp_path))
    per_lang = {
        (q["kind"], q["language"]): q["elements"] for q in doc["questionnaires"]
    }
    for lang in ("en", "de"):
        baseline_q = next(
            e for e in per_lang[("baseline", lang)] if e.get("variable") == "phq1"
        )
        followup_q = next(
            e for e in per_lang[("followup", lang)] if e.get("variable") == "phq1"
        )
        assert followup_q == baseline_q


def test_unknown_elem_type_names_the_row(tmp_path):
    rows = [r[:] for r in BASELINE_ROWS]
    rows[1][0] = "pciture"
    codes = convert_error_codes(write_study(tmp_path, baseline=rows))
    assert ("E_ELEM_TYPE", "baseline.csv:2") in codes


def test_dangling_ref(tmp_path):
    rows = [r[:] for r in FOLLOWUP_ROWS]
    rows[2][4] = "nope"
    codes = convert_error_codes(write_study(tmp_path, followup=rows))
    assert ("E_DANGLING_REF", "followup.csv:3") in codes


def test_ref_with_content_conflicts(tmp_path):
    rows = [r[:] for r in FOLLOWUP_ROWS]
    rows[2][5] = "0;1"  # codes on a ref row
    codes = convert_error_codes(write_study(tmp_path, followup=rows))
    assert ("E_REF_CONFLICT", "followup.csv:3") in codes


def test_code_option_arity_mismatch(tmp_path):
    rows = [r[:] for r in BASELINE_ROWS]
    rows[1] = ["question", "single_choice", "false", "q9", "", "0;1;2", "Q", "a;b", "F", "x;y;z"]
    codes = convert_error_codes(write_study(tmp_path, baseline=rows))
    assert ("E_CODE_MISMATCH", "baseline.csv:2") in codes


def test_language_gap_in_label(tmp_path):
    rows = [r[:] for r in BASELINE_ROWS]
    rows[2][8] = ""  # label_de emptied
    codes = convert_error_codes(write_study(tmp_path, baseline=rows))
    assert ("E_LANG_GAP", "baseline.csv:3") in codes


def test_variable_reuse_without_ref_is_rejected(tmp_path):
    rows = [r[:] for r in FOLLOWUP_ROWS]
    rows[2] = ["question", "single_choice", "false", "phq1", "", "0;1", "Q", "a;b", "F", "x;y"]
    codes = convert_error_codes(write_study(tmp_path, followup=rows))
    assert ("E_DUP_VAR", "followup.csv:3") in codes


def test_feedback_rule_errors(tmp_path):
    feedback = [
        ["key", "rule", "text_en", "text_de"],
        ["a", "phq1 >=", "t", "t"],
        ["b", "ghost > 1", "t", "t"],
        ["b", "phq1 > 1", "t", "t"],
        ["c", "phq1 > 1", "t", ""],
    ]
    codes = convert_error_codes(write_study(tmp_path, feedback=feedback))
    assert ("E_SYNTAX", "feedback.csv:2") in codes
    assert ("E_UNKNOWN_VAR", "feedback.csv:3") in codes
    assert ("E_DUP_KEY", "feedback.csv:4") in codes
    assert ("E_LANG_GAP", "feedback.csv:5") in codes


def test_slider_codes_become_a_range(tmp_path):
    doc = compile_dir(write_study(tmp_path))
    q = next(
        e
        for v in doc["questionnaires"]
        if v["language"] == "en" and v["kind"] == "baseline"
        for e in v["elements"]
        if e.get("variable") == "stress"
    )
    assert q["slider_range"] == {"min": 0.0, "max": 10.0, "step": 1.0}
    assert q["options"] == []


def test_meta_errors(tmp_path):
    study = [r[:] for r in STUDY_ROWS]
    study[1] = ["study_id", ""]
    study.append(["interval_days", "week"])
    codes = convert_error_codes(write_study(tmp_path, study=study))
    assert ("E_META", "study.csv") in codes


# --- emit / golden ------------------------------------------------------------


def test_emit_is_deterministic(tmp_path):
    root = write_study(tmp_path / "src")
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    emit_json(compile_dir(root), out1)
    emit_json(compile_dir(root), out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_emit_parse_emit_fixed_point(tmp_path):
    root = write_study(tmp_path / "src")
    out = tmp_path / "a.json"
    emit_json(compile_dir(root), out)
    reloaded = json.loads(out.read_text(encoding="utf-8"))
    assert model.canonical_dumps(reloaded) == out.read_text(encoding="utf-8")


def test_mini_fixture_matches_golden_file():
    doc = compile_dir(MINI)
    golden = MINI.parent / "mini.golden.json"
    assert model.canonical_dumps(doc) == golden.read_text(encoding="utf-8")


def test_mini_fixture_counts_and_discovery():
    doc = compile_dir(MINI)
    counts = document_element_counts(doc)
    assert counts == {"page": 3, "headline": 1, "text": 1, "question": 6, "media": 0}
    assert discover_studies(MINI) == [MINI]
    assert MINI in discover_studies(MINI.parent)


# --- seed ---------------------------------------------------------------------


class FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = json.dumps(self._payload)

    def json(self):
        return self._payload


class FakeClient:
    def __init__(self, response=None, error=None):
        self.response = response
        self.error = error
        self.requests = []

    def put(self, url, json=None, headers=None):
        self.requests.append((url, json, headers))
        if self.error is not None:
            raise self.error
        return self.response


def seed_doc(tmp_path):
    return compile_dir(write_study(tmp_path))


def test_seed_parses_results_and_sends_credentials(tmp_path):
    payload = {
        "data": [
            {"type": "seed-results", "id": "tiny-baseline",
             "attributes": {"action": "created", "new_version": 1}},
            {"type": "seed-results", "id": "tiny-followup",
             "attributes": {"action": "unchanged", "new_version": 1}},
        ]
    }
    client = FakeClient(response=FakeResponse(200, payload))
    results = seed("http://x", "tok", seed_doc(tmp_path), client=client)
    assert results == [
        SeedResult("created", "tiny-baseline", 1),
        SeedResult("unchanged", "tiny-followup", 1),
    ]
    url, body, headers = client.requests[0]
    assert url == "/api/v1/questionnaires"
    assert body["data"]["id"] == "tiny"
    assert headers["Authorization"] == "Bearer tok"
    assert headers["Content-Type"] == "application/vnd.api+json"


def test_seed_maps_auth_conflict_and_network_errors(tmp_path):
    doc = seed_doc(tmp_path)
    with pytest.raises(SeedAuthError):
        seed("http://x", "t", doc, client=FakeClient(response=FakeResponse(403)))
    with pytest.raises(SeedConflictError):
        seed("http://x", "t", doc, client=FakeClient(response=FakeResponse(409)))
    with pytest.raises(SeedNetworkError) as info:
        seed("http://x", "t", doc, client=FakeClient(error=httpx.ConnectError("down")))
    assert "retry" in info.value.findings[0].message
