"""Deterministic demo corpora.

Two generators live here. `write_demo_corpus` lays down a five-study CSV
workbook set whose element totals match the production content volume the
platform is sized for (117 pages, 159 text blocks, 976 questions, 24
headlines across baseline and follow-up, in two languages, plus 54 feedback
rules). `cohort_scenario` yields a replayable request plan whose aggregate
figures land on the published cohort numbers: 7,290 verified users, 38.4%
activation, 52.7% follow-up rate, a mean of 8.6 follow-ups per follow-up
user and 17,241 answersheets overall.

Everything is seeded; running a generator twice gives identical bytes.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

STUDY_IDS = ("daily-mind", "sleep-watch", "stress-pulse", "mood-journal", "habit-track")

_STUDY_NAMES = {
    "daily-mind": ("Daily Mind", "Täglicher Kopf"),
    "sleep-watch": ("Sleep Watch", "Schlafwache"),
    "stress-pulse": ("Stress Pulse", "Stresspuls"),
    "mood-journal": ("Mood Journal", "Stimmungstagebuch"),
    "habit-track": ("Habit Track", "Gewohnheitsspur"),
}

_INTERVALS = (7, 7, 3, 7, 14)
_MAX_PENDING = (1, 1, 2, 1, 1)

# element counts per study: (pages, headlines, texts, questions)
_BASELINE_PLAN = ((16, 3, 21, 130), (15, 3, 21, 130), (15, 3, 21, 130),
                  (15, 3, 21, 130), (15, 3, 21, 130))
_FOLLOWUP_PLAN = ((9, 2, 11, 66), (8, 2, 11, 65), (8, 2, 11, 65),
                  (8, 2, 11, 65), (8, 1, 10, 65))
_RULE_PLAN = (11, 11, 11, 11, 10)
_REF_COUNT = 3  # follow-up questions repeated verbatim from the baseline

ELEMENT_HEADER = ("elem_type", "question_type", "optional", "variable", "ref",
                  "codes", "label_en", "options_en", "label_de", "options_de")
FEEDBACK_HEADER = ("key", "rule", "text_en", "text_de")

_CHOICE4 = ("0;1;2;3",
            "Not at all;Several days;More than half, the days;Nearly every day",
            "Überhaupt nicht;An einzelnen Tagen;An mehr als der Hälfte;Beinahe jeden Tag")
_CHOICE3 = ("1;2;3", "Low;Medium;High", "Niedrig;Mittel;Hoch")
_MULTI = ("1;2;4;8", "Family;Work;Health;Money", "Familie;Arbeit;Gesundheit;Geld")
_YESNO = ("0;1", "No;Yes", "Nein;Ja")


def _question_row(prefix: str, n: int) -> list:
    """One deterministic question row; types cycle so every kind shows up."""
    var = f"{prefix}{n:03d}"
    slot = (n - 1) % 10
    if slot in (0, 1, 2):
        codes, opt_en, opt_de = _CHOICE4
        return ["question", "single_choice", "", var, "", codes,
                f"Statement {n}, please rate", opt_en,
                f"Aussage {n}, bitte bewerten", opt_de]
    if slot in (3, 4):
        return ["question", "slider", "", var, "", "0;10;1",
                f"Scale {n} from calm to tense", "",
                f"Skala {n} von ruhig bis angespannt", ""]
    if slot == 5:
        codes, opt_en, opt_de = _YESNO
        return ["question", "yesno", "", var, "", codes,
                f"Did item {n} apply today?", opt_en,
                f"Traf Punkt {n} heute zu?", opt_de]
    if slot == 6:
        codes, opt_en, opt_de = _MULTI
        return ["question", "multi_choice", "", var, "", codes,
                f"Which areas does {n} touch?", opt_en,
                f"Welche Bereiche betrifft {n}?", opt_de]
    if slot == 7:
        return ["question", "text_input", "true", var, "", "",
                f"Anything to add on {n}?", "",
                f"Noch etwas zu {n}?", ""]
    if slot == 8:
        return ["question", "date", "", var, "", "",
                f"When did {n} last happen?", "",
                f"Wann geschah {n} zuletzt?", ""]
    codes, opt_en, opt_de = _CHOICE3
    return ["question", "single_choice", "", var, "", codes,
            f"Level of {n} right now", opt_en,
            f"Niveau von {n} gerade", opt_de]


def _age_row() -> list:
    return ["question", "slider", "", "age", "", "18;99;1",
            "How old are you?", "", "Wie alt sind Sie?", ""]


def _numeric_vars(prefix: str, count: int, skip_first: bool) -> list:
    """Variables whose answers feed rule arithmetic (choice, slider, yesno)."""
    out = []
    for n in range(1, count + 1):
        if skip_first and n == 1:
            continue
        if (n - 1) % 10 in (0, 1, 2, 3, 4, 5, 9):
            out.append(f"{prefix}{n:03d}")
    return out


def _sheet_rows(prefix: str, plan: tuple, lead_rows: list) -> list:
    """Lays questions, headlines and texts onto pages, page by page."""
    pages, headlines, texts, questions = plan
    if prefix == "b":
        question_rows = [_age_row()] + [_question_row("b", n)
                                        for n in range(2, questions + 1)]
    else:
        own = questions - len(lead_rows)
        question_rows = lead_rows + [_question_row(prefix, n)
                                     for n in range(1, own + 1)]
    buckets: list = [[] for _ in range(pages)]
    for i in range(headlines):
        buckets[i % pages].append(["headline", "", "", "", "", "",
                                   f"Part {i + 1}", "", f"Teil {i + 1}", ""])
    for i in range(texts):
        buckets[i % pages].append(["text", "", "", "", "", "",
                                   f"Some guidance, number {i + 1}.", "",
                                   f"Ein Hinweis, Nummer {i + 1}.", ""])
    for i, row in enumerate(question_rows):
        buckets[i % pages].append(row)
    rows = []
    for bucket in buckets:
        rows.append(["page", "", "", "", "", "", "", "", "", ""])
        rows.extend(bucket)
    return rows


def _rules(index: int, base_vars: list, follow_vars: list) -> list:
    count = _RULE_PLAN[index]
    rows = []
    for k in range(count):
        v = lambda i: base_vars[(k * 3 + i) % len(base_vars)]
        fv = follow_vars[k % len(follow_vars)]
        template = k % 5
        if template == 0:
            rule = f"{v(0)} >= 2"
        elif template == 1:
            rule = f"sum({v(0)},{v(1)},{v(2)}) > 5"
        elif template == 2:
            rule = f"{v(0)} > 1 and answered({v(1)})"
        elif template == 3:
            rule = f"not {v(0)} == 0 or {fv} < 2"
        else:
            rule = f"sum({follow_vars[0]},{follow_vars[1]}) >= 3 and {v(2)} != 0"
        key = f"r{k + 1:02d}"
        rows.append([key, rule,
                     f"Advice {key}: a short walk can help.",
                     f"Hinweis {key}: Ein kurzer Spaziergang kann helfen."])
    return rows


def study_workbook(index: int) -> dict:
    """All four CSV sheets for one study, as rows ready for csv.writer."""
    study_id = STUDY_IDS[index]
    name_en, name_de = _STUDY_NAMES[study_id]
    study_rows = [
        ["key", "value"],
        ["study_id", study_id],
        ["name_en", name_en],
        ["name_de", name_de],
        ["description_en", f"{name_en} asks about everyday wellbeing."],
        ["description_de", f"{name_de} fragt nach dem Alltagsbefinden."],
        ["languages", "en,de"],
        ["interval_days", str(_INTERVALS[index])],
        ["window_start", "09:00"],
        ["window_end", "20:00"],
        ["max_pending", str(_MAX_PENDING[index])],
    ]

    baseline = [list(ELEMENT_HEADER)]
    baseline.extend(_sheet_rows("b", _BASELINE_PLAN[index], []))

    refs = [["question", "", "", "", f"b{n:03d}", "", "", "", "", ""]
            for n in range(2, 2 + _REF_COUNT)]
    followup = [list(ELEMENT_HEADER)]
    followup.extend(_sheet_rows("f", _FOLLOWUP_PLAN[index], refs))

    base_vars = ["age"] + _numeric_vars("b", _BASELINE_PLAN[index][3], skip_first=True)
    follow_vars = _numeric_vars("f", _FOLLOWUP_PLAN[index][3] - _REF_COUNT, skip_first=False)
    feedback = [list(FEEDBACK_HEADER)]
    feedback.extend(_rules(index, base_vars, follow_vars))

    return {"study_id": study_id, "study": study_rows, "baseline": baseline,
            "followup": followup, "feedback": feedback}


def write_demo_corpus(root) -> list:
    """Writes one directory per study under root; returns the paths."""
    root = Path(root)
    written = []
    for index in range(len(STUDY_IDS)):
        workbook = study_workbook(index)
        directory = root / workbook["study_id"]
        directory.mkdir(parents=True, exist_ok=True)
        for sheet in ("study", "baseline", "followup", "feedback"):
            with open(directory / f"{sheet}.csv", "w", encoding="utf-8", newline="") as fh:
                csv.writer(fh).writerows(workbook[sheet])
        written.append(directory)
    return written


# --- cohort replay -----------------------------------------------------------

COHORT = {
    "users": 7290,
    "active": 2802,
    "subscriptions": 4495,
    "repeat_baselines": 52,
    "followup_users": 1476,
    "followup_sheets": 12694,
}


def make_answers(elements: list, rng: random.Random) -> dict:
    """A valid answer set for one questionnaire variant.

    Required questions are always answered, optional ones usually skipped;
    the age slider gets a bell-shaped draw so cohort age stats look real.
    """
    answers = {}
    for element in elements:
        if element["type"] != "question":
            continue
        if element["optional"] and rng.random() < 0.7:
            continue
        qtype = element["questiontype"]
        codes = [opt["code"] for opt in element["options"]]
        if element["variable"] == "age":
            answers["age"] = max(18, min(99, round(rng.gauss(40.34, 14.75))))
        elif qtype in ("single_choice", "yesno"):
            answers[element["variable"]] = rng.choice(codes or [0, 1])
        elif qtype == "multi_choice":
            answers[element["variable"]] = sorted(
                rng.sample(codes, rng.randint(1, len(codes))))
        elif qtype == "slider":
            rng_def = element.get("slider_range") or {"min": 0, "max": 10}
            answers[element["variable"]] = rng.randint(
                int(rng_def["min"]), int(rng_def["max"]))
        elif qtype == "text_input":
            answers[element["variable"]] = "nothing to add"
        elif qtype == "date":
            answers[element["variable"]] = f"202{rng.randint(0, 5)}-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}"
    return answers


def replay_cohort(client, ops=None, seed: int = 20260102) -> dict:
    """Drives a seeded API through the cohort scenario.

    `client` needs requests-style .get/.post returning responses with
    .status_code and .json(); both the in-process test client and a real
    HTTP client qualify. Content must already be seeded. Returns counters.
    """
    ops = ops if ops is not None else cohort_scenario(seed)
    rng = random.Random(seed + 1)
    tokens: dict = {}
    content: dict = {}
    questionnaire_ids: dict = {}
    counts = {"requests": 0, "submitted": 0}

    def check(response, *expected):
        counts["requests"] += 1
        if response.status_code not in expected:
            raise AssertionError(
                f"unexpected {response.status_code}: {response.json()}")
        return response

    def headers(uid):
        return {"Authorization": f"Bearer {tokens[uid]}",
                "Content-Type": "application/vnd.api+json"}

    def elements_of(study_id, kind, language, uid):
        key = (study_id, kind, language)
        if key not in content:
            if (study_id, kind) not in questionnaire_ids:
                listing = check(client.get(
                    f"/api/v1/studies/{study_id}/questionnaires",
                    headers=headers(uid)), 200).json()["data"]
                for entry in listing:
                    questionnaire_ids[(study_id, entry["attributes"]["kind"])] = entry["id"]
            qid = questionnaire_ids[(study_id, kind)]
            body = check(client.get(
                f"/api/v1/questionnaires/{qid}?lang={language}",
                headers=headers(uid)), 200).json()
            content[key] = (qid, body["data"]["attributes"]["elements"])
        return content[key]

    for op in ops:
        kind = op[0]
        if kind == "login":
            response = check(client.post("/api/v1/users"), 201)
            tokens[op[1]] = response.json()["data"]["attributes"]["token"]
        elif kind == "browse":
            check(client.get("/api/v1/studies", headers=headers(op[1])), 200)
        elif kind == "subscribe":
            check(client.post(
                "/api/v1/subscriptions",
                json={"data": {"type": "subscriptions",
                               "attributes": {"study_id": op[2]}}},
                headers=headers(op[1])), 200, 201)
        else:
            _, uid, study_id, sheet_kind, submission_id, os_name = op
            language = "de" if rng.random() < 0.2 else "en"
            qid, elements = elements_of(study_id, sheet_kind, language, uid)
            answers = make_answers(elements, rng)
            check(client.post(
                "/api/v1/answersheets",
                json={"data": {"type": "answersheets", "attributes": {
                    "client_submission_id": submission_id,
                    "questionnaire_id": qid,
                    "language": language,
                    "answers": answers,
                    "device": {"os": os_name, "os_version": "14", "model": "sim"},
                }}},
                headers=headers(uid)), 201)
            counts["submitted"] += 1
    return counts


def cohort_scenario(seed: int = 20260102) -> list:
    """The request plan behind the published cohort figures.

    Yields ops in per-user dependency order:
      ("login", uid)
      ("browse", uid)                      one authenticated read, no writes
      ("subscribe", uid, study_id)
      ("submit", uid, study_id, kind, submission_id, os)
    """
    rng = random.Random(seed)
    n = COHORT["users"]
    actives = sorted(rng.sample(range(n), COHORT["active"]))
    active_set = set(actives)
    primary = {uid: rng.randrange(len(STUDY_IDS)) for uid in actives}

    extra_count = COHORT["subscriptions"] - COHORT["active"]
    shuffled = list(actives)
    rng.shuffle(shuffled)
    extra = {uid: (primary[uid] + 1 + rng.randrange(len(STUDY_IDS) - 1)) % len(STUDY_IDS)
             for uid in shuffled[:extra_count]}

    repeaters = set(shuffled[:COHORT["repeat_baselines"]])

    followers = sorted(rng.sample(actives, COHORT["followup_users"]))
    base = COHORT["followup_sheets"] // COHORT["followup_users"]
    remainder = COHORT["followup_sheets"] - base * COHORT["followup_users"]
    followup_counts = {uid: base + (1 if i < remainder else 0)
                       for i, uid in enumerate(followers)}

    ops = []
    serial = 0
    for uid in range(n):
        ops.append(("login", uid))
        if uid not in active_set:
            ops.append(("browse", uid))
            continue
        os_name = "android" if rng.random() < 0.8 else "ios"
        studies = [STUDY_IDS[primary[uid]]]
        if uid in extra:
            studies.append(STUDY_IDS[extra[uid]])
        for study_id in studies:
            ops.append(("subscribe", uid, study_id))
            serial += 1
            ops.append(("submit", uid, study_id, "baseline", f"s{serial:06d}", os_name))
        if uid in repeaters:
            serial += 1
            ops.append(("submit", uid, studies[0], "baseline", f"s{serial:06d}", os_name))
        for _ in range(followup_counts.get(uid, 0)):
            serial += 1
            ops.append(("submit", uid, studies[0], "followup", f"s{serial:06d}", os_name))
    return ops
