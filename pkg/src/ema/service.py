"""HTTP API for studies, questionnaires, subscriptions and answersheets.

Every response body is a JSON:API document (application/vnd.api+json):
top level carries either "data" or "errors" (or bare "meta" for health),
resources always carry "type" and "id", and error objects carry status,
code, detail and a source pointer where one applies.

Writes are idempotent where the client may retry: login is unauthenticated
creation, subscribing twice is a no-op, and answersheets dedupe on the
client_submission_id the device generated when the user pressed send.
"""

from __future__ import annotations

import functools
import json
import math
import statistics
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from typing import Callable, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import feedback as fb
from . import model, scheduler
from .sensing import RangeError, coarsen_location
from .store import Store

MEDIA_TYPE = "application/vnd.api+json"

_STATUS_CODES = {
    400: "E_BAD_REQUEST",
    401: "E_AUTH",
    403: "E_FORBIDDEN",
    404: "E_NOT_FOUND",
    405: "E_METHOD",
    409: "E_CONFLICT",
    422: "E_VALIDATION",
}


class ApiError(Exception):
    """One JSON:API error object, raised from anywhere in a handler."""

    def __init__(self, status: int, code: str, detail: str, pointer: Optional[str] = None):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail
        self.pointer = pointer

    def to_object(self) -> dict:
        obj = {"status": str(self.status), "code": self.code, "detail": self.detail}
        if self.pointer is not None:
            obj["source"] = {"pointer": self.pointer}
        return obj


class ValidationErrors(Exception):
    """A batch of per-variable problems for one 422 response."""

    def __init__(self, errors: list):
        super().__init__(f"{len(errors)} validation errors")
        self.errors = errors


def _document(payload: dict, status: int = 200) -> JSONResponse:
    return JSONResponse(payload, status_code=status, media_type=MEDIA_TYPE)


def _error_response(status: int, errors: list) -> JSONResponse:
    return _document({"errors": errors}, status)


# --- clock and parsing helpers ---------------------------------------------

def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def parse_instant(text: str) -> datetime:
    """ISO 8601, naive timestamps are taken as UTC."""
    value = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value


def _schedule_from_meta(schedule: dict) -> model.ScheduleSpec:
    return model.ScheduleSpec(
        interval=timedelta(days=float(schedule["interval_days"])),
        window_start=time.fromisoformat(schedule["window_start"]),
        window_end=time.fromisoformat(schedule["window_end"]),
        max_pending=int(schedule["max_pending"]),
    )


def _plan_from_row(row: dict) -> scheduler.NotificationPlan:
    schedule = _schedule_from_meta(json.loads(row["schedule_json"]))
    return scheduler.NotificationPlan(
        subscription_id=f"{row['user_id']}:{row['study_id']}",
        activated_at=parse_instant(row["activated_at"]),
        schedule=schedule,
        fired=tuple(parse_instant(t) for t in json.loads(row["fired_json"])),
        filled=tuple(parse_instant(t) for t in json.loads(row["filled_json"])),
    )


# --- answer validation -------------------------------------------------------

def _is_empty(value) -> bool:
    return value is None or value == "" or value == []


def _check_code(value, allowed: set) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value in allowed


def validate_answers(content: dict, answers) -> list:
    """Checks one answers object against a questionnaire variant.

    Returns ApiError-shaped dicts; empty list means the sheet is acceptable.
    """
    problems = []

    def bad(variable: str, detail: str):
        problems.append({
            "status": "422", "code": "E_VALIDATION", "detail": detail,
            "source": {"pointer": f"/data/attributes/answers/{variable}"},
        })

    if not isinstance(answers, dict):
        return [{"status": "422", "code": "E_VALIDATION",
                 "detail": "answers must be an object",
                 "source": {"pointer": "/data/attributes/answers"}}]

    questions = {el["variable"]: el for el in content["elements"] if el["type"] == "question"}
    for key in answers:
        if key not in questions:
            bad(key, f"no question with variable '{key}'")

    for variable, element in questions.items():
        value = answers.get(variable)
        if _is_empty(value):
            if not element["optional"]:
                bad(variable, "required question not answered")
            continue
        qtype = element["questiontype"]
        codes = {opt["code"] for opt in element["options"]}
        if qtype == "yesno" and not codes:
            codes = {0, 1}
        if qtype in ("single_choice", "yesno"):
            if not _check_code(value, codes):
                bad(variable, f"answer must be one of {sorted(codes)}")
        elif qtype == "multi_choice":
            if (not isinstance(value, list)
                    or not all(_check_code(v, codes) for v in value)
                    or len(set(value)) != len(value)):
                bad(variable, f"answer must list distinct codes from {sorted(codes)}")
        elif qtype == "slider":
            rng = element.get("slider_range") or {}
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            ok = ok and math.isfinite(value)
            if ok and rng:
                ok = rng["min"] <= value <= rng["max"]
            if not ok:
                bad(variable, "answer must be a number within the slider range")
        elif qtype == "text_input":
            if not isinstance(value, str):
                bad(variable, "answer must be a string")
        elif qtype == "date":
            try:
                date.fromisoformat(value)
            except (TypeError, ValueError):
                bad(variable, "answer must be an ISO date (YYYY-MM-DD)")
    return problems


@functools.lru_cache(maxsize=4096)
def _parsed(rule_text: str):
    return fb.parse_rule(rule_text)


def evaluate_snapshot(rules: list, answers: dict) -> dict:
    """Runs every rule once and freezes fired keys with all their texts.

    The snapshot makes later evaluation reads stable even after a reseed
    changed the rule set.
    """
    fired = []
    for rule in rules:
        if fb.evaluate_expression(_parsed(rule["rule"]), answers) is True:
            fired.append({"key": rule["key"], "texts": dict(rule["texts"])})
    return {"fired": fired}


def _snapshot_to_attributes(snapshot: dict, language: str) -> dict:
    fired = []
    for entry in snapshot["fired"]:
        if language not in entry["texts"]:
            raise ApiError(400, "E_BAD_LANG",
                           f"evaluation has no text in language '{language}'")
        fired.append({"key": entry["key"], "text": entry["texts"][language]})
    return {"language": language, "fired": fired}


# --- summary statistics -----------------------------------------------------

@dataclass
class SummaryStats:
    verified_users: int = 0
    active_users: int = 0
    activation_rate: float = 0.0
    followup_users: int = 0
    followup_rate: float = 0.0
    mean_followups_per_followup_user: float = 0.0
    answersheets_total: int = 0
    os_ratio: float = 0.0
    os_counts: dict = field(default_factory=dict)
    age_mean: float = 0.0
    age_sd: float = 0.0
    per_study: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "verified_users": self.verified_users,
            "active_users": self.active_users,
            "activation_rate": self.activation_rate,
            "followup_users": self.followup_users,
            "followup_rate": self.followup_rate,
            "mean_followups_per_followup_user": self.mean_followups_per_followup_user,
            "answersheets_total": self.answersheets_total,
            "os_ratio": self.os_ratio,
            "os_counts": dict(self.os_counts),
            "age_mean": self.age_mean,
            "age_sd": self.age_sd,
            "per_study": {k: dict(v) for k, v in sorted(self.per_study.items())},
        }


def compute_summary(snapshot: dict) -> SummaryStats:
    """Ratios are kept as exact fractions; rounding is the presenter's job."""
    verified = snapshot["verified_users"]
    active = snapshot["active_users"]
    followup_users = snapshot["followup_users"]
    followup_sheets = snapshot["followup_sheets"]
    ages = snapshot["ages"]
    android = snapshot["os_counts"].get("android", 0)
    ios = snapshot["os_counts"].get("ios", 0)

    per_study = {}
    for study_id, raw in snapshot["per_study"].items():
        f_users = raw["followup_users"]
        per_study[study_id] = {
            "subscriptions": raw["subscriptions"],
            "active_users": raw["active_users"],
            "followup_users": f_users,
            "followup_rate": f_users / raw["active_users"] if raw["active_users"] else 0.0,
            "mean_followups_per_followup_user":
                raw["followup_sheets"] / f_users if f_users else 0.0,
            "answersheets_total": raw["answersheets_total"],
        }

    return SummaryStats(
        verified_users=verified,
        active_users=active,
        activation_rate=active / verified if verified else 0.0,
        followup_users=followup_users,
        followup_rate=followup_users / active if active else 0.0,
        mean_followups_per_followup_user=
            followup_sheets / followup_users if followup_users else 0.0,
        answersheets_total=snapshot["answersheets_total"],
        os_ratio=android / ios if ios else 0.0,
        os_counts=dict(snapshot["os_counts"]),
        age_mean=statistics.fmean(ages) if ages else 0.0,
        age_sd=statistics.stdev(ages) if len(ages) > 1 else 0.0,
        per_study=per_study,
    )


# --- application -------------------------------------------------------------

def create_app(store: Store, clock: Optional[Callable[[], datetime]] = None) -> FastAPI:
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    now = clock or _utc_now

    @app.exception_handler(ApiError)
    async def _on_api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, [exc.to_object()])

    @app.exception_handler(ValidationErrors)
    async def _on_validation(request: Request, exc: ValidationErrors):
        return _error_response(422, exc.errors)

    @app.exception_handler(404)
    async def _on_404(request: Request, exc):
        detail = getattr(exc, "detail", "resource not found")
        return _error_response(404, [{"status": "404", "code": "E_NOT_FOUND", "detail": detail}])

    @app.exception_handler(405)
    async def _on_405(request: Request, exc):
        return _error_response(405, [{"status": "405", "code": "E_METHOD",
                                      "detail": "method not allowed"}])

    @app.exception_handler(Exception)
    async def _on_crash(request: Request, exc: Exception):
        return _error_response(500, [{"status": "500", "code": "E_INTERNAL",
                                      "detail": "internal error"}])

    # --- helpers bound to this app's store ---------------------------------

    def authed(request: Request) -> dict:
        header = request.headers.get("authorization", "")
        if not header.startswith("Bearer "):
            raise ApiError(401, "E_AUTH", "missing bearer token")
        user = store.user_by_token(header[len("Bearer "):].strip())
        if user is None:
            raise ApiError(401, "E_AUTH", "unknown token")
        if not user["verified"]:
            # first authenticated round-trip proves the client kept the token
            store.mark_verified(user["user_id"])
            user["verified"] = True
        return user

    async def body_of(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise ApiError(400, "E_BAD_REQUEST", "request body must be JSON",
                           pointer="/")
        if not isinstance(payload, dict):
            raise ApiError(400, "E_BAD_REQUEST", "request body must be an object",
                           pointer="/")
        return payload

    def data_of(payload: dict, expected_type: str) -> dict:
        data = payload.get("data")
        if not isinstance(data, dict):
            raise ApiError(400, "E_BAD_REQUEST", "missing top-level data object",
                           pointer="/data")
        if data.get("type") != expected_type:
            raise ApiError(400, "E_BAD_REQUEST", f"data.type must be '{expected_type}'",
                           pointer="/data/type")
        attributes = data.get("attributes")
        if not isinstance(attributes, dict):
            raise ApiError(400, "E_BAD_REQUEST", "missing data.attributes",
                           pointer="/data/attributes")
        return data

    def study_or_404(study_id: str) -> dict:
        meta = store.get_study(study_id)
        if meta is None:
            raise ApiError(404, "E_NOT_FOUND", f"no study '{study_id}'")
        return meta

    def followup_id_of(study_id: str) -> Optional[str]:
        for entry in store.list_questionnaires(study_id):
            if entry["kind"] == "followup":
                return entry["questionnaire_id"]
        return None

    def sheet_resource(row: dict) -> dict:
        snapshot = json.loads(row["evaluation_json"])
        evaluation = _snapshot_to_attributes(snapshot, row["language"])
        return {
            "type": "answersheets",
            "id": row["answersheet_id"],
            "attributes": {
                "client_submission_id": row["client_submission_id"],
                "questionnaire_id": row["questionnaire_id"],
                "version": row["version"],
                "language": row["language"],
                "submitted_at": row["submitted_at"],
                "evaluation": evaluation,
            },
        }

    # --- endpoints ----------------------------------------------------------

    @app.get("/healthz")
    async def healthz():
        return _document({"meta": {"status": "ok"}})

    @app.post("/api/v1/users")
    async def login(request: Request):
        at = now().isoformat()
        user = store.create_user("participant", at)
        store.add_history(user["user_id"], "login", at)
        return _document({
            "data": {
                "type": "users",
                "id": user["user_id"],
                "attributes": {"token": user["token"], "created_at": user["created_at"]},
            }
        }, 201)

    @app.get("/api/v1/studies")
    async def list_studies(request: Request):
        authed(request)
        data = []
        for meta in store.list_studies():
            listing = store.list_questionnaires(meta["study_id"])
            data.append({
                "type": "studies",
                "id": meta["study_id"],
                "attributes": {
                    "name": meta["name"],
                    "description": meta.get("description", {}),
                    "languages": meta["languages"],
                    "schedule": meta["schedule"],
                    # clients evaluate feedback locally, so rules ship with the study
                    "feedback": store.get_feedback_rules(meta["study_id"]),
                },
                "relationships": {
                    "questionnaires": {
                        "data": [{"type": "questionnaires", "id": q["questionnaire_id"]}
                                 for q in listing],
                    }
                },
            })
        return _document({"data": data})

    @app.get("/api/v1/studies/{study_id}/questionnaires")
    async def study_questionnaires(study_id: str, request: Request):
        authed(request)
        study_or_404(study_id)
        data = [{
            "type": "questionnaires",
            "id": entry["questionnaire_id"],
            "attributes": {
                "kind": entry["kind"],
                "version": entry["version"],
                "languages": entry["languages"],
            },
        } for entry in store.list_questionnaires(study_id)]
        return _document({"data": data})

    @app.get("/api/v1/questionnaires/{questionnaire_id}")
    async def get_questionnaire(questionnaire_id: str, request: Request):
        authed(request)
        params = request.query_params
        language = params.get("lang")
        if not language:
            raise ApiError(400, "E_BAD_LANG", "lang query parameter is required")
        version: Optional[int] = None
        if params.get("version"):
            try:
                version = int(params["version"])
            except ValueError:
                raise ApiError(400, "E_BAD_REQUEST", "version must be an integer")
        offered = store.questionnaire_languages(questionnaire_id, version)
        if not offered:
            raise ApiError(404, "E_NOT_FOUND",
                           f"no questionnaire '{questionnaire_id}'"
                           + (f" version {version}" if version else ""))
        if language not in offered:
            raise ApiError(400, "E_BAD_LANG",
                           f"language '{language}' not offered, have {offered}")
        content = store.get_questionnaire(questionnaire_id, language, version)
        return _document({
            "data": {
                "type": "questionnaires",
                "id": questionnaire_id,
                "attributes": content,
            }
        })

    @app.post("/api/v1/subscriptions")
    async def subscribe(request: Request):
        user = authed(request)
        payload = await body_of(request)
        data = data_of(payload, "subscriptions")
        study_id = data["attributes"].get("study_id")
        if not isinstance(study_id, str) or not study_id:
            raise ApiError(400, "E_BAD_REQUEST", "study_id is required",
                           pointer="/data/attributes/study_id")
        study_or_404(study_id)
        at = now().isoformat()
        row, created = store.subscribe(user["user_id"], study_id, at)
        if created:
            store.add_history(user["user_id"], "subscribe", at, study_id)
        return _document({
            "data": {
                "type": "subscriptions",
                "id": f"{user['user_id']}:{study_id}",
                "attributes": {
                    "study_id": study_id,
                    "subscribed_at": row["subscribed_at"],
                },
            }
        }, 201 if created else 200)

    @app.post("/api/v1/answersheets")
    async def submit(request: Request):
        user = authed(request)
        payload = await body_of(request)
        data = data_of(payload, "answersheets")
        attrs = data["attributes"]

        def need(name: str):
            value = attrs.get(name)
            if value is None or value == "":
                raise ApiError(400, "E_BAD_REQUEST", f"{name} is required",
                               pointer=f"/data/attributes/{name}")
            return value

        client_submission_id = need("client_submission_id")
        questionnaire_id = need("questionnaire_id")
        language = need("language")
        answers = attrs.get("answers")
        device = attrs.get("device") or {}
        version = attrs.get("version")
        if version is not None and not isinstance(version, int):
            raise ApiError(400, "E_BAD_REQUEST", "version must be an integer",
                           pointer="/data/attributes/version")

        content = None
        offered = store.questionnaire_languages(questionnaire_id, version)
        if offered and language in offered:
            content = store.get_questionnaire(questionnaire_id, language, version)
        if content is None:
            raise ValidationErrors([{
                "status": "422", "code": "E_VALIDATION",
                "detail": f"no questionnaire '{questionnaire_id}' in language "
                          f"'{language}'" + (f" at version {version}" if version else ""),
                "source": {"pointer": "/data/attributes/questionnaire_id"},
            }])
        study_id = content["study_id"]
        if store.get_subscription(user["user_id"], study_id) is None:
            raise ValidationErrors([{
                "status": "422", "code": "E_VALIDATION",
                "detail": f"user is not subscribed to study '{study_id}'",
                "source": {"pointer": "/data/attributes/questionnaire_id"},
            }])

        problems = validate_answers(content, answers)
        if problems:
            raise ValidationErrors(problems)

        location_json = None
        location = attrs.get("location")
        if location is not None:
            try:
                grid = coarsen_location(float(location["lat"]), float(location["lon"]))
            except (RangeError, KeyError, TypeError, ValueError):
                raise ValidationErrors([{
                    "status": "422", "code": "E_VALIDATION",
                    "detail": "location must hold lat in [-90, 90] and lon in [-180, 180]",
                    "source": {"pointer": "/data/attributes/location"},
                }])
            location_json = json.dumps(grid.to_json(), sort_keys=True)

        snapshot = evaluate_snapshot(store.get_feedback_rules(study_id), answers)
        submitted_at = now()
        fields = {
            "client_submission_id": client_submission_id,
            "user_id": user["user_id"],
            "study_id": study_id,
            "questionnaire_id": questionnaire_id,
            "version": content["version"],
            "kind": content["kind"],
            "language": language,
            "os": str(device.get("os", "")).lower(),
            "answers_json": json.dumps(answers, sort_keys=True),
            "sensing_json": json.dumps(attrs["sensing"], sort_keys=True)
                            if attrs.get("sensing") is not None else None,
            "location_json": location_json,
            "device_json": json.dumps(device, sort_keys=True),
            "submitted_at": submitted_at.isoformat(),
            "client_created_at": attrs.get("client_created_at"),
            "evaluation_json": json.dumps(snapshot, sort_keys=True),
        }
        row, created = store.insert_answersheet(fields)
        if created:
            store.add_history(user["user_id"], "submit", fields["submitted_at"],
                              row["answersheet_id"])
            if content["kind"] == "baseline":
                if store.get_plan(user["user_id"], study_id) is None \
                        and followup_id_of(study_id) is not None:
                    meta = store.get_study(study_id)
                    try:
                        store.create_plan(
                            user["user_id"], study_id, fields["submitted_at"],
                            json.dumps(meta["schedule"], sort_keys=True),
                        )
                    except scheduler.DuplicatePlanError:
                        pass  # concurrent baseline won the activation race
            else:
                plan_row = store.get_plan(user["user_id"], study_id)
                if plan_row is not None:
                    plan = _plan_from_row(plan_row)
                    at = max(submitted_at, plan.activated_at)
                    plan = scheduler.record_fillout(plan, at)
                    store.update_plan(
                        user["user_id"], study_id,
                        json.dumps([t.isoformat() for t in plan.fired]),
                        json.dumps([t.isoformat() for t in plan.filled]),
                    )
        return _document({"data": sheet_resource(row)}, 201 if created else 200)

    @app.get("/api/v1/answersheets/{answersheet_id}/evaluation")
    async def get_evaluation(answersheet_id: str, request: Request):
        user = authed(request)
        row = store.get_answersheet(answersheet_id)
        if row is None or (user["role"] == "participant" and row["user_id"] != user["user_id"]):
            raise ApiError(404, "E_NOT_FOUND", f"no answersheet '{answersheet_id}'")
        language = request.query_params.get("lang") or row["language"]
        snapshot = json.loads(row["evaluation_json"])
        return _document({
            "data": {
                "type": "evaluations",
                "id": answersheet_id,
                "attributes": _snapshot_to_attributes(snapshot, language),
            }
        })

    @app.get("/api/v1/users/{user_id}/notifications")
    async def notifications(user_id: str, request: Request):
        user = authed(request)
        if user["user_id"] != user_id and user["role"] == "participant":
            raise ApiError(404, "E_NOT_FOUND", f"no user '{user_id}'")
        at_param = request.query_params.get("now")
        try:
            # undecoded '+' in a query string arrives as a space
            instant = parse_instant(at_param.replace(" ", "+")) if at_param else now()
        except ValueError:
            raise ApiError(400, "E_BAD_REQUEST", "now must be an ISO 8601 timestamp")
        data = []
        for sub in store.subscriptions_of(user_id):
            plan_row = store.get_plan(user_id, sub["study_id"])
            if plan_row is None:
                continue
            plan = _plan_from_row(plan_row)
            due = scheduler.due_notifications(plan, instant)
            if not due:
                continue
            questionnaire_id = followup_id_of(sub["study_id"])
            for tick in due:
                data.append({
                    "type": "notifications",
                    "id": f"{sub['study_id']}:{tick.isoformat()}",
                    "attributes": {
                        "study_id": sub["study_id"],
                        "questionnaire_id": questionnaire_id,
                        "due_at": tick.isoformat(),
                    },
                })
            plan = scheduler.mark_fired(plan, due)
            store.update_plan(
                user_id, sub["study_id"],
                json.dumps([t.isoformat() for t in plan.fired]),
                json.dumps([t.isoformat() for t in plan.filled]),
            )
        return _document({"data": data})

    @app.put("/api/v1/questionnaires")
    async def seed(request: Request):
        user = authed(request)
        if user["role"] not in ("admin", "collaborator"):
            raise ApiError(403, "E_FORBIDDEN", "content changes need an operator token")
        payload = await body_of(request)
        data = data_of(payload, "questionnaire-documents")
        doc = data["attributes"]
        meta = doc.get("meta")
        questionnaires = doc.get("questionnaires")
        if not isinstance(meta, dict) or not meta.get("study_id") \
                or not isinstance(questionnaires, list) or not questionnaires:
            raise ApiError(400, "E_BAD_REQUEST",
                           "document needs meta.study_id and a questionnaires list",
                           pointer="/data/attributes")

        known = set()
        for obj in questionnaires:
            for element in obj.get("elements", []):
                if element.get("type") == "question":
                    known.add(element["variable"])
        for index, rule in enumerate(doc.get("feedback", [])):
            try:
                fb.bind_rule(fb.parse_rule(rule["rule"]), known)
            except (fb.RuleSyntaxError, fb.UnknownVariableError, KeyError) as exc:
                raise ValidationErrors([{
                    "status": "422", "code": "E_VALIDATION",
                    "detail": f"feedback rule rejected: {exc}",
                    "source": {"pointer": f"/data/attributes/feedback/{index}/rule"},
                }])

        results = store.seed_document(doc)
        if any(r["action"] != "unchanged" for r in results):
            store.add_history(user["user_id"], "seed", now().isoformat(), meta["study_id"])
        return _document({
            "data": [{
                "type": "seed-results",
                "id": r["questionnaire_id"],
                "attributes": {"action": r["action"], "new_version": r["new_version"]},
            } for r in results]
        })

    @app.get("/api/v1/stats")
    async def stats(request: Request):
        user = authed(request)
        if user["role"] != "admin":
            raise ApiError(403, "E_FORBIDDEN", "stats need the admin token")
        summary = compute_summary(store.stats_snapshot())
        return _document({
            "data": {
                "type": "summary-stats",
                "id": "current",
                "attributes": summary.to_json(),
            }
        })

    return app
