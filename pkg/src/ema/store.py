"""SQLite persistence for the API service.

One connection, one coarse lock: every write is serialized, reads are
snapshot-consistent because they run under the same lock. That is far below
any real deployment's needs and exactly right for a reference backend — the
ACID properties do the bookkeeping (uniqueness, idempotency) declaratively.

Questionnaire content is stored per (questionnaire_id, version, language)
with a version-insensitive fingerprint per logical questionnaire, which is
what makes reseeding idempotent: same fingerprint, no new version.
"""

from __future__ import annotations

import json
import secrets
import sqlite3
import threading
from typing import Optional

from . import model
from .scheduler import DuplicatePlanError

_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    token TEXT UNIQUE NOT NULL,
    role TEXT NOT NULL,
    created_at TEXT NOT NULL,
    verified INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS studies (
    study_id TEXT PRIMARY KEY,
    meta_json TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS questionnaires (
    questionnaire_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    language TEXT NOT NULL,
    study_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    fingerprint TEXT NOT NULL,
    content_json TEXT NOT NULL,
    PRIMARY KEY (questionnaire_id, version, language)
);
CREATE TABLE IF NOT EXISTS feedback_rules (
    study_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    key TEXT NOT NULL,
    rule TEXT NOT NULL,
    texts_json TEXT NOT NULL,
    PRIMARY KEY (study_id, position)
);
CREATE TABLE IF NOT EXISTS subscriptions (
    user_id TEXT NOT NULL,
    study_id TEXT NOT NULL,
    subscribed_at TEXT NOT NULL,
    PRIMARY KEY (user_id, study_id)
);
CREATE TABLE IF NOT EXISTS plans (
    user_id TEXT NOT NULL,
    study_id TEXT NOT NULL,
    activated_at TEXT NOT NULL,
    schedule_json TEXT NOT NULL,
    fired_json TEXT NOT NULL DEFAULT '[]',
    filled_json TEXT NOT NULL DEFAULT '[]',
    PRIMARY KEY (user_id, study_id)
);
CREATE TABLE IF NOT EXISTS answersheets (
    answersheet_id TEXT PRIMARY KEY,
    client_submission_id TEXT UNIQUE NOT NULL,
    user_id TEXT NOT NULL,
    study_id TEXT NOT NULL,
    questionnaire_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    kind TEXT NOT NULL,
    language TEXT NOT NULL,
    os TEXT NOT NULL DEFAULT '',
    answers_json TEXT NOT NULL,
    sensing_json TEXT,
    location_json TEXT,
    device_json TEXT NOT NULL,
    submitted_at TEXT NOT NULL,
    client_created_at TEXT,
    evaluation_json TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_sheets_user ON answersheets (user_id);
CREATE INDEX IF NOT EXISTS idx_sheets_study ON answersheets (study_id, kind);
CREATE TABLE IF NOT EXISTS user_histories (
    entry_id INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id TEXT NOT NULL,
    action TEXT NOT NULL,
    at TEXT NOT NULL,
    detail TEXT NOT NULL DEFAULT ''
);
"""


class Store:
    """Thread-safe facade over one SQLite database."""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._lock = threading.RLock()
        self._db = sqlite3.connect(path, check_same_thread=False)
        self._db.row_factory = sqlite3.Row
        # (questionnaire_id, version, language) rows never change once
        # written, so parsed content can be shared; callers must not mutate
        self._content_cache: dict = {}
        with self._lock:
            self._db.execute("PRAGMA journal_mode=MEMORY")
            self._db.execute("PRAGMA synchronous=OFF")
            self._db.executescript(_SCHEMA)
            self._db.commit()

    def close(self) -> None:
        with self._lock:
            self._db.commit()
            self._db.close()

    # --- users -----------------------------------------------------------

    def create_user(self, role: str, created_at: str) -> dict:
        user_id = "u-" + secrets.token_hex(8)
        token = secrets.token_urlsafe(24)
        with self._lock:
            self._db.execute(
                "INSERT INTO users (user_id, token, role, created_at, verified) VALUES (?,?,?,?,0)",
                (user_id, token, role, created_at),
            )
            self._db.commit()
        return {"user_id": user_id, "token": token, "role": role,
                "created_at": created_at, "verified": False}

    def ensure_admin(self, token: str, created_at: str) -> str:
        """Idempotently register the operator token from the config file."""
        with self._lock:
            row = self._db.execute("SELECT user_id FROM users WHERE token = ?", (token,)).fetchone()
            if row:
                return row["user_id"]
            user_id = "u-admin"
            self._db.execute(
                "INSERT INTO users (user_id, token, role, created_at, verified) VALUES (?,?,?,?,1)",
                (user_id, token, "admin", created_at),
            )
            self._db.commit()
            return user_id

    def user_by_token(self, token: str) -> Optional[dict]:
        with self._lock:
            row = self._db.execute("SELECT * FROM users WHERE token = ?", (token,)).fetchone()
        return dict(row) if row else None

    def mark_verified(self, user_id: str) -> None:
        with self._lock:
            self._db.execute("UPDATE users SET verified = 1 WHERE user_id = ?", (user_id,))
            self._db.commit()

    def add_history(self, user_id: str, action: str, at: str, detail: str = "") -> None:
        with self._lock:
            self._db.execute(
                "INSERT INTO user_histories (user_id, action, at, detail) VALUES (?,?,?,?)",
                (user_id, action, at, detail),
            )
            self._db.commit()

    def history_counts(self) -> dict:
        with self._lock:
            rows = self._db.execute(
                "SELECT action, COUNT(*) AS n FROM user_histories GROUP BY action"
            ).fetchall()
        return {row["action"]: row["n"] for row in rows}

    # --- content ---------------------------------------------------------

    def seed_document(self, doc: dict) -> list:
        """Store one study document, versioning each questionnaire by content.

        Returns one result dict per logical questionnaire, in document order.
        """
        meta = doc["meta"]
        by_id: dict = {}
        for obj in doc["questionnaires"]:
            by_id.setdefault(obj["questionnaire_id"], []).append(obj)

        results = []
        with self._lock:
            self._db.execute(
                "INSERT INTO studies (study_id, meta_json) VALUES (?, ?) "
                "ON CONFLICT(study_id) DO UPDATE SET meta_json = excluded.meta_json",
                (meta["study_id"], json.dumps(meta, sort_keys=True)),
            )
            for qid, variants in by_id.items():
                fingerprint = model.content_fingerprint(doc, qid)
                row = self._db.execute(
                    "SELECT version, fingerprint FROM questionnaires "
                    "WHERE questionnaire_id = ? ORDER BY version DESC LIMIT 1",
                    (qid,),
                ).fetchone()
                if row and row["fingerprint"] == fingerprint:
                    results.append({"action": "unchanged", "questionnaire_id": qid,
                                    "new_version": row["version"]})
                    continue
                new_version = (row["version"] + 1) if row else 1
                for obj in variants:
                    stored = dict(obj)
                    stored["version"] = new_version
                    self._db.execute(
                        "INSERT INTO questionnaires "
                        "(questionnaire_id, version, language, study_id, kind, fingerprint, content_json) "
                        "VALUES (?,?,?,?,?,?,?)",
                        (qid, new_version, obj["language"], meta["study_id"], obj["kind"],
                         fingerprint, json.dumps(stored, sort_keys=True)),
                    )
                results.append({"action": "created" if not row else "versioned",
                                "questionnaire_id": qid, "new_version": new_version})

            self._db.execute("DELETE FROM feedback_rules WHERE study_id = ?", (meta["study_id"],))
            for position, rule in enumerate(doc.get("feedback", [])):
                self._db.execute(
                    "INSERT INTO feedback_rules (study_id, position, key, rule, texts_json) "
                    "VALUES (?,?,?,?,?)",
                    (meta["study_id"], position, rule["key"], rule["rule"],
                     json.dumps(rule["texts"], sort_keys=True)),
                )
            self._db.commit()
        return results

    def list_studies(self) -> list:
        with self._lock:
            rows = self._db.execute("SELECT meta_json FROM studies ORDER BY study_id").fetchall()
        return [json.loads(row["meta_json"]) for row in rows]

    def get_study(self, study_id: str) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT meta_json FROM studies WHERE study_id = ?", (study_id,)
            ).fetchone()
        return json.loads(row["meta_json"]) if row else None

    def list_questionnaires(self, study_id: str) -> list:
        """Latest version summary per questionnaire of one study."""
        with self._lock:
            rows = self._db.execute(
                "SELECT questionnaire_id, kind, MAX(version) AS latest, "
                "GROUP_CONCAT(DISTINCT language) AS langs "
                "FROM questionnaires WHERE study_id = ? "
                "GROUP BY questionnaire_id ORDER BY kind",
                (study_id,),
            ).fetchall()
        out = []
        for row in rows:
            with self._lock:
                langs = self._db.execute(
                    "SELECT DISTINCT language FROM questionnaires "
                    "WHERE questionnaire_id = ? AND version = ? ORDER BY language",
                    (row["questionnaire_id"], row["latest"]),
                ).fetchall()
            out.append({
                "questionnaire_id": row["questionnaire_id"],
                "kind": row["kind"],
                "version": row["latest"],
                "languages": [l["language"] for l in langs],
            })
        return out

    def get_questionnaire(self, questionnaire_id: str, language: str,
                          version: Optional[int] = None) -> Optional[dict]:
        with self._lock:
            if version is None:
                row = self._db.execute(
                    "SELECT MAX(version) AS v FROM questionnaires WHERE questionnaire_id = ?",
                    (questionnaire_id,),
                ).fetchone()
                if row is None or row["v"] is None:
                    return None
                version = row["v"]
            key = (questionnaire_id, version, language)
            cached = self._content_cache.get(key)
            if cached is not None:
                return cached
            row = self._db.execute(
                "SELECT content_json, study_id FROM questionnaires "
                "WHERE questionnaire_id = ? AND version = ? AND language = ?",
                (questionnaire_id, version, language),
            ).fetchone()
            if row is None:
                return None
            content = json.loads(row["content_json"])
            content["study_id"] = row["study_id"]
            self._content_cache[key] = content
        return content

    def questionnaire_languages(self, questionnaire_id: str,
                                version: Optional[int] = None) -> list:
        with self._lock:
            if version is None:
                row = self._db.execute(
                    "SELECT MAX(version) AS v FROM questionnaires WHERE questionnaire_id = ?",
                    (questionnaire_id,),
                ).fetchone()
                if row is None or row["v"] is None:
                    return []
                version = row["v"]
            rows = self._db.execute(
                "SELECT language FROM questionnaires "
                "WHERE questionnaire_id = ? AND version = ? ORDER BY language",
                (questionnaire_id, version),
            ).fetchall()
        return [r["language"] for r in rows]

    def get_feedback_rules(self, study_id: str) -> list:
        with self._lock:
            rows = self._db.execute(
                "SELECT key, rule, texts_json FROM feedback_rules "
                "WHERE study_id = ? ORDER BY position",
                (study_id,),
            ).fetchall()
        return [{"key": r["key"], "rule": r["rule"], "texts": json.loads(r["texts_json"])}
                for r in rows]

    # --- subscriptions and plans ------------------------------------------

    def subscribe(self, user_id: str, study_id: str, at: str) -> tuple:
        """Insert if absent; returns (row, created)."""
        with self._lock:
            cursor = self._db.execute(
                "INSERT OR IGNORE INTO subscriptions (user_id, study_id, subscribed_at) VALUES (?,?,?)",
                (user_id, study_id, at),
            )
            created = cursor.rowcount == 1
            self._db.commit()
            row = self._db.execute(
                "SELECT * FROM subscriptions WHERE user_id = ? AND study_id = ?",
                (user_id, study_id),
            ).fetchone()
        return dict(row), created

    def get_subscription(self, user_id: str, study_id: str) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM subscriptions WHERE user_id = ? AND study_id = ?",
                (user_id, study_id),
            ).fetchone()
        return dict(row) if row else None

    def subscriptions_of(self, user_id: str) -> list:
        with self._lock:
            rows = self._db.execute(
                "SELECT * FROM subscriptions WHERE user_id = ? ORDER BY study_id", (user_id,)
            ).fetchall()
        return [dict(r) for r in rows]

    def create_plan(self, user_id: str, study_id: str, activated_at: str,
                    schedule_json: str) -> None:
        with self._lock:
            try:
                self._db.execute(
                    "INSERT INTO plans (user_id, study_id, activated_at, schedule_json) "
                    "VALUES (?,?,?,?)",
                    (user_id, study_id, activated_at, schedule_json),
                )
            except sqlite3.IntegrityError:
                raise DuplicatePlanError(f"plan for {user_id}/{study_id} already exists")
            self._db.commit()

    def get_plan(self, user_id: str, study_id: str) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM plans WHERE user_id = ? AND study_id = ?",
                (user_id, study_id),
            ).fetchone()
        return dict(row) if row else None

    def update_plan(self, user_id: str, study_id: str, fired_json: str, filled_json: str) -> None:
        with self._lock:
            self._db.execute(
                "UPDATE plans SET fired_json = ?, filled_json = ? WHERE user_id = ? AND study_id = ?",
                (fired_json, filled_json, user_id, study_id),
            )
            self._db.commit()

    # --- answersheets ------------------------------------------------------

    def insert_answersheet(self, fields: dict) -> tuple:
        """Idempotent on client_submission_id; returns (row, created)."""
        with self._lock:
            existing = self._db.execute(
                "SELECT * FROM answersheets WHERE client_submission_id = ?",
                (fields["client_submission_id"],),
            ).fetchone()
            if existing:
                return dict(existing), False
            answersheet_id = "as-" + secrets.token_hex(8)
            self._db.execute(
                "INSERT INTO answersheets (answersheet_id, client_submission_id, user_id, study_id, "
                "questionnaire_id, version, kind, language, os, answers_json, sensing_json, "
                "location_json, device_json, submitted_at, client_created_at, evaluation_json) "
                "VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (
                    answersheet_id,
                    fields["client_submission_id"],
                    fields["user_id"],
                    fields["study_id"],
                    fields["questionnaire_id"],
                    fields["version"],
                    fields["kind"],
                    fields["language"],
                    fields["os"],
                    fields["answers_json"],
                    fields.get("sensing_json"),
                    fields.get("location_json"),
                    fields["device_json"],
                    fields["submitted_at"],
                    fields.get("client_created_at"),
                    fields["evaluation_json"],
                ),
            )
            self._db.commit()
            row = self._db.execute(
                "SELECT * FROM answersheets WHERE answersheet_id = ?", (answersheet_id,)
            ).fetchone()
        return dict(row), True

    def get_answersheet(self, answersheet_id: str) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM answersheets WHERE answersheet_id = ?", (answersheet_id,)
            ).fetchone()
        return dict(row) if row else None

    def count_answersheets(self) -> int:
        with self._lock:
            return self._db.execute("SELECT COUNT(*) AS n FROM answersheets").fetchone()["n"]

    # --- statistics --------------------------------------------------------

    def stats_snapshot(self) -> dict:
        """Raw aggregates; ratio math happens in the service layer."""
        with self._lock:
            verified = self._db.execute(
                "SELECT COUNT(*) AS n FROM users WHERE verified = 1 AND role = 'participant'"
            ).fetchone()["n"]
            active = self._db.execute(
                "SELECT COUNT(DISTINCT user_id) AS n FROM answersheets"
            ).fetchone()["n"]
            followup_users = self._db.execute(
                "SELECT COUNT(DISTINCT user_id) AS n FROM answersheets WHERE kind = 'followup'"
            ).fetchone()["n"]
            followup_sheets = self._db.execute(
                "SELECT COUNT(*) AS n FROM answersheets WHERE kind = 'followup'"
            ).fetchone()["n"]
            total_sheets = self._db.execute(
                "SELECT COUNT(*) AS n FROM answersheets"
            ).fetchone()["n"]
            os_rows = self._db.execute(
                "SELECT user_id, os FROM answersheets ORDER BY submitted_at, answersheet_id"
            ).fetchall()
            age_rows = self._db.execute(
                "SELECT user_id, answers_json FROM answersheets "
                "WHERE kind = 'baseline' ORDER BY submitted_at, answersheet_id"
            ).fetchall()
            per_study_rows = self._db.execute(
                "SELECT study_id, kind, COUNT(*) AS sheets, COUNT(DISTINCT user_id) AS users "
                "FROM answersheets GROUP BY study_id, kind"
            ).fetchall()
            subs_rows = self._db.execute(
                "SELECT study_id, COUNT(*) AS n FROM subscriptions GROUP BY study_id"
            ).fetchall()

        ages = []
        seen_users = set()
        for row in age_rows:
            if row["user_id"] in seen_users:
                continue
            seen_users.add(row["user_id"])
            answers = json.loads(row["answers_json"])
            value = answers.get("age")
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                ages.append(float(value))

        # a user's platform is whatever device sent their first sheet
        os_counts: dict = {}
        os_seen = set()
        for row in os_rows:
            if row["user_id"] in os_seen:
                continue
            os_seen.add(row["user_id"])
            if row["os"]:
                os_counts[row["os"]] = os_counts.get(row["os"], 0) + 1

        per_study: dict = {}
        for row in per_study_rows:
            entry = per_study.setdefault(
                row["study_id"],
                {"answersheets_total": 0, "active_users": 0,
                 "followup_users": 0, "followup_sheets": 0, "subscriptions": 0},
            )
            entry["answersheets_total"] += row["sheets"]
            if row["kind"] == "followup":
                entry["followup_users"] = row["users"]
                entry["followup_sheets"] = row["sheets"]
        with self._lock:
            active_rows = self._db.execute(
                "SELECT study_id, COUNT(DISTINCT user_id) AS n FROM answersheets GROUP BY study_id"
            ).fetchall()
        for row in active_rows:
            per_study[row["study_id"]]["active_users"] = row["n"]
        for row in subs_rows:
            per_study.setdefault(
                row["study_id"],
                {"answersheets_total": 0, "active_users": 0,
                 "followup_users": 0, "followup_sheets": 0, "subscriptions": 0},
            )["subscriptions"] = row["n"]

        return {
            "verified_users": verified,
            "active_users": active,
            "followup_users": followup_users,
            "followup_sheets": followup_sheets,
            "answersheets_total": total_sheets,
            "os_counts": os_counts,
            "ages": ages,
            "per_study": per_study,
        }
