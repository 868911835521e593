"""Feedback rule language: parse key-rule pairs, bind them to questionnaire
variables, and evaluate them against coded answers.

Grammar (infix, lowercase keywords)::

    rule       := or_expr
    or_expr    := and_expr ("or" and_expr)*
    and_expr   := unary ("and" unary)*
    unary      := "not" unary | atom
    atom       := comparison | "answered" "(" var ")" | "(" or_expr ")"
    comparison := operand op operand          op in < <= == != >= >
    operand    := integer | var | "sum" "(" var ("," var)* ")"
                | "sum" "(" var ".." var ")"

Comparisons are non-associative; `not` binds tighter than `and`, which binds
tighter than `or`. A comparison involving any unanswered variable is false
(missing values absorb), so partial answersheets never fire threshold rules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class RuleSyntaxError(ValueError):
    """Raised when rule source text does not match the grammar."""

    code = "E_SYNTAX"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset
        self.reason = message


class UnknownVariableError(ValueError):
    """Raised at bind time when a rule references a variable the study lacks."""

    code = "E_UNKNOWN_VAR"

    def __init__(self, variables):
        super().__init__(f"unknown variables: {', '.join(variables)}")
        self.variables = tuple(variables)


class MissingLanguageError(ValueError):
    """Raised when a fired rule has no text in the requested language."""

    code = "E_LANG_MISSING"

    def __init__(self, key: str, lang: str):
        super().__init__(f"rule {key!r} has no text for language {lang!r}")
        self.key = key
        self.lang = lang


# --- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class SumVars:
    variables: tuple[str, ...]


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: "IntLit | VarRef | SumVars"
    rhs: "IntLit | VarRef | SumVars"


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class Answered:
    variable: str


Expression = Compare | And | Or | Not | Answered

COMPARE_OPS = ("<=", "<", "==", "!=", ">=", ">")

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<ident>[a-z][a-z0-9_]*)"
    r"|(?P<int>[0-9]+)"
    r"|(?P<dotdot>\.\.)"
    r"|(?P<op><=|==|!=|>=|<|>)"
    r"|(?P<lparen>\()"
    r"|(?P<rparen>\))"
    r"|(?P<comma>,)"
)

_KEYWORDS = {"and", "or", "not", "sum", "answered"}

_SPLIT_SUFFIX = re.compile(r"^(.*?)([0-9]+)$")


@dataclass
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if kind == "ident" and text in _KEYWORDS:
                kind = text
            tokens.append(_Token(kind, text, pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        if self.cur.kind != kind:
            raise RuleSyntaxError(f"expected {what}", self.cur.offset)
        return self.advance()

    def parse(self) -> Expression:
        expr = self.or_expr()
        if self.cur.kind != "eof":
            raise RuleSyntaxError(f"unexpected {self.cur.text!r}", self.cur.offset)
        return expr

    def or_expr(self) -> Expression:
        items = [self.and_expr()]
        while self.cur.kind == "or":
            self.advance()
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def and_expr(self) -> Expression:
        items = [self.unary()]
        while self.cur.kind == "and":
            self.advance()
            items.append(self.unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def unary(self) -> Expression:
        if self.cur.kind == "not":
            self.advance()
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Expression:
        tok = self.cur
        if tok.kind == "answered":
            self.advance()
            self.expect("lparen", "'(' after answered")
            var = self.expect("ident", "variable name").text
            self.expect("rparen", "')'")
            return Answered(var)
        if tok.kind == "lparen":
            self.advance()
            inner = self.or_expr()
            self.expect("rparen", "')'")
            return inner
        return self.comparison()

    def comparison(self) -> Compare:
        lhs = self.operand()
        if self.cur.kind != "op":
            raise RuleSyntaxError("expected comparison operator", self.cur.offset)
        op = self.advance().text
        rhs = self.operand()
        if self.cur.kind == "op":
            # a < b < c has no defined reading
            raise RuleSyntaxError("comparisons are non-associative", self.cur.offset)
        return Compare(op, lhs, rhs)

    def operand(self):
        tok = self.cur
        if tok.kind == "int":
            self.advance()
            return IntLit(int(tok.text))
        if tok.kind == "ident":
            self.advance()
            return VarRef(tok.text)
        if tok.kind == "sum":
            self.advance()
            self.expect("lparen", "'(' after sum")
            first = self.expect("ident", "variable name")
            if self.cur.kind == "dotdot":
                self.advance()
                last = self.expect("ident", "variable name")
                self.expect("rparen", "')'")
                return SumVars(self._expand_range(first, last))
            variables = [first.text]
            while self.cur.kind == "comma":
                self.advance()
                variables.append(self.expect("ident", "variable name").text)
            self.expect("rparen", "')'")
            return SumVars(tuple(variables))
        raise RuleSyntaxError("expected integer, variable or sum(...)", tok.offset)

    @staticmethod
    def _expand_range(first: _Token, last: _Token) -> tuple[str, ...]:
        ma, mb = _SPLIT_SUFFIX.match(first.text), _SPLIT_SUFFIX.match(last.text)
        if not ma or not mb or ma.group(1) != mb.group(1) or not ma.group(1):
            raise RuleSyntaxError("range endpoints need a shared prefix and numeric suffixes", last.offset)
        for match, tok in ((ma, first), (mb, last)):
            # q01..q03 would expand to q1..q3 and miss the padded names
            if len(match.group(2)) > 1 and match.group(2).startswith("0"):
                raise RuleSyntaxError("range suffixes must not be zero-padded", tok.offset)
        lo, hi = int(ma.group(2)), int(mb.group(2))
        if lo > hi:
            raise RuleSyntaxError(f"range runs backwards ({lo}..{hi})", last.offset)
        prefix = ma.group(1)
        return tuple(f"{prefix}{n}" for n in range(lo, hi + 1))


def parse_rule(source: str) -> Expression:
    """Parse rule source into an AST; raises RuleSyntaxError with the offset
    of the first offending character."""
    return _Parser(_tokenize(source)).parse()


def to_source(expr) -> str:
    """Render an AST back to rule source (inverse of parse_rule)."""
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, SumVars):
        return f"sum({','.join(expr.variables)})"
    if isinstance(expr, Compare):
        return f"{to_source(expr.lhs)} {expr.op} {to_source(expr.rhs)}"
    if isinstance(expr, Answered):
        return f"answered({expr.variable})"
    if isinstance(expr, Not):
        inner = to_source(expr.item)
        if isinstance(expr.item, (And, Or)):
            inner = f"({inner})"
        return f"not {inner}"
    if isinstance(expr, And):
        parts = [f"({to_source(e)})" if isinstance(e, (And, Or)) else to_source(e) for e in expr.items]
        return " and ".join(parts)
    if isinstance(expr, Or):
        parts = [f"({to_source(e)})" if isinstance(e, Or) else to_source(e) for e in expr.items]
        return " or ".join(parts)
    raise TypeError(f"not a rule expression: {expr!r}")


def collect_variables(expr) -> tuple[str, ...]:
    """All variables an expression references, in first-appearance order."""
    out: list[str] = []

    def walk(e):
        if isinstance(e, VarRef):
            if e.name not in out:
                out.append(e.name)
        elif isinstance(e, SumVars):
            for v in e.variables:
                if v not in out:
                    out.append(v)
        elif isinstance(e, Answered):
            if e.variable not in out:
                out.append(e.variable)
        elif isinstance(e, Compare):
            walk(e.lhs)
            walk(e.rhs)
        elif isinstance(e, Not):
            walk(e.item)
        elif isinstance(e, (And, Or)):
            for item in e.items:
                walk(item)

    walk(expr)
    return tuple(out)


def bind_rule(expr, known_variables) -> None:
    """Bind-time check that every referenced variable exists; raises
    UnknownVariableError listing the strays."""
    unknown = [v for v in collect_variables(expr) if v not in known_variables]
    if unknown:
        raise UnknownVariableError(unknown)


# --- evaluation ---------------------------------------------------------------


_MISSING = object()


def _as_number(value):
    # Coded answers are ints (floats for sliders); a multi-choice selection
    # arrives as a list of codes and counts as its sum. Anything else has no
    # numeric reading and absorbs the containing comparison to false.
    if isinstance(value, bool):
        return _MISSING
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, list) and value and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return sum(value)
    return _MISSING


def _operand_value(operand, answers):
    if isinstance(operand, IntLit):
        return operand.value
    if isinstance(operand, VarRef):
        if operand.name not in answers:
            return _MISSING
        return _as_number(answers[operand.name])
    if isinstance(operand, SumVars):
        total = 0
        for var in operand.variables:
            if var not in answers:
                return _MISSING
            v = _as_number(answers[var])
            if v is _MISSING:
                return _MISSING
            total += v
        return total
    raise TypeError(f"not a numeric operand: {operand!r}")


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def evaluate_expression(expr, answers: dict) -> bool:
    if isinstance(expr, Compare):
        lhs = _operand_value(expr.lhs, answers)
        rhs = _operand_value(expr.rhs, answers)
        if lhs is _MISSING or rhs is _MISSING:
            return False
        return _CMP[expr.op](lhs, rhs)
    if isinstance(expr, Answered):
        return expr.variable in answers
    if isinstance(expr, Not):
        return not evaluate_expression(expr.item, answers)
    if isinstance(expr, And):
        return all(evaluate_expression(e, answers) for e in expr.items)
    if isinstance(expr, Or):
        return any(evaluate_expression(e, answers) for e in expr.items)
    raise TypeError(f"not a boolean expression: {expr!r}")


@dataclass(frozen=True)
class FeedbackRule:
    key: str
    condition: Expression
    texts: dict[str, str]
    source: str = ""

    @classmethod
    def from_exchange(cls, obj: dict) -> "FeedbackRule":
        """Build from the exchange format {"key", "rule", "texts"}."""
        return cls(key=obj["key"], condition=parse_rule(obj["rule"]), texts=dict(obj["texts"]),
                   source=obj["rule"])

    def to_exchange(self) -> dict:
        return {"key": self.key, "rule": self.source or to_source(self.condition), "texts": dict(self.texts)}


@dataclass(frozen=True)
class Evaluation:
    answersheet_id: str
    fired: tuple[tuple[str, str], ...]  # (key, text in requested language)

    def to_json(self) -> dict:
        return {
            "answersheet_id": self.answersheet_id,
            "fired": [{"key": k, "text": t} for k, t in self.fired],
        }


def evaluate(rules: list[FeedbackRule], answers: dict, lang: str, answersheet_id: str = "") -> Evaluation:
    """Run every rule against the coded answers; a rule fires iff its condition
    is true. Fired entries keep rule declaration order."""
    fired = []
    for rule in rules:
        if evaluate_expression(rule.condition, answers):
            if lang not in rule.texts:
                raise MissingLanguageError(rule.key, lang)
            fired.append((rule.key, rule.texts[lang]))
    return Evaluation(answersheet_id=answersheet_id, fired=tuple(fired))
