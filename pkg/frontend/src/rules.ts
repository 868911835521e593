/**
 * Feedback rule language: parser and evaluator.
 *
 * This is a line-for-line port of the server's grammar so that evaluating a
 * rule locally gives the same verdict the server returns inline with a
 * submission. Any drift here is caught by the shared test-vector corpus.
 *
 * Grammar, loosest binding first:
 *   or_expr    := and_expr ("or" and_expr)*
 *   and_expr   := unary ("and" unary)*
 *   unary      := "not" unary | atom
 *   atom       := "answered" "(" ident ")" | "(" or_expr ")" | comparison
 *   comparison := operand op operand          (non-associative)
 *   operand    := INT | ident | "sum" "(" ident ("," ident)* ")"
 *                             | "sum" "(" ident ".." ident ")"
 */

export type CompareOp = '<=' | '<' | '==' | '!=' | '>=' | '>';

export type Operand =
  | { kind: 'int'; value: number }
  | { kind: 'var'; name: string }
  | { kind: 'sum'; variables: string[] };

export type Expression =
  | { kind: 'compare'; op: CompareOp; lhs: Operand; rhs: Operand }
  | { kind: 'answered'; variable: string }
  | { kind: 'not'; item: Expression }
  | { kind: 'and'; items: Expression[] }
  | { kind: 'or'; items: Expression[] };

export type AnswerValue = number | string | boolean | Array<number | string | boolean>;
export type AnswerMap = Record<string, AnswerValue>;

export class RuleSyntaxError extends Error {
  readonly offset: number;

  constructor(message: string, offset: number) {
    super(`${message} (at ${offset})`);
    this.name = 'RuleSyntaxError';
    this.offset = offset;
  }
}

type TokenKind =
  | 'ident' | 'int' | 'dotdot' | 'op' | 'lparen' | 'rparen' | 'comma'
  | 'and' | 'or' | 'not' | 'sum' | 'answered' | 'eof';

interface Token {
  kind: TokenKind;
  text: string;
  offset: number;
}

const TOKEN_RE =
  /(\s+)|([a-z][a-z0-9_]*)|([0-9]+)|(\.\.)|(<=|==|!=|>=|<|>)|(\()|(\))|(,)/y;

const GROUP_KINDS: Array<TokenKind | 'ws'> =
  ['ws', 'ident', 'int', 'dotdot', 'op', 'lparen', 'rparen', 'comma'];

const KEYWORDS = new Set(['and', 'or', 'not', 'sum', 'answered']);

function tokenize(source: string): Token[] {
  const tokens: Token[] = [];
  let pos = 0;
  while (pos < source.length) {
    TOKEN_RE.lastIndex = pos;
    const m = TOKEN_RE.exec(source);
    if (m === null) {
      throw new RuleSyntaxError(`unexpected character ${JSON.stringify(source[pos])}`, pos);
    }
    for (let g = 1; g < m.length; g++) {
      if (m[g] === undefined) continue;
      let kind = GROUP_KINDS[g - 1] as TokenKind | 'ws';
      const text = m[g] as string;
      if (kind !== 'ws') {
        if (kind === 'ident' && KEYWORDS.has(text)) kind = text as TokenKind;
        tokens.push({ kind: kind as TokenKind, text, offset: pos });
      }
      break;
    }
    pos = TOKEN_RE.lastIndex;
  }
  tokens.push({ kind: 'eof', text: '', offset: source.length });
  return tokens;
}

const SPLIT_SUFFIX = /^(.*?)([0-9]+)$/;

class Parser {
  private readonly tokens: Token[];
  private i = 0;

  constructor(tokens: Token[]) {
    this.tokens = tokens;
  }

  private get cur(): Token {
    return this.tokens[this.i] as Token;
  }

  private advance(): Token {
    return this.tokens[this.i++] as Token;
  }

  private expect(kind: TokenKind, what: string): Token {
    if (this.cur.kind !== kind) {
      throw new RuleSyntaxError(`expected ${what}`, this.cur.offset);
    }
    return this.advance();
  }

  parse(): Expression {
    const expr = this.orExpr();
    if (this.cur.kind !== 'eof') {
      throw new RuleSyntaxError(`unexpected ${JSON.stringify(this.cur.text)}`, this.cur.offset);
    }
    return expr;
  }

  private orExpr(): Expression {
    const items = [this.andExpr()];
    while (this.cur.kind === 'or') {
      this.advance();
      items.push(this.andExpr());
    }
    return items.length === 1 ? (items[0] as Expression) : { kind: 'or', items };
  }

  private andExpr(): Expression {
    const items = [this.unary()];
    while (this.cur.kind === 'and') {
      this.advance();
      items.push(this.unary());
    }
    return items.length === 1 ? (items[0] as Expression) : { kind: 'and', items };
  }

  private unary(): Expression {
    if (this.cur.kind === 'not') {
      this.advance();
      return { kind: 'not', item: this.unary() };
    }
    return this.atom();
  }

  private atom(): Expression {
    const tok = this.cur;
    if (tok.kind === 'answered') {
      this.advance();
      this.expect('lparen', "'(' after answered");
      const variable = this.expect('ident', 'variable name').text;
      this.expect('rparen', "')'");
      return { kind: 'answered', variable };
    }
    if (tok.kind === 'lparen') {
      this.advance();
      const inner = this.orExpr();
      this.expect('rparen', "')'");
      return inner;
    }
    return this.comparison();
  }

  private comparison(): Expression {
    const lhs = this.operand();
    if (this.cur.kind !== 'op') {
      throw new RuleSyntaxError('expected comparison operator', this.cur.offset);
    }
    const op = this.advance().text as CompareOp;
    const rhs = this.operand();
    if (this.cur.kind === 'op') {
      // a < b < c has no defined reading
      throw new RuleSyntaxError('comparisons are non-associative', this.cur.offset);
    }
    return { kind: 'compare', op, lhs, rhs };
  }

  private operand(): Operand {
    const tok = this.cur;
    if (tok.kind === 'int') {
      this.advance();
      return { kind: 'int', value: parseInt(tok.text, 10) };
    }
    if (tok.kind === 'ident') {
      this.advance();
      return { kind: 'var', name: tok.text };
    }
    if (tok.kind === 'sum') {
      this.advance();
      this.expect('lparen', "'(' after sum");
      const first = this.expect('ident', 'variable name');
      if (this.cur.kind === 'dotdot') {
        this.advance();
        const last = this.expect('ident', 'variable name');
        this.expect('rparen', "')'");
        return { kind: 'sum', variables: expandRange(first, last) };
      }
      const variables = [first.text];
      while (this.cur.kind === 'comma') {
        this.advance();
        variables.push(this.expect('ident', 'variable name').text);
      }
      this.expect('rparen', "')'");
      return { kind: 'sum', variables };
    }
    throw new RuleSyntaxError('expected integer, variable or sum(...)', tok.offset);
  }
}

function expandRange(first: Token, last: Token): string[] {
  const ma = SPLIT_SUFFIX.exec(first.text);
  const mb = SPLIT_SUFFIX.exec(last.text);
  if (!ma || !mb || ma[1] !== mb[1] || !ma[1]) {
    throw new RuleSyntaxError('range endpoints need a shared prefix and numeric suffixes', last.offset);
  }
  for (const [m, tok] of [[ma, first], [mb, last]] as const) {
    // q01..q03 would expand to q1..q3 and miss the padded names
    const suffix = m[2] as string;
    if (suffix.length > 1 && suffix.startsWith('0')) {
      throw new RuleSyntaxError('range suffixes must not be zero-padded', tok.offset);
    }
  }
  const lo = parseInt(ma[2] as string, 10);
  const hi = parseInt(mb[2] as string, 10);
  if (lo > hi) {
    throw new RuleSyntaxError(`range runs backwards (${lo}..${hi})`, last.offset);
  }
  const out: string[] = [];
  for (let n = lo; n <= hi; n++) out.push(`${ma[1]}${n}`);
  return out;
}

export function parseRule(source: string): Expression {
  return new Parser(tokenize(source)).parse();
}

// --- evaluation ---------------------------------------------------------------

const MISSING = Symbol('missing');

/**
 * Coded answers are numbers; a multi-choice selection arrives as a list of
 * codes and counts as its sum. Anything else (strings included) has no
 * numeric reading and absorbs the containing comparison to false.
 */
function asNumber(value: AnswerValue): number | typeof MISSING {
  if (typeof value === 'boolean') return MISSING;
  if (typeof value === 'number') return value;
  if (Array.isArray(value) && value.length > 0 && value.every((v) => typeof v === 'number')) {
    return (value as number[]).reduce((a, b) => a + b, 0);
  }
  return MISSING;
}

function operandValue(operand: Operand, answers: AnswerMap): number | typeof MISSING {
  if (operand.kind === 'int') return operand.value;
  if (operand.kind === 'var') {
    if (!Object.prototype.hasOwnProperty.call(answers, operand.name)) return MISSING;
    return asNumber(answers[operand.name] as AnswerValue);
  }
  let total = 0;
  for (const name of operand.variables) {
    if (!Object.prototype.hasOwnProperty.call(answers, name)) return MISSING;
    const v = asNumber(answers[name] as AnswerValue);
    if (v === MISSING) return MISSING;
    total += v;
  }
  return total;
}

const CMP: Record<CompareOp, (a: number, b: number) => boolean> = {
  '<': (a, b) => a < b,
  '<=': (a, b) => a <= b,
  '==': (a, b) => a === b,
  '!=': (a, b) => a !== b,
  '>=': (a, b) => a >= b,
  '>': (a, b) => a > b,
};

export function evaluateExpression(expr: Expression, answers: AnswerMap): boolean {
  switch (expr.kind) {
    case 'compare': {
      const lhs = operandValue(expr.lhs, answers);
      const rhs = operandValue(expr.rhs, answers);
      if (lhs === MISSING || rhs === MISSING) return false;
      return CMP[expr.op](lhs, rhs);
    }
    case 'answered':
      return Object.prototype.hasOwnProperty.call(answers, expr.variable);
    case 'not':
      return !evaluateExpression(expr.item, answers);
    case 'and':
      return expr.items.every((e) => evaluateExpression(e, answers));
    case 'or':
      return expr.items.some((e) => evaluateExpression(e, answers));
  }
}

// --- study feedback ------------------------------------------------------------

/** A feedback entry as served with the study resource. */
export interface FeedbackRuleDef {
  key: string;
  rule: string;
  texts: Record<string, string>;
}

export interface FiredFeedback {
  key: string;
  text: string;
}

/**
 * Evaluate a study's rules against an answer map, in rule order, and return
 * the fired entries with their texts in the requested language. Mirrors the
 * evaluation the server stores with the answersheet.
 */
export function evaluateFeedback(
  rules: FeedbackRuleDef[],
  answers: AnswerMap,
  language: string,
): FiredFeedback[] {
  const fired: FiredFeedback[] = [];
  for (const def of rules) {
    if (evaluateExpression(parseRule(def.rule), answers)) {
      const text = def.texts[language];
      if (text === undefined) {
        throw new Error(`feedback ${def.key} has no ${language} text`);
      }
      fired.push({ key: def.key, text });
    }
  }
  return fired;
}
