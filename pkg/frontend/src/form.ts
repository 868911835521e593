/**
 * Paged questionnaire form: a state machine over the canonical element list.
 *
 * Every "page" element opens a new page; headlines, texts, media and
 * questions attach to the page opened last. Required questions on the
 * current page block advancing. Answers accumulate as the exact coded map
 * the server accepts.
 */

import { AnswerMap, AnswerValue } from './rules';

export interface ChoiceOption {
  code: number;
  text: string;
}

export interface SliderRange {
  min: number;
  max: number;
  step: number;
}

export type QuestionType =
  | 'single_choice' | 'multi_choice' | 'yesno' | 'slider' | 'text_input' | 'date';

export type FormElement =
  | { type: 'page' }
  | { type: 'headline'; text: string }
  | { type: 'text'; text: string }
  | { type: 'media'; uri: string }
  | QuestionElement;

export interface QuestionElement {
  type: 'question';
  variable: string;
  label: string;
  optional: boolean;
  questiontype: QuestionType;
  options: ChoiceOption[];
  slider_range?: SliderRange;
}

/** Raised when a document cannot be rendered; the UI shows an error panel. */
export class RenderError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'RenderError';
  }
}

/** Raised when a UI widget hands over a value the question cannot accept. */
export class AnswerError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'AnswerError';
  }
}

export interface PageView {
  index: number;
  count: number;
  elements: FormElement[];
}

const QUESTION_TYPES: QuestionType[] =
  ['single_choice', 'multi_choice', 'yesno', 'slider', 'text_input', 'date'];

function checkQuestion(el: Record<string, unknown>, at: number): QuestionElement {
  if (typeof el['variable'] !== 'string' || !el['variable']) {
    throw new RenderError(`question at element ${at} has no variable`);
  }
  if (!QUESTION_TYPES.includes(el['questiontype'] as QuestionType)) {
    throw new RenderError(`question ${el['variable']} has unknown type ${String(el['questiontype'])}`);
  }
  if (!Array.isArray(el['options'])) {
    throw new RenderError(`question ${el['variable']} has no options list`);
  }
  const questiontype = el['questiontype'] as QuestionType;
  if (questiontype === 'slider') {
    const range = el['slider_range'] as SliderRange | undefined;
    if (!range || typeof range.min !== 'number' || typeof range.max !== 'number') {
      throw new RenderError(`slider ${el['variable']} has no range`);
    }
  }
  return el as unknown as QuestionElement;
}

function paginate(elements: unknown[]): FormElement[][] {
  const pages: FormElement[][] = [];
  elements.forEach((raw, at) => {
    const el = raw as Record<string, unknown>;
    if (el === null || typeof el !== 'object' || typeof el['type'] !== 'string') {
      throw new RenderError(`element ${at} is not an object with a type`);
    }
    if (el['type'] === 'page') {
      pages.push([]);
      return;
    }
    const page = pages[pages.length - 1];
    if (page === undefined) {
      throw new RenderError(`element ${at} appears before the first page`);
    }
    if (el['type'] === 'question') {
      page.push(checkQuestion(el, at));
    } else if (el['type'] === 'headline' || el['type'] === 'text' || el['type'] === 'media') {
      page.push(el as FormElement);
    } else {
      throw new RenderError(`element ${at} has unknown type ${String(el['type'])}`);
    }
  });
  if (pages.length === 0) {
    throw new RenderError('document has no pages');
  }
  return pages;
}

function effectiveCodes(question: QuestionElement): number[] {
  if (question.questiontype === 'yesno' && question.options.length === 0) {
    return [0, 1];
  }
  return question.options.map((o) => o.code);
}

function isEmpty(value: AnswerValue): boolean {
  return value === '' || (Array.isArray(value) && value.length === 0);
}

function checkValue(question: QuestionElement, value: AnswerValue): void {
  const kind = question.questiontype;
  if (kind === 'single_choice' || kind === 'yesno') {
    if (typeof value !== 'number' || !Number.isInteger(value)
      || !effectiveCodes(question).includes(value)) {
      throw new AnswerError(`${question.variable}: ${JSON.stringify(value)} is not an option code`);
    }
    return;
  }
  if (kind === 'multi_choice') {
    const codes = effectiveCodes(question);
    if (!Array.isArray(value) || value.length === 0
      || new Set(value).size !== value.length
      || !value.every((v) => typeof v === 'number' && Number.isInteger(v) && codes.includes(v))) {
      throw new AnswerError(`${question.variable}: expected distinct option codes`);
    }
    return;
  }
  if (kind === 'slider') {
    const range = question.slider_range as SliderRange;
    if (typeof value !== 'number' || !Number.isFinite(value)
      || value < range.min || value > range.max) {
      throw new AnswerError(`${question.variable}: ${JSON.stringify(value)} outside ${range.min}..${range.max}`);
    }
    return;
  }
  if (kind === 'text_input') {
    if (typeof value !== 'string') {
      throw new AnswerError(`${question.variable}: expected text`);
    }
    return;
  }
  // date
  if (typeof value !== 'string' || !/^\d{4}-\d{2}-\d{2}$/.test(value)
    || Number.isNaN(Date.parse(value))) {
    throw new AnswerError(`${question.variable}: expected an ISO date`);
  }
}

export class FormWalker {
  private readonly pages: FormElement[][];
  private readonly byVariable = new Map<string, QuestionElement>();
  private readonly answers: AnswerMap = {};
  private page = 0;

  constructor(elements: unknown[]) {
    this.pages = paginate(elements);
    for (const page of this.pages) {
      for (const el of page) {
        if (el.type === 'question') {
          if (this.byVariable.has(el.variable)) {
            throw new RenderError(`duplicate variable ${el.variable}`);
          }
          this.byVariable.set(el.variable, el);
        }
      }
    }
  }

  get pageCount(): number {
    return this.pages.length;
  }

  currentPage(): PageView {
    return {
      index: this.page,
      count: this.pages.length,
      elements: this.pages[this.page] as FormElement[],
    };
  }

  /** Record one widget's value; a skipped optional question stays absent. */
  setAnswer(variable: string, value: AnswerValue): void {
    const question = this.byVariable.get(variable);
    if (question === undefined) {
      throw new AnswerError(`no question ${variable}`);
    }
    if (isEmpty(value)) {
      delete this.answers[variable];
      return;
    }
    checkValue(question, value);
    this.answers[variable] = value;
  }

  clearAnswer(variable: string): void {
    delete this.answers[variable];
  }

  /** Required questions on the current page that are still unanswered. */
  missingRequired(): string[] {
    const missing: string[] = [];
    for (const el of this.pages[this.page] as FormElement[]) {
      if (el.type === 'question' && !el.optional
        && !Object.prototype.hasOwnProperty.call(this.answers, el.variable)) {
        missing.push(el.variable);
      }
    }
    return missing;
  }

  canAdvance(): boolean {
    return this.missingRequired().length === 0;
  }

  /** Move to the next page; refuses while required answers are missing. */
  advance(): boolean {
    if (!this.canAdvance() || this.page >= this.pages.length - 1) {
      return false;
    }
    this.page += 1;
    return true;
  }

  back(): boolean {
    if (this.page === 0) return false;
    this.page -= 1;
    return true;
  }

  atEnd(): boolean {
    return this.page === this.pages.length - 1;
  }

  /** True once every required question of the whole form is answered. */
  complete(): boolean {
    for (const question of this.byVariable.values()) {
      if (!question.optional
        && !Object.prototype.hasOwnProperty.call(this.answers, question.variable)) {
        return false;
      }
    }
    return true;
  }

  /** The coded map exactly as the submission endpoint accepts it. */
  answerMap(): AnswerMap {
    return { ...this.answers };
  }
}
