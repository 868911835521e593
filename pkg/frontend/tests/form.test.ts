/**
 * Paged form state machine over the canonical questionnaire shipped in the
 * fixture corpus, plus the widget-level answer checks.
 */

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';

import { AnswerError, FormWalker, RenderError } from '../src/form';

const here = dirname(fileURLToPath(import.meta.url));
const golden = JSON.parse(
  readFileSync(join(here, '..', '..', 'fixtures', 'mini.golden.json'), 'utf-8'),
);

function baselineElements(): unknown[] {
  const q = golden.questionnaires.find(
    (q: { kind: string; language: string }) => q.kind === 'baseline' && q.language === 'en',
  );
  return q.elements;
}

const threePager: unknown[] = [
  { type: 'page' },
  { type: 'headline', text: 'Start' },
  {
    type: 'question', variable: 'mood', label: 'Mood?', optional: false,
    questiontype: 'single_choice',
    options: [{ code: 0, text: 'low' }, { code: 1, text: 'high' }],
  },
  { type: 'page' },
  {
    type: 'question', variable: 'hours', label: 'Sleep hours', optional: false,
    questiontype: 'slider', options: [], slider_range: { min: 0, max: 14, step: 0.5 },
  },
  {
    type: 'question', variable: 'note', label: 'Notes', optional: true,
    questiontype: 'text_input', options: [],
  },
  { type: 'page' },
  {
    type: 'question', variable: 'since', label: 'Since when?', optional: false,
    questiontype: 'date', options: [],
  },
];

describe('rendering the fixture questionnaire', () => {
  it('opens one page per page element and walks them in order', () => {
    const form = new FormWalker(baselineElements());
    expect(form.pageCount).toBe(2);
    const first = form.currentPage();
    expect(first.index).toBe(0);
    expect(first.elements[0]).toEqual({ type: 'headline', text: 'Welcome' });
    expect(first.elements.some(
      (el) => el.type === 'question' && el.variable === 'phq1')).toBe(true);
  });

  it('renders three steps for a three-page document', () => {
    const form = new FormWalker(threePager);
    expect(form.pageCount).toBe(3);
  });

  it('refuses malformed documents', () => {
    expect(() => new FormWalker([])).toThrow(RenderError);
    expect(() => new FormWalker([{ type: 'headline', text: 'stray' }])).toThrow(RenderError);
    expect(() => new FormWalker([{ type: 'page' }, { type: 'mystery' }])).toThrow(RenderError);
    expect(() => new FormWalker([
      { type: 'page' },
      { type: 'question', variable: 'q', label: '', optional: false, questiontype: 'telepathy', options: [] },
    ])).toThrow(RenderError);
    expect(() => new FormWalker([
      { type: 'page' },
      { type: 'question', variable: 'q', label: '', optional: false, questiontype: 'slider', options: [] },
    ])).toThrow(RenderError);
  });
});

describe('advancing', () => {
  it('blocks while a required question on the page is unanswered', () => {
    const form = new FormWalker(threePager);
    expect(form.canAdvance()).toBe(false);
    expect(form.advance()).toBe(false);
    expect(form.missingRequired()).toEqual(['mood']);

    form.setAnswer('mood', 1);
    expect(form.advance()).toBe(true);
    expect(form.currentPage().index).toBe(1);
  });

  it('lets optional questions stay unanswered', () => {
    const form = new FormWalker(threePager);
    form.setAnswer('mood', 0);
    form.advance();
    form.setAnswer('hours', 7.5);
    // note stays unanswered
    expect(form.missingRequired()).toEqual([]);
    expect(form.advance()).toBe(true);
    expect(form.atEnd()).toBe(true);
  });

  it('re-blocks when an answer is cleared', () => {
    const form = new FormWalker(threePager);
    form.setAnswer('mood', 0);
    expect(form.canAdvance()).toBe(true);
    form.clearAnswer('mood');
    expect(form.canAdvance()).toBe(false);
  });

  it('walks back without conditions', () => {
    const form = new FormWalker(threePager);
    expect(form.back()).toBe(false);
    form.setAnswer('mood', 0);
    form.advance();
    expect(form.back()).toBe(true);
    expect(form.currentPage().index).toBe(0);
  });
});

describe('answer coding', () => {
  it('produces exactly the coded map the server accepts', () => {
    const form = new FormWalker(baselineElements());
    form.setAnswer('phq1', 2);
    form.setAnswer('stress_level', 6);
    form.setAnswer('smoker', 0);
    form.advance();
    form.setAnswer('note', 'ok');
    expect(form.complete()).toBe(true);
    expect(form.answerMap()).toEqual({ phq1: 2, stress_level: 6, smoker: 0, note: 'ok' });
  });

  it('checks option codes and slider ranges widget by widget', () => {
    const form = new FormWalker(threePager);
    expect(() => form.setAnswer('mood', 7)).toThrow(AnswerError);
    expect(() => form.setAnswer('mood', 0.5)).toThrow(AnswerError);
    expect(() => form.setAnswer('ghost', 1)).toThrow(AnswerError);
    form.advance(); // still on page 0, but answers are not page-scoped
    expect(() => form.setAnswer('hours', 15)).toThrow(AnswerError);
    expect(() => form.setAnswer('hours', Number.NaN)).toThrow(AnswerError);
    expect(() => form.setAnswer('since', 'tomorrow')).toThrow(AnswerError);
    expect(() => form.setAnswer('since', '2026-13-40')).toThrow(AnswerError);
    form.setAnswer('since', '2026-02-01');
    expect(form.answerMap()['since']).toBe('2026-02-01');
  });

  it('treats empty text and empty selections as not answered', () => {
    const form = new FormWalker(threePager);
    form.setAnswer('mood', 1);
    form.advance();
    form.setAnswer('note', '');
    expect(Object.keys(form.answerMap())).not.toContain('note');
  });

  it('accepts multi-choice lists of distinct codes only', () => {
    const form = new FormWalker([
      { type: 'page' },
      {
        type: 'question', variable: 'symptoms', label: 'Which?', optional: false,
        questiontype: 'multi_choice',
        options: [{ code: 1, text: 'a' }, { code: 2, text: 'b' }, { code: 4, text: 'c' }],
      },
    ]);
    form.setAnswer('symptoms', [1, 4]);
    expect(form.answerMap()).toEqual({ symptoms: [1, 4] });
    expect(() => form.setAnswer('symptoms', [1, 1])).toThrow(AnswerError);
    expect(() => form.setAnswer('symptoms', [3])).toThrow(AnswerError);
  });

  it('defaults yesno codes to 0 and 1 when options are omitted', () => {
    const form = new FormWalker([
      { type: 'page' },
      {
        type: 'question', variable: 'smoker', label: 'Smoke?', optional: false,
        questiontype: 'yesno', options: [],
      },
    ]);
    form.setAnswer('smoker', 1);
    expect(() => form.setAnswer('smoker', 2)).toThrow(AnswerError);
  });
});
