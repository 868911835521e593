/**
 * HTML renderers: one widget per question type, one section per page.
 * Pure string generation, no framework; the host page wires events back
 * into the FormWalker.
 */

import { ChoiceOption, FormElement, PageView, QuestionElement, SliderRange } from './form';
import { AnswerMap, AnswerValue } from './rules';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function choiceInputs(
  question: QuestionElement,
  kind: 'radio' | 'checkbox',
  value: AnswerValue | undefined,
): string {
  const options: ChoiceOption[] =
    question.questiontype === 'yesno' && question.options.length === 0
      ? [{ code: 1, text: 'Yes' }, { code: 0, text: 'No' }]
      : question.options;
  const selected = new Set<number>();
  if (Array.isArray(value)) {
    for (const v of value) {
      if (typeof v === 'number') selected.add(v);
    }
  } else if (typeof value === 'number') {
    selected.add(value);
  }
  const name = escapeHtml(question.variable);
  return options.map((option) => {
    const checked = selected.has(option.code) ? ' checked' : '';
    return `<label><input type="${kind}" name="${name}" value="${option.code}"${checked}> ${escapeHtml(option.text)}</label>`;
  }).join('\n');
}

function sliderInput(question: QuestionElement, value: AnswerValue | undefined): string {
  const range = question.slider_range as SliderRange;
  const current = typeof value === 'number' ? value : range.min;
  return `<input type="range" name="${escapeHtml(question.variable)}" `
    + `min="${range.min}" max="${range.max}" step="${range.step}" value="${current}">`;
}

export function renderQuestion(question: QuestionElement, answers: AnswerMap = {}): string {
  const value = answers[question.variable];
  const marker = question.optional ? '' : ' <span class="required">*</span>';
  let control: string;
  switch (question.questiontype) {
    case 'single_choice':
    case 'yesno':
      control = choiceInputs(question, 'radio', value);
      break;
    case 'multi_choice':
      control = choiceInputs(question, 'checkbox', value);
      break;
    case 'slider':
      control = sliderInput(question, value);
      break;
    case 'text_input':
      control = `<textarea name="${escapeHtml(question.variable)}">`
        + `${typeof value === 'string' ? escapeHtml(value) : ''}</textarea>`;
      break;
    case 'date':
      control = `<input type="date" name="${escapeHtml(question.variable)}" `
        + `value="${typeof value === 'string' ? escapeHtml(value) : ''}">`;
      break;
  }
  return `<fieldset class="question" data-variable="${escapeHtml(question.variable)}">\n`
    + `<legend>${escapeHtml(question.label)}${marker}</legend>\n${control}\n</fieldset>`;
}

export function renderElement(element: FormElement, answers: AnswerMap = {}): string {
  switch (element.type) {
    case 'page':
      return '';
    case 'headline':
      return `<h2>${escapeHtml(element.text)}</h2>`;
    case 'text':
      return `<p>${escapeHtml(element.text)}</p>`;
    case 'media':
      return `<figure><a href="${escapeHtml(element.uri)}">media</a></figure>`;
    case 'question':
      return renderQuestion(element, answers);
  }
}

export interface PageChrome {
  canAdvance: boolean;
  atEnd: boolean;
}

/** One page of the form, with progress and navigation state baked in. */
export function renderPage(view: PageView, answers: AnswerMap, chrome: PageChrome): string {
  const body = view.elements.map((el) => renderElement(el, answers)).join('\n');
  const nextLabel = chrome.atEnd ? 'Submit' : 'Next';
  const nextDisabled = chrome.canAdvance ? '' : ' disabled';
  return `<section class="page" aria-label="page ${view.index + 1} of ${view.count}">\n`
    + `${body}\n`
    + `<nav>`
    + `<button type="button" class="back"${view.index === 0 ? ' disabled' : ''}>Back</button>`
    + `<button type="button" class="next"${nextDisabled}>${nextLabel}</button>`
    + `</nav>\n</section>`;
}
