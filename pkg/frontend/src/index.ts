export { ApiClient, ApiError } from './client';
export type {
  Credential,
  DeviceInfo,
  Evaluation,
  NotificationInfo,
  QuestionnaireContent,
  QuestionnaireSummary,
  ScheduleInfo,
  StudyInfo,
  SubmissionPayload,
  SubmissionResult,
} from './client';
export { MEDIA_TYPE, NetworkError } from './jsonapi';
export type { Document, ErrorObject, FetchLike, ResourceObject } from './jsonapi';
export { AnswerError, FormWalker, RenderError } from './form';
export type { FormElement, PageView, QuestionElement, SliderRange } from './form';
export { SubmissionQueue } from './queue';
export type { FlushReport, QueuedSubmission, StorageLike } from './queue';
export { ClientSession, ConsentError } from './session';
export type { SubmitOutcome } from './session';
export { escapeHtml, renderElement, renderPage, renderQuestion } from './widgets';
export type { PageChrome } from './widgets';
export {
  RuleSyntaxError,
  evaluateExpression,
  evaluateFeedback,
  parseRule,
} from './rules';
export type { AnswerMap, AnswerValue, Expression, FeedbackRuleDef, FiredFeedback } from './rules';
