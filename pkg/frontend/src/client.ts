/**
 * Typed client for the study platform's HTTP contract. One method per
 * endpoint a participant can reach; no private routes.
 */

import {
  ApiError,
  FetchLike,
  ResourceObject,
  requestDocument,
} from './jsonapi';
import { AnswerMap, FeedbackRuleDef, FiredFeedback } from './rules';

export interface Credential {
  userId: string;
  token: string;
  createdAt: string;
}

export interface ScheduleInfo {
  interval_days: number;
  window_start: string;
  window_end: string;
  max_pending: number;
}

export interface StudyInfo {
  studyId: string;
  name: Record<string, string>;
  description: Record<string, string>;
  languages: string[];
  schedule: ScheduleInfo;
  feedback: FeedbackRuleDef[];
  questionnaireIds: string[];
}

export interface QuestionnaireSummary {
  questionnaireId: string;
  kind: 'baseline' | 'followup';
  version: number;
  languages: string[];
}

export interface QuestionnaireContent {
  questionnaireId: string;
  studyId: string;
  kind: 'baseline' | 'followup';
  version: number;
  language: string;
  elements: unknown[];
}

export interface DeviceInfo {
  os: string;
  os_version: string;
  model: string;
}

export interface SubmissionPayload {
  client_submission_id: string;
  questionnaire_id: string;
  language: string;
  answers: AnswerMap;
  device: DeviceInfo;
  version?: number;
  location?: { lat: number; lon: number };
  client_created_at?: string;
}

export interface Evaluation {
  language: string;
  fired: FiredFeedback[];
}

export interface SubmissionResult {
  answersheetId: string;
  clientSubmissionId: string;
  created: boolean;
  evaluation: Evaluation;
}

export interface NotificationInfo {
  id: string;
  studyId: string;
  questionnaireId: string;
  dueAt: string;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  token = '';

  constructor(baseUrl: string, fetchFn: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, '');
    this.fetchFn = fetchFn;
  }

  private url(path: string, query: Record<string, string> = {}): string {
    const qs = new URLSearchParams(query).toString();
    return `${this.baseUrl}${path}${qs ? `?${qs}` : ''}`;
  }

  /** Anonymous onboarding: the server mints a credential, nothing is sent. */
  async login(): Promise<Credential> {
    const { document } = await requestDocument<ResourceObject<{ token: string; created_at: string }>>(
      this.fetchFn, this.url('/api/v1/users'), { method: 'POST' });
    const data = document.data as ResourceObject<{ token: string; created_at: string }>;
    this.token = data.attributes.token;
    return { userId: data.id, token: data.attributes.token, createdAt: data.attributes.created_at };
  }

  async listStudies(): Promise<StudyInfo[]> {
    type Attrs = {
      name: Record<string, string>;
      description: Record<string, string>;
      languages: string[];
      schedule: ScheduleInfo;
      feedback: FeedbackRuleDef[];
    };
    const { document } = await requestDocument<Array<ResourceObject<Attrs>>>(
      this.fetchFn, this.url('/api/v1/studies'), { token: this.token });
    return (document.data ?? []).map((res) => ({
      studyId: res.id,
      name: res.attributes.name,
      description: res.attributes.description,
      languages: res.attributes.languages,
      schedule: res.attributes.schedule,
      feedback: res.attributes.feedback,
      questionnaireIds: (res.relationships?.questionnaires?.data ?? []).map((r) => r.id),
    }));
  }

  async studyQuestionnaires(studyId: string): Promise<QuestionnaireSummary[]> {
    type Attrs = { kind: 'baseline' | 'followup'; version: number; languages: string[] };
    const { document } = await requestDocument<Array<ResourceObject<Attrs>>>(
      this.fetchFn,
      this.url(`/api/v1/studies/${encodeURIComponent(studyId)}/questionnaires`),
      { token: this.token });
    return (document.data ?? []).map((res) => ({
      questionnaireId: res.id,
      kind: res.attributes.kind,
      version: res.attributes.version,
      languages: res.attributes.languages,
    }));
  }

  async getQuestionnaire(id: string, language: string, version?: number): Promise<QuestionnaireContent> {
    const query: Record<string, string> = { lang: language };
    if (version !== undefined) query['version'] = String(version);
    type Attrs = {
      study_id: string;
      kind: 'baseline' | 'followup';
      version: number;
      language: string;
      elements: unknown[];
    };
    const { document } = await requestDocument<ResourceObject<Attrs>>(
      this.fetchFn,
      this.url(`/api/v1/questionnaires/${encodeURIComponent(id)}`, query),
      { token: this.token });
    const data = document.data as ResourceObject<Attrs>;
    return {
      questionnaireId: data.id,
      studyId: data.attributes.study_id,
      kind: data.attributes.kind,
      version: data.attributes.version,
      language: data.attributes.language,
      elements: data.attributes.elements,
    };
  }

  async subscribe(studyId: string): Promise<{ studyId: string; subscribedAt: string }> {
    type Attrs = { study_id: string; subscribed_at: string };
    const { document } = await requestDocument<ResourceObject<Attrs>>(
      this.fetchFn, this.url('/api/v1/subscriptions'), {
        method: 'POST',
        token: this.token,
        body: { data: { type: 'subscriptions', attributes: { study_id: studyId } } },
      });
    const data = document.data as ResourceObject<Attrs>;
    return { studyId: data.attributes.study_id, subscribedAt: data.attributes.subscribed_at };
  }

  async submitAnswersheet(payload: SubmissionPayload): Promise<SubmissionResult> {
    type Attrs = { client_submission_id: string; evaluation: Evaluation };
    const { status, document } = await requestDocument<ResourceObject<Attrs>>(
      this.fetchFn, this.url('/api/v1/answersheets'), {
        method: 'POST',
        token: this.token,
        body: { data: { type: 'answersheets', attributes: payload } },
      });
    const data = document.data as ResourceObject<Attrs>;
    // 201 = first arrival, 200 = replay of an already stored submission
    return {
      answersheetId: data.id,
      clientSubmissionId: data.attributes.client_submission_id,
      created: status === 201,
      evaluation: data.attributes.evaluation,
    };
  }

  async getEvaluation(answersheetId: string, language: string): Promise<Evaluation> {
    const { document } = await requestDocument<ResourceObject<Evaluation>>(
      this.fetchFn,
      this.url(`/api/v1/answersheets/${encodeURIComponent(answersheetId)}/evaluation`, { lang: language }),
      { token: this.token });
    return (document.data as ResourceObject<Evaluation>).attributes;
  }

  async notifications(userId: string): Promise<NotificationInfo[]> {
    type Attrs = { study_id: string; questionnaire_id: string; due_at: string };
    const { document } = await requestDocument<Array<ResourceObject<Attrs>>>(
      this.fetchFn,
      this.url(`/api/v1/users/${encodeURIComponent(userId)}/notifications`),
      { token: this.token });
    return (document.data ?? []).map((res) => ({
      id: res.id,
      studyId: res.attributes.study_id,
      questionnaireId: res.attributes.questionnaire_id,
      dueAt: res.attributes.due_at,
    }));
  }
}

export { ApiError };
