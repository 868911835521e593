/**
 * The participant's session: consent gate, credential, subscriptions and the
 * offline queue, persisted together so a reload restores all of it.
 *
 * Nothing here talks to the network before consent is given; the disclaimer
 * text is bundled with the client, so declining costs no request at all.
 */

import { ApiClient, DeviceInfo, QuestionnaireContent, StudyInfo, SubmissionResult } from './client';
import { NetworkError } from './jsonapi';
import { SubmissionQueue, StorageLike } from './queue';
import { AnswerMap, FiredFeedback, evaluateFeedback } from './rules';

export class ConsentError extends Error {
  constructor() {
    super('consent has not been given');
    this.name = 'ConsentError';
  }
}

interface PersistedSession {
  consent: boolean;
  credential: { userId: string; token: string; createdAt: string } | null;
  subscriptions: string[];
}

export type SubmissionState = 'delivered' | 'pending' | 'rejected';

export interface SubmitOutcome {
  submissionId: string;
  state: SubmissionState;
  /** Feedback computed locally at submit time; shown immediately. */
  local: FiredFeedback[];
  /** The server's inline evaluation, once the submission got through. */
  server?: FiredFeedback[];
  /** True when local and server agree on the fired keys, in order. */
  agreed?: boolean;
  result?: SubmissionResult;
}

const SESSION_KEY = 'ema.session.v1';

export class ClientSession {
  readonly client: ApiClient;
  readonly queue: SubmissionQueue;
  private readonly storage: StorageLike;
  private state: PersistedSession;

  constructor(client: ApiClient, storage: StorageLike) {
    this.client = client;
    this.storage = storage;
    this.queue = new SubmissionQueue(storage);
    this.state = this.loadState();
    if (this.state.credential) {
      this.client.token = this.state.credential.token;
    }
  }

  private loadState(): PersistedSession {
    const raw = this.storage.getItem(SESSION_KEY);
    if (raw) {
      try {
        return JSON.parse(raw) as PersistedSession;
      } catch {
        // fall through to a fresh session
      }
    }
    return { consent: false, credential: null, subscriptions: [] };
  }

  private saveState(): void {
    this.storage.setItem(SESSION_KEY, JSON.stringify(this.state));
  }

  get hasConsent(): boolean {
    return this.state.consent;
  }

  get userId(): string | null {
    return this.state.credential?.userId ?? null;
  }

  get subscriptions(): string[] {
    return [...this.state.subscriptions];
  }

  giveConsent(): void {
    this.state.consent = true;
    this.saveState();
  }

  private requireConsent(): void {
    if (!this.state.consent) throw new ConsentError();
  }

  /** Anonymous onboarding; keeps the credential for later reloads. */
  async login(): Promise<string> {
    this.requireConsent();
    if (this.state.credential) {
      return this.state.credential.userId;
    }
    const credential = await this.client.login();
    this.state.credential = credential;
    this.saveState();
    return credential.userId;
  }

  async studies(): Promise<StudyInfo[]> {
    this.requireConsent();
    return this.client.listStudies();
  }

  async subscribe(studyId: string): Promise<void> {
    this.requireConsent();
    await this.client.subscribe(studyId);
    if (!this.state.subscriptions.includes(studyId)) {
      this.state.subscriptions.push(studyId);
      this.saveState();
    }
  }

  async questionnaire(id: string, language: string): Promise<QuestionnaireContent> {
    this.requireConsent();
    return this.client.getQuestionnaire(id, language);
  }

  /**
   * Queue the filled-out form and try to deliver the whole queue. Offline,
   * the submission stays pending and a later flushPending() retries it with
   * the same id.
   */
  async submitAnswers(
    study: StudyInfo,
    content: QuestionnaireContent,
    answers: AnswerMap,
    device: DeviceInfo,
  ): Promise<SubmitOutcome> {
    this.requireConsent();
    const local = evaluateFeedback(study.feedback, answers, content.language);
    const submissionId = this.queue.enqueue({
      questionnaire_id: content.questionnaireId,
      version: content.version,
      language: content.language,
      answers,
      device,
    });

    let report;
    try {
      report = await this.queue.flush(this.client);
    } catch (err) {
      if (err instanceof NetworkError) {
        return { submissionId, state: 'pending', local };
      }
      throw err;
    }

    const result = report.delivered.find((r) => r.clientSubmissionId === submissionId);
    if (result) {
      const server = result.evaluation.fired;
      return {
        submissionId,
        state: 'delivered',
        local,
        server,
        agreed: sameFired(local, server),
        result,
      };
    }
    if (report.rejected.some((r) => r.payload.client_submission_id === submissionId)) {
      return { submissionId, state: 'rejected', local };
    }
    return { submissionId, state: 'pending', local };
  }

  /** Retry everything still queued, e.g. when connectivity returns. */
  async flushPending(): Promise<number> {
    this.requireConsent();
    const report = await this.queue.flush(this.client);
    return report.pending;
  }

  pendingCount(): number {
    return this.queue.pendingCount();
  }
}

function sameFired(local: FiredFeedback[], server: FiredFeedback[]): boolean {
  return local.length === server.length
    && local.every((f, i) => f.key === (server[i] as FiredFeedback).key);
}
