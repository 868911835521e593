/**
 * Offline submission queue, persisted so a reload loses nothing.
 *
 * A submission gets its client_submission_id when it is enqueued and keeps
 * it across every retry; the server deduplicates on that id, so flushing
 * twice, or flushing after a crash, still yields exactly one answersheet.
 * Entries only leave the queue on a server acknowledgment: success or a
 * definitive 4xx rejection. Network failures and 5xx responses keep the
 * entry pending.
 */

import { ApiClient, SubmissionPayload, SubmissionResult } from './client';
import { ApiError, ErrorObject, NetworkError } from './jsonapi';

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface QueuedSubmission {
  payload: SubmissionPayload;
  enqueuedAt: string;
  attempts: number;
}

export interface RejectedSubmission {
  payload: SubmissionPayload;
  errors: ErrorObject[];
}

export interface FlushReport {
  delivered: SubmissionResult[];
  rejected: RejectedSubmission[];
  /** Entries still pending after the flush (offline or server trouble). */
  pending: number;
}

const QUEUE_KEY = 'ema.submission_queue.v1';

function randomId(): string {
  const bytes = new Uint8Array(16);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, '0')).join('');
}

export class SubmissionQueue {
  private readonly storage: StorageLike;
  private flushing: Promise<FlushReport> | null = null;

  constructor(storage: StorageLike) {
    this.storage = storage;
  }

  private load(): QueuedSubmission[] {
    const raw = this.storage.getItem(QUEUE_KEY);
    if (!raw) return [];
    try {
      const parsed = JSON.parse(raw);
      return Array.isArray(parsed) ? (parsed as QueuedSubmission[]) : [];
    } catch {
      return [];
    }
  }

  private save(entries: QueuedSubmission[]): void {
    this.storage.setItem(QUEUE_KEY, JSON.stringify(entries));
  }

  /** Queue a submission; the id minted here survives retries and reloads. */
  enqueue(payload: Omit<SubmissionPayload, 'client_submission_id' | 'client_created_at'>): string {
    const entries = this.load();
    const id = randomId();
    entries.push({
      payload: {
        ...payload,
        client_submission_id: id,
        client_created_at: new Date().toISOString(),
      },
      enqueuedAt: new Date().toISOString(),
      attempts: 0,
    });
    this.save(entries);
    return id;
  }

  pendingCount(): number {
    return this.load().length;
  }

  pendingEntries(): QueuedSubmission[] {
    return this.load();
  }

  /**
   * Try to deliver everything, oldest first. Concurrent callers share one
   * run; the queue is never flushed twice in parallel.
   */
  flush(client: ApiClient): Promise<FlushReport> {
    if (this.flushing === null) {
      this.flushing = this.flushOnce(client).finally(() => {
        this.flushing = null;
      });
    }
    return this.flushing;
  }

  private async flushOnce(client: ApiClient): Promise<FlushReport> {
    const delivered: SubmissionResult[] = [];
    const rejected: RejectedSubmission[] = [];
    let entries = this.load();

    while (entries.length > 0) {
      const entry = entries[0] as QueuedSubmission;
      try {
        const result = await client.submitAnswersheet(entry.payload);
        delivered.push(result);
      } catch (err) {
        if (err instanceof ApiError && err.status < 500) {
          // the server saw it and said no; retrying cannot change that
          rejected.push({ payload: entry.payload, errors: err.errors });
        } else if (err instanceof NetworkError || err instanceof ApiError) {
          entry.attempts += 1;
          this.save(entries);
          break;
        } else {
          throw err;
        }
      }
      entries = entries.slice(1);
      this.save(entries);
    }

    return { delivered, rejected, pending: entries.length };
  }
}
