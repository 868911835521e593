/**
 * End-to-end against the real backend: a participant journey over HTTP only,
 * the offline to online submit cycle, and local versus server feedback.
 *
 * Spawns the actual server process (`python3 -m ema.cli serve`) on a scratch
 * database, seeds it through the admin endpoint, and talks to it with the
 * same client code a browser would run.
 */

import { ChildProcess, spawn } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/client';
import { FormWalker, QuestionElement } from '../src/form';
import { MEDIA_TYPE } from '../src/jsonapi';
import { StorageLike } from '../src/queue';
import { ClientSession } from '../src/session';
import { evaluateFeedback } from '../src/rules';

const here = dirname(fileURLToPath(import.meta.url));
const GOLDEN = join(here, '..', '..', 'fixtures', 'mini.golden.json');

const PORT = 18300 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;
const ADMIN_TOKEN = 'integration-admin-token';
const DEVICE = { os: 'web', os_version: '1', model: 'vitest' };

class MemoryStorage implements StorageLike {
  private readonly map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.has(key) ? (this.map.get(key) as string) : null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

let server: ChildProcess;

async function serverTotals(): Promise<number> {
  const response = await fetch(`${BASE}/api/v1/stats`, {
    headers: { Authorization: `Bearer ${ADMIN_TOKEN}`, Accept: MEDIA_TYPE },
  });
  expect(response.status).toBe(200);
  const body = await response.json();
  return body.data.attributes.answersheets_total as number;
}

beforeAll(async () => {
  const scratch = mkdtempSync(join(tmpdir(), 'ema-web-'));
  const config = join(scratch, 'config.json');
  writeFileSync(config, JSON.stringify({
    host: '127.0.0.1',
    port: PORT,
    database: join(scratch, 'integration.db'),
    admin_token: ADMIN_TOKEN,
  }));

  server = spawn('python3', ['-m', 'ema.cli', '--config', config, 'serve'],
    { stdio: ['ignore', 'ignore', 'pipe'] });
  let stderr = '';
  server.stderr?.on('data', (chunk) => { stderr += String(chunk); });

  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/healthz`);
      if (response.ok) break;
    } catch {
      // not up yet
    }
    if (server.exitCode !== null) {
      throw new Error(`server exited early: ${stderr}`);
    }
    if (Date.now() > deadline) {
      throw new Error(`server did not come up: ${stderr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }

  const document = JSON.parse(readFileSync(GOLDEN, 'utf-8'));
  const seeded = await fetch(`${BASE}/api/v1/questionnaires`, {
    method: 'PUT',
    headers: {
      Authorization: `Bearer ${ADMIN_TOKEN}`,
      'Content-Type': MEDIA_TYPE,
      Accept: MEDIA_TYPE,
    },
    body: JSON.stringify({
      data: {
        type: 'questionnaire-documents',
        id: document.meta.study_id,
        attributes: document,
      },
    }),
  });
  expect(seeded.status).toBe(200);
}, 30_000);

afterAll(async () => {
  if (server && server.exitCode === null) {
    const gone = new Promise((resolve) => server.once('exit', resolve));
    server.kill('SIGTERM');
    await gone;
  }
});

describe('participant journey over HTTP', () => {
  it('onboards, renders the fixture questionnaire and submits', async () => {
    const session = new ClientSession(new ApiClient(BASE), new MemoryStorage());
    session.giveConsent();
    await session.login();

    const studies = await session.studies();
    const study = studies.find((s) => s.studyId === 'mini-stress');
    expect(study).toBeDefined();
    expect(study!.feedback.some((r) => r.key === 'phq_high')).toBe(true);

    await session.subscribe('mini-stress');
    const content = await session.questionnaire('mini-stress-baseline', 'en');
    expect(content.language).toBe('en');

    const form = new FormWalker(content.elements);
    expect(form.pageCount).toBeGreaterThan(1);
    expect(form.canAdvance()).toBe(false); // required questions start empty

    form.setAnswer('phq1', 2);
    form.setAnswer('stress_level', 6);
    form.setAnswer('smoker', 0);
    while (form.advance()) { /* walk to the end */ }
    expect(form.atEnd()).toBe(true);
    expect(form.complete()).toBe(true);

    const before = await serverTotals();
    const outcome = await session.submitAnswers(study!, content, form.answerMap(), DEVICE);
    expect(outcome.state).toBe('delivered');
    expect(outcome.result?.created).toBe(true);
    expect(await serverTotals()).toBe(before + 1);

    // the local evaluator and the server's inline evaluation agree
    expect(outcome.agreed).toBe(true);
    expect(outcome.server).toEqual(
      evaluateFeedback(study!.feedback, form.answerMap(), 'en'));
    expect(outcome.server?.map((f) => f.key)).toContain('phq_high');
  }, 30_000);

  it('submits offline, reloads, reconnects: exactly one answersheet appears', async () => {
    let online = true;
    const gated = (url: string, init: RequestInit): Promise<Response> => {
      if (!online) return Promise.reject(new TypeError('offline'));
      return fetch(url, init);
    };

    const storage = new MemoryStorage();
    const session = new ClientSession(new ApiClient(BASE, gated), storage);
    session.giveConsent();
    await session.login();
    const studies = await session.studies();
    const study = studies.find((s) => s.studyId === 'mini-stress')!;
    await session.subscribe('mini-stress');
    const content = await session.questionnaire('mini-stress-baseline', 'en');

    const form = new FormWalker(content.elements);
    form.setAnswer('phq1', 0);
    form.setAnswer('stress_level', 1);
    form.setAnswer('smoker', 0);

    const before = await serverTotals();
    online = false;
    const outcome = await session.submitAnswers(study, content, form.answerMap(), DEVICE);
    expect(outcome.state).toBe('pending');
    expect(session.pendingCount()).toBe(1);

    // reload: a fresh session over the same storage still holds the queue
    const reloaded = new ClientSession(new ApiClient(BASE, gated), storage);
    expect(reloaded.pendingCount()).toBe(1);

    online = true;
    expect(await reloaded.flushPending()).toBe(0);
    // flushing again replays the same submission id; the server keeps one
    expect(await reloaded.flushPending()).toBe(0);
    expect(await serverTotals()).toBe(before + 1);
    expect(reloaded.pendingCount()).toBe(0);
  }, 30_000);

  it('surfaces server-side validation as a rejection, keeping nothing queued', async () => {
    const session = new ClientSession(new ApiClient(BASE), new MemoryStorage());
    session.giveConsent();
    await session.login();
    const studies = await session.studies();
    const study = studies.find((s) => s.studyId === 'mini-stress')!;
    await session.subscribe('mini-stress');
    const content = await session.questionnaire('mini-stress-baseline', 'en');

    // bypass the form's own checks to prove the server-side contract
    const outcome = await session.submitAnswers(
      study, content, { phq1: 99, stress_level: 2, smoker: 0 }, DEVICE);
    expect(outcome.state).toBe('rejected');
    expect(session.pendingCount()).toBe(0);
  }, 30_000);
});
