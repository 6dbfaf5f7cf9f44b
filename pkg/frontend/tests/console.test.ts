// Round-trip against the real review API: both parked predictions are
// overridden through the console and the gated run's funnel ends up
// equal to the all-accepted baseline run's funnel.

import { spawn, type ChildProcess } from 'node:child_process';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { ReviewConsole } from '../src/app.js';
import type { StageCountsPayload } from '../src/types.js';

const HERE = dirname(fileURLToPath(import.meta.url));

interface FixtureInfo {
  port: number;
  baseline_run: string;
  gated_run: string;
  baseline_counts: StageCountsPayload;
}

let server: ChildProcess;
let fixture: FixtureInfo;
let client: ApiClient;

async function waitFor(check: () => boolean | Promise<boolean>, what: string,
                       timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (await check()) return;
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  server = spawn('python3', [join(HERE, 'serve_fixture.py')], {
    stdio: ['ignore', 'pipe', 'inherit'],
  });
  fixture = await new Promise<FixtureInfo>((resolve, reject) => {
    let buffer = '';
    server.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString();
      const line = buffer.split('\n')[0];
      if (line && buffer.includes('\n')) resolve(JSON.parse(line));
    });
    server.on('error', reject);
    server.on('exit', (code) => reject(new Error(`fixture server exited ${code}`)));
  });
  client = new ApiClient(`http://127.0.0.1:${fixture.port}`, 'console-analyst');
  await waitFor(async () => {
    try {
      await client.listRuns();
      return true;
    } catch {
      return false;
    }
  }, 'API readiness');
});

afterAll(() => {
  server?.kill();
});

describe('console round-trip', () => {
  it('overrides both parked items and matches the all-accepted funnel', async () => {
    document.body.innerHTML = '<div id="root"></div>';
    const root = document.getElementById('root')!;
    const app = new ReviewConsole(client, root);

    await app.refresh();
    expect(root.querySelectorAll('.queue-row')).toHaveLength(2);
    expect(root.querySelectorAll('.confidence-badge')).toHaveLength(2);

    for (let round = 0; round < 2; round += 1) {
      (root.querySelector('.queue-row') as HTMLElement).click();
      await waitFor(
        () => root.querySelector<HTMLElement>('.score-preview')?.dataset.score !== undefined,
        'score preview');

      // displayed preview must equal the API's own score for that vector
      const preview = root.querySelector<HTMLElement>('.score-preview')!;
      const selects = root.querySelectorAll<HTMLSelectElement>('.vector-form select');
      const vector = 'CVSS:3.1/' +
        [...selects].map((s) => `${s.name}:${s.value}`).join('/');
      const direct = await client.score(vector);
      expect(Number(preview.dataset.score)).toBe(direct.base_score);

      // defaults mirror the prediction; overriding with them reproduces
      // the accept path record for record
      const before = root.querySelectorAll('.queue-row').length;
      (root.querySelector('.override-btn') as HTMLElement).click();
      await waitFor(
        () => root.querySelectorAll('.queue-row').length < before,
        'queue to shrink');
    }

    expect(root.querySelectorAll('.queue-row')).toHaveLength(0);
    expect(root.querySelector('.empty-state')).not.toBeNull();

    const gated = await client.getReport(fixture.gated_run);
    expect(gated.status).toBe('complete');
    expect(gated.counts).toEqual(fixture.baseline_counts);
    expect(gated.funnel_problems).toEqual([]);
  }, 60000);

  it('renders the funnel with API-computed reductions', async () => {
    document.body.innerHTML = '<div id="root"></div><div id="funnel"></div>';
    const root = document.getElementById('root')!;
    const funnelRoot = document.getElementById('funnel')!;
    const app = new ReviewConsole(client, root);
    await app.showFunnel(fixture.baseline_run, funnelRoot);

    const report = await client.getReport(fixture.baseline_run);
    const prioritized = funnelRoot.querySelector<HTMLElement>('[data-field="prioritized"]');
    expect(prioritized?.textContent).toBe(String(report.counts.prioritized));
    for (const [name, pct] of Object.entries(report.reductions)) {
      const entry = funnelRoot.querySelector<HTMLElement>(`[data-name="${name}"]`);
      expect(entry?.dataset.pct).toBe(String(pct));
    }
  });

  it('second decision on a decided item surfaces the prior decision', async () => {
    const decided = (await client.listRuns()).find((r) => r.run_id === fixture.gated_run);
    expect(decided?.pending_reviews).toBe(0);

    // find a decided item id from the gated run via the report trail
    document.body.innerHTML = '<div id="root"></div>';
    const root = document.getElementById('root')!;
    const app = new ReviewConsole(client, root);
    await app.refresh();

    // all items are decided now; hitting one again must yield the prior decision
    const itemId = `${fixture.gated_run}-item0000`;
    const item = await client.getItem(itemId);
    expect(item.decision?.kind).toBe('override');
    await expect(client.decide(itemId, { kind: 'accept', analyst: 'other' }))
      .rejects.toMatchObject({ prior: { analyst: 'console-analyst' } });
  });
});
