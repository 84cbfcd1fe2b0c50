// Scripted consultation against the real session service running the
// bundled demo corpus with the scripted-mock gateway: intake, two
// answers, final view, with a mid-session reload restored from the GET
// snapshot. Requires the Python package to be installed (the `lexdiag`
// command); the demo artifacts are trained on first run.

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { existsSync, readFileSync } from 'node:fs';
import { createServer } from 'node:net';
import { resolve } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { SessionApi } from '../src/api.js';
import { ConsultApp } from '../src/app.js';

// vitest runs from frontend/; the Python package and demo config live
// one level up.
const repoRoot = resolve(process.cwd(), '..');
const demoConfig = ['--config', 'demo/demo.yaml'];

let service: ChildProcess | null = null;
let baseUrl = '';

class MemoryStorage implements Storage {
  private map = new Map<string, string>();
  get length(): number {
    return this.map.size;
  }
  clear(): void {
    this.map.clear();
  }
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  key(index: number): string | null {
    return [...this.map.keys()][index] ?? null;
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}

function ensureDemoArtifacts(): void {
  const trained = resolve(repoRoot, 'demo-build/checkpoints/bandits.npz');
  if (existsSync(trained)) return;
  const steps: string[][] = [
    [...demoConfig, 'datagen', '--input', 'demo/narratives', '--out', 'demo-build/corpus'],
    [...demoConfig, 'train-pu', '--split', 'all'],
    [...demoConfig, 'train-bandit', '--split', 'all'],
  ];
  for (const args of steps) {
    execFileSync('lexdiag', args, { cwd: repoRoot, stdio: 'pipe' });
  }
}

function freePort(): Promise<number> {
  return new Promise((resolvePort, reject) => {
    const probe = createServer();
    probe.once('error', reject);
    probe.listen(0, '127.0.0.1', () => {
      const address = probe.address();
      if (address === null || typeof address === 'string') {
        reject(new Error('no port assigned'));
        return;
      }
      probe.close(() => resolvePort(address.port));
    });
  });
}

async function waitForReady(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError = 'no reply yet';
  while (Date.now() < deadline) {
    try {
      const reply = await fetch(`${baseUrl}/v1/health`);
      if (reply.ok) {
        const health = await reply.json();
        if (health.models_loaded && health.gateway_ready) return;
        lastError = JSON.stringify(health);
      }
    } catch (err) {
      lastError = String(err);
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service never became ready: ${lastError}`);
}

function showcaseNarrative(): string {
  const lines = readFileSync(resolve(repoRoot, 'demo-build/corpus/cases.jsonl'), 'utf8')
    .trim()
    .split('\n');
  for (const line of lines) {
    const record = JSON.parse(line);
    if (record.raw_text.includes('shuttered vault')) return record.reconstructed_description;
  }
  throw new Error('showcase case missing from demo corpus');
}

async function waitFor<T>(probe: () => T | null, timeoutMs = 15_000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const got = probe();
    if (got !== null) return got;
    await new Promise((r) => setTimeout(r, 50));
  }
  throw new Error('condition never became true');
}

function typeInto(root: HTMLElement, selector: string, text: string): void {
  const box = root.querySelector<HTMLTextAreaElement>(selector);
  if (!box) throw new Error(`missing ${selector}`);
  box.value = text;
  box.dispatchEvent(new Event('input'));
}

function press(root: HTMLElement, selector: string): void {
  const button = root.querySelector<HTMLButtonElement>(selector);
  if (!button) throw new Error(`missing ${selector}`);
  button.click();
}

function textOf(root: HTMLElement, selector: string): string {
  return root.querySelector(selector)?.textContent ?? '';
}

function transcriptLines(root: HTMLElement): string[] {
  return [...root.querySelectorAll('.transcript .entry')].map((li) => li.textContent ?? '');
}

beforeAll(async () => {
  if (!existsSync(resolve(repoRoot, 'demo/demo.yaml'))) {
    throw new Error(`demo config not found under ${repoRoot}; run vitest from frontend/`);
  }
  ensureDemoArtifacts();
  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  service = spawn('lexdiag', [...demoConfig, 'serve', '--host', '127.0.0.1', '--port', String(port)], {
    cwd: repoRoot,
    stdio: 'pipe',
  });
  await waitForReady(60_000);
});

afterAll(() => {
  service?.kill('SIGTERM');
});

describe('demo consultation', () => {
  it('completes intake, two answers, and the final view, surviving a reload', async () => {
    const storage = new MemoryStorage();
    const api = new SessionApi({ baseUrl });

    const firstTab = document.createElement('div');
    document.body.appendChild(firstTab);
    const app = new ConsultApp(firstTab, { api, storage });
    await app.start();
    expect(firstTab.querySelector('#narrative')).not.toBeNull();

    typeInto(firstTab, '#narrative', showcaseNarrative());
    press(firstTab, '#start');
    await waitFor(() => firstTab.querySelector('.question'));
    expect(textOf(firstTab, '.turn-counter')).toBe('Turn 1/8');
    expect(textOf(firstTab, '.question')).toContain('harbor-office slip');

    typeInto(firstTab, '#answer', 'Yes, that is established; the slip is stamped for that evening.');
    press(firstTab, '#send');
    await waitFor(() =>
      textOf(firstTab, '.turn-counter') === 'Turn 2/8' ? firstTab : null,
    );
    const beforeReload = {
      counter: textOf(firstTab, '.turn-counter'),
      question: textOf(firstTab, '.question'),
      transcript: transcriptLines(firstTab),
    };
    expect(beforeReload.transcript).toHaveLength(3);

    // Reload: tear the page down and rebuild it from storage plus the
    // GET snapshot alone.
    app.destroy();
    firstTab.remove();
    const secondTab = document.createElement('div');
    document.body.appendChild(secondTab);
    const reloaded = new ConsultApp(secondTab, { api, storage });
    await reloaded.start();
    await waitFor(() => secondTab.querySelector('.question'));
    expect({
      counter: textOf(secondTab, '.turn-counter'),
      question: textOf(secondTab, '.question'),
      transcript: transcriptLines(secondTab),
    }).toEqual(beforeReload);

    typeInto(secondTab, '#answer', 'Yes, the ledger shows an unsigned overnight entry.');
    press(secondTab, '#send');
    await waitFor(() => secondTab.querySelector('.final-panel'));
    expect(textOf(secondTab, 'h2')).toBe('Final court view');
    expect(textOf(secondTab, '.final-view')).toContain('Upon review of the shuttered vault matter');
    expect(secondTab.querySelector('#export')).not.toBeNull();

    const payload = reloaded.exportPayload();
    expect(payload.state).toBe('Complete');
    expect(payload.session_id).toBe(storage.getItem('lexdiag.session'));
    expect(payload.transcript.length).toBeGreaterThanOrEqual(4);
    reloaded.destroy();
  });

  it('keeps concurrent tabs on independent sessions', async () => {
    const api = new SessionApi({ baseUrl });
    const tabs = [0, 1].map(() => {
      const root = document.createElement('div');
      document.body.appendChild(root);
      return { root, app: new ConsultApp(root, { api, storage: new MemoryStorage() }) };
    });
    for (const tab of tabs) {
      await tab.app.start();
      typeInto(tab.root, '#narrative', showcaseNarrative());
      press(tab.root, '#start');
      await waitFor(() => tab.root.querySelector('.question'));
    }
    const ids = tabs.map((tab) => tab.app.exportPayload().session_id);
    expect(ids[0]).not.toBe(ids[1]);
    tabs.forEach((tab) => tab.app.destroy());
  });
});
