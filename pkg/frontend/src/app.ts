// Consultation console: intake form, one-question-at-a-time answer loop,
// final court view. All session state comes from server envelopes; the
// only client-side state is form drafts, the pending-submit flag, and
// the error banner.

import {
  ApiError,
  SessionApi,
  SessionEnvelope,
  TimeoutError,
  UNKNOWN_ANSWER,
} from './api.js';

export interface BannerState {
  message: string;
  canRetry: boolean;
}

export interface UiSessionView {
  envelope: SessionEnvelope | null;
  pendingSubmit: boolean;
  banner: BannerState | null;
}

export interface AppOptions {
  api?: SessionApi;
  baseUrl?: string;
  /** Display cap for the turn counter; the demo service stops at 8. */
  maxTurns?: number;
  pollMs?: number;
  storage?: Storage;
  now?: () => number;
}

const STORAGE_KEY = 'lexdiag.session';

function storageOrNull(explicit?: Storage): Storage | null {
  if (explicit) return explicit;
  try {
    return window.sessionStorage;
  } catch {
    return null;
  }
}

export class ConsultApp {
  private readonly root: HTMLElement;
  private readonly api: SessionApi;
  private readonly maxTurns: number;
  private readonly pollMs: number;
  private readonly storage: Storage | null;

  private view: UiSessionView = { envelope: null, pendingSubmit: false, banner: null };
  private draftNarrative = '';
  private draftAnswer = '';
  private validationMessage: string | null = null;
  private retryAction: (() => void) | null = null;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(root: HTMLElement, options: AppOptions = {}) {
    this.root = root;
    this.api = options.api ?? new SessionApi({ baseUrl: options.baseUrl });
    this.maxTurns = options.maxTurns ?? 8;
    this.pollMs = options.pollMs ?? 1000;
    this.storage = storageOrNull(options.storage);
  }

  /** Restore the tab's session from the server snapshot, or show intake. */
  async start(): Promise<void> {
    const stored = this.storage?.getItem(STORAGE_KEY) ?? null;
    if (!stored) {
      this.render();
      return;
    }
    try {
      this.setEnvelope(await this.api.fetchSnapshot(stored));
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.storage?.removeItem(STORAGE_KEY);
        this.render();
        return;
      }
      this.failWith(err, () => void this.start());
    }
  }

  destroy(): void {
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
    this.pollTimer = null;
  }

  /** The transcript export is the last server envelope, verbatim. */
  exportPayload(): SessionEnvelope {
    if (!this.view.envelope) throw new Error('no session to export');
    return this.view.envelope;
  }

  private setEnvelope(envelope: SessionEnvelope): void {
    this.view = { envelope, pendingSubmit: false, banner: null };
    this.retryAction = null;
    this.render();
    this.schedulePoll();
  }

  private failWith(err: unknown, retry: (() => void) | null): void {
    let banner: BannerState;
    if (err instanceof ApiError && err.status === 503) {
      banner = { message: 'service warming up', canRetry: true };
    } else if (err instanceof ApiError && err.status === 409) {
      banner = { message: 'session already concluded', canRetry: false };
      retry = null;
      this.refreshAfterConflict();
    } else if (err instanceof TimeoutError) {
      banner = { message: 'request timed out; your text is kept below', canRetry: true };
    } else if (err instanceof ApiError) {
      banner = { message: err.detail, canRetry: true };
    } else {
      banner = { message: 'cannot reach the service', canRetry: true };
    }
    this.view = { ...this.view, pendingSubmit: false, banner };
    this.retryAction = banner.canRetry ? retry : null;
    this.render();
  }

  private refreshAfterConflict(): void {
    const id = this.view.envelope?.session_id;
    if (!id) return;
    this.api
      .fetchSnapshot(id)
      .then((envelope) => {
        const banner = this.view.banner;
        this.setEnvelope(envelope);
        this.view = { ...this.view, banner };
        this.render();
      })
      .catch(() => undefined);
  }

  private schedulePoll(): void {
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
    this.pollTimer = null;
    const envelope = this.view.envelope;
    if (!envelope || envelope.state !== 'Deliberating') return;
    this.pollTimer = setTimeout(() => {
      this.api
        .fetchSnapshot(envelope.session_id)
        .then((next) => this.setEnvelope(next))
        .catch((err) => this.failWith(err, () => this.schedulePoll()));
    }, this.pollMs);
  }

  private beginConsultation(): void {
    const narrative = this.draftNarrative;
    if (!narrative.trim()) {
      this.validationMessage = 'Enter the case narrative before starting.';
      this.render();
      return;
    }
    this.validationMessage = null;
    this.view = { ...this.view, pendingSubmit: true, banner: null };
    this.render();
    this.api
      .openSession(narrative)
      .then((envelope) => {
        this.storage?.setItem(STORAGE_KEY, envelope.session_id);
        this.setEnvelope(envelope);
      })
      .catch((err) => this.failWith(err, () => this.beginConsultation()));
  }

  private sendAnswer(text: string): void {
    const envelope = this.view.envelope;
    if (!envelope || this.view.pendingSubmit) return;
    this.view = { ...this.view, pendingSubmit: true, banner: null };
    this.render();
    this.api
      .submitAnswer(envelope.session_id, text)
      .then((next) => {
        this.draftAnswer = '';
        this.setEnvelope(next);
      })
      .catch((err) => this.failWith(err, () => this.sendAnswer(text)));
  }

  private resetToIntake(): void {
    this.destroy();
    this.storage?.removeItem(STORAGE_KEY);
    this.view = { envelope: null, pendingSubmit: false, banner: null };
    this.draftNarrative = '';
    this.draftAnswer = '';
    this.validationMessage = null;
    this.render();
  }

  private exportTranscript(): void {
    const payload = JSON.stringify(this.exportPayload(), null, 2);
    if (typeof URL.createObjectURL !== 'function') return;
    const blob = new Blob([payload], { type: 'application/json' });
    const href = URL.createObjectURL(blob);
    const anchor = document.createElement('a');
    anchor.href = href;
    anchor.download = `consultation-${this.view.envelope?.session_id}.json`;
    anchor.click();
    URL.revokeObjectURL(href);
  }

  // ---- rendering ----------------------------------------------------

  private render(): void {
    const frag = document.createDocumentFragment();
    frag.appendChild(this.renderHeader());
    if (this.view.banner) frag.appendChild(this.renderBanner(this.view.banner));
    const envelope = this.view.envelope;
    if (!envelope) {
      frag.appendChild(this.renderIntake());
    } else if (envelope.state === 'AwaitingAnswer') {
      frag.appendChild(this.renderQuestion(envelope));
      frag.appendChild(this.renderTranscript(envelope));
    } else if (envelope.state === 'Deliberating') {
      frag.appendChild(this.renderDeliberating(envelope));
      frag.appendChild(this.renderTranscript(envelope));
    } else {
      frag.appendChild(this.renderFinal(envelope));
      frag.appendChild(this.renderTranscript(envelope));
    }
    this.root.replaceChildren(frag);
  }

  private renderHeader(): HTMLElement {
    const header = document.createElement('header');
    const title = document.createElement('h1');
    title.textContent = 'Consultation console';
    header.appendChild(title);
    return header;
  }

  private renderBanner(banner: BannerState): HTMLElement {
    const box = document.createElement('div');
    box.className = 'banner';
    const text = document.createElement('span');
    text.className = 'banner-message';
    text.textContent = banner.message;
    box.appendChild(text);
    if (banner.canRetry && this.retryAction) {
      const retry = document.createElement('button');
      retry.className = 'banner-retry';
      retry.textContent = 'Retry';
      retry.addEventListener('click', () => {
        const action = this.retryAction;
        this.view = { ...this.view, banner: null };
        this.retryAction = null;
        action?.();
      });
      box.appendChild(retry);
    }
    const dismiss = document.createElement('button');
    dismiss.className = 'banner-dismiss';
    dismiss.textContent = 'Dismiss';
    dismiss.addEventListener('click', () => {
      this.view = { ...this.view, banner: null };
      this.retryAction = null;
      this.render();
    });
    box.appendChild(dismiss);
    return box;
  }

  private renderIntake(): HTMLElement {
    const section = document.createElement('section');
    section.className = 'intake';
    const label = document.createElement('label');
    label.htmlFor = 'narrative';
    label.textContent = 'Case narrative';
    section.appendChild(label);
    const box = document.createElement('textarea');
    box.id = 'narrative';
    box.rows = 8;
    box.placeholder = 'Describe the case as the client tells it.';
    box.value = this.draftNarrative;
    box.disabled = this.view.pendingSubmit;
    box.addEventListener('input', () => {
      this.draftNarrative = box.value;
      this.validationMessage = null;
    });
    section.appendChild(box);
    if (this.validationMessage) {
      const note = document.createElement('p');
      note.className = 'validation';
      note.textContent = this.validationMessage;
      section.appendChild(note);
    }
    const button = document.createElement('button');
    button.id = 'start';
    button.textContent = this.view.pendingSubmit ? 'Starting.' : 'Begin consultation';
    button.disabled = this.view.pendingSubmit;
    button.addEventListener('click', () => this.beginConsultation());
    section.appendChild(button);
    return section;
  }

  private renderQuestion(envelope: SessionEnvelope): HTMLElement {
    const section = document.createElement('section');
    section.className = 'question-panel';
    const counter = document.createElement('p');
    counter.className = 'turn-counter';
    counter.textContent = `Turn ${envelope.turn}/${this.maxTurns}`;
    section.appendChild(counter);
    const question = document.createElement('p');
    question.className = 'question';
    question.textContent = envelope.question ?? '';
    section.appendChild(question);
    const box = document.createElement('textarea');
    box.id = 'answer';
    box.rows = 4;
    box.placeholder = 'Your answer';
    box.value = this.draftAnswer;
    box.disabled = this.view.pendingSubmit;
    box.addEventListener('input', () => {
      this.draftAnswer = box.value;
    });
    section.appendChild(box);
    const send = document.createElement('button');
    send.id = 'send';
    send.textContent = this.view.pendingSubmit ? 'Sending.' : 'Send answer';
    send.disabled = this.view.pendingSubmit;
    send.addEventListener('click', () => this.sendAnswer(this.draftAnswer));
    section.appendChild(send);
    const unknown = document.createElement('button');
    unknown.id = 'dont-know';
    unknown.textContent = UNKNOWN_ANSWER;
    unknown.disabled = this.view.pendingSubmit;
    unknown.addEventListener('click', () => this.sendAnswer(UNKNOWN_ANSWER));
    section.appendChild(unknown);
    return section;
  }

  private renderDeliberating(envelope: SessionEnvelope): HTMLElement {
    const section = document.createElement('section');
    section.className = 'deliberating';
    const note = document.createElement('p');
    note.textContent = `Deliberating on turn ${envelope.turn}; refreshing every ${this.pollMs / 1000}s.`;
    section.appendChild(note);
    return section;
  }

  private renderFinal(envelope: SessionEnvelope): HTMLElement {
    const section = document.createElement('section');
    section.className = 'final-panel';
    const heading = document.createElement('h2');
    heading.textContent =
      envelope.state === 'Complete' ? 'Final court view' : 'Session ended without a verdict';
    section.appendChild(heading);
    if (envelope.final_view) {
      const view = document.createElement('pre');
      view.className = 'final-view';
      view.textContent = envelope.final_view;
      section.appendChild(view);
    }
    const exportButton = document.createElement('button');
    exportButton.id = 'export';
    exportButton.textContent = 'Export transcript (JSON)';
    exportButton.addEventListener('click', () => this.exportTranscript());
    section.appendChild(exportButton);
    const reset = document.createElement('button');
    reset.id = 'new-consultation';
    reset.textContent = 'New consultation';
    reset.addEventListener('click', () => this.resetToIntake());
    section.appendChild(reset);
    return section;
  }

  private renderTranscript(envelope: SessionEnvelope): HTMLElement {
    const section = document.createElement('section');
    section.className = 'transcript-panel';
    const heading = document.createElement('h3');
    heading.textContent = 'Transcript';
    section.appendChild(heading);
    const list = document.createElement('ol');
    list.className = 'transcript';
    for (const entry of envelope.transcript) {
      const item = document.createElement('li');
      item.className = `entry entry-${entry.role}`;
      const role = document.createElement('strong');
      role.textContent = entry.role;
      item.appendChild(role);
      item.appendChild(document.createTextNode(' ' + entry.text));
      list.appendChild(item);
    }
    section.appendChild(list);
    return section;
  }
}
