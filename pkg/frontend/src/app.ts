// Console wiring: polling queue, decision submission, funnel page.

import { AlreadyDecidedError, ApiClient } from './api.js';
import type { ReviewItem } from './types.js';
import {
  renderBanner,
  renderDecisionPanel,
  renderFunnel,
  renderPriorDecision,
  renderQueue,
} from './views.js';

export interface ConsoleOptions {
  refreshMs?: number;
}

export class ReviewConsole {
  items: ReviewItem[] = [];
  selected: ReviewItem | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    public client: ApiClient,
    public root: HTMLElement,
    private options: ConsoleOptions = {},
  ) {}

  start(): void {
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.options.refreshMs ?? 5000);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    try {
      this.items = await this.client.pending();
      this.render();
    } catch {
      // keep the stale queue visible; no silent staleness
      this.showBanner('Review API unreachable; showing last known queue.', 'error');
    }
  }

  render(): void {
    this.root.replaceChildren();
    this.root.append(renderQueue(this.items, (item) => this.select(item)));
    if (this.selected) {
      const live = this.items.find((i) => i.item_id === this.selected!.item_id);
      if (live) {
        this.root.append(renderDecisionPanel(live, {
          onPreview: (vector) => this.client.score(vector),
          onSubmit: (kind, vector) => void this.submit(live, kind, vector),
        }));
      } else {
        this.selected = null;
      }
    }
  }

  select(item: ReviewItem): void {
    this.selected = item;
    this.render();
  }

  async submit(item: ReviewItem, kind: 'accept' | 'override' | 'approve' | 'reject',
               vector?: string): Promise<void> {
    try {
      await this.client.decide(item.item_id, {
        kind,
        vector,
        analyst: this.client.analyst,
      });
      this.selected = null;
      await this.refresh();
      this.showBanner(`Decision recorded for ${item.cve_id ?? item.key}.`, 'info');
    } catch (error) {
      if (error instanceof AlreadyDecidedError) {
        this.selected = null;
        await this.refresh();
        this.root.append(renderPriorDecision(error.prior));
      } else {
        // network failure: the item stays pending and selected
        this.showBanner('Could not submit decision; item left pending.', 'error');
      }
    }
  }

  async showFunnel(runId: string, container: HTMLElement): Promise<void> {
    try {
      const report = await this.client.getReport(runId);
      container.replaceChildren(renderFunnel(report));
    } catch {
      container.replaceChildren(
        renderBanner(`Could not load report for ${runId}.`, 'error'));
    }
  }

  private showBanner(message: string, tone: 'error' | 'info'): void {
    this.root.querySelectorAll('.banner').forEach((b) => b.remove());
    this.root.append(renderBanner(message, tone));
  }
}

function apiBase(): string {
  const fromGlobal = (window as { VULNTRIAGE_API?: string }).VULNTRIAGE_API;
  if (fromGlobal) return fromGlobal;
  const fromQuery = new URLSearchParams(window.location.search).get('api');
  return fromQuery ?? 'http://127.0.0.1:8470';
}

export function mount(): void {
  const queueRoot = document.getElementById('console');
  const funnelRoot = document.getElementById('funnel');
  const analystInput = document.getElementById('analyst') as HTMLInputElement | null;
  const runInput = document.getElementById('run-id') as HTMLInputElement | null;
  const funnelButton = document.getElementById('load-funnel');
  if (!queueRoot) return;

  const analyst = localStorage.getItem('analyst') ?? 'console';
  if (analystInput) {
    analystInput.value = analyst;
    analystInput.addEventListener('change', () => {
      localStorage.setItem('analyst', analystInput.value);
      consoleApp.client.analyst = analystInput.value;
    });
  }

  const consoleApp = new ReviewConsole(new ApiClient(apiBase(), analyst), queueRoot);
  consoleApp.start();

  if (funnelRoot && runInput && funnelButton) {
    funnelButton.addEventListener('click', () =>
      void consoleApp.showFunnel(runInput.value.trim(), funnelRoot));
  }
}

if (typeof document !== 'undefined' && document.getElementById('console')) {
  mount();
}
