// DOM builders for the three console panes. Pure functions of their
// inputs plus callback hooks; all numbers shown come from API payloads.

import type {
  ReviewItem,
  RunReport,
  ScorePreview,
} from './types.js';
import { FUNNEL_ROWS, METRICS, parseVectorString } from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBanner(message: string, tone: 'error' | 'info'): HTMLElement {
  const banner = el('div', `banner banner-${tone}`, message);
  banner.setAttribute('role', 'alert');
  return banner;
}

export function renderQueue(
  items: ReviewItem[],
  onSelect: (item: ReviewItem) => void,
): HTMLElement {
  const container = el('section', 'queue');
  container.append(el('h2', undefined, 'Pending review'));
  if (items.length === 0) {
    container.append(el('p', 'empty-state', 'Nothing waiting on review.'));
    return container;
  }
  const list = el('ul', 'queue-list');
  for (const item of items) {
    const row = el('li', 'queue-row');
    row.dataset.itemId = item.item_id;
    row.append(el('span', 'queue-kind', item.kind));
    row.append(el('span', 'queue-cve', item.cve_id ?? '(no CVE)'));
    const prediction = item.payload.prediction;
    if (prediction) {
      row.append(el('span', 'confidence-badge',
        `min conf ${prediction.min_confidence.toFixed(3)}`));
    }
    row.append(el('span', 'queue-run', item.run_id));
    row.addEventListener('click', () => onSelect(item));
    list.append(row);
  }
  container.append(list);
  return container;
}

export interface DecisionHooks {
  onPreview: (vector: string) => Promise<ScorePreview>;
  onSubmit: (kind: 'accept' | 'override' | 'approve' | 'reject',
             vector?: string) => void;
}

export function renderDecisionPanel(item: ReviewItem, hooks: DecisionHooks): HTMLElement {
  const panel = el('section', 'decision');
  panel.dataset.itemId = item.item_id;
  panel.append(el('h2', undefined, `${item.cve_id ?? item.key} — ${item.kind}`));

  if (item.kind === 'prediction_override') {
    renderPredictionForm(panel, item, hooks);
  } else {
    renderApprovalForm(panel, item, hooks);
  }
  return panel;
}

function renderPredictionForm(panel: HTMLElement, item: ReviewItem, hooks: DecisionHooks) {
  const prediction = item.payload.prediction;
  if (!prediction) return;
  panel.append(el('p', 'description', item.payload.description ?? ''));
  panel.append(el('p', 'predicted-vector', `Predicted: ${prediction.vector}`));

  const current = parseVectorString(prediction.vector);
  const form = el('div', 'vector-form');
  const selects = new Map<string, HTMLSelectElement>();
  for (const [metric, values] of METRICS) {
    const label = el('label', 'metric-label', `${metric} `);
    const select = document.createElement('select');
    select.name = metric;
    for (const value of values) {
      const option = document.createElement('option');
      option.value = value;
      option.textContent = value;
      if (current[metric] === value) option.selected = true;
      select.append(option);
    }
    selects.set(metric, select);
    label.append(select);
    form.append(label);
  }
  panel.append(form);

  const preview = el('p', 'score-preview', 'score: …');
  panel.append(preview);

  const currentVector = () => {
    const values: Record<string, string> = {};
    for (const [metric, select] of selects) values[metric] = select.value;
    return METRICS.map(([m]) => `${m}:${values[m]}`).join('/');
  };

  const refreshPreview = async () => {
    try {
      const score = await hooks.onPreview(`CVSS:3.1/${currentVector()}`);
      preview.textContent = `score: ${score.base_score} (${score.severity})`;
      preview.dataset.score = String(score.base_score);
    } catch {
      preview.textContent = 'score: unavailable';
      delete preview.dataset.score;
    }
  };
  for (const select of selects.values()) {
    select.addEventListener('change', () => void refreshPreview());
  }
  void refreshPreview();

  const accept = el('button', 'accept-btn', 'Accept prediction');
  accept.addEventListener('click', () => hooks.onSubmit('accept'));
  const override = el('button', 'override-btn', 'Submit override');
  override.addEventListener('click', () =>
    hooks.onSubmit('override', `CVSS:3.1/${currentVector()}`));
  panel.append(accept, override);
}

function renderApprovalForm(panel: HTMLElement, item: ReviewItem, hooks: DecisionHooks) {
  const rec = item.payload.recommendation;
  if (!rec) return;
  panel.append(el('p', 'rec-action', rec.action));
  panel.append(el('p', 'rec-source', `source: ${rec.source}`));
  const approve = el('button', 'approve-btn', 'Approve');
  approve.addEventListener('click', () => hooks.onSubmit('approve'));
  const reject = el('button', 'reject-btn', 'Reject (fall back to template)');
  reject.addEventListener('click', () => hooks.onSubmit('reject'));
  panel.append(approve, reject);
}

export function renderPriorDecision(prior: { kind: string; analyst: string }): HTMLElement {
  // an AlreadyDecided response is information, not an error
  return renderBanner(
    `Already decided: ${prior.kind} by ${prior.analyst}.`, 'info');
}

export function renderFunnel(report: RunReport): HTMLElement {
  const container = el('section', 'funnel');
  container.append(el('h2', undefined, `Run ${report.run_id} (${report.status})`));
  const table = el('table', 'funnel-table');
  for (const [label, field] of FUNNEL_ROWS) {
    const row = el('tr');
    row.append(el('td', 'funnel-label', label));
    const cell = el('td', 'funnel-value', String(report.counts[field]));
    cell.dataset.field = field;
    row.append(cell);
    table.append(row);
  }
  container.append(table);

  const reductions = el('ul', 'reductions');
  for (const [name, pct] of Object.entries(report.reductions)) {
    // percentages come from the report, never recomputed here
    const entry = el('li', 'reduction', `${name.replaceAll('_', ' ')}: ${pct}%`);
    entry.dataset.name = name;
    entry.dataset.pct = String(pct);
    reductions.append(entry);
  }
  container.append(reductions);
  container.append(el('p', 'manifest', `manifest ${report.manifest_digest}`));
  return container;
}
