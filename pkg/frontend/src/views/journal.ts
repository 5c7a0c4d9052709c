// Decision-trace viewer: seq-ordered entries with kind filtering and
// from_seq pagination; plan entries expand to their steps, and each plan's
// assessment is shown with it when present in the loaded page.

import type { JournalEntry } from '../types.js';

export interface JournalControls {
  kindFilter: string | null;
  fromSeq: number;
  pageSize: number;
}

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

function summarize(entry: JournalEntry): string {
  const p = entry.payload;
  switch (entry.kind) {
    case 'anomaly': {
      const sig = p.signature as { kind: string; target: string };
      return `${sig.kind} @ ${sig.target} (${p.severity})`;
    }
    case 'plan':
      return `${p.plan_id}${p.selected ? ' [selected]' : ''}`;
    case 'assessment':
      return `${p.plan_id} A=${p.A} alpha=${p.alpha} ${p.gated ? 'GATED' : 'ungated'}`;
    case 'approval_request':
      return `${p.request_id} for ${p.plan_id}`;
    case 'approval_decision':
      return `${p.request_id} ${p.decision}${p.decider ? ` by ${p.decider}` : ''}`;
    case 'step_applied':
    case 'step_failed':
      return `${p.action_kind} @ ${p.target} (${p.plan_id})`;
    case 'rollback':
      return `plan ${p.plan_id} after ${p.failed_step}`;
    case 'escalation':
      return `${p.escalation_id}: ${p.reason} @ ${p.service_id}`;
    case 'feedback':
      return String(p.event ?? '');
    case 'telemetry_summary': {
      const window = p.window as [number, number];
      return `window [${window[0]}, ${window[1]})`;
    }
    default:
      return '';
  }
}

function renderPlanDetails(entry: JournalEntry, assessments: Map<string, JournalEntry>): HTMLElement {
  const details = el('div', 'entry-details');
  const steps = entry.payload.steps as Array<Record<string, unknown>>;
  const list = el('ol', 'steps');
  for (const step of steps) {
    const risk = step.risk_subtype ? `${step.risk_class}/${step.risk_subtype}` : step.risk_class;
    list.append(el('li', 'step', `${step.action_kind} @ ${step.target} [${risk}]`));
  }
  details.append(list);
  const assessment = assessments.get(String(entry.payload.plan_id));
  if (assessment) {
    details.append(el('div', 'entry-assessment', summarize(assessment)));
  }
  return details;
}

export function renderJournal(
  root: HTMLElement,
  entries: JournalEntry[],
  controls: JournalControls,
  kinds: string[],
  onControls: (controls: JournalControls) => void,
): void {
  root.replaceChildren();
  const bar = el('div', 'journal-bar');

  const filter = el('select', 'kind-filter');
  filter.id = 'kind-filter';
  const all = el('option', undefined, 'all kinds');
  all.value = '';
  filter.append(all);
  for (const kind of kinds) {
    const option = el('option', undefined, kind);
    option.value = kind;
    filter.append(option);
  }
  filter.value = controls.kindFilter ?? '';
  filter.addEventListener('change', () =>
    onControls({ ...controls, kindFilter: filter.value || null, fromSeq: 0 }),
  );
  bar.append(filter);

  const older = el('button', 'btn', 'newer');
  older.id = 'page-back';
  older.disabled = controls.fromSeq === 0;
  older.addEventListener('click', () =>
    onControls({ ...controls, fromSeq: Math.max(0, controls.fromSeq - controls.pageSize) }),
  );
  const newer = el('button', 'btn', 'older');
  newer.id = 'page-next';
  newer.addEventListener('click', () =>
    onControls({ ...controls, fromSeq: controls.fromSeq + controls.pageSize }),
  );
  bar.append(older, newer);
  bar.append(el('span', 'page-label', `from seq ${controls.fromSeq}`));
  root.append(bar);

  const assessments = new Map<string, JournalEntry>();
  for (const entry of entries) {
    if (entry.kind === 'assessment') {
      assessments.set(String(entry.payload.plan_id), entry);
    }
  }

  const visible = controls.kindFilter
    ? entries.filter((e) => e.kind === controls.kindFilter)
    : entries;

  const list = el('div', 'journal-list');
  list.id = 'journal-list';
  if (visible.length === 0) {
    list.append(el('p', 'empty', 'no entries'));
  }
  for (const entry of visible) {
    const row = el('div', `entry entry-${entry.kind}`);
    row.dataset.seq = String(entry.seq);
    row.dataset.kind = entry.kind;
    const head = el('div', 'entry-head');
    head.append(el('span', 'entry-seq', `#${entry.seq}`));
    head.append(el('span', 'entry-cycle', `c${entry.cycle}`));
    head.append(el('span', 'entry-kind', entry.kind));
    head.append(el('span', 'entry-summary', summarize(entry)));
    if (entry.outcome !== 'n/a') {
      head.append(el('span', `badge badge-${entry.outcome}`, entry.outcome));
    }
    row.append(head);
    if (entry.kind === 'plan') {
      const details = renderPlanDetails(entry, assessments);
      details.hidden = true;
      head.classList.add('expandable');
      head.addEventListener('click', () => {
        details.hidden = !details.hidden;
      });
      row.append(details);
    }
    list.append(row);
  }
  root.append(list);
}
