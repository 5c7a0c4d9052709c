// The approval queue: pending cards with the full risk breakdown (A vs
// alpha, per-step classes) and Approve/Reject actions; decided requests
// move to a history list, expired ones carry a badge.

import type { ApprovalRequest } from '../types.js';

export interface ApprovalHandlers {
  onDecision: (requestId: string, decision: 'approved' | 'rejected') => void;
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

export function renderApprovalCard(
  request: ApprovalRequest,
  handlers: ApprovalHandlers,
): HTMLElement {
  const card = el('div', 'card approval-card');
  card.dataset.requestId = request.request_id;

  const head = el('div', 'card-head');
  head.append(el('span', 'card-id', request.request_id));
  head.append(el('span', 'card-sig', `${request.signature.kind} @ ${request.signature.target}`));
  head.append(el('span', 'card-tick', `requested t${request.requested_tick}`));
  card.append(head);

  const gate = el('div', 'gate-line');
  const a = request.assessment.A;
  const alpha = request.assessment.alpha;
  gate.append(el('span', 'gate-sum', `A = ${a}`));
  gate.append(el('span', 'gate-alpha', `alpha = ${alpha}`));
  gate.append(el('span', request.assessment.gated ? 'badge badge-gated' : 'badge', request.assessment.gated ? 'gated' : 'ungated'));
  card.append(gate);

  const steps = el('ol', 'steps');
  for (const step of request.plan?.steps ?? []) {
    const item = el('li', `step step-${step.risk_class.toLowerCase()}`);
    item.append(el('span', 'step-kind', step.action_kind));
    item.append(el('span', 'step-target', step.target));
    const risk = step.risk_subtype
      ? `${step.risk_class}/${step.risk_subtype} w=${step.weight}`
      : step.risk_class;
    item.append(el('span', 'step-risk', risk));
    steps.append(item);
  }
  card.append(steps);

  const actions = el('div', 'actions');
  const approve = el('button', 'btn btn-approve', 'Approve');
  approve.dataset.action = 'approve';
  approve.addEventListener('click', () => handlers.onDecision(request.request_id, 'approved'));
  const reject = el('button', 'btn btn-reject', 'Reject');
  reject.dataset.action = 'reject';
  reject.addEventListener('click', () => handlers.onDecision(request.request_id, 'rejected'));
  actions.append(approve, reject);
  card.append(actions);

  const note = el('div', 'card-note');
  note.dataset.role = 'note';
  card.append(note);
  return card;
}

export function renderApprovalQueue(
  root: HTMLElement,
  requests: ApprovalRequest[],
  handlers: ApprovalHandlers,
  notes: Map<string, string>,
): void {
  root.replaceChildren();
  const pending = requests.filter((r) => r.status === 'pending');
  const decided = requests.filter((r) => r.status !== 'pending');

  const queue = el('div', 'approval-queue');
  queue.id = 'approval-queue';
  queue.append(el('h2', undefined, `pending approvals (${pending.length})`));
  if (pending.length === 0) {
    queue.append(el('p', 'empty', 'queue is empty'));
  }
  for (const request of pending) {
    const card = renderApprovalCard(request, handlers);
    const note = notes.get(request.request_id);
    if (note) {
      const slot = card.querySelector('[data-role=note]') as HTMLElement;
      slot.textContent = note;
      slot.classList.add('card-note-error');
    }
    queue.append(card);
  }
  root.append(queue);

  const history = el('div', 'approval-history');
  history.id = 'approval-history';
  history.append(el('h2', undefined, 'history'));
  for (const request of decided.sort((x, y) => (y.decided_tick ?? 0) - (x.decided_tick ?? 0))) {
    const row = el('div', 'history-row');
    row.dataset.requestId = request.request_id;
    row.append(el('span', 'card-id', request.request_id));
    row.append(el('span', `badge badge-${request.status}`, request.status));
    if (request.decider) {
      row.append(el('span', 'history-decider', request.decider));
    }
    if (request.decided_tick !== null) {
      row.append(el('span', 'history-tick', `t${request.decided_tick}`));
    }
    history.append(row);
  }
  root.append(history);
}
