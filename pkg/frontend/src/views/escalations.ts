// Escalations: the loop's handoffs to a human, with acknowledgment (which
// un-freezes the affected service or signature on the controller side).

import type { Escalation } from '../types.js';

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

export function renderEscalations(
  root: HTMLElement,
  escalations: Escalation[],
  onAck: (escalationId: string) => void,
): void {
  root.replaceChildren();
  const open = escalations.filter((e) => !e.acked);
  const done = escalations.filter((e) => e.acked);

  const list = el('div', 'escalations');
  list.id = 'escalations';
  list.append(el('h2', undefined, `escalations (${open.length} open)`));
  if (escalations.length === 0) {
    list.append(el('p', 'empty', 'none'));
  }
  for (const escalation of [...open, ...done]) {
    const row = el('div', escalation.acked ? 'escalation escalation-acked' : 'escalation');
    row.dataset.escalationId = escalation.escalation_id;
    row.append(el('span', 'card-id', escalation.escalation_id));
    row.append(el('span', 'escalation-reason', escalation.reason));
    row.append(el('span', 'escalation-target', `${escalation.signature.kind} @ ${escalation.service_id}`));
    if (escalation.acked) {
      row.append(el('span', 'badge', 'acked'));
    } else {
      const ack = el('button', 'btn btn-ack', 'Acknowledge');
      ack.addEventListener('click', () => onAck(escalation.escalation_id));
      row.append(ack);
    }
    list.append(row);
  }
  root.append(list);
}
