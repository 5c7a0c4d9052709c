// Console wiring: session decider, tab layout, one coalesced poller per
// endpoint, stale banner when the gateway stops answering.

import { ApiError, GatewayClient } from './api.js';
import { Poller } from './poll.js';
import { renderApprovalQueue } from './views/approvals.js';
import { renderDashboard } from './views/dashboard.js';
import { renderEscalations } from './views/escalations.js';
import { renderJournal, type JournalControls } from './views/journal.js';
import type {
  Anomaly,
  ApprovalRequest,
  Escalation,
  JournalEntry,
  MetricBounds,
  StateResponse,
} from './types.js';

const JOURNAL_KINDS = [
  'telemetry_summary', 'anomaly', 'plan', 'assessment', 'approval_request',
  'approval_decision', 'step_applied', 'step_failed', 'rollback',
  'escalation', 'feedback',
];

const TABS = ['dashboard', 'approvals', 'escalations', 'journal'] as const;
type Tab = (typeof TABS)[number];

export interface AppHandle {
  pollAll: () => Promise<void>;
  stop: () => void;
  setDecider: (name: string) => void;
  showTab: (tab: Tab) => void;
  journalControls: () => JournalControls;
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

export function initApp(root: HTMLElement, baseUrl: string, pollIntervalMs?: number): AppHandle {
  const client = new GatewayClient(baseUrl);

  root.replaceChildren();
  const banner = el('div', 'banner');
  banner.id = 'stale-banner';
  banner.hidden = true;
  root.append(banner);

  const header = el('header', 'topbar');
  header.append(el('span', 'title', 'control plane console'));
  const tickLabel = el('span', 'tick-label', 'tick -');
  tickLabel.id = 'tick-label';
  header.append(tickLabel);
  const deciderInput = el('input', 'decider-input');
  deciderInput.id = 'decider';
  deciderInput.placeholder = 'operator name (required to decide)';
  header.append(deciderInput);
  root.append(header);

  const nav = el('nav', 'tabs');
  const sections = new Map<Tab, HTMLElement>();
  for (const tab of TABS) {
    const button = el('button', 'tab', tab);
    button.dataset.tab = tab;
    button.addEventListener('click', () => showTab(tab));
    nav.append(button);
    const section = el('section', 'view');
    section.id = `view-${tab}`;
    section.hidden = tab !== 'dashboard';
    sections.set(tab, section);
  }
  root.append(nav);
  for (const section of sections.values()) {
    root.append(section);
  }

  function showTab(tab: Tab): void {
    for (const [name, section] of sections) {
      section.hidden = name !== tab;
    }
    for (const button of nav.querySelectorAll('button')) {
      button.classList.toggle('tab-active', button.dataset.tab === tab);
    }
  }
  showTab('dashboard');

  // session decider: captured once, attached to every decision
  let decider = '';
  deciderInput.addEventListener('change', () => {
    decider = deciderInput.value.trim();
  });

  let goals: Record<string, Record<string, MetricBounds>> = {};
  const decisionNotes = new Map<string, string>();

  let latestState: StateResponse | null = null;
  let latestAnomalies: Anomaly[] = [];
  let latestApprovals: ApprovalRequest[] = [];
  let latestEscalations: Escalation[] = [];
  let latestJournal: JournalEntry[] = [];
  let journalControls: JournalControls = { kindFilter: null, fromSeq: 0, pageSize: 200 };

  function redrawDashboard(): void {
    renderDashboard(sections.get('dashboard')!, latestState, latestAnomalies, goals);
    if (latestState) {
      tickLabel.textContent = `tick ${latestState.tick}`;
    }
  }

  function redrawApprovals(): void {
    renderApprovalQueue(sections.get('approvals')!, latestApprovals, {
      onDecision: (requestId, decision) => {
        if (!decider) {
          decisionNotes.set(requestId, 'enter an operator name first');
          redrawApprovals();
          return;
        }
        client
          .decide(requestId, decision, decider)
          .then(() => {
            decisionNotes.set(requestId, `${decision} queued`);
            redrawApprovals();
          })
          .catch((error: unknown) => {
            const message = error instanceof ApiError
              ? `${error.code}: ${error.message}`
              : 'gateway unreachable';
            decisionNotes.set(requestId, message);
            redrawApprovals();
          });
      },
    }, decisionNotes);
  }

  function redrawEscalations(): void {
    renderEscalations(sections.get('escalations')!, latestEscalations, (escalationId) => {
      if (!decider) return;
      client.acknowledge(escalationId, decider).catch(() => undefined);
    });
  }

  function redrawJournal(): void {
    renderJournal(
      sections.get('journal')!,
      latestJournal,
      journalControls,
      JOURNAL_KINDS,
      (controls) => {
        journalControls = controls;
        void journalPoller.tick();
      },
    );
  }

  const statePoller = new Poller(
    () => client.state(),
    (state) => {
      latestState = state;
      redrawDashboard();
    },
    (state) => state.tick,
  );
  const anomalyPoller = new Poller(
    () => client.anomalies(),
    (anomalies) => {
      latestAnomalies = anomalies;
      redrawDashboard();
    },
  );
  const approvalsPoller = new Poller(
    () => client.approvals(),
    (approvals) => {
      for (const request of approvals) {
        if (request.status !== 'pending') {
          decisionNotes.delete(request.request_id);
        }
      }
      latestApprovals = approvals;
      redrawApprovals();
    },
  );
  const escalationsPoller = new Poller(
    () => client.escalations(),
    (escalations) => {
      latestEscalations = escalations;
      redrawEscalations();
    },
  );
  const journalPoller = new Poller(
    () => client.journal(journalControls.fromSeq, journalControls.pageSize),
    (entries) => {
      latestJournal = entries;
      redrawJournal();
    },
  );

  const pollers = [statePoller, anomalyPoller, approvalsPoller, escalationsPoller, journalPoller];

  function updateBanner(): void {
    const anyStale = pollers.some((p) => p.stale);
    banner.hidden = !anyStale;
    if (anyStale) {
      const last = statePoller.lastSuccessAt;
      banner.textContent = last === null
        ? 'gateway unreachable - no data received yet'
        : `gateway unreachable - showing data from tick ${last}`;
    }
  }

  async function pollAll(): Promise<void> {
    await Promise.all(pollers.map((p) => p.tick()));
    updateBanner();
  }

  let timer: ReturnType<typeof setInterval> | null = null;
  void (async () => {
    let interval = pollIntervalMs ?? 1000;
    if (pollIntervalMs === undefined) {
      try {
        const config = await client.config();
        interval = Math.max(100, 1000 * (config.gateway?.poll_interval_s ?? 1.0));
        goals = (config.goals ?? {}) as Record<string, Record<string, MetricBounds>>;
        delete (goals as Record<string, unknown>).priorities;
      } catch {
        // config fetch failing is not fatal; default interval, no bounds
      }
    } else {
      try {
        const config = await client.config();
        goals = (config.goals ?? {}) as Record<string, Record<string, MetricBounds>>;
        delete (goals as Record<string, unknown>).priorities;
      } catch {
        // same: tiles just lose their bound annotations
      }
    }
    await pollAll();
    timer = setInterval(() => void pollAll(), interval);
  })();

  return {
    pollAll,
    stop: () => {
      if (timer !== null) clearInterval(timer);
    },
    setDecider: (name: string) => {
      decider = name.trim();
      deciderInput.value = name;
    },
    showTab,
    journalControls: () => journalControls,
  };
}
