// Service health tiles and the anomaly feed. Every number shown comes
// straight from gateway responses; the view only compares against the goal
// bounds for highlighting, it never recomputes scores or severities.

import type { Anomaly, MetricBounds, ServiceInfo, StateResponse } from '../types.js';

const METRIC_LABELS: Record<string, string> = {
  latency_ms: 'latency ms',
  error_rate: 'error rate',
  cpu_pct: 'cpu %',
  mem_mb: 'mem MB',
  cert_days_remaining: 'cert days',
};

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

function fmt(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(3).replace(/\.?0+$/, '');
}

function outOfBounds(value: number, bounds?: MetricBounds): boolean {
  if (!bounds) return false;
  if (bounds.min !== undefined && value < bounds.min) return true;
  if (bounds.max !== undefined && value > bounds.max) return true;
  return false;
}

export function renderServiceTile(
  serviceId: string,
  info: ServiceInfo,
  goals: Record<string, MetricBounds>,
): HTMLElement {
  const tile = el('div', info.up ? 'tile' : 'tile tile-down');
  tile.dataset.service = serviceId;
  const head = el('div', 'tile-head');
  head.append(el('span', 'tile-name', serviceId));
  head.append(el('span', info.up ? 'badge badge-up' : 'badge badge-down', info.up ? 'up' : 'DOWN'));
  tile.append(head);

  const list = el('dl', 'tile-metrics');
  for (const [metric, label] of Object.entries(METRIC_LABELS)) {
    const value = info.metrics[metric as keyof typeof info.metrics];
    const bounds = goals[metric];
    const dt = el('dt', undefined, label);
    const dd = el('dd', outOfBounds(value, bounds) ? 'metric metric-violating' : 'metric', fmt(value));
    if (bounds) {
      const parts: string[] = [];
      if (bounds.min !== undefined) parts.push(`min ${fmt(bounds.min)}`);
      if (bounds.max !== undefined) parts.push(`max ${fmt(bounds.max)}`);
      dd.title = parts.join(', ');
    }
    list.append(dt, dd);
  }
  tile.append(list);
  if (info.active_faults.length > 0) {
    tile.append(el('div', 'tile-faults', `faults: ${info.active_faults.length}`));
  }
  return tile;
}

export function renderDashboard(
  root: HTMLElement,
  state: StateResponse | null,
  anomalies: Anomaly[],
  goals: Record<string, Record<string, MetricBounds>>,
): void {
  root.replaceChildren();

  const tiles = el('div', 'tiles');
  tiles.id = 'tiles';
  const services = state ? Object.entries(state.services) : [];
  if (services.length === 0) {
    tiles.append(el('p', 'empty', 'no services reporting'));
  }
  for (const [serviceId, info] of services) {
    tiles.append(renderServiceTile(serviceId, info, goals[serviceId] ?? {}));
  }
  root.append(tiles);

  const feed = el('div', 'anomaly-feed');
  feed.id = 'anomaly-feed';
  feed.append(el('h2', undefined, `anomalies (${anomalies.length})`));
  const sorted = [...anomalies].sort((a, b) => b.tick - a.tick);
  if (sorted.length === 0) {
    feed.append(el('p', 'empty', 'none detected'));
  }
  for (const anomaly of sorted) {
    const row = el('div', `anomaly anomaly-${anomaly.severity}`);
    row.dataset.anomalyId = anomaly.id;
    row.append(el('span', 'anomaly-tick', `t${anomaly.tick}`));
    row.append(el('span', 'anomaly-kind', anomaly.signature.kind));
    row.append(el('span', 'anomaly-target', anomaly.signature.target));
    row.append(el('span', `sev sev-${anomaly.severity}`, anomaly.severity));
    const votes = anomaly.votes
      .map((v) => `${v.detector_id}${v.anomalous ? '!' : ''} ${v.score.toFixed(2)}`)
      .join(', ');
    row.title = votes;
    feed.append(row);
  }
  root.append(feed);
}
