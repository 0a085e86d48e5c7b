// Node dashboard: fleet overview with reachability and compliance state.

import type { NodeSummary } from "./api.js";

export interface DashboardRow {
  uuid: string;
  label: string;
  device: string;
  mode: string;
  status: "online" | "offline" | "never-seen";
  lastSeen: number | null;
  warningCount: number;
  warnings: string[];
}

export function dashboardRow(node: NodeSummary): DashboardRow {
  return {
    uuid: node.uuid,
    label: node.name ?? node.uuid.slice(0, 8),
    device: node.device ?? "-",
    mode: node.mode ?? "-",
    status: node.last_seen === null ? "never-seen" : node.reachable ? "online" : "offline",
    lastSeen: node.last_seen,
    warningCount: node.warnings.length,
    warnings: node.warnings.map((w) => `${w.check}: ${w.message}`),
  };
}

export function dashboardRows(nodes: NodeSummary[]): DashboardRow[] {
  return nodes.map(dashboardRow).sort((a, b) => a.label.localeCompare(b.label));
}

export function fleetCounts(nodes: NodeSummary[]): {
  total: number;
  online: number;
  offline: number;
  warnings: number;
} {
  const rows = nodes.map(dashboardRow);
  return {
    total: rows.length,
    online: rows.filter((r) => r.status === "online").length,
    offline: rows.filter((r) => r.status !== "online").length,
    warnings: rows.reduce((acc, r) => acc + r.warningCount, 0),
  };
}
