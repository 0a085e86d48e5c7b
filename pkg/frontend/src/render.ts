// HTML-string renderers. Kept free of DOM APIs so tests can assert on the
// produced markup directly; main.ts wires the strings into the page.

import { BandGeometry } from "./charts.js";
import { Control, FormModel, formControls, unanchoredErrors } from "./forms.js";
import { DashboardRow } from "./dashboard.js";

export function esc(value: unknown): string {
  return String(value ?? "")
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function controlInput(control: Control): string {
  const { field, path, value } = control;
  const id = `f-${path.replaceAll(".", "-")}`;
  if (field.kind === "choice") {
    const options = (field.choices ?? [])
      .map(
        (c) =>
          `<option value="${esc(c.value)}"${c.value === value ? " selected" : ""}>` +
          `${esc(c.label)}</option>`,
      )
      .join("");
    return (
      `<select id="${id}" data-path="${esc(path)}">` +
      `<option value=""${value ? "" : " selected"}>(none)</option>${options}</select>`
    );
  }
  if (field.kind === "boolean") {
    return `<input id="${id}" data-path="${esc(path)}" type="checkbox"${value ? " checked" : ""}>`;
  }
  const type = field.kind === "integer" || field.kind === "decimal" ? "number" : "text";
  const step = field.kind === "decimal" ? ` step="any"` : "";
  return (
    `<input id="${id}" data-path="${esc(path)}" type="${type}"${step} ` +
    `value="${esc(value ?? "")}">`
  );
}

export function renderControl(control: Control): string {
  const required = control.field.required ? ' <span class="req">*</span>' : "";
  const errors = control.errors
    .map((e) => `<div class="field-error" data-error-path="${esc(control.path)}">${esc(e)}</div>`)
    .join("");
  return (
    `<div class="control${control.errors.length ? " has-error" : ""}">` +
    `<label for="f-${control.path.replaceAll(".", "-")}">${esc(control.field.name)}${required}</label>` +
    controlInput(control) +
    errors +
    `</div>`
  );
}

export function renderForm(model: FormModel): string {
  const controls = formControls(model);
  const grouped = new Map<string, Control[]>();
  for (const control of controls) {
    const key = `${control.item} — ${control.registryId}[${control.instanceIndex}]`;
    const bucket = grouped.get(key) ?? [];
    bucket.push(control);
    grouped.set(key, bucket);
  }
  const sections = [...grouped.entries()]
    .map(
      ([title, fields]) =>
        `<fieldset><legend>${esc(title)}</legend>${fields.map(renderControl).join("")}</fieldset>`,
    )
    .join("");
  const banner = model.banner
    ? `<div class="banner" role="alert">${esc(model.banner)}</div>`
    : "";
  const formLevel = unanchoredErrors(model, controls)
    .map((e) => `<div class="form-error">${esc(e)}</div>`)
    .join("");
  return `${banner}${formLevel}<form class="config-form">${sections}` +
    `<button type="submit">Save configuration</button></form>`;
}

export function renderDashboard(rows: DashboardRow[]): string {
  if (rows.length === 0) {
    return `<div class="empty-state">No nodes registered yet.</div>`;
  }
  const body = rows
    .map(
      (row) =>
        `<tr data-node="${esc(row.uuid)}" class="status-${row.status}">` +
        `<td><a href="#/node/${esc(row.uuid)}">${esc(row.label)}</a></td>` +
        `<td>${esc(row.device)}</td><td>${esc(row.mode)}</td>` +
        `<td><span class="badge ${row.status}">${row.status}</span></td>` +
        `<td>${row.lastSeen === null ? "never" : new Date(row.lastSeen * 1000).toISOString()}</td>` +
        `<td title="${esc(row.warnings.join("\n"))}">${row.warningCount || ""}</td></tr>`,
    )
    .join("");
  return (
    `<table class="nodes"><thead><tr><th>Node</th><th>Device</th><th>Mode</th>` +
    `<th>Status</th><th>Last seen</th><th>Warnings</th></tr></thead>` +
    `<tbody>${body}</tbody></table>`
  );
}

export function renderChart(geometry: BandGeometry, width: number, height: number): string {
  if (geometry.empty) {
    return `<svg class="chart empty" viewBox="0 0 ${width} ${height}"></svg>`;
  }
  return (
    `<svg class="chart" viewBox="0 0 ${width} ${height}">` +
    `<polygon class="band" points="${geometry.bandPolygon}"></polygon>` +
    `<polyline class="mean" fill="none" points="${geometry.meanLine}"></polyline>` +
    `</svg>`
  );
}
