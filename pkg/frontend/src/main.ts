// Single-page operator UI: hash-routed dashboard, per-node config form with
// live defaults, build trigger, and interactive stream charts.

import { LatestOnly, MeshApi, ApiError, DatapointsResponse, StreamMeta } from "./api.js";
import {
  ChartQuery,
  bandFromBuckets,
  bandGeometry,
  makeQuery,
  zoom,
  LADDER,
} from "./charts.js";
import { dashboardRows, fleetCounts } from "./dashboard.js";
import {
  ConfigDocument,
  FormDescriptor,
  FormModel,
  applyServerErrors,
  buildFormModel,
  clearErrors,
  mergeDefaults,
  setField,
} from "./forms.js";
import { renderChart, renderDashboard, renderForm, esc } from "./render.js";

const REFRESH_MS = 10_000;
const api = new MeshApi("");

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

// -- dashboard ---------------------------------------------------------------

const dashboardFetch = new LatestOnly<Awaited<ReturnType<MeshApi["listNodes"]>>>();

async function showDashboard(): Promise<void> {
  const nodes = await dashboardFetch.run(() => api.listNodes());
  if (nodes === undefined) return; // stale response discarded
  const counts = fleetCounts(nodes);
  el("content").innerHTML =
    `<h2>Nodes <small>${counts.online}/${counts.total} online, ` +
    `${counts.warnings} warnings</small></h2>` +
    renderDashboard(dashboardRows(nodes));
}

// -- config form ----------------------------------------------------------------

interface FormSession {
  uuid: string;
  model: FormModel;
  ruleState: unknown;
}

let session: FormSession | null = null;

async function showNode(uuid: string): Promise<void> {
  const [descriptor, config] = await Promise.all([
    api.formSchema("node.config") as Promise<FormDescriptor>,
    api.getConfig(uuid),
  ]);
  session = { uuid, model: buildFormModel(descriptor, config as ConfigDocument), ruleState: null };
  el("content").innerHTML =
    `<h2>Node ${esc(uuid)}</h2>` +
    `<div id="form-root"></div>` +
    `<div class="actions"><button id="build-openwrt">Build firmware bundle (openwrt)</button>` +
    `<span id="build-status"></span></div>`;
  repaintForm();
  el("build-openwrt").addEventListener("click", triggerBuild);
}

function repaintForm(): void {
  if (!session) return;
  const root = el("form-root");
  root.innerHTML = renderForm(session.model);
  root.querySelectorAll<HTMLInputElement | HTMLSelectElement>("[data-path]").forEach((input) => {
    input.addEventListener("change", () => onFieldChange(input));
  });
  root.querySelector("form")?.addEventListener("submit", (event) => {
    event.preventDefault();
    void saveConfig();
  });
}

async function onFieldChange(input: HTMLInputElement | HTMLSelectElement): Promise<void> {
  if (!session) return;
  const path = input.dataset.path!;
  const value =
    input instanceof HTMLInputElement && input.type === "checkbox"
      ? input.checked
      : input instanceof HTMLInputElement && input.type === "number"
        ? input.value === ""
          ? null
          : Number(input.value)
        : input.value || null;
  setField(session.model, path, value);
  try {
    // round-trip: the server evaluates the declarative default rules
    const result = await api.applyDefaults(
      session.uuid,
      session.model.config,
      [path],
      session.ruleState,
    );
    session.ruleState = result.state;
    mergeDefaults(session.model, result.config as ConfigDocument);
    session.model.banner = null;
  } catch (error) {
    session.model.banner = `defaults unavailable: ${String(error)}`;
  }
  repaintForm();
}

async function saveConfig(): Promise<void> {
  if (!session) return;
  try {
    await api.putConfig(session.uuid, session.model.config);
    clearErrors(session.model);
    session.model.banner = "saved";
  } catch (error) {
    if (error instanceof ApiError) {
      applyServerErrors(session.model, error.envelope); // inline, state kept
    } else {
      session.model.banner = `network error: ${String(error)}`;
    }
  }
  repaintForm();
}

async function triggerBuild(): Promise<void> {
  if (!session) return;
  const status = el("build-status");
  try {
    const { build_id } = await api.triggerBuild(session.uuid, "openwrt");
    status.textContent = `build ${build_id}: queued`;
    const poll = window.setInterval(async () => {
      const state = await api.buildStatus(build_id);
      status.textContent = `build ${build_id}: ${state.state}`;
      if (state.state === "done" || state.state === "failed") {
        window.clearInterval(poll);
      }
    }, 500);
  } catch (error) {
    status.textContent =
      error instanceof ApiError ? error.envelope.error.message : String(error);
  }
}

// -- charts ---------------------------------------------------------------------

const chartFetch = new LatestOnly<DatapointsResponse>();
let chartQuery: ChartQuery | null = null;
let chartFinest = 10;

async function showCharts(): Promise<void> {
  const streams = await api.listStreams({});
  const numeric = streams.filter((s) => s.value_type === "numeric" && s.points > 0);
  const options = numeric
    .map((s) => `<option value="${s.id}">${esc(describeStream(s))}</option>`)
    .join("");
  el("content").innerHTML =
    `<h2>Streams</h2><select id="stream-pick">${options}</select>` +
    `<span class="zoom"><button id="zoom-out">−</button><button id="zoom-in">+</button>` +
    `<span id="chart-meta"></span></span>` +
    `<div id="chart-root"></div>`;
  const pick = el("stream-pick") as HTMLSelectElement;
  pick.addEventListener("change", () => void loadChart(numeric));
  el("zoom-in").addEventListener("click", () => void zoomBy(0.25));
  el("zoom-out").addEventListener("click", () => void zoomBy(4));
  if (numeric.length > 0) await loadChart(numeric);
}

function describeStream(s: StreamMeta): string {
  return Object.entries(s.tags)
    .map(([k, v]) => `${k}=${v}`)
    .sort()
    .join(" ");
}

async function loadChart(streams: StreamMeta[]): Promise<void> {
  const pick = el("stream-pick") as HTMLSelectElement;
  const meta = streams.find((s) => s.id === Number(pick.value)) ?? streams[0];
  chartFinest = LADDER.find((l) => l.name === meta.highest_granularity)?.seconds ?? 10;
  const now = Date.now() / 1000;
  chartQuery = makeQuery(meta.id, now - 5 * 86400, now, chartFinest);
  await repaintChart();
}

async function zoomBy(factor: number): Promise<void> {
  if (!chartQuery) return;
  const mid = (chartQuery.fromTs + chartQuery.toTs) / 2;
  const half = ((chartQuery.toTs - chartQuery.fromTs) / 2) * factor;
  chartQuery = zoom(chartQuery, mid - half, mid + half, chartFinest);
  await repaintChart();
}

async function repaintChart(): Promise<void> {
  if (!chartQuery) return;
  const query = chartQuery;
  const response = await chartFetch.run(() =>
    api.datapoints(query.streamId, query.granularity, query.fromTs, query.toTs),
  );
  if (response === undefined) return; // superseded by a newer request
  const band = bandFromBuckets(response.points);
  const geometry = bandGeometry(band, 900, 240, query.fromTs, query.toTs);
  el("chart-root").innerHTML = renderChart(geometry, 900, 240);
  el("chart-meta").textContent =
    ` ${response.granularity}, ${response.points.length} points`;
}

// -- routing ----------------------------------------------------------------------

async function route(): Promise<void> {
  const hash = window.location.hash || "#/dashboard";
  try {
    if (hash.startsWith("#/node/")) {
      await showNode(hash.slice("#/node/".length));
    } else if (hash.startsWith("#/charts")) {
      await showCharts();
    } else {
      await showDashboard();
    }
  } catch (error) {
    el("content").innerHTML = `<div class="banner">${esc(String(error))}</div>`;
  }
}

export function start(): void {
  window.addEventListener("hashchange", () => void route());
  window.setInterval(() => {
    if ((window.location.hash || "#/dashboard").startsWith("#/dashboard")) {
      void showDashboard();
    }
  }, REFRESH_MS);
  void route();
}

if (typeof document !== "undefined" && document.getElementById("content")) {
  start();
}
