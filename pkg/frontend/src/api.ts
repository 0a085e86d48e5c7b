// Typed client for the meshdb JSON API. Every widget goes through this
// module; no other code talks to the network.

export interface ApiErrorDetail {
  code?: string;
  path?: string;
  message: string;
  module?: string;
}

export interface ApiErrorEnvelope {
  error: { code: string; message: string; details: ApiErrorDetail[] };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public envelope: ApiErrorEnvelope,
  ) {
    super(envelope.error.message);
  }
}

export interface NodeSummary {
  uuid: string;
  created_at: number;
  name: string | null;
  device: string | null;
  mode: string | null;
  last_seen: number | null;
  reachable: boolean;
  warnings: { check: string; message: string }[];
}

export interface StreamMeta {
  id: number;
  tags: Record<string, string>;
  value_type: "numeric" | "graph";
  highest_granularity: string;
  points: number;
}

export interface BucketRecord {
  t: number;
  c: number;
  s: number;
  ss: number;
  m: number;
  l: number;
  u: number;
  d: number;
}

export interface RawPoint {
  t: number;
  v: number | null;
}

export interface DatapointsResponse {
  stream: number;
  granularity: string;
  points: (BucketRecord | RawPoint)[];
}

/**
 * Concurrent fetches per widget may resolve out of order; a stale response
 * (one issued before the latest request) is discarded by sequence number.
 */
export class LatestOnly<T> {
  private seq = 0;

  async run(task: () => Promise<T>): Promise<T | undefined> {
    const mine = ++this.seq;
    const result = await task();
    return mine === this.seq ? result : undefined;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class MeshApi {
  constructor(
    private base = "",
    private fetcher: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetcher(this.base + path, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body as ApiErrorEnvelope);
    }
    return body as T;
  }

  listNodes(): Promise<NodeSummary[]> {
    return this.request("/api/nodes");
  }

  getNode(uuid: string): Promise<NodeSummary> {
    return this.request(`/api/nodes/${uuid}`);
  }

  getConfig(uuid: string): Promise<Record<string, unknown[]>> {
    return this.request(`/api/nodes/${uuid}/config`);
  }

  putConfig(uuid: string, config: unknown): Promise<{ saved: boolean }> {
    return this.request(`/api/nodes/${uuid}/config`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  getState(uuid: string): Promise<{
    monitoring: Record<string, Record<string, unknown>[]>;
    warnings: { check: string; message: string }[];
    last_seen: number | null;
  }> {
    return this.request(`/api/nodes/${uuid}/state`);
  }

  formSchema(point: string): Promise<unknown> {
    return this.request(`/api/form-schema/${point}`);
  }

  applyDefaults(
    uuid: string,
    config: unknown,
    changedFields: string[],
    state: unknown,
  ): Promise<{ config: Record<string, unknown[]>; state: unknown; fired: string[] }> {
    return this.request(`/api/nodes/${uuid}/apply-defaults`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ config, changed_fields: changedFields, state }),
    });
  }

  triggerBuild(uuid: string, platform: string): Promise<{ build_id: string }> {
    return this.request(`/api/nodes/${uuid}/build/${platform}`, { method: "POST" });
  }

  buildStatus(buildId: string): Promise<{ state: string; bundle?: unknown }> {
    return this.request(`/api/builds/${buildId}`);
  }

  listStreams(tags: Record<string, string>): Promise<StreamMeta[]> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(tags)) {
      params.set(`tags.${key}`, value);
    }
    const qs = params.toString();
    return this.request(`/api/streams${qs ? "?" + qs : ""}`);
  }

  datapoints(
    streamId: number,
    granularity: string,
    from: number,
    to: number,
  ): Promise<DatapointsResponse> {
    const params = new URLSearchParams({
      granularity,
      from: String(from),
      to: String(to),
    });
    return this.request(`/api/streams/${streamId}/datapoints?${params}`);
  }
}
