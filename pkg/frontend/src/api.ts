// Thin typed client for the node API. All authorization stays server-side:
// the console only chooses which buttons to draw, the node decides what any
// account may actually do.

import type {
  Account,
  ItemView,
  ProvenanceReport,
  RoleFlags,
  TelemetryView,
  TxResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class NodeUnreachable extends Error {}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    } catch (err) {
      throw new NodeUnreachable(String(err));
    }
    if (!resp.ok) {
      throw Object.assign(new Error(`GET ${path} -> ${resp.status}`), {
        status: resp.status,
        body: await resp.json().catch(() => ({})),
      });
    }
    return (await resp.json()) as T;
  }

  accounts(): Promise<Account[]> {
    return this.get("/accounts");
  }

  roles(address: string): Promise<RoleFlags & { address: string }> {
    return this.get(`/roles/${address}`);
  }

  item(upc: number): Promise<ItemView> {
    return this.get(`/items/${upc}`);
  }

  provenance(upc: number): Promise<ProvenanceReport> {
    return this.get(`/items/${upc}/provenance`);
  }

  telemetry(sku: string): Promise<TelemetryView> {
    return this.get(`/telemetry/${encodeURIComponent(sku)}`);
  }

  head(): Promise<{ height: number }> {
    return this.get("/chain/head");
  }

  async submit(operation: string, account: string, args: Record<string, unknown>): Promise<TxResponse> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}/tx/${operation}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ account, args }),
      });
    } catch (err) {
      throw new NodeUnreachable(String(err));
    }
    const body = await resp.json();
    return resp.ok ? { ok: true, body } : { ok: false, status: resp.status, body };
  }
}
