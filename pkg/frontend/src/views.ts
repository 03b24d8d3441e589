// Pure view layer: which actions a session may see, and HTML fragments for
// the dashboard, transaction results and the provenance timeline. Keeping
// these as string -> string functions makes the exact button sets and the
// verdict rendering directly testable.

import type {
  CustodyEntry,
  EventView,
  ItemView,
  ProvenanceReport,
  RoleFlags,
  RoleName,
  TelemetryView,
  TxResponse,
} from "./types.js";

export interface ActionDef {
  label: string;
  operation: string;
  needsItemArgs?: boolean; // produce takes sku/drugName/upc, the rest upc only
}

export const ROLE_ACTIONS: Record<RoleName, ActionDef[]> = {
  manufacturer: [
    { label: "Produce Item By Manufacturer", operation: "produceItemByManufacturer", needsItemArgs: true },
    { label: "Sell Item By Manufacturer", operation: "sellItemByManufacturer" },
    { label: "Ship Item By Manufacturer", operation: "shippedItemByManufacturer" },
  ],
  distributor: [
    { label: "Purchase Item By Distributor", operation: "purchaseItemByDistributor" },
    { label: "Received Item By Distributor", operation: "receivedItemByDistributor" },
    { label: "Processed Item By Distributor", operation: "processedItemByDistributor" },
    { label: "Package Item By Distributor", operation: "packageItemByDistributor" },
    { label: "Sell Item By Distributor", operation: "sellItemByDistributor" },
    { label: "Shipped Item By Distributor", operation: "shippedItemByDistributor" },
  ],
  retailer: [
    { label: "Purchase Item By Retailer", operation: "purchaseItemByRetailer" },
    { label: "Received Item By Retailer", operation: "receivedItemByRetailer" },
    { label: "Sell Item By Retailer", operation: "sellItemByRetailer" },
  ],
  consumer: [
    { label: "Purchase Item By Consumer", operation: "purchaseItemByConsumer" },
  ],
};

// Every session gets these read-only actions regardless of role.
export const UNIVERSAL_ACTIONS = ["Fetch Item Details", "Verify Authenticity of Product"];

const ROLE_ORDER: RoleName[] = ["manufacturer", "distributor", "retailer", "consumer"];

export function actionsForRoles(roles: RoleFlags): ActionDef[] {
  const out: ActionDef[] = [];
  for (const role of ROLE_ORDER) {
    if (roles[role]) {
      out.push(...ROLE_ACTIONS[role]);
    }
  }
  return out;
}

export function visibleButtonLabels(roles: RoleFlags): string[] {
  return [...actionsForRoles(roles).map((a) => a.label), ...UNIVERSAL_ACTIONS];
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface Session {
  account: string;
  address: string;
  roles: RoleFlags;
}

export function renderActionPanel(session: Session): string {
  const held = ROLE_ORDER.filter((r) => session.roles[r]);
  const roleLine = held.length ? held.join(", ") : "no role";
  const buttons = actionsForRoles(session.roles)
    .map(
      (a) =>
        `<button class="action" data-op="${a.operation}"` +
        `${a.needsItemArgs ? ' data-produce="1"' : ""}>${escapeHtml(a.label)}</button>`,
    )
    .join("\n");
  const universal = UNIVERSAL_ACTIONS.map(
    (label) => `<button class="action universal" data-universal="${escapeHtml(label)}">${escapeHtml(label)}</button>`,
  ).join("\n");
  return `<div class="session">Acting as <strong>${escapeHtml(session.account)}</strong> ` +
    `<code>${escapeHtml(session.address)}</code> (${escapeHtml(roleLine)})</div>
<div class="actions">
${buttons}
${universal}
</div>`;
}

export function renderTxResult(response: TxResponse): string {
  if (response.ok) {
    const event = response.body.events[0];
    if (!event) {
      return `<div class="result ok">Accepted in block ${response.body.outcome.blockHeight}</div>`;
    }
    return `<div class="result ok">Mined event <strong>${escapeHtml(event.name)}</strong> ` +
      `(upc=${event.upc}) in block ${event.blockHeight}</div>`;
  }
  const { body } = response;
  const modifier = body.kind ? ` <code class="modifier">${escapeHtml(body.kind)}</code>` : "";
  const message = body.message ? `: ${escapeHtml(body.message)}` : "";
  return `<div class="result error">Rejected by the node — ${escapeHtml(body.error)}${modifier}${message}</div>`;
}

export function renderConnectionBanner(baseUrl: string): string {
  return `<div class="banner offline">Cannot reach the node at ${escapeHtml(baseUrl)} — retrying…</div>`;
}

export function renderItemDetails(item: ItemView): string {
  const parties = [
    ["Owner", item.ownerID],
    ["Origin manufacturer", item.originManufacturerID],
    ["Distributor", item.distributorID],
    ["Retailer", item.retailerID],
    ["Consumer", item.consumerID],
  ]
    .filter(([, v]) => v)
    .map(([k, v]) => `<li>${k}: <code>${escapeHtml(v as string)}</code></li>`)
    .join("\n");
  return `<div class="item">
<h3>${escapeHtml(item.drugName)} — UPC ${item.upc} (SKU ${escapeHtml(item.sku)})</h3>
<p>State <strong>${escapeHtml(item.state.name)}</strong> (${item.state.value})</p>
<ul>${parties}</ul>
</div>`;
}

function verdictBadge(report: ProvenanceReport): string {
  if (report.authentic) {
    return `<div class="verdict authentic">AUTHENTIC</div>`;
  }
  const height = report.chain.firstBadHeight;
  const where = height === null ? "" : ` — ledger integrity fails at height ${height}`;
  return `<div class="verdict counterfeit">COUNTERFEIT RISK${where}</div>`;
}

function timeline(events: EventView[]): string {
  const rows = events
    .map(
      (e) =>
        `<li class="step"><span class="event">${escapeHtml(e.name)}</span>` +
        ` <span class="block">block ${e.blockHeight}</span></li>`,
    )
    .join("\n");
  return `<ol class="timeline">\n${rows}\n</ol>`;
}

function custodyChain(custody: CustodyEntry[]): string {
  const hops = custody
    .map(
      (c) =>
        `<span class="hop">${escapeHtml(c.role)} <code>${escapeHtml(c.address)}</code>` +
        `${c.sinceBlock === null ? "" : ` (block ${c.sinceBlock})`}</span>`,
    )
    .join(" → ");
  return `<div class="custody">${hops}</div>`;
}

function telemetryPanel(telemetry: TelemetryView): string {
  const temp = telemetry.temperature;
  const hum = telemetry.humidity;
  const lat = telemetry.latitude;
  const lng = telemetry.longitude;
  const parts: string[] = [];
  if (temp) parts.push(`temperature ${temp.value.toFixed(2)} °C`);
  if (hum) parts.push(`humidity ${hum.value.toFixed(2)} %`);
  if (lat && lng) parts.push(`position ${lat.value.toFixed(6)}, ${lng.value.toFixed(6)}`);
  if (!parts.length) {
    return `<div class="telemetry none">No oracle-delivered telemetry yet</div>`;
  }
  return `<div class="telemetry">Latest telemetry: ${parts.join(" · ")}</div>`;
}

export function renderProvenance(report: ProvenanceReport, telemetry: TelemetryView): string {
  const anomalies = report.anomalies.length
    ? `<ul class="anomalies">${report.anomalies
        .map((a) => `<li>${escapeHtml(a)}</li>`)
        .join("\n")}</ul>`
    : "";
  const stateLine = report.state
    ? `<p>Current state <strong>${escapeHtml(report.state.name)}</strong> (${report.state.value})</p>`
    : "";
  return `<div class="provenance">
<h3>Provenance of UPC ${report.upc}</h3>
${verdictBadge(report)}
${stateLine}
${custodyChain(report.custody)}
${timeline(report.events)}
${telemetryPanel(telemetry)}
${anomalies}
</div>`;
}

export function renderNotFound(upc: number): string {
  return `<div class="result error">No item with UPC ${upc} on the ledger</div>`;
}
