// Console wiring: account picker, action panel, result area and the
// provenance view, polling the node once per second for liveness and new
// blocks. No chain state is kept client-side; every refresh re-asks the
// node, and all authorization decisions happen server-side.

import { ApiClient, NodeUnreachable } from "./api.js";
import type { Account, RoleFlags } from "./types.js";
import {
  type Session,
  renderActionPanel,
  renderConnectionBanner,
  renderItemDetails,
  renderNotFound,
  renderProvenance,
  renderTxResult,
} from "./views.js";

const params = new URLSearchParams(window.location.search);
const nodeUrl = params.get("node") ?? "http://127.0.0.1:8545";
const api = new ApiClient(nodeUrl);

const el = {
  banner: document.getElementById("banner") as HTMLElement,
  account: document.getElementById("account") as HTMLSelectElement,
  panel: document.getElementById("panel") as HTMLElement,
  result: document.getElementById("result") as HTMLElement,
  upc: document.getElementById("upc") as HTMLInputElement,
  sku: document.getElementById("sku") as HTMLInputElement,
  drug: document.getElementById("drug") as HTMLInputElement,
  view: document.getElementById("view") as HTMLElement,
  head: document.getElementById("head") as HTMLElement,
};

let accounts: Account[] = [];
let session: Session | null = null;
let lastHeight = -1;

async function refreshAccounts(): Promise<void> {
  accounts = await api.accounts();
  const current = el.account.value;
  el.account.innerHTML = accounts
    .map((a) => `<option value="${a.name}">${a.name} (${a.address.slice(0, 10)}…)</option>`)
    .join("");
  if (current && accounts.some((a) => a.name === current)) {
    el.account.value = current;
  }
}

async function selectAccount(name: string): Promise<void> {
  const account = accounts.find((a) => a.name === name);
  if (!account) {
    session = null;
    el.panel.innerHTML = "";
    return;
  }
  const roles: RoleFlags = await api.roles(account.address);
  session = { account: account.name, address: account.address, roles };
  el.panel.innerHTML = renderActionPanel(session);
  for (const button of el.panel.querySelectorAll<HTMLButtonElement>("button.action")) {
    button.addEventListener("click", () => onAction(button));
  }
}

function itemArgs(): { upc: number; sku: string; drugName: string } {
  return {
    upc: Number(el.upc.value || "0"),
    sku: el.sku.value || "SKU-1",
    drugName: el.drug.value || "Acetaminophen",
  };
}

async function onAction(button: HTMLButtonElement): Promise<void> {
  if (!session) return;
  const universal = button.dataset.universal;
  try {
    if (universal === "Fetch Item Details") {
      await showItem(itemArgs().upc);
      return;
    }
    if (universal === "Verify Authenticity of Product") {
      await showProvenance(itemArgs().upc);
      return;
    }
    const operation = button.dataset.op as string;
    const args: Record<string, unknown> = button.dataset.produce
      ? itemArgs()
      : { upc: itemArgs().upc };
    const response = await api.submit(operation, session.account, args);
    el.result.innerHTML = renderTxResult(response);
  } catch (err) {
    if (err instanceof NodeUnreachable) {
      el.banner.innerHTML = renderConnectionBanner(nodeUrl);
    } else {
      el.result.innerHTML = renderNotFound(itemArgs().upc);
    }
  }
}

async function showItem(upc: number): Promise<void> {
  try {
    el.view.innerHTML = renderItemDetails(await api.item(upc));
  } catch {
    el.view.innerHTML = renderNotFound(upc);
  }
}

async function showProvenance(upc: number): Promise<void> {
  try {
    const report = await api.provenance(upc);
    let telemetry = {};
    try {
      const item = await api.item(upc);
      telemetry = await api.telemetry(item.sku);
    } catch {
      // telemetry is best-effort decoration
    }
    el.view.innerHTML = renderProvenance(report, telemetry);
  } catch {
    el.view.innerHTML = renderNotFound(upc);
  }
}

async function poll(): Promise<void> {
  try {
    const { height } = await api.head();
    el.banner.innerHTML = "";
    el.head.textContent = `block ${height}`;
    if (height !== lastHeight) {
      lastHeight = height;
      if (!accounts.length) {
        await refreshAccounts();
        if (accounts.length && !session) {
          await selectAccount(el.account.value || accounts[0].name);
        }
      }
    }
  } catch {
    el.banner.innerHTML = renderConnectionBanner(nodeUrl);
  }
}

el.account.addEventListener("change", () => void selectAccount(el.account.value));
void poll();
setInterval(() => void poll(), 1000);
