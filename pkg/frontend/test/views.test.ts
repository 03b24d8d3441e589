import { describe, expect, it } from "vitest";

import {
  UNIVERSAL_ACTIONS,
  actionsForRoles,
  renderActionPanel,
  renderConnectionBanner,
  renderProvenance,
  renderTxResult,
  visibleButtonLabels,
} from "../src/views.js";
import type { ProvenanceReport, RoleFlags, TxResponse } from "../src/types.js";

const NO_ROLES: RoleFlags = {
  owner: false,
  manufacturer: false,
  distributor: false,
  retailer: false,
  consumer: false,
};

const only = (role: keyof RoleFlags): RoleFlags => ({ ...NO_ROLES, [role]: true });

const EVENT_ORDER = [
  "ProducedByManufacturer",
  "UpdateInventoryByManufacturer",
  "PurchasedByDistributor",
  "ShippedByManufacturer",
  "ReceivedByDistributor",
  "ProcessedByDistributor",
  "PackagedByDistributor",
  "ForSaleByDistributor",
  "PurchasedByRetailer",
  "ShippedByDistributor",
  "ReceivedByRetailer",
  "ForSaleByRetailer",
  "PurchasedByConsumer",
];

describe("role button sets", () => {
  it("manufacturer sees exactly its three actions plus the universal pair", () => {
    expect(visibleButtonLabels(only("manufacturer"))).toEqual([
      "Produce Item By Manufacturer",
      "Sell Item By Manufacturer",
      "Ship Item By Manufacturer",
      ...UNIVERSAL_ACTIONS,
    ]);
    expect(visibleButtonLabels(only("manufacturer"))).toMatchSnapshot();
  });

  it("distributor sees exactly its six actions plus the universal pair", () => {
    expect(visibleButtonLabels(only("distributor"))).toEqual([
      "Purchase Item By Distributor",
      "Received Item By Distributor",
      "Processed Item By Distributor",
      "Package Item By Distributor",
      "Sell Item By Distributor",
      "Shipped Item By Distributor",
      ...UNIVERSAL_ACTIONS,
    ]);
    expect(visibleButtonLabels(only("distributor"))).toMatchSnapshot();
  });

  it("retailer sees exactly its three actions plus the universal pair", () => {
    expect(visibleButtonLabels(only("retailer"))).toEqual([
      "Purchase Item By Retailer",
      "Received Item By Retailer",
      "Sell Item By Retailer",
      ...UNIVERSAL_ACTIONS,
    ]);
    expect(visibleButtonLabels(only("retailer"))).toMatchSnapshot();
  });

  it("consumer sees exactly one action plus the universal pair", () => {
    expect(visibleButtonLabels(only("consumer"))).toEqual([
      "Purchase Item By Consumer",
      ...UNIVERSAL_ACTIONS,
    ]);
    expect(visibleButtonLabels(only("consumer"))).toMatchSnapshot();
  });

  it("a role-less account keeps only the universal read actions", () => {
    expect(visibleButtonLabels(NO_ROLES)).toEqual(UNIVERSAL_ACTIONS);
  });

  it("multiple roles see the union of their sets", () => {
    const both = { ...NO_ROLES, manufacturer: true, consumer: true };
    expect(actionsForRoles(both).map((a) => a.label)).toEqual([
      "Produce Item By Manufacturer",
      "Sell Item By Manufacturer",
      "Ship Item By Manufacturer",
      "Purchase Item By Consumer",
    ]);
  });

  it("renders one enabled button per visible action", () => {
    const html = renderActionPanel({
      account: "manufacturer",
      address: "0x" + "ab".repeat(20),
      roles: only("manufacturer"),
    });
    const buttons = html.match(/<button/g) ?? [];
    expect(buttons.length).toBe(3 + UNIVERSAL_ACTIONS.length);
    expect(html).toContain('data-op="produceItemByManufacturer"');
    expect(html).not.toContain("purchaseItemByConsumer");
  });
});

describe("transaction results", () => {
  it("shows the mined event", () => {
    const response: TxResponse = {
      ok: true,
      body: {
        receipt: { txId: "ab", status: "pending" },
        outcome: { status: "ok", blockHeight: 7 },
        events: [{ name: "ProducedByManufacturer", upc: 42, blockHeight: 7, txId: "ab" }],
      },
    };
    const html = renderTxResult(response);
    expect(html).toContain("ProducedByManufacturer");
    expect(html).toContain("block 7");
  });

  it("surfaces the rejecting modifier name inline", () => {
    const response: TxResponse = {
      ok: false,
      status: 409,
      body: {
        error: "RoleDenied",
        kind: "onlyManufacturer",
        message: "onlyManufacturer: 0xffff lacks role manufacturer",
      },
    };
    const html = renderTxResult(response);
    expect(html).toContain('<code class="modifier">onlyManufacturer</code>');
    expect(html).toContain("onlyManufacturer: 0xffff lacks role manufacturer");
    expect(html).toMatchSnapshot();
  });

  it("escapes server strings before inlining them", () => {
    const response: TxResponse = {
      ok: false,
      status: 409,
      body: { error: "GuardFailed", kind: "<script>", message: "x<y" },
    };
    const html = renderTxResult(response);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

function fullLifecycleReport(): ProvenanceReport {
  return {
    upc: 42,
    authentic: true,
    state: { name: "PurchasedByConsumer", value: 12 },
    custody: [
      { role: "manufacturer", address: "0x" + "11".repeat(20), sinceBlock: 5 },
      { role: "distributor", address: "0x" + "22".repeat(20), sinceBlock: 7 },
      { role: "retailer", address: "0x" + "33".repeat(20), sinceBlock: 13 },
      { role: "consumer", address: "0x" + "44".repeat(20), sinceBlock: 17 },
    ],
    events: EVENT_ORDER.map((name, i) => ({
      name,
      upc: 42,
      blockHeight: 5 + i,
      txId: "cc".repeat(32),
    })),
    anomalies: [],
    chain: { ok: true, firstBadHeight: null },
  };
}

describe("provenance view", () => {
  it("renders a 13-step timeline and an authentic verdict for a full lifecycle", () => {
    const html = renderProvenance(fullLifecycleReport(), {
      temperature: { scaled: 2350, value: 23.5, blockHeight: 20 },
      humidity: { scaled: 4200, value: 42.0, blockHeight: 20 },
      latitude: { scaled: 33000000, value: 33.0, blockHeight: 20 },
      longitude: { scaled: -96750000, value: -96.75, blockHeight: 20 },
    });
    expect(html.match(/class="step"/g)?.length).toBe(13);
    for (const name of EVENT_ORDER) {
      expect(html).toContain(name);
    }
    expect(html).toContain("AUTHENTIC");
    expect(html).not.toContain("COUNTERFEIT");
    expect(html).toContain("manufacturer");
    expect(html).toContain("consumer");
    expect(html).toContain("temperature 23.50 °C");
    expect(html).toContain("position 33.000000, -96.750000");
    expect(html).toMatchSnapshot();
  });

  it("marks a tampered chain as counterfeit risk with the failing height", () => {
    const report = fullLifecycleReport();
    report.authentic = false;
    report.chain = { ok: false, firstBadHeight: 9 };
    report.anomalies = ["hash chain verification failed at height 9"];
    const html = renderProvenance(report, {});
    expect(html).toContain("COUNTERFEIT RISK");
    expect(html).toContain("height 9");
    expect(html).toContain("hash chain verification failed at height 9");
  });

  it("renders a partial timeline for a mid-lifecycle item", () => {
    const report = fullLifecycleReport();
    report.state = { name: "ReceivedByDistributor", value: 4 };
    report.events = report.events.slice(0, 5);
    report.custody = report.custody.slice(0, 2);
    const html = renderProvenance(report, {});
    expect(html.match(/class="step"/g)?.length).toBe(5);
    expect(html).toContain("AUTHENTIC");
  });
});

describe("connection banner", () => {
  it("names the unreachable node", () => {
    const html = renderConnectionBanner("http://127.0.0.1:8545");
    expect(html).toContain("Cannot reach the node at http://127.0.0.1:8545");
  });
});
