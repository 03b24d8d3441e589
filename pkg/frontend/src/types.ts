// Shapes of the node API bodies the console consumes.

export interface Account {
  name: string;
  address: string;
}

export interface RoleFlags {
  owner: boolean;
  manufacturer: boolean;
  distributor: boolean;
  retailer: boolean;
  consumer: boolean;
}

export type RoleName = "manufacturer" | "distributor" | "retailer" | "consumer";

export interface EventView {
  name: string;
  upc: number;
  blockHeight: number;
  txId: string;
}

export interface ItemState {
  name: string;
  value: number;
}

export interface ItemView {
  upc: number;
  sku: string;
  drugName: string;
  state: ItemState;
  ownerID: string;
  originManufacturerID: string;
  distributorID: string | null;
  retailerID: string | null;
  consumerID: string | null;
  history: Array<{
    event: string;
    blockHeight: number;
    txId: string;
    priorOwner: string;
    newOwner: string;
  }>;
}

export interface CustodyEntry {
  role: string;
  address: string;
  sinceBlock: number | null;
}

export interface ProvenanceReport {
  upc: number;
  authentic: boolean;
  state: ItemState | null;
  custody: CustodyEntry[];
  events: EventView[];
  anomalies: string[];
  chain: { ok: boolean; firstBadHeight: number | null };
}

export interface TelemetryChannel {
  scaled: number;
  value: number;
  blockHeight: number;
}

export type TelemetryView = Partial<
  Record<"temperature" | "humidity" | "latitude" | "longitude", TelemetryChannel>
>;

export interface TxSuccess {
  receipt: { txId: string; status: string };
  outcome: { status: string; blockHeight: number };
  events: EventView[];
}

export interface TxRejection {
  error: string;
  kind?: string;
  message?: string;
}

export type TxResponse =
  | { ok: true; body: TxSuccess }
  | { ok: false; status: number; body: TxRejection };
