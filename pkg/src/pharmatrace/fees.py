"""Reference cost profile of the public-testnet deployment this node simulates.

Gas costs are informational only; oracle fees are enforced in link-token
base units (1 token = 10**18 base units) by the oracle bridge.
"""

from __future__ import annotations

from decimal import Decimal

LINK_DECIMALS = 18
TOKEN = 10**LINK_DECIMALS


def tokens(amount: str | float | int | Decimal) -> int:
    """Convert a decimal token amount to integer base units, exactly."""
    quantized = Decimal(str(amount)) * TOKEN
    if quantized != quantized.to_integral_value():
        raise ValueError(f"{amount} is not representable in base units")
    return int(quantized)


def format_tokens(base_units: int) -> str:
    return str(Decimal(base_units) / TOKEN)


# Administrative and lifecycle actions in deployment order. Gas in ETH
# (informational), oracle cost in link tokens (enforced), observed block
# time in seconds.
REFERENCE_PROFILE: list[tuple[str, str, str, int]] = [
    ("contractDeployment", "0.00898", "0", 8),
    ("addManufacturer", "0.00011", "0", 4),
    ("addDistributor", "0.00011", "0", 4),
    ("addRetailer", "0.00011", "0", 8),
    ("addConsumer", "0.00011", "0", 4),
    ("produceItemByManufacturer", "0.00151", "0.5", 4),
    ("sellItemByManufacturer", "0.00143", "0.5", 8),
    ("purchaseItemByDistributor", "0.00118", "0.4", 4),
    ("shippedItemByManufacturer", "0.00106", "0.4", 4),
    ("receivedItemByDistributor", "0.00106", "0.4", 8),
    ("processedItemByDistributor", "0.00106", "0.4", 4),
    ("packageItemByDistributor", "0.00106", "0.4", 8),
    ("sellItemByDistributor", "0.00107", "0.4", 4),
    ("purchaseItemByRetailer", "0.00118", "0.4", 4),
    ("shippedItemByDistributor", "0.00106", "0.4", 4),
    ("receivedItemByRetailer", "0.00106", "0.4", 8),
    ("sellItemByRetailer", "0.00106", "0.4", 4),
    ("purchaseItemByConsumer", "0.00118", "0.4", 4),
]

ETH_FEE_BY_ACTION: dict[str, Decimal] = {a: Decimal(eth) for a, eth, _, _ in REFERENCE_PROFILE}

# Enforced per-action oracle totals, in base units.
LINK_TOTAL_BY_ACTION: dict[str, int] = {
    a: tokens(link) for a, _, link, _ in REFERENCE_PROFILE if Decimal(link) > 0
}

# Observed block intervals, in order. Their mean is what the interval
# accounting report compares against the separately reported average.
REFERENCE_BLOCK_INTERVALS_S: list[int] = [t for _, _, _, t in REFERENCE_PROFILE]

# Average transaction time as reported for the reference deployment. The
# interval column above averages to 96/18 s, which does not match; the
# accounting report surfaces both without forcing agreement.
REPORTED_MEAN_BLOCK_TIME_S = 5.6

# Load-test baseline of the reference deployment's data source, for
# side-by-side display only (local latency is environment-dependent).
BASELINE_GATEWAY_AVG_MS = 285.196


def interval_report(intervals_s: list[float] | None = None) -> dict:
    """Summarize a block-interval sequence next to the reported average."""
    seq = list(REFERENCE_BLOCK_INTERVALS_S if intervals_s is None else intervals_s)
    if not seq:
        raise ValueError("empty interval sequence")
    mean = sum(seq) / len(seq)
    return {
        "intervals_s": seq,
        "count": len(seq),
        "total_s": sum(seq),
        "mean_s": mean,
        "reported_mean_s": REPORTED_MEAN_BLOCK_TIME_S,
        "note": (
            f"computed mean {mean:.4f} s differs from the reported "
            f"average {REPORTED_MEAN_BLOCK_TIME_S} s; both are surfaced"
        ),
    }
