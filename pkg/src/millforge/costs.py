"""Analytical cost models.

The CRH model counts cycles and memory transfers for N AES blocks in a
sequential key-expansion-then-encrypt loop versus a four-lane streaming
pipeline. The end-to-end estimator adds modeled compute to the network
time of a protocol report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .transport import NetworkPreset


def _check_blocks(n) -> None:
    if n < 1:
        raise ValueError(f"block count must be >= 1, got {n}")


def crh_cpu_cost(n: int) -> tuple[int, int]:
    """(cycles, memory transfers) of the sequential CRH for n blocks.

    Key expansion takes 11N+100 cycles and 22N transfers, AES 11N+42 cycles
    and 36N transfers.
    """
    _check_blocks(n)
    return (11 * n + 100) + (11 * n + 42), 22 * n + 36 * n


def crh_pipelined_cost(n: int) -> tuple[Fraction, Fraction]:
    """(cycles, memory transfers) of the 4-lane pipelined CRH.

    Cycles are max(13N/4, 18N/4); the AES branch always binds. Transfers are
    12N/4 for key expansion plus 13N/4 for AES. Exact fractions, so
    ``crh_pipelined_cost(4) == (18, 25)``.
    """
    _check_blocks(n)
    cycles = max(Fraction(13 * n, 4), Fraction(18 * n, 4))
    return cycles, Fraction(12 * n, 4) + Fraction(13 * n, 4)


def crh_ratios(n: int) -> tuple[float, float]:
    """cpu / pipelined, for cycles and for transfers."""
    cc, ct = crh_cpu_cost(n)
    pc, pt = crh_pipelined_cost(n)
    return float(cc / pc), float(ct / pt)


@dataclass(frozen=True)
class CrhCostProfile:
    """A CRH engine: cycle and transfer counts as functions of N at a clock."""

    name: str
    cycles: object
    transfers: object
    clock_hz: float = 170e6

    def seconds(self, n: int) -> float:
        return float(self.cycles(n)) / self.clock_hz


CPU_CRH = CrhCostProfile("cpu", lambda n: crh_cpu_cost(n)[0], lambda n: crh_cpu_cost(n)[1])
PIPELINED_CRH = CrhCostProfile("pipelined", lambda n: crh_pipelined_cost(n)[0],
                               lambda n: crh_pipelined_cost(n)[1])


@dataclass(frozen=True)
class ComputeProfile:
    """Linear compute model: seconds = per_item * items + per_bit * online bits
    handled by the party. ``measured`` uses the report's own CPU time instead
    when present."""

    per_item_s: float = 2e-7
    per_bit_s: float = 1e-9
    measured: bool = False

    def party_seconds(self, report, role: str) -> float:
        cpu = report.get("cpu_ms") or {}
        if self.measured and cpu.get(role) is not None:
            return cpu[role] / 1e3
        sent = report["bits_s2r"] if role == "sender" else report["bits_r2s"]
        recv = report["bits_r2s"] if role == "sender" else report["bits_s2r"]
        return self.per_item_s * report["count"] + self.per_bit_s * (sent + recv)


DEFAULT_COMPUTE = ComputeProfile()


@dataclass(frozen=True)
class Estimate:
    preset: str
    compute_s: dict = field(default_factory=dict)
    network_s: float = 0.0
    latency_s: float = 0.0
    transfer_s: float = 0.0

    @property
    def total_s(self) -> float:
        return max(self.compute_s.values(), default=0.0) + self.network_s

    def as_dict(self) -> dict:
        return {"preset": self.preset, "compute_s": dict(self.compute_s), "network_s": self.network_s,
                "latency_s": self.latency_s, "transfer_s": self.transfer_s, "total_s": self.total_s}


def estimate_end_to_end(report, profile: ComputeProfile, preset: NetworkPreset) -> Estimate:
    """Slowest party's modeled compute plus simulated network time.

    ``report`` is a ProtocolReport or its dict form; it needs count, rounds,
    bits_s2r, bits_r2s, bytes_s2r and bytes_r2s.
    """
    r = report.as_dict() if hasattr(report, "as_dict") else report
    nbytes = r["bytes_s2r"] + r["bytes_r2s"]
    latency = r["rounds"] * 2 * preset.one_way_latency
    transfer = nbytes * 8 / preset.bandwidth
    compute = {role: profile.party_seconds(r, role) for role in ("sender", "receiver")}
    return Estimate(preset.name, compute, latency + transfer, latency, transfer)
