"""Analytical storage/communication overhead and a crypto micro-benchmark.

Storage overheads (bits) for an owner with ``U`` subscribers grouped into
``G`` policies of ``U_G`` members each, sharing ``F`` items:

    construction1  U(|ID|+|SP|+|RK|) + G*U_G*|ID|        + F(|ID|+|C(K)|)
    construction2  U(|ID|+|SP|)      + G*U_G(|ID|+|RK|)  + F(|ID|+|C(K)|)
    trivial        U(|ID|+|PK|)      + G*U_G*|ID|        + F(|ID|+U_G*|Enc(K)|)
    abe            U*|ID|            + G*U_G*|ID|        + F(|ID|+|ABE(K)|)

In code U, G, U_G and F are ``subscribers``, ``policies``,
``members_per_policy`` and ``items``; the short names survive as sweep
labels and CLI flags.
"""
from __future__ import annotations

import csv
import io
import os
import statistics
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence


class SchemeKind(Enum):
    CONSTRUCTION1 = "construction1"
    CONSTRUCTION2 = "construction2"
    TRIVIAL = "trivial"
    ABE = "abe"


ALL_SCHEMES = tuple(SchemeKind)


@dataclass(frozen=True)
class SizeConstants:
    id_bits: int = 256
    sp_bits: int = 2048
    rk_bits: int = 3072
    c_ibe_bits: int = 2048
    pk_bits: int = 1024
    enc_k_bits: int = 1024
    abe_k_bits: int = 4096

    def __post_init__(self):
        for name, value in vars(self).items():
            if value <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OverheadScenario:
    subscribers: int
    policies: int
    members_per_policy: int
    items: int

    def __post_init__(self):
        if min(self.subscribers, self.policies, self.members_per_policy, self.items) < 0:
            raise ValueError("scenario counts must be non-negative")
        if self.members_per_policy > self.subscribers:
            raise ValueError("U_G (members per policy) cannot exceed U (subscribers)")


DEFAULT_CONSTANTS = SizeConstants()
DEFAULT_SCENARIO = OverheadScenario(subscribers=50, policies=2, members_per_policy=25, items=50)


def storage_overhead(scheme: SchemeKind, sc: SizeConstants = DEFAULT_CONSTANTS,
                     sn: OverheadScenario = DEFAULT_SCENARIO) -> int:
    scheme = SchemeKind(scheme)
    memberships = sn.policies * sn.members_per_policy
    if scheme is SchemeKind.CONSTRUCTION1:
        return (sn.subscribers * (sc.id_bits + sc.sp_bits + sc.rk_bits)
                + memberships * sc.id_bits
                + sn.items * (sc.id_bits + sc.c_ibe_bits))
    if scheme is SchemeKind.CONSTRUCTION2:
        return (sn.subscribers * (sc.id_bits + sc.sp_bits)
                + memberships * (sc.id_bits + sc.rk_bits)
                + sn.items * (sc.id_bits + sc.c_ibe_bits))
    if scheme is SchemeKind.TRIVIAL:
        return (sn.subscribers * (sc.id_bits + sc.pk_bits)
                + memberships * sc.id_bits
                + sn.items * (sc.id_bits + sn.members_per_policy * sc.enc_k_bits))
    return (sn.subscribers * sc.id_bits
            + memberships * sc.id_bits
            + sn.items * (sc.id_bits + sc.abe_k_bits))


@dataclass(frozen=True)
class RevocationCost:
    control_messages: int
    reencrypted_key_records: int
    removed_key_records: int = 0


def revocation_cost(scheme: SchemeKind, sn: OverheadScenario = DEFAULT_SCENARIO,
                    items_under_policy: Optional[int] = None) -> RevocationCost:
    """Cost of removing one subscriber from one policy.

    ``items_under_policy`` defaults to ``F // G``.
    """
    scheme = SchemeKind(scheme)
    if items_under_policy is None:
        items_under_policy = sn.items // sn.policies if sn.policies else 0
    if scheme in (SchemeKind.CONSTRUCTION1, SchemeKind.CONSTRUCTION2):
        return RevocationCost(1, 0)
    if scheme is SchemeKind.TRIVIAL:
        # one Enc(K) under the revoked subscriber's public key per item
        return RevocationCost(1, 0, removed_key_records=items_under_policy)
    return RevocationCost(1, items_under_policy)


SWEEP_VARIABLES = ("U_G", "F")


def sweep(schemes: Iterable[SchemeKind], variable: str, values: Iterable[int],
          fixed: OverheadScenario = DEFAULT_SCENARIO,
          sc: SizeConstants = DEFAULT_CONSTANTS) -> List[dict]:
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}")
    values = list(values)
    rows = []
    for scheme in schemes:
        scheme = SchemeKind(scheme)
        for value in values:
            sn = OverheadScenario(fixed.subscribers, fixed.policies,
                                  value if variable == "U_G" else fixed.members_per_policy,
                                  value if variable == "F" else fixed.items)
            rows.append({"scheme": scheme.value, "variable": variable, "value": value,
                         "bits": storage_overhead(scheme, sc, sn)})
    return rows


def sweep_csv(schemes: Iterable[SchemeKind], variable: str, values: Iterable[int],
              fixed: OverheadScenario = DEFAULT_SCENARIO,
              sc: SizeConstants = DEFAULT_CONSTANTS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["scheme", "variable", "value", "bits"],
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(sweep(schemes, variable, values, fixed, sc))
    return buf.getvalue()


def group_size_sweep(sc: SizeConstants = DEFAULT_CONSTANTS) -> List[dict]:
    """Overhead vs U_G in 1..50 with U = F = 50."""
    return sweep(ALL_SCHEMES, "U_G", range(1, 51), OverheadScenario(50, 2, 25, 50), sc)


def item_count_sweep(sc: SizeConstants = DEFAULT_CONSTANTS,
                     items: Sequence[int] = range(1, 101)) -> List[dict]:
    """Overhead vs F with U = 50, U_G = 25."""
    return sweep(ALL_SCHEMES, "F", items, OverheadScenario(50, 2, 25, 50), sc)


# -- benchmark --------------------------------------------------------------

REFERENCE_MS_2016 = {
    "encrypt": 40.0,
    "rkgen": 20.0,
    "reencrypt": 31.0,
    "decrypt": 28.0,
}


@dataclass(frozen=True)
class BenchRow:
    op: str
    trials: int
    mean_ms: float
    stdev_ms: float
    reference_ms: float


def bench_crypto(trials: int = 20, item_size: int = 1024) -> Dict[str, BenchRow]:
    """Time the four key-level IB-PRE operations on a sealed item's key.

    The item body of ``item_size`` bytes is sealed once; every timed
    operation touches only its key record.
    """
    from . import ibpre
    from .content import seal_item

    if trials < 2:
        raise ValueError("need at least 2 trials")
    params_a, msk_a = ibpre.setup(128, "bench-owner")
    params_b, msk_b = ibpre.setup(128, "bench-subscriber")
    sk_a = ibpre.extract(params_a, msk_a, "owner")
    sk_b = ibpre.extract(params_b, msk_b, "subscriber")
    item = seal_item(os.urandom(item_size), "bench:item", "owner", params_a)
    k = ibpre.decrypt(sk_a, item.key_record, params_a)
    rk = ibpre.rkgen(params_a, sk_a, "subscriber", params_b)

    samples: Dict[str, List[float]] = {op: [] for op in REFERENCE_MS_2016}

    def timed(op, fn):
        t0 = time.perf_counter()
        out = fn()
        samples[op].append((time.perf_counter() - t0) * 1000.0)
        return out

    for _ in range(trials):
        timed("encrypt", lambda: ibpre.encrypt(params_a, "owner", k))
        timed("rkgen", lambda: ibpre.rkgen(params_a, sk_a, "subscriber", params_b))
        c2 = timed("reencrypt", lambda: ibpre.reencrypt(rk, item.key_record))
        timed("decrypt", lambda: ibpre.decrypt(sk_a, item.key_record, params_a))
    assert ibpre.decrypt(sk_b, c2, params_b) == k

    return {op: BenchRow(op, trials, statistics.mean(v), statistics.stdev(v),
                         REFERENCE_MS_2016[op])
            for op, v in samples.items()}


def format_bench(report: Mapping[str, BenchRow]) -> str:
    lines = [f"{'operation':<10} {'trials':>6} {'mean ms':>9} {'stdev ms':>9} {'2016 ref ms':>12}"]
    for row in report.values():
        lines.append(f"{row.op:<10} {row.trials:>6} {row.mean_ms:>9.3f} "
                     f"{row.stdev_ms:>9.3f} {row.reference_ms:>12.1f}")
    return "\n".join(lines)


def bench_csv(report: Mapping[str, BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["op", "trials", "mean_ms", "stdev_ms", "reference_ms"])
    for row in report.values():
        writer.writerow([row.op, row.trials, f"{row.mean_ms:.4f}", f"{row.stdev_ms:.4f}",
                         row.reference_ms])
    return buf.getvalue()
