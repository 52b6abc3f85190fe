"""Omniscient Byzantine attacks on the uplink messages.

Byzantine slots run a protocol-following reference pipeline; the attack
turns the reference messages (and everything the honest workers sent this
round) into what the Byzantine workers actually transmit.
"""
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from byzsim.data import Dataset
from byzsim.errors import ConfigError, ProtocolError

KINDS = ("none", "sf", "lf", "ipm", "alie")
IPM_DEFAULT_Z = 0.1


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    z: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown attack {self.kind!r}")
        if self.kind == "ipm" and self.z is not None and not self.z > 0:
            raise ConfigError("IPM strength z must be > 0")

    def strength(self, n, B):
        if self.z is not None:
            return float(self.z)
        if self.kind == "ipm":
            return IPM_DEFAULT_Z
        if self.kind == "alie":
            return alie_default_z(n, B)
        return None


def alie_default_z(n, B):
    """z = Phi^-1((n - B - s) / (n - B)) with s = floor(n/2) + 1 - B."""
    s = n // 2 + 1 - B
    p = (n - B - s) / (n - B)
    if not 0 < p < 1:
        raise ConfigError(f"ALIE default z undefined for n={n}, B={B}; set attack_z")
    return float(norm.ppf(p))


@dataclass(frozen=True, eq=False)
class AttackContext:
    honest_messages: np.ndarray  # (G, d) densified honest uplinks this round
    reference_messages: np.ndarray  # (B, d) what each Byzantine slot would have sent


def byz_messages(spec, ctx, B):
    """The ``(B, d)`` messages sent by the Byzantine workers."""
    if ctx is None or ctx.honest_messages is None or len(ctx.honest_messages) == 0:
        raise ProtocolError("attack requested before honest messages were collected")
    honest = np.asarray(ctx.honest_messages, dtype=np.float64)
    G, d = honest.shape
    if B == 0:
        return np.zeros((0, d))
    ref = ctx.reference_messages
    if spec.kind in ("none", "lf", "sf"):
        if ref is None or len(ref) != B:
            raise ProtocolError(f"{spec.kind} attack needs {B} reference messages")
        ref = np.asarray(ref, dtype=np.float64)
        return -ref if spec.kind == "sf" else ref.copy()
    z = spec.strength(G + B, B)
    if spec.kind == "ipm":
        msg = -(z / G) * honest.sum(axis=0)
    else:
        msg = honest.mean(axis=0) - z * honest.std(axis=0)
    return np.tile(msg, (B, 1))


def poison_labels(shard):
    return Dataset(shard.features, -shard.labels)
