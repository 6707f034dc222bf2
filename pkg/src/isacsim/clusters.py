"""Cluster delay/power generation, pruning, and target/environment split.

Delays and powers follow the TR 38.901 exponential delay-line recipe:

    tau'_n = -r_tau * DS * ln(X_n),  X_n ~ U(0,1)
    tau_n  = sort(tau'_n - min tau'_n)
    P'_n   = exp(-tau_n * (r_tau - 1) / (r_tau * DS)) * 10^(-Z_n / 10)
    P_n    = P'_n / sum(P'_n)

with Z_n ~ N(0, zeta^2) the per-cluster shadowing.  Normalization runs
over every generated cluster; pruning with a relative power threshold
happens afterwards and deliberately does not renormalize, so the retained
set is bit-identical across threshold choices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import InsufficientClustersError, ValidationError


class ClusterKind(str, Enum):
    ENVIRONMENT = "environment"
    TARGET = "target"


@dataclass(frozen=True)
class Cluster:
    index: int
    delay_s: float
    power: float
    shadow_db: float
    kind: ClusterKind = ClusterKind.ENVIRONMENT


def generate_delays(
    n_clusters: int, r_tau: float, ds_s: float, rng: np.random.Generator
) -> np.ndarray:
    """Ascending excess delays; the first entry is exactly zero."""
    if r_tau <= 1:
        raise ValidationError("r_tau must exceed 1")
    if ds_s <= 0:
        raise ValidationError("delay spread must be positive")
    x = rng.uniform(size=n_clusters)
    raw = -r_tau * ds_s * np.log(x)
    return np.sort(raw - raw.min())


def generate_powers(
    delays_s: np.ndarray,
    r_tau: float,
    ds_s: float,
    zeta_db: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized cluster powers and the per-cluster shadowing draws (dB)."""
    delays_s = np.asarray(delays_s, dtype=float)
    shadow_db = (
        rng.normal(0.0, zeta_db, size=delays_s.shape) if zeta_db > 0
        else np.zeros_like(delays_s)
    )
    raw = np.exp(-delays_s * (r_tau - 1.0) / (r_tau * ds_s)) * 10.0 ** (-shadow_db / 10.0)
    return raw / raw.sum(), shadow_db


def make_clusters(delays_s, powers, shadow_db) -> list[Cluster]:
    return [
        Cluster(index=i, delay_s=float(t), power=float(p), shadow_db=float(z))
        for i, (t, p, z) in enumerate(zip(delays_s, powers, shadow_db))
    ]


def prune_clusters(clusters: list[Cluster], threshold_db: float | None) -> list[Cluster]:
    """Retain clusters within ``threshold_db`` of the strongest one.

    ``None`` keeps everything.  Retained powers are not renormalized.
    """
    if not clusters:
        raise ValidationError("cannot prune an empty cluster list")
    if threshold_db is None:
        return list(clusters)
    p_max = max(c.power for c in clusters)
    return [c for c in clusters if 10.0 * np.log10(c.power / p_max) >= threshold_db]


# --- target selection policies ----------------------------------------------


@dataclass(frozen=True)
class RandomK:
    """Uniform draw of k target clusters, without replacement."""

    k: int


@dataclass(frozen=True)
class DelayWindow:
    """Clusters whose delay falls in [tau_min, tau_max]; optionally k of them."""

    tau_min_s: float
    tau_max_s: float
    k: int | None = None


@dataclass(frozen=True)
class SecondStrongest:
    """The second-strongest retained cluster (strong NLoS echo heuristic)."""


@dataclass(frozen=True)
class ExplicitIndices:
    indices: tuple[int, ...]


SelectionPolicy = RandomK | DelayWindow | SecondStrongest | ExplicitIndices


def select_target_clusters(
    clusters: list[Cluster],
    policy: SelectionPolicy | None,
    rng: np.random.Generator,
) -> tuple[list[Cluster], list[Cluster]]:
    """Split retained clusters into (targets, environment) per the policy.

    The zero-delay cluster carries the LoS tap and is never selectable
    (it is also geometrically degenerate as a bistatic reflection).
    """
    if policy is None:
        return [], [replace(c, kind=ClusterKind.ENVIRONMENT) for c in clusters]

    eligible = [c for c in clusters if c.delay_s > 0.0]

    if isinstance(policy, RandomK):
        if policy.k < 0:
            raise ValidationError("RandomK.k must be non-negative")
        if policy.k == 0:
            chosen: list[int] = []
        else:
            if policy.k > len(eligible):
                raise InsufficientClustersError(
                    f"policy asks for {policy.k} targets, only {len(eligible)} eligible"
                )
            picks = rng.choice(len(eligible), size=policy.k, replace=False)
            chosen = sorted(eligible[i].index for i in picks)
    elif isinstance(policy, SecondStrongest):
        by_power = sorted(clusters, key=lambda c: c.power, reverse=True)
        chosen = []
        for cluster in by_power[1:]:
            if cluster.delay_s > 0.0:
                chosen = [cluster.index]
                break
        if not chosen:
            raise InsufficientClustersError("no eligible cluster beyond the strongest")
    elif isinstance(policy, DelayWindow):
        windowed = [
            c for c in eligible if policy.tau_min_s <= c.delay_s <= policy.tau_max_s
        ]
        if policy.k is None:
            chosen = [c.index for c in windowed]
        else:
            if policy.k > len(windowed):
                raise InsufficientClustersError(
                    f"delay window holds {len(windowed)} clusters, {policy.k} requested"
                )
            picks = rng.choice(len(windowed), size=policy.k, replace=False)
            chosen = sorted(windowed[i].index for i in picks)
    elif isinstance(policy, ExplicitIndices):
        available = {c.index: c for c in clusters}
        for idx in policy.indices:
            if idx not in available:
                raise InsufficientClustersError(f"cluster index {idx} not retained")
            if available[idx].delay_s <= 0.0:
                raise ValidationError(f"cluster {idx} is the LoS tap and not selectable")
        chosen = list(policy.indices)
    else:
        raise TypeError(f"unknown selection policy {type(policy)!r}")

    chosen_set = set(chosen)
    targets = [replace(c, kind=ClusterKind.TARGET) for c in clusters if c.index in chosen_set]
    environment = [
        replace(c, kind=ClusterKind.ENVIRONMENT)
        for c in clusters
        if c.index not in chosen_set
    ]
    return targets, environment
