"""Output-channel grouping by exact 1-D k-means.

Channels are clustered on a per-channel feature (by default the absolute
maximum of the channel's weights) and each cluster gets its own
quantization scale.  Optimal 1-D k-means clusters are contiguous runs of
the sorted features, so a dynamic program over split points finds the
global optimum without seeds or restarts.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError
from .quantizer import scale_from_range
from .tensor import check_weight


class Feature(str, Enum):
    MAX = "max"
    MEAN = "mean"
    ALL = "all"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class GroupingConfig:
    g: int = 4
    feature: Feature = Feature.MAX

    def __post_init__(self):
        if isinstance(self.g, bool) or int(self.g) != self.g or self.g < 1:
            raise ConfigError(f"group count must be a positive integer, got {self.g}")
        object.__setattr__(self, "feature", Feature(self.feature))


@dataclass
class GroupPlan:
    """Partition of output channels into groups, ordered by ascending cluster mean.

    ``groups[j]`` lists member channels in ascending order.  ``group_max[j]``
    is the range that sets the group's scale.  ``restore`` maps the
    concatenated, group-ordered channel axis back to model order:
    ``y = y_grouped[..., restore]``.
    """

    groups: list[np.ndarray]
    group_max: np.ndarray
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = 0.0

    @property
    def g(self) -> int:
        return len(self.groups)

    @property
    def c_out(self) -> int:
        return int(sum(len(ix) for ix in self.groups))

    @property
    def order(self) -> np.ndarray:
        return np.concatenate(self.groups).astype(np.int64)

    @property
    def restore(self) -> np.ndarray:
        return np.argsort(self.order, kind="stable")

    def validate(self) -> None:
        """Raise ValueError unless groups are non-empty, disjoint and covering."""
        if not self.groups:
            raise ValueError("plan has no groups")
        if any(len(ix) == 0 for ix in self.groups):
            raise ValueError("plan has an empty group")
        order = self.order
        if not np.array_equal(np.sort(order), np.arange(len(order))):
            raise ValueError("groups are not a partition of the output channels")
        if len(self.group_max) != self.g:
            raise ValueError("one range per group required")
        if np.any(~np.isfinite(self.group_max)) or np.any(np.asarray(self.group_max) < 0):
            raise ValueError("group ranges must be finite and non-negative")


def channel_feature(w, feature: Feature | str = Feature.MAX) -> np.ndarray:
    """Per-output-channel clustering feature.

    ``max`` and ``mean`` reduce ``|W[:, :, :, c]|``; ``uniform`` returns the
    channel index, which makes the clustering split channels into even
    contiguous blocks.  ``all`` returns one row per channel holding the
    channel's sorted absolute weights (shape ``(c_out, d*d*c_in)``).
    """
    w = np.asarray(w, dtype=np.float64)
    check_weight(w)
    a = np.abs(w).reshape(-1, w.shape[3]).T  # (c_out, d*d*c_in)
    feature = Feature(feature)
    if feature is Feature.MAX:
        return a.max(axis=1)
    if feature is Feature.MEAN:
        return a.mean(axis=1)
    if feature is Feature.UNIFORM:
        return np.arange(w.shape[3], dtype=np.float64)
    return np.sort(a, axis=1)


def _sort_order(features: np.ndarray) -> np.ndarray:
    if features.ndim == 1:
        return np.argsort(features, kind="stable")
    # vectors: order by max, ties broken by mean
    return np.lexsort((features.mean(axis=1), features.max(axis=1)))


def cluster_objective(features, groups) -> float:
    """Within-cluster sum of squared distances to the cluster mean."""
    f = np.asarray(features, dtype=np.float64)
    total = 0.0
    for ix in groups:
        pts = f[np.asarray(ix)]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def _segment_cost(s1, s2, i: np.ndarray, j: int) -> np.ndarray:
    """SSE of sorted points ``i..j-1`` from prefix sums, for every start in ``i``."""
    n = (j - i).astype(np.float64)[:, None]
    seg1 = s1[j] - s1[i]
    cost = (s2[j] - s2[i] - seg1**2 / n).sum(axis=1)
    return np.maximum(cost, 0.0)


def cluster_1d(features, g: int) -> GroupPlan:
    """Optimal k-means partition of a feature sequence into ``g`` groups.

    ``features`` is either one scalar per channel or one vector per channel
    (the ``all`` feature); vectors are first ordered by (max, mean) and the
    clustering is restricted to contiguous runs of that order.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim not in (1, 2) or f.shape[0] == 0:
        raise ConfigError("features must be a non-empty sequence")
    if isinstance(g, bool) or int(g) != g or g < 1:
        raise ConfigError(f"group count must be a positive integer, got {g}")
    n = f.shape[0]
    if g > n:
        warnings.warn(f"group count {g} exceeds channel count {n}; using {n}", stacklevel=2)
        g = n

    order = _sort_order(f)
    sf = f[order].reshape(n, -1)
    s1 = np.vstack([np.zeros((1, sf.shape[1])), np.cumsum(sf, axis=0)])
    s2 = np.vstack([np.zeros((1, sf.shape[1])), np.cumsum(sf**2, axis=0)])

    # cost[k, j]: best SSE of the first j sorted points split into k runs
    cost = np.full((g + 1, n + 1), np.inf)
    split = np.zeros((g + 1, n + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for k in range(1, g + 1):
        for j in range(k, n - (g - k) + 1):
            i = np.arange(k - 1, j)
            cand = cost[k - 1, i] + _segment_cost(s1, s2, i, j)
            best = int(np.argmin(cand))
            cost[k, j] = cand[best]
            split[k, j] = i[best]

    bounds = [n]
    for k in range(g, 0, -1):
        bounds.append(split[k, bounds[-1]])
    bounds.reverse()

    groups = [np.sort(order[bounds[k]:bounds[k + 1]]) for k in range(g)]
    scalar = f if f.ndim == 1 else f.max(axis=1)
    means = np.array([scalar[ix].mean() for ix in groups])
    group_max = np.array([scalar[ix].max() for ix in groups])
    rank = np.argsort(means, kind="stable")
    groups = [groups[r] for r in rank]
    return GroupPlan(
        groups=groups,
        group_max=group_max[rank],
        means=means[rank],
        objective=cluster_objective(f, groups),
    )


def plan_for_weights(w, config: GroupingConfig = GroupingConfig()) -> GroupPlan:
    """Cluster a layer's output channels and attach each group's weight range.

    The range is always ``max |W|`` over the member channels, whatever
    feature drove the clustering.
    """
    w = np.asarray(w, dtype=np.float64)
    check_weight(w)
    plan = cluster_1d(channel_feature(w, config.feature), config.g)
    chan_max = np.abs(w).reshape(-1, w.shape[3]).max(axis=0)
    plan.group_max = np.array([chan_max[ix].max() for ix in plan.groups])
    return plan


def group_scales(plan: GroupPlan, r_x: float, b: int) -> np.ndarray:
    """One step size per group.

    Groups whose weight range fits inside the activation range use their own
    range; wider groups use ``r_x`` and rely on the weight clamp.
    """
    if not r_x > 0:
        raise ConfigError(f"activation range must be positive, got {r_x}")
    return np.array([scale_from_range(min(float(m), float(r_x)), b) for m in plan.group_max])
