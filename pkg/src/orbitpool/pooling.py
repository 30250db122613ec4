"""Moment pooling over orbit axes and chained pooling sequences.

Each pooling step reduces the response distribution along one orbit axis to a
single statistic; chaining steps in order (first step innermost) builds
descriptors invariant to several transformation groups at once.  All moments
are symmetric functions of the fiber, so pooling is exactly permutation
invariant along the pooled axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import AXIS_ROT, AXIS_SCALE, AXIS_TRANS, Descriptor, FeatureOrbitTensor

FLATTEN_ORDER = "r,s,c,h,w"


class Moment(Enum):
    AVERAGE = "A"
    MAX = "M"
    STD = "S"


class Axis(Enum):
    ROTATION = AXIS_ROT
    SCALE = AXIS_SCALE
    TRANSLATION = AXIS_TRANS


_MOMENT_FROM_TOKEN = {m.value: m for m in Moment}
_AXIS_FROM_TOKEN = {a.value: a for a in Axis}


@dataclass(frozen=True)
class PoolingSequence:
    """Ordered (moment, axis) steps; list order is application order,
    innermost reduction first."""

    steps: tuple[tuple[Moment, Axis], ...] = ()

    def __post_init__(self):
        steps = tuple((Moment(m), Axis(a)) for m, a in self.steps)
        if len(steps) > 3:
            raise ValueError(f"at most 3 pooling steps, got {len(steps)}")
        axes = [a for _, a in steps]
        if len(set(axes)) != len(axes):
            raise ValueError(f"pooling axes must be pairwise distinct: {[a.value for a in axes]}")
        object.__setattr__(self, "steps", steps)


def parse_sequence(text: str) -> PoolingSequence:
    """Parse the `moment:axis` grammar, e.g. ``A:scale,S:trans,M:rot``.

    Moments are A (average), S (standard deviation), M (max); axes are rot,
    scale, trans.  The empty string is the raw flatten (no pooling).
    """
    text = text.strip()
    if not text:
        return PoolingSequence(())
    steps = []
    for token in text.split(","):
        token = token.strip()
        parts = token.split(":")
        if len(parts) != 2 or parts[0] not in _MOMENT_FROM_TOKEN or parts[1] not in _AXIS_FROM_TOKEN:
            raise ValueError(
                f"bad sequence token {token!r}: expected moment:axis with "
                f"moment in {sorted(_MOMENT_FROM_TOKEN)} and axis in {sorted(_AXIS_FROM_TOKEN)}"
            )
        steps.append((_MOMENT_FROM_TOKEN[parts[0]], _AXIS_FROM_TOKEN[parts[1]]))
    return PoolingSequence(tuple(steps))


def format_sequence(seq: PoolingSequence) -> str:
    return ",".join(f"{m.value}:{a.value}" for m, a in seq.steps)


def moment_reduce(samples, m: Moment) -> float:
    """Reduce a nonempty sample vector to one moment, accumulating in float64.

    STD is the population standard deviation sqrt(E[f^2] - E[f]^2) under the
    uniform measure on the samples, with the radicand floored at 0 against
    floating-point cancellation.
    """
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("cannot reduce an empty sample set")
    if m is Moment.AVERAGE:
        return float(arr.mean())
    if m is Moment.MAX:
        return float(arr.max())
    mean = arr.mean()
    radicand = (arr * arr).mean() - mean * mean
    return float(np.sqrt(max(radicand, 0.0)))


_NP_AXES = {Axis.ROTATION: (0,), Axis.SCALE: (1,), Axis.TRANSLATION: (3, 4)}


def pool_axis(t: FeatureOrbitTensor, axis: Axis, m: Moment) -> FeatureOrbitTensor:
    """Reduce every fiber along one orbit axis to its moment.

    The pooled axis keeps size 1 (translation consumes rows and columns
    jointly); all other axes are untouched.  Pooling a size-1 axis is legal
    (identity for AVERAGE/MAX, zero for STD) but pooling the same axis twice
    is an error.
    """
    if axis.value in t.consumed_axes:
        raise ValueError(f"axis {axis.value!r} already pooled")
    np_axes = _NP_AXES[axis]
    data = t.data.astype(np.float64)
    if m is Moment.AVERAGE:
        pooled = data.mean(axis=np_axes, keepdims=True)
    elif m is Moment.MAX:
        pooled = data.max(axis=np_axes, keepdims=True)
    else:
        mean = data.mean(axis=np_axes, keepdims=True)
        radicand = (data * data).mean(axis=np_axes, keepdims=True) - mean * mean
        pooled = np.sqrt(np.maximum(radicand, 0.0))
    return FeatureOrbitTensor(
        pooled.astype(np.float32),
        rotation_generated=t.rotation_generated,
        scale_generated=t.scale_generated,
        consumed_axes=t.consumed_axes | {axis.value},
    )


def subset_orbit(t: FeatureOrbitTensor, rotation: bool, scale: bool) -> FeatureOrbitTensor:
    """Restrict an orbit tensor to the identity element along unused axes.

    Index 0 along either axis is the untransformed element, so slicing
    reproduces the tensor an orbit run with that group disabled would have
    produced.  Lets one cached full orbit serve every pooling-sequence
    ablation.
    """
    data = t.data
    if not rotation:
        data = data[0:1]
    if not scale:
        data = data[:, 0:1]
    return FeatureOrbitTensor(
        data,
        rotation_generated=rotation and t.rotation_generated,
        scale_generated=scale and t.scale_generated,
        consumed_axes=t.consumed_axes,
    )


def sequence_orbit_subset(t: FeatureOrbitTensor, seq: PoolingSequence) -> FeatureOrbitTensor:
    """Restrict an orbit tensor to exactly the axes a sequence pools."""
    axes = {a for _, a in seq.steps}
    return subset_orbit(t, Axis.ROTATION in axes, Axis.SCALE in axes)


def apply_sequence(t: FeatureOrbitTensor, seq: PoolingSequence) -> Descriptor:
    """Pool axes in sequence order, then flatten surviving axes into a vector.

    The flattening order is fixed to (rot, scale, channel, row, col) and
    recorded in the descriptor's sequence_tag; dims is the product of the
    surviving axis sizes.  Naming an orbit axis that was never generated is an
    error: pooling a single identity element would silently claim an
    invariance the features do not have.
    """
    for _, axis in seq.steps:
        if axis is Axis.ROTATION and not t.rotation_generated:
            raise ValueError("axis not generated: rot")
        if axis is Axis.SCALE and not t.scale_generated:
            raise ValueError("axis not generated: scale")
    pooled = t
    for m, axis in seq.steps:
        pooled = pool_axis(pooled, axis, m)
    tag = f"seq={format_sequence(seq)};flatten={FLATTEN_ORDER}"
    return Descriptor(pooled.data.reshape(-1), sequence_tag=tag, normalized=False)
