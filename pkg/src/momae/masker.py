"""Per-patch entropy scoring and visible/masked patch selection.

Selection keeps the patches with the highest Renyi entropy: scores are sorted
in descending order (ties broken by ascending patch index) and the first
n_visible = max(1, round((1 - ratio) * n_patches)) patches become the encoder
input. A seeded random policy provides the classical-masking baseline, and
plans can be inverted to study masking the high-entropy patches instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegeneratePlanError, InvalidArgumentError
from .mfcore import build_histogram, normalize, renyi_entropy
from .patching import ImageBuffer, PatchGrid, patch_matrix

POLICIES = ("multifractal", "random", "inverted")


@dataclass(frozen=True)
class PatchScores:
    """Renyi entropy per patch, in patch-index order."""

    scores: np.ndarray  # float64, length n_patches
    q: float
    s: int

    @property
    def n_patches(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class MaskPlan:
    """Partition of patch indices into visible (encoder input) and masked sets."""

    visible: tuple[int, ...]  # sorted ascending
    masked: tuple[int, ...]  # sorted ascending
    ratio: float
    policy: str
    seed: int | None = None
    q: float | None = None
    s: int | None = None

    @property
    def n_patches(self) -> int:
        return len(self.visible) + len(self.masked)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def n_visible(n_patches: int, ratio: float) -> int:
    """Number of visible patches for a mask ratio: max(1, round((1-r) * n_P))."""
    return max(1, _round_half_away((1.0 - ratio) * n_patches))


def score_patches(image: ImageBuffer, grid: PatchGrid, q: float, s: int) -> PatchScores:
    """Renyi entropy of order q at spacing s for every patch of the grid."""
    if image.channels != 1:
        raise InvalidArgumentError(
            "entropy scoring expects a single-channel image; apply to_luminance first"
        )
    pixels = patch_matrix(image, grid)
    scores = np.empty(grid.n_patches, dtype=np.float64)
    for k in range(grid.n_patches):
        dist = normalize(build_histogram(pixels[k], s, image.levels))
        scores[k] = renyi_entropy(dist, q, s).entropy
    return PatchScores(scores=scores, q=q, s=s)


def select_visible(scores: PatchScores, ratio: float) -> MaskPlan:
    """Keep the top-entropy patches visible at the given mask ratio.

    Ordering is by descending score with ascending-index tie-break, so equal
    scores always resolve to the same plan.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidArgumentError(f"mask ratio must lie in [0, 1], got {ratio}")
    n = scores.n_patches
    keep = n_visible(n, ratio)
    order = sorted(range(n), key=lambda k: (-scores.scores[k], k))
    visible = tuple(sorted(order[:keep]))
    masked = tuple(sorted(order[keep:]))
    return MaskPlan(
        visible=visible, masked=masked, ratio=ratio, policy="multifractal",
        q=scores.q, s=scores.s,
    )


def invert_plan(plan: MaskPlan) -> MaskPlan:
    """Swap the visible and masked sets (policy becomes "inverted").

    The stored ratio of the result is |new masked| / n_patches. Inverting a
    plan with an empty masked set would leave no visible patch and is rejected.
    """
    if not plan.masked:
        raise DegeneratePlanError("inverting this plan would leave no visible patch")
    return replace(
        plan,
        visible=plan.masked,
        masked=plan.visible,
        ratio=len(plan.visible) / plan.n_patches,
        policy="inverted",
    )


def random_mask(n_patches: int, ratio: float, seed: int) -> MaskPlan:
    """Uniformly random visible subset of the same cardinality as select_visible.

    Drawn by a partial Fisher-Yates shuffle over a PCG64 generator seeded with
    ``seed``, so the same seed always yields the same plan on any platform.
    """
    if n_patches < 1:
        raise InvalidArgumentError(f"n_patches must be positive, got {n_patches}")
    if not 0.0 <= ratio <= 1.0:
        raise InvalidArgumentError(f"mask ratio must lie in [0, 1], got {ratio}")
    keep = n_visible(n_patches, ratio)
    rng = np.random.default_rng(seed)
    pool = list(range(n_patches))
    for i in range(keep):
        j = i + int(rng.integers(0, n_patches - i))
        pool[i], pool[j] = pool[j], pool[i]
    visible = tuple(sorted(pool[:keep]))
    masked = tuple(sorted(set(range(n_patches)) - set(visible)))
    return MaskPlan(visible=visible, masked=masked, ratio=ratio, policy="random", seed=seed)


def plan_to_text(plan: MaskPlan) -> str:
    """Serialize a plan: header line ``policy q s r n_P``, then the two index lines."""
    q = 0.0 if plan.q is None else plan.q
    s = 0 if plan.s is None else plan.s
    lines = [
        f"{plan.policy} {q!r} {s} {plan.ratio!r} {plan.n_patches}",
        " ".join(str(i) for i in plan.visible),
        " ".join(str(i) for i in plan.masked),
    ]
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> MaskPlan:
    """Parse the text form produced by plan_to_text."""
    lines = text.strip("\n").split("\n")
    if len(lines) != 3:
        raise InvalidArgumentError(f"mask plan text must have 3 lines, got {len(lines)}")
    head = lines[0].split()
    if len(head) != 5:
        raise InvalidArgumentError(f"malformed mask plan header: {lines[0]!r}")
    policy, q, s, ratio, n_patches = head[0], float(head[1]), int(head[2]), float(head[3]), int(head[4])
    if policy not in POLICIES:
        raise InvalidArgumentError(f"unknown mask policy {policy!r}")
    visible = tuple(int(t) for t in lines[1].split())
    masked = tuple(int(t) for t in lines[2].split())
    if sorted(visible + masked) != list(range(n_patches)):
        raise InvalidArgumentError("visible and masked lines do not partition the patch indices")
    return MaskPlan(
        visible=visible, masked=masked, ratio=ratio, policy=policy,
        q=q if q != 0.0 else None, s=s if s != 0 else None,
    )
