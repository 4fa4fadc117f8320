"""Synthetic scenes and correspondence sets with exact ground truth.

Scenes are rigidly transformed copies of a model cloud with optional
per-axis Gaussian noise (sigma in resolution units) and exact-count random
downsampling. Correspondence sets carry a controlled inlier ratio: inlier
targets sit within a jitter ball of the ground-truth position, outlier
targets are pushed at least a minimum offset away in a random direction,
and similarity/ratio channels are drawn from separate inlier and outlier
ranges so score-based algorithms have signal. Everything is a pure
function of its recipe, seeds included.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .corr_model import Correspondence, CorrespondenceSet
from .geom3d import (
    AmbiguousFrameError,
    InsufficientSupportError,
    LocalReferenceFrame,
    PointCloud,
    RigidTransform,
    estimate_lrf,
)

MODEL_KINDS = ("sphere", "torus", "plane-with-bumps")

# Support radius used when estimating keypoint frames, in resolution units.
DEFAULT_LRF_SUPPORT_PR = 15.0

# Judging tolerance the offset recommendation is stated against.
_DEFAULT_EPSILON_PR = 4.0


@dataclass(frozen=True)
class SceneRecipe:
    """Pose, noise, and density knobs for scene generation."""

    rotation_seed: int = 0
    noise_sigma_pr: float = 0.0
    downsample_ratio: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.noise_sigma_pr < 0:
            raise ValueError("noise_sigma_pr must be >= 0")
        if not (0.0 < self.downsample_ratio <= 1.0):
            raise ValueError("downsample_ratio must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneRecipe":
        return cls(**data)


@dataclass(frozen=True)
class SimilarityModel:
    """Uniform similarity ranges for inliers and outliers."""

    inlier_low: float = 0.7
    inlier_high: float = 0.98
    outlier_low: float = 0.05
    outlier_high: float = 0.6

    def __post_init__(self):
        for name in ("inlier_low", "inlier_high", "outlier_low", "outlier_high"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.inlier_low > self.inlier_high or self.outlier_low > self.outlier_high:
            raise ValueError("similarity range low bound exceeds high bound")


@dataclass(frozen=True)
class CorrespondenceRecipe:
    """Size, inlier ratio, displacement, and score knobs for generation."""

    n_total: int = 1000
    inlier_ratio: float = 0.5
    inlier_jitter_pr: float = 0.5
    outlier_min_offset_pr: float = 10.0
    lrf_noise_deg: float = 0.0
    similarity_model: SimilarityModel = field(default_factory=SimilarityModel)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_total < 1:
            raise ValueError("n_total must be positive")
        if not (0.0 <= self.inlier_ratio <= 1.0):
            raise ValueError("inlier_ratio must be in [0, 1]")
        if self.inlier_jitter_pr < 0:
            raise ValueError("inlier_jitter_pr must be >= 0")
        if self.outlier_min_offset_pr <= 0:
            raise ValueError("outlier_min_offset_pr must be positive")
        if self.lrf_noise_deg < 0:
            raise ValueError("lrf_noise_deg must be >= 0")
        if self.outlier_min_offset_pr <= 2.0 * _DEFAULT_EPSILON_PR:
            warnings.warn(
                "outlier_min_offset_pr <= twice the default judging tolerance; "
                "outliers may be judged as inliers",
                stacklevel=2,
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CorrespondenceRecipe":
        data = dict(data)
        model = data.pop("similarity_model", None)
        if isinstance(model, dict):
            data["similarity_model"] = SimilarityModel(**model)
        elif model is not None:
            data["similarity_model"] = model
        return cls(**data)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation matrix drawn uniformly over SO(3) (quaternion method)."""
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    qx = a * math.sin(2.0 * math.pi * u2)
    qy = a * math.cos(2.0 * math.pi * u2)
    qz = b * math.sin(2.0 * math.pi * u3)
    qw = b * math.cos(2.0 * math.pi * u3)
    return np.array([
        [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
        [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
        [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
    ])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    k = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(k)
    if norm == 0.0:
        return np.eye(3)
    k = k / norm
    skew = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * skew + (1.0 - math.cos(angle)) * (skew @ skew)


def make_test_model(kind: str, n_points: int, seed: int) -> PointCloud:
    """Deterministic procedural model cloud: sphere, torus, or bumpy plane."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if n_points < 100:
        raise ValueError("n_points must be >= 100")
    rng = np.random.default_rng(seed)
    if kind == "sphere":
        pts = rng.normal(size=(n_points, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        return PointCloud(pts)
    if kind == "torus":
        major, minor = 1.0, 0.3
        u = rng.uniform(0.0, 2.0 * math.pi, n_points)
        # Rejection sampling weights the tube angle by surface area.
        v = np.empty(n_points)
        filled = 0
        while filled < n_points:
            cand = rng.uniform(0.0, 2.0 * math.pi, n_points)
            accept = rng.random(n_points) < (major + minor * np.cos(cand)) / (major + minor)
            take = cand[accept][: n_points - filled]
            v[filled:filled + take.size] = take
            filled += take.size
        ring = major + minor * np.cos(v)
        return PointCloud(np.column_stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)]))
    # plane-with-bumps: rectangular footprint so in-plane axes are distinct.
    x = rng.uniform(0.0, 2.0, n_points)
    y = rng.uniform(0.0, 1.0, n_points)
    z = 0.06 * np.sin(4.0 * x) * np.sin(5.0 * y)
    return PointCloud(np.column_stack([x, y, z]))


def generate_scene(model: PointCloud, recipe: SceneRecipe) -> tuple[PointCloud, RigidTransform]:
    """Rigidly transformed, noised, and downsampled copy of a model.

    Noise is iid per-axis Gaussian added after the transform, with sigma
    expressed in model-resolution units. Downsampling retains exactly
    round(ratio * n) points chosen uniformly at random.
    """
    if len(model) < 2:
        raise ValueError("model must have at least 2 points")
    resolution = model.resolution

    pose_rng = np.random.default_rng(recipe.rotation_seed)
    rotation = random_rotation(pose_rng)
    extent = float(np.linalg.norm(np.ptp(model.points, axis=0)))
    translation = pose_rng.uniform(-0.5, 0.5, 3) * extent
    ground_truth = RigidTransform(rotation, translation)

    points = ground_truth.apply(model.points)
    rng = np.random.default_rng(recipe.rng_seed)
    points = points + rng.normal(0.0, recipe.noise_sigma_pr * resolution, size=points.shape)

    keep_count = int(math.floor(recipe.downsample_ratio * len(points) + 0.5))
    if keep_count < 2:
        raise ValueError("downsampling would leave fewer than 2 points")
    if keep_count < len(points):
        keep = np.sort(rng.choice(len(points), size=keep_count, replace=False))
        points = points[keep]
    return PointCloud(points), ground_truth


def _unit_vectors(rng: np.random.Generator, count: int) -> np.ndarray:
    vecs = rng.normal(size=(count, 3))
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / np.maximum(norms, 1e-300)


def generate_correspondences(
    model: PointCloud,
    scene: PointCloud,
    ground_truth: RigidTransform,
    recipe: CorrespondenceRecipe,
    *,
    lrf_support_pr: float = DEFAULT_LRF_SUPPORT_PR,
) -> CorrespondenceSet:
    """Correspondence set with exact inlier/outlier construction.

    Keypoints are distinct model points whose local frame estimation
    succeeds; locally symmetric neighborhoods (ambiguous frames) are
    skipped and another point is drawn. The first round(ratio * n) sampled
    keypoints become inliers. ``scene`` is accepted for signature symmetry
    with :func:`generate_scene`; targets are built from the ground truth.
    """
    del scene
    n_total = recipe.n_total
    if n_total > len(model):
        raise ValueError("n_total exceeds the number of model points")
    resolution = model.resolution
    rng = np.random.default_rng(recipe.rng_seed)

    support = lrf_support_pr * resolution
    chosen: list[int] = []
    frames: list[LocalReferenceFrame] = []
    for candidate in rng.permutation(len(model)):
        try:
            frame = estimate_lrf(model, model.points[candidate], support)
        except (InsufficientSupportError, AmbiguousFrameError):
            continue
        chosen.append(int(candidate))
        frames.append(frame)
        if len(chosen) == n_total:
            break
    if len(chosen) < n_total:
        raise ValueError(
            f"only {len(chosen)} of {n_total} keypoints have stable local frames"
        )

    n_inliers = int(math.floor(recipe.inlier_ratio * n_total + 0.5))
    n_outliers = n_total - n_inliers
    source = model.points[np.array(chosen, dtype=np.intp)]
    mapped = ground_truth.apply(source)

    jitter_dirs = _unit_vectors(rng, n_inliers)
    jitter_mags = recipe.inlier_jitter_pr * resolution * rng.random(n_inliers) ** (1.0 / 3.0)
    offset_dirs = _unit_vectors(rng, n_outliers)
    offset_mags = recipe.outlier_min_offset_pr * resolution * (1.0 + rng.random(n_outliers))
    targets = mapped.copy()
    targets[:n_inliers] += jitter_dirs * jitter_mags[:, None]
    targets[n_inliers:] += offset_dirs * offset_mags[:, None]

    sim = recipe.similarity_model
    sims = np.concatenate([
        rng.uniform(sim.inlier_low, sim.inlier_high, n_inliers),
        rng.uniform(sim.outlier_low, sim.outlier_high, n_outliers),
    ])
    ratio_draws = np.concatenate([
        rng.uniform(sim.inlier_low, sim.inlier_high, n_inliers),
        rng.uniform(sim.outlier_low, sim.outlier_high, n_outliers),
    ])
    nn = 1.0 - sims
    second_nn = nn / np.maximum(1.0 - ratio_draws, 0.05)

    max_angle = math.radians(recipe.lrf_noise_deg)
    perturb_axes = _unit_vectors(rng, n_inliers)
    perturb_angles = max_angle * rng.random(n_inliers)
    target_frames: list[LocalReferenceFrame] = []
    for i in range(n_total):
        exact = frames[i].rotated(ground_truth.rotation)
        if i < n_inliers:
            wobble = rotation_about_axis(perturb_axes[i], perturb_angles[i])
            target_frames.append(exact.rotated(wobble))
        else:
            target_frames.append(LocalReferenceFrame(random_rotation(rng)))

    order = rng.permutation(n_total)
    items = tuple(
        Correspondence(
            source_point=source[i],
            target_point=targets[i],
            similarity=float(sims[i]),
            nn_distance=float(nn[i]),
            second_nn_distance=float(second_nn[i]),
            source_lrf=frames[i],
            target_lrf=target_frames[i],
        )
        for i in order
    )
    return CorrespondenceSet(items, source_resolution_pr=resolution, ground_truth=ground_truth)
