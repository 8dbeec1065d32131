"""
Synthetic grasp-and-lift episodes.

Each episode closes a two-finger gripper on an object, ramps the normal force,
then lifts. A stable grasp holds a constant shear load once the lift starts; a
slipping grasp shows stick-slip: shear builds to the Coulomb limit mu * N,
releases abruptly, and repeats while the normal force decays. Softer objects
spread the contact over more taxels, which lowers the per-taxel peak.

The visual stream is a small embedding of object and gripper heights (and
their velocities) plus two appearance codes for stiffness and friction.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .dataset import (
    DEFAULT_RATE_HZ,
    FORCE_FRAME_SHAPE,
    MIN_EPISODE_FRAMES,
    TAXEL_COLS,
    TAXEL_ROWS,
    GraspEpisode,
    write_dataset,
)
from .exceptions import ConfigError, DataError, InputValidationError

logger = logging.getLogger(__name__)

VISUAL_EMBED_DIM = 8
LIFT_HEIGHT_MM = 30.0
LIFT_FRAMES = 10
SLIP_FLOOR_RATIO = 0.35
SLIP_NORMAL_DECAY = 0.04
STABLE_SHEAR_MARGIN = 0.8
OBJECTS_FILE = "objects.json"

_SHEAR_Y = 1
_NORMAL = 2


@dataclass(frozen=True)
class SynthObjectSpec:
    object_id: str
    stiffness: float
    weight_n: float
    friction_mu: float
    seed: int
    critical_width_mm: float = 60.0

    def __post_init__(self):
        if not 0.0 < self.stiffness <= 1.0:
            raise ConfigError(f"{self.object_id}: stiffness must be in (0, 1], got {self.stiffness}")
        if not self.weight_n > 0:
            raise ConfigError(f"{self.object_id}: weight must be > 0, got {self.weight_n}")
        if not self.friction_mu > 0:
            raise ConfigError(f"{self.object_id}: friction coefficient must be > 0, got {self.friction_mu}")


@dataclass(frozen=True)
class SynthEpisodeParams:
    frames: int = 20
    rate_hz: float = DEFAULT_RATE_HZ
    grip_force_n: float = 12.0
    slip: bool = False
    noise_sigma: float = 0.0
    episode_index: int = 0
    embed_dim: int = VISUAL_EMBED_DIM
    lift_onset: int = 6

    def __post_init__(self):
        if self.frames < MIN_EPISODE_FRAMES:
            raise ConfigError(f"episodes need at least {MIN_EPISODE_FRAMES} frames, got {self.frames}")
        if not 1 <= self.lift_onset < self.frames:
            raise ConfigError(f"lift onset {self.lift_onset} outside 1..{self.frames - 1}")
        if self.grip_force_n <= 0 or self.noise_sigma < 0 or self.embed_dim < 1:
            raise ConfigError("grip force must be > 0, noise >= 0 and embedding dim >= 1")

    @property
    def label(self) -> int:
        return 0 if self.slip else 1


def contact_profile(stiffness: float) -> np.ndarray:
    """
    Share of the total contact force carried by each taxel (sums to 1).

    A Gaussian patch centred on the pad; its width grows as stiffness drops, so
    the largest share falls strictly as the object gets softer.
    """
    sigma = 0.6 + 1.4 * (1.0 - stiffness)
    centre_r = (TAXEL_ROWS - 1) / 2.0
    centre_c = (TAXEL_COLS - 1) / 2.0
    rows, cols = np.mgrid[0:TAXEL_ROWS, 0:TAXEL_COLS]
    weights = np.exp(-((rows - centre_r) ** 2 + (cols - centre_c) ** 2) / (2.0 * sigma**2))
    return weights / weights.sum()


def _normal_force(obj: SynthObjectSpec, params: SynthEpisodeParams) -> np.ndarray:
    t = np.arange(params.frames, dtype=np.float64)
    peak = params.grip_force_n * obj.stiffness
    normal = peak * np.clip(t / params.lift_onset, 0.0, 1.0)
    if params.slip:
        after = np.maximum(0.0, t - params.lift_onset)
        normal = normal * np.exp(-SLIP_NORMAL_DECAY * after)
    return normal


def stick_slip_period(obj: SynthObjectSpec, params: SynthEpisodeParams) -> int:
    """Frames per stick-slip cycle: 3 to 5, longer when the load is far below the friction limit."""
    limit = obj.friction_mu * params.grip_force_n * obj.stiffness
    load_share = min(1.0, obj.weight_n / max(limit, 1e-9))
    return 3 + int(round(2.0 * (1.0 - load_share)))


def _shear_force(obj: SynthObjectSpec, params: SynthEpisodeParams, normal: np.ndarray) -> np.ndarray:
    t = np.arange(params.frames)
    lifted = t >= params.lift_onset
    shear = np.zeros(params.frames)
    if not params.slip:
        hold = min(obj.weight_n / 2.0, STABLE_SHEAR_MARGIN * obj.friction_mu * normal[params.lift_onset])
        shear[lifted] = hold
        return shear

    period = stick_slip_period(obj, params)
    phase = (t - params.lift_onset) % period
    peak = obj.friction_mu * normal
    floor = SLIP_FLOOR_RATIO * peak
    build = floor + (peak - floor) * (phase + 1) / period
    shear[lifted] = build[lifted]
    return shear


def _visual_embedding(
    obj: SynthObjectSpec, params: SynthEpisodeParams, rng: np.random.Generator
) -> np.ndarray:
    t = np.arange(params.frames, dtype=np.float64)
    progress = np.clip((t - params.lift_onset + 1) / LIFT_FRAMES, 0.0, 1.0)
    z_grip = LIFT_HEIGHT_MM * progress
    if params.slip:
        z_obj = 0.5 * z_grip - 0.8 * np.maximum(0.0, t - params.lift_onset)
    else:
        z_obj = z_grip.copy()
    dz_grip = np.diff(z_grip, prepend=z_grip[0])
    dz_obj = np.diff(z_obj, prepend=z_obj[0])
    scale_z, scale_dz = LIFT_HEIGHT_MM, LIFT_HEIGHT_MM / LIFT_FRAMES
    columns = [
        z_obj / scale_z,
        dz_obj / scale_dz,
        z_grip / scale_z,
        dz_grip / scale_dz,
        (z_obj - z_grip) / scale_z,
        (dz_obj - dz_grip) / scale_dz,
        np.full(params.frames, obj.stiffness),
        np.full(params.frames, obj.friction_mu),
    ]
    base = np.stack(columns, axis=1)
    embedding = np.zeros((params.frames, params.embed_dim))
    width = min(params.embed_dim, base.shape[1])
    embedding[:, :width] = base[:, :width]
    if params.noise_sigma > 0:
        embedding += rng.normal(0.0, params.noise_sigma, size=embedding.shape)
    return embedding.astype(np.float32)


def generate_episode(obj: SynthObjectSpec, params: SynthEpisodeParams) -> GraspEpisode:
    """Deterministic in (object seed, episode index, params)."""
    rng = np.random.default_rng([obj.seed, params.episode_index])
    share = contact_profile(obj.stiffness)
    normal = _normal_force(obj, params)
    shear = _shear_force(obj, params, normal)

    tactile = np.zeros((params.frames,) + FORCE_FRAME_SHAPE)
    tactile[:, :, :, _NORMAL] = normal[:, None, None] * share[None]
    tactile[:, :, :, _SHEAR_Y] = shear[:, None, None] * share[None]
    if params.noise_sigma > 0:
        tactile += rng.normal(0.0, params.noise_sigma, size=tactile.shape)

    visual = _visual_embedding(obj, params, rng)
    width_offset = 2.0 if params.slip else -2.0
    return GraspEpisode(
        episode_id=f"{obj.object_id}-e{params.episode_index:03d}",
        object_id=obj.object_id,
        label=params.label,
        grasp_width_mm=obj.critical_width_mm + width_offset,
        tactile=tactile,
        visual=visual,
        rate_hz=params.rate_hz,
    )


def shear_drop_score(episode: GraspEpisode) -> float:
    """Sum of frame-to-frame drops in total tangential force; zero for a noiseless stable grasp."""
    total = episode.tactile[:, :, :, _SHEAR_Y].sum(axis=(1, 2))
    drops = np.maximum(0.0, total[:-1] - total[1:])
    return float(drops.sum())


@dataclass
class CorpusSummary:
    root: Path
    objects: List[SynthObjectSpec]
    episodes: int
    slip_episodes: int
    splits: Dict[str, List[str]]


def sample_objects(n_objects: int, rng: np.random.Generator) -> List[SynthObjectSpec]:
    objects = []
    for index in range(n_objects):
        objects.append(
            SynthObjectSpec(
                object_id=f"obj{index:03d}",
                stiffness=float(rng.uniform(0.2, 1.0)),
                weight_n=float(rng.uniform(1.0, 4.0)),
                friction_mu=float(rng.uniform(0.4, 1.0)),
                seed=int(rng.integers(0, 2**31 - 1)),
                critical_width_mm=float(rng.uniform(40.0, 90.0)),
            )
        )
    return objects


def generate_corpus(
    root: Union[str, Path],
    n_objects: int,
    episodes_per_object: int,
    slip_fraction: float = 0.5,
    master_seed: int = 0,
    frames: int = 20,
    noise_sigma: float = 0.0,
    embed_dim: int = VISUAL_EMBED_DIM,
    train_fraction: float = 0.8,
    objects: Optional[List[SynthObjectSpec]] = None,
) -> CorpusSummary:
    """
    Write a corpus under ``root``: every object gets round(slip_fraction * n)
    slipping episodes, and objects are split train/test by ``train_fraction``.
    Below 1.0 the test split always gets at least one object when there are two or more.
    """
    if not 0.0 <= slip_fraction <= 1.0:
        raise InputValidationError(f"slip fraction must be in [0, 1], got {slip_fraction}")
    if not 0.0 < train_fraction <= 1.0:
        raise InputValidationError(f"train fraction must be in (0, 1], got {train_fraction}")
    if episodes_per_object < 1:
        raise InputValidationError(f"episodes per object must be >= 1, got {episodes_per_object}")

    rng = np.random.default_rng(master_seed)
    if objects is None:
        if n_objects < 1:
            raise InputValidationError(f"object count must be >= 1, got {n_objects}")
        objects = sample_objects(n_objects, rng)

    episodes: List[GraspEpisode] = []
    slips = 0
    for obj in objects:
        obj_rng = np.random.default_rng(obj.seed)
        n_slip = int(round(slip_fraction * episodes_per_object))
        plan = obj_rng.permutation(np.array([False] * (episodes_per_object - n_slip) + [True] * n_slip))
        for index, slip in enumerate(plan):
            grip = obj_rng.uniform(6.0, 9.0) if slip else obj_rng.uniform(10.0, 14.0)
            params = SynthEpisodeParams(
                frames=frames,
                grip_force_n=float(grip),
                slip=bool(slip),
                noise_sigma=noise_sigma,
                episode_index=index,
                embed_dim=embed_dim,
            )
            episodes.append(generate_episode(obj, params))
        slips += n_slip

    order = [objects[i].object_id for i in rng.permutation(len(objects))]
    n_train = max(1, int(round(train_fraction * len(objects))))
    if train_fraction < 1.0 and len(objects) > 1:
        # a fractional split keeps at least one object on the test side
        n_train = min(n_train, len(objects) - 1)
    splits = {"train": sorted(order[:n_train]), "test": sorted(order[n_train:])}

    root = Path(root)
    write_dataset(episodes, root, splits)
    try:
        (root / OBJECTS_FILE).write_text(
            json.dumps([asdict(obj) for obj in objects], indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise DataError(f"cannot write {root / OBJECTS_FILE}: {exc.strerror}", path=str(root)) from exc

    logger.info(
        "Generated %d episodes (%d slipping) over %d objects in %s",
        len(episodes),
        slips,
        len(objects),
        root,
    )
    return CorpusSummary(root=root, objects=list(objects), episodes=len(episodes), slip_episodes=slips, splits=splits)


def read_objects(root: Union[str, Path]) -> Dict[str, SynthObjectSpec]:
    """Object specs written next to a generated corpus; empty for real datasets."""
    path = Path(root) / OBJECTS_FILE
    if not path.exists():
        return {}
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
        return {r["object_id"]: SynthObjectSpec(**r) for r in records}
    except (ValueError, TypeError, KeyError) as exc:
        raise DataError(f"malformed {OBJECTS_FILE}: {exc}", path=str(path)) from exc
