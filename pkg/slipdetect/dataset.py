"""
Grasp episodes on disk and the windows cut from them.

Layout of a dataset root:

    manifest.json                 episode ids plus the object -> split map
    <episode_id>/meta.json        episode id, object id, label, grasp width, rate
    <episode_id>/tactile.csv      L rows x 48 raw forces (row, col, axis order)
    <episode_id>/visual.emb       L x E little-endian float32 embeddings
    <episode_id>/visual.emb.txt   "dim=E" / "frames=L" header for visual.emb
    <episode_id>/visual/          or: frame_000.npy ... 3x32x32 RGB frames

Labels: 0 = slip, 1 = stable.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .encoders import VISUAL_IMAGE_SHAPE, normalize_image
from .exceptions import ConfigError, DataError, DimensionError, InputValidationError
from .network import WindowBatch

logger = logging.getLogger(__name__)

TAXEL_ROWS = 4
TAXEL_COLS = 4
FORCE_AXES = 3
FORCE_FRAME_SHAPE = (TAXEL_ROWS, TAXEL_COLS, FORCE_AXES)
VALUES_PER_ROW = TAXEL_ROWS * TAXEL_COLS * FORCE_AXES
MIN_EPISODE_FRAMES = 13
DEFAULT_RATE_HZ = 30.0
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
LABELS = (0, 1)


@dataclass(frozen=True)
class TactileCalibration:
    """
    Per-axis force range mapped onto [0, 1].

    With tare on, the first frame of the episode is subtracted first and the
    zero point lands on 0.5 for the shear axes and 0 for the normal axis.
    """

    min_n: Tuple[float, float, float] = (-5.0, -5.0, 0.0)
    max_n: Tuple[float, float, float] = (5.0, 5.0, 15.0)
    tare: bool = True

    def __post_init__(self):
        object.__setattr__(self, "min_n", tuple(float(v) for v in self.min_n))
        object.__setattr__(self, "max_n", tuple(float(v) for v in self.max_n))
        if len(self.min_n) != FORCE_AXES or len(self.max_n) != FORCE_AXES:
            raise ConfigError("calibration needs one range per force axis")
        if any(hi <= lo for lo, hi in zip(self.min_n, self.max_n)):
            raise ConfigError(
                "calibration max must exceed min on every axis",
                min_n=list(self.min_n),
                max_n=list(self.max_n),
            )

    @classmethod
    def from_ranges(cls, shear_range_n: float, normal_max_n: float, tare: bool = True) -> "TactileCalibration":
        return cls(
            min_n=(-shear_range_n, -shear_range_n, 0.0),
            max_n=(shear_range_n, shear_range_n, normal_max_n),
            tare=tare,
        )

    @property
    def zero_point(self) -> np.ndarray:
        return np.array([0.5, 0.5, 0.0])


@dataclass
class GraspEpisode:
    episode_id: str
    object_id: str
    label: int
    grasp_width_mm: float
    tactile: np.ndarray
    visual: np.ndarray
    rate_hz: float = DEFAULT_RATE_HZ

    @property
    def num_frames(self) -> int:
        return int(self.tactile.shape[0])

    @property
    def visual_kind(self) -> str:
        return "image" if self.visual.ndim == 4 else "embedding"

    def validate(self) -> None:
        """Raise DataError naming the first violated episode invariant."""
        if self.label not in LABELS:
            raise DataError(f"episode {self.episode_id}: label must be 0 or 1, got {self.label}")
        if self.tactile.ndim != 4 or self.tactile.shape[1:] != FORCE_FRAME_SHAPE:
            raise DataError(
                f"episode {self.episode_id}: tactile frames must be {FORCE_FRAME_SHAPE}, "
                f"got {self.tactile.shape[1:]}"
            )
        tactile_frames, visual_frames = self.tactile.shape[0], self.visual.shape[0]
        if tactile_frames != visual_frames:
            raise DataError(
                f"episode {self.episode_id}: tactile frames={tactile_frames} "
                f"visual frames={visual_frames}",
                tactile_frames=tactile_frames,
                visual_frames=visual_frames,
            )
        if tactile_frames < MIN_EPISODE_FRAMES:
            raise DataError(
                f"episode {self.episode_id}: {tactile_frames} frames, need at least {MIN_EPISODE_FRAMES}",
                frames=tactile_frames,
            )
        if self.visual.ndim not in (2, 4) or (self.visual.ndim == 4 and self.visual.shape[1:] != VISUAL_IMAGE_SHAPE):
            raise DataError(f"episode {self.episode_id}: unsupported visual frame shape {self.visual.shape[1:]}")
        if not np.all(np.isfinite(self.tactile)):
            raise DataError(f"episode {self.episode_id}: non-finite tactile reading")


@dataclass
class SampleWindow:
    x_t: np.ndarray
    x_v: np.ndarray
    y: int
    source: Tuple[str, int]
    object_id: str

    @property
    def episode_id(self) -> str:
        return self.source[0]


@dataclass
class EpisodeError:
    """A per-episode load failure; the loader keeps going."""

    episode_id: str
    path: str
    code: str
    message: str

    def as_line(self) -> str:
        return f'error code={self.code} episode={self.episode_id} message="{self.message}"'


@dataclass
class LoadResult:
    episodes: List[GraspEpisode]
    errors: List[EpisodeError] = field(default_factory=list)
    splits: Dict[str, List[str]] = field(default_factory=dict)

    def objects(self, split: str) -> List[str]:
        return list(self.splits.get(split, []))


def forces_to_image(
    readings: np.ndarray,
    calibration: TactileCalibration = TactileCalibration(),
    baseline: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    One 4x4x3 force frame -> 3x4x4 image in [0, 1], one channel per axis.

    Without a baseline (or with tare off) a reading maps to
    clamp((f - min) / (max - min)); with one, to clamp(zero + (f - f0) / (max - min)).
    """
    forces = np.asarray(readings, dtype=np.float64)
    if forces.shape != FORCE_FRAME_SHAPE:
        raise DimensionError("forces_to_image", f"readings of shape {FORCE_FRAME_SHAPE}", forces.shape)
    bad = np.argwhere(~np.isfinite(forces))
    if bad.size:
        row, col, axis = (int(v) for v in bad[0])
        raise DataError(
            f"non-finite force at taxel ({row}, {col}) axis {axis}", taxel=[row, col], axis=axis
        )
    lo = np.asarray(calibration.min_n)
    span = np.asarray(calibration.max_n) - lo
    if calibration.tare and baseline is not None:
        scaled = calibration.zero_point + (forces - np.asarray(baseline, dtype=np.float64)) / span
    else:
        scaled = (forces - lo) / span
    return np.clip(scaled, 0.0, 1.0).transpose(2, 0, 1).copy()


def episode_images(
    episode: GraspEpisode, calibration: TactileCalibration = TactileCalibration()
) -> np.ndarray:
    """All tactile frames of an episode as (L, 3, 4, 4) images."""
    baseline = episode.tactile[0] if calibration.tare else None
    return np.stack([forces_to_image(frame, calibration, baseline) for frame in episode.tactile])


def visual_frames(episode: GraspEpisode) -> np.ndarray:
    if episode.visual_kind == "image":
        return normalize_image(episode.visual)
    return episode.visual.astype(np.float64)


def make_windows(
    episode: GraspEpisode,
    seq_len: int = MIN_EPISODE_FRAMES,
    stride: int = 1,
    calibration: TactileCalibration = TactileCalibration(),
) -> List[SampleWindow]:
    """
    Overlapping windows [s, s + T) for s = 0, stride, 2*stride, ...

    Every window inherits the episode label; floor((L - T) / stride) + 1 windows.
    """
    if seq_len < 1 or stride < 1:
        raise InputValidationError(
            f"window length and stride must be >= 1, got T={seq_len} stride={stride}"
        )
    length = episode.num_frames
    if seq_len > length:
        raise DataError(
            f"episode {episode.episode_id}: window length {seq_len} exceeds episode length {length}",
            seq_len=seq_len,
            frames=length,
        )
    tactile = episode_images(episode, calibration)
    visual = visual_frames(episode)
    windows = []
    for start in range(0, length - seq_len + 1, stride):
        windows.append(
            SampleWindow(
                x_t=tactile[start : start + seq_len].copy(),
                x_v=visual[start : start + seq_len].copy(),
                y=int(episode.label),
                source=(episode.episode_id, start),
                object_id=episode.object_id,
            )
        )
    return windows


def split_by_object(
    episodes: Sequence[GraspEpisode],
    train_objects: Iterable[str],
    test_objects: Iterable[str],
    seq_len: int = MIN_EPISODE_FRAMES,
    stride: int = 1,
    calibration: TactileCalibration = TactileCalibration(),
) -> Tuple[List[SampleWindow], List[SampleWindow]]:
    """Object-disjoint train/test windows: no object ever lands on both sides."""
    train_set: Set[str] = set(train_objects)
    test_set: Set[str] = set(test_objects)
    overlap = sorted(train_set & test_set)
    if overlap:
        raise InputValidationError(
            f"objects assigned to both splits: {', '.join(overlap)}", objects=overlap
        )
    uncovered = sorted({ep.object_id for ep in episodes} - train_set - test_set)
    if uncovered:
        raise InputValidationError(
            f"objects in neither split: {', '.join(uncovered)}", objects=uncovered
        )

    train: List[SampleWindow] = []
    test: List[SampleWindow] = []
    for episode in episodes:
        target = train if episode.object_id in train_set else test
        target.extend(make_windows(episode, seq_len, stride, calibration))
    if not test:
        logger.warning("Object split produced an empty test set (%d train windows)", len(train))
    logger.info(
        "Object split: %d train windows from %d objects, %d test windows from %d objects",
        len(train),
        len(train_set),
        len(test),
        len(test_set),
    )
    return train, test


def stack_windows(windows: Sequence[SampleWindow]) -> WindowBatch:
    """Batched (B, T, ...) arrays plus labels for the model."""
    return WindowBatch.from_windows(windows)


# --- on-disk format ---------------------------------------------------------


def _write_json(path: Path, payload: Mapping[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_episode(episode: GraspEpisode, directory: Union[str, Path]) -> Path:
    episode.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_json(
        directory / "meta.json",
        {
            "episode_id": episode.episode_id,
            "object_id": episode.object_id,
            "label": int(episode.label),
            "grasp_width_mm": float(episode.grasp_width_mm),
            "rate_hz": float(episode.rate_hz),
        },
    )
    with open(directory / "tactile.csv", "w", encoding="ascii", newline="\n") as handle:
        for frame in episode.tactile:
            handle.write(",".join(repr(float(v)) for v in frame.reshape(-1)) + "\n")

    if episode.visual_kind == "image":
        frames_dir = directory / "visual"
        frames_dir.mkdir(exist_ok=True)
        for index, frame in enumerate(episode.visual):
            np.save(frames_dir / f"frame_{index:03d}.npy", frame)
    else:
        frames, dim = episode.visual.shape
        (directory / "visual.emb").write_bytes(episode.visual.astype("<f4").tobytes())
        (directory / "visual.emb.txt").write_text(f"dim={dim}\nframes={frames}\n", encoding="ascii")
    return directory


def write_dataset(
    episodes: Sequence[GraspEpisode],
    root: Union[str, Path],
    splits: Optional[Mapping[str, Sequence[str]]] = None,
) -> Path:
    """Write episodes plus a manifest; ``splits`` maps split name -> object ids."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for episode in episodes:
            write_episode(episode, root / episode.episode_id)
        _write_json(
            root / MANIFEST_NAME,
            {
                "format_version": MANIFEST_VERSION,
                "episodes": [episode.episode_id for episode in episodes],
                "splits": {name: sorted(objs) for name, objs in (splits or {}).items()},
            },
        )
    except OSError as exc:
        raise DataError(f"cannot write dataset under {root}: {exc.strerror}", path=str(root)) from exc
    logger.info("Wrote %d episodes to %s", len(episodes), root)
    return root


def _read_tactile(path: Path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != VALUES_PER_ROW:
                raise DataError(
                    f"{path.name} line {line_no}: expected {VALUES_PER_ROW} values, got {len(fields)}"
                )
            try:
                rows.append([float(v) for v in fields])
            except ValueError:
                raise DataError(f"{path.name} line {line_no}: non-numeric force value") from None
    if not rows:
        return np.zeros((0,) + FORCE_FRAME_SHAPE)
    return np.asarray(rows, dtype=np.float64).reshape((-1,) + FORCE_FRAME_SHAPE)


def _read_header(path: Path) -> Dict[str, int]:
    header: Dict[str, int] = {}
    for line in path.read_text(encoding="ascii").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            try:
                header[key.strip()] = int(value)
            except ValueError:
                raise DataError(f"{path.name}: bad header value {line!r}") from None
    if "dim" not in header:
        raise DataError(f"{path.name}: missing dim= entry")
    return header


def _read_visual(directory: Path) -> np.ndarray:
    emb = directory / "visual.emb"
    if emb.exists():
        header = _read_header(directory / "visual.emb.txt")
        raw = np.frombuffer(emb.read_bytes(), dtype="<f4")
        dim = header["dim"]
        if dim < 1 or raw.size % dim:
            raise DataError(f"visual.emb holds {raw.size} values, not a multiple of dim={dim}")
        frames = raw.reshape(-1, dim).astype(np.float32)
        if "frames" in header and header["frames"] != frames.shape[0]:
            raise DataError(
                f"visual.emb.txt declares frames={header['frames']}, file holds {frames.shape[0]}"
            )
        return frames
    frames_dir = directory / "visual"
    if frames_dir.is_dir():
        paths = sorted(frames_dir.glob("frame_*.npy"))
        if not paths:
            raise DataError("visual/ holds no frame_*.npy files")
        frames = np.stack([np.load(p, allow_pickle=False) for p in paths])
        if frames.ndim == 4 and frames.shape[1:] == VISUAL_IMAGE_SHAPE[1:] + VISUAL_IMAGE_SHAPE[:1]:
            # height x width x channel on disk
            frames = np.ascontiguousarray(frames.transpose(0, 3, 1, 2))
        return frames
    raise DataError("no visual stream (visual.emb or visual/) found")


def read_episode(directory: Union[str, Path]) -> GraspEpisode:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
        episode = GraspEpisode(
            episode_id=str(meta["episode_id"]),
            object_id=str(meta["object_id"]),
            label=int(meta["label"]),
            grasp_width_mm=float(meta.get("grasp_width_mm", 0.0)),
            tactile=_read_tactile(directory / "tactile.csv"),
            visual=_read_visual(directory),
            rate_hz=float(meta.get("rate_hz", DEFAULT_RATE_HZ)),
        )
    except OSError as exc:
        raise DataError(f"{directory.name}: cannot read {Path(exc.filename or '').name}: {exc.strerror}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{directory.name}: malformed episode files ({exc})") from exc
    episode.validate()
    return episode


def _load_one(directory: Path) -> Union[GraspEpisode, EpisodeError]:
    try:
        return read_episode(directory)
    except DataError as exc:
        return EpisodeError(directory.name, str(directory), exc.code, exc.message)


def read_manifest(root: Union[str, Path]) -> Dict[str, Any]:
    path = Path(root) / MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}", path=str(path)) from exc
    except ValueError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}", path=str(path)) from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("episodes"), list):
        raise DataError(f"manifest {path} has no episode list", path=str(path))
    return manifest


def load_dataset(root: Union[str, Path], workers: int = 4) -> LoadResult:
    """
    Load every episode the manifest lists, in manifest order.

    Malformed episodes become EpisodeError records instead of aborting the load.
    Parsing runs on a thread pool; ordering does not depend on it.
    """
    root = Path(root)
    manifest = read_manifest(root)
    directories = [root / str(episode_id) for episode_id in manifest["episodes"]]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(_load_one, directories))

    episodes = [o for o in outcomes if isinstance(o, GraspEpisode)]
    errors = [o for o in outcomes if isinstance(o, EpisodeError)]
    for error in errors:
        logger.warning("Skipping episode %s: %s", error.episode_id, error.message)
    splits = {str(k): [str(o) for o in v] for k, v in (manifest.get("splits") or {}).items()}
    logger.info("Loaded %d episodes from %s (%d rejected)", len(episodes), root, len(errors))
    return LoadResult(episodes=episodes, errors=errors, splits=splits)
