"""On-disk episode and weight archives.

Container: an uncompressed ZIP holding one NPY (format version 1.0)
entry per array plus a `manifest.json`. Arrays are little-endian and
C-contiguous: float32 for features, uint8 for masks, int64 for the
class list. The reader is strict; anything else is MalformedArchive.

Episode entry names:
    support_feat_{c}_{k}, support_mask_{c}_{k}   c-th class, k-th shot
    unlabeled_feat_{i}, query_feat_{j}, query_mask_{j}
    class_list

Weight archives hold a single `gnn_weight` float32 square matrix and a
`nonparametric` manifest flag.
"""

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .episodes import Episode, validate_episode
from .errors import InvalidEpisode, MalformedArchive
from .grids import FeatureGrid, LabelGrid

FORMAT_VERSION = 1

_F32 = "<f4"
_U8 = "|u1"
_I64 = "<i8"


def _write_npy(zf: zipfile.ZipFile, name: str, arr: np.ndarray) -> None:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    zf.writestr(zipfile.ZipInfo(name), buf.getvalue())


def _read_npy(zf: zipfile.ZipFile, name: str, dtype_str: str, ndim: int) -> np.ndarray:
    try:
        raw = zf.read(name)
    except KeyError:
        raise MalformedArchive(f"missing entry {name!r}") from None
    buf = io.BytesIO(raw)
    try:
        version = np.lib.format.read_magic(buf)
    except ValueError as e:
        raise MalformedArchive(f"entry {name!r}: bad NPY magic") from e
    if version != (1, 0):
        raise MalformedArchive(f"entry {name!r}: NPY version {version}, expected (1, 0)")
    try:
        shape, fortran, dtype = np.lib.format.read_array_header_1_0(buf)
    except ValueError as e:
        raise MalformedArchive(f"entry {name!r}: bad NPY header") from e
    if fortran:
        raise MalformedArchive(f"entry {name!r}: fortran order not allowed")
    if dtype.str != dtype_str:
        raise MalformedArchive(
            f"entry {name!r}: dtype {dtype.str}, expected {dtype_str}"
        )
    if len(shape) != ndim:
        raise MalformedArchive(f"entry {name!r}: {len(shape)}-d, expected {ndim}-d")
    data = buf.read()
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if len(data) != count * dtype.itemsize:
        raise MalformedArchive(f"entry {name!r}: payload truncated")
    return np.frombuffer(data, dtype=dtype).reshape(shape)


def write_episode_archive(episode: Episode, path) -> None:
    """Write an episode to `path`; the result round-trips bit-exactly."""
    validate_episode(episode)
    entries: list[tuple[str, np.ndarray]] = []
    for c, shots in enumerate(episode.support_labeled):
        for k, (grid, mask) in enumerate(shots):
            entries.append((f"support_feat_{c}_{k}", grid.values))
            entries.append((f"support_mask_{c}_{k}", mask.labels))
    for i, grid in enumerate(episode.support_unlabeled):
        entries.append((f"unlabeled_feat_{i}", grid.values))
    for j, (grid, mask) in enumerate(episode.queries):
        entries.append((f"query_feat_{j}", grid.values))
        entries.append((f"query_mask_{j}", mask.labels))
    entries.append(("class_list", np.asarray(episode.class_list, dtype=np.int64)))

    manifest = {
        "format_version": FORMAT_VERSION,
        "image_size": list(episode.image_size),
        "n_classes": episode.n_way,
        "k_shot": episode.k_shot,
        "n_unlabeled": episode.n_unlabeled,
        "n_query": episode.n_query,
        "entries": [name for name, _ in entries],
    }
    path = Path(path)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in entries:
            _write_npy(zf, name, arr)
        zf.writestr(
            zipfile.ZipInfo("manifest.json"),
            json.dumps(manifest, indent=2, sort_keys=True),
        )


def _open_archive(path) -> zipfile.ZipFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        return zipfile.ZipFile(path, "r")
    except zipfile.BadZipFile as e:
        raise MalformedArchive(f"{path}: not a valid archive") from e


def _load_manifest(zf: zipfile.ZipFile, path) -> dict:
    try:
        manifest = json.loads(zf.read("manifest.json"))
    except KeyError:
        raise MalformedArchive(f"{path}: manifest.json missing") from None
    except json.JSONDecodeError as e:
        raise MalformedArchive(f"{path}: manifest.json unparsable") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise MalformedArchive(
            f"{path}: format_version {manifest.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    return manifest


def read_episode_archive(path) -> Episode:
    """Read and validate an episode archive written by this module."""
    with _open_archive(path) as zf:
        manifest = _load_manifest(zf, path)
        try:
            n_classes = int(manifest["n_classes"])
            k_shot = int(manifest["k_shot"])
            n_unlabeled = int(manifest["n_unlabeled"])
            n_query = int(manifest["n_query"])
            image_size = tuple(int(v) for v in manifest["image_size"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedArchive(f"{path}: manifest fields missing or bad") from e
        if len(image_size) != 2:
            raise MalformedArchive(f"{path}: image_size must be [H, W]")

        class_list = _read_npy(zf, "class_list", _I64, 1)
        if class_list.shape[0] != n_classes:
            raise MalformedArchive(f"{path}: class_list length != n_classes")

        def grid(name):
            return FeatureGrid(_read_npy(zf, name, _F32, 3))

        def mask(name):
            return LabelGrid(_read_npy(zf, name, _U8, 2))

        support = tuple(
            tuple(
                (grid(f"support_feat_{c}_{k}"), mask(f"support_mask_{c}_{k}"))
                for k in range(k_shot)
            )
            for c in range(n_classes)
        )
        unlabeled = tuple(grid(f"unlabeled_feat_{i}") for i in range(n_unlabeled))
        queries = tuple(
            (grid(f"query_feat_{j}"), mask(f"query_mask_{j}")) for j in range(n_query)
        )
    return Episode(
        class_list=tuple(int(c) for c in class_list),
        support_labeled=support,
        support_unlabeled=unlabeled,
        queries=queries,
        image_size=image_size,
    )


def find_episode_archives(directory) -> list[Path]:
    """Sorted episode archive paths under `directory` (non-recursive)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix == ".zip")
    if not paths:
        raise MalformedArchive(f"{directory}: no episode archives found")
    return paths


def write_weights_archive(matrix: np.ndarray, nonparametric: bool, path) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidEpisode(f"weight matrix must be square, got {matrix.shape}")
    manifest = {
        "format_version": FORMAT_VERSION,
        "nonparametric": bool(nonparametric),
        "entries": ["gnn_weight"],
    }
    with zipfile.ZipFile(Path(path), "w", compression=zipfile.ZIP_STORED) as zf:
        _write_npy(zf, "gnn_weight", matrix)
        zf.writestr(
            zipfile.ZipInfo("manifest.json"),
            json.dumps(manifest, indent=2, sort_keys=True),
        )


def read_weights_archive(path) -> tuple[np.ndarray, bool]:
    """Returns (matrix, nonparametric flag)."""
    with _open_archive(path) as zf:
        manifest = _load_manifest(zf, path)
        matrix = _read_npy(zf, "gnn_weight", _F32, 2)
        if matrix.shape[0] != matrix.shape[1]:
            raise MalformedArchive(f"{path}: gnn_weight is not square")
        return matrix.copy(), bool(manifest.get("nonparametric", False))
