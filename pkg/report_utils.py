# report_utils.py
# Writes and reads the flat files the CLI exchanges: trajectory and result
# tables (CSV), family grids and key-value tree reports (JSON).
# Every write is whole-file atomic: temp file in the target directory, then rename.
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Optional

import pandas as pd

from analysis import GeneralLinearFamily
from errors import InvalidInputError
from paradigms import TRAJECTORY_COLUMNS, Protocol, Trajectory, trajectory_from_dict

logger = logging.getLogger(__name__)

K_REF_KEY = "k_ref"
FAMILY_COLUMNS = ["e", "f", "g"]


def _shortest_repr(value: float) -> str:
    return repr(float(value))


def _discard(tmp: str) -> None:
    if os.path.exists(tmp):
        os.unlink(tmp)


def atomic_write_text(path: Path, text: str) -> Path:
    """
    Write text through a temp file in the target directory, then rename

    Raises:
        InvalidInputError: The output location cannot be created or written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as e:
        raise InvalidInputError(f"cannot write {path}: {e.strerror or e}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as e:
        _discard(tmp)
        raise InvalidInputError(f"cannot write {path}: {e.strerror or e}") from None
    except BaseException:
        _discard(tmp)
        raise
    logger.info(f"✅ Wrote {path}")
    return path


def table_to_csv(frame: pd.DataFrame) -> str:
    """CSV text with a header and shortest round-trip float formatting"""
    return frame.to_csv(index=False, float_format=_shortest_repr, lineterminator="\n")


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    return atomic_write_text(path, table_to_csv(frame))


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def kv_tree_text(data: dict) -> str:
    """Indented JSON; non-finite floats become strings so the text stays strict JSON"""
    return json.dumps(_jsonable(data), indent=2, allow_nan=False) + "\n"


def write_kv_tree(data: dict, path: Path) -> Path:
    return atomic_write_text(path, kv_tree_text(data))


def read_kv_tree(path: Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: file not found") from None
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}:{e.lineno}: {e.msg}") from None


# ============================================================================
# TRAJECTORIES
# ============================================================================

def trajectory_to_kv_tree(traj: Trajectory) -> dict:
    data = traj.provenance()
    data["records"] = [
        [int(n), float(x), float(e), float(p)]
        for n, x, e, p in zip(traj.trial, traj.x, traj.error, traj.p)
    ]
    return data


def write_trajectory(traj: Trajectory, path: Path, fmt: str = "csv") -> Path:
    if fmt == "kv-tree":
        return write_kv_tree(trajectory_to_kv_tree(traj), path)
    return write_table(traj.to_frame(), path)


def _read_csv(path: Path, **kwargs) -> pd.DataFrame:
    path = Path(path)
    try:
        return pd.read_csv(path, float_precision="round_trip", **kwargs)
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: file not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InvalidInputError(f"{path}: malformed table ({e})") from None


def read_trajectory_csv(path: Path, protocol: Optional[Protocol] = None) -> Trajectory:
    """
    Load a ``trial,x,error,p`` table. A ``.json`` path is read as the
    kv-tree form instead, which carries its own protocol.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        return trajectory_from_dict(read_kv_tree(path))
    frame = _read_csv(path)
    if list(frame.columns) != TRAJECTORY_COLUMNS:
        raise InvalidInputError(
            f"{path}: header must be {','.join(TRAJECTORY_COLUMNS)} (got {','.join(map(str, frame.columns))})"
        )
    try:
        return Trajectory.from_frame(frame, protocol)
    except (ValueError, TypeError) as e:
        raise InvalidInputError(f"{path}: {e}") from None


# ============================================================================
# GENERAL LINEAR FAMILIES
# ============================================================================

def family_to_csv(family: GeneralLinearFamily) -> str:
    return f"{K_REF_KEY},{_shortest_repr(family.k_ref)}\n" + table_to_csv(family.to_frame())


def write_family(family: GeneralLinearFamily, path: Path) -> Path:
    return atomic_write_text(path, family_to_csv(family))


def read_family(path: Path) -> GeneralLinearFamily:
    """
    Family file: a ``k_ref,<value>`` line, then a CSV table with header ``e,f,g``
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            first = handle.readline().strip()
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: file not found") from None
    key, _, raw = first.partition(",")
    if key.strip() != K_REF_KEY:
        raise InvalidInputError(f"{path}:1: expected '{K_REF_KEY},<value>' (got {first!r})")
    try:
        k_ref = float(raw)
    except ValueError:
        raise InvalidInputError(f"{path}:1: k_ref is not a number ({raw!r})") from None

    frame = _read_csv(path, skiprows=1)
    if list(frame.columns) != FAMILY_COLUMNS:
        raise InvalidInputError(f"{path}:2: header must be {','.join(FAMILY_COLUMNS)}")
    try:
        return GeneralLinearFamily(
            errors=frame["e"].to_numpy(dtype=float),
            f=frame["f"].to_numpy(dtype=float),
            g=frame["g"].to_numpy(dtype=float),
            k_ref=k_ref,
        )
    except ValueError as e:
        raise InvalidInputError(f"{path}: {e}") from None
