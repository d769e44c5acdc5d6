# settings_store.py
import json
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

from core.errors import RejectedInputError

RUN_CONFIG_KEYS = {
    "n_radial", "n_angular", "n_height", "rho_min", "rho_max", "z_min", "z_max",
    "drop_out_of_range", "method", "m", "ratio", "seed", "synth", "preset",
}


def load_json(path: Path) -> dict[str, Any]:
    """Read a JSON object. Unlike UI settings, a broken run config is an error."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise RejectedInputError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise RejectedInputError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise RejectedInputError(f"{path} must contain a JSON object")
    return data


def load_run_config(path: Path) -> dict[str, Any]:
    data = load_json(path)
    unknown = sorted(set(data) - RUN_CONFIG_KEYS)
    if unknown:
        raise RejectedInputError(f"{path}: unknown config keys {unknown}")
    return data


def _tmp_path(path: Path) -> Path:
    return path.with_name(path.name + ".tmp")


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = _tmp_path(path)
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


@contextmanager
def staged_outputs() -> Iterator[dict[Path, bytes]]:
    """Collect several outputs and publish them only if the block finishes.

    Every file is written to a temp name first; renames happen after all
    temps exist, so a failure leaves no partial outputs behind.
    """
    staged: dict[Path, bytes] = {}
    yield staged
    temps: list[tuple[Path, Path]] = []
    try:
        for path, data in staged.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = _tmp_path(path)
            tmp.write_bytes(data)
            temps.append((tmp, path))
        for tmp, path in temps:
            tmp.replace(path)
    finally:
        for tmp, _ in temps:
            if tmp.exists():
                tmp.unlink()
