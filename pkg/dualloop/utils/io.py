# dualloop/utils/io.py
import json
import math
import os
import tempfile
from typing import Any

import numpy as np
import pandas as pd


def atomic_write_text(path: str, text: str) -> str:
    """Write through a temp file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as file:
            file.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(table: pd.DataFrame, path: str) -> str:
    """Floats keep pandas' shortest round-trip repr, so ``-1.0`` stays a float on read."""
    return atomic_write_text(path, table.to_csv(index=False, lineterminator="\n"))


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def write_json(data: Any, path: str) -> str:
    return atomic_write_text(path, json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")
