import math
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from loguru import logger

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Map an angle onto (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    # remainder() 可能返回 -pi, 统一到 +pi
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def format_float(value: Optional[float]) -> str:
    """CSV float formatting: 6 significant digits, ``-inf`` / empty kept readable."""
    if value is None:
        return ""
    if math.isinf(value):
        return "-inf" if value < 0 else "inf"
    return format(value, ".6g")


def format_row(values: Iterable[Union[float, int, str, None]]) -> list:
    row = []
    for value in values:
        if isinstance(value, float) or value is None:
            row.append(format_float(value))
        else:
            row.append(str(value))
    return row


def ensure_dir(path: Union[str, Path]) -> Path:
    """Create ``path`` (and parents) if needed and return it as a Path."""
    out = Path(path)
    if not out.exists():
        out.mkdir(parents=True, exist_ok=True)
        logger.info(f"[utils] 已创建输出目录: {out}")
    return out


def rms(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    return math.sqrt(sum(v * v for v in values) / len(values))
