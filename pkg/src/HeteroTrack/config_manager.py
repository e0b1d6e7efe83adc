import shutil
from dataclasses import fields
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Union

import tomlkit
from loguru import logger

from .errors import ConfigError
from .scenario import ScenarioConfig
from .state import LimitedSensorKind

ENCODINGS_TO_TRY = ["utf-8", "utf-8-sig", "latin-1"]
DEFAULT_CONFIG_FILENAME = "config.toml"

_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_INT_FIELDS = {name for name, t in _FIELD_TYPES.items() if t in (int, "int")}
_FLOAT_FIELDS = {name for name, t in _FIELD_TYPES.items() if t in (float, "float")}


def _parse_value(raw: str) -> Any:
    """Parse one TOML value; bare words (enum names) are returned as plain strings."""
    try:
        doc = tomlkit.parse(f"value = {raw}")
        return doc.unwrap()["value"]
    except Exception:
        if raw.replace("_", "").replace("-", "").isalnum() and not raw[0].isdigit():
            return raw
        raise


def _parse_sensor_kind(value: Any) -> LimitedSensorKind:
    normalized = str(value).replace("_", "").replace("-", "").lower()
    for kind in LimitedSensorKind:
        if kind.value.lower() == normalized:
            return kind
    raise ConfigError(f"未知的 limited_sensor_kind: {value!r} (可用: RangeOnly, BearingOnly)")


def _coerce(key: str, value: Any) -> Any:
    if key == "limited_sensor_kind":
        return _parse_sensor_kind(value)
    if key in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"配置项 {key} 需要整数, 实际为 {value!r}")
        return int(value)
    if key in _FLOAT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"配置项 {key} 需要数值, 实际为 {value!r}")
        return float(value)
    return value


def config_from_mapping(data: Dict[str, Any]) -> ScenarioConfig:
    """Build and validate a ScenarioConfig; unknown keys are an error."""
    known = set(ScenarioConfig.field_names())
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"未知的配置项: {', '.join(unknown)}")
    kwargs = {key: _coerce(key, value) for key, value in data.items()}
    return ScenarioConfig(**kwargs).validate()


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse flat ``key = value`` lines (``#`` comments) into a ScenarioConfig."""
    data: Dict[str, Any] = {}
    # utf-8 解码会保留 BOM
    text = text.lstrip("\ufeff")
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("["):
            raise ConfigError(f"{source}:{line_no}: 不支持表结构, 配置文件必须是扁平的 key = value")
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: 缺少 '=': {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        # 去掉行尾注释 (引号内的 # 交给 tomlkit 处理)
        if "#" in raw and not raw.startswith(('"', "'")):
            raw = raw.split("#", 1)[0].strip()
        if not key or not raw:
            raise ConfigError(f"{source}:{line_no}: 键或值为空: {stripped!r}")
        if key in data:
            raise ConfigError(f"{source}:{line_no}: 重复的配置项 {key}")
        try:
            data[key] = _parse_value(raw)
        except Exception as parse_error:
            raise ConfigError(f"{source}:{line_no}: 无法解析 {key} 的值 {raw!r}: {parse_error}") from parse_error
    return config_from_mapping(data)


def load_config(config_path: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario config file, trying several encodings."""
    config_path = Path(config_path)
    logger.debug(f"[config] 尝试加载配置: {config_path}")
    if not config_path.exists():
        raise ConfigError(f"配置文件不存在: {config_path}")

    for encoding in ENCODINGS_TO_TRY:
        try:
            with open(config_path, "r", encoding=encoding) as f:
                content = f.read()
        except UnicodeDecodeError as read_error:
            logger.warning(f"[config] 读取配置文件失败 ({encoding}): {read_error}")
            continue
        config = parse_config_text(content, source=str(config_path))
        logger.info(f"[config] 成功加载配置: {config_path} (使用编码: {encoding})")
        return config

    raise ConfigError(f"尝试所有编码后无法读取配置文件: {config_path}")


def save_config(config: ScenarioConfig, config_path: Union[str, Path], backup: bool = True) -> Path:
    """Write ``config`` as a flat TOML document; back up an existing file first."""
    config_path = Path(config_path)
    if config_path.is_dir():
        config_path = config_path / DEFAULT_CONFIG_FILENAME
    config_path.parent.mkdir(exist_ok=True, parents=True)

    if backup and config_path.exists():
        timestamp = datetime.now().strftime("%Y%m%d%H%M%S")
        backup_path = config_path.with_name(f"{config_path.stem}_{timestamp}.bak")
        try:
            shutil.copy2(config_path, backup_path)
            logger.info(f"[config] 已创建配置备份: {backup_path}")
        except OSError as e:
            logger.warning(f"[config] 创建配置备份失败: {e}")

    doc = tomlkit.document()
    doc.add(tomlkit.comment("HeteroTrack scenario configuration"))
    for key, value in config.to_dict().items():
        doc.add(key, value)
    with open(config_path, "w", encoding="utf-8") as f:
        tomlkit.dump(doc, f)
    logger.info(f"[config] 已保存配置: {config_path}")
    return config_path
