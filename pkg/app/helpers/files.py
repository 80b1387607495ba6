import json
import os
from typing import Any, Dict, Iterable, List

import yaml
from logzero import logger

from app.exceptions.custom_exceptions import ConfigError
from app.exceptions.dataset_exceptions import DatasetIOError

EFFECTIVE_CONFIG = "config.yaml"


def read_yaml(path: str) -> Dict[str, Any]:
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Reading {path} failed: {str(e)}")
        raise ConfigError(f"cannot parse {path}: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return data


def write_yaml(path: str, data: Dict[str, Any]) -> str:
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as handle:
            yaml.safe_dump(data, handle, sort_keys=False)
    except OSError as e:
        logger.error(f"Writing {path} failed: {str(e)}")
        raise DatasetIOError(f"cannot write {path}: {e}")
    return path


def write_effective_config(output_dir: str, data: Dict[str, Any]) -> str:
    """Every output directory records the exact config that produced it."""
    return write_yaml(os.path.join(output_dir, EFFECTIVE_CONFIG), data)


def set_dotted(data: Dict[str, Any], dotted_key: str, value: Any) -> Dict[str, Any]:
    """Override `a.b.c` inside a nested mapping, creating levels as needed."""
    node = data
    *parents, leaf = dotted_key.split(".")
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted_key}: {part} is not a section")
    node[leaf] = value
    return data


def append_jsonl(path: str, record: Dict[str, Any]) -> None:
    with open(path, "a") as handle:
        handle.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    if not os.path.exists(path):
        return []
    with open(path) as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> None:
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
