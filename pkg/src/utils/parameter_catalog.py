"""
Catalog of every configuration key with its type, default and provenance
"""
import json
from pathlib import Path
from typing import Any, Dict, List

CATALOG_PATH = Path(__file__).parent.parent / "metadata" / "parameter_catalog.json"


class ParameterCatalog:
    """Parameter definitions loaded from metadata/parameter_catalog.json"""

    def __init__(self, path: Path = CATALOG_PATH):
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        self.parameters: Dict[str, Dict[str, Any]] = {
            entry["key"]: entry for entry in data["parameters"]
        }

    def get_all_keys(self) -> List[str]:
        """All keys, sorted"""
        return sorted(self.parameters)

    def get_key_info(self, key: str) -> Dict[str, Any]:
        """Definition of one key, empty dict when unknown"""
        return self.parameters.get(key, {})

    def is_known(self, key: str) -> bool:
        return key in self.parameters

    def defaults(self) -> Dict[str, Any]:
        """Default value for every key"""
        return {key: info["default"] for key, info in self.parameters.items()}

    def coerce(self, key: str, raw: Any) -> Any:
        """Convert a raw (usually string) value to the declared type

        Raises ValueError when the value does not fit the declared type.
        """
        info = self.parameters[key]
        kind = info["type"]
        if kind == "choice":
            value = str(raw).strip().lower()
            if value not in info["choices"]:
                raise ValueError(f"expected one of {info['choices']}, got {raw!r}")
            return value
        if kind == "str":
            return str(raw)

        as_float = float(raw)
        if kind == "int":
            if not as_float.is_integer():
                raise ValueError(f"expected an integer, got {raw!r}")
            value = int(as_float)
        else:
            value = as_float
        self._check_bounds(info, value)
        return value

    @staticmethod
    def _check_bounds(info: Dict[str, Any], value: float):
        if value != value:
            raise ValueError("NaN is not allowed")
        if "min" in info:
            if info.get("min_exclusive") and not value > info["min"]:
                raise ValueError(f"must be > {info['min']}, got {value}")
            if value < info["min"]:
                raise ValueError(f"must be >= {info['min']}, got {value}")
        if "max" in info and value > info["max"]:
            raise ValueError(f"must be <= {info['max']}, got {value}")
