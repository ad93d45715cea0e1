"""Flat key-value run configuration.

A config file is a YAML mapping of scalars (or lists of scalars).  Each
command declares the keys it consumes as :class:`Param` entries; values
resolve as default < config file < command-line flag.  Unknown keys and
values of the wrong type are rejected.
"""

from dataclasses import dataclass, field

import yaml

from .errors import ValidationError


@dataclass(frozen=True)
class Param:
    name: str
    kind: type
    default: object = None
    help: str = ""
    choices: tuple = None
    is_list: bool = False

    @property
    def flag(self):
        return "--" + self.name.replace("_", "-")

    def coerce(self, value, source):
        if self.is_list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if not isinstance(value, (list, tuple)):
                value = [value]
            return [self._scalar(v, source) for v in value]
        return self._scalar(value, source)

    def _scalar(self, value, source):
        if value is None:
            return None
        try:
            if self.kind is bool:
                if isinstance(value, str):
                    low = value.strip().lower()
                    if low not in ("true", "false", "yes", "no", "1", "0"):
                        raise ValueError(value)
                    value = low in ("true", "yes", "1")
                elif not isinstance(value, (bool, int)):
                    raise ValueError(value)
                out = bool(value)
            elif self.kind is int:
                if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                    raise ValueError(value)
                out = int(value)
            elif self.kind is float:
                if isinstance(value, bool):
                    raise ValueError(value)
                out = float(value)
            else:
                if isinstance(value, (dict, list)):
                    raise ValueError(value)
                out = str(value)
        except (TypeError, ValueError):
            raise ValidationError(
                f"{source}: {self.name} expects {self.kind.__name__}, got {value!r}") from None
        if self.choices is not None and out not in self.choices:
            raise ValidationError(f"{source}: {self.name} must be one of {list(self.choices)}")
        return out


def load_config_file(path):
    """Read a flat YAML mapping; nested mappings are rejected."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ValidationError(f"config {path} must be a key-value mapping")
    for key, value in raw.items():
        if not isinstance(key, str):
            raise ValidationError(f"config {path}: keys must be strings")
        if isinstance(value, dict) or (isinstance(value, list)
                                       and any(isinstance(v, (dict, list)) for v in value)):
            raise ValidationError(f"config {path}: {key} must be a scalar or a flat list")
    return {k.replace("-", "_"): v for k, v in raw.items()}


@dataclass
class RunConfig:
    """Resolved parameters of one command invocation."""

    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def as_dict(self):
        return dict(self.values)


def resolve(command, params, file_values, flag_values, source="config"):
    """Merge defaults, file values and flags for ``command``.

    ``flag_values`` maps parameter names to parsed flag values, ``None``
    meaning "not given".
    """
    known = {p.name: p for p in params}
    unknown = sorted(set(file_values) - set(known))
    if unknown:
        raise ValidationError(f"{source}: unknown key(s) for '{command}': {', '.join(unknown)}")
    values = {}
    for p in params:
        value = p.default
        if p.name in file_values:
            value = p.coerce(file_values[p.name], source)
        flag = flag_values.get(p.name)
        if flag is not None:
            value = p.coerce(flag, "command line")
        values[p.name] = value
    return RunConfig(command, values)
