"""Versioned JSON schemas for configuration files and reports."""
import json
from functools import lru_cache
from importlib import resources

import jsonschema

from ..exceptions import ConfigurationError


@lru_cache(maxsize=None)
def load_schema(name):
    text = resources.files(__name__).joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(instance, name, error=ConfigurationError):
    """Validate ``instance`` against schema ``name``; raise ``error`` with the first problem found."""
    validator = jsonschema.Draft202012Validator(load_schema(name))
    problems = sorted(validator.iter_errors(instance), key=lambda e: [str(p) for p in e.absolute_path])
    if problems:
        first = problems[0]
        where = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise error(f"{name}: {where}: {first.message}")
