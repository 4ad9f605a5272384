"""Configuration files.

The config is an INI-style file (``configparser`` syntax): ``[section]``
headers followed by ``key = value`` lines. Lists are comma separated and
answer keys are written ``item:answer`` pairs. Unknown sections or keys
are rejected. Any value can be overridden from the environment as
``PSYEVAL_<SECTION>__<KEY>``, e.g. ``PSYEVAL_EFA__N_FACTORS=3``.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .data import KNOWLEDGE, PERSON, ScaleSpec
from .errors import ConfigError

ENV_PREFIX = "PSYEVAL_"

_MISSING = object()


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _key_map(text):
    out = {}
    for part in _list(text):
        item, sep, answer = part.partition(":")
        if not sep:
            raise ValueError(f"answer key entries must look like item:answer, got {part!r}")
        out[item.strip()] = float(answer)
    return out


def _choice(*options):
    def parse(text):
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {value!r}")
        return value

    parse.__name__ = "one of " + "|".join(options)
    return parse


def _optional(parse):
    def wrapped(text):
        return None if text.strip() == "" else parse(text)

    wrapped.__name__ = f"optional {getattr(parse, '__name__', 'value')}"
    return wrapped


CORRELATION = _choice("pearson", "spearman")

# section -> key -> (parser, default)
SCHEMA = {
    "scale": {
        "min_score": (int, _MISSING),
        "max_score": (int, _MISSING),
        "test_type": (_choice(PERSON, KNOWLEDGE), PERSON),
        "reverse_keyed": (_list, ()),
        "key": (_optional(_key_map), None),
        "group_column": (_optional(str.strip), None),
        "auxiliary_columns": (_list, ()),
    },
    "analysis": {
        "correlation": (CORRELATION, "pearson"),
        "seed": (int, 0),
    },
    "items": {
        "knowledge_low_variance": (float, 0.05),
        "likert_low_variance": (float, 0.5),
    },
    "efa": {
        "method": (_choice("paf", "pca"), "paf"),
        "rotation": (_choice("promax", "varimax", "none"), "promax"),
        "n_factors": (_optional(int), None),
        "max_k": (_optional(int), None),
        "replicates": (int, 1000),
        "criterion": (_choice("mean", "p95"), "mean"),
        "promax_power": (int, 4),
        "kaiser_normalize": (_bool, True),
        "loading_threshold": (float, 0.32),
        "paf_tol": (float, 1e-6),
        "paf_max_iter": (int, 100),
        "scree_svg": (_bool, True),
    },
    "standardization": {
        "norm_mean": (_optional(float), None),
        "norm_sd": (_optional(float), None),
        "transform": (_choice("none", "log", "sqrt"), "none"),
    },
    "reliability": {
        "sem_form": (_choice("conventional", "paper_literal"), "conventional"),
        "retest_method": (CORRELATION, "pearson"),
    },
    "validity": {
        "method": (CORRELATION, "pearson"),
        "criterion_column": (_optional(str.strip), None),
        "existing_column": (_optional(str.strip), None),
        "convergent_column": (_optional(str.strip), None),
        "discriminant_column": (_optional(str.strip), None),
        "concern_margin": (float, 0.0),
    },
    "fairness": {
        "n_strata": (int, 5),
        "alpha": (float, 0.05),
        "dtf_threshold": (float, 0.25),
        "dichotomize_threshold": (_optional(float), None),
        "reference_group": (_optional(str.strip), None),
    },
    "simulate": {
        "model": (_choice("factor", "retest"), "factor"),
        "n": (int, 300),
        "n_factors": (int, 3),
        "items_per_factor": (int, 4),
        "loading": (float, 0.7),
        "factor_correlation": (float, 0.0),
        "likert_min": (_optional(int), None),
        "likert_max": (_optional(int), None),
        "dif_items": (_list, ()),
        "dif_kind": (_choice("uniform", "nonuniform"), "uniform"),
        "dif_magnitude": (float, 0.0),
        "group_split": (float, 0.5),
        "reliability": (float, 0.8),
    },
}


class Config:
    """Parsed, typed configuration with defaults filled in."""

    def __init__(self, values: dict, present: set):
        self._values = values
        self._present = present

    def __getitem__(self, section: str) -> dict:
        return self._values[section]

    def has_section(self, section: str) -> bool:
        return section in self._present

    def get(self, section: str, key: str):
        return self._values[section][key]

    def set(self, section: str, key: str, value):
        self._values[section][key] = value

    def to_dict(self) -> dict:
        def plain(v):
            if v is _MISSING:
                return None
            if isinstance(v, tuple):
                return list(v)
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v

        return {s: {k: plain(v) for k, v in keys.items()} for s, keys in self._values.items()}

    def scale_spec(self) -> ScaleSpec:
        if "scale" not in self._present:
            raise ConfigError("config needs a [scale] section with min_score and max_score")
        s = self._values["scale"]
        for key in ("min_score", "max_score"):
            if s[key] is _MISSING:
                raise ConfigError(f"[scale] {key} is required")
        aux = list(s["auxiliary_columns"])
        for key in ("criterion_column", "existing_column", "convergent_column", "discriminant_column"):
            col = self._values["validity"][key]
            if col and col not in aux:
                aux.append(col)
        return ScaleSpec(
            min_score=s["min_score"],
            max_score=s["max_score"],
            test_type=s["test_type"],
            reverse_keyed=frozenset(s["reverse_keyed"]),
            key=s["key"],
            group_column=s["group_column"],
            auxiliary_columns=tuple(aux),
        )


def _parse_value(section, key, text):
    parse, _ = SCHEMA[section][key]
    try:
        return parse(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str = "", environ=None, source: str = "<config>") -> Config:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None

    unknown = []
    for section in parser.sections():
        if section not in SCHEMA:
            unknown.append(f"[{section}]")
            continue
        unknown.extend(f"{section}.{key}" for key in parser[section] if key not in SCHEMA[section])
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values = {
        section: {key: default for key, (_, default) in keys.items()} for section, keys in SCHEMA.items()
    }
    present = set(parser.sections())
    for section in parser.sections():
        for key, text_value in parser[section].items():
            values[section][key] = _parse_value(section, key, text_value)

    environ = os.environ if environ is None else environ
    bad_env = []
    for name, text_value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        section, sep, key = name[len(ENV_PREFIX):].lower().partition("__")
        if not sep or section not in SCHEMA or key not in SCHEMA[section]:
            bad_env.append(name)
            continue
        values[section][key] = _parse_value(section, key, text_value)
        present.add(section)
    if bad_env:
        raise ConfigError(f"unknown config keys in environment: {', '.join(bad_env)}")
    return Config(values, present)


def load_config(path=None, environ=None) -> Config:
    if path is None:
        return parse_config("", environ)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, environ, source=str(path))
