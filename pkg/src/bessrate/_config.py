"""YAML reading with YAML 1.2 booleans, so period keys like ``on``/``off`` stay strings."""

from __future__ import annotations

import re

import yaml


class ConfigLoader(yaml.SafeLoader):
    pass


ConfigLoader.yaml_implicit_resolvers = {
    k: [(tag, rx) for tag, rx in v if tag != "tag:yaml.org,2002:bool"]
    for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
ConfigLoader.add_implicit_resolver(
    "tag:yaml.org,2002:bool", re.compile(r"^(?:true|True|TRUE|false|False|FALSE)$"), list("tTfF"))


def read_yaml(fh):
    return yaml.load(fh, Loader=ConfigLoader)
