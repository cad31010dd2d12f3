"""Configuration file for the command line interface.

The file holds ``key = value`` lines. Keys before any section header apply to every
subcommand, a ``[<subcommand>]`` section overrides them for that subcommand only::

    seed = 7
    verbose = yes

    [design]
    n = 200
    top-p = 0.9

Values become the argparse defaults of the matching options (which then stop being
required, together with their mutually exclusive group), so command line flags still
win. The environment variable ``SHAPEFRAG_SEED`` overrides the ``seed`` key.
"""

import argparse
import logging
import os
from configparser import ConfigParser
from pathlib import Path
from typing import Any, Dict, Optional, Union

_logger = logging.getLogger(__name__)

ENV_SEED = "SHAPEFRAG_SEED"
COMMON = "__common__"
_UNSET = object()


def read_config(path: Union[str, Path], command: str) -> Dict[str, str]:
    """Raw ``key -> value`` pairs in effect for ``command`` (dashes become underscores)"""
    text = Path(path).read_text(encoding="utf-8")
    parser = ConfigParser(default_section=COMMON, interpolation=None)
    parser.read_string(f"[{COMMON}]\n{text}", source=str(path))
    values = dict(parser.defaults())
    if parser.has_section(command):
        values.update(parser.items(command))
    return {k.replace("-", "_"): v for k, v in values.items()}


def _convert(action: argparse.Action, value: str) -> Any:
    if action.nargs == 0:
        state = ConfigParser.BOOLEAN_STATES.get(value.strip().lower())
        if state is None:
            raise ValueError(f"Not a boolean: {value!r} ({action.dest})")
        return action.const if state else _UNSET
    if action.nargs in ("+", "*") or isinstance(action.nargs, int):
        items = value.split()
        if isinstance(action.nargs, int) and len(items) != action.nargs:
            raise ValueError(f"Expected {action.nargs} values for {action.dest}: {value!r}")
        return [action.type(v) for v in items] if action.type else items
    return value  # argparse applies ``type`` to string defaults


def _actions(parser: argparse.ArgumentParser) -> Dict[str, argparse.Action]:
    """Actions by destination and by long option name (``--top-p`` -> ``top_p``)"""
    found = {}
    for action in parser._actions:
        found.setdefault(action.dest, action)
        for flag in action.option_strings:
            if flag.startswith("--"):
                found[flag[2:].replace("-", "_")] = action
    return found


def _relax_group(parser: argparse.ArgumentParser, action: argparse.Action):
    """A default for one member satisfies a required mutually exclusive group"""
    for group in parser._mutually_exclusive_groups:
        if action in group._group_actions:
            group.required = False


def apply_defaults(
    parser: argparse.ArgumentParser, values: Dict[str, str], env: Optional[Dict[str, str]] = None
) -> Dict[str, Any]:
    """Turn ``values`` (and the seed override in ``env``) into defaults of ``parser``"""
    values = dict(values)
    env = os.environ if env is None else env
    if env.get(ENV_SEED):
        values["seed"] = env[ENV_SEED]
    actions = _actions(parser)
    defaults: Dict[str, Any] = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            _logger.debug(f"Configuration key {key!r} does not apply here")
            continue
        converted = _convert(action, value)
        if converted is not _UNSET:
            defaults[action.dest] = converted
            action.required = False
            _relax_group(parser, action)
    parser.set_defaults(**defaults)
    return defaults
