import os
import copy
import json
import random
import hashlib
import platform
from argparse import Namespace
from contextlib import contextmanager
from typing import Dict, Union, Any
import numpy as np
import scipy
import yaml
import wandb
os.environ["WANDB_SILENT"] = "true"
from pilotwave_study.utilities.errors import ConfigError

SECTIONS = ('grid', 'state', 'solver', 'trajectories', 'gauge', 'hmm', 'output')


def str_to_bool(value):
    # helper function to use boolean switches with arg_parse
    if isinstance(value, bool):
        return value
    if value.lower() in {'false', 'f', '0', 'no', 'n'}:
        return False
    elif value.lower() in {'true', 't', '1', 'yes', 'y'}:
        return True
    raise ValueError(f'{value} is not a valid boolean value')


def seed_everything(seed: int) -> None:
    """Reproducibility"""
    random.seed(seed)
    os.environ['PYTHONHASHSEED'] = str(seed)
    np.random.seed(seed)


def load_scenario_config(path: Union[str, None]) -> Dict[str, Dict[str, Any]]:
    """
    Reads a YAML scenario file and merges it section-wise over CONFIG_DEFAULTS.

    Unknown sections or keys raise ConfigError with the line they appear on.
    Without a path the defaults are returned.

    Args:
        path (str): scenario file, or None
    Returns:
        dict of section name -> dict of resolved values
    """
    from pilotwave_study.utilities.common_config import CONFIG_DEFAULTS

    resolved = copy.deepcopy(CONFIG_DEFAULTS)
    if path is None:
        return resolved
    if not os.path.exists(path):
        raise ConfigError(f'{path}: scenario file not found')

    with open(path, 'r') as f:
        text = f.read()
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, 'problem_mark', None)
        line = mark.line + 1 if mark is not None else '?'
        raise ConfigError(f'{path}:{line}: {getattr(err, "problem", err)}') from err

    if root is None:
        return resolved
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f'{path}:{root.start_mark.line + 1}: top level must be a mapping of sections')

    for section_node, body_node in root.value:
        section = section_node.value
        line = section_node.start_mark.line + 1
        if section not in CONFIG_DEFAULTS:
            raise ConfigError(f'{path}:{line}: unknown section "{section}", '
                              f'expected one of {", ".join(SECTIONS)}')
        if isinstance(body_node, yaml.ScalarNode) and body_node.value in ('', '~', 'null'):
            continue
        if not isinstance(body_node, yaml.MappingNode):
            raise ConfigError(f'{path}:{line}: section "{section}" must be a mapping')
        for key_node, _ in body_node.value:
            if key_node.value not in CONFIG_DEFAULTS[section]:
                raise ConfigError(f'{path}:{key_node.start_mark.line + 1}: unknown key '
                                  f'"{key_node.value}" in section "{section}"')
        resolved[section].update(data[section])

    return resolved


def config_hash(sections: Dict[str, Dict[str, Any]], seed: int) -> str:
    """SHA-256 of the canonical JSON form of the resolved scenario and seed."""
    payload = json.dumps({'sections': sections, 'seed': seed}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def misc_settings(config: Namespace) -> None:
    """
    Various settings set right after argument parsing.
    Loads the scenario file into one Namespace per section, applies CLI overrides,
    creates the output directory, the name string as config.name and the wandb
    logger as config.logger

    Args:
        config (Namespace): configuration object.
    """
    sections = load_scenario_config(config.config)

    if config.out is not None:
        sections['output']['directory'] = config.out
    msg = "Please use --threads >= 1."
    if config.threads < 1:
        raise ConfigError(msg)

    for section, values in sections.items():
        setattr(config, section, Namespace(**values))
    config.sections = sections
    config.hash = config_hash(sections, config.seed)

    name = f'{config.command}_seed:{config.seed}'
    if config.name_add:
        name += f'_{config.name_add}'
    config.name = name
    config.out_dir = os.path.join(sections['output']['directory'], name)
    os.makedirs(config.out_dir, exist_ok=True)

    if config.disable_wandb:
        logger = wandb.init(mode="disabled")
    else:
        logger = wandb.init(project='pilotwave_study', name=name, config=sections, reinit=True)

    # keep logger and step in config to be used downstream
    config.logger = logger
    config.step = 0
    if config.verbose:
        print(f'{name} (config hash {config.hash[:12]})')
    return


def log(dict_to_log: Dict[str, Union[float, np.ndarray]], config: Namespace) -> None:
    """
    Generic function that logs to wandb.
    Input is dict of values to log. Arrays are logged as histograms,
    everything else as scalars.

    Args:
        dict_to_log (dict): keys are str with names of values to log
        config (Namespace): configuration object.
    """
    for key, value in dict_to_log.items():
        if isinstance(value, np.ndarray):
            config.logger.log({key: wandb.Histogram(value)}, step=config.step)
        else:
            config.logger.log({key: value}, step=config.step)


def write_yaml(path: str, record: Dict[str, Any]) -> None:
    """Writes a structured text record (reports and manifests)."""
    with open(path, 'w') as f:
        yaml.safe_dump(_plain(record), f, sort_keys=False, default_flow_style=None)


def write_manifest(config: Namespace, extra: Dict[str, Any] = None) -> str:
    """
    Writes manifest.yaml into the run directory. The manifest holds everything
    needed to re-run the scenario: the resolved sections, seed, hash and versions.
    """
    manifest = {
        'command': config.command,
        'seed': config.seed,
        'config_hash': config.hash,
        'sections': config.sections,
        'versions': {
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(config.out_dir, 'manifest.yaml')
    write_yaml(path, manifest)
    return path


@contextmanager
def lock_output(directory: str):
    """Holds an exclusive .lock file in directory for the duration of a run."""
    os.makedirs(directory, exist_ok=True)
    lock_path = os.path.join(directory, '.lock')
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as err:
        raise ConfigError(f'{directory} is locked by another run ({lock_path})') from err
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield lock_path
    finally:
        if os.path.exists(lock_path):
            os.remove(lock_path)


def _plain(value):
    # numpy scalars and arrays are not yaml-safe
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Namespace):
        return _plain(vars(value))
    return value
