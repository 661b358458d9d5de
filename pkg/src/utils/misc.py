import argparse
import importlib
import os
import random
import signal
import sys
import time
import warnings
from collections import defaultdict
from contextlib import contextmanager
from math import inf
from types import SimpleNamespace
from typing import TYPE_CHECKING

from tqdm import tqdm
from tqdm.utils import disp_trim

from .errors import ConfigError, ReconError

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

__all__ = [
    'ImportMisc',
    'ConfigMisc',
    'PortalMisc',
    'LoggerMisc',
    'TimeMisc',
    'IoMisc',
    ]


class ImportMisc:
    @staticmethod
    def import_current_dir_all(current_file, current_module_name):
        current_directory = os.path.dirname(current_file)
        current_file_name = os.path.basename(current_file)
        for file in sorted(os.listdir(current_directory)):
            if file.endswith('.py') and file != current_file_name:
                module_name = os.path.splitext(file)[0]
                importlib.import_module(f'{current_module_name}.{module_name}')

    class LazyImporter:
        def __init__(self, module_name: str):
            self.module_name = module_name
            self.module = None

        def _import(self):
            if self.module is None:
                self.module = importlib.import_module(self.module_name)
            return self.module

        def __getattr__(self, name):
            module = self._import()
            return getattr(module, name)


if TYPE_CHECKING:
    import numpy as np
    import torch
    import yaml
else:
    np = ImportMisc.LazyImporter('numpy')
    torch = ImportMisc.LazyImporter('torch')
    yaml = ImportMisc.LazyImporter('yaml')


class ConfigMisc:
    @staticmethod
    def resolve_path(path):
        """Relative config paths fall back to the project root when missing from the working directory."""
        if os.path.isabs(path) or os.path.exists(path):
            return path
        candidate = os.path.join(PROJECT_ROOT, path)
        return candidate if os.path.exists(candidate) else path

    @staticmethod
    def get_configs(argv=None, default_main=None, positionals=(), options=None):
        """
        argv: command line tokens (sys.argv[1:] if None)
        default_main: main config used when `--config` is absent
        positionals: list of (name, 'section.key') bound to positional arguments
        options: dict {'--flag': 'section.key'} of extra flags

        Tokens that are not flags or positionals must be `section.key=value` overrides.
        Overriding a key that has no default raises ConfigError.
        """
        args, overrides = ConfigMisc._parse_command_line(argv, default_main, positionals, options or {})

        main_config_path = args.config
        if main_config_path is None:
            raise ConfigError('no main config given (use --config PATH)')
        main_config_path = ConfigMisc.resolve_path(main_config_path)
        default_paths = ConfigMisc._get_additional_config_file_paths(main_config_path)
        cfg = ConfigMisc._parse_yaml_files(default_paths)
        # the main config may only override documented keys
        ConfigMisc.update_nested_namespace(cfg, ConfigMisc.read_from_yaml(main_config_path), strict=True)
        ConfigMisc.setattr_for_nested_namespace(cfg, ['config', 'main'], main_config_path)

        cfg.modified_cfg_dict = defaultdict(dict)
        cfg = ConfigMisc._update_config_with_cli_args(cfg, overrides)

        bindings = [('seed', 'seed_base'), ('out', 'info.work_dir')]
        bindings += [(name, key) for name, key in positionals]
        bindings += [(flag.lstrip('-').replace('-', '_'), key) for flag, key in (options or {}).items()]
        for attr_name, key in bindings:
            value = getattr(args, attr_name, None)
            if value is not None:
                ConfigMisc.setattr_for_nested_namespace(cfg, key.split('.'), value, track_modifications=True, mod_dict_key_prefix='cli', strict=True)
        return cfg

    @staticmethod
    def _parse_command_line(argv, default_main, positionals, options):
        parser = argparse.ArgumentParser(add_help=True)
        parser.add_argument('--config', default=default_main, help='main config file path')
        parser.add_argument('--seed', type=int, default=None, help='overrides seed_base')
        parser.add_argument('--out', default=None, help='output directory (info.work_dir)')
        for flag in options:
            parser.add_argument(flag, default=None)
        for name, _ in positionals:
            parser.add_argument(name)
        tokens = list(sys.argv[1:] if argv is None else argv)
        # overrides look like positionals to argparse, split them off first
        overrides = [t for t in tokens if '=' in t and not t.startswith('-')]
        rest = [t for t in tokens if t not in overrides]
        try:
            args, unknown = parser.parse_known_args(rest)
        except SystemExit as e:
            if e.code == 0:
                raise
            raise ConfigError(f'cannot parse command line: {" ".join(tokens)}')
        if unknown:
            raise ConfigError(f'unrecognized arguments: {" ".join(unknown)}')
        return args, overrides

    @staticmethod
    def _get_additional_config_file_paths(main_config_path):
        if not os.path.exists(main_config_path):
            raise ConfigError(f'config file not found: {main_config_path}')
        main_cfg = ConfigMisc.read_from_yaml(main_config_path)
        return list(getattr(getattr(main_cfg, 'config', SimpleNamespace()), 'additional', []))

    @staticmethod
    def _parse_yaml_files(config_file_paths):
        """Load and merge multiple YAML files (later ones overwrite previous ones)."""
        cfg = SimpleNamespace()
        for path in config_file_paths:
            path = ConfigMisc.resolve_path(path)
            if not os.path.exists(path):
                raise ConfigError(f'config file not found: {path}')
            ConfigMisc.update_nested_namespace(cfg, ConfigMisc.read_from_yaml(path))
        return cfg

    @staticmethod
    def _update_config_with_cli_args(cfg, overrides):
        for arg in overrides:
            key_path, value = arg.split('=', 1)
            try:
                value = yaml.safe_load(value)  # 'true' -> True, '1' -> 1, '[1, 2]' -> list
            except yaml.YAMLError:
                raise ConfigError(f'cannot parse value of {key_path}: {value!r}')
            ConfigMisc.setattr_for_nested_namespace(cfg, key_path.split('.'), value, track_modifications=True, mod_dict_key_prefix='cli', strict=True)
        return cfg

    @staticmethod
    def nested_dict_to_nested_namespace(dictionary):
        if isinstance(dictionary, dict):
            return SimpleNamespace(**{
                key: ConfigMisc.nested_dict_to_nested_namespace(value) for key, value in dictionary.items()
                })
        return dictionary

    @staticmethod
    def nested_namespace_to_nested_dict(namespace, ignore_name_list=[]):
        dictionary = {}
        for name, value in vars(namespace).items():
            if name in ignore_name_list:
                continue
            if isinstance(value, SimpleNamespace):
                dictionary[name] = ConfigMisc.nested_namespace_to_nested_dict(value, ignore_name_list)
            else:
                dictionary[name] = value
        return dictionary

    @staticmethod
    def nested_namespace_to_plain_dict(namespace, ignore_name_list=[], prefix=''):
        plain = {}
        for name, value in vars(namespace).items():
            if name in ignore_name_list:
                continue
            if isinstance(value, SimpleNamespace):
                plain.update(ConfigMisc.nested_namespace_to_plain_dict(value, ignore_name_list, f'{prefix}{name}.'))
            else:
                plain[f'{prefix}{name}'] = value
        return plain

    @staticmethod
    def update_nested_namespace(cfg_base, cfg_new, strict=False, _path=()):
        for name, value in vars(cfg_new).items():
            if strict and not hasattr(cfg_base, name):
                raise ConfigError(f'unknown config key: {".".join(_path + (name,))}')
            if isinstance(value, SimpleNamespace):
                if name not in vars(cfg_base) or not isinstance(getattr(cfg_base, name), SimpleNamespace):
                    if strict:
                        raise ConfigError(f'config key {".".join(_path + (name,))} is not a section')
                    setattr(cfg_base, name, SimpleNamespace())
                ConfigMisc.update_nested_namespace(getattr(cfg_base, name), value, strict, _path + (name,))
            else:
                setattr(cfg_base, name, value)

    @staticmethod
    def setattr_for_nested_namespace(cfg, name_list, value, track_modifications=False, mod_dict_key_prefix='', strict=False):
        namespace_now = cfg
        for i, name in enumerate(name_list[:-1]):
            if not hasattr(namespace_now, name):
                if strict:
                    raise ConfigError(f'unknown config key: {".".join(name_list[:i + 1])}')
                setattr(namespace_now, name, SimpleNamespace())
            namespace_now = getattr(namespace_now, name)
            if not isinstance(namespace_now, SimpleNamespace):
                raise ConfigError(f'config key {".".join(name_list[:i + 1])} is not a section')
        if strict and not hasattr(namespace_now, name_list[-1]):
            raise ConfigError(f'unknown config key: {".".join(name_list)}')
        if strict and isinstance(getattr(namespace_now, name_list[-1]), SimpleNamespace):
            raise ConfigError(f'config key {".".join(name_list)} is a section, override its keys instead')
        if track_modifications:
            modified_cfg_dict = cfg.modified_cfg_dict
            if mod_dict_key_prefix != '':
                mod_dict_key_prefix += '_'
            full_key = '.'.join(name_list)
            if not hasattr(namespace_now, name_list[-1]):
                modified_cfg_dict[f'{mod_dict_key_prefix}added'][full_key] = {'new_value': value}
            else:
                old_value = getattr(namespace_now, name_list[-1])
                if old_value != value:
                    modified_cfg_dict[f'{mod_dict_key_prefix}modified'][full_key] = {'old_value': old_value, 'new_value': value}
                    if type(old_value) != type(value) and old_value is not None:
                        modified_cfg_dict[f'{mod_dict_key_prefix}typechanged'][full_key] = {'old_type': type(old_value).__name__, 'new_type': type(value).__name__}
        setattr(namespace_now, name_list[-1], value)

    @staticmethod
    def auto_track_setattr(cfg, name_list, value):
        ConfigMisc.setattr_for_nested_namespace(cfg, name_list, value, track_modifications=True, mod_dict_key_prefix='auto')

    @staticmethod
    def read_from_yaml(path):
        with open(path, 'r', encoding='utf-8') as f:
            try:
                config = yaml.safe_load(f.read())
            except yaml.YAMLError as e:
                raise ConfigError(f'{path}: {e}')
        if config is None:
            config = {}
        if not isinstance(config, dict):
            raise ConfigError(f'{path}: top level must be a mapping')
        return ConfigMisc.nested_dict_to_nested_namespace(config)

    @staticmethod
    def write_to_yaml(path, config, ignore_name_list=['modified_cfg_dict']):
        with IoMisc.atomic_write(path) as f:
            yaml.safe_dump(ConfigMisc.nested_namespace_to_nested_dict(config, ignore_name_list), f, sort_keys=True)

    @staticmethod
    def get_specific_list(cfg, cfg_keys):
        specific_list = []
        for cfg_key in cfg_keys:
            result = cfg
            for key in cfg_key.split('.'):
                result = getattr(result, key)
            if result is not None:
                specific_list.append(str(result))
        return specific_list


class PortalMisc:
    @staticmethod
    def launch(portal_fn, argv=None, **config_kwargs):
        """
        Build the config from the command line and run `portal_fn(cfg)`.
        Returns the process exit code: 0 on success, 2 with a one-line
        `error: <category>: <message>` on stderr for known failures.
        """
        try:
            cfg = ConfigMisc.get_configs(argv, **config_kwargs)
            portal_fn(cfg)
        except ReconError as e:
            print(e.one_line(), file=sys.stderr)
            return 2
        except KeyboardInterrupt:
            print('error: interrupted: caught SIGINT', file=sys.stderr)
            return 130
        return 0

    @staticmethod
    def set_start_time(cfg, config_name='start_time'):
        ConfigMisc.auto_track_setattr(cfg, ['info', config_name], TimeMisc.get_time_string())

    @staticmethod
    def seed_everything(cfg):
        seed = cfg.seed_base
        os.environ['PYTHONHASHSEED'] = str(seed)
        random.seed(seed)
        np.random.seed(seed)
        torch.manual_seed(seed)

    @staticmethod
    def special_config_adjustment(cfg):
        if cfg.info.work_dir is None:
            raise ConfigError('no output directory given (use --out DIR)')
        if cfg.special.no_logger:
            ConfigMisc.auto_track_setattr(cfg, ['info', 'wandb', 'wandb_enabled'], False)
            ConfigMisc.auto_track_setattr(cfg, ['info', 'tensorboard', 'tensorboard_enabled'], False)
        if cfg.env.num_threads > 0:
            torch.set_num_threads(cfg.env.num_threads)
        if cfg.special.debug == 'no_workers':
            ConfigMisc.auto_track_setattr(cfg, ['env', 'num_workers'], 0)

    @staticmethod
    def save_configs(cfg):
        os.makedirs(cfg.info.work_dir, exist_ok=True)
        ConfigMisc.write_to_yaml(os.path.join(cfg.info.work_dir, 'cfg.yaml'), cfg, ignore_name_list=['modified_cfg_dict'])
        if cfg.special.print_config_start:
            PortalMisc._print_config(cfg, modified_config_only=False)
        else:
            PortalMisc._print_config(cfg, modified_config_only=True)

    @staticmethod
    def _print_config(cfg, modified_config_only=False, file=None):
        ADDED, MODIFIED, TYPECHANGED = '\033[32m', '\033[34m', '\033[31m'
        FADED, RESET = '\033[30m', '\033[0m'
        SOURCE_COLORS = {'cli': '\033[33m', 'auto': '\033[36m'}

        modified_cfg_dict = cfg.modified_cfg_dict
        lines = []
        for key, value in sorted(ConfigMisc.nested_namespace_to_plain_dict(cfg, ['modified_cfg_dict']).items()):
            key_str = f' ├─ {key} '
            key_str += '-' * max(1, 44 - len(key_str)) + ' '
            changed = ''
            for source in ['cli', 'auto']:
                tag = f'{SOURCE_COLORS[source]}{source}: {RESET}'
                if key in modified_cfg_dict[f'{source}_added']:
                    changed = f'{tag}{ADDED}{value}{RESET}'
                elif key in modified_cfg_dict[f'{source}_modified']:
                    old_value = modified_cfg_dict[f'{source}_modified'][key]['old_value']
                    color = TYPECHANGED if key in modified_cfg_dict[f'{source}_typechanged'] else MODIFIED
                    changed = f'{FADED}{old_value} -> {tag}{color}{value}{RESET}'
            if changed:
                lines.append(key_str + changed)
            elif not modified_config_only:
                lines.append(key_str + str(value))
        title = f'{"Modified" if modified_config_only else "All"} Parameters: ({ADDED}added, {MODIFIED}modified, {TYPECHANGED}typechanged{RESET})'
        print(LoggerMisc.block_wrapper('\n'.join([title] + lines), s='='), file=file)

    @staticmethod
    def init_loggers(cfg):
        loggers = SimpleNamespace()
        if cfg.info.wandb.wandb_enabled:
            import wandb
            wandb_name = '_'.join([cfg.info.task_type] + ConfigMisc.get_specific_list(cfg, cfg.info.name_tags))
            loggers.wandb_run = wandb.init(
                project=cfg.info.project_name,
                name=wandb_name,
                dir=cfg.info.work_dir,
                config=ConfigMisc.nested_namespace_to_plain_dict(cfg, cfg.special.logger_config_ignore + ['modified_cfg_dict']),
                )
        if cfg.info.tensorboard.tensorboard_enabled:
            from torch.utils.tensorboard import SummaryWriter
            loggers.tensorboard_run = SummaryWriter(log_dir=os.path.join(cfg.info.work_dir, 'tensorboard'))

        loggers.log_file = open(os.path.join(cfg.info.work_dir, 'logs.log'), 'a')
        print(LoggerMisc.block_wrapper(f'[{cfg.info.task_type}] started at {cfg.info.start_time}, pid {os.getpid()}', s='#'), file=loggers.log_file)
        loggers.log_file.flush()
        return loggers

    @staticmethod
    def end_everything(cfg, loggers):
        if cfg.special.print_config_end:
            PortalMisc._print_config(cfg, modified_config_only=False, file=getattr(loggers, 'log_file', None))
        if hasattr(loggers, 'log_file'):
            loggers.log_file.close()
        if hasattr(loggers, 'tensorboard_run'):
            loggers.tensorboard_run.close()
        if hasattr(loggers, 'wandb_run'):
            loggers.wandb_run.finish()

    @staticmethod
    def interrupt_handler(cfg):
        """Handles SIGINT signal (Ctrl+C) by exiting the program gracefully."""
        def signal_handler(sig, frame):
            print(f'Caught SIGINT signal during [{cfg.info.task_type}], exiting gracefully...')
            raise KeyboardInterrupt

        signal.signal(signal.SIGINT, signal_handler)


class LoggerMisc:
    class MultiTQDM:
        def __init__(self, postlines=1, *args, **kwargs) -> None:
            self.bar_main = tqdm(*args, **kwargs)
            self.postlines = postlines
            self.bar_postlines = [tqdm(
                total=0,
                dynamic_ncols=True,
                position=i + 1,
                maxinterval=inf,
                bar_format='{desc}',
                disable=kwargs.get('disable', False),
            ) for i in range(postlines)]

        def update(self, n):
            self.bar_main.update(n)

        def close(self):
            self.bar_main.close()
            for bar_postline in self.bar_postlines:
                bar_postline.close()

        def refresh(self):
            self.bar_main.refresh()
            for bar_postline in self.bar_postlines:
                bar_postline.refresh()

        def set_description_str(self, desc, refresh=True):
            self.bar_main.set_description_str(desc, refresh)

        def set_postfix_str(self, desc, refresh=True):
            self.bar_main.set_postfix_str(desc, refresh)

        def _trim(self, desc):
            ncols = getattr(self.bar_main, 'ncols', None)
            return disp_trim(str(desc), ncols if ncols is not None else 80)

        def set_postlines_str(self, desc: list, refresh=True):
            assert len(desc) == self.postlines
            for bar_postline, d in zip(self.bar_postlines, desc):
                bar_postline.set_description_str(self._trim(d), refresh)

    @staticmethod
    def block_wrapper(input_object, s='=', block_width=80):
        str_input = str(input_object)
        if not str_input.endswith('\n'):
            str_input += '\n'
        return '\n' + s * block_width + '\n' + str_input + s * block_width + '\n'

    @staticmethod
    def format_value(value):
        if value is None:
            return 'undefined'
        if isinstance(value, bool):
            return str(value)
        if isinstance(value, float):
            return f'{value:.9g}'
        return str(value)

    @staticmethod
    def key_value_block(report: dict):
        return ''.join(f'{k}={LoggerMisc.format_value(v)}\n' for k, v in report.items())

    @staticmethod
    def logging(loggers, group, output_dict, step):
        scalars = {k: v for k, v in output_dict.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
        if hasattr(loggers, 'wandb_run'):
            loggers.wandb_run.log({f'{group}/{k}': v for k, v in scalars.items()}, step=step)
        if hasattr(loggers, 'tensorboard_run'):
            for k, v in scalars.items():
                loggers.tensorboard_run.add_scalar(f'{group}/{k}', v, global_step=step)


class TimeMisc:
    @staticmethod
    def get_time_string():
        return time.strftime('%Y-%m-%d-%H-%M-%S', time.localtime(time.time()))

    class Timer:
        def __init__(self):
            self.t_start = time.time()
            self.t = self.t_start

        def press(self):
            self.t = time.time()

        @property
        def info(self):
            now = time.time()
            return {
                'all': now - self.t_start,
                'last': now - self.t
                }

    class TimerContext:
        def __init__(self, block_name, print_threshold=0.0, do_print=True, file=None):
            self.block_name = block_name
            self.print_threshold = print_threshold
            self.do_print = do_print
            self.file = file

        def __enter__(self):
            self.timer = TimeMisc.Timer()
            return self

        def __exit__(self, *_):
            if self.do_print and self.timer.info['all'] >= self.print_threshold:
                m_indent = '    ' + self.block_name
                if len(m_indent) > 40:
                    warnings.warn(f'Block name "{self.block_name}" with indent is too long (>40) to display, please check.')
                if len(m_indent) < 38:
                    m_indent += ' ' + '-' * (38 - len(m_indent)) + ' '
                print(f'{m_indent:40s}elapsed time: {self.timer.info["all"]:.4f}', file=self.file)


class IoMisc:
    @staticmethod
    @contextmanager
    def atomic_write(path, mode='w', encoding='utf-8'):
        """Write to a temp file next to `path`, then rename it over `path`."""
        path = str(path)
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        tmp_path = os.path.join(directory, f'.{os.path.basename(path)}.tmp-{os.getpid()}')
        kwargs = {} if 'b' in mode else {'encoding': encoding, 'newline': '\n'}
        try:
            with open(tmp_path, mode, **kwargs) as f:
                yield f
            os.replace(tmp_path, path)
        finally:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
