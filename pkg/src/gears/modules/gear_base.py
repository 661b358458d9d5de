import os
from types import SimpleNamespace

from src.utils.misc import LoggerMisc, TimeMisc
from src.utils.register import Register

gear_register = Register('gear')


class GearBase:
    """
    One portal's worth of work. `run` wraps `_run` between `_before_run` and
    `_after_run`; the returned dict is logged and written as the gear's report.
    """
    registered_name: str

    def __init__(self, cfg: SimpleNamespace, loggers: SimpleNamespace):
        self.cfg = cfg
        self.loggers = loggers
        self.work_dir = cfg.info.work_dir
        self.log_file = getattr(loggers, 'log_file', None)

    def out_path(self, name):
        return os.path.join(self.work_dir, name)

    def run(self) -> dict:
        self._before_run()
        with TimeMisc.TimerContext(f'{self.registered_name} gear', file=self.log_file):
            report = self._run()
        self._after_run(report)
        return report

    def _before_run(self):
        print(LoggerMisc.block_wrapper(f'{self.registered_name} gear started'), file=self.log_file)

    def _run(self) -> dict:
        raise NotImplementedError

    def _after_run(self, report: dict):
        if self.log_file is not None:
            print(LoggerMisc.key_value_block(report), file=self.log_file)
            self.log_file.flush()
        LoggerMisc.logging(self.loggers, self.registered_name, report, step=0)

    def progress_bar(self, total, desc=''):
        return LoggerMisc.MultiTQDM(
            postlines=1,
            total=total,
            desc=desc,
            dynamic_ncols=True,
            disable=not self.cfg.info.show_progress,
            leave=False,
            )
