from src.utils.misc import ImportMisc

from .modules.gear_base import GearBase, gear_register

ImportMisc.import_current_dir_all(__file__, __name__)


class GearManager(object):
    def __init__(self, cfg, loggers) -> None:
        self.cfg = cfg
        self.loggers = loggers

    def build_gear(self, *args, **kwargs) -> GearBase:
        gear: GearBase = gear_register.get(self.cfg.info.gear_choice)(self.cfg, self.loggers, *args, **kwargs)
        return gear
