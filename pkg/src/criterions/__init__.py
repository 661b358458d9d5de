from src.utils.misc import ImportMisc

from .modules.criterion_base import CriterionBase, criterion_register

ImportMisc.import_current_dir_all(__file__, __name__)


class CriterionManager(object):
    def __init__(self, cfg, loggers) -> None:
        self.cfg = cfg
        self.loggers = loggers

    def build_criterion(self) -> CriterionBase:
        criterion_choice = self.cfg.losses.criterion_choice
        criterion: CriterionBase = criterion_register.get(criterion_choice)(self.cfg)
        criterion.untrainable_check()
        print('criterion built successfully.', file=getattr(self.loggers, 'log_file', None))
        return criterion
