from torch import nn

from src.criterions.modules.losses import LossWeights
from src.utils.register import Register

criterion_register = Register('criterion')


class CriterionBase(nn.Module):
    """
    Scores a reconstruction. Criteria hold no trainable parameters; they reuse the
    nn.Module plumbing only for registration and composition.
    """
    registered_name: str

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        losses = cfg.losses
        self.weights = LossWeights(
            lambda_ph_extra=losses.lambda_ph_extra,
            lambda_dc=losses.lambda_dc,
            tau=losses.tau,
            alpha_ssim=losses.alpha_ssim,
            outlier_percentile=losses.outlier_percentile,
            )
        self.primary_criterion = 'loss_total'

    def untrainable_check(self):
        trainable_params = [p for p in self.parameters() if p.requires_grad]
        assert len(trainable_params) == 0, f'Criterion {self.__class__} has trainable parameters.'

    def forward(self, outputs, targets, *args, **kwargs):
        """
        outputs: dict of estimates (e.g. frame poses)
        targets: dict of observations (e.g. frame bundles)
        return
            loss_dict as {'loss_total': ..., 'loss_ph': ..., ...},
            metrics_dict as {'metric1': metric1, ...}
        """
        return self._get_iter_loss_and_metrics(outputs, targets, *args, **kwargs)

    def _get_iter_loss_and_metrics(self, outputs, targets, *args, **kwargs):
        raise NotImplementedError
