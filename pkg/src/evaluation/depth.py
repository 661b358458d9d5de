from dataclasses import asdict, dataclass, fields
from typing import Iterable

import numpy as np

from src.geometry import DepthRaster
from src.utils.errors import DimensionMismatchError, InvalidInputError

__all__ = [
    'DepthMetrics',
    'depth_metrics',
    'mean_depth_metrics',
    ]


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


def depth_metrics(pred: DepthRaster, gt: DepthRaster, median_scaling=True) -> DepthMetrics:
    """Standard depth errors over jointly valid pixels, after per-image median scaling."""
    if pred.values.shape != gt.values.shape:
        raise DimensionMismatchError(f'prediction {pred.values.shape} and ground truth {gt.values.shape} differ in shape')
    valid = pred.valid & gt.valid
    if not valid.any():
        raise InvalidInputError('no pixel is valid in both prediction and ground truth')
    p = pred.values[valid]
    g = gt.values[valid]
    if median_scaling:
        p = p * (np.median(g) / np.median(p))

    thresh = np.maximum(p / g, g / p)
    diff = p - g
    diff_log = np.log(p) - np.log(g)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean(diff_log ** 2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25 ** 2)),
        delta3=float(np.mean(thresh < 1.25 ** 3)),
        )


def mean_depth_metrics(metrics: Iterable[DepthMetrics]) -> DepthMetrics:
    metrics = list(metrics)
    if not metrics:
        raise InvalidInputError('no depth metrics to average')
    return DepthMetrics(**{c: float(np.mean([getattr(m, c) for m in metrics])) for c in DepthMetrics.columns()})
