import datetime
import statistics
from collections import defaultdict, deque
from math import nan

import numpy as np
import torch

from .misc import TimeMisc

__all__ = [
    'MetricLogger',
    'ValueMetric',
    ]


class ValueMetric(object):
    def __init__(self, window_size=None, format=None, final_format=None, high_prior=False, low_prior=False, no_print=False):
        if format is None:  # current value and running average
            format = '{value:.4f} ({avg:.4f})'
        if final_format is None:  # summary after the whole sequence
            final_format = '({avg:.4f} ± {std:.4f}) [{min:.4f}, {max:.4f}]'
        self.value_now = 0.0
        self.deque = deque(maxlen=window_size)
        self.sample_count = 0
        self.total = 0.0
        self.format = format
        self.final_format = final_format
        assert not (high_prior and low_prior), 'high_prior and low_prior cannot be True at the same time.'
        self.high_prior = high_prior
        self.low_prior = low_prior
        self.no_print = no_print

    def append_one_value(self, value, sample_count=1):
        self.deque.append(value)
        self.value_now = value
        self.sample_count += sample_count
        self.total += value * sample_count

    @property
    def std(self):
        return statistics.stdev(self.deque) if len(self.deque) > 1 else nan

    @property
    def avg(self):
        return self.total / self.sample_count if self.sample_count > 0 else nan

    @property
    def min(self):
        return min(self.deque) if len(self.deque) > 0 else nan

    @property
    def max(self):
        return max(self.deque) if len(self.deque) > 0 else nan

    @property
    def value(self):
        return self.value_now

    def get_str(self, final=False):
        f = self.final_format if final else self.format
        return f.format(
            value=self.value if 'value' in f else None,
            avg=self.avg if 'avg' in f else None,
            min=self.min if 'min' in f else None,
            max=self.max if 'max' in f else None,
            std=self.std if 'std' in f else None,
        )


class MetricLogger(object):
    """
    Per-frame progress of a pipeline stage: a MultiTQDM bar with the running
    metrics on a postline, and a final summary written to the log file.
    """
    def __init__(self, cfg, loggers, pbar=None, delimiter='  ', header=''):
        self.print_freq = max(1, cfg.info.cli_log_freq)
        self.log_file = getattr(loggers, 'log_file', None)
        self.pbar = pbar
        self.delimiter = delimiter
        self.header = header
        self.metrics = defaultdict(ValueMetric)
        self.iter_len = 0
        self.timer = TimeMisc.Timer()

    def add_metrics(self, metrics):
        for metric in metrics:
            if isinstance(metric, str):
                self.metrics[metric] = ValueMetric()
            elif isinstance(metric, dict):
                self.metrics.update(metric)

    def update_metrics(self, sample_count=1, **kwargs):
        for k, v in kwargs.items():
            if isinstance(v, (torch.Tensor, np.ndarray, np.number)):
                v = v.item()
            if isinstance(v, bool):
                v = int(v)
            assert isinstance(v, (float, int)), f'{v} is {type(v)}, not float or int.'
            self.metrics[k].append_one_value(v, sample_count)

    def __getattr__(self, attr):
        if attr in self.__dict__.get('metrics', {}):
            return self.metrics[attr]
        raise AttributeError(f'"{type(self).__name__}" object has no attribute "{attr}"')

    def metrics_str(self, final=False):
        high_prior_metric_s = []
        metrics_s = []
        low_prior_metrics_s = []
        for name, metric in self.metrics.items():
            if metric.no_print:
                continue
            metric_str = f'{name}: {metric.get_str(final)}'
            if metric.high_prior:
                high_prior_metric_s.append(metric_str)
            elif metric.low_prior:
                low_prior_metrics_s.append(metric_str)
            else:
                metrics_s.append(metric_str)
        return self.delimiter.join(high_prior_metric_s + metrics_s + low_prior_metrics_s)

    def log_every(self, iterable):
        self.iter_len = len(iterable)
        step_time = ValueMetric(format='{value:.4f} ({avg:.4f})')
        if self.pbar is not None:
            self.pbar.set_description_str(self.header, refresh=False)
            post_msg = '\033[32m [{0}/{1}] eta: {eta} \033[30m t_step: {step_time}\033[0m'

        self.timer = TimeMisc.Timer()
        for idx, obj in enumerate(iterable, start=1):
            yield obj
            step_time.append_one_value(self.timer.info['last'])
            if self.pbar is not None and (idx % self.print_freq == 0 or idx == self.iter_len):
                eta_string = str(datetime.timedelta(seconds=int(step_time.avg * (self.iter_len - idx))))
                self.pbar.set_postfix_str(post_msg.format(idx, self.iter_len, eta=eta_string, step_time=step_time.get_str()), refresh=False)
                self.pbar.set_postlines_str([f'    \033[30m{self.metrics_str()}\033[0m'], refresh=False)
                step = self.print_freq if idx % self.print_freq == 0 else self.iter_len % self.print_freq
                self.pbar.update(n=step)
                self.pbar.refresh()
            self.timer.press()

    def output_dict(self, no_avg_list=[], final_print=False):
        if final_print:
            self._final_print()
        return {
            k: v.value if ('all' in no_avg_list or k in no_avg_list) else v.avg
            for k, v in self.metrics.items()
            }

    def _final_print(self):
        final_msg = f'{self.header} finished. Summary:\n    {self.metrics_str(final=True)}'
        total_time = self.timer.info['all']
        final_msg += f'\n    Elapsed time: {datetime.timedelta(seconds=int(total_time))} ({total_time / max(self.iter_len, 1):.4f} sec / frame)\n'
        if self.log_file is not None:
            print(final_msg, file=self.log_file)
            self.log_file.flush()
        if self.pbar is not None:
            print('\n' * (self.pbar.postlines + 1) + '\033[34m' + final_msg + '\033[0m')
