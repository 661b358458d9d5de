import random
import signal
from functools import partial

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset, SequentialSampler

from src.utils.register import Register

data_module_register = Register('data_module')


class DataModuleBase:
    """
    Builds the datasets of one data source and hands out dataloaders that yield samples
    one at a time, in index order.
    """
    registered_name: str
    splits = ()

    def __init__(self, cfg):
        self.cfg = cfg
        self.datasets = {}

    def build_dataset(self, split) -> Dataset:
        raise NotImplementedError

    def get_dataset(self, split) -> Dataset:
        if split not in self.splits:
            raise NotImplementedError(f'Invalid split {split}')
        if split not in self.datasets:
            self.datasets[split] = self.build_dataset(split)
        return self.datasets[split]

    @staticmethod
    def collate_fn(sample):
        """
        Samples are passed through untouched (no batching, no tensor conversion):
        datasets return domain objects such as FrameBundle.
        """
        return sample

    def get_dataloader(self, split: str) -> DataLoader:
        dataset = self.get_dataset(split)
        num_workers = self.cfg.env.num_workers
        return DataLoader(
            dataset=dataset,
            batch_size=None,
            sampler=SequentialSampler(dataset),
            collate_fn=self.collate_fn,
            num_workers=num_workers,
            worker_init_fn=self.get_worker_init_fn(),
            generator=self.get_generator(),
            prefetch_factor=self.cfg.env.prefetch_factor if num_workers > 0 else None,
            persistent_workers=False,
            )

    @staticmethod
    def _worker_init_fn(worker_id, base_seed):
        signal.signal(signal.SIGINT, signal.SIG_IGN)
        worker_seed = base_seed + worker_id
        random.seed(worker_seed)
        np.random.seed(worker_seed)

    def get_worker_init_fn(self):
        return partial(DataModuleBase._worker_init_fn, base_seed=self.cfg.seed_base)

    def get_generator(self):
        g = torch.Generator()
        g.manual_seed(self.cfg.seed_base)
        return g
