from src.evaluation import write_report
from src.synthdata import SceneConfig, SequenceSpec, TubeScene, generate_sequence
from src.utils.misc import TimeMisc

from .modules.gear_base import GearBase, gear_register


@gear_register('synthesis')
class SynthesisGear(GearBase):
    """Builds the tube scene and writes a synthetic sequence directory into the work dir."""
    def __init__(self, cfg, loggers):
        super().__init__(cfg, loggers)
        self.scene_cfg = SceneConfig.from_cfg(cfg)
        self.spec = SequenceSpec.from_cfg(cfg)

    def _run(self):
        seed = self.cfg.seed_base
        with TimeMisc.TimerContext('scene', file=self.log_file):
            scene = TubeScene.build(self.scene_cfg, seed=seed)
        print(f'scene: {len(scene.landmarks)} landmarks on a {scene.length} cm tube', file=self.log_file)

        pbar = self.progress_bar(self.spec.frames, desc='render')
        summary = generate_sequence(scene, self.spec, self.work_dir, seed=seed, num_workers=self.cfg.env.num_workers, pbar=pbar)
        pbar.close()

        report = {'landmarks': len(scene.landmarks), **summary.as_dict()}
        write_report(self.out_path('synth_report.txt'), report)
        return report
