import sys

from src.gears import GearManager
from src.utils.misc import PortalMisc


def run_portal(cfg):
    # set start_time
    PortalMisc.set_start_time(cfg)

    # interrupt handler
    PortalMisc.interrupt_handler(cfg)

    # special config adjustment (work_dir, debug, threads)
    PortalMisc.special_config_adjustment(cfg)

    # seed everything
    PortalMisc.seed_everything(cfg)

    # save configs to work_dir as .yaml file (and print config to CLI if needed)
    PortalMisc.save_configs(cfg)

    # init loggers (wandb/tensorboard and local:log_file)
    loggers = PortalMisc.init_loggers(cfg)

    # main gear
    gear = GearManager(cfg, loggers).build_gear()
    gear.run()

    # end everything
    PortalMisc.end_everything(cfg, loggers)


def main(argv=None):
    return PortalMisc.launch(
        run_portal,
        argv,
        default_main='configs/templates/run.yaml',
        positionals=[('sequence_dir', 'data.sequence_dir')],
        )


if __name__ == '__main__':
    sys.exit(main())
