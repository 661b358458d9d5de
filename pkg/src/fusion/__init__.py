from .mesh import Mesh, extract_mesh, read_ply, write_ply
from .scheduler import (FragmentState, FusionEvent, FusionGate,
                        FusionScheduler, fusion_scheduler)
from .volume import (TsdfVolume, VolumeConfig, VoxelBlock, fill_from_sdf,
                     integrate_frame)
