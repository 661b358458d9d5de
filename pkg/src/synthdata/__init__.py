from .scene import SceneConfig, TubeScene
from .sequence import (PATH_MODES, SequenceSpec, SynthesisSummary,
                       SyntheticFrame, SyntheticFrames, camera_path,
                       generate_sequence, raycast_depth)
