from .builder import FragmentBuilder, FrameRecord
from .connectivity import ConnectivityGraph
from .fragment import (Fragment, FragmentConfig, FragmentDecision,
                       should_create_fragment)
from .overlap import frustum_overlap
