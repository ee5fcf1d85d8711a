"""Fast 3D convolution kernels for light-weight video networks.

Direct reference convolutions, Winograd fast paths (1D/2D/3D and the hybrid
temporal+spatial form), the temporal residual gradient and fully separable
block, and parameter/multiplication accounting for layer stacks.
"""

from .blocks import FsbWeights, LayerSpec, ModelSpec, fsb_forward, model_forward, model_parse, trg_forward
from .complexity import analyze_model, mult_count, param_count
from .direct import ConvGeometry, conv1d_temporal, conv2d_depthwise, conv3d_direct, conv_pointwise
from .errors import ConfigError, FormatError, ShapeError, SizeError, UnsupportedError
from .tensor5 import allclose, tensor_new, tensor_random, tensor_read, tensor_write
from .winograd import (HybridPlan, WinogradPlan, cook_toom_plan, hfa_fsb_forward, hybrid_plan,
                       wino1d_tile, wino2d_tile, wino3d_tile, wino_conv1d_temporal, wino_conv2d_depthwise,
                       wino_conv3d)

__version__ = "0.1.0"
