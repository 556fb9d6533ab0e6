"""Dynamic-scene Gaussian splatting with a forward-warping deformation field.

A canonical set of anisotropic 3D Gaussians is warped per timestamp by a
time-conditioned MLP and composited together with a separate static set by a
differentiable CPU tile rasterizer. Training, evaluation, snapshot IO, a CLI
and an HTTP render service live in the submodules.
"""

from .camera import Camera, look_at_w2c
from .core_math import (
    positional_encoding,
    quat_multiply,
    quat_normalize,
    quat_to_rotmat,
    covariance_from,
    sh_evaluate,
)
from .deformation import (
    DeformConfig,
    DeformOutput,
    DeformationField,
    apply_deformation,
    apply_deformation_batch,
    deform_set,
)
from .errors import (
    ConfigError,
    DegenerateQuaternion,
    DynasplatError,
    EmptySplitError,
    FormatError,
    NonFiniteGradient,
    ShapeError,
    StateError,
)
from .gaussians import Gaussian, GaussianSet
from .metrics import ms_ssim, psnr, ssim
from .optimizer import AdamState, DensifyStats, adam_step, densify_and_prune, lr_factor
from .rasterizer import (
    RenderOutput,
    rasterize_backward,
    rasterize_forward,
    reference_render,
    render,
)
from .training import (
    Metrics,
    Scene,
    TrainConfig,
    compute_loss,
    evaluate,
    init_scene,
    render_scene,
    run_ablation_suite,
    train,
)

__version__ = "0.1.0"
