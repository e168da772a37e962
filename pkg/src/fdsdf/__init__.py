"""Neural signed distance fields with finite-difference curvature regularization."""

__version__ = "0.1.0"

from .ad_engine import ScalarNode, TangentTriple, Tape  # noqa: E402
from .fd_curvature import (gaussian_curvature_fd, projected_determinant_fd,  # noqa: E402
                           second_form)
from .frames import complete_frames, make_stencil  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .losses import LossWeights, RegularizerConfig, total_loss  # noqa: E402
from .siren import SirenParams, TapedSiren  # noqa: E402
from .trainer import TrainConfig, TrainReport, train  # noqa: E402

__all__ = [
    "BACKEND", "LossWeights", "RegularizerConfig", "ScalarNode", "SirenParams", "TangentTriple",
    "Tape", "TapedSiren", "TrainConfig", "TrainReport", "complete_frames", "gaussian_curvature_fd",
    "make_stencil", "projected_determinant_fd", "second_form", "total_loss", "train",
]
