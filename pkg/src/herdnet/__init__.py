"""herdnet: one activity-recognition trunk for many animal species.

A single 1-D convolutional classifier is trained jointly on accelerometer
windows from several species. Each species gets its own low-rank additive
convolution branch, its own batch-normalization statistics and its own
classifier head, while the full-rank convolution kernels stay shared.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, grad_check

__all__ = ["Tensor", "backward", "grad_check", "__version__"]
