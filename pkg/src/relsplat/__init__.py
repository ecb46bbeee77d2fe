"""relsplat: reliability-gated high-frequency injection for CPU 3D Gaussian
splatting trained from low-resolution multi-view observations."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
