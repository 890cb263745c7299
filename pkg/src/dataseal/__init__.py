"""DataSeal: secret-keyed checksum encoding for verifiable outsourced matrix
computation over a simulated SIMD homomorphic backend."""

from dataseal._kernels import ACTIVE as KERNEL_IMPLEMENTATION

__version__ = "0.1.0"

__all__ = ["KERNEL_IMPLEMENTATION", "__version__"]
