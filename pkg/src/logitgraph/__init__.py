"""Structure-aware logit distillation losses with oracle solvers and
verification harnesses.

Core surface:

* tensors:   LGT1 tensor IO and deterministic numeric primitives
* graphs:    top-k sparsification and co-activation graphs
* losses:    sorted-W1 / graph / KL / cross-entropy kernels, fused loss
* gw:        exact, brute-force and entropic Gromov-Wasserstein oracles
* stability: gradient-bound and robustness experiments
* service:   FastAPI wrapper; cli: thin client
"""

__version__ = "0.1.0"

from .losses import LossConfig, LossReport, fused_loss  # noqa: F401
from .tensors import Tensor, read_tensor, tensor_from, write_tensor  # noqa: F401
