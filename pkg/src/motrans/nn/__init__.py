from .autodiff import Tensor, no_grad
from .gradcheck import GradCheckReport, grad_check
from .model import (
    LayerSpec,
    ModelPlan,
    Transformer,
    build_plan,
    count_params,
    forward,
    init_params,
    load_params,
    save_params,
)

__all__ = [
    "GradCheckReport",
    "LayerSpec",
    "ModelPlan",
    "Tensor",
    "Transformer",
    "build_plan",
    "count_params",
    "forward",
    "grad_check",
    "init_params",
    "load_params",
    "no_grad",
    "save_params",
]
