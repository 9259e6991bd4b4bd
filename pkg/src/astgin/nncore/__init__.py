"""Small numpy autodiff core used by the GCN and attention layers."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import REGISTRY, grad_check, run_registry
from .optim import AdamState, ParameterStore, adam_step, l2_penalty
from .tensor import (
    ACTIVATIONS,
    Tensor,
    add,
    as_tensor,
    checked,
    concat,
    div,
    dropout,
    embedding_lookup,
    get_default_dtype,
    identity,
    is_checked,
    layer_norm,
    matmul,
    mean,
    mse,
    mul,
    no_grad,
    precision,
    relu,
    reshape,
    set_checked,
    set_default_dtype,
    sigmoid,
    slice_,
    softmax,
    sub,
    sum_,
    swapaxes,
    tanh,
    transpose,
)
