from .tensor import (
    Tensor, param, no_grad, backward, grads_of, zero_grads,
    add, mul, matmul, reshape, swapaxes, embedding, layer_norm,
    gelu, softmax, dropout, tsum, tmean, cross_entropy,
)
from .layers import (
    AttentionParams, MlpParams, BlockParams,
    causal_self_attention, transformer_block, mlp,
)
from .optim import OptState, init_opt_state, adamw_step, linear_decay_lr
