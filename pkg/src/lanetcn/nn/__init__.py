from .layers import (
    BlockCache,
    ConvLayer,
    ResidualBlock,
    causal_conv_backward,
    causal_conv_forward,
    dropout_backward,
    dropout_forward,
    relu_backward,
    relu_forward,
    residual_block_backward,
    residual_block_forward,
)
from .models import (
    FAMILIES,
    ModelCache,
    ModelSpec,
    cnn_forward,
    default_spec,
    forward,
    init_params,
    model_backward,
    param_shapes,
    receptive_field,
    rnn_forward,
    tcn_forward,
)
from .serialize import dumps, load_model, loads, save_model
