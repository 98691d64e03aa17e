from .params import ParamSet, ParamError, init_uniform
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    save_checkpoint,
    load_checkpoint,
    average_checkpoints,
)
from .adam import AdamState, adam_step, clip_gradients, NumericError
from .encoder import EncoderConfig, init_encoder_params, encode, encode_backward
from .decoder import (
    DecoderConfig,
    init_decoder_params,
    decoder_step,
    decoder_forward,
    decoder_backward,
    BOS_OFFSET,
)
