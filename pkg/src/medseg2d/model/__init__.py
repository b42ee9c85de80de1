from .network import (  # noqa: F401
    DecoderOutput,
    ModelConfig,
    SegModel,
    parameter_groups,
    remove_adapters,
)
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
