"""Modified-VGG16 skin disease classification engine."""

from .network import build_modified_vgg16, init_all, init_head, set_trainable

__all__ = ["build_modified_vgg16", "init_all", "init_head", "set_trainable"]
__version__ = "0.1.0"
