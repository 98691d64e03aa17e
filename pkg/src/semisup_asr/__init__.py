"""Semi- and weakly-supervised sequence recognition toolkit.

Trains small recurrent encoder / encoder-decoder models on synthetic
acoustic-style data with frame-level distillation, sequence-level
self-labeling, and metadata-based weak supervision.
"""

__version__ = "0.1.0"
