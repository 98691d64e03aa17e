"""Bidirectional recurrent encoder with time subsampling.

Subsampling concatenates `subsample_factor` adjacent frames after the
first layer (zero-padded at the tail), so the output always has
ceil(T / subsample_factor) rows.
"""

from dataclasses import dataclass

import numpy as np

from .gru import (
    cell_shapes,
    gru_sequence_forward,
    gru_sequence_backward,
)


class ConfigError(Exception):
    pass


@dataclass
class EncoderConfig:
    input_dim: int
    num_layers: int = 2
    hidden_units: int = 32
    subsample_factor: int = 2
    bidirectional: bool = True

    def __post_init__(self):
        if self.subsample_factor < 1:
            raise ConfigError("subsample_factor must be >= 1")
        if self.num_layers < 1 or self.hidden_units < 1 or self.input_dim < 1:
            raise ConfigError("encoder dims must be positive")

    @property
    def directions(self):
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    def layer_input_dim(self, layer):
        width = self.hidden_units * len(self.directions)
        if layer == 0:
            return self.input_dim
        if layer == 1:
            return width * self.subsample_factor
        return width

    @property
    def output_dim(self):
        width = self.hidden_units * len(self.directions)
        if self.num_layers == 1:
            return width * self.subsample_factor
        return width


def encoder_shapes(cfg, prefix="enc"):
    shapes = {}
    for layer in range(cfg.num_layers):
        in_dim = cfg.layer_input_dim(layer)
        for direction in cfg.directions:
            shapes.update(
                cell_shapes("%s.l%d.%s" % (prefix, layer, direction), in_dim, cfg.hidden_units)
            )
    return shapes


def init_encoder_params(cfg, seed, prefix="enc"):
    from .params import init_uniform

    return init_uniform(encoder_shapes(cfg, prefix), seed)


def _subsample(xs, factor):
    T, d = xs.shape
    out_len = -(-T // factor)
    padded = np.zeros((out_len * factor, d))
    padded[:T] = xs
    return padded.reshape(out_len, factor * d)


def _subsample_backward(dout, factor, orig_len, d):
    padded = dout.reshape(dout.shape[0] * factor, d)
    return padded[:orig_len]


def encode(features, params, cfg, prefix="enc"):
    """Forward pass; returns (encoded, cache) with encoded ceil(T/s) x out_dim."""
    xs = np.asarray(features, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != cfg.input_dim:
        raise ConfigError(
            "feature dim %s does not match encoder input_dim %d"
            % (xs.shape, cfg.input_dim)
        )
    cache = {"layers": [], "input_len": xs.shape[0]}
    for layer in range(cfg.num_layers):
        outs = []
        layer_cache = {"in_len": xs.shape[0], "in_dim": xs.shape[1]}
        for direction in cfg.directions:
            p = "%s.l%d.%s" % (prefix, layer, direction)
            seq = xs if direction == "fwd" else xs[::-1]
            hs, caches = gru_sequence_forward(seq, params, p)
            if direction == "bwd":
                hs = hs[::-1]
            outs.append(hs)
            layer_cache[direction] = caches
        xs = np.concatenate(outs, axis=1)
        if layer == 0 and cfg.subsample_factor > 1:
            layer_cache["pre_subsample_len"] = xs.shape[0]
            layer_cache["pre_subsample_dim"] = xs.shape[1]
            xs = _subsample(xs, cfg.subsample_factor)
        cache["layers"].append(layer_cache)
    return xs, cache


def encode_backward(dencoded, cache, params, cfg, grads, prefix="enc"):
    """Backprop through the encoder; accumulates into grads, returns dfeatures."""
    dxs = np.asarray(dencoded, dtype=np.float64)
    u = cfg.hidden_units
    for layer in range(cfg.num_layers - 1, -1, -1):
        layer_cache = cache["layers"][layer]
        if layer == 0 and cfg.subsample_factor > 1:
            dxs = _subsample_backward(
                dxs,
                cfg.subsample_factor,
                layer_cache["pre_subsample_len"],
                layer_cache["pre_subsample_dim"],
            )
        dinput = np.zeros((layer_cache["in_len"], layer_cache["in_dim"]))
        for i, direction in enumerate(cfg.directions):
            p = "%s.l%d.%s" % (prefix, layer, direction)
            dhs = dxs[:, i * u:(i + 1) * u]
            if direction == "bwd":
                dhs = dhs[::-1]
            dseq = gru_sequence_backward(dhs, layer_cache[direction], params, p, grads)
            if direction == "bwd":
                dseq = dseq[::-1]
            dinput += dseq
        dxs = dinput
    return dxs
