"""Named parameter tensors and seeded initialization."""

import numpy as np


class ParamError(Exception):
    pass


class ParamSet:
    """Ordered mapping from tensor names to float64 numpy arrays.

    Values are held in float64 for gradient fidelity; the on-disk
    checkpoint format stores 32-bit floats (see checkpoint.py).
    """

    def __init__(self, entries=None):
        self.entries = {}
        if entries:
            for name, value in entries.items():
                self.set(name, value)

    def set(self, name, value):
        if not name:
            raise ParamError("parameter name must be non-empty")
        arr = np.asarray(value, dtype=np.float64)
        self.entries[name] = arr

    def get(self, name):
        if name not in self.entries:
            raise ParamError("missing parameter: %s" % name)
        return self.entries[name]

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name):
        return self.get(name)

    def __setitem__(self, name, value):
        self.set(name, value)

    def names(self):
        return list(self.entries.keys())

    def copy(self):
        return ParamSet({k: v.copy() for k, v in self.entries.items()})

    def zeros_like(self):
        return ParamSet({k: np.zeros_like(v) for k, v in self.entries.items()})

    def same_shapes(self, other):
        if set(self.entries) != set(other.entries):
            return False
        return all(self.entries[k].shape == other.entries[k].shape for k in self.entries)

    def add_(self, other, scale=1.0):
        """In-place accumulate: self += scale * other."""
        for k, v in other.entries.items():
            if k in self.entries:
                self.entries[k] += scale * v
            else:
                self.entries[k] = scale * v.copy()
        return self

    def global_norm(self):
        total = 0.0
        for v in self.entries.values():
            total += float(np.sum(v.astype(np.float64) ** 2))
        return float(np.sqrt(total))


def init_uniform(shapes, seed, scale=0.1, zero_bias=True):
    """Build a ParamSet with values uniform in [-scale, scale].

    shapes: ordered dict name -> shape tuple. Names containing ".b" at the
    final component (bias vectors) are zero-initialized when zero_bias.
    Values are rounded to float32 precision so in-memory and on-disk
    parameters agree exactly.
    """
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for name, shape in shapes.items():
        last = name.rsplit(".", 1)[-1]
        if zero_bias and last.startswith("b"):
            value = np.zeros(shape)
        else:
            value = rng.uniform(-scale, scale, size=shape)
        params.set(name, value.astype(np.float32).astype(np.float64))
    return params
