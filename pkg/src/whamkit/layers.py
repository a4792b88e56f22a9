"""Network building blocks: parameter registry, dense stacks, and a GRU cell.

Parameters are float64 and live in a ParamSet, which provides the flat-vector
view used by the optimizer, the checkpoint format, and gradient checking.
Weight init is uniform +-1/sqrt(fan_in), seeded.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInputError, NumericError


class ParamSet:
    """Ordered name -> Tensor registry with a flat float64 view."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise InvalidInputError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def size(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def slices(self) -> dict[str, slice]:
        out, offset = {}, 0
        for name, p in self._params.items():
            out[name] = slice(offset, offset + p.data.size)
            offset += p.data.size
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self._params.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise InvalidInputError(f"flat vector has size {vec.size}, expected {self.size}")
        offset = 0
        for p in self._params.values():
            n = p.data.size
            p.data = vec[offset:offset + n].reshape(p.data.shape).copy()
            offset += n

    def grads_flat(self) -> np.ndarray:
        parts = []
        for p in self._params.values():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            parts.append(np.asarray(g).ravel())
        return np.concatenate(parts)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def freeze(self) -> None:
        for p in self._params.values():
            p.requires_grad = False

    def block_slices(self, sep: str = ".") -> dict[str, slice]:
        """Contiguous slices per top-level name prefix (parameters are
        registered module by module, so prefixes are contiguous)."""
        blocks: dict[str, list[int]] = {}
        for name, sl in self.slices().items():
            block = name.split(sep, 1)[0]
            lo, hi = blocks.get(block, (sl.start, sl.stop))
            blocks[block] = (min(lo, sl.start), max(hi, sl.stop))
        return {b: slice(lo, hi) for b, (lo, hi) in blocks.items()}


def _init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def _check_finite(x: Tensor, where: str) -> Tensor:
    if not np.isfinite(x.data).all():
        raise NumericError(f"non-finite values in {where}")
    return x


class Dense:
    """Affine layer y = x @ W + b."""

    def __init__(self, params: ParamSet, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator):
        self.name = name
        self.w = params.add(f"{name}.w", _init_uniform(rng, (in_dim, out_dim), in_dim))
        self.b = params.add(f"{name}.b", _init_uniform(rng, (out_dim,), in_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return _check_finite(ad.add(ad.matmul(x, self.w), self.b), self.name)


class DenseStack:
    """Fully connected stack, ReLU on hidden layers, linear output.

    zero_output starts the last layer at zero, which makes a residual branch
    an exact identity until training moves it."""

    def __init__(self, params: ParamSet, name: str, sizes: list[int],
                 rng: np.random.Generator, zero_output: bool = False):
        if len(sizes) < 2:
            raise InvalidInputError("DenseStack needs at least input and output sizes")
        self.layers = [Dense(params, f"{name}.fc{i}", sizes[i], sizes[i + 1], rng)
                       for i in range(len(sizes) - 1)]
        if zero_output:
            self.layers[-1].w.data[:] = 0.0
            self.layers[-1].b.data[:] = 0.0

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = ad.relu(layer(x))
        return self.layers[-1](x)


class GruLayer:
    """Gated recurrent cell.

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    hc = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * hc
    """

    def __init__(self, params: ParamSet, name: str, in_dim: int, hidden_dim: int,
                 rng: np.random.Generator):
        self.name = name
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        add = params.add
        for gate in ("z", "r", "h"):
            add(f"{name}.w_{gate}", _init_uniform(rng, (in_dim, hidden_dim), in_dim))
            add(f"{name}.u_{gate}", _init_uniform(rng, (hidden_dim, hidden_dim), hidden_dim))
            add(f"{name}.b_{gate}", _init_uniform(rng, (hidden_dim,), in_dim))
        self._p = params
        self._prefix = name

    def _g(self, key: str) -> Tensor:
        return self._p[f"{self._prefix}.{key}"]

    def step(self, x: Tensor, h_prev: Tensor) -> Tensor:
        if x.data.shape[-1] != self.in_dim or h_prev.data.shape[-1] != self.hidden_dim:
            raise InvalidInputError(f"{self.name}: input/hidden dims do not match the cell")
        z = ad.sigmoid(ad.matmul(x, self._g("w_z")) + ad.matmul(h_prev, self._g("u_z")) + self._g("b_z"))
        r = ad.sigmoid(ad.matmul(x, self._g("w_r")) + ad.matmul(h_prev, self._g("u_r")) + self._g("b_r"))
        hc = ad.tanh(ad.matmul(x, self._g("w_h")) + ad.matmul(ad.mul(r, h_prev), self._g("u_h")) + self._g("b_h"))
        h = (1.0 - z) * h_prev + z * hc
        return _check_finite(h, self.name)


def gru_step(layer: GruLayer, x, h_prev) -> Tensor:
    """Single GRU update (module-level alias of GruLayer.step)."""
    return layer.step(ad.as_tensor(x), ad.as_tensor(h_prev))
