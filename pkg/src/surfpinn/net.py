"""Feedforward tanh network and its second-order input jets.

The network maps a position in R^3 to a scalar. :func:`forward_jet`
propagates value, input gradient and input Hessian layer by layer;
:func:`scalar_param_gradient` differentiates any scalar built from those
jets with respect to the flat parameter vector by reverse-mode autograd
over the jet computation.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .exceptions import InvalidArchitecture, SnapshotError
from .utils import ensure_directory_exists

logger = logging.getLogger(__name__)

DTYPE = torch.float64
ACTIVATION = "tanh"
INIT = "glorot_uniform"

Array = Union[np.ndarray, torch.Tensor]


@dataclass
class Jet2:
    """Value, gradient and symmetric Hessian of a scalar field.

    Leading batch dimensions are allowed: ``value`` is ``(...)``, ``grad`` is
    ``(..., 3)`` and ``hess`` is ``(..., 3, 3)``. Entries are numpy arrays or
    torch tensors.
    """

    value: Array
    grad: Array
    hess: Array

    def laplacian(self) -> Array:
        return self.hess[..., 0, 0] + self.hess[..., 1, 1] + self.hess[..., 2, 2]

    def numpy(self) -> "Jet2":
        """Detached numpy copy."""
        return Jet2(*(_to_numpy(a) for a in (self.value, self.grad, self.hess)))


def _to_numpy(a: Array) -> np.ndarray:
    if isinstance(a, torch.Tensor):
        return a.detach().cpu().numpy()
    return np.asarray(a)


def validate_layer_sizes(layer_sizes: Sequence[int]) -> List[int]:
    """Check a ``[3, w, ..., w, 1]`` layout.

    Raises:
        InvalidArchitecture: If the layout is malformed
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or sizes[0] != 3 or sizes[-1] != 1 or min(sizes) < 1:
        raise InvalidArchitecture(
            f"Layer sizes must start with 3, end with 1 and be positive: {list(layer_sizes)}"
        )
    return sizes


def architecture(width: int, depth: int) -> List[int]:
    """Layer sizes for ``depth - 1`` hidden layers of ``width`` neurons."""
    if depth < 1:
        raise InvalidArchitecture(f"Depth must be at least 1, got {depth}")
    return [3] + [int(width)] * (depth - 1) + [1]


def num_parameters(layer_sizes: Sequence[int]) -> int:
    sizes = validate_layer_sizes(layer_sizes)
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))


@dataclass
class MlpParams:
    """Weights ``(fan_out, fan_in)`` and biases ``(fan_out,)`` per layer.

    The flat view concatenates, layer by layer, the row-major weights and then
    the biases.
    """

    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    seed: Optional[int] = None
    metadata: Dict[str, Any] = field(
        default_factory=lambda: {"activation": ACTIVATION, "init": INIT}
    )

    def __post_init__(self) -> None:
        self.layer_sizes = validate_layer_sizes(self.layer_sizes)

    @property
    def size(self) -> int:
        return num_parameters(self.layer_sizes)

    def flat(self) -> np.ndarray:
        parts: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            parts.append(np.asarray(w, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        return np.concatenate(parts)

    @classmethod
    def from_flat(
        cls,
        layer_sizes: Sequence[int],
        flat: np.ndarray,
        seed: Optional[int] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "MlpParams":
        sizes = validate_layer_sizes(layer_sizes)
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (num_parameters(sizes),):
            raise InvalidArchitecture(
                f"Flat vector of shape {flat.shape} does not fit layers {sizes}"
            )
        weights, biases = [], []
        offset = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            offset += fan_in * fan_out
            biases.append(flat[offset:offset + fan_out].copy())
            offset += fan_out
        params = cls(sizes, weights, biases, seed=seed)
        if metadata is not None:
            params.metadata = dict(metadata)
        return params

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        return MlpParams.from_flat(self.layer_sizes, flat, self.seed, self.metadata)

    def translated(self, shift: np.ndarray) -> "MlpParams":
        """Network precomposed with x -> x + shift."""
        biases = [b.copy() for b in self.biases]
        biases[0] = biases[0] + self.weights[0] @ np.asarray(shift, dtype=float)
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            biases,
            seed=self.seed,
            metadata=dict(self.metadata),
        )

    def header(self) -> Dict[str, Any]:
        return {"layer_sizes": self.layer_sizes, "seed": self.seed, **self.metadata}

    def save(self, path: Union[str, Path]) -> Path:
        """Write the flat vector plus a JSON header to ``path`` (``.npz``)."""
        path = ensure_directory_exists(path)
        try:
            np.savez(path, flat=self.flat(), header=np.array(json.dumps(self.header())))
        except OSError as e:
            raise SnapshotError(f"Cannot write snapshot {path}: {e}") from e
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MlpParams":
        try:
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                flat = data["flat"]
        except (OSError, KeyError, ValueError) as e:
            raise SnapshotError(f"Cannot read snapshot {path}: {e}") from e
        sizes = header.pop("layer_sizes")
        seed = header.pop("seed")
        return cls.from_flat(sizes, flat, seed=seed, metadata=header)


def xavier_init(layer_sizes: Sequence[int], seed: int) -> MlpParams:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    sizes = validate_layer_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases, seed=seed)


Layers = List[Tuple[torch.Tensor, torch.Tensor]]


def torch_layers(layer_sizes: Sequence[int], flat: torch.Tensor) -> Layers:
    """Views of a flat parameter tensor as ``(W, b)`` pairs."""
    layers = []
    offset = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = flat[offset:offset + fan_in * fan_out].view(fan_out, fan_in)
        offset += fan_in * fan_out
        b = flat[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _as_batch(x: Array) -> Tuple[torch.Tensor, bool]:
    t = torch.as_tensor(np.asarray(x, dtype=float) if not isinstance(x, torch.Tensor) else x,
                        dtype=DTYPE)
    single = t.dim() == 1
    return (t.unsqueeze(0) if single else t), single


def _affine(a: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a @ w.T + b


def _forward_layers(layers: Layers, x: torch.Tensor) -> torch.Tensor:
    a = x
    for w, b in layers[:-1]:
        a = torch.tanh(_affine(a, w, b))
    w, b = layers[-1]
    return _affine(a, w, b)[:, 0]


def jet_layers(layers: Layers, x: torch.Tensor) -> Jet2:
    """Propagate (value, grad, hess) through affine and tanh layers.

    Args:
        layers: ``(W, b)`` pairs, possibly requiring grad
        x: Positions ``(N, 3)``

    Returns:
        Batched Jet2 of torch tensors
    """
    n = x.shape[0]
    w, b = layers[0]
    z = _affine(x, w, b)
    grad = w.unsqueeze(0).expand(n, -1, -1)
    hess = torch.zeros(n, w.shape[0], 3, 3, dtype=x.dtype)
    for w, b in layers[1:]:
        t = torch.tanh(z)
        d1 = 1.0 - t * t
        d2 = -2.0 * t * d1
        hess = d1[..., None, None] * hess + d2[..., None, None] * (
            grad[..., :, None] * grad[..., None, :]
        )
        grad = d1[..., None] * grad
        z = _affine(t, w, b)
        grad = torch.matmul(w, grad)
        width = hess.shape[1]
        hess = torch.matmul(w, hess.reshape(n, width, 9)).reshape(n, w.shape[0], 3, 3)
    hess = hess[:, 0]
    return Jet2(value=z[:, 0], grad=grad[:, 0], hess=0.5 * (hess + hess.transpose(-1, -2)))


def forward(params: MlpParams, x: Array) -> np.ndarray:
    """Plain forward pass u_NN(x) for positions ``(3,)`` or ``(N, 3)``."""
    xb, single = _as_batch(x)
    with torch.no_grad():
        layers = torch_layers(params.layer_sizes, torch.as_tensor(params.flat(), dtype=DTYPE))
        out = _forward_layers(layers, xb).numpy()
    return out[0] if single else out


def forward_jet(params: MlpParams, x: Array) -> Jet2:
    """Value, input gradient and input Hessian of the network.

    Args:
        params: Network parameters
        x: Position ``(3,)`` or positions ``(N, 3)``

    Returns:
        Jet2 of numpy arrays, batched like ``x``
    """
    xb, single = _as_batch(x)
    with torch.no_grad():
        layers = torch_layers(params.layer_sizes, torch.as_tensor(params.flat(), dtype=DTYPE))
        jet = jet_layers(layers, xb).numpy()
    if single:
        return Jet2(jet.value[0], jet.grad[0], jet.hess[0])
    return jet


ScalarFn = Callable[[Jet2, torch.Tensor], torch.Tensor]


def scalar_param_gradient(
    params: MlpParams, points: Array, scalar_fn: ScalarFn
) -> Tuple[float, np.ndarray]:
    """Mean of per-point scalars built from network jets, and its gradient.

    Args:
        params: Network parameters
        points: Positions ``(N, 3)``
        scalar_fn: Maps the batched torch Jet2 and the point indices
            ``arange(N)`` to N per-point scalars

    Returns:
        The mean and its gradient with respect to the flat parameter vector
    """
    xb, _ = _as_batch(points)
    flat = torch.tensor(params.flat(), dtype=DTYPE, requires_grad=True)
    jet = jet_layers(torch_layers(params.layer_sizes, flat), xb)
    per_point = scalar_fn(jet, torch.arange(xb.shape[0]))
    total = per_point.mean()
    if total.requires_grad:
        (gradient,) = torch.autograd.grad(total, flat, allow_unused=True)
    else:
        gradient = None
    if gradient is None:
        gradient = torch.zeros_like(flat)
    return float(total.detach()), gradient.detach().numpy().copy()
