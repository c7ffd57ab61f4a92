"""Sequential network container, backpropagation and the Adam update."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ShapeError, UsageError, ValidationError
from .layers import Layer, Shape

_model_ids = itertools.count()


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")


@dataclass
class ForwardCache:
    model_id: int
    version: int
    caches: list
    input_shape: tuple


@dataclass
class NetworkModel:
    """Ordered layers plus their parameters, buffers and Adam moments.

    ``params[i]`` holds the trainable arrays of layer ``i``; ``state[i]`` holds
    non-trainable buffers (batch-norm running statistics). Layers whose
    ``trainable[i]`` is False never change in :func:`adam_step` and get no
    parameter gradients from :meth:`backward`.
    """

    layers: list[Layer]
    input_shape: Shape
    params: list[dict[str, np.ndarray]]
    state: list[dict[str, np.ndarray]]
    trainable: list[bool]
    opt_m: list[dict[str, np.ndarray]] = field(default_factory=list)
    opt_v: list[dict[str, np.ndarray]] = field(default_factory=list)
    step: int = 0
    version: int = 0
    uid: int = field(default_factory=lambda: next(_model_ids))

    @classmethod
    def build(cls, layers, input_shape, seed: int = 0, dtype=np.float64) -> "NetworkModel":
        rng = np.random.default_rng(seed)
        shapes = compose_shapes(layers, input_shape)
        params = [layer.init_params(shapes[i], rng, dtype) for i, layer in enumerate(layers)]
        state = [layer.init_state(shapes[i], dtype) for i, layer in enumerate(layers)]
        model = cls(list(layers), tuple(input_shape), params, state, [True] * len(layers))
        model.reset_optimizer()
        return model

    def reset_optimizer(self) -> None:
        self.opt_m = [{k: np.zeros_like(v) for k, v in p.items()} for p in self.params]
        self.opt_v = [{k: np.zeros_like(v) for k, v in p.items()} for p in self.params]
        self.step = 0

    @property
    def dtype(self):
        for p in self.params:
            for v in p.values():
                return v.dtype
        return np.dtype(np.float64)

    @property
    def output_shape(self) -> Shape:
        return compose_shapes(self.layers, self.input_shape)[-1]

    def layer_shapes(self) -> list[Shape]:
        return compose_shapes(self.layers, self.input_shape)

    def num_params(self) -> int:
        return sum(v.size for p in self.params for v in p.values())

    def set_trainable(self, flag: bool) -> None:
        self.trainable = [flag] * len(self.layers)

    def forward(self, batch, training: bool = False, update_stats: bool | None = None):
        """Run ``batch`` (leading batch axis) through every layer.

        Returns ``(output, cache)``. Batch-norm running statistics are updated
        only when ``training`` and ``update_stats`` (default: ``training``) are
        both set and the layer is trainable.
        """
        x = np.asarray(batch, dtype=self.dtype)
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeError(f"batch shape {x.shape[1:]} does not match model input {self.input_shape}", 0)
        if update_stats is None:
            update_stats = training
        caches = []
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(self.params[i], self.state[i], x, training,
                                     update_stats and self.trainable[i])
            if not np.isfinite(x).all():
                raise NumericError(f"non-finite activation at layer {i} ({layer.kind})")
            caches.append(cache)
        return x, ForwardCache(self.uid, self.version, caches, x.shape)

    def predict(self, batch) -> np.ndarray:
        return self.forward(batch, training=False)[0]

    def backward(self, cache: ForwardCache, output_gradient):
        """Backpropagate ``output_gradient``; returns ``(param_grads, input_grad)``.

        Frozen layers pass the gradient through but report an empty dict.
        """
        if not isinstance(cache, ForwardCache) or cache.model_id != self.uid or cache.version != self.version:
            raise UsageError("cache does not belong to the current state of this model")
        dy = np.asarray(output_gradient, dtype=self.dtype)
        if dy.shape != cache.input_shape:
            raise ShapeError(f"output gradient shape {dy.shape} != output shape {cache.input_shape}")
        grads: list[dict[str, np.ndarray]] = [{} for _ in self.layers]
        for i in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[i].backward(self.params[i], cache.caches[i], dy)
            if self.trainable[i]:
                grads[i] = g
        return grads, dy


def compose_shapes(layers, input_shape) -> list[Shape]:
    """Shapes entering each layer, followed by the final output shape."""
    shapes = [tuple(input_shape)]
    for i, layer in enumerate(layers):
        try:
            shapes.append(tuple(layer.out_shape(shapes[-1])))
        except ShapeError as exc:
            raise ShapeError(str(exc), i) from None
    return shapes


def adam_step(model: NetworkModel, grads, config: AdamConfig) -> None:
    """Bias-corrected Adam update of every trainable parameter, in place."""
    if len(grads) != len(model.layers):
        raise UsageError(f"expected gradients for {len(model.layers)} layers, got {len(grads)}")
    model.step += 1
    t = model.step
    b1, b2 = config.beta1, config.beta2
    step_size = config.learning_rate / (1.0 - b1 ** t)
    bc2 = 1.0 - b2 ** t
    for i, g_layer in enumerate(grads):
        if not model.trainable[i] or not g_layer:
            continue
        for name, g in g_layer.items():
            p = model.params[i][name]
            if g.shape != p.shape:
                raise UsageError(f"layer {i} gradient {name} has shape {g.shape}, parameter has {p.shape}")
            m = model.opt_m[i][name]
            v = model.opt_v[i][name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= step_size * m / (np.sqrt(v / bc2) + config.epsilon)
    model.version += 1
