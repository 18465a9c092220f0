import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from utils.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, LEARNING_RATE
from utils.exceptions import ContractViolation

# Initialize logger
logger = logging.getLogger(__name__)

RELU = "relu"
TANH = "tanh"
IDENTITY = "identity"
ACTIVATIONS = (RELU, TANH, IDENTITY)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == RELU:
        return np.maximum(z, 0.0)
    if name == TANH:
        return np.tanh(z)
    return z


def _activation_grad(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if name == RELU:
        return (z > 0).astype(z.dtype)
    if name == TANH:
        return 1.0 - y * y
    return np.ones_like(z)


def init_fanin(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """
    Sample a weight matrix uniformly in [-2/sqrt(fan_in), 2/sqrt(fan_in)].

    Weights are stored as (inputs, outputs), so ``rows`` is the fan-in.
    """
    if rows < 1 or cols < 1:
        raise ContractViolation("Layer dimensions must be positive", f"rows={rows}, cols={cols}")
    bound = 2.0 / math.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractViolation(f"Unknown activation '{self.activation}'")
        if self.bias.shape != (self.weights.shape[1],):
            raise ContractViolation("Bias does not match layer width",
                                    f"weights={self.weights.shape}, bias={self.bias.shape}")


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by backward."""
    version: int
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    outputs: List[np.ndarray]
    squeezed: bool


@dataclass
class GradientSet:
    """Gradients of a scalar loss w.r.t. every parameter and the network input."""
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    inputs: np.ndarray = None

    def arrays(self) -> List[np.ndarray]:
        """Parameter gradients in the network's parameter order."""
        result = []
        for w, b in zip(self.weights, self.biases):
            result.extend([w, b])
        return result

    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.arrays()))

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            weights=[w * factor for w in self.weights],
            biases=[b * factor for b in self.biases],
            inputs=None if self.inputs is None else self.inputs * factor,
        )


class DenseNetwork:
    """
    Fully connected network with per-layer activations.

    Inputs are row vectors; a batch is a (batch, features) matrix. Every
    parameter change bumps ``version`` so stale caches are rejected.
    """

    def __init__(self, layers: List[DenseLayer]):
        if not layers:
            raise ContractViolation("A network needs at least one layer")
        for previous, layer in zip(layers[:-1], layers[1:]):
            if previous.weights.shape[1] != layer.weights.shape[0]:
                raise ContractViolation(
                    "Adjacent layer dimensions are incompatible",
                    f"{previous.weights.shape} -> {layer.weights.shape}"
                )
        self.layers = layers
        self.version = 0

    @classmethod
    def build(cls, sizes: Sequence[int], activations: Sequence[str],
              rng: np.random.Generator) -> "DenseNetwork":
        """
        Create a network with fan-in initialized weights and zero biases.

        Args:
            sizes: Layer widths including input and output, e.g. [13, 400, 300, 3]
            activations: One activation per weight layer
            rng: Random generator for initialization
        """
        if len(activations) != len(sizes) - 1:
            raise ContractViolation("Need one activation per layer",
                                    f"sizes={list(sizes)}, activations={list(activations)}")
        layers = [
            DenseLayer(init_fanin(n_in, n_out, rng), np.zeros(n_out), act)
            for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations)
        ]
        return cls(layers)

    @property
    def input_size(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_size(self) -> int:
        return self.layers[-1].weights.shape[1]

    @property
    def architecture(self) -> List[Tuple[int, int, str]]:
        return [(l.weights.shape[0], l.weights.shape[1], l.activation) for l in self.layers]

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        result = []
        for layer in self.layers:
            result.extend([layer.weights, layer.bias])
        return result

    def mark_updated(self):
        self.version += 1

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        """
        Run the network and keep the activations for backward.

        Args:
            x: Input vector (features,) or batch (batch, features)

        Returns:
            Output with the same leading shape as ``x`` and a ForwardCache
        """
        x = np.asarray(x, dtype=np.float64)
        squeezed = x.ndim == 1
        batch = x.reshape(1, -1) if squeezed else x
        if batch.ndim != 2 or batch.shape[1] != self.input_size:
            raise ContractViolation("Input dimension mismatch",
                                    f"expected {self.input_size}, got shape {x.shape}")

        inputs, pre_activations, outputs = [], [], []
        a = batch
        for layer in self.layers:
            inputs.append(a)
            z = a @ layer.weights + layer.bias
            a = _activate(layer.activation, z)
            pre_activations.append(z)
            outputs.append(a)

        cache = ForwardCache(self.version, inputs, pre_activations, outputs, squeezed)
        return (a[0] if squeezed else a), cache

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, output_grad: np.ndarray) -> GradientSet:
        """
        Reverse-mode gradients of a scalar loss.

        Args:
            cache: Cache from a forward call on this network, with no update in between
            output_grad: dLoss/dOutput, shaped like the forward output

        Returns:
            GradientSet including the gradient w.r.t. the input
        """
        if cache.version != self.version or len(cache.inputs) != len(self.layers):
            raise ContractViolation("Stale forward cache",
                                    f"cache version {cache.version}, network version {self.version}")
        grad = np.asarray(output_grad, dtype=np.float64)
        grad = grad.reshape(1, -1) if cache.squeezed else grad
        if grad.shape != cache.outputs[-1].shape:
            raise ContractViolation("Output gradient shape mismatch",
                                    f"expected {cache.outputs[-1].shape}, got {grad.shape}")

        weight_grads: List[np.ndarray] = [None] * len(self.layers)
        bias_grads: List[np.ndarray] = [None] * len(self.layers)
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            delta = grad * _activation_grad(layer.activation, cache.pre_activations[i], cache.outputs[i])
            weight_grads[i] = cache.inputs[i].T @ delta
            bias_grads[i] = delta.sum(axis=0)
            grad = delta @ layer.weights.T

        input_grad = grad[0] if cache.squeezed else grad
        return GradientSet(weight_grads, bias_grads, input_grad)

    def copy(self) -> "DenseNetwork":
        clone = DenseNetwork([
            DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers
        ])
        return clone

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        state = {}
        for i, layer in enumerate(self.layers):
            state[f"{prefix}layer{i}.weights"] = layer.weights
            state[f"{prefix}layer{i}.bias"] = layer.bias
        return state

    @classmethod
    def from_state_dict(cls, state: Dict[str, np.ndarray], activations: Sequence[str],
                        prefix: str = "") -> "DenseNetwork":
        layers = [
            DenseLayer(np.array(state[f"{prefix}layer{i}.weights"], dtype=np.float64),
                       np.array(state[f"{prefix}layer{i}.bias"], dtype=np.float64),
                       act)
            for i, act in enumerate(activations)
        ]
        return cls(layers)


def clip_gradients(grads: GradientSet, threshold: float) -> GradientSet:
    """
    Rescale gradients so their global L2 norm does not exceed ``threshold``.

    Gradients under the threshold are returned unchanged.
    """
    if threshold <= 0:
        raise ContractViolation("Gradient threshold must be positive", f"threshold={threshold}")
    norm = grads.global_norm()
    if norm <= threshold:
        return grads
    return grads.scaled(threshold / norm)


@dataclass
class AdamState:
    first_moments: List[np.ndarray]
    second_moments: List[np.ndarray]
    step: int = 0
    learning_rate: float = LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    @classmethod
    def for_network(cls, network: DenseNetwork, learning_rate: float = LEARNING_RATE) -> "AdamState":
        params = network.parameters()
        return cls(
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
        )

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        state = {f"{prefix}step": np.array(self.step, dtype=np.int64)}
        for i, (m, v) in enumerate(zip(self.first_moments, self.second_moments)):
            state[f"{prefix}m{i}"] = m
            state[f"{prefix}v{i}"] = v
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = ""):
        self.step = int(state[f"{prefix}step"])
        self.first_moments = [np.array(state[f"{prefix}m{i}"]) for i in range(len(self.first_moments))]
        self.second_moments = [np.array(state[f"{prefix}v{i}"]) for i in range(len(self.second_moments))]


def adam_step(network: DenseNetwork, grads: GradientSet,
              opt: AdamState) -> Tuple[DenseNetwork, AdamState]:
    """
    Apply one bias-corrected Adam update in place.

    Returns:
        The same network and optimizer state, for chaining
    """
    params = network.parameters()
    grad_arrays = grads.arrays()
    if len(params) != len(grad_arrays) or len(params) != len(opt.first_moments):
        raise ContractViolation("Gradient set does not match network parameters")

    opt.step += 1
    correction1 = 1.0 - opt.beta1 ** opt.step
    correction2 = 1.0 - opt.beta2 ** opt.step
    for param, grad, m, v in zip(params, grad_arrays, opt.first_moments, opt.second_moments):
        if param.shape != grad.shape:
            raise ContractViolation("Gradient shape mismatch", f"{param.shape} vs {grad.shape}")
        m *= opt.beta1
        m += (1.0 - opt.beta1) * grad
        v *= opt.beta2
        v += (1.0 - opt.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.epsilon)

    network.mark_updated()
    return network, opt


def soft_update(target: DenseNetwork, online: DenseNetwork, tau: float) -> DenseNetwork:
    """Polyak-average ``online`` into ``target``: target <- target + tau*(online - target)."""
    if target.architecture != online.architecture:
        raise ContractViolation("Target and online architectures differ",
                                f"{target.architecture} vs {online.architecture}")
    if not 0 < tau <= 1:
        raise ContractViolation("Smoothing factor must lie in (0, 1]", f"tau={tau}")
    for t_param, o_param in zip(target.parameters(), online.parameters()):
        if tau == 1.0:
            t_param[...] = o_param
        else:
            t_param += tau * (o_param - t_param)
    target.mark_updated()
    return target
