"""Feed-forward network split into a nonlinear backbone and a final linear map.

The decomposition is the load-bearing structure: the last layer is a plain
linear map ``logits = h @ M.T + b`` over the penultimate activation h, and the
null-space machinery everywhere else operates on M. Gradients are exact
reverse-mode; nothing here is stochastic.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass

import numpy as np

from .numerics import Matrix, as_matrix

ACTIVATIONS = ("relu", "identity")

MODEL_FORMAT = "nullspace-at/model"
MODEL_VERSION = 1


@dataclass
class LayerParams:
    weight: Matrix          # (fan_out, fan_in)
    bias: np.ndarray        # (fan_out,)
    activation: str

    def copy(self) -> "LayerParams":
        return LayerParams(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class NetworkModel:
    """ReLU backbone layers followed by one identity-activation linear layer."""

    backbone: list[LayerParams]
    last_layer: LayerParams

    def __post_init__(self):
        dims = self.dims
        for a, b_ in zip(dims[:-1], dims[1:]):
            if a < 1 or b_ < 1:
                raise ValueError("layer dimensions must be positive")
        for layer in list(self.backbone) + [self.last_layer]:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.weight.shape[0],):
                raise ValueError("bias length must match weight rows")
        for prev, nxt in zip(list(self.backbone), list(self.backbone[1:]) + [self.last_layer]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError(
                    f"layer dimensions do not chain: {prev.weight.shape} -> {nxt.weight.shape}")

    @property
    def input_dim(self) -> int:
        first = self.backbone[0] if self.backbone else self.last_layer
        return first.weight.shape[1]

    @property
    def hidden_dim(self) -> int:
        """Width of the penultimate activation feeding the last layer."""
        return self.last_layer.weight.shape[1]

    @property
    def class_count(self) -> int:
        return self.last_layer.weight.shape[0]

    @property
    def dims(self) -> list[int]:
        out = [self.input_dim]
        for layer in self.backbone:
            out.append(layer.weight.shape[0])
        out.append(self.class_count)
        return out

    def copy(self) -> "NetworkModel":
        return NetworkModel([l.copy() for l in self.backbone], self.last_layer.copy())


@dataclass
class ForwardTrace:
    """Everything the backward passes need: per-layer pre-activations and
    activations, the penultimate activation, and the logits."""

    x: Matrix
    pre_activations: list[Matrix]
    activations: list[Matrix]
    penultimate: Matrix
    logits: Matrix


def init_model(dims, seed) -> NetworkModel:
    """He-scaled Gaussian weights and zero biases, reproducible per seed."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    if any(d < 1 for d in dims):
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        layers.append(LayerParams(w, np.zeros(fan_out), "relu"))
    last = layers.pop()
    last.activation = "identity"
    return NetworkModel(backbone=layers, last_layer=last)


def forward(model: NetworkModel, x: Matrix) -> ForwardTrace:
    """Run the network on a batch (rows are samples) and record the trace."""
    x = as_matrix(x)
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input has {x.shape[1]} columns, model expects {model.input_dim}")
    a = x
    pres, acts = [], []
    for layer in model.backbone:
        z = a @ layer.weight.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        pres.append(z)
        acts.append(a)
    logits = a @ model.last_layer.weight.T + model.last_layer.bias
    return ForwardTrace(x=x, pre_activations=pres, activations=acts,
                        penultimate=a, logits=logits)


def _relu_mask(pre: Matrix) -> Matrix:
    # gradient is zero exactly where the pre-activation is <= 0
    return (pre > 0.0).astype(np.float64)


def backward_params(model: NetworkModel, trace: ForwardTrace,
                    logit_grad: Matrix) -> list[tuple[Matrix, np.ndarray]]:
    """Exact parameter gradients for a scalar loss with the given logit grad.

    Returns one (weight_grad, bias_grad) pair per layer in forward order; the
    final entry belongs to the last linear layer.
    """
    logit_grad = as_matrix(logit_grad)
    if logit_grad.shape != trace.logits.shape:
        raise ValueError(
            f"logit grad shape {logit_grad.shape} != logits shape {trace.logits.shape}")
    grads: list = [None] * (len(model.backbone) + 1)
    grads[-1] = (logit_grad.T @ trace.penultimate, logit_grad.sum(axis=0))
    g = logit_grad @ model.last_layer.weight
    for idx in reversed(range(len(model.backbone))):
        layer = model.backbone[idx]
        dz = g * _relu_mask(trace.pre_activations[idx]) if layer.activation == "relu" else g
        prev = trace.activations[idx - 1] if idx > 0 else trace.x
        grads[idx] = (dz.T @ prev, dz.sum(axis=0))
        g = dz @ layer.weight
    return grads


def backward_to_input(model: NetworkModel, trace: ForwardTrace,
                      penult_grad: Matrix) -> Matrix:
    """Vector-Jacobian product of the backbone: pull a penultimate-layer
    gradient back to the input. With an empty backbone this is the identity."""
    g = as_matrix(penult_grad)
    if g.shape != trace.penultimate.shape:
        raise ValueError(
            f"penultimate grad shape {g.shape} != activation shape {trace.penultimate.shape}")
    for idx in reversed(range(len(model.backbone))):
        layer = model.backbone[idx]
        dz = g * _relu_mask(trace.pre_activations[idx]) if layer.activation == "relu" else g
        g = dz @ layer.weight
    return g


def penultimate_grad_of_loss(model: NetworkModel, trace: ForwardTrace,
                             logit_grad: Matrix) -> Matrix:
    """Chain a logit gradient one step back: returns logit_grad @ M."""
    logit_grad = as_matrix(logit_grad)
    if logit_grad.shape != trace.logits.shape:
        raise ValueError(
            f"logit grad shape {logit_grad.shape} != logits shape {trace.logits.shape}")
    return logit_grad @ model.last_layer.weight


def _encode_array(a: np.ndarray) -> dict:
    data = np.ascontiguousarray(a, dtype="<f8").tobytes()
    return {"shape": list(a.shape), "data": base64.b64encode(data).decode("ascii")}


def _decode_array(obj: dict) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    flat = np.frombuffer(raw, dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise ValueError(f"array payload has {flat.size} values, shape {shape} needs {expected}")
    return flat.astype(np.float64).reshape(shape)


def save_model(model: NetworkModel, path) -> None:
    """Write the model as versioned JSON; parameters are base64 raw float64
    (little endian), so a round trip is bit exact."""
    layers = []
    for layer in list(model.backbone) + [model.last_layer]:
        layers.append({
            "weight": _encode_array(layer.weight),
            "bias": _encode_array(layer.bias),
            "activation": layer.activation,
        })
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dims": model.dims,
        "layers": layers,
    }
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path) -> NetworkModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not a valid model file: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a model file (missing format tag)")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(
            f"unsupported model version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        layers = [LayerParams(_decode_array(l["weight"]), _decode_array(l["bias"]),
                              l["activation"])
                  for l in doc["layers"]]
    except (KeyError, TypeError) as e:
        raise ValueError(f"{path} is malformed: {e}") from e
    if not layers:
        raise ValueError(f"{path} contains no layers")
    model = NetworkModel(backbone=layers[:-1], last_layer=layers[-1])
    if model.dims != list(doc["dims"]):
        raise ValueError(f"{path} dims field {doc['dims']} does not match layer shapes")
    return model
