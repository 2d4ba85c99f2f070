"""Feed-forward ReLU networks: evaluation, splitting, and re-combination.

A network with layers L_1..L_n is stored as the n-1 weight matrices between
consecutive layers. ReLU is applied after every weighted layer except the
last one, so the raw output of the final matrix is the network's prediction.
Networks are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """An input, bias, or delta does not match the network architecture."""


class InvalidSplitError(ValueError):
    """Separation indices do not describe a valid partition of the layers."""


class InvalidChainError(ValueError):
    """Sub-networks do not agree on their shared layer widths."""


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _frozen_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name}: expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name}: entries must be finite")
    arr.setflags(write=False)
    return arr


def _frozen_vector(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name}: expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name}: entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ActivationTrace:
    """Per-layer assignments v_1..v_n produced by one forward evaluation."""

    layers: tuple[np.ndarray, ...]

    @property
    def input(self) -> np.ndarray:
        return self.layers[0]

    @property
    def output(self) -> np.ndarray:
        return self.layers[-1]


class Network:
    """A layered ReLU network.

    Layers are numbered 1..n, as in the usual diagram left to right.
    ``weights[i]`` maps layer i+1 to layer i+2 and therefore has shape
    ``layer_sizes[i+1] x layer_sizes[i]``. An optional bias vector per
    weighted layer is supported; it defaults to zero and is never touched
    by the repair machinery.
    """

    __slots__ = ("weights", "biases", "layer_sizes")

    def __init__(self, weights, biases=None):
        mats = tuple(_frozen_matrix(w, f"weights[{i}]") for i, w in enumerate(weights))
        if len(mats) < 1:
            raise ShapeError("a network needs at least one weight matrix")
        for i in range(1, len(mats)):
            if mats[i].shape[1] != mats[i - 1].shape[0]:
                raise ShapeError(
                    f"weights[{i}]: expected {mats[i - 1].shape[0]} columns to match "
                    f"the previous layer, got {mats[i].shape[1]}"
                )
        if biases is None:
            vecs = tuple(np.zeros(m.shape[0]) for m in mats)
            for v in vecs:
                v.setflags(write=False)
        else:
            if len(biases) != len(mats):
                raise ShapeError(
                    f"biases: expected {len(mats)} vectors, got {len(biases)}"
                )
            vecs = tuple(_frozen_vector(b, f"biases[{i}]") for i, b in enumerate(biases))
            for i, v in enumerate(vecs):
                if v.shape[0] != mats[i].shape[0]:
                    raise ShapeError(
                        f"biases[{i}]: expected length {mats[i].shape[0]}, got {v.shape[0]}"
                    )
        object.__setattr__(self, "weights", mats)
        object.__setattr__(self, "biases", vecs)
        object.__setattr__(
            self, "layer_sizes", (mats[0].shape[1],) + tuple(m.shape[0] for m in mats)
        )

    def __setattr__(self, name, value):
        raise AttributeError("Network instances are immutable")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def _check_input(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.input_dim:
            raise ShapeError(
                f"input: expected a vector of dimension {self.input_dim}, got shape {arr.shape}"
            )
        return arr

    def evaluate(self, x) -> ActivationTrace:
        """Forward pass returning every layer assignment, input included."""
        v = self._check_input(x)
        layers = [v]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = w @ v + b
            v = z if i == last else relu(z)
            layers.append(v)
        return ActivationTrace(tuple(layers))

    def classify(self, x) -> int:
        """1-based index of the largest output, ties broken toward the lowest index."""
        out = self.evaluate(x).output
        return int(np.argmax(out)) + 1

    def apply_delta(self, layer: int, delta) -> "Network":
        """A new network with ``delta`` added to ``weights[layer]``; sizes unchanged."""
        if not 0 <= layer < len(self.weights):
            raise ShapeError(f"layer index {layer} out of range")
        d = np.asarray(delta, dtype=np.float64)
        if d.shape != self.weights[layer].shape:
            raise ShapeError(
                f"delta: expected shape {self.weights[layer].shape}, got {d.shape}"
            )
        mats = list(self.weights)
        mats[layer] = mats[layer] + d
        return Network(mats, self.biases)

    def weights_equal(self, other: "Network") -> bool:
        """Exact element-wise equality of all weight matrices and biases."""
        return (
            self.layer_sizes == other.layer_sizes
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def __repr__(self):
        return f"Network(layer_sizes={list(self.layer_sizes)})"


@dataclass(frozen=True)
class SubnetworkChain:
    """Sub-networks obtained by cutting a network at separation layers.

    ``indices`` holds the 1-based separation layer numbers. Consecutive
    sub-networks share a layer: the output layer of one is the input layer
    of the next, and a ReLU sits at every seam when the chain is evaluated.
    """

    subnets: tuple[Network, ...]
    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.subnets) - 1:
            raise InvalidChainError(
                f"{len(self.subnets)} sub-networks need {len(self.subnets) - 1} "
                f"separation indices, got {len(self.indices)}"
            )
        for j in range(len(self.subnets) - 1):
            out_w = self.subnets[j].output_dim
            in_w = self.subnets[j + 1].input_dim
            if out_w != in_w:
                raise InvalidChainError(
                    f"seam {j}: sub-network {j} ends with width {out_w} but "
                    f"sub-network {j + 1} starts with width {in_w}"
                )

    @property
    def weight_slices(self) -> tuple[tuple[int, int], ...]:
        """(start, stop) of each sub-network's matrices in the combined network."""
        slices = []
        start = 0
        for sub in self.subnets:
            stop = start + len(sub.weights)
            slices.append((start, stop))
            start = stop
        return tuple(slices)

    def final_weight_indices(self) -> tuple[int, ...]:
        """Combined-network index of each sub-network's final weight matrix."""
        return tuple(stop - 1 for _, stop in self.weight_slices)

    def combine(self) -> Network:
        """Concatenate the chain back into a single network."""
        weights: list[np.ndarray] = []
        biases: list[np.ndarray] = []
        for sub in self.subnets:
            weights.extend(sub.weights)
            biases.extend(sub.biases)
        return Network(weights, biases)

    def evaluate(self, x) -> np.ndarray:
        """Evaluate the chain end to end, applying ReLU at every seam."""
        v = np.asarray(x, dtype=np.float64)
        last = len(self.subnets) - 1
        for j, sub in enumerate(self.subnets):
            out = sub.evaluate(v).output
            v = out if j == last else relu(out)
        return v


def split(net: Network, indices) -> SubnetworkChain:
    """Cut ``net`` at the given 1-based separation layers.

    Valid indices are strictly interior: 1 < i < n, strictly increasing.
    An empty index list yields a single sub-network equal to ``net``.
    """
    idx = tuple(int(i) for i in indices)
    n = net.num_layers
    for i in idx:
        if not 1 < i < n:
            raise InvalidSplitError(f"separation index {i} not strictly inside 1..{n}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidSplitError(f"separation indices {list(idx)} must be strictly increasing")
    if not idx:
        return SubnetworkChain((net,), ())
    # Weight matrix t (0-based) feeds layer t+2; the sub-network ending at
    # layer i owns matrices up to index i-2.
    bounds = [0] + [i - 1 for i in idx] + [n - 1]
    subnets = []
    for a, b in zip(bounds, bounds[1:]):
        subnets.append(Network(net.weights[a:b], net.biases[a:b]))
    return SubnetworkChain(tuple(subnets), idx)


def combine(chain: SubnetworkChain) -> Network:
    return chain.combine()
