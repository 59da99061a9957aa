"""Batched reverse-mode automatic differentiation.

A :class:`Graph` is an append-only list of nodes; operand indices always
precede the node, so insertion order is a topological order. Node values are
numpy arrays whose leading axis is the batch; parameters live in a flat
:class:`ParamStore` and are exposed to the graph as reshaped slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit


class NumericError(ArithmeticError):
    """Non-finite value or division by zero during evaluation or training."""


class UnboundInput(KeyError):
    pass


OPS = (
    "const", "input", "param", "add", "sub", "mul", "div", "exp", "square", "sum",
    "sigmoid", "relu", "softmax", "stop_gradient", "matmul", "expand",
)


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple[int, ...] = ()
    value: object = None  # const payload
    name: str = ""  # input name
    offset: int = 0  # param slice start
    shape: tuple[int, ...] = ()  # param shape


class Graph:
    def __init__(self):
        self.nodes: list[Node] = []
        self._needs_grad: Optional[list[bool]] = None

    def __len__(self):
        return len(self.nodes)

    def _add(self, node: Node) -> int:
        for a in node.args:
            if not 0 <= a < len(self.nodes):
                raise ValueError(f"operand {a} does not precede node {len(self.nodes)}")
        self.nodes.append(node)
        self._needs_grad = None
        return len(self.nodes) - 1

    def const(self, value) -> int:
        return self._add(Node("const", value=np.asarray(value, dtype=float)))

    def input(self, name: str) -> int:
        return self._add(Node("input", name=name))

    def param(self, offset: int, shape: tuple[int, ...] = ()) -> int:
        return self._add(Node("param", offset=offset, shape=tuple(shape)))

    def op(self, name: str, *args: int) -> int:
        if name not in OPS or name in ("const", "input", "param"):
            raise ValueError(f"unknown op {name!r}")
        return self._add(Node(name, tuple(args)))

    # shorthands
    def add(self, a, b): return self.op("add", a, b)
    def sub(self, a, b): return self.op("sub", a, b)
    def mul(self, a, b): return self.op("mul", a, b)
    def div(self, a, b): return self.op("div", a, b)
    def exp(self, a): return self.op("exp", a)
    def square(self, a): return self.op("square", a)
    def sum(self, a): return self.op("sum", a)
    def sigmoid(self, a): return self.op("sigmoid", a)
    def relu(self, a): return self.op("relu", a)
    def softmax(self, a): return self.op("softmax", a)
    def stop_gradient(self, a): return self.op("stop_gradient", a)
    def matmul(self, a, b): return self.op("matmul", a, b)
    def expand(self, a): return self.op("expand", a)

    def count(self, op: str) -> int:
        return sum(1 for n in self.nodes if n.op == op)

    def needs_grad(self) -> list[bool]:
        """Which nodes carry gradient back to some parameter."""
        if self._needs_grad is None:
            flags = []
            for n in self.nodes:
                if n.op == "param":
                    flags.append(True)
                elif n.op in ("const", "input", "stop_gradient"):
                    flags.append(False)
                else:
                    flags.append(any(flags[a] for a in n.args))
            self._needs_grad = flags
        return self._needs_grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


class ParamStore:
    """Flat parameter vector with per-entry ownership and optional box bounds."""

    def __init__(self):
        self.values = np.zeros(0)
        self.owners: list[tuple[str, int]] = []
        self.bounds: dict[int, tuple[float, float]] = {}
        self.adam = AdamState(np.zeros(0), np.zeros(0))

    def __len__(self):
        return self.values.size

    def allocate(self, site: str, init, bounds: Optional[tuple[float, float]] = None) -> int:
        init = np.asarray(init, dtype=float).ravel()
        offset = self.values.size
        self.values = np.concatenate([self.values, init])
        self.owners.extend((site, i) for i in range(init.size))
        if bounds is not None:
            for i in range(init.size):
                self.bounds[offset + i] = bounds
        self.adam = AdamState(np.zeros_like(self.values), np.zeros_like(self.values))
        return offset

    def clamp(self):
        for i, (lo, hi) in self.bounds.items():
            self.values[i] = min(max(self.values[i], lo), hi)

    def slice_of(self, site: str) -> np.ndarray:
        idx = [i for i, (s, _) in enumerate(self.owners) if s == site]
        return self.values[idx]

    def copy(self) -> "ParamStore":
        out = ParamStore()
        out.values = self.values.copy()
        out.owners = list(self.owners)
        out.bounds = dict(self.bounds)
        out.adam = AdamState(self.adam.m.copy(), self.adam.v.copy(), self.adam.t)
        return out


def _param_vector(params) -> np.ndarray:
    return params.values if isinstance(params, ParamStore) else np.asarray(params)


def forward(graph: Graph, inputs: dict, params, upto: Optional[int] = None) -> list:
    """Evaluate nodes in insertion order; returns the list of node values."""
    pv = _param_vector(params)
    dtype = pv.dtype if pv.size else np.float64
    last = len(graph.nodes) if upto is None else upto + 1
    vals: list = []
    with np.errstate(over="ignore", under="ignore"):
        for node in graph.nodes[:last]:
            op = node.op
            a = [vals[i] for i in node.args]
            if op == "const":
                v = node.value.astype(dtype, copy=False)
            elif op == "input":
                try:
                    v = np.asarray(inputs[node.name], dtype=dtype)
                except KeyError:
                    raise UnboundInput(node.name) from None
            elif op == "param":
                size = math.prod(node.shape)
                v = pv[node.offset:node.offset + size].reshape(node.shape)
            elif op == "add":
                v = a[0] + a[1]
            elif op == "sub":
                v = a[0] - a[1]
            elif op == "mul":
                v = a[0] * a[1]
            elif op == "div":
                if np.any(a[1] == 0):
                    raise NumericError("division by zero")
                v = a[0] / a[1]
            elif op == "exp":
                v = np.exp(a[0])
            elif op == "square":
                v = a[0] * a[0]
            elif op == "sum":
                v = np.sum(a[0], axis=-1)
            elif op == "sigmoid":
                v = expit(a[0])
            elif op == "relu":
                v = np.maximum(a[0], 0)
            elif op == "softmax":
                z = a[0] - np.max(a[0], axis=-1, keepdims=True)
                e = np.exp(z)
                v = e / np.sum(e, axis=-1, keepdims=True)
            elif op == "stop_gradient":
                v = a[0]
            elif op == "matmul":
                v = a[0] @ a[1]
            elif op == "expand":
                v = a[0][..., None]
            else:
                raise ValueError(f"unknown op {op!r}")
            vals.append(v)
    return vals


def _unbroadcast(g, shape):
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(graph: Graph, vals: list, params, output: int, seed=None) -> np.ndarray:
    """Gradient of ``sum(seed * vals[output])`` with respect to every parameter."""
    pv = _param_vector(params)
    grad = np.zeros_like(pv)
    need = graph.needs_grad()
    if not need[output]:
        return grad
    adj: list = [None] * (output + 1)
    out_val = vals[output]
    adj[output] = np.broadcast_to(np.ones_like(out_val) if seed is None else seed, np.shape(out_val))

    def push(i, g):
        if not need[i]:
            return
        g = _unbroadcast(g, np.shape(vals[i]))
        adj[i] = g if adj[i] is None else adj[i] + g

    for k in range(output, -1, -1):
        g = adj[k]
        if g is None:
            continue
        node = graph.nodes[k]
        op = node.op
        args = node.args
        if op == "param":
            grad[node.offset:node.offset + g.size] += np.reshape(g, -1)
        elif op == "add":
            push(args[0], g)
            push(args[1], g)
        elif op == "sub":
            push(args[0], g)
            push(args[1], -g)
        elif op == "mul":
            a, b = vals[args[0]], vals[args[1]]
            push(args[0], g * b)
            push(args[1], g * a)
        elif op == "div":
            a, b = vals[args[0]], vals[args[1]]
            push(args[0], g / b)
            push(args[1], -g * a / (b * b))
        elif op == "exp":
            push(args[0], g * vals[k])
        elif op == "square":
            push(args[0], 2.0 * g * vals[args[0]])
        elif op == "sum":
            push(args[0], np.asarray(g)[..., None] * np.ones_like(vals[args[0]]))
        elif op == "sigmoid":
            s = vals[k]
            push(args[0], g * s * (1.0 - s))
        elif op == "relu":
            push(args[0], g * (vals[args[0]] > 0))
        elif op == "softmax":
            s = vals[k]
            push(args[0], s * (g - np.sum(g * s, axis=-1, keepdims=True)))
        elif op == "matmul":
            a, b = vals[args[0]], vals[args[1]]
            if need[args[0]]:
                push(args[0], g @ np.swapaxes(b, -1, -2))
            if need[args[1]]:
                push(args[1], np.swapaxes(a, -1, -2) @ g)
        elif op == "expand":
            push(args[0], np.asarray(g)[..., 0])
        # const, input and stop_gradient propagate nothing
    return grad


def grad_check(graph: Graph, params, inputs: dict, output: int, eps: float = 1e-5,
               seed=None, grad_override=None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    The finite differences are evaluated in extended precision so the check
    is limited by truncation error rather than cancellation.
    """
    pv = np.array(_param_vector(params), dtype=np.float64)
    if pv.size == 0:
        return 0.0
    vals = forward(graph, inputs, pv)
    analytic = backward(graph, vals, pv, output, seed) if grad_override is None else grad_override
    wide = pv.astype(np.longdouble)
    wide_inputs = {k: np.asarray(v, dtype=np.longdouble) for k, v in inputs.items()}
    weight = 1 if seed is None else np.asarray(seed, dtype=np.longdouble)
    worst = 0.0
    for i in range(pv.size):
        plus, minus = wide.copy(), wide.copy()
        plus[i] += eps
        minus[i] -= eps
        fp = np.sum(weight * forward(graph, wide_inputs, plus, upto=output)[output])
        fm = np.sum(weight * forward(graph, wide_inputs, minus, upto=output)[output])
        numeric = float((fp - fm) / (2 * eps))
        a = float(analytic[i])
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def adam_step(values: np.ndarray, grads: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state`` and returns new values."""
    if not (values.shape == grads.shape == state.m.shape == state.v.shape):
        raise ValueError(f"dimension mismatch: params {values.shape}, grads {grads.shape}, "
                         f"state {state.m.shape}")
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grads
    state.v = beta2 * state.v + (1 - beta2) * grads * grads
    m_hat = state.m / (1 - beta1 ** state.t)
    v_hat = state.v / (1 - beta2 ** state.t)
    return values - lr * m_hat / (np.sqrt(v_hat) + eps)
