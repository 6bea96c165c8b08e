"""Trainable neural sequence taggers over event streams.

Two architectures predict, per event, a distribution over activities:

  * a recurrent tagger: stacked LSTM layers over the event embedding stream,
    followed by two ReLU dense layers and a softmax head (defaults: input 4,
    hidden 32, 3 layers, dropout 0.1, dense 64 and 32);
  * a windowed tagger: a plain feed-forward net over the concatenated
    embeddings of the last K events (defaults: 128, 256, 128, 32), zero
    padded at the start of a trace.

Everything is plain numpy with hand-written backward passes so the gradients
can be verified against central finite differences (`gradient_check`).
Training is Adam on cross-entropy with an 80/20 train/validation split and a
recorded loss curve; all randomness flows from one seeded generator, so a
fixed seed reproduces weights bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, SchemaError
from .model import Event, Trace


@dataclass(frozen=True)
class EmbeddingConfig:
    """How raw events become input vectors.

    The event type is either a jointly trained lookup row of width `dim` or a
    one-hot over the event-type universe. Extra categorical fields are
    one-hot, numeric fields are min-max normalized into [0, 1].
    """

    n_event_types: int
    mode: str = "learned"  # or "one_hot"
    dim: int = 4
    categorical_fields: tuple[tuple[str, int], ...] = ()  # (name, vocabulary size)
    numeric_fields: tuple[tuple[str, float, float], ...] = ()  # (name, lo, hi)

    def __post_init__(self) -> None:
        if self.mode not in ("learned", "one_hot"):
            raise ContractError(f"unknown embedding mode {self.mode!r}")

    @property
    def etype_dim(self) -> int:
        return self.dim if self.mode == "learned" else self.n_event_types

    @property
    def output_dim(self) -> int:
        return (
            self.etype_dim
            + sum(v for _, v in self.categorical_fields)
            + len(self.numeric_fields)
        )


def embed_event(cfg: EmbeddingConfig, event: Event, table: np.ndarray | None = None) -> np.ndarray:
    """Concatenated field representation of one event."""
    if not 0 <= event.etype < cfg.n_event_types:
        raise ContractError(f"event type id {event.etype} outside the embedding universe")
    parts: list[np.ndarray] = []
    if cfg.mode == "learned":
        if table is None:
            raise ContractError("learned embedding needs its lookup table")
        parts.append(np.asarray(table[event.etype], dtype=np.float64))
    else:
        onehot = np.zeros(cfg.n_event_types)
        onehot[event.etype] = 1.0
        parts.append(onehot)
    attrs = dict(event.attrs)
    for name, vocab in cfg.categorical_fields:
        if name not in attrs:
            raise ContractError(f"event {event.index} misses categorical field {name!r}")
        sym = int(attrs[name])
        if not 0 <= sym < vocab:
            raise ContractError(f"field {name!r} value {sym} outside vocabulary {vocab}")
        onehot = np.zeros(vocab)
        onehot[sym] = 1.0
        parts.append(onehot)
    for name, lo, hi in cfg.numeric_fields:
        if name not in attrs:
            raise ContractError(f"event {event.index} misses numeric field {name!r}")
        span = hi - lo
        x = (float(attrs[name]) - lo) / span if span else 0.0
        parts.append(np.array([min(1.0, max(0.0, x))]))
    return np.concatenate(parts)


@dataclass(frozen=True)
class RecurrentSpec:
    n_activities: int
    input_dim: int = 4
    hidden: int = 32
    layers: int = 3
    dense: tuple[int, int] = (64, 32)
    dropout: float = 0.1

    @property
    def arch(self) -> str:
        return "ma"


@dataclass(frozen=True)
class WindowedSpec:
    n_activities: int
    window: int = 5
    input_dim: int = 4
    dims: tuple[int, ...] = (128, 256, 128, 32)

    @property
    def arch(self) -> str:
        return f"mb{self.window}"


ArchitectureSpec = RecurrentSpec | WindowedSpec


def windowed(k: int, n_activities: int, **kw) -> WindowedSpec:
    return WindowedSpec(n_activities=n_activities, window=k, **kw)


@dataclass
class TrainConfig:
    epochs: int | None = None  # default: 10 recurrent, 50 windowed
    learning_rate: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    val_fraction: float = 0.2

    def resolved_epochs(self, spec: ArchitectureSpec) -> int:
        if self.epochs is not None:
            return self.epochs
        return 10 if isinstance(spec, RecurrentSpec) else 50


# --- parameter store -------------------------------------------------------


def _init_params(
    spec: ArchitectureSpec, emb: EmbeddingConfig, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    def uniform(fan_in: int, shape) -> np.ndarray:
        bound = 1.0 / np.sqrt(max(1, fan_in))
        return rng.uniform(-bound, bound, size=shape)

    params: dict[str, np.ndarray] = {}
    if emb.mode == "learned":
        params["embed.table"] = rng.uniform(-0.5, 0.5, size=(emb.n_event_types, emb.dim))
    d = emb.output_dim
    if isinstance(spec, RecurrentSpec):
        if d != spec.input_dim:
            raise ContractError(
                f"embedding width {d} does not match the recurrent input size {spec.input_dim}"
            )
        h = spec.hidden
        size_in = d
        for layer in range(spec.layers):
            params[f"lstm{layer}.wx"] = uniform(size_in, (size_in, 4 * h))
            params[f"lstm{layer}.wh"] = uniform(h, (h, 4 * h))
            params[f"lstm{layer}.b"] = np.zeros(4 * h)
            size_in = h
        d1, d2 = spec.dense
        params["fc1.w"] = uniform(h, (h, d1))
        params["fc1.b"] = np.zeros(d1)
        params["fc2.w"] = uniform(d1, (d1, d2))
        params["fc2.b"] = np.zeros(d2)
        params["out.w"] = uniform(d2, (d2, spec.n_activities))
        params["out.b"] = np.zeros(spec.n_activities)
    else:
        if d != spec.input_dim:
            raise ContractError(
                f"embedding width {d} does not match the windowed input size {spec.input_dim}"
            )
        dims = (spec.window * d, *spec.dims, spec.n_activities)
        for i in range(len(dims) - 1):
            params[f"fc{i}.w"] = uniform(dims[i], (dims[i], dims[i + 1]))
            params[f"fc{i}.b"] = np.zeros(dims[i + 1])
    return params


def flatten_params(params: dict[str, np.ndarray]) -> tuple[np.ndarray, list[tuple[str, tuple]]]:
    layout = [(name, params[name].shape) for name in sorted(params)]
    flat = np.concatenate([params[name].ravel() for name, _ in layout]) if layout else np.zeros(0)
    return flat, layout


def unflatten_params(flat: np.ndarray, layout: list[tuple[str, tuple]]) -> dict[str, np.ndarray]:
    out = {}
    pos = 0
    for name, shape in layout:
        size = int(np.prod(shape)) if shape else 1
        out[name] = flat[pos : pos + size].reshape(shape).copy()
        pos += size
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


# --- windowed (feed-forward) forward/backward -------------------------------


def _mlp_forward(params: dict, spec: WindowedSpec, x: np.ndarray):
    """x: (B, window*input_dim) -> probabilities (B, n_activities) + cache."""
    n_layers = len(spec.dims) + 1
    acts = [x]
    zs = []
    h = x
    for i in range(n_layers):
        z = h @ params[f"fc{i}.w"] + params[f"fc{i}.b"]
        zs.append(z)
        h = z if i == n_layers - 1 else np.maximum(z, 0.0)
        acts.append(h)
    probs = _softmax(acts[-1])
    return probs, (acts, zs)


def _mlp_backward(params: dict, spec: WindowedSpec, cache, dlogits: np.ndarray) -> dict:
    acts, _ = cache
    n_layers = len(spec.dims) + 1
    grads: dict[str, np.ndarray] = {}
    delta = dlogits
    for i in range(n_layers - 1, -1, -1):
        grads[f"fc{i}.w"] = acts[i].T @ delta
        grads[f"fc{i}.b"] = delta.sum(axis=0)
        if i:
            delta = delta @ params[f"fc{i}.w"].T
            delta = delta * (acts[i] > 0)
    grads["_dx"] = delta @ params["fc0.w"].T
    return grads


# --- recurrent (stacked LSTM) forward/backward -------------------------------


def _lstm_forward(params: dict, spec: RecurrentSpec, xs: np.ndarray, drop_masks=None):
    """xs: (T, B, input_dim) -> logits (T, B, A) + cache.

    drop_masks, when given, holds inverted-dropout masks: per layer boundary
    (layers-1 masks of shape (T, B, hidden)) plus one (T, B, dense1) mask for
    the head.
    """
    T, B, _ = xs.shape
    h = spec.hidden
    hs = np.zeros((spec.layers, T + 1, B, h))
    cs = np.zeros((spec.layers, T + 1, B, h))
    gates = np.zeros((spec.layers, T, B, 4 * h))
    layer_in = [xs]
    for layer in range(spec.layers):
        wx, wh, b = params[f"lstm{layer}.wx"], params[f"lstm{layer}.wh"], params[f"lstm{layer}.b"]
        x_l = layer_in[layer]
        for t in range(T):
            z = x_l[t] @ wx + hs[layer, t] @ wh + b
            i_g = _sigmoid(z[:, :h])
            f_g = _sigmoid(z[:, h : 2 * h])
            g_g = np.tanh(z[:, 2 * h : 3 * h])
            o_g = _sigmoid(z[:, 3 * h :])
            c = f_g * cs[layer, t] + i_g * g_g
            hs[layer, t + 1] = o_g * np.tanh(c)
            cs[layer, t + 1] = c
            gates[layer, t] = np.concatenate([i_g, f_g, g_g, o_g], axis=1)
        out = hs[layer, 1:]
        if drop_masks is not None and layer < spec.layers - 1:
            out = out * drop_masks[layer]
        layer_in.append(out)
    top = layer_in[-1]  # (T, B, h)
    z1 = top @ params["fc1.w"] + params["fc1.b"]
    a1 = np.maximum(z1, 0.0)
    a1d = a1 * drop_masks[-1] if drop_masks is not None else a1
    z2 = a1d @ params["fc2.w"] + params["fc2.b"]
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ params["out.w"] + params["out.b"]
    cache = (xs, layer_in, hs, cs, gates, a1, a1d, a2, drop_masks, (z1, z2))
    return logits, cache


def _lstm_backward(params: dict, spec: RecurrentSpec, cache, dlogits: np.ndarray) -> dict:
    xs, layer_in, hs, cs, gates, a1, a1d, a2, drop_masks, _ = cache
    T, B, _ = xs.shape
    h = spec.hidden
    grads = {name: np.zeros_like(p) for name, p in params.items() if name != "embed.table"}

    grads["out.w"] = a2.reshape(-1, a2.shape[-1]).T @ dlogits.reshape(-1, dlogits.shape[-1])
    grads["out.b"] = dlogits.sum(axis=(0, 1))
    da2 = dlogits @ params["out.w"].T
    dz2 = da2 * (a2 > 0)
    grads["fc2.w"] = a1d.reshape(-1, a1d.shape[-1]).T @ dz2.reshape(-1, dz2.shape[-1])
    grads["fc2.b"] = dz2.sum(axis=(0, 1))
    da1 = dz2 @ params["fc2.w"].T
    if drop_masks is not None:
        da1 = da1 * drop_masks[-1]
    dz1 = da1 * (a1 > 0)
    top = layer_in[-1]
    grads["fc1.w"] = top.reshape(-1, h).T @ dz1.reshape(-1, dz1.shape[-1])
    grads["fc1.b"] = dz1.sum(axis=(0, 1))
    d_out = dz1 @ params["fc1.w"].T  # gradient w.r.t. the top layer's output

    for layer in range(spec.layers - 1, -1, -1):
        if drop_masks is not None and layer < spec.layers - 1:
            d_out = d_out * drop_masks[layer]
        wx, wh = params[f"lstm{layer}.wx"], params[f"lstm{layer}.wh"]
        x_l = layer_in[layer]
        d_in = np.zeros_like(x_l)
        dh_next = np.zeros((B, h))
        dc_next = np.zeros((B, h))
        gwx, gwh, gb = grads[f"lstm{layer}.wx"], grads[f"lstm{layer}.wh"], grads[f"lstm{layer}.b"]
        for t in range(T - 1, -1, -1):
            dh = d_out[t] + dh_next
            i_g = gates[layer, t, :, :h]
            f_g = gates[layer, t, :, h : 2 * h]
            g_g = gates[layer, t, :, 2 * h : 3 * h]
            o_g = gates[layer, t, :, 3 * h :]
            c = cs[layer, t + 1]
            tanh_c = np.tanh(c)
            do = dh * tanh_c
            dc = dh * o_g * (1.0 - tanh_c**2) + dc_next
            di = dc * g_g
            df = dc * cs[layer, t]
            dg = dc * i_g
            dc_next = dc * f_g
            dz = np.concatenate(
                [
                    di * i_g * (1.0 - i_g),
                    df * f_g * (1.0 - f_g),
                    dg * (1.0 - g_g**2),
                    do * o_g * (1.0 - o_g),
                ],
                axis=1,
            )
            gwx += x_l[t].T @ dz
            gwh += hs[layer, t].T @ dz
            gb += dz.sum(axis=0)
            dh_next = dz @ wh.T
            d_in[t] = dz @ wx.T
        d_out = d_in
    grads["_dx"] = d_out  # gradient w.r.t. the embedded inputs (T, B, input_dim)
    return grads


# --- decoding state ----------------------------------------------------------


@dataclass
class RecurrentState:
    h: list[np.ndarray]
    c: list[np.ndarray]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RecurrentState)
            and all(np.array_equal(a, b) for a, b in zip(self.h, other.h))
            and all(np.array_equal(a, b) for a, b in zip(self.c, other.c))
        )


@dataclass
class WindowState:
    buffer: list[np.ndarray] = field(default_factory=list)  # last window-1 embeddings

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WindowState)
            and len(self.buffer) == len(other.buffer)
            and all(np.array_equal(a, b) for a, b in zip(self.buffer, other.buffer))
        )


DecodingState = RecurrentState | WindowState


class TrainedTagger:
    """Immutable weights plus architecture; decoding state lives outside."""

    def __init__(
        self,
        spec: ArchitectureSpec,
        embedding: EmbeddingConfig,
        params: dict[str, np.ndarray],
        seed: int = 0,
        metadata: dict | None = None,
    ) -> None:
        self.spec = spec
        self.embedding = embedding
        self.params = params
        self.seed = seed
        self.metadata = metadata or {}
        for name, arr in params.items():
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"parameter {name} contains non-finite values")

    @property
    def n_activities(self) -> int:
        return self.spec.n_activities

    @property
    def arch(self) -> str:
        return self.spec.arch

    def _embed(self, event: Event) -> np.ndarray:
        return embed_event(self.embedding, event, self.params.get("embed.table"))

    def init(self, trace: Trace | None = None) -> DecodingState:
        """Fresh per-trace state; the trace argument is ignored (it exists so
        evaluation-only baselines can peek at trace identity)."""
        if isinstance(self.spec, RecurrentSpec):
            h = self.spec.hidden
            return RecurrentState(
                h=[np.zeros(h) for _ in range(self.spec.layers)],
                c=[np.zeros(h) for _ in range(self.spec.layers)],
            )
        return WindowState(buffer=[])

    def predict(self, state: DecodingState, event: Event) -> np.ndarray:
        """Distribution over activities for the next event; advances `state`.
        Dropout is inactive at prediction time."""
        x = self._embed(event)
        if isinstance(self.spec, RecurrentSpec):
            if not isinstance(state, RecurrentState):
                raise ContractError("state does not belong to a recurrent tagger")
            xs = x[None, None, :]
            spec = self.spec
            h = spec.hidden
            inp = xs[0]
            for layer in range(spec.layers):
                wx, wh, b = (
                    self.params[f"lstm{layer}.wx"],
                    self.params[f"lstm{layer}.wh"],
                    self.params[f"lstm{layer}.b"],
                )
                z = inp @ wx + state.h[layer][None, :] @ wh + b
                i_g = _sigmoid(z[:, :h])
                f_g = _sigmoid(z[:, h : 2 * h])
                g_g = np.tanh(z[:, 2 * h : 3 * h])
                o_g = _sigmoid(z[:, 3 * h :])
                c = f_g * state.c[layer][None, :] + i_g * g_g
                hh = o_g * np.tanh(c)
                state.h[layer] = hh[0]
                state.c[layer] = c[0]
                inp = hh
            a1 = np.maximum(inp @ self.params["fc1.w"] + self.params["fc1.b"], 0.0)
            a2 = np.maximum(a1 @ self.params["fc2.w"] + self.params["fc2.b"], 0.0)
            logits = a2 @ self.params["out.w"] + self.params["out.b"]
            return _softmax(logits)[0]
        if not isinstance(state, WindowState):
            raise ContractError("state does not belong to a windowed tagger")
        k = self.spec.window
        d = self.embedding.output_dim
        window = list(state.buffer[-(k - 1) :]) + [x] if k > 1 else [x]
        pad = k - len(window)
        flat = np.concatenate([np.zeros(pad * d)] + [w for w in window])
        probs, _ = _mlp_forward(self.params, self.spec, flat[None, :])
        if k > 1:
            state.buffer.append(x)
            del state.buffer[: max(0, len(state.buffer) - (k - 1))]
        return probs[0]

    # --- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        doc = {
            "v": 1,
            "arch": "recurrent" if isinstance(self.spec, RecurrentSpec) else "windowed",
            "spec": self.spec.__dict__ | {},
            "embedding": {
                "n_event_types": self.embedding.n_event_types,
                "mode": self.embedding.mode,
                "dim": self.embedding.dim,
                "categorical_fields": [list(f) for f in self.embedding.categorical_fields],
                "numeric_fields": [list(f) for f in self.embedding.numeric_fields],
            },
            "seed": self.seed,
            "metadata": self.metadata,
            "params": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in sorted(self.params.items())
            },
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedTagger":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot load tagger from {path}: {exc}") from None
        if doc.get("v") != 1:
            raise SchemaError(f"unsupported tagger file version {doc.get('v')!r}")
        emb_doc = doc["embedding"]
        emb = EmbeddingConfig(
            n_event_types=emb_doc["n_event_types"],
            mode=emb_doc["mode"],
            dim=emb_doc["dim"],
            categorical_fields=tuple(tuple(f) for f in emb_doc["categorical_fields"]),
            numeric_fields=tuple(tuple(f) for f in emb_doc["numeric_fields"]),
        )
        sd = doc["spec"]
        if doc["arch"] == "recurrent":
            spec: ArchitectureSpec = RecurrentSpec(
                n_activities=sd["n_activities"],
                input_dim=sd["input_dim"],
                hidden=sd["hidden"],
                layers=sd["layers"],
                dense=tuple(sd["dense"]),
                dropout=sd["dropout"],
            )
        else:
            spec = WindowedSpec(
                n_activities=sd["n_activities"],
                window=sd["window"],
                input_dim=sd["input_dim"],
                dims=tuple(sd["dims"]),
            )
        params = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
        return cls(spec, emb, params, seed=doc["seed"], metadata=doc["metadata"])


class UniformTagger:
    """Knowledge-free baseline: a uniform distribution at every step."""

    def __init__(self, n_activities: int) -> None:
        self.n_activities = n_activities
        self.arch = "uniform"

    def init(self, trace: Trace | None = None):
        return None

    def predict(self, state, event: Event) -> np.ndarray:
        return np.full(self.n_activities, 1.0 / self.n_activities)


class OracleTagger:
    """Evaluation-only baseline that replays ground-truth labels; needs
    `init` to be called with the trace so it can look the labels up."""

    def __init__(self, n_activities: int, labels_by_trace: dict[str, tuple[int, ...]]) -> None:
        self.n_activities = n_activities
        self.labels_by_trace = labels_by_trace
        self.arch = "oracle"

    def init(self, trace: Trace | None = None):
        if trace is None or trace.id not in self.labels_by_trace:
            raise ContractError("oracle tagger needs a labelled trace")
        return iter(self.labels_by_trace[trace.id])

    def predict(self, state, event: Event) -> np.ndarray:
        pd = np.zeros(self.n_activities)
        pd[next(state)] = 1.0
        return pd


# --- training ----------------------------------------------------------------


def _embed_trace(
    emb: EmbeddingConfig, params: dict, trace: Trace
) -> tuple[np.ndarray, list[int]]:
    table = params.get("embed.table")
    xs = np.stack([embed_event(emb, ev, table) for ev in trace.events])
    types = [ev.etype for ev in trace.events]
    return xs, types


def _scatter_embed_grad(
    emb: EmbeddingConfig, grads: dict, types_batch, dx: np.ndarray
) -> None:
    """Accumulate input gradients into the lookup table (learned mode only).
    dx has the embedding slice first in each event vector."""
    if emb.mode != "learned":
        return
    table_grad = grads.setdefault("embed.table", None)
    if table_grad is None:
        grads["embed.table"] = table_grad = np.zeros((emb.n_event_types, emb.dim))
    d = emb.dim
    if dx.ndim == 3:  # (T, B, input_dim) for the recurrent net
        T, B, _ = dx.shape
        for t in range(T):
            for b in range(B):
                table_grad[types_batch[b][t]] += dx[t, b, :d]
    else:  # (B, window*input_dim) for the windowed net
        B = dx.shape[0]
        k = dx.shape[1] // emb.output_dim
        w = emb.output_dim
        for b in range(B):
            for pos, et in enumerate(types_batch[b]):
                if et is None:
                    continue  # zero padding
                table_grad[et] += dx[b, pos * w : pos * w + d]


class _Adam:
    def __init__(self, params: dict, lr: float) -> None:
        self.lr = lr
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for name in params:
            g = grads.get(name)
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mh = self.m[name] / (1 - b1**self.t)
            vh = self.v[name] / (1 - b2**self.t)
            params[name] -= self.lr * mh / (np.sqrt(vh) + eps)


def _windows_of(xs: np.ndarray, types: list[int], k: int) -> tuple[np.ndarray, list[list]]:
    """Per-event windows [i-k+1 .. i] with zero padding, plus the event-type
    layout used to scatter embedding gradients."""
    T, d = xs.shape
    rows = np.zeros((T, k * d))
    layouts: list[list] = []
    for i in range(T):
        lay: list = []
        for pos in range(k):
            src = i - (k - 1) + pos
            if src >= 0:
                rows[i, pos * d : (pos + 1) * d] = xs[src]
                lay.append(types[src])
            else:
                lay.append(None)
        layouts.append(lay)
    return rows, layouts


def train(
    spec: ArchitectureSpec,
    emb: EmbeddingConfig,
    labeled: list[tuple[Trace, tuple[int, ...]]],
    hyper: TrainConfig | None = None,
) -> TrainedTagger:
    """Cross-entropy training with Adam; deterministic for a fixed seed."""
    hyper = hyper or TrainConfig()
    if not labeled:
        raise ContractError("training needs at least one labelled trace")
    for trace, labels in labeled:
        if len(labels) != len(trace.events):
            raise ContractError(f"trace {trace.id!r}: labels do not cover every event")
        if any(not 0 <= a < spec.n_activities for a in labels):
            raise ContractError(f"trace {trace.id!r}: label outside the activity universe")

    rng = np.random.default_rng(hyper.seed)
    params = _init_params(spec, emb, rng)
    opt = _Adam(params, hyper.learning_rate)
    epochs = hyper.resolved_epochs(spec)

    order = rng.permutation(len(labeled))
    n_val = int(round(len(labeled) * hyper.val_fraction))
    val_idx = set(order[:n_val].tolist())
    train_set = [labeled[i] for i in order[n_val:]]
    val_set = [labeled[i] for i in sorted(val_idx)]
    if not train_set:
        train_set, val_set = [labeled[i] for i in order], []

    train_curve: list[float] = []
    val_curve: list[float] = []

    def batch_loss_grads(batch: list[tuple[Trace, tuple[int, ...]]], training: bool):
        if isinstance(spec, WindowedSpec):
            rows, layouts, ys = [], [], []
            for trace, labels in batch:
                xs, types = _embed_trace(emb, params, trace)
                r, lay = _windows_of(xs, types, spec.window)
                rows.append(r)
                layouts.extend(lay)
                ys.extend(labels)
            X = np.concatenate(rows)
            Y = np.array(ys)
            probs, cache = _mlp_forward(params, spec, X)
            n = len(Y)
            loss = -np.log(np.maximum(probs[np.arange(n), Y], 1e-300)).mean()
            if not training:
                return loss, None, n
            dlogits = probs.copy()
            dlogits[np.arange(n), Y] -= 1.0
            dlogits /= n
            grads = _mlp_backward(params, spec, cache, dlogits)
            dx = grads.pop("_dx")
            _scatter_embed_grad(emb, grads, layouts, dx)
            return loss, grads, n
        # recurrent: traces in one batch share a length
        T = len(batch[0][0].events)
        xs = np.stack([_embed_trace(emb, params, tr)[0] for tr, _ in batch], axis=1)
        types_batch = [[ev.etype for ev in tr.events] for tr, _ in batch]
        Y = np.array([labels for _, labels in batch]).T  # (T, B)
        drop = None
        if training and spec.dropout > 0:
            keep = 1.0 - spec.dropout
            drop = [
                (rng.random((T, len(batch), spec.hidden)) < keep) / keep
                for _ in range(spec.layers - 1)
            ]
            drop.append((rng.random((T, len(batch), spec.dense[0])) < keep) / keep)
        logits, cache = _lstm_forward(params, spec, xs, drop)
        probs = _softmax(logits)
        n = T * len(batch)
        picked = np.take_along_axis(probs, Y[:, :, None], axis=2)[:, :, 0]
        loss = -np.log(np.maximum(picked, 1e-300)).mean()
        if not training:
            return loss, None, n
        dlogits = probs.copy()
        np.put_along_axis(
            dlogits, Y[:, :, None], np.take_along_axis(dlogits, Y[:, :, None], axis=2) - 1.0, axis=2
        )
        dlogits /= n
        grads = _lstm_backward(params, spec, cache, dlogits)
        dx = grads.pop("_dx")
        _scatter_embed_grad(emb, grads, types_batch, dx)
        return loss, grads, n

    def make_batches(items) -> list[list]:
        if isinstance(spec, WindowedSpec):
            idx = rng.permutation(len(items))
            return [
                [items[i] for i in idx[p : p + hyper.batch_size]]
                for p in range(0, len(items), hyper.batch_size)
            ]
        buckets: dict[int, list] = {}
        for it in items:
            buckets.setdefault(len(it[0].events), []).append(it)
        batches = []
        for length in sorted(buckets):
            bucket = buckets[length]
            idx = rng.permutation(len(bucket))
            batches.extend(
                [bucket[i] for i in idx[p : p + hyper.batch_size]]
                for p in range(0, len(bucket), hyper.batch_size)
            )
        order2 = rng.permutation(len(batches))
        return [batches[i] for i in order2]

    for _epoch in range(epochs):
        total, count = 0.0, 0
        for batch in make_batches(train_set):
            loss, grads, n = batch_loss_grads(batch, training=True)
            opt.step(params, grads)
            total += loss * n
            count += n
        train_curve.append(float(total / max(1, count)))
        if val_set:
            vt, vc = 0.0, 0
            for batch in make_batches(val_set):
                loss, _, n = batch_loss_grads(batch, training=False)
                vt += loss * n
                vc += n
            val_curve.append(float(vt / vc))

    meta = {
        "epochs": epochs,
        "learning_rate": hyper.learning_rate,
        "batch_size": hyper.batch_size,
        "train_loss": train_curve,
        "val_loss": val_curve,
        "n_train_traces": len(train_set),
        "n_val_traces": len(val_set),
    }
    return TrainedTagger(spec, emb, params, seed=hyper.seed, metadata=meta)


def training_accuracy(tagger: TrainedTagger, labeled) -> float:
    hits = total = 0
    for trace, labels in labeled:
        state = tagger.init(trace)
        for ev, truth in zip(trace.events, labels):
            pd = tagger.predict(state, ev)
            hits += int(int(np.argmax(pd)) == truth)
            total += 1
    return hits / max(1, total)


def _relu_margin(
    spec: ArchitectureSpec,
    emb: EmbeddingConfig,
    params: dict,
    traces: list[tuple[Trace, tuple[int, ...]]],
) -> float:
    """Smallest |pre-activation| feeding a ReLU over the given batch."""
    table = params.get("embed.table")
    if isinstance(spec, WindowedSpec):
        rows = []
        for trace, _ in traces:
            xs = np.stack([embed_event(emb, ev, table) for ev in trace.events])
            r, _ = _windows_of(xs, [ev.etype for ev in trace.events], spec.window)
            rows.append(r)
        _, (_, zs) = _mlp_forward(params, spec, np.concatenate(rows))
        return min(float(np.min(np.abs(z))) for z in zs[:-1])
    xs = np.stack(
        [np.stack([embed_event(emb, ev, table) for ev in tr.events]) for tr, _ in traces],
        axis=1,
    )
    _, cache = _lstm_forward(params, spec, xs, None)
    z1, z2 = cache[-1]
    return min(float(np.min(np.abs(z1))), float(np.min(np.abs(z2))))


def gradient_check(
    spec: ArchitectureSpec,
    seed: int = 0,
    emb: EmbeddingConfig | None = None,
    h: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients of
    the cross-entropy loss on a small random batch.

    Central differences are invalid across a ReLU kink, so instances whose
    dense pre-activations fall within a small margin of zero are resampled
    (deterministically, from the same seed) before comparing.
    """
    emb = emb or EmbeddingConfig(n_event_types=4, mode="learned", dim=spec.input_dim)
    if isinstance(spec, RecurrentSpec):
        spec = replace(spec, dropout=0.0)
    margin = 25.0 * h
    params: dict[str, np.ndarray] = {}
    traces: list[tuple[Trace, tuple[int, ...]]] = []
    for attempt in range(64):
        rng = np.random.default_rng([seed, attempt])
        params = _init_params(spec, emb, rng)
        for name in params:
            # random biases push pre-activations away from the ReLU kinks and
            # exercise both mask branches
            if name.endswith(".b"):
                params[name] = rng.uniform(-0.4, 0.4, size=params[name].shape)
        traces = []
        for t in range(2):
            events = tuple(
                Event(i + 1, int(rng.integers(emb.n_event_types))) for i in range(5)
            )
            labels = tuple(int(rng.integers(spec.n_activities)) for _ in range(5))
            traces.append((Trace(f"g{t}", events), labels))
        if _relu_margin(spec, emb, params, traces) > margin:
            break
    else:
        raise ContractError("could not sample a kink-free gradient-check instance")

    def loss_and_grads(p: dict, want_grads: bool):
        if isinstance(spec, WindowedSpec):
            rows, layouts, ys = [], [], []
            for trace, labels in traces:
                table = p.get("embed.table")
                xs = np.stack([embed_event(emb, ev, table) for ev in trace.events])
                r, lay = _windows_of(xs, [ev.etype for ev in trace.events], spec.window)
                rows.append(r)
                layouts.extend(lay)
                ys.extend(labels)
            X = np.concatenate(rows)
            Y = np.array(ys)
            probs, cache = _mlp_forward(p, spec, X)
            n = len(Y)
            loss = -np.log(np.maximum(probs[np.arange(n), Y], 1e-300)).mean()
            if not want_grads:
                return loss, None
            dl = probs.copy()
            dl[np.arange(n), Y] -= 1.0
            dl /= n
            grads = _mlp_backward(p, spec, cache, dl)
            dx = grads.pop("_dx")
            _scatter_embed_grad(emb, grads, layouts, dx)
            return loss, grads
        xs = np.stack(
            [
                np.stack([embed_event(emb, ev, p.get("embed.table")) for ev in tr.events])
                for tr, _ in traces
            ],
            axis=1,
        )
        types_batch = [[ev.etype for ev in tr.events] for tr, _ in traces]
        Y = np.array([labels for _, labels in traces]).T
        logits, cache = _lstm_forward(p, spec, xs, None)
        probs = _softmax(logits)
        n = Y.size
        picked = np.take_along_axis(probs, Y[:, :, None], axis=2)[:, :, 0]
        loss = -np.log(np.maximum(picked, 1e-300)).mean()
        if not want_grads:
            return loss, None
        dl = probs.copy()
        np.put_along_axis(
            dl, Y[:, :, None], np.take_along_axis(dl, Y[:, :, None], axis=2) - 1.0, axis=2
        )
        dl /= n
        grads = _lstm_backward(p, spec, cache, dl)
        dx = grads.pop("_dx")
        _scatter_embed_grad(emb, grads, types_batch, dx)
        return loss, grads

    _, analytic = loss_and_grads(params, want_grads=True)
    worst = 0.0
    for name in sorted(params):
        arr = params[name]
        ga = analytic.get(name, np.zeros_like(arr))
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_and_grads(params, want_grads=False)
            flat[i] = orig - h
            lm, _ = loss_and_grads(params, want_grads=False)
            flat[i] = orig
            gn = (lp - lm) / (2 * h)
            g = ga.ravel()[i]
            # relative where the gradients are sizable, absolute below 1e-2
            err = abs(g - gn) / max(abs(g) + abs(gn), 1e-2)
            worst = max(worst, err)
    return worst
