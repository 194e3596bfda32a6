"""Trainable classifier heads mapping frame features to 3-class logits.

Two heads, both tiny and trained from scratch over frozen backbone
features:

* `MLPHead` - feedforward net over a temporally pooled feature vector.
* `BiLSTMHead` - single bidirectional LSTM layer (default 50 hidden
  units per direction) whose two final states are concatenated and
  linearly mapped to logits.

Forward and backward passes are explicit numpy in float64: gradients are
checked against central finite differences in the test suite, and runs
are bit-reproducible on CPU. Parameters live in a flat `dict[str,
ndarray]` so the optimizer and the artifact format stay trivial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

NUM_CLASSES = 3
ARTIFACT_VERSION = 1


class DimensionMismatch(ValueError):
    """Input feature width does not match the head's parameters."""


class ArtifactMismatch(ValueError):
    """Saved head artifact has the wrong version or incompatible shapes."""


@dataclass
class HeadConfig:
    kind: str = "mlp"  # "mlp" | "bilstm"
    hidden_sizes: tuple[int, ...] = (256, 64)
    lstm_hidden: int = 50
    dropout: float = 0.1
    activation: str = "relu"  # "relu" | "tanh"
    pooling: str = "mean"  # "mean" | "max"

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.kind not in ("mlp", "bilstm"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if any(h < 1 for h in self.hidden_sizes) or self.lstm_hidden < 1:
            raise ValueError("all layer sizes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.pooling not in ("mean", "max"):
            raise ValueError(f"unknown pooling {self.pooling!r}")


def _frames_of(features) -> np.ndarray:
    frames = np.asarray(getattr(features, "frames", features), dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError(f"expected a [T x D] frame matrix with T >= 1, got shape {frames.shape}")
    return frames


def pool_mean(features) -> np.ndarray:
    """Per-dimension mean over frames: [T x D] -> [D]."""
    return _frames_of(features).mean(axis=0)


def pool_max(features) -> np.ndarray:
    """Per-dimension max over frames: [T x D] -> [D]."""
    return _frames_of(features).max(axis=0)


POOLERS = {"mean": pool_mean, "max": pool_max}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient wrt logits.

    Returns (loss, dlogits) with dlogits already divided by batch size,
    so `dlogits` is exactly dLoss/dlogits.
    """
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-log_probs[np.arange(n), labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0).astype(z.dtype) if kind == "relu" else 1.0 - a * a


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _dropout_mask(rng: np.random.Generator | None, shape: tuple[int, ...], p: float) -> np.ndarray:
    if rng is None:
        raise ValueError("dropout > 0 requires an rng during training")
    # inverted dropout: scale at train time, identity at eval time
    return (rng.random(shape) >= p) / (1.0 - p)


class MLPHead:
    """Feedforward classifier over a pooled [D] feature vector."""

    def __init__(self, input_dim: int, config: HeadConfig, seed: int = 0):
        if config.kind != "mlp":
            raise ValueError("MLPHead requires config.kind == 'mlp'")
        self.input_dim = int(input_dim)
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        fan_in = self.input_dim
        for i, width in enumerate(config.hidden_sizes):
            self.params[f"w{i}"] = _uniform_fan_in(rng, fan_in, (fan_in, width))
            self.params[f"b{i}"] = np.zeros(width)
            fan_in = width
        self.params["w_out"] = _uniform_fan_in(rng, fan_in, (fan_in, NUM_CLASSES))
        self.params["b_out"] = np.zeros(NUM_CLASSES)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected feature width {self.input_dim}, got {x.shape[1]}")
        return x

    def _forward_cached(self, x: np.ndarray, train: bool, rng):
        p = self.config.dropout
        acts = [x]  # post-activation (and post-dropout) outputs per layer
        pre = []
        masks = []
        h = x
        for i in range(len(self.config.hidden_sizes)):
            z = h @ self.params[f"w{i}"] + self.params[f"b{i}"]
            h = _activate(z, self.config.activation)
            if train and p > 0.0:
                mask = _dropout_mask(rng, h.shape, p)
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            pre.append(z)
            acts.append(h)
        logits = h @ self.params["w_out"] + self.params["b_out"]
        return logits, acts, pre, masks

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Logits [B x 3] for pooled features [B x D] (or a single [D])."""
        logits, _, _, _ = self._forward_cached(self._check_input(x), train, rng)
        return logits

    def loss_and_grads(
        self, x: np.ndarray, labels: np.ndarray, rng: np.random.Generator | None = None
    ) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
        """Mean cross-entropy and dLoss/dparam for one mini-batch."""
        x = self._check_input(x)
        logits, acts, pre, masks = self._forward_cached(x, train=self.config.dropout > 0.0, rng=rng)
        loss, dlogits = cross_entropy(logits, labels)

        grads: dict[str, np.ndarray] = {}
        grads["w_out"] = acts[-1].T @ dlogits
        grads["b_out"] = dlogits.sum(axis=0)
        dh = dlogits @ self.params["w_out"].T
        for i in reversed(range(len(self.config.hidden_sizes))):
            if masks[i] is not None:
                dh = dh * masks[i]
            dz = dh * _activate_grad(pre[i], _activate(pre[i], self.config.activation), self.config.activation)
            grads[f"w{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ self.params[f"w{i}"].T
        return loss, grads, logits

    def logits_for(self, features) -> np.ndarray:
        """Eval-mode logits [3] for one FeatureSequence."""
        pooled = POOLERS[self.config.pooling](features)
        return self.forward(pooled)[0]


def _gates(a: np.ndarray, hidden: int):
    i = 1.0 / (1.0 + np.exp(-a[:, :hidden]))
    f = 1.0 / (1.0 + np.exp(-a[:, hidden : 2 * hidden]))
    g = np.tanh(a[:, 2 * hidden : 3 * hidden])
    o = 1.0 / (1.0 + np.exp(-a[:, 3 * hidden :]))
    return i, f, g, o


class BiLSTMHead:
    """Bidirectional LSTM over frame sequences, final states -> logits.

    The forward pass runs one LSTM over each sequence left-to-right and an
    independent one right-to-left (within each sequence's true length);
    the two final hidden states are concatenated [2H] and linearly mapped
    to 3 logits. Padded positions never touch the state: updates are
    masked to carry h/c through, so batch padding is invisible to the
    result.
    """

    def __init__(self, input_dim: int, config: HeadConfig, seed: int = 0):
        if config.kind != "bilstm":
            raise ValueError("BiLSTMHead requires config.kind == 'bilstm'")
        self.input_dim = int(input_dim)
        self.config = config
        hidden = config.lstm_hidden
        rng = np.random.default_rng(seed)
        self.params = {}
        for direction in ("fwd", "bwd"):
            self.params[f"wx_{direction}"] = _uniform_fan_in(rng, input_dim, (input_dim, 4 * hidden))
            self.params[f"wh_{direction}"] = _uniform_fan_in(rng, hidden, (hidden, 4 * hidden))
            self.params[f"b_{direction}"] = np.zeros(4 * hidden)
        self.params["w_out"] = _uniform_fan_in(rng, 2 * hidden, (2 * hidden, NUM_CLASSES))
        self.params["b_out"] = np.zeros(NUM_CLASSES)

    def _check_input(self, frames: np.ndarray, lengths) -> tuple[np.ndarray, np.ndarray]:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3:
            raise DimensionMismatch(f"expected [B x T x D] frames, got shape {frames.shape}")
        if frames.shape[2] != self.input_dim:
            raise DimensionMismatch(f"expected feature width {self.input_dim}, got {frames.shape[2]}")
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.shape != (frames.shape[0],) or lengths.min() < 1 or lengths.max() > frames.shape[1]:
            raise DimensionMismatch("lengths must give one value in [1, T] per sequence")
        return frames, lengths

    @staticmethod
    def _reverse_within_lengths(frames: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        reversed_frames = np.zeros_like(frames)
        for b, length in enumerate(lengths):
            reversed_frames[b, :length] = frames[b, length - 1 :: -1]
        return reversed_frames

    def _run_direction(self, x: np.ndarray, mask: np.ndarray, direction: str):
        """One direction's recurrence; returns the final state and the
        per-step cache needed for backprop."""
        wx = self.params[f"wx_{direction}"]
        wh = self.params[f"wh_{direction}"]
        b = self.params[f"b_{direction}"]
        batch, steps, _ = x.shape
        hidden = self.config.lstm_hidden
        # input projection for all steps in one gemm; the loop only does
        # the [B x H] recurrence
        x_proj = x.reshape(batch * steps, -1) @ wx
        x_proj = x_proj.reshape(batch, steps, 4 * hidden)
        h = np.zeros((batch, hidden))
        c = np.zeros((batch, hidden))
        cache = []
        for t in range(steps):
            m = mask[:, t][:, None]
            a = x_proj[:, t] + h @ wh + b
            i, f, g, o = _gates(a, hidden)
            c_candidate = f * c + i * g
            tc = np.tanh(c_candidate)
            h_candidate = o * tc
            cache.append((i, f, g, o, tc, c, h, m))
            c = m * c_candidate + (1.0 - m) * c
            h = m * h_candidate + (1.0 - m) * h
        return h, cache

    def _direction_backward(self, dh_final: np.ndarray, x: np.ndarray, cache, direction: str):
        wh = self.params[f"wh_{direction}"]
        hidden = self.config.lstm_hidden
        batch, steps, _ = x.shape
        da_all = np.zeros((batch, steps, 4 * hidden))
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * hidden)
        dh = dh_final
        dc = np.zeros_like(dh_final)
        for t in reversed(range(len(cache))):
            i, f, g, o, tc, c_prev, h_prev, m = cache[t]
            dh_candidate = m * dh
            dc_candidate = m * dc + dh_candidate * o * (1.0 - tc * tc)
            do = dh_candidate * tc
            di = dc_candidate * g
            df = dc_candidate * c_prev
            dg = dc_candidate * i
            da = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
                axis=1,
            )
            da_all[:, t] = da
            dwh += h_prev.T @ da
            db += da.sum(axis=0)
            dh = da @ wh.T + (1.0 - m) * dh
            dc = dc_candidate * f + (1.0 - m) * dc
        # input-weight gradient as one gemm over all steps
        dwx = x.reshape(batch * steps, -1).T @ da_all.reshape(batch * steps, 4 * hidden)
        return dwx, dwh, db

    @staticmethod
    def _mask_from_lengths(lengths: np.ndarray, steps: int) -> np.ndarray:
        return (np.arange(steps)[None, :] < lengths[:, None]).astype(np.float64)

    def readout(self, frames: np.ndarray, lengths) -> np.ndarray:
        """Concatenated final hidden states [B x 2H] (eval path)."""
        frames, lengths = self._check_input(frames, lengths)
        mask = self._mask_from_lengths(lengths, frames.shape[1])
        h_fwd, _ = self._run_direction(frames, mask, "fwd")
        h_bwd, _ = self._run_direction(self._reverse_within_lengths(frames, lengths), mask, "bwd")
        return np.concatenate([h_fwd, h_bwd], axis=1)

    def forward(
        self, frames: np.ndarray, lengths, train: bool = False, rng: np.random.Generator | None = None
    ) -> np.ndarray:
        """Logits [B x 3] for padded frames [B x T x D] with true lengths."""
        combined = self.readout(frames, lengths)
        if train and self.config.dropout > 0.0:
            combined = combined * _dropout_mask(rng, combined.shape, self.config.dropout)
        return combined @ self.params["w_out"] + self.params["b_out"]

    def loss_and_grads(
        self, frames: np.ndarray, lengths, labels: np.ndarray, rng: np.random.Generator | None = None
    ) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
        """Mean cross-entropy and dLoss/dparam for one padded mini-batch."""
        frames, lengths = self._check_input(frames, lengths)
        mask = self._mask_from_lengths(lengths, frames.shape[1])
        x_fwd = frames
        x_bwd = self._reverse_within_lengths(frames, lengths)
        h_fwd, cache_fwd = self._run_direction(x_fwd, mask, "fwd")
        h_bwd, cache_bwd = self._run_direction(x_bwd, mask, "bwd")
        combined = np.concatenate([h_fwd, h_bwd], axis=1)

        drop_mask = None
        if self.config.dropout > 0.0:
            drop_mask = _dropout_mask(rng, combined.shape, self.config.dropout)
            combined = combined * drop_mask

        logits = combined @ self.params["w_out"] + self.params["b_out"]
        loss, dlogits = cross_entropy(logits, labels)

        grads = {
            "w_out": combined.T @ dlogits,
            "b_out": dlogits.sum(axis=0),
        }
        dcombined = dlogits @ self.params["w_out"].T
        if drop_mask is not None:
            dcombined = dcombined * drop_mask
        hidden = self.config.lstm_hidden
        for direction, cache, x, sl in (
            ("fwd", cache_fwd, x_fwd, slice(0, hidden)),
            ("bwd", cache_bwd, x_bwd, slice(hidden, 2 * hidden)),
        ):
            dwx, dwh, db = self._direction_backward(dcombined[:, sl], x, cache, direction)
            grads[f"wx_{direction}"] = dwx
            grads[f"wh_{direction}"] = dwh
            grads[f"b_{direction}"] = db
        return loss, grads, logits

    def logits_for(self, features) -> np.ndarray:
        """Eval-mode logits [3] for one FeatureSequence."""
        frames = _frames_of(features)
        return self.forward(frames[None, :, :], np.array([frames.shape[0]]))[0]


def build_head(input_dim: int, config: HeadConfig, seed: int = 0):
    if config.kind == "mlp":
        return MLPHead(input_dim, config, seed)
    return BiLSTMHead(input_dim, config, seed)


def save_head(path: str | Path, head, meta: dict | None = None) -> Path:
    """Persist config + parameters (named shapes) in one .npz, version-tagged."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": ARTIFACT_VERSION,
        "input_dim": head.input_dim,
        "head_config": asdict(head.config),
    }
    header.update(meta or {})
    encoded = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, __meta__=encoded, **head.params)
    return path


def load_head(path: str | Path):
    """Rebuild a head from `save_head` output.

    Returns (head, meta). Refuses artifacts with an unknown format
    version or parameter shapes that disagree with the stored config.
    """
    with np.load(Path(path)) as archive:
        if "__meta__" not in archive:
            raise ArtifactMismatch(f"{path}: not a head artifact (missing meta)")
        meta = json.loads(bytes(archive["__meta__"]).decode("utf-8"))
        params = {k: archive[k] for k in archive.files if k != "__meta__"}

    if meta.get("format_version") != ARTIFACT_VERSION:
        raise ArtifactMismatch(
            f"{path}: format version {meta.get('format_version')} not supported (expected {ARTIFACT_VERSION})"
        )
    config_dict = dict(meta["head_config"])
    config_dict["hidden_sizes"] = tuple(config_dict["hidden_sizes"])
    config = HeadConfig(**config_dict)
    head = build_head(int(meta["input_dim"]), config, seed=0)
    if set(params) != set(head.params):
        raise ArtifactMismatch(f"{path}: parameter names do not match config {config}")
    for name, value in params.items():
        if value.shape != head.params[name].shape:
            raise ArtifactMismatch(
                f"{path}: shape {value.shape} for {name!r}, expected {head.params[name].shape}"
            )
        head.params[name] = value.astype(np.float64)
    return head, meta
