"""Single-layer unidirectional LSTM classifier over K-frame feature windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, NumericError, StructureError
from ..ingest import Label
from . import backend

# Angles arrive in degrees; dividing by 90 keeps typical inputs inside [-1, 1].
INPUT_SCALE = 90.0
BLOCKS = ("W", "U", "b", "V", "c")


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 6
    hidden_units: int = 5
    num_classes: int = 2
    K: int = 15

    def __post_init__(self):
        if self.input_dim != 6:
            raise ConfigError(f"input_dim must be 6, got {self.input_dim}")
        if self.num_classes != 2:
            raise ConfigError(f"num_classes must be 2, got {self.num_classes}")
        if self.hidden_units < 1:
            raise ConfigError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        I, H, C = self.input_dim, self.hidden_units, self.num_classes
        return {"W": (4 * H, I), "U": (4 * H, H), "b": (4 * H,), "V": (C, H), "c": (C,)}


@dataclass(eq=False)
class LstmParams:
    """Weights; gate rows ordered (input, forget, cell, output) in blocks of H.

    Also used to hold gradients and Adam moments, which have the same shapes.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    V: np.ndarray
    c: np.ndarray
    input_scale: float = INPUT_SCALE

    def __post_init__(self):
        for name in BLOCKS:
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        H = self.U.shape[1] if self.U.ndim == 2 else -1
        expected = {"W": (4 * H, self.W.shape[-1]), "U": (4 * H, H), "b": (4 * H,),
                    "V": (self.V.shape[0], H), "c": (self.V.shape[0],)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise StructureError(f"parameter block {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def blocks(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, n) for n in BLOCKS)

    @property
    def hidden_units(self) -> int:
        return self.U.shape[1]

    def config(self, K: int = 15) -> NetConfig:
        return NetConfig(self.W.shape[1], self.hidden_units, self.V.shape[0], K)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.blocks])

    def with_flat(self, vec: np.ndarray) -> "LstmParams":
        out, at = {}, 0
        for name in BLOCKS:
            a = getattr(self, name)
            out[name] = np.asarray(vec[at : at + a.size], dtype=np.float64).reshape(a.shape)
            at += a.size
        return replace(self, **out)

    def map(self, fn) -> "LstmParams":
        return replace(self, **{n: fn(getattr(self, n)) for n in BLOCKS})

    def copy(self) -> "LstmParams":
        return self.map(np.copy)

    def zeros_like(self) -> "LstmParams":
        return self.map(np.zeros_like)

    def equal(self, other: "LstmParams") -> bool:
        """Bitwise equality of every block (and the input scale)."""
        return self.input_scale == other.input_scale and all(
            a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.blocks, other.blocks)
        )


Gradients = LstmParams


@dataclass(frozen=True)
class ClassScores:
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def predicted(self) -> Label:
        # strict comparison: ties go to NonFall
        return Label.FALL if self.log_probs[Label.FALL.value] > self.log_probs[Label.NONFALL.value] else Label.NONFALL

    @property
    def logprob_fall(self) -> float:
        return float(self.log_probs[Label.FALL.value])


def init_params(cfg: NetConfig, seed: int = 0) -> LstmParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    H = cfg.hidden_units
    a = 1.0 / math.sqrt(H)
    shapes = cfg.shapes()
    W = rng.uniform(-a, a, shapes["W"])
    U = rng.uniform(-a, a, shapes["U"])
    V = rng.uniform(-a, a, shapes["V"])
    b = np.zeros(shapes["b"])
    b[H : 2 * H] = 1.0
    return LstmParams(W, U, b, V, np.zeros(shapes["c"]))


def param_count(cfg: NetConfig) -> tuple[int, int]:
    """(number of parameters, bytes at 4 bytes per parameter)."""
    I, H, C = cfg.input_dim, cfg.hidden_units, cfg.num_classes
    count = 4 * (H * (I + H) + H) + (H * C + C)
    return count, 4 * count


# --------------------------------------------------------------------------
# Forward / loss / backward
# --------------------------------------------------------------------------


def _as_matrix(w) -> np.ndarray:
    x = getattr(w, "features", w)
    return np.asarray(x, dtype=np.float64)


def _check_finite(X: np.ndarray) -> None:
    bad = ~np.isfinite(X).all(axis=-1)
    if bad.any():
        n, t = np.argwhere(bad)[0]
        raise NumericError(f"non-finite input in window {n}, frame {t}")


def stack_windows(windows: Sequence, scale: float = INPUT_SCALE) -> np.ndarray:
    """``(B, K, 6)`` normalised input batch from windows or raw ``K x 6`` matrices."""
    mats = [_as_matrix(w) for w in windows]
    Ks = {m.shape for m in mats}
    if len(Ks) != 1:
        raise StructureError(f"batch windows must share one shape, got {sorted(Ks)}")
    X = np.stack(mats)
    if X.ndim != 3 or X.shape[1] < 1:
        raise StructureError(f"windows must be K x I matrices with K >= 1, got {X.shape[1:]}")
    _check_finite(X)
    return np.ascontiguousarray(X / scale)


def forward_batch(p: LstmParams, X: np.ndarray) -> np.ndarray:
    """Log-probabilities ``(B, 2)`` for an already-normalised batch."""
    if X.shape[-1] != p.W.shape[1]:
        raise StructureError(f"input width {X.shape[-1]} does not match W ({p.W.shape[1]})")
    return backend.kernels.forward(*p.blocks, np.ascontiguousarray(X, dtype=np.float64))


def forward(p: LstmParams, w, cfg: NetConfig | None = None) -> ClassScores:
    """Scores for one window (a ``WindowSample`` or raw ``K x 6`` degree matrix).

    With ``cfg`` the window length must equal ``cfg.K`` (training contract);
    without it any K >= 1 is accepted.
    """
    X = stack_windows([w], p.input_scale)
    if cfg is not None and X.shape[1] != cfg.K:
        raise StructureError(f"window has {X.shape[1]} frames, model expects K={cfg.K}")
    return ClassScores(forward_batch(p, X)[0])


def hidden_states(p: LstmParams, w) -> np.ndarray:
    """Hidden state after every step of one window, ``(K, H)``."""
    X = stack_windows([w], p.input_scale)
    return backend.kernels.hidden_states(*p.blocks, X)[0]


def nll_loss(scores: ClassScores, label) -> float:
    idx = label.value if isinstance(label, Label) else int(label)
    if idx not in (0, 1):
        raise ValueError(f"label index must be 0 or 1, got {idx}")
    return float(-scores.log_probs[idx])


def _labels(labels: Iterable) -> np.ndarray:
    return np.array([l.value if isinstance(l, Label) else int(l) for l in labels], dtype=np.int64)


def loss_and_grad(p: LstmParams, X: np.ndarray, y: np.ndarray) -> tuple[float, Gradients]:
    """Mean NLL and its exact gradient for a normalised batch ``X (B, K, I)``."""
    if X.shape[0] == 0:
        raise StructureError("empty batch")
    loss, *grads = backend.kernels.loss_and_grad(
        *p.blocks, np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(y, dtype=np.int64)
    )
    return float(loss), LstmParams(*grads, input_scale=p.input_scale)


def backward(p: LstmParams, batch: Sequence) -> Gradients:
    """Gradient of the mean batch NLL; ``batch`` holds ``(window, label)`` pairs or WindowSamples."""
    if not batch:
        raise StructureError("empty batch")
    pairs = [(b, b.label) if hasattr(b, "label") and hasattr(b, "features") else b for b in batch]
    X = stack_windows([w for w, _ in pairs], p.input_scale)
    return loss_and_grad(p, X, _labels(l for _, l in pairs))[1]


def mean_loss(p: LstmParams, X: np.ndarray, y: np.ndarray) -> float:
    lp = forward_batch(p, X)
    return float(-lp[np.arange(len(y)), y].mean())
