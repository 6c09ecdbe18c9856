"""Closed-form linear forecasters in channel-independent (CI) and channel-dependent (CD) form.

Two families share one ridge solver:

* ``PlainLinear``: a single linear map from the lookback window to the horizon.
* ``DLinear``: moving-average trend/seasonal decomposition with one map per
  component, summed at the output.

CI models map each channel's ``L`` inputs to its own ``H`` outputs with weights
shared by every channel (or one map per channel with ``individual=True``); an
output channel can only ever see its own history. CD models map the flattened
``C*L`` window to all ``C*H`` outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import WindowedDataset

FAMILIES = ("PlainLinear", "DLinear")
CHANNEL_MODES = ("CI", "CD")
REVIN_EPS = 1e-5
MODEL_FORMAT = "tsfbench-linear-forecaster"


class FitError(RuntimeError):
    """Raised when a forecaster cannot be fitted."""


@dataclass(frozen=True)
class ForecasterSpec:
    family: str = "PlainLinear"
    channel_mode: str = "CI"
    lookback: int = 96
    horizon: int = 96
    ridge_lambda: float = 0.0
    ma_kernel: int = 25
    revin: bool = False
    intercept: bool = False
    individual: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}, got {self.channel_mode!r}")
        if self.lookback < 1 or self.horizon < 1:
            raise ValueError("lookback and horizon must be at least 1")
        if not self.ridge_lambda >= 0 or not math.isfinite(self.ridge_lambda):
            raise ValueError("ridge_lambda must be a finite non-negative number")
        if self.family == "DLinear":
            _check_kernel(self.ma_kernel, self.lookback)
        if self.individual and self.channel_mode != "CI":
            raise ValueError("individual weights only apply to CI models")

    @property
    def model_id(self) -> str:
        return f"{self.family}-{self.channel_mode}"


def _check_kernel(kernel: int, length: int) -> None:
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"moving-average kernel must be odd and positive, got {kernel}")
    if kernel > length:
        raise ValueError(f"moving-average kernel {kernel} exceeds window length {length}")


def moving_average_matrix(length: int, kernel: int) -> np.ndarray:
    """Matrix ``A`` with ``A @ x`` the centred moving average under replicate padding."""
    _check_kernel(kernel, length)
    half = (kernel - 1) // 2
    A = np.zeros((length, length))
    for t in range(length):
        for s in range(t - half, t + half + 1):
            A[t, min(max(s, 0), length - 1)] += 1.0 / kernel
    return A


def moving_average_decompose(X: np.ndarray, kernel: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``X`` (``C x L``) into trend and seasonal parts along the last axis.

    The trend is a centred moving average with ``(kernel - 1) / 2`` replicated
    edge values on each side; the seasonal part is the remainder, so the two
    add back to ``X`` exactly.
    """
    X = np.asarray(X, dtype=float)
    L = X.shape[-1]
    _check_kernel(kernel, L)
    half = (kernel - 1) // 2
    pad = [(0, 0)] * (X.ndim - 1) + [(half, half)]
    padded = np.pad(X, pad, mode="edge")
    trend = np.lib.stride_tricks.sliding_window_view(padded, kernel, axis=-1).mean(axis=-1)
    return trend, X - trend


@dataclass(frozen=True)
class RevinContext:
    mean: np.ndarray
    std: np.ndarray


def revin_transform(X: np.ndarray, direction: str = "forward", context: RevinContext | None = None):
    """Reversible per-window, per-channel instance normalization.

    ``forward`` returns ``(normalized, context)``; ``inverse`` rescales a
    ``C x H`` prediction (or a batch of them) with the stored context.
    Affine parameters are fixed to the identity.
    """
    X = np.asarray(X, dtype=float)
    if direction == "forward":
        mean = X.mean(axis=-1, keepdims=True)
        std = np.sqrt(X.var(axis=-1, keepdims=True) + REVIN_EPS)
        return (X - mean) / std, RevinContext(mean, std)
    if direction == "inverse":
        if context is None:
            raise ValueError("inverse RevIN needs the context of a prior forward pass")
        return X * context.std + context.mean
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


@dataclass(frozen=True)
class FittedForecaster:
    """An immutable fitted model.

    ``weights`` maps component names (``"linear"`` or ``"trend"`` and
    ``"seasonal"``) to matrices in feature space; ``bias`` is ``None`` unless
    ``spec.intercept`` is set.
    """

    spec: ForecasterSpec
    n_channels: int
    weights: dict[str, np.ndarray]
    bias: np.ndarray | None = None
    _effective: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, w in self.weights.items():
            if not np.all(np.isfinite(w)):
                raise FitError(f"non-finite entries in {name} weights")
            w.setflags(write=False)
        object.__setattr__(self, "_effective", self._effective_map())

    def _effective_map(self) -> np.ndarray:
        # collapse the decomposition so prediction is one matrix product
        s = self.spec
        if s.family == "PlainLinear":
            return self.weights["linear"]
        A = moving_average_matrix(s.lookback, s.ma_kernel)
        I = np.eye(s.lookback)
        if s.channel_mode == "CD":
            A = np.kron(np.eye(self.n_channels), A)
            I = np.eye(A.shape[0])
        Wt, Ws = self.weights["trend"], self.weights["seasonal"]
        if Wt.ndim == 3:  # individual CI: (C, L, H)
            return np.einsum("ji,cjh->cih", A, Wt) + np.einsum("ji,cjh->cih", I - A, Ws)
        return A.T @ Wt + (I - A).T @ Ws

    @property
    def effective_weights(self) -> np.ndarray:
        """The raw-window linear map the model applies after normalization."""
        return self._effective


def _design_dims(spec: ForecasterSpec, C: int) -> tuple[int, int]:
    per = 2 if spec.family == "DLinear" else 1
    if spec.channel_mode == "CI":
        return per * spec.lookback, spec.horizon
    return per * C * spec.lookback, C * spec.horizon


def _feature_transform(spec: ForecasterSpec, C: int) -> np.ndarray | None:
    """Matrix ``B`` with features ``= B @ raw`` (``None`` for PlainLinear)."""
    if spec.family == "PlainLinear":
        return None
    A = moving_average_matrix(spec.lookback, spec.ma_kernel)
    I = np.eye(spec.lookback)
    if spec.channel_mode == "CD":
        A = np.kron(np.eye(C), A)
        I = np.eye(A.shape[0])
    return np.vstack([A, I - A])


def lagged_gram(values: np.ndarray, n_windows: int, width: int, diagonal_only: bool = False) -> np.ndarray:
    """Cross-moments of all stride-1 windows of ``values``.

    Returns ``S`` with ``S[c, d, i, j] = sum_n x_c[n + i] * x_d[n + j]`` over
    ``n < n_windows`` and ``i, j < width`` (``S[c, i, j]`` for ``c == d`` when
    ``diagonal_only``). Uses the shift recurrence
    ``S[i+1, j+1] = S[i, j] + x[N+i] x[N+j] - x[i] x[j]``.
    """
    x = np.asarray(values, dtype=float)
    C, T = x.shape
    N, W = n_windows, width
    if N + W - 1 > T or N < 1:
        raise ValueError("not enough samples for the requested windows")
    if diagonal_only:
        S = np.empty((C, W, W))
        base = x[:, :N]
        for j in range(W):
            S[:, 0, j] = np.einsum("cn,cn->c", base, x[:, j : j + N])
        S[:, :, 0] = S[:, 0, :]
        head, tail = x[:, : W - 1], x[:, N : N + W - 1]
        for i in range(W - 1):
            S[:, i + 1, 1:] = (
                S[:, i, :-1] + tail[:, i : i + 1] * tail[:, :] - head[:, i : i + 1] * head
            )
        return S
    S = np.empty((C, C, W, W))
    base = x[:, :N]
    for j in range(W):
        S[:, :, 0, j] = base @ x[:, j : j + N].T
    S[:, :, :, 0] = S[:, :, 0, :].transpose(1, 0, 2)
    head, tail = x[:, : W - 1], x[:, N : N + W - 1]
    for i in range(W - 1):
        S[:, :, i + 1, 1:] = (
            S[:, :, i, :-1]
            + tail[:, i, None, None] * tail[None, :, :]
            - head[:, i, None, None] * head[None, :, :]
        )
    return S


def _window_sums(values: np.ndarray, n_windows: int, width: int) -> np.ndarray:
    cs = np.concatenate([np.zeros((values.shape[0], 1)), np.cumsum(values, axis=1)], axis=1)
    idx = np.arange(width)
    return cs[:, idx + n_windows] - cs[:, idx]


def _moments_fast(spec: ForecasterSpec, train: WindowedDataset):
    """Normal-equation blocks straight from the source segment (stride 1, no RevIN)."""
    x = train.source
    C = x.shape[0]
    L, H = spec.lookback, spec.horizon
    N, W = len(train), L + H
    ci = spec.channel_mode == "CI"
    S = lagged_gram(x, N, W, diagonal_only=ci)
    m = _window_sums(x, N, W) if spec.intercept else None
    if ci:
        if spec.individual:
            GG, GT = S[:, :L, :L], S[:, :L, L:]
            sums = (m[:, :L], m[:, L:], float(N)) if m is not None else None
        else:
            GG, GT = S[:, :L, :L].sum(0), S[:, :L, L:].sum(0)
            sums = (m[:, :L].sum(0), m[:, L:].sum(0), float(N * C)) if m is not None else None
    else:
        GG = S[:, :, :L, :L].transpose(0, 2, 1, 3).reshape(C * L, C * L)
        GT = S[:, :, :L, L:].transpose(0, 2, 1, 3).reshape(C * L, C * H)
        sums = (m[:, :L].ravel(), m[:, L:].ravel(), float(N)) if m is not None else None
    return GG, GT, sums


def _features(spec: ForecasterSpec, Xb: np.ndarray, Yb: np.ndarray):
    """Feature rows and targets for a batch ``(b, C, L)`` / ``(b, C, H)``."""
    if spec.revin:
        Xb, ctx = revin_transform(Xb)
        Yb = (Yb - ctx.mean) / ctx.std
    if spec.family == "DLinear":
        trend, seasonal = moving_average_decompose(Xb, spec.ma_kernel)
        if spec.channel_mode == "CI":
            F = np.concatenate([trend, seasonal], axis=-1)  # (b, C, 2L)
        else:
            b = Xb.shape[0]
            F = np.concatenate([trend.reshape(b, -1), seasonal.reshape(b, -1)], axis=-1)
    else:
        F = Xb if spec.channel_mode == "CI" else Xb.reshape(Xb.shape[0], -1)
    if spec.channel_mode == "CD":
        Yb = Yb.reshape(Yb.shape[0], -1)
    return F, Yb


def _moments_explicit(spec: ForecasterSpec, train: WindowedDataset, chunk_rows: int = 4096):
    C = train.n_channels
    n_feat, n_out = _design_dims(spec, C)
    indiv = spec.channel_mode == "CI" and spec.individual
    shape_gg = (C, n_feat, n_feat) if indiv else (n_feat, n_feat)
    shape_gt = (C, n_feat, n_out) if indiv else (n_feat, n_out)
    GG, GT = np.zeros(shape_gg), np.zeros(shape_gt)
    fsum = np.zeros(shape_gg[:-1])
    tsum = np.zeros(shape_gt[:-2] + (n_out,))
    count = 0
    for start in range(0, len(train), chunk_rows):
        F, T = _features(spec, train.X[start : start + chunk_rows], train.Y[start : start + chunk_rows])
        if spec.channel_mode == "CI" and not indiv:
            F = F.reshape(-1, F.shape[-1])
            T = T.reshape(-1, T.shape[-1])
        if indiv:
            GG += np.einsum("bci,bcj->cij", F, F)
            GT += np.einsum("bci,bch->cih", F, T)
            fsum += F.sum(0)
            tsum += T.sum(0)
            count += F.shape[0]
        else:
            GG += F.T @ F
            GT += F.T @ T
            fsum += F.sum(0)
            tsum += T.sum(0)
            count += F.shape[0]
    return GG, GT, ((fsum, tsum, float(count)) if spec.intercept else None)


def _solve_ridge(GG: np.ndarray, GT: np.ndarray, lam: float, sums) -> tuple[np.ndarray, np.ndarray | None]:
    """Solve ``(G'G + lam I) W = G'T``, optionally with an unpenalized intercept."""
    n = GG.shape[0]
    if sums is not None:
        fsum, tsum, count = sums
        GG = np.block([[GG, fsum[:, None]], [fsum[None, :], np.array([[count]])]])
        GT = np.vstack([GT, tsum[None, :]])
    reg = np.full(GG.shape[0], lam)
    if sums is not None:
        reg[-1] = 0.0
    A = GG + np.diag(reg)
    try:
        if lam > 0:
            W = np.linalg.solve(A, GT)
        else:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        W = np.linalg.lstsq(A, GT, rcond=1e-13)[0]
    if not np.all(np.isfinite(W)):
        raise FitError("ridge solution is not finite")
    if sums is not None:
        return W[:n], W[n]
    return W, None


def fit_linear_forecaster(spec: ForecasterSpec, train: WindowedDataset,
                          method: str = "auto") -> FittedForecaster:
    """Closed-form ridge fit of ``spec`` on ``train``.

    ``method`` chooses how the normal equations are accumulated: ``"fast"``
    (lagged cross-moments of the source segment; stride-1 windows without
    RevIN only), ``"explicit"`` (chunked feature matrices) or ``"auto"``.
    """
    if len(train) == 0:
        raise FitError("empty training set")
    if train.lookback != spec.lookback or train.horizon != spec.horizon:
        raise FitError(
            f"training windows are L={train.lookback}, H={train.horizon}; "
            f"spec wants L={spec.lookback}, H={spec.horizon}"
        )
    C = train.n_channels
    fast_ok = train.source is not None and train.stride == 1 and not spec.revin
    if method == "fast" and not fast_ok:
        raise FitError("fast accumulation needs stride-1 windows from a source segment without RevIN")
    if method == "fast" or (method == "auto" and fast_ok):
        GG, GT, sums = _moments_fast(spec, train)
        B = _feature_transform(spec, C)
        if B is not None:
            if GG.ndim == 3:
                GG = np.einsum("fi,cij,gj->cfg", B, GG, B)
                GT = np.einsum("fi,cih->cfh", B, GT)
            else:
                GG, GT = B @ GG @ B.T, B @ GT
            if sums is not None:
                sums = ((sums[0] @ B.T), sums[1], sums[2])
    elif method in ("explicit", "auto"):
        GG, GT, sums = _moments_explicit(spec, train)
    else:
        raise ValueError(f"unknown method {method!r}")

    lam = spec.ridge_lambda
    if GG.ndim == 3:
        parts = [
            _solve_ridge(GG[c], GT[c], lam, None if sums is None else (sums[0][c], sums[1][c], sums[2]))
            for c in range(C)
        ]
        W = np.stack([p[0] for p in parts])
        bias = np.stack([p[1] for p in parts]) if sums is not None else None
    else:
        W, bias = _solve_ridge(GG, GT, lam, sums)

    if spec.family == "DLinear":
        k = W.shape[-2] // 2
        weights = {"trend": np.ascontiguousarray(W[..., :k, :]),
                   "seasonal": np.ascontiguousarray(W[..., k:, :])}
    else:
        weights = {"linear": np.ascontiguousarray(W)}
    return FittedForecaster(spec, C, weights, bias)


def _apply(model: FittedForecaster, Xb: np.ndarray) -> np.ndarray:
    # Xb: (b, C, L), already normalized when RevIN is on
    s, W = model.spec, model.effective_weights
    b, C, _ = Xb.shape
    if s.channel_mode == "CD":
        out = Xb.reshape(b, -1) @ W
        if model.bias is not None:
            out = out + model.bias
        return out.reshape(b, C, s.horizon)
    if W.ndim == 3:
        out = np.einsum("bcl,clh->bch", Xb, W)
    else:
        out = Xb @ W
    if model.bias is not None:
        out = out + model.bias
    return out


def predict(model: FittedForecaster, X: np.ndarray) -> np.ndarray:
    """Forecast ``C x H`` from a ``C x L`` window (or a batch ``(n, C, L)``)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    Xb = X[None] if single else X
    s = model.spec
    if Xb.ndim != 3 or Xb.shape[1:] != (model.n_channels, s.lookback):
        raise ValueError(
            f"expected windows of shape ({model.n_channels}, {s.lookback}), got {X.shape[-2:]}"
        )
    ctx = None
    if s.revin:
        Xb, ctx = revin_transform(Xb)
    if single and s.channel_mode == "CI":
        # row by row so each output channel is computed from its own row only
        W = model.effective_weights
        rows = [Xb[0, c] @ (W[c] if W.ndim == 3 else W) for c in range(model.n_channels)]
        out = np.stack(rows)[None]
        if model.bias is not None:
            out = out + model.bias
    else:
        out = _apply(model, Xb)
    if ctx is not None:
        out = revin_transform(out, "inverse", ctx)
    return out[0] if single else out


def evaluate_mse(model: FittedForecaster, data: WindowedDataset, chunk: int = 2048) -> float:
    """Mean squared error over every window, channel and horizon step."""
    if len(data) == 0:
        raise ValueError("no windows to evaluate")
    total = 0.0
    for start in range(0, len(data), chunk):
        pred = predict(model, data.X[start : start + chunk])
        total += float(np.sum((pred - data.Y[start : start + chunk]) ** 2))
    return total / (len(data) * data.n_channels * data.horizon)


def training_sse(model: FittedForecaster, train: WindowedDataset) -> float:
    return evaluate_mse(model, train) * len(train) * train.n_channels * train.horizon


def save_model(model: FittedForecaster, path: str | Path) -> None:
    """Write spec and weights as JSON; floats use shortest round-trip repr."""
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "spec": asdict(model.spec),
        "n_channels": model.n_channels,
        "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                    for k, v in model.weights.items()},
        "bias": None if model.bias is None else
                {"shape": list(model.bias.shape), "data": model.bias.ravel().tolist()},
    }
    with Path(path).open("w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path: str | Path) -> FittedForecaster:
    with Path(path).open() as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")

    def arr(d):
        return np.array(d["data"], dtype=float).reshape(d["shape"])

    weights = {k: arr(v) for k, v in doc["weights"].items()}
    bias = None if doc["bias"] is None else arr(doc["bias"])
    return FittedForecaster(ForecasterSpec(**doc["spec"]), int(doc["n_channels"]), weights, bias)
