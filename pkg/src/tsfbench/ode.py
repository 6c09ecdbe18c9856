"""Chaotic ODE benchmark systems and a fixed-step RK4 integrator.

Every system is a plain right-hand side ``f(state, t, params) -> derivative``
over Python floats; dimensions are at most 6, where scalar arithmetic beats
small-array numpy by a wide margin inside a 60k-step loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import TimeSeries, load_csv


class IntegrationError(RuntimeError):
    """Raised when a trajectory leaves the finite reals or hits a singular RHS."""


Rhs = Callable[[Sequence[float], float, Mapping[str, float]], list]


def _lorenz(s, t, p):
    x, y, z = s
    return [p["sigma"] * (y - x), x * (p["rho"] - z) - y, x * y - p["beta"] * z]


def _lorenz_coupled(s, t, p):
    x1, y1, z1, x2, y2, z2 = s
    sigma, rho, beta, eps = p["sigma"], p["rho"], p["beta"], p["eps"]
    return [
        sigma * (y1 - x1) + eps * (x2 - x1),
        x1 * (rho - z1) - y1,
        x1 * y1 - beta * z1,
        sigma * (y2 - x2) + eps * (x1 - x2),
        x2 * (p["rho2"] - z2) - y2,
        x2 * y2 - beta * z2,
    ]


def _double_pendulum(s, t, p):
    th1, th2, w1, w2 = s
    g_l = p["g"] / p["l"]
    if p["linearized"]:
        return [w1, w2, -2 * g_l * th1 + g_l * th2, 2 * g_l * th1 - 2 * g_l * th2]
    # equal masses and rod lengths; mass cancels
    d = th1 - th2
    sd, cd = math.sin(d), math.cos(d)
    den = 3.0 - math.cos(2 * d)
    a1 = (
        -3 * g_l * math.sin(th1)
        - g_l * math.sin(th1 - 2 * th2)
        - 2 * sd * (w2 * w2 + w1 * w1 * cd)
    ) / den
    a2 = 2 * sd * (2 * w1 * w1 + 2 * g_l * math.cos(th1) + w2 * w2 * cd) / den
    return [w1, w2, a1, a2]


def _ratio(num, den, what):
    if den == 0.0:
        raise IntegrationError(f"singular denominator in {what}")
    return num / den


def _cell_cycle_checked(s, t, p):
    C1, M1, X1, C2, M2, X2 = s
    V1 = _ratio(C1, p["K_c1"] + C1, "K_c1 + C1") * p["V_M1"]
    V3 = M1 * p["V_M3"]
    U1 = _ratio(C2, p["K_c2"] + C2, "K_c2 + C2") * p["U_M1"]
    U3 = M2 * p["U_M3"]
    dC1 = (
        _ratio(p["v_i1"] * p["K_im1"], p["K_im1"] + M2, "K_im1 + M2")
        - _ratio(p["v_d1"] * X1 * C1, p["K_d1"] + C1, "K_d1 + C1")
        - p["k_d1"] * C1
    )
    dM1 = _ratio(V1 * (1 - M1), p["K1"] + 1 - M1, "K1 + 1 - M1") - _ratio(
        p["V2"] * M1, p["K2"] + M1, "K2 + M1"
    )
    dX1 = _ratio(V3 * (1 - X1), p["K3"] + 1 - X1, "K3 + 1 - X1") - _ratio(
        p["V4"] * X1, p["K4"] + X1, "K4 + X1"
    )
    dC2 = (
        _ratio(p["v_i2"] * p["K_im2"], p["K_im2"] + M1, "K_im2 + M1")
        - _ratio(p["v_d2"] * X2 * C2, p["K_d2"] + C2, "K_d2 + C2")
        - p["k_d2"] * C2
    )
    dM2 = _ratio(U1 * (1 - M2), p["H1"] + 1 - M2, "H1 + 1 - M2") - _ratio(
        p["U2"] * M2, p["H2"] + M2, "H2 + M2"
    )
    dX2 = _ratio(U3 * (1 - X2), p["H3"] + 1 - X2, "H3 + 1 - X2") - _ratio(
        p["U4"] * X2, p["H4"] + X2, "H4 + X2"
    )
    k = p["time_scale"]
    return [k * dC1, k * dM1, k * dX1, k * dC2, k * dM2, k * dX2]


def _cell_cycle(s, t, p):
    # hot path of the stiffest system; the checked twin names a singular term
    C1, M1, X1, C2, M2, X2 = s
    try:
        V1 = C1 / (p["K_c1"] + C1) * p["V_M1"]
        U1 = C2 / (p["K_c2"] + C2) * p["U_M1"]
        k = p["time_scale"]
        return [
            k * (p["v_i1"] * p["K_im1"] / (p["K_im1"] + M2)
                 - p["v_d1"] * X1 * C1 / (p["K_d1"] + C1) - p["k_d1"] * C1),
            k * (V1 * (1 - M1) / (p["K1"] + 1 - M1) - p["V2"] * M1 / (p["K2"] + M1)),
            k * (M1 * p["V_M3"] * (1 - X1) / (p["K3"] + 1 - X1) - p["V4"] * X1 / (p["K4"] + X1)),
            k * (p["v_i2"] * p["K_im2"] / (p["K_im2"] + M1)
                 - p["v_d2"] * X2 * C2 / (p["K_d2"] + C2) - p["k_d2"] * C2),
            k * (U1 * (1 - M2) / (p["H1"] + 1 - M2) - p["U2"] * M2 / (p["H2"] + M2)),
            k * (M2 * p["U_M3"] * (1 - X2) / (p["H3"] + 1 - X2) - p["U4"] * X2 / (p["H4"] + X2)),
        ]
    except ZeroDivisionError:
        return _cell_cycle_checked(s, t, p)


HOPFIELD_WEIGHTS = (
    (2.0, -1.2, 0.0, 0.08, 0.0, 0.0),
    (1.9995, 1.71, 1.15, 0.0, 0.0, 0.0),
    (-4.75, 0.0, 1.1, 0.0, 0.0, 0.0),
    (0.08, 0.0, 0.0, 2.0, -1.2, 0.0),
    (0.0, 0.0, 0.0, 1.9995, 1.72, 1.15),
    (0.0, 0.0, 0.0, -4.75, 0.0, 1.1),
)


def _hopfield(s, t, p):
    act = [math.tanh(v) for v in s]
    k = p["time_scale"]
    out = []
    for i, xi in enumerate(s):
        acc = -xi
        for j, a in enumerate(act):
            w = p[f"w{i}{j}"]
            if w:
                acc += w * a
        out.append(k * acc)
    return out


def _blinking_rotlet(s, t, p):
    x, y, _ = s
    om = p["omega"]
    phase = math.sin(om * t)
    w1 = 0.5 * (1.0 + math.tanh(p["kappa"] * phase))
    strength = p["gamma"] / (2 * math.pi)
    core2 = p["core"] ** 2
    u = v = 0.0
    for weight, cx in ((w1, -p["b"]), (1.0 - w1, p["b"])):
        dx, dy = x - cx, y
        f = weight * strength / (dx * dx + dy * dy + core2)
        u -= f * dy
        v += f * dx
    return [u, v, om * math.cos(om * t)]


def _lorenz_params():
    return {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}


_DEFAULTS: dict[str, tuple[Rhs, Callable[[], dict], tuple[float, ...]]] = {
    "Lorenz": (_lorenz, _lorenz_params, (-9.79, -15.04, 20.53)),
    "LorenzCoupled": (
        _lorenz_coupled,
        lambda: {**_lorenz_params(), "rho2": 28.0, "eps": 0.1},
        (-9.79, -15.04, 20.53, 4.1, 2.3, 18.4),
    ),
    "DoublePendulum": (
        _double_pendulum,
        lambda: {"g": 9.81, "l": 1.0, "linearized": 0.0},
        (2.0, 2.4, 0.0, 0.0),
    ),
    "CellCycle": (
        _cell_cycle,
        lambda: dict(CELL_CYCLE_PARAMS),
        (0.2, 0.3, 0.1, 0.15, 0.5, 0.4),
    ),
    "Hopfield": (
        _hopfield,
        lambda: {
            "time_scale": 1.0,
            **{f"w{i}{j}": HOPFIELD_WEIGHTS[i][j] for i in range(6) for j in range(6)},
        },
        (0.1, 0.2, -0.1, -0.2, 0.05, 0.15),
    ),
    "BlinkingRotlet": (
        _blinking_rotlet,
        lambda: {"gamma": 2 * math.pi, "b": 0.5, "core": 0.1, "omega": math.pi / 2, "kappa": 10.0},
        (0.3, 0.2, 0.0),
    ),
}

# A chaotic regime of the two-oscillator model found by a seeded random search
# (positive largest Lyapunov exponent, about 0.013 per model minute); time runs
# 30x faster so 20 samples per unit resolve the cycle, RK4 sub-stepped for stiffness.
CELL_CYCLE_PARAMS = {
    "v_i1": 0.045106, "v_i2": 0.048432, "K_im1": 0.625617, "K_im2": 0.590126,
    "v_d1": 0.229044, "v_d2": 0.406636, "K_d1": 0.017082, "K_d2": 0.012371,
    "k_d1": 0.01521, "k_d2": 0.004037, "K1": 0.029614, "K2": 0.029614,
    "K3": 0.029614, "K4": 0.029614, "H1": 0.024303, "H2": 0.024303,
    "H3": 0.024303, "H4": 0.024303, "K_c1": 0.396581, "K_c2": 0.46311,
    "V_M1": 2.104475, "V2": 0.843066, "V_M3": 0.685269, "V4": 0.510694,
    "U_M1": 3.04752, "U2": 0.813696, "U_M3": 0.683211, "U4": 0.20318,
    "time_scale": 30.0,
}

# keeps time_scale * |Jacobian eigenvalue| * dt / substeps inside the RK4 stability region
_SUBSTEPS = {"CellCycle": 24}

SYSTEM_NAMES = tuple(_DEFAULTS)
DIMS = {"Lorenz": 3, "LorenzCoupled": 6, "DoublePendulum": 4, "CellCycle": 6, "Hopfield": 6,
        "BlinkingRotlet": 3}


@dataclass(frozen=True)
class OdeSystem:
    name: str
    dim: int
    params: dict[str, float]
    init: tuple[float, ...]
    substeps: int = 1

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        if self.name not in _DEFAULTS:
            raise ValueError(f"unknown system {self.name!r}; choose from {SYSTEM_NAMES}")
        if self.dim != DIMS[self.name]:
            raise ValueError(f"{self.name} has dimension {DIMS[self.name]}, got {self.dim}")
        if len(self.init) != self.dim:
            raise ValueError(f"initial state has length {len(self.init)}, expected {self.dim}")
        missing = set(_DEFAULTS[self.name][1]()) - set(self.params)
        if missing:
            raise ValueError(f"{self.name} missing parameters: {sorted(missing)}")

    @property
    def rhs(self) -> Rhs:
        return _DEFAULTS[self.name][0]


def make_system(name: str, substeps: int | None = None, init: Sequence[float] | None = None,
                **overrides: float) -> OdeSystem:
    """Build a named system with default parameters, overriding any by keyword.

    ``substeps`` RK4 steps of ``dt / substeps`` are taken per recorded sample;
    the default is 1 except for stiff systems. ``init`` replaces the default
    initial state.
    """
    if name not in _DEFAULTS:
        raise ValueError(f"unknown system {name!r}; choose from {SYSTEM_NAMES}")
    _, params_fn, default_init = _DEFAULTS[name]
    init = default_init if init is None else tuple(float(v) for v in init)
    params = params_fn()
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"{name} has no parameters {sorted(unknown)}")
    params.update({k: float(v) for k, v in overrides.items()})
    n_sub = _SUBSTEPS.get(name, 1) if substeps is None else int(substeps)
    return OdeSystem(name, DIMS[name], params, tuple(init), n_sub)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.05
    steps: int = 60000
    seed: int = 3001
    transient_steps: int = 1000
    perturbation: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.transient_steps < 0:
            raise ValueError("transient_steps must be non-negative")


def eval_rhs(system: OdeSystem, state: Sequence[float], t: float = 0.0) -> np.ndarray:
    if len(state) != system.dim:
        raise ValueError(f"state has length {len(state)}, {system.name} needs {system.dim}")
    return np.array(system.rhs([float(v) for v in state], float(t), system.params))


def _rk4(f, p, y, t, dt):
    k1 = f(y, t, p)
    h = 0.5 * dt
    k2 = f([a + h * b for a, b in zip(y, k1)], t + h, p)
    k3 = f([a + h * b for a, b in zip(y, k2)], t + h, p)
    k4 = f([a + dt * b for a, b in zip(y, k3)], t + dt, p)
    s = dt / 6.0
    return [a + s * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def rk4_step(system: OdeSystem, state: Sequence[float], t: float, dt: float) -> np.ndarray:
    """One classical four-stage Runge-Kutta step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = _rk4(system.rhs, system.params, [float(v) for v in state], float(t), float(dt))
    if not all(math.isfinite(v) for v in out):
        raise IntegrationError(f"{system.name}: non-finite RK4 stage at t={t}")
    return np.array(out)


def perturbed_init(system: OdeSystem, seed: int, magnitude: float = 1e-3) -> list[float]:
    """Initial state scaled by ``1 + magnitude * U(-1, 1)`` per component.

    Zero components are perturbed on an absolute unit scale so every seed
    yields a distinct start.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=system.dim).tolist()
    return [v + magnitude * ui * (abs(v) if v != 0 else 1.0) for v, ui in zip(system.init, u)]


def integrate(system: OdeSystem, cfg: IntegratorConfig | None = None) -> TimeSeries:
    """Integrate ``system`` and record ``cfg.steps`` states after the transient."""
    cfg = cfg or IntegratorConfig()
    f, p, dt = system.rhs, system.params, cfg.dt
    n_sub = system.substeps
    h = dt / n_sub
    y = perturbed_init(system, cfg.seed, cfg.perturbation)
    out = np.empty((cfg.steps, system.dim))
    total = cfg.transient_steps + cfg.steps
    k = 0
    try:
        for n in range(total):
            if n >= cfg.transient_steps:
                out[k] = y
                k += 1
                if k == cfg.steps:
                    break
            if n_sub == 1:
                y = _rk4(f, p, y, n * dt, dt)
            else:
                for j in range(n_sub):
                    y = _rk4(f, p, y, n * dt + j * h, h)
            if not all(math.isfinite(v) for v in y):
                raise IntegrationError(f"{system.name}: trajectory diverged at step {n + 1}")
    except (OverflowError, ZeroDivisionError) as exc:
        raise IntegrationError(f"{system.name}: trajectory diverged at step {n + 1}: {exc}") from exc
    names = tuple(f"ch{i}" for i in range(system.dim))
    return TimeSeries(system.name, names, out.T, cfg.dt)


def channel_surrogate(system: OdeSystem, cfg: IntegratorConfig, seeds: Sequence[int]) -> TimeSeries:
    """Series whose channel ``c`` is channel ``c`` of a run seeded with ``seeds[c]``.

    Each channel keeps its own dynamics while cross-channel coupling is
    destroyed (for chaotic systems the perturbed runs decorrelate).
    """
    if len(seeds) != system.dim:
        raise ValueError(f"need {system.dim} seeds, got {len(seeds)}")
    rows = []
    for c, s in enumerate(seeds):
        run = integrate(system, IntegratorConfig(cfg.dt, cfg.steps, int(s), cfg.transient_steps,
                                                 cfg.perturbation))
        rows.append(run.values[c])
    return TimeSeries(f"{system.name}-surrogate", tuple(f"ch{i}" for i in range(system.dim)),
                      np.vstack(rows), cfg.dt)


def write_series_csv(series: TimeSeries, path: str | Path) -> None:
    """Write ``t,ch0,...`` with ``t = step * dt`` and 17 significant digits."""
    T = series.n_steps
    table = np.column_stack([np.arange(T) * series.dt, series.values.T])
    header = ",".join(("t",) + series.channel_names)
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")


def generate_benchmark(
    out_dir: str | Path,
    cfg: IntegratorConfig | None = None,
    systems: Sequence[OdeSystem] | None = None,
) -> dict:
    """Integrate every benchmark system, writing one CSV each plus ``manifest.json``."""
    cfg = cfg or IntegratorConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    systems = systems or [make_system(n) for n in SYSTEM_NAMES]
    manifest = {"datasets": []}
    for system in systems:
        series = integrate(system, cfg)
        fname = f"{system.name}.csv"
        write_series_csv(series, out / fname)
        manifest["datasets"].append(
            {
                "name": system.name,
                "file": fname,
                "dim": system.dim,
                "dt": cfg.dt,
                "steps": cfg.steps,
                "transient_steps": cfg.transient_steps,
                "seed": cfg.seed,
                "perturbation": cfg.perturbation,
                "params": dict(system.params),
                "init": list(system.init),
                "substeps": system.substeps,
                "param_source": PARAM_SOURCES[system.name],
            }
        )
    with (out / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_benchmark(out_dir: str | Path) -> dict[str, TimeSeries]:
    out = Path(out_dir)
    with (out / "manifest.json").open() as fh:
        manifest = json.load(fh)
    series = {}
    for entry in manifest["datasets"]:
        s = load_csv(out / entry["file"], has_time_column=True)
        series[entry["name"]] = TimeSeries(entry["name"], s.channel_names, s.values, entry["dt"])
    return series


PARAM_SOURCES = {
    "Lorenz": "standard values",
    "LorenzCoupled": "standard Lorenz values; coupling eps is a toolkit default",
    "DoublePendulum": "toolkit default (g, l); linearized=1 selects the small-angle form",
    "CellCycle": "toolkit default (chaotic regime from a seeded parameter search)",
    "Hopfield": "toolkit default",
    "BlinkingRotlet": "toolkit default",
}
