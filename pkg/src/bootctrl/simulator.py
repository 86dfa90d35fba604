"""Closed-loop simulation of the encrypted controller.

Four modes:

* ENCRYPTED: the controller state lives in ciphertexts, one rescale per
  step, and every T_BS steps the state is refreshed through the fitted
  polynomial (this is the loop the lifted LMI test certifies).
* RESET: instead of refreshing, the controller state is re-encrypted as
  zero every T_BS steps (slope-1 sector, lifted test).
* FIR: a delay-line controller evaluated from a window of fresh
  measurement encryptions; no persistent ciphertext state, so levels
  never deplete and no refresh is needed (slope-1 sector, direct test).
* PLAINTEXT_REFERENCE: the ideal real recursion with exact structural
  events (exact refresh, exact reset, exact FIR window).

Event order inside step t (matching the certified interconnection): the
control u(t) is computed from the pre-refresh controller state, then the
refresh/reset happens, then both states advance.  This realizes
x_c(t+1) = Ac (x_c(t) + w_u(t)) + Bc y(t) with w_u the refresh error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import crypto_sim as cs
from .analysis import _validate_fir_structure
from .bootpoly import BootstrapPolynomial
from .statespace import ClosedLoop, Controller, Plant, interconnect

__all__ = [
    "ENCRYPTED",
    "RESET",
    "FIR",
    "PLAINTEXT_REFERENCE",
    "SimulationConfig",
    "SimulationResult",
    "GainStudy",
    "run_closed_loop",
    "aligned_disturbance",
    "estimate_empirical_gain",
]

ENCRYPTED = "ENCRYPTED"
RESET = "RESET"
FIR = "FIR"
PLAINTEXT_REFERENCE = "PLAINTEXT_REFERENCE"
_MODES = (ENCRYPTED, RESET, FIR, PLAINTEXT_REFERENCE)


@dataclass(frozen=True)
class SimulationConfig:
    mode: str = ENCRYPTED
    steps: int = 1000
    T_BS: int = 10
    fir_length: int = 0
    seed: int = 0
    fidelity_checks: bool = True

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.mode in (ENCRYPTED, RESET) and self.T_BS < 1:
            raise ValueError("T_BS must be positive")
        if self.mode == FIR and self.fir_length < 1:
            raise ValueError("FIR mode needs fir_length >= 1")


@dataclass
class SimulationResult:
    mode: str
    w_p: np.ndarray
    z_p: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x_plant: np.ndarray
    x_c: np.ndarray
    empirical_gain: float
    events: list = field(default_factory=list)
    violations: int = 0
    max_fidelity_ratio: float = 0.0

    def summary(self) -> str:
        return (
            f"{self.mode}: {self.z_p.shape[0]} steps, empirical gain "
            f"{self.empirical_gain:.4f}, refreshes {len(self.events)}, "
            f"violations {self.violations}, "
            f"worst noise-ledger usage {self.max_fidelity_ratio:.3f}"
        )


def _empirical_gain(z_p, w_p):
    num = float(np.sum(z_p ** 2))
    den = float(np.sum(w_p ** 2))
    if den == 0.0:
        return 0.0
    return np.sqrt(num / den)


def _as_signal(arr, steps, width, name):
    if arr is None:
        return np.zeros((steps, width))
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (steps, width):
        raise ValueError(f"{name} must have shape ({steps}, {width}), got {arr.shape}")
    return arr


def _fir_params(controller: Controller, N: int):
    p_y = controller.p_y
    agg = controller.Ac[N * p_y:, N * p_y:]
    lam = float(agg[0, 0])
    if not np.allclose(agg, lam * np.eye(agg.shape[0]), atol=1e-12):
        raise ValueError("aggregator block must be a scalar multiple of the identity")
    c_out = controller.Cc[:, N * p_y:]
    return lam, c_out


def run_closed_loop(plant: Plant, controller: Controller,
                    config: SimulationConfig, scheme: cs.SchemeParams | None = None,
                    poly: BootstrapPolynomial | None = None,
                    w_p1=None, w_p2=None, w_u=None, x0=None) -> SimulationResult:
    """Simulate the loop for config.steps steps from x = x_c = 0 (default).

    w_p1 (plant disturbance) and w_p2 (controller-side disturbance) are
    (steps, width) arrays; omitted signals are zero.  In encrypted modes
    the plant and sensor/actuator work in the clear while the controller
    state is encrypted per component.

    w_u is accepted only in PLAINTEXT_REFERENCE mode: a (steps, nc)
    schedule injected as x_c(t+1) = Ac (x_c(t) + w_u(t)) + Bc y(t), which
    lets tests replay recorded refresh errors through the ideal model.
    """
    steps = config.steps
    n, nc = plant.n, controller.nc
    p_y, m_u = plant.p_y, controller.m_u
    w1 = _as_signal(w_p1, steps, plant.m_w1, "w_p1")
    w2 = _as_signal(w_p2, steps, controller.m_w2, "w_p2")
    use_w2 = w_p2 is not None

    if config.mode == ENCRYPTED:
        if scheme is None or poly is None:
            raise ValueError("ENCRYPTED mode needs scheme and poly")
        if scheme.L != config.T_BS:
            raise ValueError(
                f"one rescale per step requires scheme.L == T_BS "
                f"(got L={scheme.L}, T_BS={config.T_BS})"
            )
        if abs(poly.spec.q - scheme.q0) > 1e-9 * scheme.q0:
            raise ValueError("poly must be rescaled to the scheme base modulus q0")
    if config.mode == RESET:
        if scheme is None:
            raise ValueError("RESET mode needs scheme")
        if config.T_BS > scheme.L:
            raise ValueError(
                f"reset period {config.T_BS} exceeds available levels {scheme.L}"
            )
    if config.mode == FIR:
        if scheme is None:
            raise ValueError("FIR mode needs scheme")
        _validate_fir_structure(controller, config.fir_length)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    x_c_ideal = np.zeros(nc)

    w_p = np.hstack([w1, w2])
    z_p = np.zeros((steps, plant.p_z))
    u_log = np.zeros((steps, m_u))
    y_log = np.zeros((steps, p_y))
    x_log = np.zeros((steps + 1, n))
    xc_log = np.zeros((steps + 1, nc))
    x_log[0] = x
    xc_log[0] = x_c_ideal

    events = []
    violations = 0
    max_fid = 0.0

    if w_u is not None and config.mode != PLAINTEXT_REFERENCE:
        raise ValueError("w_u injection is only meaningful in PLAINTEXT_REFERENCE mode")

    if config.mode == PLAINTEXT_REFERENCE:
        wu = _as_signal(w_u, steps, nc, "w_u")
        fir_tail = None
        if config.fir_length:
            _validate_fir_structure(controller, config.fir_length)
            lam, _ = _fir_params(controller, config.fir_length)
            fir_tail = (config.fir_length, lam)
        for t in range(steps):
            y = plant.C @ x + plant.F1 @ w1[t]
            u = controller.Cc @ x_c_ideal + controller.Dc @ y + controller.F2 @ w2[t]
            z_p[t] = plant.C1 @ x + plant.D1 @ w1[t] + plant.E @ u
            u_log[t], y_log[t] = u, y
            x = plant.A @ x + plant.B @ u + plant.B1 @ w1[t]
            x_c_next = controller.Ac @ (x_c_ideal + wu[t]) + controller.Bc @ y \
                + controller.B2 @ w2[t]
            if fir_tail is not None:
                # exact FIR: drop the departing tap from the aggregator
                N, lam = fir_tail
                tail = x_c_ideal[(N - 1) * p_y: N * p_y]
                x_c_next[N * p_y:] -= (lam ** N) * tail
            x_c_ideal = x_c_next
            x_log[t + 1] = x
            xc_log[t + 1] = x_c_ideal
        gain = _empirical_gain(z_p, w_p)
        return SimulationResult(config.mode, w_p, z_p, u_log, y_log, x_log,
                                xc_log, gain)

    keys = cs.keygen(scheme)
    # Re-seed the encryption stream so different trials draw different
    # randomness while the secret key stays tied to the scheme seed.
    keys.rng.seed((scheme.seed + 1) * 1_000_003 + config.seed)

    def check(cts):
        nonlocal max_fid
        if not config.fidelity_checks:
            return
        for ct in cts:
            err = cs.fidelity_error(keys, ct)
            if ct.noise_bound > 0:
                max_fid = max(max_fid, err / ct.noise_bound)
            if err > ct.noise_bound:
                raise AssertionError(
                    f"noise ledger violated: error {err} > bound {ct.noise_bound}"
                )

    if config.mode == FIR:
        N = config.fir_length
        lam, c_out = _fir_params(controller, N)
        window = [
            [cs.encrypt(keys, 0.0, level=1) for _ in range(p_y)]
            for _ in range(N)
        ]  # window[0] holds y(t-1), window[N-1] holds y(t-N)
        u_row = np.hstack([c_out * lam ** i for i in range(N)] + [controller.Dc])
        for t in range(steps):
            y = plant.C @ x + plant.F1 @ w1[t]
            enc_y = [cs.encrypt(keys, float(yi), level=1) for yi in y]
            stacked = [ct for slot in window for ct in slot] + enc_y
            u_cts = cs.matvec(scheme, u_row, stacked)
            check(stacked)
            check(u_cts)
            u = np.array([cs.decrypt(keys, ct) for ct in u_cts])
            z_p[t] = plant.C1 @ x + plant.D1 @ w1[t] + plant.E @ u
            u_log[t], y_log[t] = u, y
            x = plant.A @ x + plant.B @ u + plant.B1 @ w1[t]
            window = [enc_y] + window[:-1]
            # debug shadow of the delay-line state (ideal FIR recursion)
            head = x_c_ideal[: N * p_y]
            tail_val = x_c_ideal[(N - 1) * p_y: N * p_y]
            agg = lam * x_c_ideal[N * p_y:] + y - (lam ** N) * tail_val
            x_c_ideal = np.concatenate([y, head[: (N - 1) * p_y], agg])
            x_log[t + 1] = x
            xc_log[t + 1] = x_c_ideal
        gain = _empirical_gain(z_p, w_p)
        return SimulationResult(config.mode, w_p, z_p, u_log, y_log, x_log,
                                xc_log, gain, events, violations, max_fid)

    # ENCRYPTED / RESET: persistent encrypted controller state
    top = scheme.L
    x_c = [cs.encrypt(keys, 0.0, level=top) for _ in range(nc)]
    for t in range(steps):
        y = plant.C @ x + plant.F1 @ w1[t]
        level_now = x_c[0].level
        enc_y = [cs.encrypt(keys, float(yi), level=level_now) for yi in y]
        enc_w2 = (
            [cs.encrypt(keys, float(wi), level=level_now) for wi in w2[t]]
            if use_w2 else None
        )

        # control from the pre-refresh state
        u_cts = cs.matvec(scheme, controller.Cc, x_c)
        dy = cs.matvec(scheme, controller.Dc, enc_y)
        u_cts = [cs.add(scheme, a, b) for a, b in zip(u_cts, dy)]
        if use_w2:
            f2 = cs.matvec(scheme, controller.F2, enc_w2)
            u_cts = [cs.add(scheme, a, b) for a, b in zip(u_cts, f2)]
        check(x_c)
        check(u_cts)
        u = np.array([cs.decrypt(keys, ct) for ct in u_cts])
        z_p[t] = plant.C1 @ x + plant.D1 @ w1[t] + plant.E @ u
        u_log[t], y_log[t] = u, y

        # periodic refresh/reset, after u(t), before the state update
        if t > 0 and t % config.T_BS == 0:
            if config.mode == ENCRYPTED:
                refreshed = []
                for comp, ct in enumerate(x_c):
                    try:
                        fresh, ev = cs.bootstrap_emulated(keys, ct, poly)
                    except (cs.RangeViolationError,
                            cs.AssumptionViolationError) as exc:
                        raise type(exc)(
                            f"at step {t}, state component {comp}: {exc.message}"
                        ) from exc
                    events.append(
                        cs.BootstrapEvent(ev.r, ev.m_plus_e, ev.output,
                                          ev.poly_error, ev.relative_error,
                                          ev.violation, step=t)
                    )
                    violations += int(ev.violation)
                    refreshed.append(fresh)
                x_c = refreshed
            else:
                x_c = [cs.encrypt(keys, 0.0, level=top) for _ in range(nc)]
                x_c_ideal = np.zeros(nc)
            check(x_c)
            enc_y = [cs.encrypt(keys, float(yi), level=x_c[0].level) for yi in y]
            if use_w2:
                enc_w2 = [cs.encrypt(keys, float(wi), level=x_c[0].level)
                          for wi in w2[t]]

        new_xc = cs.matvec(scheme, controller.Ac, x_c)
        by = cs.matvec(scheme, controller.Bc, enc_y)
        new_xc = [cs.add(scheme, a, b) for a, b in zip(new_xc, by)]
        if use_w2:
            b2w = cs.matvec(scheme, controller.B2, enc_w2)
            new_xc = [cs.add(scheme, a, b) for a, b in zip(new_xc, b2w)]
        x_c = [cs.rescale(scheme, ct) for ct in new_xc]
        check(x_c)

        x = plant.A @ x + plant.B @ u + plant.B1 @ w1[t]
        x_log[t + 1] = x
        xc_log[t + 1] = np.array([ct.debug_plaintext for ct in x_c])

    gain = _empirical_gain(z_p, w_p)
    return SimulationResult(config.mode, w_p, z_p, u_log, y_log, x_log,
                            xc_log, gain, events, violations, max_fid)


def aligned_disturbance(cl: ClosedLoop, steps: int, columns=None,
                        iterations: int = 30, seed: int = 0) -> np.ndarray:
    """Near-worst-case finite-horizon disturbance for the nominal loop.

    Power iteration on L*L, where L maps the disturbance sequence to the
    performance output sequence of the nominal (w_u = 0) loop from zero
    initial state.  The adjoint is run as the reversed-time recursion
    lam(t) = Acl^T lam(t+1) + Cp^T zeta(t).  `columns` restricts the
    disturbance to a subset of w_p channels (e.g. the physical ones when
    the controller-side channel is not exercised).
    """
    cols = np.arange(cl.m_wp) if columns is None else np.asarray(columns, dtype=int)
    Bp = cl.Bp[:, cols]
    Dpp = cl.Dpp[:, cols]
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((steps, len(cols)))
    w /= np.linalg.norm(w)
    gain_prev = 0.0
    for _ in range(iterations):
        # forward pass z = L w
        xi = np.zeros(cl.n_xi)
        z = np.zeros((steps, cl.p_z))
        for t in range(steps):
            z[t] = cl.Cp @ xi + Dpp @ w[t]
            xi = cl.Acl @ xi + Bp @ w[t]
        # adjoint pass g = L* z
        lam = np.zeros(cl.n_xi)
        g = np.zeros_like(w)
        for t in range(steps - 1, -1, -1):
            g[t] = Bp.T @ lam + Dpp.T @ z[t]
            lam = cl.Acl.T @ lam + cl.Cp.T @ z[t]
        norm = np.linalg.norm(g)
        if norm == 0:
            break
        gain = np.sqrt(np.linalg.norm(z) ** 2)  # since ||w|| = 1
        if abs(gain - gain_prev) < 1e-10 * max(1.0, gain):
            w = g / norm
            break
        gain_prev = gain
        w = g / norm
    out = np.zeros((steps, cl.m_wp))
    out[:, cols] = w
    return out


@dataclass
class GainStudy:
    trial_gains: list
    aligned_gain: float
    total_violations: int
    total_events: int
    max_fidelity_ratio: float

    @property
    def max_gain(self):
        vals = list(self.trial_gains) + [self.aligned_gain]
        return max(vals) if vals else 0.0


def estimate_empirical_gain(plant: Plant, controller: Controller,
                            config: SimulationConfig,
                            scheme: cs.SchemeParams | None = None,
                            poly: BootstrapPolynomial | None = None,
                            n_random: int = 20, base_seed: int = 0,
                            align_iterations: int = 30) -> GainStudy:
    """Random-excitation trials plus one disturbance aligned with the
    worst nominal finite-horizon direction; returns the observed gains.

    Random trials draw i.i.d. standard normal physical disturbances; the
    aligned trial uses power iteration on the nominal closed loop
    restricted to the physical disturbance columns.
    """
    cl = interconnect(plant, controller)
    rng = np.random.default_rng(base_seed)
    gains = []
    violations = 0
    n_events = 0
    max_fid = 0.0
    for k in range(n_random):
        w1 = rng.standard_normal((config.steps, plant.m_w1))
        cfg = SimulationConfig(
            mode=config.mode, steps=config.steps, T_BS=config.T_BS,
            fir_length=config.fir_length, seed=base_seed + 1000 + k,
            fidelity_checks=config.fidelity_checks,
        )
        res = run_closed_loop(plant, controller, cfg, scheme=scheme, poly=poly,
                              w_p1=w1)
        gains.append(res.empirical_gain)
        violations += res.violations
        n_events += len(res.events)
        max_fid = max(max_fid, res.max_fidelity_ratio)

    w_aligned = aligned_disturbance(cl, config.steps,
                                    columns=np.arange(plant.m_w1),
                                    iterations=align_iterations,
                                    seed=base_seed)
    scale = np.sqrt(config.steps / 4.0)  # unit-energy vector scaled up
    cfg = SimulationConfig(
        mode=config.mode, steps=config.steps, T_BS=config.T_BS,
        fir_length=config.fir_length, seed=base_seed + 999_983,
        fidelity_checks=config.fidelity_checks,
    )
    res_a = run_closed_loop(plant, controller, cfg, scheme=scheme, poly=poly,
                            w_p1=scale * w_aligned[:, : plant.m_w1])
    violations += res_a.violations
    n_events += len(res_a.events)
    max_fid = max(max_fid, res_a.max_fidelity_ratio)
    return GainStudy(
        trial_gains=gains,
        aligned_gain=res_a.empirical_gain,
        total_violations=violations,
        total_events=n_events,
        max_fidelity_ratio=max_fid,
    )
