"""Time integration of the Galerkin SDE with reproducible Brownian driving.

Brownian increments come from the counter-based Philox generator: member m
of an ensemble draws its entire path in one pass from a key derived from
(master seed, m), and the word at flat position step * channels + channel
is fixed by that key alone.  Uniform words map to normals through the
inverse CDF, so every increment is a pure function of
(seed, member, channel, step) independent of thread schedule or ensemble
layout.

Schemes: plain Euler-Maruyama, and the tamed variant that rescales the
drift increment by 1/(1 + dt |drift|) (the drift is only locally Lipschitz
with quadratic growth, so plain EM can explode; the stopping radius
doubles as the non-explosion guard).  Stopping is checked on the time
grid: the first step whose post-state total energy sqrt exceeds the
radius freezes the member there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

from .galerkin import FieldSet, GalerkinState, PhysicalParams, assemble_diffusion, drift_rows
from .noise import CHANNELS, NoiseModel
from .spectral import l2_norm2

SCHEMES = ("euler_maruyama", "tamed_em")


@dataclass
class RunConfig:
    """Time grid, scheme, stopping radius, ensemble size, and seeding.

    ``stopping_radius=None`` resolves at integration time to the default
    guard 1e3 * sqrt(E_tot(0)) — far outside any admissible trajectory but
    a hard ceiling for the merely locally Lipschitz drift.
    """

    T: float = 0.2
    dt: float = 1e-3
    stopping_radius: float | None = None
    scheme: str = "euler_maruyama"
    ensemble_size: int = 1
    seed: int = 0
    snapshot_stride: int = 10

    def __post_init__(self):
        if not (0.0 < self.dt <= self.T):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.stopping_radius is not None and not self.stopping_radius > 0.0:
            raise ValueError("stopping radius must be positive (or infinite)")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    @property
    def steps(self) -> int:
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * max(self.T, 1.0):
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")
        return n


@dataclass
class BrownianPath:
    """Pre-drawn N(0, dt) increments, shape (members, steps, channels)."""

    increments: np.ndarray
    dt: float
    seed: int

    @property
    def members(self) -> int:
        return self.increments.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def channels(self) -> int:
        return self.increments.shape[2]

    def coarsen(self, factor: int) -> "BrownianPath":
        """Aggregate to a grid factor times coarser (same underlying path)."""
        if self.steps % factor:
            raise ValueError(f"{self.steps} steps not divisible by factor {factor}")
        m, s, c = self.increments.shape
        agg = self.increments.reshape(m, s // factor, factor, c).sum(axis=2)
        return BrownianPath(agg, self.dt * factor, self.seed)

    @classmethod
    def from_config(cls, config: "RunConfig", channel_count: int) -> "BrownianPath":
        return generate_increments(
            config.seed, config.ensemble_size, config.steps, channel_count, config.dt
        )


def _member_key(seed: int, member: int) -> np.ndarray:
    return SeedSequence((int(seed), int(member))).generate_state(2, np.uint64)


def generate_increments(
    seed: int, members: int, steps: int, channels: int, dt: float
) -> BrownianPath:
    """Deterministic Brownian increments via Philox words and inverse CDF."""
    out = np.empty((members, steps, channels))
    if channels == 0 or steps == 0:
        return BrownianPath(out, dt, seed)
    for m in range(members):
        raw = Philox(key=_member_key(seed, m)).random_raw(steps * channels)
        u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
        out[m] = ndtri(u).reshape(steps, channels)
    out *= math.sqrt(dt)
    return BrownianPath(out, dt, seed)


@dataclass
class EnergyLedgerData:
    """Raw per-step ledger arrays; interpreted by diagnostics.EnergyLedger."""

    columns: dict
    dt: float


class TrajectoryRecord:
    """One member's snapshots plus the bookkeeping diagnostics need.

    ``states`` stacks flattened GalerkinState coefficient vectors at
    snapshot times; ``window_increments`` aggregates the Brownian
    increments over each snapshot window (used by the weak-form residual);
    ``stopped_at`` is the stopping time when the total-energy radius was
    hit, None otherwise.
    """

    def __init__(self, k_max, times, states, stopped_at, failed, window_increments, ledger):
        self.k_max = k_max
        self.times = times
        self.states = states
        self.stopped_at = stopped_at
        self.failed = failed
        self.window_increments = window_increments
        self.ledger = ledger

    def state_at(self, index: int) -> GalerkinState:
        return GalerkinState.from_flat(self.k_max, self.states[index])

    @property
    def n_snapshots(self) -> int:
        return len(self.times)


class EnsembleRecord:
    """Batched trajectories sharing the time grid and noise model."""

    def __init__(self, k_max, times, states, stopped_at, failed, window_increments, ledger, seed):
        self.k_max = k_max
        self.times = times
        self.states = states  # (members, snapshots, dim) complex
        self.stopped_at = stopped_at  # (members,) float, nan = never
        self.failed = failed  # (members,) bool
        self.window_increments = window_increments  # (members, windows, channels)
        self.ledger = ledger
        self.seed = seed

    @property
    def members(self) -> int:
        return self.states.shape[0]

    def member(self, m: int) -> TrajectoryRecord:
        stopped = None if np.isnan(self.stopped_at[m]) else float(self.stopped_at[m])
        ledger = None
        if self.ledger is not None:
            ledger = EnergyLedgerData(
                {k: v[m] for k, v in self.ledger.columns.items()}, self.ledger.dt
            )
        return TrajectoryRecord(
            self.k_max,
            self.times,
            self.states[m],
            stopped,
            bool(self.failed[m]),
            self.window_increments[m],
            ledger,
        )

    def survivors(self) -> np.ndarray:
        return ~self.failed


def step(
    fields: FieldSet,
    rows: FieldSet,
    diffusion: dict,
    increments: np.ndarray,
    dt: float,
    scheme: str = "euler_maruyama",
    channel_slices: dict | None = None,
) -> FieldSet:
    """One explicit step; increments has shape (..., channels).

    Plain EM: y+ = y + drift dt + sum_k Z_k dbeta_k.  Tamed EM divides the
    drift increment by 1 + dt |drift| (product-space norm over the four
    rows); the diffusion is untouched.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if channel_slices is None:
        out, start = {}, 0
        for name in CHANNELS:
            cnt = diffusion[name].shape[-5]
            out[name] = slice(start, start + cnt)
            start += cnt
        channel_slices = out
    if scheme == "tamed_em":
        norm = np.sqrt(
            l2_norm2(rows.u) + l2_norm2(rows.w) + l2_norm2(rows.m) + l2_norm2(rows.b)
        )
        damp = 1.0 / (1.0 + dt * norm)
        damp = damp[..., None, None, None, None] if np.ndim(damp) else damp
    else:
        damp = 1.0

    def kick(block: np.ndarray, dbeta: np.ndarray) -> np.ndarray:
        if block.shape[-5] == 0:
            return 0.0
        return np.einsum("...kaxyz,...k->...axyz", block, dbeta)

    sl = channel_slices
    new = []
    for name, row, key in (
        ("u", rows.u, "velocity"),
        ("w", rows.w, "rotation"),
        ("m", rows.m, "magnetization"),
        ("b", rows.b, "field"),
    ):
        y = getattr(fields, name) + damp * dt * row
        y = y + kick(diffusion[key], increments[..., sl[key]])
        new.append(y)
    out = FieldSet(*new)
    for arr in out:
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite state after step")
    return out


def _energy_sqrt(fields: FieldSet, mu0: float) -> np.ndarray:
    h = fields.h(mu0)
    return np.sqrt(
        l2_norm2(fields.u) + l2_norm2(fields.w) + l2_norm2(fields.m) + mu0 * l2_norm2(h)
    )


def integrate(
    initial: GalerkinState,
    params: PhysicalParams,
    noise: NoiseModel,
    config: RunConfig,
    brownian: BrownianPath | None = None,
    with_ledger: bool = False,
    path: str = "fft",
) -> TrajectoryRecord:
    """Single-trajectory convenience wrapper (member 0 of a 1-ensemble)."""
    cfg = replace(config, ensemble_size=1)
    if brownian is not None and brownian.members != 1:
        raise ValueError("single-trajectory integrate expects a 1-member path")
    ens = ensemble_run(initial, params, noise, cfg, brownian=brownian, with_ledger=with_ledger, path=path)
    return ens.member(0)


def ensemble_run(
    initial: GalerkinState,
    params: PhysicalParams,
    noise: NoiseModel,
    config: RunConfig,
    brownian: BrownianPath | None = None,
    with_ledger: bool = False,
    path: str = "fft",
) -> EnsembleRecord:
    """Integrate all members in lockstep (vectorized over the ensemble).

    Members are independent: each draws from its own Philox stream keyed
    by (seed, member).  Stopping freezes a member at the first grid time
    where sqrt(E_tot) >= stopping radius; non-finite states mark the
    member failed and freeze the last finite state.  Aggregation order is
    fixed by member index, so results are bit-reproducible.
    """
    from .diagnostics import ledger_step_terms, make_ledger  # local: avoid cycle

    k_max = initial.k_max
    steps = config.steps
    members = config.ensemble_size
    nch = noise.total_channels
    if brownian is None:
        brownian = generate_increments(config.seed, members, steps, nch, config.dt)
    if brownian.increments.shape != (members, steps, nch):
        raise ValueError(
            f"Brownian path shape {brownian.increments.shape} does not match "
            f"(members, steps, channels) = {(members, steps, nch)}"
        )
    slices = noise.channel_slices()

    u0, w0, m0, _, b0 = initial.reconstruct_fields(params.mu0)

    def tile(c):
        return np.broadcast_to(c, (members,) + c.shape).copy()

    fields = FieldSet(tile(u0), tile(w0), tile(m0), tile(b0))

    active = np.ones(members, dtype=bool)
    failed = np.zeros(members, dtype=bool)
    stopped_at = np.full(members, np.nan)

    e0 = _energy_sqrt(fields, params.mu0)
    radius = config.stopping_radius
    if radius is None:
        # default non-explosion guard, far above admissible trajectories
        radius = 1e3 * float(e0.max()) if float(e0.max()) > 0 else math.inf
    config = replace(config, stopping_radius=radius)

    # immediate stop when the radius already sits below the initial energy
    hit0 = e0 >= radius
    stopped_at[hit0] = 0.0
    active &= ~hit0

    snap_every = config.snapshot_stride
    snap_steps = [s for s in range(steps + 1) if s % snap_every == 0 or s == steps]
    times = np.array([s * config.dt for s in snap_steps])
    dim = initial.flat().size
    states = np.empty((members, len(snap_steps), dim), dtype=np.complex128)
    windows = np.zeros((members, len(snap_steps) - 1, nch))
    # window w spans the steps between snapshots w and w+1
    window_of_step = np.searchsorted(snap_steps, np.arange(steps), side="right") - 1

    ledger = make_ledger(members, steps, config.dt) if with_ledger else None

    from .spectral import div_free_part, get_basis

    bV = get_basis(k_max, "V")
    bW = get_basis(k_max, "W")
    b2 = get_basis(k_max, "V2")
    bG = get_basis(k_max, "Grad")

    def record_snapshot(slot):
        m_div = div_free_part(fields.m, k_max)
        h = fields.h(params.mu0)
        states[:, slot, :] = np.concatenate(
            [
                bV.extract(fields.u),
                bW.extract(fields.w),
                b2.extract(m_div),
                bG.extract(fields.m - m_div),
                b2.extract(div_free_part(h, k_max)),
            ],
            axis=-1,
        )

    record_snapshot(0)
    snap_slot = 1

    for s in range(steps):
        # lenient evaluation: an overflowing member is flagged below, never
        # aborts the batch (its last finite state is kept)
        with np.errstate(over="ignore", invalid="ignore"):
            rows = drift_rows(fields, params, k_max, path, check_finite=False)
            diffusion = assemble_diffusion(fields, noise, params.mu0, path)
            dbeta = brownian.increments[:, s, :]
            new_fields = FieldSet(*_step_banked(fields, rows, diffusion, dbeta, config, slices))

        finite = np.ones(members, dtype=bool)
        for arr in new_fields:
            finite &= np.all(np.isfinite(arr.reshape(members, -1)), axis=1)
        newly_failed = ~finite & active
        failed |= newly_failed

        if ledger is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                terms = ledger_step_terms(
                    fields, new_fields, rows, diffusion, dbeta, params, noise, slices, config.dt
                )
            for key, val in terms.items():
                ledger.columns[key][:, s] = np.where(active & finite, val, 0.0)

        # freeze failed/stopped members at their previous state
        keep = (active & ~newly_failed)[:, None, None, None, None]
        fields = FieldSet(
            np.where(keep, new_fields.u, fields.u),
            np.where(keep, new_fields.w, fields.w),
            np.where(keep, new_fields.m, fields.m),
            np.where(keep, new_fields.b, fields.b),
        )
        windows[:, window_of_step[s], :] += np.where(active[:, None], dbeta, 0.0)
        active &= ~newly_failed

        with np.errstate(over="ignore", invalid="ignore"):
            e = _energy_sqrt(fields, params.mu0)
        # finite coefficients whose energy already overflows count as blow-up,
        # not as a stopping-radius hit
        bad_energy = active & ~np.isfinite(e)
        failed |= bad_energy
        active &= ~bad_energy
        hit = active & (e >= config.stopping_radius)
        stopped_at[hit] = (s + 1) * config.dt
        active &= ~hit

        if (s + 1) in snap_steps:
            record_snapshot(snap_slot)
            snap_slot += 1

    return EnsembleRecord(
        k_max, times, states, stopped_at, failed, windows, ledger, config.seed
    )


def _step_banked(fields, rows, diffusion, dbeta, config, slices):
    """Step wrapper tolerating non-finite results (flagged by caller)."""
    with np.errstate(over="ignore", invalid="ignore"):
        if config.scheme == "tamed_em":
            norm = np.sqrt(
                l2_norm2(rows.u) + l2_norm2(rows.w) + l2_norm2(rows.m) + l2_norm2(rows.b)
            )
            damp = (1.0 / (1.0 + config.dt * norm))[..., None, None, None, None]
        else:
            damp = 1.0

        def kick(block, sl):
            if block.shape[-5] == 0:
                return 0.0
            return np.einsum("...kaxyz,...k->...axyz", block, dbeta[..., sl])

        return (
            fields.u + damp * config.dt * rows.u + kick(diffusion["velocity"], slices["velocity"]),
            fields.w + damp * config.dt * rows.w + kick(diffusion["rotation"], slices["rotation"]),
            fields.m + damp * config.dt * rows.m + kick(diffusion["magnetization"], slices["magnetization"]),
            fields.b + damp * config.dt * rows.b + kick(diffusion["field"], slices["field"]),
        )
