"""Finite-dimensional state and dynamics of the spectral Galerkin system.

The state of the coupled system (velocity u, internal rotation w,
magnetization M, magnetic field H) is carried by five coefficient blocks

    a  velocity against the div-free mean-zero basis (space V),
    b  rotation against the full basis (space W),
    c  div-free part of M (space V2),
    d  shared gradient coefficients,
    e  div-free part of H (space V2),

with the crucial sign convention M = c.psi + d.gradphi and
H = e.psi - d.gradphi, so div(M + H) = 0 holds exactly in coefficients and
the induction B = mu0 (M + H) = mu0 (c + e).psi is divergence-free by
construction.

The drift assembles the projected right-hand sides of the four equations;
the induction equation evolves B (its gradient-free row), and the e block
is recovered from (M, B) via the basis split.  The H-field's dynamics
therefore receive the magnetization noise with a minus sign through
H = B/mu0 - M, which is what produces the (mu0 + 1) weight on the
magnetization quadratic variation in the energy ledger.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import noise as noise_mod
from .operators import advect, cross
from .spectral import (
    curl_coeffs,
    div_coeffs,
    div_free_part,
    get_basis,
    k_squared,
    l2_norm2,
    leray_project,
)


@dataclass
class PhysicalParams:
    """Positive model constants (viscosities, relaxation, susceptibility...)."""

    nu: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 0.5
    lam: float = 0.1
    tau: float = 1.0
    chi0: float = 0.5
    sigma: float = 1.0
    mu0: float = 1.0
    alpha: float = 0.1

    _NAMES = ("nu", "lambda1", "lambda2", "lam", "tau", "chi0", "sigma", "mu0", "alpha")

    def __post_init__(self):
        for name in self._NAMES:
            value = getattr(self, name)
            if name == "chi0":
                # chi0 = 0 is the non-magnetizable limit used by the
                # decoupled decay oracles; everything else is strictly positive
                ok = value >= 0.0
            else:
                ok = value > 0.0
            if not (ok and np.isfinite(value)):
                raise ValueError(
                    f"physical parameter {name} = {value} violates positivity"
                )


class FieldSet(NamedTuple):
    """Coefficient cubes of the physical fields; leading axes are batch."""

    u: np.ndarray
    w: np.ndarray
    m: np.ndarray
    b: np.ndarray

    def h(self, mu0: float) -> np.ndarray:
        return self.b / mu0 - self.m


@dataclass
class GalerkinState:
    """Coefficient view of one state (single member, no batch axes).

    Amplitudes are complex: real and imaginary parts are the two real
    degrees of freedom of each Hermitian mode pair (k = 0 slots are real).
    """

    k_max: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        dims = self.block_dims(self.k_max)
        for name, dim in dims.items():
            vec = np.asarray(getattr(self, name), dtype=np.complex128)
            if vec.shape != (dim,):
                raise ValueError(
                    f"block {name!r} has length {vec.shape}, basis wants ({dim},)"
                )
            setattr(self, name, vec)

    @staticmethod
    def block_dims(k_max: int) -> dict:
        return {
            "a": get_basis(k_max, "V").dim,
            "b": get_basis(k_max, "W").dim,
            "c": get_basis(k_max, "V2").dim,
            "d": get_basis(k_max, "Grad").dim,
            "e": get_basis(k_max, "V2").dim,
        }

    @classmethod
    def zeros(cls, k_max: int) -> "GalerkinState":
        dims = cls.block_dims(k_max)
        return cls(k_max, *(np.zeros(dims[n], dtype=np.complex128) for n in "abcde"))

    @classmethod
    def from_fields(cls, fields: FieldSet, k_max: int, mu0: float) -> "GalerkinState":
        bV = get_basis(k_max, "V")
        bW = get_basis(k_max, "W")
        bV2 = get_basis(k_max, "V2")
        bG = get_basis(k_max, "Grad")
        m_div = div_free_part(fields.m, k_max)
        m_grad = fields.m - m_div
        h = fields.h(mu0)
        return cls(
            k_max,
            bV.extract(fields.u),
            bW.extract(fields.w),
            bV2.extract(m_div),
            bG.extract(m_grad),
            bV2.extract(div_free_part(h, k_max)),
        )

    def reconstruct_fields(self, mu0: float) -> tuple:
        """(u, w, M, H, B) coefficient cubes per the shared-gradient ansatz."""
        bV = get_basis(self.k_max, "V")
        bW = get_basis(self.k_max, "W")
        bV2 = get_basis(self.k_max, "V2")
        bG = get_basis(self.k_max, "Grad")
        u = bV.reconstruct(self.a)
        w = bW.reconstruct(self.b)
        grad = bG.reconstruct(self.d)
        m = bV2.reconstruct(self.c) + grad
        h = bV2.reconstruct(self.e) - grad
        bfield = mu0 * bV2.reconstruct(self.c + self.e)
        return u, w, m, h, bfield

    def to_fieldset(self, mu0: float) -> FieldSet:
        u, w, m, h, bfield = self.reconstruct_fields(mu0)
        return FieldSet(u, w, m, bfield)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.c, self.d, self.e])

    @classmethod
    def from_flat(cls, k_max: int, vec: np.ndarray) -> "GalerkinState":
        dims = cls.block_dims(k_max)
        parts, start = [], 0
        for name in "abcde":
            parts.append(vec[start : start + dims[name]])
            start += dims[name]
        return cls(k_max, *parts)

    @classmethod
    def random(cls, k_max: int, rng, energies: dict | None = None, mu0: float = 1.0) -> "GalerkinState":
        """Bandlimited random state with prescribed per-field L2 energies.

        ``energies`` maps field names u/w/m/h to target squared L2 norms;
        the magnetization/field pair is built through the (c, d, e) blocks
        so div(M + H) = 0 holds exactly.
        """
        energies = dict(energies or {"u": 1.0, "w": 1.0, "m": 1.0, "h": 1.0})
        state = cls.zeros(k_max)
        dims = cls.block_dims(k_max)
        for name, space in (("a", "V"), ("b", "W"), ("c", "V2"), ("d", "Grad"), ("e", "V2")):
            raw = rng.standard_normal(dims[name]) + 1j * rng.standard_normal(dims[name])
            mean = get_basis(k_max, space).is_mean
            raw[mean] = raw[mean].real  # k = 0 slots: one real degree of freedom
            setattr(state, name, raw)
        u, w, m, h, _ = state.reconstruct_fields(mu0)

        def rescale(vec_names, coeffs, target):
            norm2 = float(l2_norm2(coeffs))
            s = np.sqrt(target / norm2) if norm2 > 0 else 0.0
            for nm in vec_names:
                setattr(state, nm, getattr(state, nm) * s)

        rescale(["a"], u, energies["u"])
        rescale(["b"], w, energies["w"])
        # the shared d block couples m and h; scale it into m's budget
        rescale(["c", "d"], m, energies["m"])
        e_norm2 = float(l2_norm2(get_basis(k_max, "V2").reconstruct(state.e)))
        grad_norm2_now = float(l2_norm2(get_basis(k_max, "Grad").reconstruct(state.d)))
        target_e = max(energies["h"] - grad_norm2_now, 0.0)
        state.e = state.e * (np.sqrt(target_e / e_norm2) if e_norm2 > 0 else 0.0)
        return state


@dataclass
class DriftVector:
    """Drift in state layout plus the field-level equation rows."""

    k_max: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    rows: FieldSet  # du, dw, dM, dB

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.c, self.d, self.e])


def hn_norm(u, w, m, h) -> np.ndarray:
    """The product-space norm (|u|^2 + |w|^2 + |M|^2 + |H|^2)^(1/2), batched."""
    return np.sqrt(l2_norm2(u) + l2_norm2(w) + l2_norm2(m) + l2_norm2(h))


def drift_rows(
    fields: FieldSet, params: PhysicalParams, k_max: int, path: str = "fft",
    check_finite: bool = True,
) -> FieldSet:
    """Right-hand-side fields of the four equations, batched.

    velocity:   nu Lap u - P[(u.grad)u] + mu0 P[(M.grad)H] + mu0 P[curl H x H]
                - alpha P[curl(curl u - 2w)]
    rotation:   lambda1 Lap w + (lambda1+lambda2) grad div w - (u.grad)w
                + 2 alpha (curl u - 2w) + mu0 M x H
    magnetization: -(u.grad)M + w x M - (M - chi0 H)/tau + lambda Lap M
    induction:  P2[curl(u x B) - curl curl H / sigma]

    P is the Leray projection, P2 the div-free projection keeping the
    constant mode.  The Bloch-Torrey term -lambda(curl curl - grad div) M
    equals lambda Lap M identically in Fourier coefficients.
    """
    u, w, m, b = fields
    h = b / params.mu0 - m
    k2 = k_squared(k_max)
    curl_h = curl_coeffs(h, k_max)

    if path == "fft":
        # one kernel launch for the four advections and one for the crosses
        adv = advect(
            np.stack([u, u, u, m], axis=-5), np.stack([u, w, m, h], axis=-5), k_max, path
        )
        adv_uu, adv_uw, adv_um, adv_mh = (adv[..., i, :, :, :, :] for i in range(4))
        crs = cross(
            np.stack([curl_h, m, w, u], axis=-5), np.stack([h, h, m, b], axis=-5), k_max, path
        )
        crs_hh, crs_mh, crs_wm, crs_ub = (crs[..., i, :, :, :, :] for i in range(4))
    else:
        adv_uu = advect(u, u, k_max, path)
        adv_uw = advect(u, w, k_max, path)
        adv_um = advect(u, m, k_max, path)
        adv_mh = advect(m, h, k_max, path)
        crs_hh = cross(curl_h, h, k_max, path)
        crs_mh = cross(m, h, k_max, path)
        crs_wm = cross(w, m, k_max, path)
        crs_ub = cross(u, b, k_max, path)

    du = leray_project(-adv_uu + params.mu0 * adv_mh + params.mu0 * crs_hh, k_max)
    du += -params.nu * k2 * u
    du -= params.alpha * curl_coeffs(curl_coeffs(u, k_max) - 2.0 * w, k_max)

    dw = -adv_uw + params.mu0 * crs_mh
    dw += -params.lambda1 * k2 * w
    dw += (params.lambda1 + params.lambda2) * _grad_div(w, k_max)
    dw += 2.0 * params.alpha * (curl_coeffs(u, k_max) - 2.0 * w)

    dm = -adv_um + crs_wm
    dm += -(m - params.chi0 * h) / params.tau
    dm += -params.lam * k2 * m

    db = div_free_part(curl_coeffs(crs_ub, k_max), k_max)
    db -= curl_coeffs(curl_h, k_max) / params.sigma

    if check_finite and not (
        np.all(np.isfinite(du))
        and np.all(np.isfinite(dw))
        and np.all(np.isfinite(dm))
        and np.all(np.isfinite(db))
    ):
        raise FloatingPointError("non-finite drift entry; integrator must abort")

    return FieldSet(du, dw, dm, db)


def _grad_div(c: np.ndarray, k_max: int) -> np.ndarray:
    from .spectral import grad_coeffs

    return grad_coeffs(div_coeffs(c, k_max), k_max)


def assemble_drift(state: GalerkinState, params: PhysicalParams, path: str = "fft") -> DriftVector:
    """Drift in the (a, b, c, d, e) layout.

    The magnetization row feeds both the c (div-free) and d (gradient)
    blocks; the induction row is gradient-free and the e block follows
    from e = B/mu0 - c.
    """
    fields = state.to_fieldset(params.mu0)
    rows = drift_rows(fields, params, state.k_max, path)
    bV = get_basis(state.k_max, "V")
    bW = get_basis(state.k_max, "W")
    bV2 = get_basis(state.k_max, "V2")
    bG = get_basis(state.k_max, "Grad")
    dm_div = div_free_part(rows.m, state.k_max)
    dm_grad = rows.m - dm_div
    c_dot = bV2.extract(dm_div)
    b_dot_coeff = bV2.extract(rows.b)
    return DriftVector(
        state.k_max,
        bV.extract(rows.u),
        bW.extract(rows.w),
        c_dot,
        bG.extract(dm_grad),
        b_dot_coeff / params.mu0 - c_dot,
        rows,
    )


def assemble_diffusion(fields: FieldSet, model: noise_mod.NoiseModel, mu0: float, path: str = "fft") -> dict:
    """Diffusion columns keyed by channel name.

    Returns arrays of shape (..., count, 3, n, n, n) acting on the
    corresponding state row (u, w, M, and B respectively); the B block is
    F3 applied to H = B/mu0 - M and projected div-free, so div B stays
    exactly zero under every noise kick.
    """
    h = fields.h(mu0)
    return {
        "velocity": noise_mod.diffusion_columns(model, "velocity", fields.u, path),
        "rotation": noise_mod.diffusion_columns(model, "rotation", fields.w, path),
        "magnetization": noise_mod.diffusion_columns(model, "magnetization", fields.m, path),
        "field": noise_mod.diffusion_columns(model, "field", h, path),
    }


def diffusion_state_columns(state: GalerkinState, model: noise_mod.NoiseModel, params: PhysicalParams, path: str = "fft") -> list:
    """Per-channel diffusion in the (a, b, c, d, e) layout (column list).

    Column order matches the stacked Brownian layout
    velocity | rotation | magnetization | field.
    """
    fields = state.to_fieldset(params.mu0)
    cols = assemble_diffusion(fields, model, params.mu0, path)
    bV = get_basis(state.k_max, "V")
    bW = get_basis(state.k_max, "W")
    bV2 = get_basis(state.k_max, "V2")
    bG = get_basis(state.k_max, "Grad")
    dims = GalerkinState.block_dims(state.k_max)
    out = []

    def empty():
        return {n: np.zeros(dims[n], dtype=np.complex128) for n in "abcde"}

    for j in range(cols["velocity"].shape[-5]):
        col = empty()
        col["a"] = bV.extract(cols["velocity"][j])
        out.append(col)
    for j in range(cols["rotation"].shape[-5]):
        col = empty()
        col["b"] = bW.extract(cols["rotation"][j])
        out.append(col)
    for j in range(cols["magnetization"].shape[-5]):
        col = empty()
        g = cols["magnetization"][j]
        g_div = div_free_part(g, state.k_max)
        col["c"] = bV2.extract(g_div)
        col["d"] = bG.extract(g - g_div)
        col["e"] = -col["c"]  # H picks up -G(M) through H = B/mu0 - M
        out.append(col)
    for j in range(cols["field"].shape[-5]):
        col = empty()
        col["e"] = bV2.extract(cols["field"][j]) / params.mu0
        out.append(col)
    return out


def local_lipschitz_probe(
    k_max: int,
    params: PhysicalParams,
    radius: float,
    trials: int = 32,
    rng=None,
    path: str = "fft",
) -> float:
    """Empirical local Lipschitz constant of the drift on a state ball.

    Samples pairs with product-space norm at most ``radius`` and returns
    the largest observed ratio |drift(y1) - drift(y2)| / |y1 - y2| in the
    same norm.  The drift is a quadratic polynomial of the state, so this
    grows at most affinely in the radius.
    """
    rng = rng or np.random.default_rng(0)

    def sample():
        st = GalerkinState.random(
            k_max, rng, {"u": 1.0, "w": 1.0, "m": 1.0, "h": 1.0}
        )
        u, w, m, h, _ = st.reconstruct_fields(params.mu0)
        norm = float(hn_norm(u, w, m, h))
        scale = radius * rng.uniform(0.2, 1.0) / norm
        for name in "abcde":
            setattr(st, name, getattr(st, name) * scale)
        return st

    worst = 0.0
    for _ in range(trials):
        s1, s2 = sample(), sample()
        f1, f2 = s1.to_fieldset(params.mu0), s2.to_fieldset(params.mu0)
        r1 = drift_rows(f1, params, k_max, path)
        r2 = drift_rows(f2, params, k_max, path)
        dh1 = r1.b / params.mu0 - r1.m
        dh2 = r2.b / params.mu0 - r2.m
        num = float(hn_norm(r1.u - r2.u, r1.w - r2.w, r1.m - r2.m, dh1 - dh2))
        den = float(
            hn_norm(
                f1.u - f2.u,
                f1.w - f2.w,
                f1.m - f2.m,
                f1.h(params.mu0) - f2.h(params.mu0),
            )
        )
        if den > 1e-12:
            worst = max(worst, num / den)
    return worst
