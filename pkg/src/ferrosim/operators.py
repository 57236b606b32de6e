"""Bilinear and trilinear couplings of the ferrofluid system on the torus.

Every nonlinearity in the model is quadratic, built from two pointwise
kernels: advection (f . grad) g and the cross product f x g.  Both are
evaluated along two independent routes:

* ``path="dense"`` — contraction of a precomputed sparse triad table
  (all wavevector pairs p + q = k inside the cube), the direct-summation
  oracle;
* ``path="fft"`` — collocation products on a grid of >= 3*k_max + 1 points
  per axis, where truncation back to the cube removes aliased modes of
  quadratic products exactly (2/3-style rule).

Agreement of the two routes is the correctness argument for both.  The
weak-form operators (convection B0/B1/B2, Kelvin coupling M0/M1, induction
coupling curl(u x B), the spin/magnetic couplings R0..R6, and the Stokes
maps) pair the kernel outputs against the orthogonal bases of
``spectral.build_basis``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len

from .spectral import (
    DualCoefficients,
    SpectralField,
    analyze,
    curl_coeffs,
    div_coeffs,
    div_norm2,
    grad_coeffs,
    inner,
    k_squared,
    l2_norm2,
    n_modes,
    synthesize,
    wavevectors,
    zero_field,
)

PATHS = ("dense", "fft")

_DIV_FREE_TOL = 1e-10


# ---------------------------------------------------------------------------
# triad tables (the dense tensor machinery)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _axis_pairs(k_max: int) -> tuple:
    r = np.arange(-k_max, k_max + 1)
    a, b = np.meshgrid(r, r, indexing="ij")
    keep = np.absolute(a + b) <= k_max
    return a[keep], b[keep]


@lru_cache(maxsize=None)
def triad_table(k_max: int) -> tuple:
    """All (p, q) cube index pairs with p + q inside the cube.

    Returns flat indices (ip, iq, iout) into the raveled (n,n,n) cube plus
    the integer wavevectors q (3, T) needed for derivative factors.  Built
    once per k_max; the pair count grows like (2 k_max + 1)^6 but with the
    exact triad sparsity of quadratic couplings.
    """
    n = n_modes(k_max)
    a1, b1 = _axis_pairs(k_max)
    m = a1.size
    chunks_ip, chunks_iq, chunks_iout, chunks_q = [], [], [], []
    # chunk over the first-axis pair to bound transient memory
    for j in range(m):
        A1, B1 = a1[j], b1[j]
        A2, B2 = a1[:, None], b1[:, None]
        A3, B3 = a1[None, :], b1[None, :]
        shape = (m, m)
        pa = np.broadcast_to(np.array(A1), shape)
        ip = ((pa + k_max) * n + (A2 + k_max)) * n + np.broadcast_to(A3 + k_max, shape)
        iq = ((B1 + k_max) * n + (B2 + k_max)) * n + np.broadcast_to(B3 + k_max, shape)
        iout = ((A1 + B1 + k_max) * n + (A2 + B2 + k_max)) * n + (A3 + B3 + k_max)
        q = np.stack(
            [
                np.broadcast_to(np.array(B1, dtype=np.float64), shape),
                np.broadcast_to(B2.astype(np.float64), shape),
                np.broadcast_to(B3.astype(np.float64), shape),
            ]
        )
        chunks_ip.append(ip.ravel())
        chunks_iq.append(iq.ravel())
        chunks_iout.append(np.broadcast_to(iout, shape).ravel())
        chunks_q.append(q.reshape(3, -1))
    ip = np.concatenate(chunks_ip).astype(np.int32)
    iq = np.concatenate(chunks_iq).astype(np.int32)
    iout = np.concatenate(chunks_iout).astype(np.int32)
    q = np.concatenate(chunks_q, axis=1).astype(np.int16)  # wavevectors are tiny
    for arr in (ip, iq, iout, q):
        arr.setflags(write=False)
    return ip, iq, iout, q


def _dense_advect(f: np.ndarray, g: np.ndarray, k_max: int) -> np.ndarray:
    """(f . grad) g by direct triad summation (single field, no batch)."""
    ip, iq, iout, q = triad_table(k_max)
    n = n_modes(k_max)
    ff = f.reshape(3, -1)
    gf = g.reshape(3, -1)
    s = 1j * np.einsum("at,at->t", ff[:, ip], q.astype(np.float64))  # i (q . fhat(p))
    out = np.zeros((3, n**3), dtype=np.complex128)
    for a in range(3):
        np.add.at(out[a], iout, s * gf[a, iq])
    return out.reshape(3, n, n, n)


def _dense_cross(f: np.ndarray, g: np.ndarray, k_max: int) -> np.ndarray:
    ip, iq, iout, _ = triad_table(k_max)
    n = n_modes(k_max)
    ff = f.reshape(3, -1)[:, ip]
    gf = g.reshape(3, -1)[:, iq]
    vals = np.cross(ff, gf, axisa=0, axisb=0, axisc=0)
    out = np.zeros((3, n**3), dtype=np.complex128)
    for a in range(3):
        np.add.at(out[a], iout, vals[a])
    return out.reshape(3, n, n, n)


# ---------------------------------------------------------------------------
# pseudospectral kernels
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def product_grid(k_max: int) -> int:
    return next_fast_len(3 * k_max + 1)


def _fft_advect(f: np.ndarray, g: np.ndarray, k_max: int) -> np.ndarray:
    grid = product_grid(k_max)
    k = wavevectors(k_max)
    batch = np.broadcast_shapes(f.shape[:-4], g.shape[:-4])
    f = np.broadcast_to(f, batch + f.shape[-4:])
    g = np.broadcast_to(g, batch + g.shape[-4:])
    dg = 1j * k[:, None] * g[..., None, :, :, :, :]  # (..., 3->deriv, 3->comp, n,n,n)
    stack = np.concatenate([f[..., None, :, :, :, :], dg], axis=-5)
    phys = synthesize(stack.reshape(f.shape[:-4] + (12,) + f.shape[-3:]), k_max, grid)
    fv = phys[..., 0:3, :, :, :]
    out = np.empty_like(phys[..., 0:3, :, :, :])
    for j in range(3):
        dgj = phys[..., 3 + j :: 3, :, :, :]
        out[..., j, :, :, :] = np.sum(fv * dgj, axis=-4)
    return analyze(out, k_max)


def _fft_cross(f: np.ndarray, g: np.ndarray, k_max: int) -> np.ndarray:
    grid = product_grid(k_max)
    batch = np.broadcast_shapes(f.shape[:-4], g.shape[:-4])
    f = np.broadcast_to(f, batch + f.shape[-4:])
    g = np.broadcast_to(g, batch + g.shape[-4:])
    stack = np.concatenate([f, g], axis=-4)
    phys = synthesize(stack, k_max, grid)
    fv, gv = phys[..., 0:3, :, :, :], phys[..., 3:6, :, :, :]
    prod = np.cross(fv, gv, axisa=-4, axisb=-4, axisc=-4)
    return analyze(prod, k_max)


def _check_same_box(k_max: int, *fields: np.ndarray) -> None:
    n = n_modes(k_max)
    for f in fields:
        if f.shape[-3:] != (n, n, n) or f.shape[-4] != 3:
            raise ValueError(
                f"field shape {f.shape} does not match k_max={k_max}; mixed boxes rejected"
            )


def advect(f: np.ndarray, g: np.ndarray, k_max: int, path: str = "fft") -> np.ndarray:
    """Coefficients of (f . grad) g truncated to the cube."""
    _check_same_box(k_max, f, g)
    if path == "fft":
        return _fft_advect(f, g, k_max)
    if path == "dense":
        if f.ndim != 4:
            raise ValueError("dense path is single-field (no batch axes)")
        return _dense_advect(f, g, k_max)
    raise ValueError(f"unknown evaluation path {path!r}")


def advect_sparse_kernel(member: np.ndarray, g: np.ndarray, k_max: int) -> np.ndarray:
    """(member . grad) g for a member with few nonzero coefficient sites.

    The convolution collapses to a short sum of shifted, derivative-weighted
    copies of g — exact, transform-free, and batched over g's leading axes.
    Intended for the mode-list noise coefficient fields.
    """
    n = n_modes(k_max)
    k = wavevectors(k_max)
    out = np.zeros_like(g)
    sites = np.argwhere(np.absolute(member).sum(axis=0) > 0.0)
    for i1, i2, i3 in sites:
        p = (int(i1) - k_max, int(i2) - k_max, int(i3) - k_max)
        g_p = member[:, i1, i2, i3]
        weight = 1j * np.einsum("a,axyz->xyz", g_p, k)  # i (g_p . q)
        src = weight * g
        sl_out = tuple(slice(max(pi, 0), n + min(pi, 0)) for pi in p)
        sl_in = tuple(slice(max(-pi, 0), n + min(-pi, 0)) for pi in p)
        out[..., :, sl_out[0], sl_out[1], sl_out[2]] += src[
            ..., :, sl_in[0], sl_in[1], sl_in[2]
        ]
    return out


def cross(f: np.ndarray, g: np.ndarray, k_max: int, path: str = "fft") -> np.ndarray:
    """Coefficients of f x g truncated to the cube (dealiased)."""
    _check_same_box(k_max, f, g)
    if path == "fft":
        return _fft_cross(f, g, k_max)
    if path == "dense":
        if f.ndim != 4:
            raise ValueError("dense path is single-field (no batch axes)")
        return _dense_cross(f, g, k_max)
    raise ValueError(f"unknown evaluation path {path!r}")


# ---------------------------------------------------------------------------
# the operator tensor type
# ---------------------------------------------------------------------------

TENSOR_FAMILIES = ("b-form", "M1-form", "M2-form")


class OperatorTensor:
    """Triad-sparse tensor T[i][j][l] = form(basis_i, basis_j, basis_l).

    Families: ``b-form`` and ``M1-form`` share the advection integral
    sum_ij f_i (d_i g_j) h_j dx (they differ only in which spaces feed
    them); ``M2-form`` is the induction form  integral curl(f x g) . h dx.
    The table of wavevector pairs is assembled once per k_max and reused;
    an entry can be nonzero only when the three wavevectors admit signs
    with s1 k_i + s2 k_j + s3 k_l = 0 (the triad condition of quadratic
    couplings on the torus).
    """

    def __init__(self, k_max: int, family: str):
        if family not in TENSOR_FAMILIES:
            raise ValueError(f"unknown tensor family {family!r}")
        self.k_max = k_max
        self.family = family
        triad_table(k_max)  # assemble and cache

    def contract_pair(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Output-field coefficients of the form's first two arguments."""
        if self.family in ("b-form", "M1-form"):
            return _dense_advect(f, g, self.k_max)
        out = _dense_cross(f, g, self.k_max)
        return curl_coeffs(out, self.k_max)

    def trilinear(self, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> float:
        return float(inner(self.contract_pair(f, g), h))

    @staticmethod
    def structurally_zero(mi, mj, ml) -> bool:
        """True when no sign choice closes the wavevector triad."""
        ki, kj, kl = (np.asarray(m.k) for m in (mi, mj, ml))
        for si in (1, -1):
            for sj in (1, -1):
                for sl in (1, -1):
                    if not np.any(si * ki + sj * kj + sl * kl):
                        return False
        return True

    def _unit(self, m, trig):
        out = zero_field(self.k_max)
        idx = tuple(x + self.k_max for x in m.k)
        if m.k == (0, 0, 0):
            out[(slice(None),) + idx] = m.vec
            return out
        w = 0.5 if trig == "cos" else -0.5j
        out[(slice(None),) + idx] = w * m.vec
        midx = tuple(-x + self.k_max for x in m.k)
        out[(slice(None),) + midx] = np.conj(w) * m.vec
        return out

    def entry(self, mi, mj, ml, trig=("cos", "cos", "cos")) -> float:
        """Form value on three real basis functions of given parities.

        Each slot's Hermitian pair carries a cosine and a sine member; the
        quadratic forms have a derivative (odd parity), so the all-cosine
        entry of a closed triad may vanish while a mixed-parity one does
        not.  ``entry_block`` sweeps all eight combinations.
        """
        fields = [self._unit(m, t) for m, t in zip((mi, mj, ml), trig)]
        return self.trilinear(*fields)

    def entry_block(self, mi, mj, ml) -> np.ndarray:
        trigs = ("cos", "sin")
        return np.array(
            [
                [[self.entry(mi, mj, ml, (t1, t2, t3)) for t3 in trigs] for t2 in trigs]
                for t1 in trigs
            ]
        )


@lru_cache(maxsize=None)
def operator_tensor(k_max: int, family: str) -> OperatorTensor:
    return OperatorTensor(k_max, family)


# ---------------------------------------------------------------------------
# weak-form operators
# ---------------------------------------------------------------------------


def _coeffs(f) -> np.ndarray:
    return f.coeffs if isinstance(f, SpectralField) else np.asarray(f)


def _common_k_max(*fields) -> int:
    sizes = {f.shape[-1] for f in fields}
    if len(sizes) != 1:
        raise ValueError(f"mismatched k_max between operands: cube sizes {sorted(sizes)}")
    return (sizes.pop() - 1) // 2


def _require_div_free(c: np.ndarray, k_max: int, who: str) -> None:
    scale = float(np.sqrt(l2_norm2(c))) or 1.0
    if float(np.sqrt(div_norm2(c, k_max))) > _DIV_FREE_TOL * scale:
        raise ValueError(f"{who} must be divergence-free (precondition of the cancellation identities)")


def trilinear_b(phi, psi, v, path: str = "fft") -> float:
    """b(phi, psi, v) = integral (phi . grad) psi . v dx.

    For divergence-free phi (and periodicity) b(phi, psi, v) = -b(phi, v, psi),
    so b(phi, psi, psi) = 0.
    """
    cphi, cpsi, cv = _coeffs(phi), _coeffs(psi), _coeffs(v)
    k_max = _common_k_max(cphi, cpsi, cv)
    return float(inner(advect(cphi, cpsi, k_max, path), cv))


_B_TARGET = {"B0": "V", "B1": "W", "B2": "V1"}


def apply_B(family: str, u, v, path: str = "fft") -> DualCoefficients:
    """Convection operators B0/B1/B2: pairings of (u . grad) v.

    The three families share the kernel and differ in the target space of
    the second argument (V, the full rotation space, V1).  Divergence-free
    u is required; it is what makes <B0(u,v), v> = 0 and <B2(u,M), M> = 0.
    """
    if family not in _B_TARGET:
        raise ValueError(f"unknown convection family {family!r}")
    cu, cv = _coeffs(u), _coeffs(v)
    k_max = _common_k_max(cu, cv)
    _require_div_free(cu, k_max, "first argument of B_k")
    out = advect(cu, cv, k_max, path)
    return DualCoefficients.from_field(out, k_max, _B_TARGET[family])


def eval_M1(M, H, v, path: str = "fft", route: str = "direct") -> float:
    """Kelvin-force trilinear form sum_ij integral M_i (d_i H_j) v_j dx.

    Routes re-express the same number:

    * ``direct``  — the definition;
    * ``kelvin``  — -integral [(M+H).grad] v . H - integral curl H . (H x v)
      (valid when div(M + H) = 0 and div v = 0);
    * ``swap``    — integral curl H . (M x v) - integral (v . grad) M . H
      (valid when div v = 0).
    """
    cM, cH, cv = _coeffs(M), _coeffs(H), _coeffs(v)
    k_max = _common_k_max(cM, cH, cv)
    if route == "direct":
        return float(inner(advect(cM, cH, k_max, path), cv))
    if route == "kelvin":
        term1 = -float(inner(advect(cM + cH, cv, k_max, path), cH))
        term2 = -float(inner(curl_coeffs(cH, k_max), cross(cH, cv, k_max, path)))
        return term1 + term2
    if route == "swap":
        term1 = float(inner(curl_coeffs(cH, k_max), cross(cM, cv, k_max, path)))
        term2 = -float(inner(advect(cv, cM, k_max, path), cH))
        return term1 + term2
    raise ValueError(f"unknown route {route!r}")


def apply_M0(M, H, path: str = "fft") -> DualCoefficients:
    """Kelvin force (M . grad) H paired against the velocity basis."""
    cM, cH = _coeffs(M), _coeffs(H)
    k_max = _common_k_max(cM, cH)
    out = advect(cM, cH, k_max, path)
    return DualCoefficients.from_field(out, k_max, "V")


def eval_M2(u, B, psi, path: str = "fft", route: str = "direct") -> float:
    """Induction trilinear form: integral curl(u x B) . psi dx.

    For div-free u and B, curl(u x B) = (B . grad)u - (u . grad)B, so the
    pairing equals -b(B, psi, u) + b(u, psi, B) (the ``parts`` route); psi
    may be any field (the magnetization space is the whole coefficient
    space on the torus).
    """
    cu, cB, cpsi = _coeffs(u), _coeffs(B), _coeffs(psi)
    k_max = _common_k_max(cu, cB, cpsi)
    if route == "direct":
        return float(inner(curl_coeffs(cross(cu, cB, k_max, path), k_max), cpsi))
    if route == "parts":
        return -trilinear_b(cB, cpsi, cu, path) + trilinear_b(cu, cpsi, cB, path)
    raise ValueError(f"unknown route {route!r}")


def apply_M2(u, B, path: str = "fft", route: str = "direct") -> DualCoefficients:
    """Induction coupling curl(u x B) paired against the div-free basis.

    The ``parts`` route evaluates the equivalent (B . grad) u - (u . grad) B
    (valid for div-free u and B); pairings with any test field psi satisfy
    <M2(u,B), psi> = -b(B, psi, u) + b(u, psi, B).
    """
    cu, cB = _coeffs(u), _coeffs(B)
    k_max = _common_k_max(cu, cB)
    _require_div_free(cu, k_max, "velocity argument of the induction coupling")
    _require_div_free(cB, k_max, "induction argument of the induction coupling")
    if route == "direct":
        out = curl_coeffs(cross(cu, cB, k_max, path), k_max)
    elif route == "parts":
        out = advect(cB, cu, k_max, path) - advect(cu, cB, k_max, path)
    else:
        raise ValueError(f"unknown route {route!r}")
    return DualCoefficients.from_field(out, k_max, "V2")


def r0_field(u, w, k_max: int | None = None) -> np.ndarray:
    """curl(curl u - 2 w); pairings give int grad u : grad v - 2 int curl w . v."""
    cu, cw = _coeffs(u), _coeffs(w)
    k_max = k_max or _common_k_max(cu, cw)
    return curl_coeffs(curl_coeffs(cu, k_max) - 2.0 * cw, k_max)


def apply_R0(u, w) -> DualCoefficients:
    cu, cw = _coeffs(u), _coeffs(w)
    k_max = _common_k_max(cu, cw)
    return DualCoefficients.from_field(r0_field(cu, cw, k_max), k_max, "V")


def apply_R1(H, h, path: str = "fft") -> DualCoefficients:
    """Lorentz-type force curl H x h against the velocity basis."""
    cH, ch = _coeffs(H), _coeffs(h)
    k_max = _common_k_max(cH, ch)
    out = cross(curl_coeffs(cH, k_max), ch, k_max, path)
    return DualCoefficients.from_field(out, k_max, "V")


def apply_R2(u, w) -> SpectralField:
    """Spin-vorticity mismatch curl u - 2 w (an L2 field, not a pairing)."""
    cu, cw = _coeffs(u), _coeffs(w)
    k_max = _common_k_max(cu, cw)
    return SpectralField(curl_coeffs(cu, k_max) - 2.0 * cw, k_max)


def apply_R3(M, H, path: str = "fft") -> SpectralField:
    """Magnetic torque M x H analyzed back to the cube (dealiased)."""
    cM, cH = _coeffs(M), _coeffs(H)
    k_max = _common_k_max(cM, cH)
    return SpectralField(cross(cM, cH, k_max, path), k_max)


def apply_R5(w, target: str = "W") -> DualCoefficients:
    """grad div w; pairings give -integral div w div phi."""
    cw = _coeffs(w)
    k_max = _common_k_max(cw)
    out = grad_coeffs(div_coeffs(cw, k_max), k_max)
    return DualCoefficients.from_field(out, k_max, target)


def apply_R6(H, target: str = "V2") -> DualCoefficients:
    """curl curl H; pairings give integral curl H . curl psi."""
    cH = _coeffs(H)
    k_max = _common_k_max(cH)
    out = curl_coeffs(curl_coeffs(cH, k_max), k_max)
    return DualCoefficients.from_field(out, k_max, target)


def apply_stokes(family: str, f) -> DualCoefficients:
    """The Stokes operator A = -P Laplace (on V) and A1 = -Laplace (on W).

    Both are diagonal in the Fourier basis with eigenvalue |k|^2.
    """
    cf = _coeffs(f)
    k_max = _common_k_max(cf)
    if family == "A":
        _require_div_free(cf, k_max, "argument of the Stokes operator")
        out = k_squared(k_max) * cf
        return DualCoefficients.from_field(out, k_max, "V")
    if family == "A1":
        out = k_squared(k_max) * cf
        return DualCoefficients.from_field(out, k_max, "W")
    raise ValueError(f"unknown Stokes family {family!r}")
