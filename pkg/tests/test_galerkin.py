"""State ansatz, drift assembly, diffusion blocks, local Lipschitz probe."""

import numpy as np
import pytest

from ferrosim.diagnostics import DISSIPATION_TERMS, ledger_step_terms
from ferrosim.galerkin import (
    GalerkinState,
    PhysicalParams,
    assemble_diffusion,
    assemble_drift,
    diffusion_state_columns,
    drift_rows,
    local_lipschitz_probe,
)
from ferrosim.noise import NoiseModel, apply_noise, make_family
from ferrosim.spectral import (
    SpectralField,
    div_coeffs,
    div_norm2,
    get_basis,
    inner,
    l2_norm2,
)

from conftest import default_noise, stable_params


class TestParams:
    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            PhysicalParams(nu=-1.0)
        with pytest.raises(ValueError):
            PhysicalParams(tau=0.0)
        PhysicalParams(chi0=0.0)  # the non-magnetizable limit is allowed


class TestStateAnsatz:
    def test_zero_state_zero_fields(self):
        st = GalerkinState.zeros(1)
        for f in st.reconstruct_fields(1.0):
            assert np.max(np.abs(f)) == 0.0

    def test_shared_gradient_sign_convention(self, rng):
        # H's gradient block is exactly minus M's
        st = GalerkinState.random(1, rng)
        _, _, m, h, _ = st.reconstruct_fields(1.0)
        div_sum = div_coeffs(m + h, 1)
        assert np.max(np.abs(div_sum)) < 1e-14

    def test_induction_field_example(self):
        # c = e = 1 on one div-free mode, mu0 = 2: B = 2 * 2 * psi
        st = GalerkinState.zeros(1)
        basis = get_basis(1, "V2")
        j = next(i for i, m in enumerate(basis.modes) if m.k == (1, 0, 0))
        st.c[j] = 1.0
        st.e[j] = 1.0
        _, _, m, h, b = st.reconstruct_fields(2.0)
        psi = basis.reconstruct(np.eye(basis.dim)[j])
        assert np.max(np.abs(b - 4.0 * psi)) < 1e-14
        assert np.max(np.abs(div_coeffs(b, 1))) < 1e-15

    def test_divergence_constraints_random(self, rng):
        for _ in range(4):
            st = GalerkinState.random(2, rng)
            u, _, m, h, b = st.reconstruct_fields(1.3)
            assert np.max(np.abs(div_coeffs(u, 2))) < 1e-13
            assert np.max(np.abs(div_coeffs(b, 2))) < 1e-13
            assert np.max(np.abs(div_coeffs(m + h, 2))) < 1e-13

    def test_field_potential_solves_magnetization_poisson(self, rng):
        # splitting H of a consistent state: the scalar potential of H's
        # gradient part satisfies -Lap phi = div M (since div H = -div M)
        from ferrosim.spectral import SpectralField, helmholtz_split, k_squared

        st = GalerkinState.random(2, rng)
        _, _, m, h, _ = st.reconstruct_fields(1.0)
        hs = helmholtz_split(SpectralField(h, 2))
        lhs = k_squared(2) * hs.potential  # -Lap phi in coefficients
        rhs = div_coeffs(m, 2)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(np.max(np.abs(rhs)), 1e-30)

    def test_fields_roundtrip(self, rng):
        st = GalerkinState.random(2, rng)
        fs = st.to_fieldset(1.7)
        back = GalerkinState.from_fields(fs, 2, 1.7)
        for name in "abcde":
            assert np.max(np.abs(getattr(back, name) - getattr(st, name))) < 1e-12

    def test_block_length_validation(self):
        with pytest.raises(ValueError):
            GalerkinState(1, np.zeros(3), np.zeros(42), np.zeros(29), np.zeros(13), np.zeros(29))

    def test_random_energy_targets(self, rng):
        st = GalerkinState.random(1, rng, {"u": 2.0, "w": 3.0, "m": 1.0, "h": 4.0})
        u, w, m, h, _ = st.reconstruct_fields(1.0)
        assert abs(l2_norm2(u) - 2.0) < 1e-10
        assert abs(l2_norm2(w) - 3.0) < 1e-10
        assert abs(l2_norm2(m) - 1.0) < 1e-10
        assert abs(l2_norm2(h) - 4.0) < 1e-8


class TestDrift:
    def test_zero_state_zero_drift(self):
        st = GalerkinState.zeros(1)
        dv = assemble_drift(st, stable_params())
        assert np.max(np.abs(dv.flat())) == 0.0

    def test_single_magnetization_mode(self):
        # c = 1 on a div-free mode with chi0 = 0: the magnetization row is
        # -(1/tau + lambda |k|^2) times the mode, the induction row vanishes
        params = stable_params(chi0=0.0, lam=0.25, tau=2.0)
        st = GalerkinState.zeros(1)
        basis = get_basis(1, "V2")
        j = next(i for i, m in enumerate(basis.modes) if m.k == (1, 0, 0))
        st.c[j] = 1.0
        dv = assemble_drift(st, params)
        rate = 1.0 / params.tau + params.lam
        assert abs(dv.c[j] + rate) < 1e-12
        assert np.max(np.abs(dv.rows.b)) < 1e-14  # induction row
        assert np.max(np.abs(dv.a)) < 1e-14
        assert np.max(np.abs(dv.b)) < 1e-14
        assert np.max(np.abs(dv.d)) < 1e-14
        # e follows from the ansatz split: e = B/mu0 - c
        assert abs(dv.e[j] - rate) < 1e-12

    def test_dense_and_fft_drifts_agree(self, rng):
        params = stable_params()
        for k_max in (1, 2, 3):
            st = GalerkinState.random(k_max, rng)
            fs = st.to_fieldset(params.mu0)
            r1 = drift_rows(fs, params, k_max, "dense")
            r2 = drift_rows(fs, params, k_max, "fft")
            for a, b in zip(r1, r2):
                scale = max(np.max(np.abs(b)), 1e-12)
                assert np.max(np.abs(a - b)) < 1e-9 * scale

    def test_rows_preserve_constraints(self, rng):
        params = stable_params()
        for _ in range(4):
            st = GalerkinState.random(2, rng)
            rows = drift_rows(st.to_fieldset(params.mu0), params, 2)
            assert np.max(np.abs(div_coeffs(rows.u, 2))) < 1e-12
            assert np.max(np.abs(div_coeffs(rows.b, 2))) < 1e-12

    def test_energy_cancellation_identity(self, rng):
        # 2 <y, drift(y)>_mu0 = -dissipation + sources, exactly
        params = stable_params(mu0=1.7, alpha=0.3, chi0=0.6)
        nm = NoiseModel(2)
        for _ in range(4):
            st = GalerkinState.random(2, rng)
            fs = st.to_fieldset(params.mu0)
            rows = drift_rows(fs, params, 2)
            h = fs.h(params.mu0)
            dh = rows.b / params.mu0 - rows.m
            pair = 2.0 * (
                inner(fs.u, rows.u)
                + inner(fs.w, rows.w)
                + inner(fs.m, rows.m)
                + params.mu0 * inner(h, dh)
            )
            terms = ledger_step_terms(
                fs, fs, rows, assemble_diffusion(fs, nm, params.mu0),
                np.zeros((0,)), params, nm, nm.channel_slices(), 1.0,
            )
            diss = sum(terms[k] for k in DISSIPATION_TERMS)
            src = terms["src_mh"] + terms["src_curl_mh"]
            scale = abs(diss) + abs(src) + 1.0
            assert abs(pair - (-diss + src)) < 1e-10 * scale

    def test_quadratic_homogeneity(self, rng):
        # drift(s y) = linear part * s + quadratic part * s^2; a finite
        # difference in s isolates the bilinearity
        params = stable_params()
        st = GalerkinState.random(1, rng)
        flat = st.flat()

        def drift_flat(s):
            scaled = GalerkinState.from_flat(1, flat * s)
            return assemble_drift(scaled, params).flat()

        d1, d2 = drift_flat(1.0), drift_flat(2.0)
        # drift(s) = L s + Q s^2: solve L, Q from s = 1, 2 and predict s = 3, 4
        quad = (d2 - 2.0 * d1) / 2.0
        lin = d1 - quad
        for s in (3.0, 4.0):
            pred = lin * s + quad * s * s
            got = drift_flat(s)
            assert np.max(np.abs(pred - got)) < 1e-8 * max(np.max(np.abs(got)), 1.0)

    def test_nonfinite_drift_aborts(self):
        params = stable_params()
        st = GalerkinState.zeros(1)
        st.a[0] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
            drift_rows(st.to_fieldset(params.mu0), params, 1)


class TestDiffusionAssembly:
    def test_zero_state_zero_diffusion(self):
        nm = default_noise()
        st = GalerkinState.zeros(1)
        cols = assemble_diffusion(st.to_fieldset(1.0), nm, 1.0)
        for block in cols.values():
            if block.size:
                assert np.max(np.abs(block)) == 0.0

    def test_velocity_block_matches_apply_noise(self, rng):
        nm = NoiseModel(1, {"velocity": make_family("velocity", 1, [((0, 0, 0), (1, 0, 0), 1.0)])})
        st = GalerkinState.random(1, rng)
        fs = st.to_fieldset(1.0)
        cols = assemble_diffusion(fs, nm, 1.0)
        expect = apply_noise(nm, "velocity", SpectralField(fs.u, 1), 0)
        assert np.max(np.abs(cols["velocity"][0] - expect.coeffs)) < 1e-13

    def test_magnetization_block_orthogonal_to_state(self, rng):
        nm = default_noise()
        st = GalerkinState.random(1, rng)
        fs = st.to_fieldset(1.0)
        cols = assemble_diffusion(fs, nm, 1.0)
        for k in range(cols["magnetization"].shape[0]):
            val = inner(cols["magnetization"][k], fs.m)
            assert abs(val) < 1e-12 * max(l2_norm2(fs.m), 1.0)

    def test_state_layout_columns(self, rng):
        params = stable_params()
        nm = default_noise()
        st = GalerkinState.random(1, rng)
        cols = diffusion_state_columns(st, nm, params)
        assert len(cols) == nm.total_channels
        # magnetization column: e block mirrors -c block (H = B/mu0 - M)
        mag_col = cols[nm.channel_slices()["magnetization"].start]
        assert np.max(np.abs(mag_col["e"] + mag_col["c"])) < 1e-14

    def test_field_block_keeps_b_divfree(self, rng):
        nm = default_noise()
        st = GalerkinState.random(1, rng)
        cols = assemble_diffusion(st.to_fieldset(1.0), nm, 1.0)
        for k in range(cols["field"].shape[0]):
            assert div_norm2(cols["field"][k], 1) < 1e-24


class TestLocalLipschitz:
    def test_growth_at_most_affine(self, rng):
        params = stable_params()
        ratios = {}
        for r in (1.0, 2.0, 4.0, 8.0):
            ratios[r] = local_lipschitz_probe(1, params, r, trials=24, rng=np.random.default_rng(5))
        for r in (1.0, 2.0, 4.0):
            assert ratios[2 * r] / ratios[r] <= 2.2

    def test_small_radius_floor(self):
        # the linearization at zero dominates nu |k|^2 >= nu on the velocity row
        params = stable_params()
        c = local_lipschitz_probe(1, params, 1e-4, trials=24, rng=np.random.default_rng(6))
        assert c >= params.nu

    def test_linear_ray_constant_ratio(self, rng):
        # states with u = w = 0 and H = 0 (div-free M, B = mu0 M) kill every
        # bilinear coupling: the drift is exactly linear along the ray
        params = stable_params()
        st = GalerkinState.zeros(1)
        basis = get_basis(1, "V2")
        st.c[4] = 0.3 + 0.1j
        st.e[4] = st.c[4] * 0  # H stays zero only via e = d = 0
        base = assemble_drift(st, params).flat()
        for s in (2.0, 5.0, 9.0):
            scaled = GalerkinState.from_flat(1, st.flat() * s)
            dv = assemble_drift(scaled, params).flat()
            assert np.max(np.abs(dv - s * base)) < 1e-12 * max(np.max(np.abs(dv)), 1e-12)
