//! The soliton Q = α cosh^{−1/β}(βx), the conserved and static energies,
//! the K-functionals, the λ/γ decomposition around ±Q with the nonlinear
//! distance d_σ, and the sign functional 𝔖.

use thiserror::Error;

use crate::grid::{EvenField, Grid, OddField, StateVec};
use crate::params::ModelParams;
use crate::spectral::{assemble_l, ground_state, OperatorKind, SpectralError};

#[derive(Debug, Error)]
pub enum SolitonError {
    #[error("grid does not resolve the soliton: {0}")]
    Grid(#[from] crate::grid::GridError),
    #[error("ground-state solve failed: {0}")]
    Spectral(#[from] SpectralError),
    #[error("soliton invariant violated: {0}")]
    Invariant(String),
    #[error("degenerate decomposition: ⟨L₊γ|γ⟩ = {0} is negative beyond tolerance")]
    DegenerateQuadraticForm(f64),
    #[error("state outside the admissible region of the sign functional")]
    OutsideRegion,
    #[error("sign functional rules disagree in the overlap (near {near:+}, far {far:+})")]
    InconsistentSign { near: i8, far: i8 },
}

/// The soliton with its linearization ground-state data.
#[derive(Clone, Debug)]
pub struct SolitonData {
    pub params: ModelParams,
    pub q: EvenField,
    pub qp: OddField,
    /// Normalized L₊ ground state, ρ > 0, ‖ρ‖₂ = 1.
    pub rho: EvenField,
    /// L₊ ρ = −k² ρ with k > 0.
    pub k: f64,
    /// J(Q), cached.
    pub action_q: f64,
    /// (−∂ₓₓ + 1) Q = Q^p, cached for H¹ inner products against Q.
    q_static_image: EvenField,
}

/// Closed-form soliton profile samples.
pub fn q_profile(params: &ModelParams, grid: &Grid) -> EvenField {
    EvenField::from_fn(grid, |x| {
        params.alpha * (params.beta * x).cosh().powf(-1.0 / params.beta)
    })
}

/// Closed-form Q′ = −tanh(βx) Q, odd.
pub fn q_derivative(params: &ModelParams, grid: &Grid) -> OddField {
    OddField::from_fn(grid, |x| {
        -(params.beta * x).tanh() * params.alpha * (params.beta * x).cosh().powf(-1.0 / params.beta)
    })
}

/// Build the soliton data: Q from the closed form, (ρ, k) from the even
/// ground state of L₊.
pub fn soliton_profile(params: &ModelParams, grid: &Grid) -> Result<SolitonData, SolitonError> {
    grid.check_resolves(params.beta)?;
    let q = q_profile(params, grid);
    let qp = q_derivative(params, grid);
    let lp = assemble_l(OperatorKind::Plus, params, grid);
    let (rho, eig) = ground_state(&lp)?;
    if eig >= 0.0 {
        return Err(SolitonError::Invariant(format!(
            "L+ bottom eigenvalue {eig} is not negative"
        )));
    }
    let k = (-eig).sqrt();

    // Static equation residual.
    let nl = nonlinearity(&q, params);
    let lin = q.neg_laplacian().axpy(1.0, &q);
    let resid = lin.axpy(-1.0, &nl).l2_norm() / q.l2_norm();
    if resid > 1e-8 {
        return Err(SolitonError::Invariant(format!(
            "static equation residual {resid:.3e} exceeds 1e-8"
        )));
    }
    let eig_resid = lp.apply_even_shifted(&rho).axpy(k * k, &rho).l2_norm();
    if eig_resid > 1e-6 {
        return Err(SolitonError::Invariant(format!(
            "eigenpair residual {eig_resid:.3e} exceeds 1e-6"
        )));
    }
    if rho.values().iter().any(|&v| v < -1e-9) {
        return Err(SolitonError::Invariant("ground state not nonnegative".into()));
    }

    let action_q = action(&q, params);
    let q_static_image = q.neg_laplacian().axpy(1.0, &q);
    Ok(SolitonData {
        params: *params,
        q,
        qp,
        rho,
        k,
        action_q,
        q_static_image,
    })
}

/// ∫ |u|^{p+1} dx
fn lp1_integral(u: &EvenField, params: &ModelParams) -> f64 {
    let p1 = params.p + 1.0;
    let vals: Vec<f64> = u.values().iter().map(|&v| v.abs().powf(p1)).collect();
    u.grid().integrate_even(&vals)
}

/// ‖∂ₓ u‖₂²
fn grad_sq(u: &EvenField) -> f64 {
    u.spectral_energies()
        .iter()
        .enumerate()
        .map(|(m, &p)| {
            let xi = u.grid().cosine_freq(m);
            xi * xi * p
        })
        .sum()
}

/// Conserved energy E(u, u̇).
pub fn energy(state: &StateVec, params: &ModelParams) -> f64 {
    let quad = 0.5 * (state.u.h1_norm().powi(2) + state.ud.l2_norm().powi(2));
    quad - lp1_integral(&state.u, params) / (params.p + 1.0)
}

/// Static energy ("action") J(u).
pub fn action(u: &EvenField, params: &ModelParams) -> f64 {
    0.5 * u.h1_norm().powi(2) - lp1_integral(u, params) / (params.p + 1.0)
}

/// The scaling functionals (K₀, K₂) = (⟨J′(u)|u⟩, ⟨J′(u)|Au⟩).
pub fn k_functionals(u: &EvenField, params: &ModelParams) -> (f64, f64) {
    let lp1 = lp1_integral(u, params);
    let k0 = u.h1_norm().powi(2) - lp1;
    let k2 = grad_sq(u) - 0.5 * (params.p - 1.0) / (params.p + 1.0) * lp1;
    (k0, k2)
}

/// Pointwise |u|^{p−1} u; exact odd powers take the integer fast path.
pub fn nonlinearity(u: &EvenField, params: &ModelParams) -> EvenField {
    let p = params.p;
    let pi = p as i32;
    if pi as f64 == p && pi % 2 == 1 {
        u.map(move |v| v.powi(pi))
    } else {
        u.map(move |v| if v == 0.0 { 0.0 } else { v.signum() * v.abs().powf(p) })
    }
}

/// Polynomial smoothstep cutoff: 1 on (−∞, 1], 0 on [2, ∞).
pub fn cutoff_chi(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let s = 2.0 - r;
        s * s * (3.0 - 2.0 * s)
    }
}

/// The λ/γ decomposition u = σ[Q + v], v = λρ + γ, γ ⊥ ρ, with the energy
/// norm and nonlinear distance.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub sigma: f64,
    pub lambda: f64,
    pub lambda_dot: f64,
    /// λ± = ½(λ ± λ̇/k)
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub gamma: EvenField,
    pub gamma_dot: EvenField,
    /// ⟨L₊γ|γ⟩
    pub gamma_quad: f64,
    /// ‖v‖_E
    pub energy_norm: f64,
    /// d_σ
    pub dist: f64,
    /// C(v) from the energy-expansion identity.
    pub cubic_remainder: f64,
}

/// ⟨L₊ γ | γ⟩ = ‖∂ₓγ‖² + ‖γ‖² − p ∫ Q^{p−1} γ².
fn l_plus_quadratic(gamma: &EvenField, sol: &SolitonData) -> f64 {
    let params = &sol.params;
    let vals: Vec<f64> = gamma
        .grid()
        .nodes()
        .iter()
        .zip(gamma.values())
        .map(|(&x, &g)| params.q_pow_pm1(x) * g * g)
        .collect();
    let pot = gamma.grid().integrate_even(&vals);
    grad_sq(gamma) + gamma.l2_norm().powi(2) - params.p * pot
}

pub fn decompose(
    state: &StateVec,
    sol: &SolitonData,
    sigma_hint: Option<f64>,
) -> Result<Decomposition, SolitonError> {
    let e_state = energy(state, &sol.params);
    decompose_with_energy(state, sol, sigma_hint, e_state)
}

/// [`decompose`] with the conserved energy supplied by the caller (the
/// integrator already has it each step).
pub fn decompose_with_energy(
    state: &StateVec,
    sol: &SolitonData,
    sigma_hint: Option<f64>,
    e_state: f64,
) -> Result<Decomposition, SolitonError> {
    let sigma = match sigma_hint {
        Some(s) => s.signum(),
        None => {
            // argmin_σ ‖σu − Q‖_{H¹}; ties resolve to +1.
            let corr = state.u.inner(&sol.q_static_image);
            if corr < 0.0 {
                -1.0
            } else {
                1.0
            }
        }
    };
    let v = state.u.scaled(sigma).axpy(-1.0, &sol.q);
    let vd = state.ud.scaled(sigma);
    let lambda = v.inner(&sol.rho);
    let lambda_dot = vd.inner(&sol.rho);
    let gamma = v.axpy(-lambda, &sol.rho);
    let gamma_dot = vd.axpy(-lambda_dot, &sol.rho);
    let ortho = gamma.inner(&sol.rho).abs();
    debug_assert!(ortho <= 1e-10 * gamma.l2_norm().max(1e-30) + 1e-14);

    let gamma_quad = l_plus_quadratic(&gamma, sol);
    if gamma_quad < -1e-8 {
        return Err(SolitonError::DegenerateQuadraticForm(gamma_quad));
    }
    let k = sol.k;
    let e_sq = 0.5 * (lambda_dot * lambda_dot + k * k * lambda * lambda)
        + 0.5 * (gamma_quad.max(0.0) + gamma_dot.l2_norm().powi(2));
    let energy_norm = e_sq.sqrt();

    let cubic_remainder = sol.action_q
        + 0.5 * (lambda_dot * lambda_dot - k * k * lambda * lambda)
        + 0.5 * (gamma_quad + gamma_dot.l2_norm().powi(2))
        - e_state;
    let chi = cutoff_chi(energy_norm / (2.0 * sol.params.thresholds.delta_e));
    let d_sq = e_sq - chi * cubic_remainder;
    let dist = d_sq.max(0.0).sqrt();

    Ok(Decomposition {
        sigma,
        lambda,
        lambda_dot,
        lambda_plus: 0.5 * (lambda + lambda_dot / k),
        lambda_minus: 0.5 * (lambda - lambda_dot / k),
        gamma,
        gamma_dot,
        gamma_quad,
        energy_norm,
        dist,
        cubic_remainder,
    })
}

/// Distance d_Q to the nearer of ±(Q, 0).
pub fn distance_to_soliton(state: &StateVec, sol: &SolitonData) -> Result<f64, SolitonError> {
    Ok(decompose(state, sol, None)?.dist)
}

/// The sign functional 𝔖 ∈ {±1}: −sign λ near the soliton, sign K₀ = sign K₂
/// away from it, with the overlap consistency asserted. sign 0 = +1.
pub fn sign_functional(state: &StateVec, sol: &SolitonData) -> Result<i8, SolitonError> {
    let params = &sol.params;
    let th = &params.thresholds;
    let dec = decompose(state, sol, None)?;
    let d = dec.dist;
    let e = energy(state, params);
    // Admissible region: E < J(Q) + d_Q²/2 (the ε₀(δ) part of the region is
    // proof-level and not certified here).
    if e >= sol.action_q + 0.5 * d * d {
        return Err(SolitonError::OutsideRegion);
    }
    let sgn = |x: f64| if x < 0.0 { -1i8 } else { 1i8 };
    let near = || -> i8 { sgn(-dec.lambda) };
    let far = || -> Result<i8, SolitonError> {
        let (k0, k2) = k_functionals(&state.u, params);
        let scale = 1e-12 * state.u.h1_norm().powi(2).max(1e-30);
        let s0 = if k0.abs() <= scale { 1 } else { sgn(k0) };
        let s2 = if k2.abs() <= scale { 1 } else { sgn(k2) };
        if s0 != s2 {
            return Err(SolitonError::InconsistentSign { near: s0, far: s2 });
        }
        Ok(s0)
    };
    if d <= th.delta_e && d < th.delta_star {
        Ok(near())
    } else if d > th.delta_e {
        far()
    } else {
        // Overlap: both rules must agree.
        let a = near();
        let b = far()?;
        if a != b {
            return Err(SolitonError::InconsistentSign { near: a, far: b });
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ModelParams, SolitonData) {
        let params = ModelParams::with_exponent(7.0).unwrap();
        let grid = Grid::new(40.0, 2048).unwrap();
        let sol = soliton_profile(&params, &grid).unwrap();
        (params, sol)
    }

    #[test]
    fn profile_values_and_monotonicity() {
        let (params, sol) = setup();
        // Q(0⁺) → α = 4^{1/6}; first node sits at h/2.
        let expected0 = params.alpha * (params.beta * sol.q.grid().node(0)).cosh().powf(-1.0 / 3.0);
        assert!((sol.q.values()[0] - expected0).abs() < 1e-12);
        assert!((params.alpha - 1.2599210498948732).abs() < 1e-12);
        let v = sol.q.values();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(v[v.len() - 1] <= 1e-20);
        assert!((sol.k * sol.k - 15.0).abs() < 1e-5);
    }

    #[test]
    fn energy_of_soliton_equals_action() {
        let (params, sol) = setup();
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(sol.q.grid()));
        let e = energy(&state, &params);
        assert!((e - sol.action_q).abs() <= 1e-10 * sol.action_q.abs());
        // Grid-refinement oracle at twice the resolution.
        let fine = Grid::new(40.0, 4096).unwrap();
        let qf = q_profile(&params, &fine);
        let ef = action(&qf, &params);
        assert!((e - ef).abs() <= 1e-8 * ef.abs(), "{e} vs {ef}");
        // Zero state has zero energy.
        let zero = StateVec::zeros(sol.q.grid());
        assert_eq!(energy(&zero, &params), 0.0);
        assert!(sol.action_q > 0.0);
    }

    #[test]
    fn action_small_amplitude_is_quadratic() {
        let (params, sol) = setup();
        let mut ratios = Vec::new();
        for &c in &[1e-3, 1e-4] {
            let j = action(&sol.q.scaled(c), &params);
            ratios.push(j / (c * c));
        }
        let h1_half = 0.5 * sol.q.h1_norm().powi(2);
        for r in ratios {
            assert!((r - h1_half).abs() < 1e-4 * h1_half);
        }
    }

    #[test]
    fn k_functionals_vanish_at_q() {
        let (params, sol) = setup();
        let (k0, k2) = k_functionals(&sol.q, &params);
        let scale = sol.q.h1_norm().powi(2);
        assert!(k0.abs() <= 1e-8 * scale, "K0 = {k0}");
        assert!(k2.abs() <= 1e-8 * scale, "K2 = {k2}");
        let (k0s, _) = k_functionals(&sol.q.scaled(0.1), &params);
        assert!(k0s > 0.0);
    }

    #[test]
    fn k_linearization_slopes() {
        // K₀(Q+v) + (p−1)⟨Q^p|v⟩ = O(‖v‖²) and
        // K₂(Q+v) + ⟨(p−5)/2·Q^p + 2Q|v⟩ = O(‖v‖²): slope-2 regression.
        let (params, sol) = setup();
        let grid = sol.q.grid().clone();
        let dir = EvenField::from_fn(&grid, |x| (-0.8 * x * x).exp() * (1.0 - 0.4 * x * x));
        let qp_field = nonlinearity(&sol.q, &params);
        let mut pts0 = Vec::new();
        let mut pts2 = Vec::new();
        for &eps in &[1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
            let v = dir.scaled(eps);
            let u = sol.q.axpy(1.0, &v);
            let (k0, k2) = k_functionals(&u, &params);
            let lin0 = -(params.p - 1.0) * qp_field.inner(&v);
            let lin2 = -(0.5 * (params.p - 5.0) * qp_field.inner(&v) + 2.0 * sol.q.inner(&v));
            pts0.push((eps.ln(), (k0 - lin0).abs().ln()));
            pts2.push((eps.ln(), (k2 - lin2).abs().ln()));
        }
        let s0 = crate::spectral::fit_line_slope(&pts0);
        let s2 = crate::spectral::fit_line_slope(&pts2);
        assert!((s0 - 2.0).abs() < 0.2, "K0 slope {s0}");
        assert!((s2 - 2.0).abs() < 0.2, "K2 slope {s2}");
    }

    #[test]
    fn nonlinearity_identities() {
        let (params, sol) = setup();
        // N(Q) = (−∂ₓₓ + 1) Q.
        let nl = nonlinearity(&sol.q, &params);
        let lin = sol.q.neg_laplacian().axpy(1.0, &sol.q);
        assert!(nl.axpy(-1.0, &lin).l2_norm() <= 1e-8 * sol.q.l2_norm());
        // Odd symmetry.
        let g = EvenField::from_fn(sol.q.grid(), |x| (1.0 + x).sin());
        let a = nonlinearity(&g.scaled(-1.0), &params);
        let b = nonlinearity(&g, &params).scaled(-1.0);
        assert_eq!(a.values(), b.values());
        // p=7 at u ≡ 2.
        let two = EvenField::from_fn(sol.q.grid(), |_| 2.0);
        assert!(nonlinearity(&two, &params)
            .values()
            .iter()
            .all(|&v| (v - 128.0).abs() < 1e-12));
    }

    #[test]
    fn decompose_pure_soliton_and_eigen_direction() {
        let (_, sol) = setup();
        let grid = sol.q.grid().clone();
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(&grid));
        let d = decompose(&state, &sol, None).unwrap();
        assert_eq!(d.sigma, 1.0);
        assert!(d.lambda.abs() < 1e-12);
        assert!(d.gamma.l2_norm() < 1e-10);
        assert!(d.dist < 1e-10);
        // (Q + aρ, 0): λ = a, γ = 0, d ≈ |a| k /√2.
        let a = 1e-4;
        let state = StateVec::new(sol.q.axpy(a, &sol.rho), EvenField::zeros(&grid));
        let d = decompose(&state, &sol, None).unwrap();
        assert!((d.lambda - a).abs() < 1e-12);
        assert!(d.gamma.l2_norm() < 1e-10);
        let expect = a * sol.k / 2.0_f64.sqrt();
        assert!((d.dist - expect).abs() < 20.0 * a * a, "d {} vs {expect}", d.dist);
    }

    #[test]
    fn energy_distance_identity() {
        // d_σ ≤ δ_E ⟹ d_σ² = E − J(Q) + k²λ².
        let (params, sol) = setup();
        let grid = sol.q.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a: f64 = rng.gen_range(-0.01..0.01);
            let b: f64 = rng.gen_range(-0.01..0.01);
            let bump = EvenField::from_fn(&grid, |x| (-x * x / 2.0).exp() * x.cos());
            let u = sol.q.axpy(a, &sol.rho).axpy(b, &bump);
            let ud = bump.scaled(rng.gen_range(-0.01..0.01));
            let state = StateVec::new(u, ud);
            let d = decompose(&state, &sol, None).unwrap();
            assert!(d.dist <= params.thresholds.delta_e);
            let rhs = energy(&state, &params) - sol.action_q + sol.k * sol.k * d.lambda * d.lambda;
            assert!(
                (d.dist * d.dist - rhs).abs() <= 1e-10 * rhs.abs().max(1e-12),
                "identity defect {}",
                (d.dist * d.dist - rhs).abs()
            );
        }
    }

    #[test]
    fn distance_comparability_on_random_perturbations() {
        let (_, sol) = setup();
        let grid = sol.q.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let scale: f64 = 10f64.powf(rng.gen_range(-4.0..-1.0));
            let bump = EvenField::from_fn(&grid, |x| {
                (-(x * x) / 3.0).exp() * (1.0 + 0.5 * (1.3 * x).cos())
            });
            let u = sol.q.axpy(scale * rng.gen_range(-1.0..1.0), &sol.rho).axpy(
                scale * rng.gen_range(-1.0..1.0),
                &bump,
            );
            let ud = bump.scaled(scale * rng.gen_range(-1.0..1.0));
            let d = decompose(&StateVec::new(u, ud), &sol, None).unwrap();
            assert!(d.energy_norm / 2.0 <= d.dist + 1e-14);
            assert!(d.dist <= 2.0 * d.energy_norm + 1e-14);
        }
    }

    #[test]
    fn eigenmode_dominance_near_soliton() {
        // With E < J(Q) + d²/2 and d ≤ δ_E, d ≃ |λ| with a grid-free ratio.
        let (params, sol) = setup();
        let grid = sol.q.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut ratios = Vec::new();
        for _ in 0..40 {
            let a: f64 = rng.gen_range(1e-4..0.02) * [-1.0, 1.0].choose(&mut rng).unwrap();
            let adot: f64 = rng.gen_range(-0.5..0.5) * a.abs() * sol.k;
            let u = sol.q.axpy(a, &sol.rho);
            let ud = sol.rho.scaled(adot);
            let state = StateVec::new(u, ud);
            let d = decompose(&state, &sol, None).unwrap();
            let e = energy(&state, &params);
            if e < sol.action_q + 0.5 * d.dist * d.dist && d.dist <= params.thresholds.delta_e {
                ratios.push(d.dist / d.lambda.abs());
            }
        }
        assert!(ratios.len() > 10);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0_f64, f64::max);
        assert!(lo > 0.5 && hi < 10.0, "ratio range [{lo}, {hi}]");
    }

    #[test]
    fn sign_functional_values() {
        let (params, sol) = setup();
        let grid = sol.q.grid().clone();
        // u = 0: far regime, K₀(0) = 0 → +1 by the sign-0 convention.
        let zero = StateVec::zeros(&grid);
        assert_eq!(sign_functional(&zero, &sol).unwrap(), 1);
        // 1.2 Q: K₀ < 0 by direct quadrature → −1.
        let s = StateVec::new(sol.q.scaled(1.2), EvenField::zeros(&grid));
        let (k0, _) = k_functionals(&s.u, &params);
        assert!(k0 < 0.0);
        assert_eq!(sign_functional(&s, &sol).unwrap(), -1);
        // 0.5 Q: K₀ > 0 → +1.
        let s = StateVec::new(sol.q.scaled(0.5), EvenField::zeros(&grid));
        let (k0, _) = k_functionals(&s.u, &params);
        assert!(k0 > 0.0);
        assert_eq!(sign_functional(&s, &sol).unwrap(), 1);
        // Near regime: Q + aρ with tiny energy excess → −sign λ.
        let a = 0.002;
        let s = StateVec::new(sol.q.axpy(a, &sol.rho), EvenField::zeros(&grid));
        assert_eq!(sign_functional(&s, &sol).unwrap(), -1);
        let s = StateVec::new(sol.q.axpy(-a, &sol.rho), EvenField::zeros(&grid));
        assert_eq!(sign_functional(&s, &sol).unwrap(), 1);
    }

    #[test]
    fn sign_functional_sigma_flip_invariance() {
        let (_, sol) = setup();
        let grid = sol.q.grid().clone();
        let s = StateVec::new(sol.q.scaled(1.2), EvenField::zeros(&grid));
        let s_neg = StateVec::new(sol.q.scaled(-1.2), EvenField::zeros(&grid));
        assert_eq!(
            sign_functional(&s, &sol).unwrap(),
            sign_functional(&s_neg, &sol).unwrap()
        );
    }
}
