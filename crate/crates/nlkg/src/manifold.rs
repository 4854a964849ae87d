//! Center-stable dynamics near (Q, 0): the μ± reduction, the fixed-point
//! construction of center-stable data under the stability condition,
//! threshold shooting for the special solutions approaching (Q, 0), and
//! scattering data for the radiation part.
//!
//! The reduction writes u = Q + μρ + w with w ⊥ ρ. The ρ-coordinate obeys
//! μ̈ − k²μ = ⟨N(Q, v) | ρ⟩ =: n(t), diagonalized by μ± = ½(μ ± μ̇/k)
//! (so μ = μ₊ + μ₋); the radiation obeys ẅ + P_ρ^⊥ L₊ w = P_ρ^⊥ N and is
//! evolved through the distorted Fourier transform. The fixed point enforces
//! the decaying choice μ₊(t) = −(1/2k)∫_t^∞ e^{−k(s−t)} n(s) ds whose value
//! at t = 0 is the graph height over the (w, μ₋) tangent data.

use rayon::prelude::*;
use thiserror::Error;

use crate::classify::{classify_direction, Outcome, OutcomeKind};
use crate::evolve::EvolveOpts;
use crate::grid::{EvenField, StateVec};
use crate::soliton::{energy, SolitonData};
use crate::spectral::{fit_line_slope, project, SpectralMeasure};

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("fixed-point iteration diverged (defect {defect:.3e} after {sweeps} sweeps)")]
    NoContraction { defect: f64, sweeps: usize },
    #[error("horizon too short: e^{{-kT}} truncation {tail:.3e} exceeds tol/10 = {limit:.3e}")]
    HorizonTooShort { tail: f64, limit: f64 },
    #[error("bracket endpoints classify identically ({0})")]
    BracketInvalid(&'static str),
    #[error(transparent)]
    Classify(#[from] crate::classify::ClassifyError),
}

/// The ρ-mode coordinates of a state near (Q, 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuState {
    pub mu: f64,
    pub mu_dot: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
}

/// μ = ⟨u − Q | ρ⟩, w = u − Q − μρ (and likewise for the velocities).
pub fn mu_decompose(state: &StateVec, sol: &SolitonData) -> (MuState, StateVec) {
    let v = state.u.axpy(-1.0, &sol.q);
    let mu = v.inner(&sol.rho);
    let mu_dot = state.ud.inner(&sol.rho);
    let w = v.axpy(-mu, &sol.rho);
    let wd = state.ud.axpy(-mu_dot, &sol.rho);
    let k = sol.k;
    (
        MuState {
            mu,
            mu_dot,
            mu_plus: 0.5 * (mu + mu_dot / k),
            mu_minus: 0.5 * (mu - mu_dot / k),
        },
        StateVec::new(w, wd),
    )
}

/// Options for the fixed-point solve.
#[derive(Clone, Copy, Debug)]
pub struct CsOpts {
    pub horizon: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl CsOpts {
    pub fn defaults(k: f64) -> Self {
        CsOpts {
            horizon: (30.0 / k).max(30.0),
            dt: 0.1,
            tol: 1e-9,
            max_sweeps: 80,
        }
    }
}

/// Initial iterate of the fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveSeed {
    Zero,
    FreeFlow,
}

/// A converged point of the center-stable construction, with the solution
/// on [0, T] in the distorted frame.
#[derive(Clone, Debug)]
pub struct ManifoldPoint {
    pub mu_minus0: f64,
    /// Graph value μ₊(0) from the stability condition.
    pub mu_plus0: f64,
    /// Final fixed-point defect in the iteration norm.
    pub residual: f64,
    pub horizon: f64,
    /// e^{−kT}-scale truncation bound on the μ₊ integral.
    pub tail_bound: f64,
    pub sweeps: usize,
    pub times: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_dot: Vec<f64>,
    /// ⟨N(t), ρ⟩ series.
    pub n_rho: Vec<f64>,
    /// Radiation coefficients ŵ(t, λ), ŵ̇(t, λ) on the measure nodes.
    pub w_hat: Vec<Vec<f64>>,
    pub wdot_hat: Vec<Vec<f64>>,
    /// Forcing coefficients n̂(t, λ).
    pub n_hat: Vec<Vec<f64>>,
    pub w0_hat: Vec<f64>,
    pub wdot0_hat: Vec<f64>,
}

impl ManifoldPoint {
    /// Reconstruct the initial datum u = Q + μ(0)ρ + w(0), u̇ = μ̇(0)ρ + ẇ(0).
    pub fn initial_state(&self, sol: &SolitonData, m: &SpectralMeasure) -> StateVec {
        let w0 = synthesize(&self.w0_hat, m);
        let wd0 = synthesize(&self.wdot0_hat, m);
        StateVec::new(
            sol.q.axpy(1.0, &w0).axpy(self.mu[0], &sol.rho),
            wd0.axpy(self.mu_dot[0], &sol.rho),
        )
    }

    /// Spectral 𝓗-norm of the radiation pair at time node i.
    pub fn radiation_norm(&self, i: usize, m: &SpectralMeasure) -> f64 {
        pair_h_norm(&self.w_hat[i], &self.wdot_hat[i], m)
    }
}

fn pair_h_norm(w: &[f64], wd: &[f64], m: &SpectralMeasure) -> f64 {
    let mut acc = 0.0;
    for i in 0..w.len() {
        let wgt = m.weights()[i] * m.mu1()[i];
        acc += wgt * ((1.0 + m.lambda_nodes()[i]) * w[i] * w[i] + wd[i] * wd[i]);
    }
    acc.sqrt()
}

fn synthesize(coeffs: &[f64], m: &SpectralMeasure) -> EvenField {
    let n = m.grid().len();
    let mut vals = vec![0.0; n];
    for (i, &c) in coeffs.iter().enumerate() {
        let s = m.weights()[i] * m.mu1()[i] * c;
        if s == 0.0 {
            continue;
        }
        let th = m.theta(i);
        for (v, t) in vals.iter_mut().zip(th) {
            *v += s * t;
        }
    }
    EvenField::from_samples(m.grid(), vals)
}

/// Exponential-kernel integral of a linear segment:
/// ∫₀^{dt} e^{−kτ}(a + (b−a)τ/dt) dτ.
fn exp_segment(a: f64, b: f64, k: f64, dt: f64) -> f64 {
    let e = (-k * dt).exp();
    let f1 = (1.0 - e) / k;
    let f2 = (1.0 - e * (1.0 + k * dt)) / (k * k * dt);
    a * f1 + (b - a) * f2
}

/// ∫_{t}^{t+dt} e^{iωs} n_lin(s) ds with n linear from a to b.
fn osc_segment(a: f64, b: f64, omega: f64, t: f64, dt: f64) -> (f64, f64) {
    let iw = rustfft::num_complex::Complex64::new(0.0, omega);
    let e_dt = rustfft::num_complex::Complex64::from_polar(1.0, omega * dt);
    let one = rustfft::num_complex::Complex64::new(1.0, 0.0);
    let g1 = (e_dt - one) / iw;
    let g2 = (dt * e_dt / iw - (e_dt - one) / (iw * iw)) / dt;
    let phase = rustfft::num_complex::Complex64::from_polar(1.0, omega * t);
    let p = phase * (a * g1 + (b - a) * g2);
    (p.re, p.im)
}

/// Solve the center-stable fixed point for tangent data (w₀, μ₋(0)).
pub fn center_stable_solve(
    w0: &StateVec,
    mu_minus0: f64,
    sol: &SolitonData,
    m: &SpectralMeasure,
    opts: &CsOpts,
    seed: SolveSeed,
) -> Result<ManifoldPoint, ManifoldError> {
    let params = &sol.params;
    let k = sol.k;
    let grid = m.grid().clone();
    let n_t = (opts.horizon / opts.dt).round() as usize;
    let dt = opts.horizon / n_t as f64;
    let times: Vec<f64> = (0..=n_t).map(|i| i as f64 * dt).collect();
    let nl = m.node_count();

    // Project the radiation data off ρ and take distorted coefficients.
    let w0u = w0.u.axpy(-w0.u.inner(&sol.rho), &sol.rho);
    let w0d = w0.ud.axpy(-w0.ud.inner(&sol.rho), &sol.rho);
    let w0_hat = project(&w0u, m).f1;
    let wdot0_hat = project(&w0d, m).f1;

    let omega = m.omega();
    // Trigonometric tables per (time, λ).
    let rot: Vec<Vec<(f64, f64)>> = times
        .iter()
        .map(|&t| omega.iter().map(|&w| (t * w).sin_cos()).collect())
        .collect();

    // Current iterate: v(t) in x-space plus the μ series.
    let mut mu: Vec<f64> = match seed {
        SolveSeed::Zero => vec![0.0; n_t + 1],
        SolveSeed::FreeFlow => times.iter().map(|&t| (-k * t).exp() * mu_minus0).collect(),
    };
    let mut w_x: Vec<Vec<f64>> = match seed {
        SolveSeed::Zero => vec![vec![0.0; grid.len()]; n_t + 1],
        SolveSeed::FreeFlow => (0..=n_t)
            .map(|i| {
                let mut coeffs = vec![0.0; nl];
                for l in 0..nl {
                    let (sn, cs) = rot[i][l];
                    coeffs[l] = cs * w0_hat[l] + sn / omega[l] * wdot0_hat[l];
                }
                synthesize(&coeffs, m).values().to_vec()
            })
            .collect(),
    };

    let mut defect_prev = f64::INFINITY;
    let mut result: Option<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, f64, usize)> = None;
    let q_pow: Vec<f64> = grid.nodes().iter().map(|&x| params.q_pow_pm1(x)).collect();

    for sweep in 1..=opts.max_sweeps {
        // Nonlinearity N(Q, v) = |Q+v|^{p-1}(Q+v) − Q^p − p Q^{p-1} v.
        let n_fields: Vec<EvenField> = (0..=n_t)
            .into_par_iter()
            .map(|i| {
                let mut vals = vec![0.0; grid.len()];
                for (j, v) in vals.iter_mut().enumerate() {
                    let vv = mu[i] * sol.rho.values()[j] + w_x[i][j];
                    let uu = sol.q.values()[j] + vv;
                    *v = scalar_power(uu, params.p)
                        - scalar_power(sol.q.values()[j], params.p)
                        - params.p * q_pow[j] * vv;
                }
                EvenField::from_samples(&grid, vals)
            })
            .collect();
        let n_rho: Vec<f64> = n_fields.iter().map(|f| f.inner(&sol.rho)).collect();
        let n_hat: Vec<Vec<f64>> = n_fields
            .par_iter()
            .map(|f| project(f, m).f1)
            .collect();

        // μ update: decaying μ₊, Duhamel μ₋.
        let mut i_plus = vec![0.0; n_t + 1];
        for i in (0..n_t).rev() {
            i_plus[i] = (-k * dt).exp() * i_plus[i + 1]
                + segment_forward(n_rho[i], n_rho[i + 1], k, dt);
        }
        let mut j_minus = vec![0.0; n_t + 1];
        for i in 0..n_t {
            j_minus[i + 1] = (-k * dt).exp() * j_minus[i] + exp_segment(n_rho[i], n_rho[i + 1], k, dt);
        }
        let mut new_mu = vec![0.0; n_t + 1];
        let mut new_mu_dot = vec![0.0; n_t + 1];
        for i in 0..=n_t {
            let mu_p = -i_plus[i] / (2.0 * k);
            let mu_m = (-k * times[i]).exp() * mu_minus0 - j_minus[i] / (2.0 * k);
            new_mu[i] = mu_p + mu_m;
            new_mu_dot[i] = k * (mu_p - mu_m);
        }

        // w update by Duhamel in the distorted frame.
        let mut c_pref = vec![vec![0.0; nl]; n_t + 1];
        let mut s_pref = vec![vec![0.0; nl]; n_t + 1];
        for i in 0..n_t {
            for l in 0..nl {
                let (dc, ds) = osc_segment(n_hat[i][l], n_hat[i + 1][l], omega[l], times[i], dt);
                c_pref[i + 1][l] = c_pref[i][l] + dc;
                s_pref[i + 1][l] = s_pref[i][l] + ds;
            }
        }
        let mut new_w_hat = vec![vec![0.0; nl]; n_t + 1];
        let mut new_wdot_hat = vec![vec![0.0; nl]; n_t + 1];
        for i in 0..=n_t {
            for l in 0..nl {
                let (sn, cs) = rot[i][l];
                let w = omega[l];
                new_w_hat[i][l] = cs * w0_hat[l]
                    + sn / w * wdot0_hat[l]
                    + (sn * c_pref[i][l] - cs * s_pref[i][l]) / w;
                new_wdot_hat[i][l] = -w * sn * w0_hat[l]
                    + cs * wdot0_hat[l]
                    + cs * c_pref[i][l]
                    + sn * s_pref[i][l];
            }
        }
        let new_w_x: Vec<Vec<f64>> = new_w_hat
            .par_iter()
            .map(|row| synthesize(row, m).values().to_vec())
            .collect();

        // Iteration defect: sup-𝓗 of Δw + weighted L²_{t,x} + Strichartz
        // accumulation of Δw + sup |Δμ|.
        let mut sup_mu = 0.0_f64;
        for i in 0..=n_t {
            sup_mu = sup_mu.max((new_mu[i] - mu[i]).abs());
        }
        let mut sup_w = 0.0_f64;
        let mut local_sq = 0.0;
        let mut strich = 0.0;
        for i in 0..=n_t {
            let mut dw_sq = 0.0;
            let mut d2p = 0.0;
            let mut dloc = 0.0;
            for j in 0..grid.len() {
                let d = new_w_x[i][j] - w_x[i][j];
                dw_sq += d * d;
                d2p += (d * d).powi(params.p as i32);
                let x = grid.node(j);
                dloc += d * d / (1.0 + x * x).powi(2);
            }
            let two_h = 2.0 * grid.spacing();
            sup_w = sup_w.max((two_h * dw_sq).sqrt());
            strich += dt * (two_h * d2p).sqrt();
            local_sq += dt * two_h * dloc;
        }
        let defect = sup_mu + sup_w + strich.powf(1.0 / params.p) + local_sq.sqrt();

        // Accept (with damping when the defect grows).
        if defect > defect_prev && sweep > 2 {
            for i in 0..=n_t {
                mu[i] = 0.5 * (mu[i] + new_mu[i]);
                for j in 0..grid.len() {
                    w_x[i][j] = 0.5 * (w_x[i][j] + new_w_x[i][j]);
                }
            }
        } else {
            mu = new_mu.clone();
            w_x = new_w_x;
        }

        if defect > 1e3 * defect_prev.min(1e3) || !defect.is_finite() {
            return Err(ManifoldError::NoContraction { defect, sweeps: sweep });
        }
        defect_prev = defect.min(defect_prev);

        if defect <= opts.tol {
            let tail = (-k * opts.horizon).exp() * n_rho[n_t].abs() / (2.0 * k * k);
            if tail > opts.tol / 10.0 {
                return Err(ManifoldError::HorizonTooShort {
                    tail,
                    limit: opts.tol / 10.0,
                });
            }
            let mu_plus0 = -i_plus[0] / (2.0 * k);
            result = Some((
                new_mu,
                new_mu_dot,
                new_w_hat,
                new_wdot_hat,
                n_hat,
                n_rho,
                mu_plus0,
                sweep,
            ));
            break;
        }
        let _ = sweep;
        if sweep == opts.max_sweeps {
            return Err(ManifoldError::NoContraction {
                defect,
                sweeps: sweep,
            });
        }
        // keep n_rho/n_hat of the last sweep via loop recomputation
        drop(n_fields);
    }

    let (mu, mu_dot, w_hat, wdot_hat, n_hat, n_rho, mu_plus0, sweeps) =
        result.expect("loop either returns or sets the result");
    let tail_bound = (-k * opts.horizon).exp() * n_rho[n_t].abs().max(1e-300) / (2.0 * k * k);
    Ok(ManifoldPoint {
        mu_minus0,
        mu_plus0,
        residual: defect_prev,
        horizon: opts.horizon,
        tail_bound,
        sweeps,
        times,
        mu,
        mu_dot,
        n_rho,
        w_hat,
        wdot_hat,
        n_hat,
        w0_hat,
        wdot0_hat,
    })
}

fn scalar_power(u: f64, p: f64) -> f64 {
    let pi = p as i32;
    if pi as f64 == p && pi % 2 == 1 {
        u.powi(pi)
    } else if u == 0.0 {
        0.0
    } else {
        u.signum() * u.abs().powf(p)
    }
}

/// ∫_{t}^{t+dt} e^{−k(s−t)} n_lin(s) ds.
fn segment_forward(a: f64, b: f64, k: f64, dt: f64) -> f64 {
    let e = (-k * dt).exp();
    let f1 = (1.0 - e) / k;
    let f2 = (1.0 - (1.0 + k * dt) * e) / (k * k * dt);
    // ∫ e^{−kτ}(a + (b−a)τ/dt) dτ
    a * f1 + (b - a) * f2
}

/// Iteration-norm distance between two solve outputs (sup over time of the
/// spectral 𝓗-distance plus sup |Δμ|).
pub fn solution_distance(a: &ManifoldPoint, b: &ManifoldPoint, m: &SpectralMeasure) -> f64 {
    let n = a.times.len().min(b.times.len());
    let mut sup = 0.0_f64;
    for i in 0..n {
        let dw: Vec<f64> = a.w_hat[i]
            .iter()
            .zip(&b.w_hat[i])
            .map(|(x, y)| x - y)
            .collect();
        let dwd: Vec<f64> = a.wdot_hat[i]
            .iter()
            .zip(&b.wdot_hat[i])
            .map(|(x, y)| x - y)
            .collect();
        sup = sup.max(pair_h_norm(&dw, &dwd, m));
        sup = sup.max((a.mu[i] - b.mu[i]).abs());
    }
    sup
}

/// Scattering data of the radiation part with the energy identity check.
#[derive(Clone, Debug)]
pub struct ScatteringData {
    pub w_inf_hat: Vec<f64>,
    pub wdot_inf_hat: Vec<f64>,
    /// ½ ‖(w∞, ẇ∞)‖²_𝓗 in the spectral norm.
    pub radiation_energy: f64,
    pub total_energy: f64,
    pub energy_identity_defect: f64,
    pub tail_bound: f64,
    /// (t, ‖w(t) − free-evolved w∞(t)‖_𝓗) over the second half of [0, T].
    pub convergence_trend: Vec<(f64, f64)>,
}

pub fn scattering_data(
    point: &ManifoldPoint,
    sol: &SolitonData,
    m: &SpectralMeasure,
) -> ScatteringData {
    let nl = m.node_count();
    let omega = m.omega();
    let n_t = point.times.len() - 1;
    let dt = point.times[1] - point.times[0];
    // S(T) = ∫₀^T sin(ωs) n̂ ds and C(T) = ∫₀^T cos(ωs) n̂ ds.
    let mut c_tot = vec![0.0; nl];
    let mut s_tot = vec![0.0; nl];
    for i in 0..n_t {
        for l in 0..nl {
            let (dc, ds) = osc_segment(
                point.n_hat[i][l],
                point.n_hat[i + 1][l],
                omega[l],
                point.times[i],
                dt,
            );
            c_tot[l] += dc;
            s_tot[l] += ds;
        }
    }
    let w_inf_hat: Vec<f64> = (0..nl)
        .map(|l| point.w0_hat[l] - s_tot[l] / omega[l])
        .collect();
    let wdot_inf_hat: Vec<f64> = (0..nl).map(|l| point.wdot0_hat[l] + c_tot[l]).collect();

    let radiation_energy = 0.5 * pair_h_norm(&w_inf_hat, &wdot_inf_hat, m).powi(2);
    let initial = point.initial_state(sol, m);
    let total_energy = energy(&initial, &sol.params);
    let energy_identity_defect =
        (total_energy - sol.action_q - radiation_energy).abs();

    // ‖w(t) − free-evolved w∞(t)‖_𝓗 on the second half of the window.
    let mut convergence_trend = Vec::new();
    let start = n_t / 2;
    let step = ((n_t - start) / 8).max(1);
    for i in (start..=n_t).step_by(step) {
        let t = point.times[i];
        let mut dw = vec![0.0; nl];
        let mut dwd = vec![0.0; nl];
        for l in 0..nl {
            let (sn, cs) = (t * omega[l]).sin_cos();
            let wf = cs * w_inf_hat[l] + sn / omega[l] * wdot_inf_hat[l];
            let wdf = -omega[l] * sn * w_inf_hat[l] + cs * wdot_inf_hat[l];
            dw[l] = point.w_hat[i][l] - wf;
            dwd[l] = point.wdot_hat[i][l] - wdf;
        }
        convergence_trend.push((t, pair_h_norm(&dw, &dwd, m)));
    }

    ScatteringData {
        w_inf_hat,
        wdot_inf_hat,
        radiation_energy,
        total_energy,
        energy_identity_defect,
        tail_bound: point.tail_bound,
        convergence_trend,
    }
}

/// Bisection shooting along a one-parameter family of data.
#[derive(Clone, Debug)]
pub struct ShootRow {
    pub a_lo: f64,
    pub a_hi: f64,
    pub outcome_lo: OutcomeKind,
    pub outcome_hi: OutcomeKind,
    /// Trapping horizon of the midpoint at this bracket width.
    pub t_trap_mid: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BranchLabel {
    /// Scatters backward in time.
    WPlusLike,
    /// Blows up backward in time.
    WMinusLike,
    Unresolved,
}

#[derive(Clone, Debug)]
pub struct ShootingResult {
    pub bracket: (f64, f64),
    pub a_star: f64,
    pub log: Vec<ShootRow>,
    pub trapped_horizon: f64,
    pub branch: BranchLabel,
    /// Regression slope of trapped horizon against −log(width); should be
    /// 1/k.
    pub horizon_slope: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ShootOpts {
    pub width_target: f64,
    pub base: EvolveOpts,
}

pub fn shoot_threshold(
    family: &(dyn Fn(f64) -> StateVec + Sync),
    bracket0: (f64, f64),
    sol: &SolitonData,
    opts: &ShootOpts,
) -> Result<ShootingResult, ManifoldError> {
    let tube = sol.params.thresholds.delta_trap;
    let classify_kind = |a: f64| -> Result<(OutcomeKind, f64), ManifoldError> {
        let st = family(a);
        let (outcome, _, traj) = classify_direction(&st, &opts.base, sol)?;
        Ok((outcome.kind(), traj.trapped_horizon(tube)))
    };

    let (mut a_lo, mut a_hi) = bracket0;
    let (k_lo, _) = classify_kind(a_lo)?;
    let (k_hi, _) = classify_kind(a_hi)?;
    if k_lo == k_hi {
        return Err(ManifoldError::BracketInvalid(
            "endpoint outcomes agree; widen or shift the bracket",
        ));
    }
    if k_lo == OutcomeKind::Undecided || k_hi == OutcomeKind::Undecided {
        return Err(ManifoldError::BracketInvalid("endpoint undecided"));
    }

    let mut log = Vec::new();
    let k_lo_cur = k_lo;
    let mut k_hi_cur = k_hi;
    while a_hi - a_lo > opts.width_target {
        let mid = 0.5 * (a_lo + a_hi);
        let (k_mid, t_trap) = classify_kind(mid)?;
        log.push(ShootRow {
            a_lo,
            a_hi,
            outcome_lo: k_lo_cur,
            outcome_hi: k_hi_cur,
            t_trap_mid: t_trap,
        });
        match k_mid {
            k if k == k_lo_cur => a_lo = mid,
            k if k == k_hi_cur => a_hi = mid,
            OutcomeKind::Trapped | OutcomeKind::Undecided => {
                // Indistinguishable from the threshold at this horizon;
                // tighten symmetrically and stop.
                let w = 0.25 * (a_hi - a_lo);
                a_lo = mid - w;
                a_hi = mid + w;
                break;
            }
            k => {
                // A third decided kind appeared; bisect toward it from the
                // low end.
                k_hi_cur = k;
                a_hi = mid;
            }
        }
        let _ = (k_lo_cur, k_hi_cur);
    }

    let a_star = 0.5 * (a_lo + a_hi);
    // Final midpoint: long-horizon trapping measurement and backward branch
    // classification.
    let st = family(a_star);
    let mut long = opts.base;
    long.t_max = opts.base.t_max * 2.0;
    let (_, _, traj) = classify_direction(&st, &long, sol)?;
    let trapped_horizon = traj.trapped_horizon(tube);
    let (bwd, _, _) = classify_direction(&st.time_reversed(), &opts.base, sol)?;
    let branch = match bwd {
        Outcome::ScatterToZero => BranchLabel::WPlusLike,
        Outcome::BlowUp { .. } => BranchLabel::WMinusLike,
        _ => BranchLabel::Unresolved,
    };

    // Trapping horizon vs bracket width regression.
    let pts: Vec<(f64, f64)> = log
        .iter()
        .filter(|r| r.t_trap_mid > 0.5)
        .map(|r| (-((r.a_hi - r.a_lo).ln()), r.t_trap_mid))
        .collect();
    let horizon_slope = if pts.len() >= 4 {
        fit_line_slope(&pts)
    } else {
        f64::NAN
    };

    Ok(ShootingResult {
        bracket: (a_lo, a_hi),
        a_star,
        log,
        trapped_horizon,
        branch,
        horizon_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::params::ModelParams;
    use crate::soliton::soliton_profile;
    use crate::spectral::{assemble_l, spectral_measure, LambdaGrid, OperatorKind};

    fn setup() -> (SolitonData, SpectralMeasure) {
        let params = ModelParams::with_exponent(7.0).unwrap();
        let grid = Grid::new(40.0, 1024).unwrap();
        let sol = soliton_profile(&params, &grid).unwrap();
        let op = assemble_l(OperatorKind::Plus, &params, &grid);
        let m = spectral_measure(&op, &LambdaGrid::reduced(400.0)).unwrap();
        (sol, m)
    }

    #[test]
    fn mu_decompose_identities() {
        let (sol, _) = setup();
        let grid = sol.q.grid().clone();
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(&grid));
        let (ms, w) = mu_decompose(&state, &sol);
        assert!(ms.mu.abs() < 1e-12 && ms.mu_dot.abs() < 1e-12);
        assert!(w.norm() < 1e-10);
        let a = 0.01;
        // (Q + aρ, akρ): μ₊ = a, μ₋ = 0.
        let st = StateVec::new(sol.q.axpy(a, &sol.rho), sol.rho.scaled(a * sol.k));
        let (ms, _) = mu_decompose(&st, &sol);
        assert!((ms.mu_plus - a).abs() < 1e-12);
        assert!(ms.mu_minus.abs() < 1e-12);
        // (Q + aρ, −akρ): μ₊ = 0, μ₋ = a.
        let st = StateVec::new(sol.q.axpy(a, &sol.rho), sol.rho.scaled(-a * sol.k));
        let (ms, _) = mu_decompose(&st, &sol);
        assert!(ms.mu_plus.abs() < 1e-12);
        assert!((ms.mu_minus - a).abs() < 1e-12);
        // Consistency μ = μ₊ + μ₋, μ̇ = k(μ₊ − μ₋).
        assert!((ms.mu - (ms.mu_plus + ms.mu_minus)).abs() < 1e-14);
        assert!((ms.mu_dot - sol.k * (ms.mu_plus - ms.mu_minus)).abs() < 1e-12);
    }

    #[test]
    fn trivial_fixed_point_is_q() {
        let (sol, m) = setup();
        let grid = sol.q.grid().clone();
        let w0 = StateVec::zeros(&grid);
        let opts = CsOpts::defaults(sol.k);
        let point = center_stable_solve(&w0, 0.0, &sol, &m, &opts, SolveSeed::FreeFlow).unwrap();
        assert!(point.mu_plus0.abs() < 1e-12, "μ₊(0) = {}", point.mu_plus0);
        assert!(point.residual <= opts.tol);
        let sc = scattering_data(&point, &sol, &m);
        assert!(sc.radiation_energy < 1e-12);
        assert!(
            (sc.total_energy - sol.action_q).abs() <= 1e-9 * sol.action_q,
            "E = {} vs J(Q) = {}",
            sc.total_energy,
            sol.action_q
        );
    }

    #[test]
    fn graph_value_is_quadratic_in_data() {
        let (sol, m) = setup();
        let grid = sol.q.grid().clone();
        let bump_u = EvenField::from_fn(&grid, |x| (-x * x).exp() * (1.0 - 0.3 * x * x));
        let bump_u = bump_u.axpy(-bump_u.inner(&sol.rho), &sol.rho);
        let bump_u = bump_u.scaled(1.0 / bump_u.l2_norm());
        let opts = CsOpts::defaults(sol.k);
        let mut pts = Vec::new();
        for &delta in &[3e-3, 1e-3, 3e-4] {
            let w0 = StateVec::new(bump_u.scaled(delta), EvenField::zeros(&grid));
            let point =
                center_stable_solve(&w0, delta / 2.0, &sol, &m, &opts, SolveSeed::FreeFlow)
                    .unwrap();
            assert!(point.residual <= opts.tol);
            pts.push((delta.ln(), point.mu_plus0.abs().ln()));
        }
        let slope = fit_line_slope(&pts);
        assert!((slope - 2.0).abs() <= 0.2, "tangency slope {slope}");
    }

    #[test]
    fn uniqueness_of_the_fixed_point() {
        let (sol, m) = setup();
        let grid = sol.q.grid().clone();
        let bump = EvenField::from_fn(&grid, |x| (-0.7 * x * x).exp());
        let bump = bump.axpy(-bump.inner(&sol.rho), &sol.rho);
        let w0 = StateVec::new(bump.scaled(3e-3), bump.scaled(-2e-3));
        let opts = CsOpts::defaults(sol.k);
        let a = center_stable_solve(&w0, 2e-3, &sol, &m, &opts, SolveSeed::FreeFlow).unwrap();
        let b = center_stable_solve(&w0, 2e-3, &sol, &m, &opts, SolveSeed::Zero).unwrap();
        let d = solution_distance(&a, &b, &m);
        assert!(d <= 10.0 * opts.tol, "seed disagreement {d}");
    }

    #[test]
    fn tangent_plane_condition() {
        // ⟨k(u₀ − Q) + u₁ | ρ⟩ = 2k μ₊(0) = O(ν²) for converged points.
        let (sol, m) = setup();
        let grid = sol.q.grid().clone();
        let bump = EvenField::from_fn(&grid, |x| x * x * (-x * x).exp());
        let bump = bump.axpy(-bump.inner(&sol.rho), &sol.rho);
        let nu = 5e-3;
        let w0 = StateVec::new(bump.scaled(nu / bump.l2_norm()), EvenField::zeros(&grid));
        let opts = CsOpts::defaults(sol.k);
        let point = center_stable_solve(&w0, nu, &sol, &m, &opts, SolveSeed::FreeFlow).unwrap();
        let initial = point.initial_state(&sol, &m);
        let lhs = (sol.k * (initial.u.inner(&sol.rho) - sol.q.inner(&sol.rho))
            + initial.ud.inner(&sol.rho))
        .abs();
        let expect = (2.0 * sol.k * point.mu_plus0).abs();
        assert!((lhs - expect).abs() <= 1e-8 + 1e-6 * expect, "{lhs} vs {expect}");
        assert!(lhs <= 100.0 * nu * nu, "tangent condition {lhs} vs ν² = {}", nu * nu);
    }
}
