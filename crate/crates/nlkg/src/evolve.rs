//! Time integration of the full nonlinear equation by Strang splitting with
//! exact linear Klein-Gordon flow in the cosine basis, plus the scalar
//! series, blowup detection, and the convexity/virial monitors.

use thiserror::Error;

use crate::grid::{EvenField, Grid, StateVec};
use crate::params::ModelParams;
use crate::soliton::{
    self, cutoff_chi, decompose_with_energy, energy, k_functionals, nonlinearity, SolitonData,
};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("time step {dt} violates the dt <= 0.5 h guard (h = {h})")]
    CflViolation { dt: f64, h: f64 },
    #[error("horizon {t_max} + support radius {support} exceeds L - 5 = {limit}")]
    LightConeGuard { t_max: f64, support: f64, limit: f64 },
}

/// Integration options.
#[derive(Clone, Copy, Debug)]
pub struct EvolveOpts {
    pub dt: f64,
    pub t_max: f64,
    /// Amplitude cap B_max; crossing it (with confirmed growth) is blowup.
    pub blowup_cap: f64,
    /// Snapshot stride in time units.
    pub record_every: f64,
    pub light_cone_guard: bool,
    /// Declared support radius of the data for the light-cone bookkeeping.
    pub support_radius: f64,
}

impl EvolveOpts {
    /// Conservative defaults: dt = h/4, amplitude cap 50 α, snapshots every
    /// 0.5 time units.
    pub fn defaults(grid: &Grid, params: &ModelParams, t_max: f64) -> Self {
        EvolveOpts {
            dt: 0.25 * grid.spacing(),
            t_max,
            blowup_cap: 50.0 * params.alpha,
            record_every: 0.5,
            light_cone_guard: true,
            support_radius: 10.0,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), EvolveError> {
        if self.dt > 0.5 * grid.spacing() {
            return Err(EvolveError::CflViolation {
                dt: self.dt,
                h: grid.spacing(),
            });
        }
        if self.light_cone_guard {
            let limit = grid.half_length() - 5.0;
            if self.t_max + self.support_radius > limit {
                return Err(EvolveError::LightConeGuard {
                    t_max: self.t_max,
                    support: self.support_radius,
                    limit,
                });
            }
        }
        Ok(())
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    HorizonReached,
    BlowupDetected { t_star: f64 },
    BoundaryContact { t: f64 },
    NumericalFault { t: f64, reason: String },
}

/// Scalar series sample, recorded every step.
#[derive(Clone, Copy, Debug)]
pub struct ScalarSample {
    pub t: f64,
    pub e: f64,
    pub j_u: f64,
    pub k0: f64,
    pub k2: f64,
    pub d_q: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// ‖γ⃗‖_E = (½(⟨L₊γ|γ⟩ + ‖γ̇‖²))^{1/2}
    pub gamma_e: f64,
    /// 𝔖 where defined, else 0.
    pub sign: i8,
    /// y = ‖u‖₂²
    pub y: f64,
    pub u_h1_sq: f64,
    pub ud_l2_sq: f64,
    pub grad_sq: f64,
    /// running ∫₀ᵗ ‖u(s)‖^p_{L^{2p}} ds
    pub strichartz_acc: f64,
    pub max_abs: f64,
}

impl ScalarSample {
    pub fn h1l2_norm(&self) -> f64 {
        (self.u_h1_sq + self.ud_l2_sq).sqrt()
    }
}

/// A completed run: strided snapshots plus the dense scalar series.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scalars: Vec<ScalarSample>,
    pub snapshots: Vec<(f64, StateVec)>,
    pub termination: Termination,
    pub dt: f64,
    pub t_end: f64,
}

impl Trajectory {
    pub fn final_scalar(&self) -> &ScalarSample {
        self.scalars.last().expect("trajectory has samples")
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.scalars[0].e;
        self.scalars
            .iter()
            .map(|s| (s.e - e0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest t with d_Q ≤ tube on all of [0, t]; the trapping horizon.
    pub fn trapped_horizon(&self, tube: f64) -> f64 {
        let mut t = 0.0;
        for s in &self.scalars {
            if s.d_q <= tube {
                t = s.t;
            } else {
                break;
            }
        }
        t
    }
}

/// One Strang step: half nonlinear kick, exact linear flow, half kick.
pub fn step_strang(state: &StateVec, dt: f64, params: &ModelParams) -> StateVec {
    step_with(state, dt, params, true)
}

/// Exact free Klein-Gordon flow (the linear part alone); the zero-
/// nonlinearity test hook.
pub fn step_free_kg(state: &StateVec, dt: f64) -> StateVec {
    step_with(state, dt, &free_params(), false)
}

fn free_params() -> ModelParams {
    ModelParams::with_exponent(7.0).expect("static exponent")
}

fn step_with(state: &StateVec, dt: f64, params: &ModelParams, nonlinear: bool) -> StateVec {
    let grid = state.grid().clone();
    let mut u = state.u.values().to_vec();
    let mut ud = state.ud.values().to_vec();
    let half = 0.5 * dt;
    if nonlinear {
        kick(&mut ud, &u, half, params);
    }
    // Exact linear rotation in the cosine basis.
    let (mut cu, mut cv) = grid.dct2_pair(&u, &ud);
    for k in 0..grid.len() {
        let xi = grid.cosine_freq(k);
        let w = (1.0 + xi * xi).sqrt();
        let (sn, cs) = (dt * w).sin_cos();
        let a = cu[k];
        let b = cv[k];
        cu[k] = cs * a + sn / w * b;
        cv[k] = -w * sn * a + cs * b;
    }
    let (u2, ud2) = grid.dct3_pair(&cu, &cv);
    u = u2;
    ud = ud2;
    if nonlinear {
        kick(&mut ud, &u, half, params);
    }
    StateVec::new(
        EvenField::from_samples(&grid, u),
        EvenField::from_samples(&grid, ud),
    )
}

fn kick(ud: &mut [f64], u: &[f64], tau: f64, params: &ModelParams) {
    let p = params.p;
    let pi = p as i32;
    if pi as f64 == p && pi % 2 == 1 {
        for (v, &x) in ud.iter_mut().zip(u) {
            *v += tau * x.powi(pi);
        }
    } else {
        for (v, &x) in ud.iter_mut().zip(u) {
            if x != 0.0 {
                *v += tau * x.signum() * x.abs().powf(p);
            }
        }
    }
}

/// ∫ |u|^{p+1} with the even-integer fast path.
fn lp1(u: &[f64], grid: &Grid, params: &ModelParams) -> f64 {
    let q = params.p + 1.0;
    let qi = q as i32;
    let s: f64 = if qi as f64 == q && qi % 2 == 0 {
        u.iter().map(|&v| v.powi(qi)).sum()
    } else {
        u.iter().map(|&v| v.abs().powf(q)).sum()
    };
    2.0 * grid.spacing() * s
}

/// ‖u(s)‖_{L^{2p}}^p = (∫|u|^{2p})^{1/2}
fn strichartz_density(u: &[f64], grid: &Grid, params: &ModelParams) -> f64 {
    let q = 2.0 * params.p;
    let qi = q as i32;
    let s: f64 = if qi as f64 == q {
        u.iter().map(|&v| (v * v).powi(qi / 2)).sum()
    } else {
        u.iter().map(|&v| v.abs().powf(q)).sum()
    };
    (2.0 * grid.spacing() * s).sqrt()
}

fn record(
    t: f64,
    state: &StateVec,
    sol: &SolitonData,
    strichartz_acc: f64,
) -> ScalarSample {
    let params = &sol.params;
    let grid = state.grid();
    let energies = state.u.spectral_energies();
    let mut u_h1_sq = 0.0;
    let mut grad = 0.0;
    for (m, &pm) in energies.iter().enumerate() {
        let xi = grid.cosine_freq(m);
        u_h1_sq += (1.0 + xi * xi) * pm;
        grad += xi * xi * pm;
    }
    let lp1_int = lp1(state.u.values(), grid, params);
    let ud_l2_sq = state.ud.l2_norm().powi(2);
    let e = 0.5 * (u_h1_sq + ud_l2_sq) - lp1_int / (params.p + 1.0);
    let j_u = 0.5 * u_h1_sq - lp1_int / (params.p + 1.0);
    let k0 = u_h1_sq - lp1_int;
    let k2 = grad - 0.5 * (params.p - 1.0) / (params.p + 1.0) * lp1_int;
    let dec = decompose_with_energy(state, sol, None, e).expect("decomposition");
    let th = &params.thresholds;
    let sgn = |x: f64| if x < 0.0 { -1i8 } else { 1i8 };
    let near_sign = sgn(-dec.lambda);
    let far_scale = 1e-12 * u_h1_sq.max(1e-30);
    let far_sign = {
        let s0 = if k0.abs() <= far_scale { 1 } else { sgn(k0) };
        let s2 = if k2.abs() <= far_scale { 1 } else { sgn(k2) };
        if s0 == s2 {
            Some(s0)
        } else {
            None
        }
    };
    let sign = if dec.dist <= th.delta_e && dec.dist < th.delta_star {
        near_sign
    } else if dec.dist > th.delta_e {
        far_sign.unwrap_or(0)
    } else {
        match far_sign {
            Some(f) if f == near_sign => f,
            _ => 0,
        }
    };
    ScalarSample {
        t,
        e,
        j_u,
        k0,
        k2,
        d_q: dec.dist,
        sigma: dec.sigma,
        lambda: dec.lambda,
        lambda_plus: dec.lambda_plus,
        lambda_minus: dec.lambda_minus,
        gamma_e: (0.5 * (dec.gamma_quad.max(0.0) + dec.gamma_dot.l2_norm().powi(2))).sqrt(),
        sign,
        y: state.u.l2_norm().powi(2),
        u_h1_sq,
        ud_l2_sq,
        grad_sq: grad,
        strichartz_acc,
        max_abs: state.u.max_abs(),
    }
}

/// Quadratic energy fraction beyond `from_x`.
fn tail_energy_fraction(state: &StateVec, from_x: f64) -> f64 {
    let grid = state.grid();
    let du = state.u.derivative();
    let mut tail = 0.0;
    let mut total = 0.0;
    for (j, &x) in grid.nodes().iter().enumerate() {
        let d = 0.5
            * (state.ud.values()[j].powi(2)
                + du.values()[j].powi(2)
                + state.u.values()[j].powi(2));
        total += d;
        if x > from_x {
            tail += d;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Drive the Strang stepper, recording scalars each step and snapshots each
/// stride; halts on confirmed blowup (with dt/4 refinement of t*), boundary
/// contact, or the horizon.
pub fn evolve(state0: &StateVec, opts: &EvolveOpts, sol: &SolitonData) -> Result<Trajectory, EvolveError> {
    let grid = state0.grid().clone();
    opts.validate(&grid)?;
    let params = sol.params;
    let dt = opts.dt;
    let n_steps = (opts.t_max / dt).ceil() as usize;
    let snap_stride = (opts.record_every / dt).round().max(1.0) as usize;

    let mut scalars = Vec::with_capacity(n_steps + 1);
    let mut snapshots = Vec::new();
    let mut state = state0.clone();
    let mut acc = 0.0;
    scalars.push(record(0.0, &state, sol, acc));
    snapshots.push((0.0, state.clone()));

    let mut termination = Termination::HorizonReached;
    let mut t = 0.0;
    for step in 1..=n_steps {
        let prev = state.clone();
        state = step_strang(&state, dt, &params);
        t = step as f64 * dt;
        acc += dt * strichartz_density(state.u.values(), &grid, &params);
        let max_abs = state.u.max_abs();
        if !max_abs.is_finite() || max_abs > opts.blowup_cap {
            // Confirm genuine focusing: the amplitude series must have been
            // growing; a bare cap crossing is a numerical fault.
            let lookback = 20.min(scalars.len());
            let window = &scalars[scalars.len() - lookback..];
            let growing = window.windows(2).filter(|w| w[1].max_abs >= w[0].max_abs).count()
                >= lookback.saturating_sub(1) * 3 / 4;
            if growing {
                let t_star = refine_blowup_time(&prev, t - dt, dt, opts.blowup_cap, &params);
                termination = Termination::BlowupDetected { t_star };
            } else {
                termination = Termination::NumericalFault {
                    t,
                    reason: "amplitude cap crossed without monotone growth".into(),
                };
            }
            break;
        }
        scalars.push(record(t, &state, sol, acc));
        if step % snap_stride == 0 {
            snapshots.push((t, state.clone()));
            let tail = tail_energy_fraction(&state, grid.half_length() - 5.0);
            if opts.light_cone_guard && tail > 1e-8 {
                termination = Termination::BoundaryContact { t };
                break;
            }
        }
    }
    Ok(Trajectory {
        scalars,
        snapshots,
        termination,
        dt,
        t_end: t,
    })
}

/// Sharpen the blowup time from the last stable state: re-run the final
/// window with dt/4, up to three refinements; t* is the midpoint of the
/// last stable/overflow pair.
fn refine_blowup_time(
    last_stable: &StateVec,
    t0: f64,
    dt: f64,
    cap: f64,
    params: &ModelParams,
) -> f64 {
    let mut base_state = last_stable.clone();
    let mut base_t = t0;
    let mut step = dt;
    let mut t_star = t0 + 0.5 * dt;
    for _ in 0..3 {
        step /= 4.0;
        let mut s = base_state.clone();
        let mut t = base_t;
        // March at the finer step until overflow (bounded window).
        let mut overflowed = false;
        for _ in 0..4000 {
            let next = step_strang(&s, step, params);
            let m = next.u.max_abs();
            if !m.is_finite() || m > cap {
                t_star = t + 0.5 * step;
                overflowed = true;
                break;
            }
            s = next;
            t += step;
        }
        if !overflowed {
            // The finer run did not overflow in-window; keep the previous
            // estimate.
            break;
        }
        base_state = s;
        base_t = t;
    }
    t_star
}

/// Payne-Sattinger convexity report along a trajectory.
#[derive(Clone, Debug)]
pub struct ConvexityReport {
    /// max |ÿ − 2(‖u̇‖² − K₀)| over interior samples.
    pub identity_defect: f64,
    /// max |ÿ| (scale for the defect).
    pub max_ydd: f64,
    /// max |ÿ − [(p+3)‖u̇‖² + (p−1)‖u‖²_{H¹} − 2(p+1)E]| (the energy-
    /// substituted form of the same identity).
    pub energy_form_defect: f64,
    /// Fraction of the final quarter with ÿ ≥ 2p‖u̇‖² (the convexity
    /// certificate the blowup argument uses).
    pub convex_tail_fraction: f64,
    /// ÿ at the last interior sample.
    pub final_ydd: f64,
}

/// Differentiate y(t) = ‖u‖₂² twice (centered differences on the dense
/// series) and compare with the flow identities.
pub fn payne_sattinger_monitor(traj: &Trajectory, params: &ModelParams) -> ConvexityReport {
    let s = &traj.scalars;
    let dt = traj.dt;
    let mut identity_defect = 0.0_f64;
    let mut energy_form_defect = 0.0_f64;
    let mut max_ydd = 0.0_f64;
    let mut final_ydd = 0.0;
    let n = s.len();
    let tail_start = n - n / 4;
    let mut convex = 0usize;
    let mut tail_count = 0usize;
    for i in 1..n.saturating_sub(1) {
        let ydd = (s[i + 1].y - 2.0 * s[i].y + s[i - 1].y) / (dt * dt);
        let rhs = 2.0 * (s[i].ud_l2_sq - s[i].k0);
        identity_defect = identity_defect.max((ydd - rhs).abs());
        let rhs_energy = (params.p + 3.0) * s[i].ud_l2_sq + (params.p - 1.0) * s[i].u_h1_sq
            - 2.0 * (params.p + 1.0) * s[i].e;
        energy_form_defect = energy_form_defect.max((ydd - rhs_energy).abs());
        max_ydd = max_ydd.max(ydd.abs());
        final_ydd = ydd;
        if i >= tail_start {
            tail_count += 1;
            if ydd >= 2.0 * params.p * s[i].ud_l2_sq - 1e-6 * (1.0 + ydd.abs()) {
                convex += 1;
            }
        }
    }
    ConvexityReport {
        identity_defect,
        max_ydd,
        energy_form_defect,
        convex_tail_fraction: if tail_count > 0 {
            convex as f64 / tail_count as f64
        } else {
            0.0
        },
        final_ydd,
    }
}

/// Virial functional V_w = ⟨w u̇ | (x∂ₓ + ∂ₓx) u⟩ with a smoothstep cutoff
/// equal to 1 on |x| ≤ R_v and 0 beyond 2 R_v.
pub fn virial_functional(state: &StateVec, r_v: f64) -> f64 {
    let grid = state.grid();
    let du = state.u.derivative();
    let mut acc = 0.0;
    for (j, &x) in grid.nodes().iter().enumerate() {
        let w = cutoff_chi(x / r_v);
        // (x∂ₓ + ∂ₓx) u = 2x u′ + u
        acc += w * state.ud.values()[j] * (2.0 * x * du.values()[j] + state.u.values()[j]);
    }
    2.0 * grid.spacing() * acc
}

/// Virial monitor: dV_w/dt (centered difference along a short evolution)
/// against −K₂, with the exterior energy fraction beyond R_v reported.
pub struct VirialReport {
    pub v_w: f64,
    pub dv_dt: f64,
    pub k2: f64,
    pub defect: f64,
    pub exterior_energy_fraction: f64,
}

pub fn virial_monitor(
    state: &StateVec,
    r_v: f64,
    sol: &SolitonData,
    probe_dt: f64,
) -> VirialReport {
    let params = &sol.params;
    let fwd = step_strang(state, probe_dt, params);
    let bwd = step_strang(state, -probe_dt, params);
    let v_w = virial_functional(state, r_v);
    let dv_dt = (virial_functional(&fwd, r_v) - virial_functional(&bwd, r_v)) / (2.0 * probe_dt);
    let (_, k2) = k_functionals(&state.u, params);
    VirialReport {
        v_w,
        dv_dt,
        k2,
        defect: (dv_dt + k2).abs(),
        exterior_energy_fraction: tail_energy_fraction(state, r_v),
    }
}

/// Energy via the cached soliton parameters; convenience re-export.
pub fn state_energy(state: &StateVec, sol: &SolitonData) -> f64 {
    energy(state, &sol.params)
}

/// The nonlinearity of the full equation (re-exported for drivers).
pub fn full_nonlinearity(u: &EvenField, params: &ModelParams) -> EvenField {
    nonlinearity(u, params)
}

/// Distance helper on states (decomposition distance to ±(Q,0)).
pub fn state_distance(state: &StateVec, sol: &SolitonData) -> f64 {
    soliton::distance_to_soliton(state, sol).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton::soliton_profile;
    use crate::spectral::fit_line_slope;

    fn setup(n: usize) -> (ModelParams, SolitonData) {
        let params = ModelParams::with_exponent(7.0).unwrap();
        let grid = Grid::new(40.0, n).unwrap();
        (params, soliton_profile(&params, &grid).unwrap())
    }

    fn bump_state(grid: &Grid, amp: f64) -> StateVec {
        StateVec::new(
            EvenField::from_fn(grid, |x| amp * (-x * x).exp()),
            EvenField::zeros(grid),
        )
    }

    #[test]
    fn free_flow_conserves_energy_exactly() {
        let (_, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        let mut state = bump_state(&grid, 0.5);
        let quad = |s: &StateVec| 0.5 * (s.u.h1_norm().powi(2) + s.ud.l2_norm().powi(2));
        let e0 = quad(&state);
        for _ in 0..2000 {
            state = step_free_kg(&state, 0.01);
        }
        assert!((quad(&state) - e0).abs() <= 1e-12 * e0);
    }

    #[test]
    fn step_is_time_reversible() {
        let (params, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        let state = bump_state(&grid, 0.8);
        let dt = 0.2 * grid.spacing();
        let forward = step_strang(&state, dt, &params);
        let back = step_strang(&forward, -dt, &params);
        let du = back.u.axpy(-1.0, &state.u).l2_norm() / state.u.l2_norm();
        let dv = back.ud.axpy(-1.0, &state.ud).l2_norm().max(1e-300);
        assert!(du <= 1e-10, "position defect {du}");
        assert!(dv <= 1e-10 * state.u.l2_norm());
    }

    #[test]
    fn self_convergence_is_second_order() {
        let (params, sol) = setup(512);
        let grid = sol.q.grid().clone();
        let state0 = bump_state(&grid, 0.6);
        let t_final = 1.0;
        let run = |dt: f64| {
            let mut s = state0.clone();
            let n = (t_final / dt).round() as usize;
            for _ in 0..n {
                s = step_strang(&s, dt, &params);
            }
            s
        };
        let reference = run(0.0005);
        let mut pts = Vec::new();
        for &dt in &[0.008, 0.004, 0.002] {
            let err = run(dt).u.axpy(-1.0, &reference.u).l2_norm();
            pts.push((dt.ln(), err.ln()));
        }
        let slope = fit_line_slope(&pts);
        assert!((slope - 2.0).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn soliton_is_stationary() {
        let (_, sol) = setup(2048);
        let grid = sol.q.grid().clone();
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(&grid));
        let mut opts = EvolveOpts::defaults(&grid, &sol.params, 20.0);
        opts.support_radius = 8.0;
        let traj = evolve(&state, &opts, &sol).unwrap();
        assert_eq!(traj.termination, Termination::HorizonReached);
        let max_dq = traj.scalars.iter().map(|s| s.d_q).fold(0.0, f64::max);
        assert!(max_dq <= 1e-4, "d_Q drift {max_dq}");
        assert!(traj.energy_drift() <= 1e-6 * (1.0 + traj.scalars[0].e.abs()));
    }

    #[test]
    fn small_data_disperses() {
        let (_, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        let state = bump_state(&grid, 0.01);
        let mut opts = EvolveOpts::defaults(&grid, &sol.params, 25.0);
        opts.support_radius = 8.0;
        let traj = evolve(&state, &opts, &sol).unwrap();
        assert_eq!(traj.termination, Termination::HorizonReached);
        let h1_max = traj
            .scalars
            .iter()
            .map(|s| s.u_h1_sq.sqrt())
            .fold(0.0, f64::max);
        assert!(h1_max < 0.1);
        // Local norm decays.
        let w0 = traj.snapshots[0].1.u.weighted_l2(1.0);
        let w_end = traj.snapshots.last().unwrap().1.u.weighted_l2(1.0);
        assert!(w_end < 0.2 * w0, "weighted norm {w0} -> {w_end}");
        assert!(traj.energy_drift() <= 1e-6 * (1.0 + traj.scalars[0].e.abs()));
    }

    #[test]
    fn supercritical_soliton_blows_up() {
        let (_, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        let state = StateVec::new(sol.q.scaled(1.5), EvenField::zeros(&grid));
        let opts = EvolveOpts::defaults(&grid, &sol.params, 20.0);
        let traj = evolve(&state, &opts, &sol).unwrap();
        match traj.termination {
            Termination::BlowupDetected { t_star } => {
                assert!(t_star > 0.0 && t_star < 20.0, "t* = {t_star}");
            }
            ref other => panic!("expected blowup, got {other:?}"),
        }
        // K₀(1.5 Q) < 0 (consistency with the convexity mechanism).
        let (k0, _) = k_functionals(&state.u, &sol.params);
        assert!(k0 < 0.0);
    }

    #[test]
    fn time_reversal_roundtrip_on_trajectory() {
        let (params, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        let state0 = StateVec::new(
            EvenField::from_fn(&grid, |x| 0.3 * (-(x - 1.0) * (x - 1.0)).exp()),
            EvenField::from_fn(&grid, |x| 0.1 * (-x * x).exp()),
        );
        let dt = 0.25 * grid.spacing();
        let n = 2000;
        let mut s = state0.clone();
        for _ in 0..n {
            s = step_strang(&s, dt, &params);
        }
        s = s.time_reversed();
        for _ in 0..n {
            s = step_strang(&s, dt, &params);
        }
        let expect = state0.time_reversed();
        let du = s.u.axpy(-1.0, &expect.u).l2_norm();
        let dv = s.ud.axpy(-1.0, &expect.ud).l2_norm();
        let scale = expect.norm();
        assert!(du + dv <= 1e-8 * scale.max(1.0), "roundtrip {du} {dv}");
    }

    #[test]
    fn light_cone_tail_stays_empty() {
        let (_, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        let state = StateVec::new(
            EvenField::from_fn(&grid, |x| 0.4 * (-2.0 * (x - 3.0) * (x - 3.0)).exp()),
            EvenField::zeros(&grid),
        );
        let mut opts = EvolveOpts::defaults(&grid, &sol.params, 10.0);
        opts.support_radius = 9.0;
        let traj = evolve(&state, &opts, &sol).unwrap();
        assert_eq!(traj.termination, Termination::HorizonReached);
        for (t, snap) in &traj.snapshots {
            let frac = tail_energy_fraction(snap, 9.0 + t + 5.0);
            assert!(frac <= 1e-8, "t={t}: cone leak {frac}");
        }
    }

    #[test]
    fn payne_sattinger_identities() {
        let (params, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        // Static Q: ÿ ≈ 0 and 2(‖u̇‖² − K₀) = 0.
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(&grid));
        let opts = EvolveOpts::defaults(&grid, &sol.params, 5.0);
        let traj = evolve(&state, &opts, &sol).unwrap();
        let rep = payne_sattinger_monitor(&traj, &params);
        assert!(rep.identity_defect <= 1e-6, "static defect {}", rep.identity_defect);
        // Blowup run: y convex with ÿ > 0 near the end, identity tight.
        let state = StateVec::new(sol.q.scaled(1.5), EvenField::zeros(&grid));
        let traj = evolve(&state, &opts, &sol).unwrap();
        assert!(matches!(traj.termination, Termination::BlowupDetected { .. }));
        let rep = payne_sattinger_monitor(&traj, &params);
        assert!(rep.final_ydd > 0.0);
        assert!(rep.convex_tail_fraction > 0.9, "convex fraction {}", rep.convex_tail_fraction);
        assert!(
            rep.identity_defect <= 1e-4 * rep.max_ydd,
            "defect {} vs scale {}",
            rep.identity_defect,
            rep.max_ydd
        );
        assert!(
            rep.energy_form_defect <= 1e-4 * rep.max_ydd,
            "energy-form defect {}",
            rep.energy_form_defect
        );
    }

    #[test]
    fn virial_monitor_behaviour() {
        let (_, sol) = setup(1024);
        let grid = sol.q.grid().clone();
        // Static soliton: u̇ = 0 so V_w = 0.
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(&grid));
        let rep = virial_monitor(&state, 8.0, &sol, 1e-3);
        assert!(rep.v_w.abs() < 1e-12);
        // Localized pulse well inside the cutoff: dV/dt ≈ −K₂.
        let pulse = StateVec::new(
            EvenField::from_fn(&grid, |x| 0.8 * (-2.0 * x * x).exp()),
            EvenField::from_fn(&grid, |x| 0.2 * (-2.0 * x * x).exp()),
        );
        let rep8 = virial_monitor(&pulse, 8.0, &sol, 1e-3);
        assert!(
            rep8.defect <= 0.05 * rep8.k2.abs(),
            "defect {} vs K2 {}",
            rep8.defect,
            rep8.k2
        );
        // Doubling the cutoff radius does not hurt (and usually helps).
        let rep16 = virial_monitor(&pulse, 16.0, &sol, 1e-3);
        assert!(rep16.defect <= rep8.defect * 1.5 + 1e-12);
        assert!(rep16.exterior_energy_fraction < 1e-10);
    }
}
