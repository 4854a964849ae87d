//! Trajectory-level classification into blowup / scattering / trapping, the
//! nine-set scan over the two default data families, ejection-rate fits, and
//! the one-pass audit.

use rayon::prelude::*;
use thiserror::Error;

use crate::evolve::{evolve, EvolveOpts, Termination, Trajectory};
use crate::grid::{EvenField, StateVec};
use crate::soliton::SolitonData;
use crate::spectral::fit_line_slope;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no ejection window: d_Q does not grow monotonically through a decade")]
    NoEjectionWindow,
    #[error("integration failed: {0}")]
    Evolve(#[from] crate::evolve::EvolveError),
}

/// Per-time-direction outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    BlowUp { t_star: f64 },
    ScatterToZero,
    TrappedByQ { sigma: f64 },
    Undecided,
}

impl Outcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Outcome::BlowUp { .. } => OutcomeKind::BlowUp,
            Outcome::ScatterToZero => OutcomeKind::Scatter,
            Outcome::TrappedByQ { .. } => OutcomeKind::Trapped,
            Outcome::Undecided => OutcomeKind::Undecided,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::BlowUp { .. } => "blowup",
            Outcome::ScatterToZero => "scatter",
            Outcome::TrappedByQ { .. } => "trapped",
            Outcome::Undecided => "undecided",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    BlowUp,
    Scatter,
    Trapped,
    Undecided,
}

/// Diagnostics attached to one classified direction.
#[derive(Clone, Copy, Debug)]
pub struct ClassifyDiag {
    pub final_d_q: f64,
    pub final_sign: i8,
    /// ∫ over the final window (length 2) of ‖∂ₓu‖₂² dt.
    pub window_grad_integral: f64,
    /// max H¹×L² norm over the final window.
    pub window_norm_max: f64,
    pub trapping_horizon: f64,
    pub t_star: f64,
    pub boundary_contact: bool,
}

/// Classify one finished trajectory (one time direction).
pub fn classify_trajectory(traj: &Trajectory, sol: &SolitonData) -> (Outcome, ClassifyDiag) {
    let th = &sol.params.thresholds;
    let s = &traj.scalars;
    let n = s.len();
    let last = traj.final_scalar();
    let t_end = traj.t_end;

    // Final window of length 2 time units.
    let w_start = s.partition_point(|x| x.t < t_end - 2.0);
    let window = &s[w_start..];
    let window_grad_integral: f64 = window.iter().map(|x| x.grad_sq * traj.dt).sum();
    let window_norm_max = window.iter().map(|x| x.h1l2_norm()).fold(0.0, f64::max);

    // Tail = last quarter of the run.
    let tail = &s[n - n / 4..];
    let diag = |t_star: f64, boundary: bool| ClassifyDiag {
        final_d_q: last.d_q,
        final_sign: last.sign,
        window_grad_integral,
        window_norm_max,
        trapping_horizon: traj.trapped_horizon(th.delta_trap),
        t_star,
        boundary_contact: boundary,
    };

    match &traj.termination {
        Termination::BlowupDetected { t_star } => {
            return (Outcome::BlowUp { t_star: *t_star }, diag(*t_star, false));
        }
        Termination::BoundaryContact { .. } | Termination::NumericalFault { .. } => {
            return (Outcome::Undecided, diag(f64::NAN, true));
        }
        Termination::HorizonReached => {}
    }

    // Trapped: inside the tube for the whole tail.
    if tail.iter().all(|x| x.d_q <= th.delta_trap) {
        let sigma = tail.last().map(|x| x.sigma).unwrap_or(1.0);
        return (Outcome::TrappedByQ { sigma }, diag(f64::NAN, false));
    }

    // Scattering: low-frequency window criterion + bounded norm + stable
    // positive sign over the tail.
    let sign_ok = tail.iter().all(|x| x.sign == 1);
    if window_grad_integral <= th.mu_scatter * th.mu_scatter
        && window_norm_max <= th.m_star
        && sign_ok
    {
        return (Outcome::ScatterToZero, diag(f64::NAN, false));
    }

    (Outcome::Undecided, diag(f64::NAN, false))
}

/// Two-sided classification of a datum: forward, and backward via the
/// velocity-reversed datum.
#[derive(Clone, Debug)]
pub struct Classification {
    pub forward: Outcome,
    pub backward: Outcome,
    pub forward_diag: ClassifyDiag,
    pub backward_diag: ClassifyDiag,
}

/// Evolve and classify both time directions, escalating the horizon
/// (×2, ×4) while the outcome is undecided.
pub fn classify_state(
    state: &StateVec,
    opts: &EvolveOpts,
    sol: &SolitonData,
) -> Result<Classification, ClassifyError> {
    let (forward, forward_diag, _) = classify_direction(state, opts, sol)?;
    let (backward, backward_diag, _) = classify_direction(&state.time_reversed(), opts, sol)?;
    Ok(Classification {
        forward,
        backward,
        forward_diag,
        backward_diag,
    })
}

/// One direction with horizon escalation; returns the final trajectory too.
pub fn classify_direction(
    state: &StateVec,
    opts: &EvolveOpts,
    sol: &SolitonData,
) -> Result<(Outcome, ClassifyDiag, Trajectory), ClassifyError> {
    let mut scale = 1.0;
    loop {
        let mut o = *opts;
        o.t_max = opts.t_max * scale;
        let traj = evolve(state, &o, sol)?;
        let (outcome, diag) = classify_trajectory(&traj, sol);
        if outcome != Outcome::Undecided || scale >= 4.0 || diag.boundary_contact {
            return Ok((outcome, diag, traj));
        }
        scale *= 2.0;
    }
}

/// The two default scan families.
pub fn family_soliton_bump(sol: &SolitonData, a: f64, b: f64) -> StateVec {
    let grid = sol.q.grid();
    let bump = EvenField::from_fn(grid, |x| (-x * x).exp());
    StateVec::new(sol.q.scaled(1.0 + a).axpy(b, &bump), EvenField::zeros(grid))
}

/// Stable-direction family u₀ = Q + aρ, u₁ = −a k ρ.
pub fn family_stable_direction(sol: &SolitonData, a: f64) -> StateVec {
    StateVec::new(
        sol.q.axpy(a, &sol.rho),
        sol.rho.scaled(-a * sol.k),
    )
}

/// Unstable-orientation variant u₀ = Q + aρ, u₁ = +a k ρ.
pub fn family_unstable_direction(sol: &SolitonData, a: f64) -> StateVec {
    StateVec::new(sol.q.axpy(a, &sol.rho), sol.rho.scaled(a * sol.k))
}

/// One scanned datum with both outcomes.
#[derive(Clone, Debug)]
pub struct ScanCell {
    pub family: &'static str,
    pub a: f64,
    pub b: f64,
    pub energy: f64,
    /// E − J(Q), for admissibility auditing.
    pub energy_excess: f64,
    pub forward: Outcome,
    pub backward: Outcome,
    pub t_star_fwd: f64,
    pub t_star_bwd: f64,
    pub final_dq_fwd: f64,
    pub final_dq_bwd: f64,
    pub refined: bool,
    /// This row is the time-reversed reading of another scanned datum.
    pub reversed: bool,
}

/// Scan configuration: grids for the two families.
#[derive(Clone, Debug)]
pub struct ScanSpec {
    pub family1_a: Vec<f64>,
    pub family1_b: Vec<f64>,
    pub family2_a: Vec<f64>,
    /// Bisect forward-outcome changes along family 2 to this width and add
    /// the near-threshold midpoints.
    pub refine_width: f64,
}

impl ScanSpec {
    pub fn default_grids() -> Self {
        let mut f2: Vec<f64> = Vec::new();
        for &m in &[1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.2] {
            f2.push(-m);
            f2.push(m);
        }
        f2.sort_by(f64::total_cmp);
        ScanSpec {
            family1_a: vec![-0.99, -0.6, -0.3, -0.1, -0.03, 0.03, 0.1, 0.3, 0.5],
            family1_b: vec![-0.2, 0.0, 0.2],
            family2_a: f2,
            refine_width: 1e-12,
        }
    }

    /// Denser family-2 grid so the audit ensemble holds ≥ 100 admissible
    /// trajectories.
    pub fn dense_grids() -> Self {
        let mut base = ScanSpec::default_grids();
        let mut f2 = Vec::new();
        let n = 40;
        for i in 0..n {
            let m = 1e-3 * (0.2f64 / 1e-3).powf(i as f64 / (n - 1) as f64);
            f2.push(-m);
            f2.push(m);
        }
        f2.sort_by(f64::total_cmp);
        base.family2_a = f2;
        base
    }
}

/// Scan result: all cells plus the 3×3 outcome matrix (decided kinds only).
#[derive(Clone, Debug)]
pub struct ScanResult {
    pub cells: Vec<ScanCell>,
    pub undecided: usize,
}

impl ScanResult {
    pub fn matrix_counts(&self) -> [[usize; 3]; 3] {
        let mut m = [[0usize; 3]; 3];
        for c in &self.cells {
            if let (Some(i), Some(j)) = (kind_index(c.forward.kind()), kind_index(c.backward.kind()))
            {
                m[i][j] += 1;
            }
        }
        m
    }

    /// A witness cell index per (forward, backward) kind pair.
    pub fn witness(&self, fwd: OutcomeKind, bwd: OutcomeKind) -> Option<&ScanCell> {
        self.cells
            .iter()
            .find(|c| c.forward.kind() == fwd && c.backward.kind() == bwd)
    }

    pub fn nonempty_cell_count(&self) -> usize {
        let m = self.matrix_counts();
        m.iter().flatten().filter(|&&c| c > 0).count()
    }
}

pub fn kind_index(k: OutcomeKind) -> Option<usize> {
    match k {
        OutcomeKind::BlowUp => Some(0),
        OutcomeKind::Scatter => Some(1),
        OutcomeKind::Trapped => Some(2),
        OutcomeKind::Undecided => None,
    }
}

fn scan_one(
    family: &'static str,
    a: f64,
    b: f64,
    state: &StateVec,
    opts: &EvolveOpts,
    sol: &SolitonData,
    refined: bool,
) -> Result<ScanCell, ClassifyError> {
    let e = crate::soliton::energy(state, &sol.params);
    let c = classify_state(state, opts, sol)?;
    Ok(ScanCell {
        family,
        a,
        b,
        energy: e,
        energy_excess: e - sol.action_q,
        forward: c.forward,
        backward: c.backward,
        t_star_fwd: c.forward_diag.t_star,
        t_star_bwd: c.backward_diag.t_star,
        final_dq_fwd: c.forward_diag.final_d_q,
        final_dq_bwd: c.backward_diag.final_d_q,
        refined,
        reversed: false,
    })
}

fn reversed_row(c: &ScanCell) -> ScanCell {
    let mut r = c.clone();
    std::mem::swap(&mut r.forward, &mut r.backward);
    std::mem::swap(&mut r.t_star_fwd, &mut r.t_star_bwd);
    std::mem::swap(&mut r.final_dq_fwd, &mut r.final_dq_bwd);
    r.reversed = true;
    r
}

/// Classify both directions over both default families, bisect forward-
/// outcome transitions along the stable-direction family (and both
/// orientations of it) to surface near-threshold trapped data, and append
/// the time-reversed reading of every datum (its outcomes swap, no new
/// integration needed since backward evolution is forward evolution of the
/// velocity-reversed datum).
pub fn nine_set_scan(
    spec: &ScanSpec,
    opts: &EvolveOpts,
    sol: &SolitonData,
) -> Result<ScanResult, ClassifyError> {
    let mut jobs: Vec<(&'static str, f64, f64, StateVec)> = Vec::new();
    for &a in &spec.family1_a {
        for &b in &spec.family1_b {
            jobs.push(("soliton+bump", a, b, family_soliton_bump(sol, a, b)));
        }
    }
    for &a in &spec.family2_a {
        jobs.push(("stable-dir", a, 0.0, family_stable_direction(sol, a)));
    }

    let mut cells: Vec<ScanCell> = jobs
        .par_iter()
        .map(|(fam, a, b, st)| scan_one(fam, *a, *b, st, opts, sol, false))
        .collect::<Result<_, _>>()?;

    // Self-check: zero-velocity data classify identically both ways.
    for c in cells.iter().filter(|c| c.family == "soliton+bump") {
        debug_assert_eq!(c.forward.kind(), c.backward.kind());
    }

    // Refinement: bisect forward transitions along both orientations of the
    // ρ-direction family.
    for orientation in 0..2 {
        let make = |a: f64| -> StateVec {
            if orientation == 0 {
                family_stable_direction(sol, a)
            } else {
                family_unstable_direction(sol, a)
            }
        };
        let fam: &'static str = if orientation == 0 {
            "stable-dir refined"
        } else {
            "unstable-dir refined"
        };
        let line: Vec<(f64, OutcomeKind)> = if orientation == 0 {
            cells
                .iter()
                .filter(|c| c.family == "stable-dir")
                .map(|c| (c.a, c.forward.kind()))
                .collect()
        } else {
            // Coarse pass for the other orientation.
            let grid: Vec<f64> = vec![-0.1, -1e-3, 1e-3, 0.1];
            let coarse: Vec<(f64, OutcomeKind)> = grid
                .par_iter()
                .map(|&a| {
                    let st = make(a);
                    classify_state(&st, opts, sol).map(|c| (a, c.forward.kind()))
                })
                .collect::<Result<_, _>>()?;
            coarse
        };
        for w in line.windows(2) {
            let ((a0, k0), (a1, k1)) = (w[0], w[1]);
            if k0 == k1 || k0 == OutcomeKind::Undecided || k1 == OutcomeKind::Undecided {
                continue;
            }
            if let Some(cell) =
                bisect_to_trapped(&make, fam, (a0, k0), (a1, k1), spec.refine_width, opts, sol)?
            {
                cells.push(cell);
            }
        }
    }

    // Time-reversed rows.
    let reversed: Vec<ScanCell> = cells.iter().map(reversed_row).collect();
    cells.extend(reversed);

    let undecided = cells
        .iter()
        .filter(|c| c.forward == Outcome::Undecided || c.backward == Outcome::Undecided)
        .count();
    Ok(ScanResult { cells, undecided })
}

fn bisect_to_trapped(
    make: &dyn Fn(f64) -> StateVec,
    family: &'static str,
    lo: (f64, OutcomeKind),
    hi: (f64, OutcomeKind),
    width: f64,
    opts: &EvolveOpts,
    sol: &SolitonData,
) -> Result<Option<ScanCell>, ClassifyError> {
    let (mut a_lo, k_lo) = lo;
    let (mut a_hi, _) = hi;
    while a_hi - a_lo > width {
        let mid = 0.5 * (a_lo + a_hi);
        let st = make(mid);
        let (fwd, _, _) = classify_direction(&st, opts, sol)?;
        match fwd.kind() {
            k if k == k_lo => a_lo = mid,
            OutcomeKind::Trapped => {
                // Done: classify both directions at the trapped midpoint.
                return Ok(Some(scan_one(family, mid, 0.0, &st, opts, sol, true)?));
            }
            OutcomeKind::Undecided => {
                // Could not decide even at the escalated horizon; treat as
                // near-threshold and stop here.
                break;
            }
            _ => a_hi = mid,
        }
    }
    let mid = 0.5 * (a_lo + a_hi);
    let st = make(mid);
    Ok(Some(scan_one(family, mid, 0.0, &st, opts, sol, true)?))
}

/// Exponential ejection-rate fit along the monotone window of d_Q growth.
#[derive(Clone, Debug)]
pub struct EjectionFit {
    /// slope of log d_Q(t)
    pub rate: f64,
    /// slope of log |λ(t)| over the same window
    pub lambda_rate: f64,
    pub window: (f64, f64),
    /// RMS residual of the linear fit in log space.
    pub residual: f64,
    /// Fitted C in |λ₋| + ‖γ⃗‖_E ≤ C (R + e^{2kt} R²) over the window.
    pub remainder_constant: f64,
    /// d_Q grew monotonically through the fit window.
    pub monotone: bool,
}

pub fn ejection_fit(
    traj: &Trajectory,
    sol: &SolitonData,
) -> Result<EjectionFit, ClassifyError> {
    let th = &sol.params.thresholds;
    let s = &traj.scalars;
    let (i_min, d_min) = s
        .iter()
        .enumerate()
        .map(|(i, x)| (i, x.d_q))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(ClassifyError::NoEjectionWindow)?;
    let lo = 4.0 * d_min.max(1e-300);
    let hi = 0.5 * th.delta_x;
    // Maximal monotone increasing stretch from the minimum.
    let mut j = i_min;
    while j + 1 < s.len() && s[j + 1].d_q >= s[j].d_q {
        j += 1;
    }
    let stretch = &s[i_min..=j];
    let window: Vec<&crate::evolve::ScalarSample> = stretch
        .iter()
        .filter(|x| x.d_q >= lo && x.d_q <= hi)
        .collect();
    if window.len() < 8 {
        return Err(ClassifyError::NoEjectionWindow);
    }
    let span = window.last().unwrap().d_q / window[0].d_q;
    if span < 10.0 {
        return Err(ClassifyError::NoEjectionWindow);
    }
    let pts: Vec<(f64, f64)> = window.iter().map(|x| (x.t, x.d_q.ln())).collect();
    let rate = fit_line_slope(&pts);
    let intercept = pts.iter().map(|p| p.1 - rate * p.0).sum::<f64>() / pts.len() as f64;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - rate * p.0 - intercept).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    let lpts: Vec<(f64, f64)> = window
        .iter()
        .filter(|x| x.lambda.abs() > 0.0)
        .map(|x| (x.t, x.lambda.abs().ln()))
        .collect();
    let lambda_rate = fit_line_slope(&lpts);
    // Remainder bound constant.
    let t0 = window[0].t;
    let r = window[0].d_q;
    let k = sol.k;
    let c_fit = window
        .iter()
        .map(|x| {
            (x.lambda_minus.abs() + x.gamma_e)
                / (r + (2.0 * k * (x.t - t0)).exp() * r * r)
        })
        .fold(0.0_f64, f64::max);
    Ok(EjectionFit {
        rate,
        lambda_rate,
        window: (window[0].t, window.last().unwrap().t),
        residual,
        remainder_constant: c_fit,
        monotone: true,
    })
}

/// One-pass audit over an ensemble of trajectories.
#[derive(Clone, Debug)]
pub struct AuditReport {
    pub trajectories: usize,
    pub admissible: usize,
    pub violations: usize,
    /// Closest re-approach to the soliton after the final exit from the
    /// R_* ball, per audited trajectory.
    pub re_approach_minima: Vec<f64>,
    /// Fraction of audited trajectories whose sign is constant after the
    /// final exit.
    pub sign_stable_fraction: f64,
}

pub fn one_pass_audit(trajs: &[&Trajectory], sol: &SolitonData) -> AuditReport {
    let th = &sol.params.thresholds;
    let mut admissible = 0usize;
    let mut violations = 0usize;
    let mut re_approach = Vec::new();
    let mut sign_stable = 0usize;
    let mut sign_total = 0usize;

    for traj in trajs {
        let s = &traj.scalars;
        let e0 = s[0].e;
        let excess = e0 - sol.action_q;
        if excess > th.eps_star * th.eps_star {
            continue;
        }
        if matches!(
            traj.termination,
            Termination::BoundaryContact { .. } | Termination::NumericalFault { .. }
        ) {
            continue;
        }
        admissible += 1;
        let two_eps = 2.0 * excess.max(0.0).sqrt();
        let d: Vec<f64> = s.iter().map(|x| x.d_q).collect();
        let n = d.len();
        // Prefix minima (strictly before each index) and suffix minima
        // (strictly after).
        let mut prefix = vec![f64::INFINITY; n];
        for i in 1..n {
            prefix[i] = prefix[i - 1].min(d[i - 1]);
        }
        let mut suffix = vec![f64::INFINITY; n];
        for i in (0..n.saturating_sub(1)).rev() {
            suffix[i] = suffix[i + 1].min(d[i + 1]);
        }
        let mut violated = false;
        for i in 0..n {
            let r = d[i];
            if r > two_eps && r <= th.r_star && prefix[i] < r && suffix[i] <= r {
                violated = true;
                break;
            }
        }
        if violated {
            violations += 1;
        }
        // Re-approach after the final exit from the R_* ball.
        if let Some(last_inside) = (0..n).rev().find(|&i| d[i] <= th.r_star) {
            if last_inside + 1 < n {
                let m = d[last_inside + 1..]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                re_approach.push(m);
                // Sign stabilization after the final exit.
                let signs: Vec<i8> = s[last_inside + 1..]
                    .iter()
                    .map(|x| x.sign)
                    .filter(|&v| v != 0)
                    .collect();
                if !signs.is_empty() {
                    sign_total += 1;
                    if signs.iter().all(|&v| v == signs[0]) {
                        sign_stable += 1;
                    }
                }
            }
        }
    }
    AuditReport {
        trajectories: trajs.len(),
        admissible,
        violations,
        re_approach_minima: re_approach,
        sign_stable_fraction: if sign_total > 0 {
            sign_stable as f64 / sign_total as f64
        } else {
            1.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::params::ModelParams;
    use crate::soliton::soliton_profile;

    fn setup() -> SolitonData {
        let params = ModelParams::with_exponent(7.0).unwrap();
        let grid = Grid::new(40.0, 1024).unwrap();
        soliton_profile(&params, &grid).unwrap()
    }

    fn opts(sol: &SolitonData, t: f64) -> EvolveOpts {
        let mut o = EvolveOpts::defaults(sol.q.grid(), &sol.params, t);
        o.support_radius = 6.0;
        o
    }

    #[test]
    fn stationary_soliton_is_trapped() {
        let sol = setup();
        let state = StateVec::new(sol.q.clone(), EvenField::zeros(sol.q.grid()));
        let c = classify_state(&state, &opts(&sol, 10.0), &sol).unwrap();
        assert!(matches!(c.forward, Outcome::TrappedByQ { sigma } if sigma == 1.0));
        assert!(matches!(c.backward, Outcome::TrappedByQ { .. }));
    }

    #[test]
    fn small_bump_scatters_both_ways() {
        let sol = setup();
        let state = family_soliton_bump(&sol, -0.99, 0.0);
        let c = classify_state(&state, &opts(&sol, 16.0), &sol).unwrap();
        assert_eq!(c.forward, Outcome::ScatterToZero, "diag {:?}", c.forward_diag);
        assert_eq!(c.backward, Outcome::ScatterToZero);
    }

    #[test]
    fn oversized_soliton_blows_up_both_ways() {
        let sol = setup();
        let state = family_soliton_bump(&sol, 0.5, 0.0);
        let c = classify_state(&state, &opts(&sol, 16.0), &sol).unwrap();
        assert!(matches!(c.forward, Outcome::BlowUp { .. }));
        assert!(matches!(c.backward, Outcome::BlowUp { .. }));
    }

    #[test]
    fn ejection_rate_matches_k() {
        let sol = setup();
        for a in [1e-3, -1e-3, 3e-3] {
            let state = family_unstable_direction(&sol, a);
            let (_, _, traj) = classify_direction(&state, &opts(&sol, 12.0), &sol).unwrap();
            let fit = ejection_fit(&traj, &sol).unwrap();
            assert!(
                (fit.rate - sol.k).abs() <= 0.05 * sol.k,
                "a={a}: rate {} vs k {}",
                fit.rate,
                sol.k
            );
            assert!((fit.lambda_rate - sol.k).abs() <= 0.08 * sol.k);
            assert!(fit.remainder_constant.is_finite());
        }
    }

    #[test]
    fn stable_direction_ejects_late() {
        // Small stable-direction data show no early ejection window on a
        // short horizon, then eject at rate ≈ k on a longer one.
        let sol = setup();
        let a = 1e-3;
        let state = family_stable_direction(&sol, a);
        let short = evolve(&state, &opts(&sol, 1.5), &sol).unwrap();
        assert!(matches!(ejection_fit(&short, &sol), Err(ClassifyError::NoEjectionWindow)));
        let (_, _, long) = classify_direction(&state, &opts(&sol, 14.0), &sol).unwrap();
        let fit = ejection_fit(&long, &sol).unwrap();
        assert!((fit.rate - sol.k).abs() <= 0.1 * sol.k, "late rate {}", fit.rate);
    }

    #[test]
    fn audit_flags_no_violations_on_small_scan() {
        let sol = setup();
        let o = opts(&sol, 12.0);
        let mut trajs = Vec::new();
        for a in [-0.3, -0.1, 0.05, 0.2] {
            let st = family_soliton_bump(&sol, a, 0.0);
            let (_, _, t1) = classify_direction(&st, &o, &sol).unwrap();
            trajs.push(t1);
        }
        for a in [-1e-3, 1e-3, -1e-2, 1e-2] {
            let st = family_stable_direction(&sol, a);
            let (_, _, t1) = classify_direction(&st, &o, &sol).unwrap();
            trajs.push(t1);
        }
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let rep = one_pass_audit(&refs, &sol);
        assert!(rep.admissible >= 6, "admissible {}", rep.admissible);
        assert_eq!(rep.violations, 0);
        assert!(rep.sign_stable_fraction == 1.0);
        for m in &rep.re_approach_minima {
            assert!(*m > sol.params.thresholds.r_star);
        }
    }

    #[test]
    fn sigma_flip_equivariance() {
        let sol = setup();
        let state = family_soliton_bump(&sol, 0.5, 0.0);
        let flipped = state.scaled(-1.0);
        let o = opts(&sol, 12.0);
        let c1 = classify_state(&state, &o, &sol).unwrap();
        let c2 = classify_state(&flipped, &o, &sol).unwrap();
        assert_eq!(c1.forward.kind(), c2.forward.kind());
        // Trapped outcomes flip σ.
        let st = StateVec::new(sol.q.clone(), EvenField::zeros(sol.q.grid()));
        let cf = classify_state(&st.scaled(-1.0), &o, &sol).unwrap();
        assert!(matches!(cf.forward, Outcome::TrappedByQ { sigma } if sigma == -1.0));
    }
}
