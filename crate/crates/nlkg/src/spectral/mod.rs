//! Spectral theory of the linearized operators: Schrödinger operators on the
//! line, eigenpairs, Jost solutions and resonance detection, the diagonal
//! spectral measure with its distorted Fourier transform, Klein-Gordon
//! propagation in the distorted frame, the local-decay probe, and the
//! first-order intertwining operator.

mod intertwine;
mod jost;
mod measure;
mod prop;

pub use intertwine::{intertwine_adjoint, intertwine_defect, intertwine_u, q_derivative_constant};
pub use jost::{
    jost_solution, resonance_check, resonance_check_refined, resonance_check_with,
    zero_energy_solutions, JostData, RefinedResonanceReport, ResonanceReport, ZeroEnergyPair,
};
pub use measure::{
    distorted_ft, fit_line_slope, inverse_distorted_ft, spectral_measure, DistortedCoeffs,
    LambdaGrid, SpectralMeasure,
};
pub(crate) use measure::project;
pub use prop::{kg_propagate, local_decay_ratio, quadratic_energy, DecayProbe, Propagated};

use crate::grid::{EvenField, Grid, OddField};
use crate::params::ModelParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("operator has no negative eigenvalue in the even sector (bottom = {bottom})")]
    NoNegativeEigenvalue { bottom: f64 },
    #[error("eigensolve failed to converge: {0}")]
    EigNonConvergence(String),
    #[error("Volterra iteration failed to contract (potential tail too heavy for this domain)")]
    VolterraNonConvergence,
    #[error("spectral quadrature under-resolved: Parseval defect {defect:.3e} exceeds {tol:.1e}")]
    QuadratureUnderResolved { defect: f64, tol: f64 },
}

/// Which linearized operator to assemble, as 𝓛 = L± − 1 = −∂ₓₓ + V.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    /// V = −p Q^{p−1}; 𝓛 + 1 = L₊, the linearization at Q.
    Plus,
    /// V = −Q^{p−1}; 𝓛 + 1 = L₋, the companion operator with L₋Q = 0.
    Minus,
    /// An explicit even potential.
    Custom(EvenField),
}

/// A Schrödinger operator 𝓛 = −d²/dx² + V with even, rapidly decaying V,
/// applied spectrally (cosine or sine multiplier plus pointwise product).
#[derive(Clone, Debug)]
pub struct SchrodingerOp {
    potential: EvenField,
    tag: String,
}

impl SchrodingerOp {
    pub fn new(potential: EvenField, tag: impl Into<String>) -> Self {
        SchrodingerOp {
            potential,
            tag: tag.into(),
        }
    }

    pub fn potential(&self) -> &EvenField {
        &self.potential
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    /// sup over x > L/2 of |V(x)| e^{x − L/2}; finite and small means the
    /// potential tail is adequately truncated on this domain.
    pub fn tail_constant(&self) -> f64 {
        let grid = self.grid();
        let half = 0.5 * grid.half_length();
        grid.nodes()
            .iter()
            .zip(self.potential.values())
            .filter(|(&x, _)| x > half)
            .map(|(&x, &v)| v.abs() * (x - half).min(700.0).exp())
            .fold(0.0_f64, f64::max)
    }

    /// ‖V‖_{L¹(ℝ)}
    pub fn potential_l1(&self) -> f64 {
        self.grid()
            .integrate_even(&self.potential.values().iter().map(|v| v.abs()).collect::<Vec<_>>())
    }

    /// 𝓛 f for even f.
    pub fn apply_even(&self, f: &EvenField) -> EvenField {
        f.neg_laplacian().axpy(1.0, &self.potential.mul_pointwise(f))
    }

    /// 𝓛 g for odd g (sine-basis Laplacian; parity splitting is exact for
    /// even V).
    pub fn apply_odd(&self, g: &OddField) -> OddField {
        g.neg_laplacian().axpy(1.0, &g.mul_even(&self.potential))
    }

    /// (𝓛 + 1) f, the physical operator L±.
    pub fn apply_even_shifted(&self, f: &EvenField) -> EvenField {
        self.apply_even(f).axpy(1.0, f)
    }

    pub fn apply_odd_shifted(&self, g: &OddField) -> OddField {
        self.apply_odd(g).axpy(1.0, g)
    }

    pub fn potential_at(&self, j: usize) -> f64 {
        self.potential.values()[j]
    }
}

/// Assemble 𝓛 = L± − 1 (or a custom potential) on the given grid.
pub fn assemble_l(kind: OperatorKind, params: &ModelParams, grid: &Grid) -> SchrodingerOp {
    match kind {
        OperatorKind::Plus => {
            let p = params.p;
            let v = EvenField::from_fn(grid, |x| -p * params.q_pow_pm1(x));
            SchrodingerOp::new(v, format!("L+ - 1 for p={}", params.p))
        }
        OperatorKind::Minus => {
            let v = EvenField::from_fn(grid, |x| -params.q_pow_pm1(x));
            SchrodingerOp::new(v, format!("L- - 1 for p={}", params.p))
        }
        OperatorKind::Custom(v) => SchrodingerOp::new(v, "custom"),
    }
}

/// Solve (𝓛 + 1 + shift) y = b by preconditioned conjugate gradients with
/// the free operator (−∂ₓₓ + 1 + shift) as cosine-diagonal preconditioner.
fn pcg_solve_even(
    op: &SchrodingerOp,
    shift: f64,
    b: &EvenField,
    tol: f64,
    max_iter: usize,
) -> Result<EvenField, SpectralError> {
    let grid = op.grid().clone();
    let apply = |f: &EvenField| op.apply_even_shifted(f).axpy(shift, f);
    let precond = |r: &EvenField| r.apply_cosine_multiplier(|xi| 1.0 / (xi * xi + 1.0 + shift));

    let mut x = EvenField::zeros(&grid);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.inner(&z);
    let b_norm = b.l2_norm().max(1e-300);
    for _ in 0..max_iter {
        if r.l2_norm() <= tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let alpha = rz / p.inner(&ap);
        x = x.axpy(alpha, &p);
        r = r.axpy(-alpha, &ap);
        z = precond(&r);
        let rz_new = r.inner(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.axpy(beta, &p);
    }
    if r.l2_norm() <= tol * b_norm * 10.0 {
        Ok(x)
    } else {
        Err(SpectralError::EigNonConvergence(format!(
            "PCG stalled at relative residual {:.3e}",
            r.l2_norm() / b_norm
        )))
    }
}

/// Lowest eigenvalue of 𝓛 + 1 = L± on even functions, with its positive
/// normalized eigenfunction; fails when the bottom of the even spectrum is
/// nonnegative.
pub fn ground_state(op: &SchrodingerOp) -> Result<(EvenField, f64), SpectralError> {
    let pairs = even_bound_states(op, 1)?;
    match pairs.into_iter().next() {
        Some((eig, rho)) if eig < 0.0 => {
            // Positive ground state: fix the overall sign.
            let mass: f64 = rho.values().iter().sum();
            let rho = if mass < 0.0 { rho.scaled(-1.0) } else { rho };
            Ok((rho, eig))
        }
        Some((eig, _)) => Err(SpectralError::NoNegativeEigenvalue { bottom: eig }),
        None => Err(SpectralError::NoNegativeEigenvalue { bottom: f64::NAN }),
    }
}

/// Lowest `count` even-sector eigenpairs of 𝓛 + 1 by deflated inverse
/// iteration; stops early once the spectrum reaches the continuum edge.
pub fn even_bound_states(
    op: &SchrodingerOp,
    count: usize,
) -> Result<Vec<(f64, EvenField)>, SpectralError> {
    let grid = op.grid().clone();
    // Shift by the potential depth so 𝓛 + 1 + shift >= 1.
    let depth = op
        .potential
        .values()
        .iter()
        .fold(0.0_f64, |m, &v| m.max(-v));
    let shift = depth;
    let mut found: Vec<(f64, EvenField)> = Vec::new();

    for idx in 0..count {
        // Deterministic start: a broad positive bump, deflated.
        let mut x = EvenField::from_fn(&grid, |t| (-t * t / 4.0).exp() * (1.0 + 0.1 * t));
        for (_, e) in &found {
            let c = x.inner(e);
            x = x.axpy(-c, e);
        }
        let norm = x.l2_norm();
        if norm < 1e-12 {
            break;
        }
        x = x.scaled(1.0 / norm);

        let mut eig_prev = f64::INFINITY;
        let mut converged = false;
        for _ in 0..200 {
            let mut y = pcg_solve_even(op, shift, &x, 1e-13, 400)?;
            for (_, e) in &found {
                let c = y.inner(e);
                y = y.axpy(-c, e);
            }
            let norm = y.l2_norm();
            if norm < 1e-290 {
                return Err(SpectralError::EigNonConvergence(
                    "inverse iteration collapsed after deflation".into(),
                ));
            }
            x = y.scaled(1.0 / norm);
            let lx = op.apply_even_shifted(&x);
            let eig = x.inner(&lx);
            let resid = lx.axpy(-eig, &x).l2_norm();
            if resid <= 1e-11 * (1.0 + eig.abs()) {
                eig_prev = eig;
                converged = true;
                break;
            }
            if (eig - eig_prev).abs() <= 1e-15 * (1.0 + eig.abs()) {
                eig_prev = eig;
                converged = resid <= 1e-9 * (1.0 + eig.abs());
                break;
            }
            eig_prev = eig;
        }
        if !converged {
            return Err(SpectralError::EigNonConvergence(format!(
                "inverse iteration for eigenpair {idx} did not settle"
            )));
        }
        // Continuum edge of 𝓛 + 1 sits at +1; discretized continuum modes
        // are not bound states.
        if eig_prev > 0.999 {
            break;
        }
        found.push((eig_prev, x.clone()));
    }
    Ok(found)
}

/// Relative residuals of the two zero modes: r1 = ‖L₊Q′‖/‖Q′‖ in the odd
/// sector, r2 = ‖L₋Q‖/‖Q‖ in the even sector.
pub fn zero_mode_residuals(params: &ModelParams, grid: &Grid) -> (f64, f64) {
    let lp = assemble_l(OperatorKind::Plus, params, grid);
    let lm = assemble_l(OperatorKind::Minus, params, grid);
    let q = EvenField::from_fn(grid, |x| {
        params.alpha * (params.beta * x).cosh().powf(-1.0 / params.beta)
    });
    // Q' = -tanh(βx) Q, odd.
    let qp = OddField::from_fn(grid, |x| {
        -(params.beta * x).tanh() * params.alpha * (params.beta * x).cosh().powf(-1.0 / params.beta)
    });
    let r1 = lp.apply_odd_shifted(&qp).l2_norm() / qp.l2_norm();
    let r2 = lm.apply_even_shifted(&q).l2_norm() / q.l2_norm();
    (r1, r2)
}
