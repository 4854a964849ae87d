//! The first-order intertwining operator U = ρ ∂ₓ ρ⁻¹ with ρ ∝ Q^{(p+1)/2},
//! which conjugates L₊ into L₋ (U L₊ = L₋ U) and maps the even sector to the
//! odd one.
//!
//! Since ρ′/ρ = −((p+1)/2) tanh(βx), the operator is applied through the
//! closed-form logarithmic derivative, avoiding the exponentially growing
//! quotient f/ρ:
//!   U f  =  f′ + ((p+1)/2) tanh(βx) f.

use super::{assemble_l, OperatorKind};
use crate::grid::{EvenField, Grid, OddField};
use crate::params::ModelParams;

fn weight(params: &ModelParams, grid: &Grid) -> Vec<f64> {
    let c = 0.5 * (params.p + 1.0);
    grid.nodes().iter().map(|&x| c * (params.beta * x).tanh()).collect()
}

/// U f for even f; the image is odd.
pub fn intertwine_u(f: &EvenField, params: &ModelParams) -> OddField {
    let grid = f.grid();
    let w = weight(params, grid);
    let deriv = f.derivative();
    let vals: Vec<f64> = deriv
        .values()
        .iter()
        .zip(&w)
        .zip(f.values())
        .map(|((d, wv), fv)| d + wv * fv)
        .collect();
    OddField::from_samples(grid, vals)
}

/// The formal adjoint expression U* = −∂ₓ + ((p+1)/2) tanh(βx) applied to an
/// even function; the image is odd (this is the U*Q = −C Qₓ identity's
/// reading).
pub fn intertwine_adjoint(f: &EvenField, params: &ModelParams) -> OddField {
    let grid = f.grid();
    let w = weight(params, grid);
    let deriv = f.derivative();
    let vals: Vec<f64> = deriv
        .values()
        .iter()
        .zip(&w)
        .zip(f.values())
        .map(|((d, wv), fv)| -d + wv * fv)
        .collect();
    OddField::from_samples(grid, vals)
}

/// The constant C with U*Q = −C Qₓ; closed form (p+3)/2.
pub fn q_derivative_constant(params: &ModelParams) -> f64 {
    0.5 * (params.p + 3.0)
}

/// ‖(U L₊ − L₋ U) f‖₂ together with ‖f‖_{H²}, for the intertwining check.
pub fn intertwine_defect(f: &EvenField, params: &ModelParams) -> (f64, f64) {
    let grid = f.grid();
    let lp = assemble_l(OperatorKind::Plus, params, grid);
    let lm = assemble_l(OperatorKind::Minus, params, grid);
    let route_a = intertwine_u(&lp.apply_even_shifted(f), params);
    let route_b = lm.apply_odd_shifted(&intertwine_u(f, params));
    let defect = route_a.axpy(-1.0, &route_b).l2_norm();
    (defect, f.sobolev_norm(2.0))
}
