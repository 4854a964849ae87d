//! Model exponent, derived soliton constants, and the threshold constants
//! used by the distance/sign machinery and the trajectory classifiers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("exponent p = {0} must exceed 3")]
    ExponentTooSmall(f64),
    #[error("threshold ordering violated: {0}")]
    BadOrdering(String),
}

/// Threshold constants of the distance/sign/one-pass machinery. The theory
/// fixes only inequalities between them; concrete values are configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Distance below which the energy-distance identity is exact.
    pub delta_e: f64,
    /// Ejection terminal radius.
    pub delta_x: f64,
    /// Ejection comparability constant (fitted empirically, >= 1).
    pub c_star: f64,
    /// Sign-functional overlap radius.
    pub delta_star: f64,
    /// One-pass outer radius.
    pub r_star: f64,
    /// Admissible energy-excess scale.
    pub eps_star: f64,
    /// Smallness of center-stable data.
    pub nu: f64,
    /// Trapping tube radius for trajectory classification.
    pub delta_trap: f64,
    /// Zero-energy resonance verdict threshold on |W(0)|.
    pub tau_res: f64,
    /// Top of the spectral-measure frequency window.
    pub lambda_max: f64,
    /// Low-frequency scattering criterion scale (window gradient bound μ).
    pub mu_scatter: f64,
    /// Uniform bound on ‖·‖_𝓗 in the 𝔖=+1 region (order J(Q)^{1/2}).
    pub m_star: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            delta_e: 0.1,
            delta_x: 0.08,
            c_star: 1.0,
            delta_star: 0.01,
            r_star: 0.003,
            eps_star: 0.0005,
            nu: 1e-2,
            delta_trap: 0.03,
            tau_res: 1e-4,
            lambda_max: 400.0,
            mu_scatter: 2.5,
            m_star: 6.0,
        }
    }
}

impl Thresholds {
    /// δ_S = δ_X / (2 C_*).
    pub fn delta_s(&self) -> f64 {
        self.delta_x / (2.0 * self.c_star)
    }

    /// Validate ε_* ≤ R_*/10 ≤ δ_*/100 and δ_* ≤ δ_S, δ_* ≪ δ_X.
    pub fn validate(&self) -> Result<(), ParamError> {
        let ord = |msg: &str| Err(ParamError::BadOrdering(msg.to_string()));
        if !(self.eps_star <= self.r_star / 10.0) {
            return ord("need eps_star <= r_star/10");
        }
        if !(self.r_star / 10.0 <= self.delta_star / 100.0) {
            return ord("need r_star/10 <= delta_star/100");
        }
        if !(self.delta_star <= self.delta_s()) {
            return ord("need delta_star <= delta_s = delta_x/(2 c_star)");
        }
        if !(self.delta_star <= 0.5 * self.delta_x) {
            return ord("need delta_star << delta_x");
        }
        if !(self.delta_e <= 1.0 && self.delta_e > 0.0) {
            return ord("need 0 < delta_e <= 1");
        }
        Ok(())
    }
}

/// Nonlinearity exponent with the derived soliton constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Nonlinearity exponent of |u|^{p-1}u.
    pub p: f64,
    /// Soliton amplitude α = ((p+1)/2)^{1/(p-1)}.
    pub alpha: f64,
    /// Soliton inverse width β = (p-1)/2.
    pub beta: f64,
    pub thresholds: Thresholds,
}

impl ModelParams {
    pub fn new(p: f64, thresholds: Thresholds) -> Result<Self, ParamError> {
        if !(p > 3.0) {
            return Err(ParamError::ExponentTooSmall(p));
        }
        thresholds.validate()?;
        Ok(ModelParams {
            p,
            alpha: (0.5 * (p + 1.0)).powf(1.0 / (p - 1.0)),
            beta: 0.5 * (p - 1.0),
            thresholds,
        })
    }

    pub fn with_exponent(p: f64) -> Result<Self, ParamError> {
        ModelParams::new(p, Thresholds::default())
    }

    /// Whether p is suitable for dynamics experiments (p > 5).
    pub fn supports_dynamics(&self) -> bool {
        self.p > 5.0
    }

    /// Q^{p-1}(x) = ((p+1)/2) sech²(βx), the closed-form potential profile.
    pub fn q_pow_pm1(&self, x: f64) -> f64 {
        let c = (self.beta * x).cosh();
        0.5 * (self.p + 1.0) / (c * c)
    }

    /// |u|^{p-1} u with the continuity convention 0 at u = 0.
    pub fn nonlinearity_scalar(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        u.signum() * u.abs().powf(self.p)
    }
}
