//! Convergence-rate calculator and per-run certification.
//!
//! Two parameter conditions matter. With convex costs and Lipschitz
//! gradients, `c > M/2 + rho` guarantees that the weighted distance to an
//! optimal point never increases (descent). With strongly convex costs and
//! `c > max{L^2/(2 tau), rho + M^2/(2 tau)}` the distance contracts
//! geometrically with factor `1/(1 + delta)`, where delta is assembled from
//! the constants and an auxiliary root beta of a scalar balance equation.
//! The free parameter mu > 1 is tuned over a small grid for the strongest
//! certificate.

use std::fmt;

use serde::Serialize;

use crate::problem::NetworkConstants;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    /// The strong-convexity rate condition fails for these parameters.
    ConditionNotMet(String),
    /// The root bracket did not have the expected signs; the constants are
    /// inconsistent.
    BracketSigns { lo: f64, hi: f64 },
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::ConditionNotMet(msg) => write!(f, "rate condition not met: {msg}"),
            AnalysisError::BracketSigns { lo, hi } => write!(
                f,
                "rate equation bracket has unexpected signs at ({lo}, {hi})"
            ),
        }
    }
}

impl std::error::Error for AnalysisError {}

/// True iff `c > M/2 + rho` strictly (the descent condition).
pub fn check_descent_condition(consts: &NetworkConstants, c: f64, rho: f64) -> bool {
    c > consts.stacked_lipschitz / 2.0 + rho
}

/// True iff `c > max{L^2/(2 tau), rho + M^2/(2 tau)}` strictly (the linear
/// rate condition); requires a strictly positive strong-convexity modulus.
pub fn check_rate_condition(consts: &NetworkConstants, c: f64, rho: f64) -> bool {
    let tau = consts.strong_convexity;
    if tau <= 0.0 {
        return false;
    }
    let l = consts.lipschitz;
    let m = consts.stacked_lipschitz;
    c > (l * l / (2.0 * tau)).max(rho + m * m / (2.0 * tau))
}

fn beta_lhs(consts: &NetworkConstants, c: f64, rho: f64, mu: f64, beta: f64) -> f64 {
    let m2 = consts.stacked_lipschitz * consts.stacked_lipschitz;
    let denom = (c + rho) / 2.0 + 3.0 * rho * mu / (mu - 1.0) + 2.0 * m2 * mu / rho;
    (consts.strong_convexity - beta / 2.0) / denom
}

fn beta_rhs(consts: &NetworkConstants, c: f64, rho: f64, mu: f64, beta: f64) -> f64 {
    let m2 = consts.stacked_lipschitz * consts.stacked_lipschitz;
    let denom = 3.0 * c * c * mu / (rho * (mu - 1.0)) + 2.0 * m2 * mu / rho;
    let curvature_term = if m2 == 0.0 { 0.0 } else { m2 / (2.0 * beta) };
    ((c - rho) / 2.0 - curvature_term) / denom
}

/// Residual of the rate balance equation at beta; the root makes it zero.
pub fn beta_residual(consts: &NetworkConstants, c: f64, rho: f64, mu: f64, beta: f64) -> f64 {
    beta_lhs(consts, c, rho, mu, beta) - beta_rhs(consts, c, rho, mu, beta)
}

const BISECTION_CAP: usize = 200;

/// Solves the rate balance equation for beta on the open interval
/// `(M^2/(c - rho), 2 tau)` by bisection. The left side decreases to zero
/// at the right endpoint and the right side increases from zero at the
/// left endpoint, so the root is unique. `tol` is the absolute interval
/// tolerance; zero runs bisection to f64 exhaustion.
pub fn solve_beta(
    consts: &NetworkConstants,
    c: f64,
    rho: f64,
    mu: f64,
    tol: f64,
) -> Result<f64, AnalysisError> {
    if !check_rate_condition(consts, c, rho) {
        return Err(AnalysisError::ConditionNotMet(format!(
            "c = {c}, rho = {rho} violate the strong-convexity rate condition"
        )));
    }
    if mu <= 1.0 {
        return Err(AnalysisError::ConditionNotMet(format!(
            "mu must exceed 1, got {mu}"
        )));
    }
    let m2 = consts.stacked_lipschitz * consts.stacked_lipschitz;
    let mut lo = m2 / (c - rho);
    let mut hi = 2.0 * consts.strong_convexity;
    let f_lo = beta_residual(consts, c, rho, mu, lo);
    let f_hi = beta_residual(consts, c, rho, mu, hi);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(AnalysisError::BracketSigns { lo: f_lo, hi: f_hi });
    }
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        if beta_residual(consts, c, rho, mu, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const MU_GRID: [f64; 7] = [1.1, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0];

/// Linear-rate certificate: the parameter condition flags, the rate
/// constant at the requested mu, and the strongest constant found on the
/// mu grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCertificate {
    pub descent_condition: bool,
    pub rate_condition: bool,
    pub mu: f64,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub contraction_factor: Option<f64>,
    pub best_mu: Option<f64>,
    pub best_beta: Option<f64>,
    pub best_delta: Option<f64>,
    pub best_contraction_factor: Option<f64>,
}

fn delta_at_mu(
    consts: &NetworkConstants,
    c: f64,
    rho: f64,
    mu: f64,
) -> Result<(f64, f64), AnalysisError> {
    let beta = solve_beta(consts, c, rho, mu, 0.0)?;
    let l = consts.lipschitz;
    let tau = consts.strong_convexity;
    let gamma2 = consts.b_spectral_norm * consts.b_spectral_norm;
    let m2 = consts.stacked_lipschitz * consts.stacked_lipschitz;
    let term_x = (tau - l * l / (2.0 * c)) / (c / 2.0 + 3.0 * rho * mu * gamma2 / (mu - 1.0));
    let term_w =
        (tau - beta / 2.0) / ((c + rho) / 2.0 + 3.0 * rho * mu / (mu - 1.0) + 2.0 * m2 * mu / rho);
    Ok((term_x.min(term_w).min(0.25), beta))
}

/// Evaluates the rate constant at the requested mu and over the mu grid.
/// Errors when the strong-convexity rate condition fails.
pub fn compute_delta(
    consts: &NetworkConstants,
    c: f64,
    rho: f64,
    mu: f64,
) -> Result<RateCertificate, AnalysisError> {
    let (delta, beta) = delta_at_mu(consts, c, rho, mu)?;
    let mut best = (mu, delta, beta);
    for &mu_g in &MU_GRID {
        if let Ok((d, b)) = delta_at_mu(consts, c, rho, mu_g) {
            if d > best.1 {
                best = (mu_g, d, b);
            }
        }
    }
    Ok(RateCertificate {
        descent_condition: check_descent_condition(consts, c, rho),
        rate_condition: true,
        mu,
        beta: Some(beta),
        delta: Some(delta),
        contraction_factor: Some(1.0 / (1.0 + delta)),
        best_mu: Some(best.0),
        best_beta: Some(best.2),
        best_delta: Some(best.1),
        best_contraction_factor: Some(1.0 / (1.0 + best.1)),
    })
}

/// Certificate for any parameter choice: the full rate data when the
/// strong-convexity condition holds, condition flags alone otherwise.
pub fn rate_certificate(consts: &NetworkConstants, c: f64, rho: f64, mu: f64) -> RateCertificate {
    match compute_delta(consts, c, rho, mu) {
        Ok(cert) => cert,
        Err(_) => RateCertificate {
            descent_condition: check_descent_condition(consts, c, rho),
            rate_condition: check_rate_condition(consts, c, rho),
            mu,
            beta: None,
            delta: None,
            contraction_factor: None,
            best_mu: None,
            best_beta: None,
            best_delta: None,
            best_contraction_factor: None,
        },
    }
}

/// What the certificate entitles the run's trajectory to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificationRegime {
    /// Linear contraction certified.
    ContractionCertified,
    /// Only monotone descent certified.
    DescentCertified,
    /// No applicable certificate; trajectory observations are empirical.
    EmpiricalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub regime: CertificationRegime,
    pub descent_condition: bool,
    pub rate_condition: bool,
    pub iterations: usize,
    /// Fraction of iterations whose weighted distance did not increase
    /// (slack 1e-9 relative to the initial distance).
    pub descent_fraction: f64,
    /// Fraction of iterations meeting the certified contraction factor,
    /// when one exists.
    pub contraction_fraction: Option<f64>,
    pub delta_used: Option<f64>,
    /// Largest observed squared-distance ratio after the burn-in, ignoring
    /// iterations already at the noise floor.
    pub empirical_contraction_factor: Option<f64>,
}

const CERTIFY_SLACK_REL: f64 = 1e-9;
const EMPIRICAL_BURN_IN: usize = 5;

/// Checks a recorded trajectory of weighted distances `||u^k - u*||`
/// against the certificate: monotone descent and, when available, the
/// delta contraction (strongest grid delta). A trajectory starting at the
/// optimum satisfies everything vacuously.
pub fn certify_run(lambda_dists: &[f64], certificate: &RateCertificate) -> CertificationReport {
    let squared: Vec<f64> = lambda_dists.iter().map(|d| d * d).collect();
    let steps = squared.len().saturating_sub(1);
    let slack = squared.first().copied().unwrap_or(0.0) * CERTIFY_SLACK_REL;
    let delta = certificate.best_delta;

    let mut descent_ok = 0usize;
    let mut contraction_ok = 0usize;
    let mut empirical: Option<f64> = None;
    for k in 0..steps {
        if squared[k + 1] <= squared[k] + slack {
            descent_ok += 1;
        }
        if let Some(d) = delta {
            if squared[k + 1] <= squared[k] / (1.0 + d) + slack {
                contraction_ok += 1;
            }
        }
        if k >= EMPIRICAL_BURN_IN && squared[k] > slack.max(f64::MIN_POSITIVE) {
            let ratio = squared[k + 1] / squared[k];
            empirical = Some(empirical.map_or(ratio, |m: f64| m.max(ratio)));
        }
    }

    let fraction = |count: usize| {
        if steps == 0 {
            1.0
        } else {
            count as f64 / steps as f64
        }
    };
    let regime = if certificate.rate_condition {
        CertificationRegime::ContractionCertified
    } else if certificate.descent_condition {
        CertificationRegime::DescentCertified
    } else {
        CertificationRegime::EmpiricalOnly
    };
    CertificationReport {
        regime,
        descent_condition: certificate.descent_condition,
        rate_condition: certificate.rate_condition,
        iterations: steps,
        descent_fraction: fraction(descent_ok),
        contraction_fraction: delta.map(|_| fraction(contraction_ok)),
        delta_used: delta,
        empirical_contraction_factor: empirical,
    }
}
