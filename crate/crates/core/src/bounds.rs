//! Worst-case lower bounds and the parameter arithmetic that turns a cheap
//! expected-cost protocol into a contradiction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Redistribution,
    Transfer,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "redistribution" => Ok(Mode::Redistribution),
            "transfer" => Ok(Mode::Transfer),
            other => Err(Error::OutOfRange(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Redistribution => "redistribution",
            Mode::Transfer => "transfer",
        })
    }
}

/// `log d` used when the caller does not choose one; the smallest integer with `d > 2¹⁸`.
pub const DEFAULT_LOG_D: f64 = 19.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RedistBound {
    pub bits: f64,
    pub unclamped: f64,
    /// Whether the bound exceeds `(1/6) log d`.
    pub exceeds_sixth: bool,
}

/// `max(((1 − 3δ)/2) log d − 1.5, 0)` for redistribution of `ω` with error `δ`.
pub fn redist_worst_case_lower_bound(log_d: f64, delta: f64) -> Result<RedistBound> {
    check_delta(delta)?;
    if !(log_d >= 0.0) {
        return Err(Error::OutOfRange(format!("log d = {log_d} must be non-negative")));
    }
    let unclamped = 0.5 * (1.0 - 3.0 * delta) * log_d - 1.5;
    let bits = unclamped.max(0.0);
    Ok(RedistBound {
        bits,
        unclamped,
        exceeds_sixth: bits >= log_d / 6.0,
    })
}

/// `½ log d + ½ log(1 − δ²)` for transfer of `ω′` with error `δ`, clamped at 0.
pub fn transfer_worst_case_lower_bound(log_d: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(log_d >= 0.0) {
        return Err(Error::OutOfRange(format!("log d = {log_d} must be non-negative")));
    }
    Ok((0.5 * log_d + 0.5 * (1.0 - delta * delta).log2()).max(0.0))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::OutOfRange(format!("δ = {delta} must lie in [0, 1)")));
    }
    Ok(())
}

struct ModeConstants {
    /// `βμε^p`.
    product: f64,
    /// `√μ + K ε^{(1−p)/2}/√μ` is the error to minimize.
    k: f64,
    /// Numerator of the cost coefficient before dropping `(1 − ε)`.
    tight_numerator: f64,
    verbatim_numerator: f64,
    error_threshold: f64,
    /// Largest admissible `ε` is `base^{exponent/(1−p)}`.
    range_base: f64,
    range_exponent: f64,
}

fn constants(mode: Mode) -> ModeConstants {
    match mode {
        Mode::Redistribution => ModeConstants {
            product: 128.0,
            k: 32.0,
            tight_numerator: 8.0,
            verbatim_numerator: 16.0,
            error_threshold: 1.0 / 6.0,
            range_base: 1.0 / 70.0,
            range_exponent: 4.0,
        },
        Mode::Transfer => ModeConstants {
            product: 16.0,
            k: 8.0 * std::f64::consts::SQRT_2,
            tight_numerator: 4.0,
            verbatim_numerator: 8.0,
            error_threshold: 0.5,
            range_base: 0.5,
            range_exponent: 15.0,
        },
    }
}

/// Largest admissible `ε` for `mode` at exponent `p < 1`.
pub fn max_eps(mode: Mode, p: f64) -> f64 {
    let c = constants(mode);
    c.range_base.powf(c.range_exponent / (1.0 - p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremParams {
    pub mode: Mode,
    pub p: f64,
    pub eps: f64,
    pub log_d: f64,
    pub beta: f64,
    pub mu: f64,
    /// `βμε^p`; the defining constant (exact in the limit `ε → 0`).
    pub product: f64,
    /// `√μ + √(8βε)` at the chosen `μ`.
    pub compiled_error_bound: f64,
    pub error_threshold: f64,
    /// `c/(βμ(1−ε)ε^p)` with `c = 8` (redistribution) or `4` (transfer).
    pub cost_coefficient: f64,
    /// The same coefficient after bounding `1/(1−ε) ≤ 2`.
    pub cost_coefficient_verbatim: f64,
    pub compiled_cost_bound: f64,
    pub compiled_cost_bound_verbatim: f64,
    /// Worst-case lower bound at error `compiled_error_bound`.
    pub lower_bound: f64,
    pub constraints_hold: bool,
    pub contradiction: bool,
    /// Contradiction flag when the verbatim cost coefficient is used.
    pub contradiction_verbatim: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TheoremCheck {
    Feasible(TheoremParams),
    /// `p ≥ 1`: `β ≥ 1`, `8βε < 1` and `μ < 1` cannot hold together.
    Infeasible {
        mode: Mode,
        p: f64,
        eps: f64,
    },
    RangeViolation {
        mode: Mode,
        p: f64,
        eps: f64,
        max_eps: f64,
    },
}

impl TheoremCheck {
    pub fn params(&self) -> Option<&TheoremParams> {
        match self {
            TheoremCheck::Feasible(p) => Some(p),
            _ => None,
        }
    }
}

/// Relative margin by which a strict inequality must hold before it counts.
const STRICT_MARGIN: f64 = 1e-12;

fn strictly_below(a: f64, b: f64) -> bool {
    a < b * (1.0 - STRICT_MARGIN)
}

pub fn theorem_contradiction_check(mode: Mode, p: f64, eps: f64, log_d: f64) -> Result<TheoremCheck> {
    if !p.is_finite() || !eps.is_finite() || !(log_d > 0.0) {
        return Err(Error::OutOfRange(format!(
            "p = {p}, ε = {eps}, log d = {log_d} must be finite with log d > 0"
        )));
    }
    if p >= 1.0 {
        return Ok(TheoremCheck::Infeasible { mode, p, eps });
    }
    let max = max_eps(mode, p);
    if !(0.0..=max).contains(&eps) {
        return Ok(TheoremCheck::RangeViolation {
            mode,
            p,
            eps,
            max_eps: max,
        });
    }
    let c = constants(mode);
    let mu = c.k * eps.powf((1.0 - p) / 2.0);
    let beta = c.product / (mu * eps.powf(p));
    let product = if eps > 0.0 { beta * mu * eps.powf(p) } else { c.product };
    let eight_beta_eps = if eps > 0.0 { 8.0 * beta * eps } else { 0.0 };
    let compiled_error_bound = mu.sqrt() + eight_beta_eps.sqrt();
    let cost_coefficient = c.tight_numerator / (c.product * (1.0 - eps));
    let cost_coefficient_verbatim = c.verbatim_numerator / c.product;
    let constraints_hold = beta >= 1.0 && mu < 1.0 && eight_beta_eps < 1.0 && eps < 0.5;
    let delta = compiled_error_bound.min(1.0 - f64::EPSILON);
    let lower_bound = match mode {
        Mode::Redistribution => redist_worst_case_lower_bound(log_d, delta)?.bits,
        Mode::Transfer => transfer_worst_case_lower_bound(log_d, delta)?,
    };
    let error_ok = strictly_below(compiled_error_bound, c.error_threshold);
    let compiled_cost_bound = cost_coefficient * log_d;
    let compiled_cost_bound_verbatim = cost_coefficient_verbatim * log_d;
    Ok(TheoremCheck::Feasible(TheoremParams {
        mode,
        p,
        eps,
        log_d,
        beta,
        mu,
        product,
        compiled_error_bound,
        error_threshold: c.error_threshold,
        cost_coefficient,
        cost_coefficient_verbatim,
        compiled_cost_bound,
        compiled_cost_bound_verbatim,
        lower_bound,
        constraints_hold,
        contradiction: constraints_hold && error_ok && strictly_below(compiled_cost_bound, lower_bound),
        contradiction_verbatim: constraints_hold
            && error_ok
            && strictly_below(compiled_cost_bound_verbatim, lower_bound),
    }))
}

/// `√μ + K ε^{(1−p)/2}/√μ`, the compiled error as a function of `μ` once `β` is
/// eliminated through the mode's `βμε^p` constant.
pub fn error_in_mu(mode: Mode, p: f64, eps: f64, mu: f64) -> f64 {
    mu.sqrt() + constants(mode).k * eps.powf((1.0 - p) / 2.0) / mu.sqrt()
}

/// Minimizer of [`error_in_mu`] over `μ ∈ (0, 1)`: a log-spaced grid followed by
/// golden-section refinement around the best grid point.
pub fn grid_optimal_mu(mode: Mode, p: f64, eps: f64, grid: usize) -> f64 {
    let f = |mu: f64| error_in_mu(mode, p, eps, mu);
    let n = grid.max(8);
    let lo_exp = -40.0f64;
    let point = |i: usize| (lo_exp + (0.0 - lo_exp) * i as f64 / (n - 1) as f64).exp2();
    let best = (0..n)
        .map(|i| (i, f(point(i))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = point(best.saturating_sub(1));
    let mut b = point((best + 1).min(n - 1));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// The analytic minimizer `K ε^{(1−p)/2}`.
pub fn optimal_mu(mode: Mode, p: f64, eps: f64) -> f64 {
    constants(mode).k * eps.powf((1.0 - p) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redistribution_examples() {
        let b = redist_worst_case_lower_bound(18.0, 0.0).unwrap();
        assert!((b.bits - 7.5).abs() < 1e-12);
        assert!(b.exceeds_sixth);
        let b = redist_worst_case_lower_bound(18.0, 1.0 / 6.0).unwrap();
        assert!((b.bits - 3.0).abs() < 1e-12);
        assert!(b.exceeds_sixth);
        let b = redist_worst_case_lower_bound(2.0, 1.0 / 3.0).unwrap();
        assert_eq!(b.bits, 0.0);
        assert!(b.unclamped < 0.0);
    }

    #[test]
    fn transfer_examples() {
        assert!((transfer_worst_case_lower_bound(3.0, 0.0).unwrap() - 1.5).abs() < 1e-15);
        let v = transfer_worst_case_lower_bound(3.0, 0.5).unwrap();
        assert!((v - (1.5 + 0.5 * 0.75f64.log2())).abs() < 1e-12);
        assert!((v - 1.2925).abs() < 1e-3);
        let v = transfer_worst_case_lower_bound(1.0, 0.5).unwrap();
        assert!((v - 0.2925).abs() < 1e-3);
        assert!(transfer_worst_case_lower_bound(1.0, 1.0).is_err());
    }

    #[test]
    fn redistribution_endpoint() {
        let eps = max_eps(Mode::Redistribution, 0.5);
        assert!((eps - (1.0f64 / 70.0).powi(8)).abs() < 1e-30);
        let t = theorem_contradiction_check(Mode::Redistribution, 0.5, eps, DEFAULT_LOG_D).unwrap();
        let t = t.params().unwrap();
        assert!((t.product - 128.0).abs() < 1e-9);
        assert!((t.compiled_error_bound - 8.0 * 2f64.sqrt() / 70.0).abs() < 1e-12);
        assert!((t.cost_coefficient_verbatim - 0.125).abs() < 1e-15);
        assert!(t.contradiction);
        assert!(t.contradiction_verbatim);
    }

    #[test]
    fn transfer_endpoint_is_exactly_on_the_threshold() {
        let eps = 0.5f64.powi(30);
        let t = theorem_contradiction_check(Mode::Transfer, 0.5, eps, DEFAULT_LOG_D).unwrap();
        let t = t.params().unwrap();
        assert!((t.product - 16.0).abs() < 1e-9);
        assert!((t.compiled_error_bound - 0.5).abs() < 1e-12);
        assert!(!t.contradiction);
    }

    #[test]
    fn transfer_interior_point() {
        let t = theorem_contradiction_check(Mode::Transfer, 0.5, 0.5f64.powi(40), DEFAULT_LOG_D).unwrap();
        let t = t.params().unwrap();
        assert!(t.contradiction);
        assert!(!t.contradiction_verbatim);
    }

    #[test]
    fn zero_eps_is_a_limit() {
        for mode in [Mode::Redistribution, Mode::Transfer] {
            let t = theorem_contradiction_check(mode, 0.5, 0.0, DEFAULT_LOG_D).unwrap();
            let t = t.params().unwrap();
            assert_eq!(t.compiled_error_bound, 0.0);
            assert!(t.beta.is_infinite());
            assert!(t.contradiction);
        }
    }

    #[test]
    fn p_at_least_one_is_infeasible() {
        for mode in [Mode::Redistribution, Mode::Transfer] {
            assert!(matches!(
                theorem_contradiction_check(mode, 1.0, 1e-6, 19.0).unwrap(),
                TheoremCheck::Infeasible { .. }
            ));
        }
    }

    #[test]
    fn out_of_range_eps() {
        let t = theorem_contradiction_check(Mode::Transfer, 0.5, 0.1, 19.0).unwrap();
        assert!(matches!(t, TheoremCheck::RangeViolation { .. }));
    }

    #[test]
    fn mu_choice_is_optimal() {
        for mode in [Mode::Redistribution, Mode::Transfer] {
            for &p in &[0.0, 0.5, 0.9] {
                let eps = max_eps(mode, p);
                let grid = grid_optimal_mu(mode, p, eps, 4000);
                let exact = optimal_mu(mode, p, eps);
                assert!((grid - exact).abs() < 1e-6, "{mode} p={p}: {grid} vs {exact}");
            }
        }
    }

    #[test]
    fn mode_parses() {
        assert_eq!("transfer".parse::<Mode>().unwrap(), Mode::Transfer);
        assert!("x".parse::<Mode>().is_err());
    }
}
