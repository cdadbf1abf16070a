//! Fidelity and distance measures on (sub)normalized states.

use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, StateVector};
use crate::linalg;

/// Generalized fidelity `‖√ρ√σ‖₁ + √((1 − Tr ρ)(1 − Tr σ))`.
///
/// Both arguments must be valid subnormalized states over the same labeled
/// registers (in any order).
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    rho.validate()?;
    sigma.validate()?;
    let sigma = sigma.aligned_to(rho.registers())?;
    let overlap = linalg::trace_norm(&(linalg::sqrtm_psd(rho.matrix()) * linalg::sqrtm_psd(sigma.matrix())));
    let defect = ((1.0 - rho.trace()).max(0.0) * (1.0 - sigma.trace()).max(0.0)).sqrt();
    Ok((overlap + defect).clamp(0.0, 1.0))
}

/// `P(ρ, σ) = √(1 − F²(ρ, σ))`.
pub fn purified_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    Ok(from_fidelity(fidelity(rho, sigma)?))
}

pub fn from_fidelity(f: f64) -> f64 {
    (1.0 - f * f).max(0.0).sqrt()
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let sigma = sigma.aligned_to(rho.registers())?;
    let diff = rho.matrix() - sigma.matrix();
    Ok(0.5 * linalg::eigvalsh(&diff).iter().map(|v| v.abs()).sum::<f64>())
}

/// `½‖ρ − σ‖₁ + ½|Tr ρ − Tr σ|`; coincides with the trace distance on normalized states.
pub fn generalized_trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    Ok(trace_distance(rho, sigma)? + 0.5 * (rho.trace() - sigma.trace()).abs())
}

/// Generalized fidelity of two pure (possibly subnormalized) vectors.
pub fn vector_fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    let na = a.norm_sqr();
    let nb = b.norm_sqr();
    if na > 1.0 + linalg_tol() || nb > 1.0 + linalg_tol() {
        return Err(Error::NotNormalized(na.max(nb)));
    }
    let overlap = a.inner(b)?.norm();
    let defect = ((1.0 - na).max(0.0) * (1.0 - nb).max(0.0)).sqrt();
    Ok((overlap + defect).clamp(0.0, 1.0))
}

pub fn vector_purified_distance(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(from_fidelity(vector_fidelity(a, b)?))
}

fn linalg_tol() -> f64 {
    crate::tol::NORM
}

/// Bound on `P(ρ, σ)` given `P(αρ, ασ) ≤ ε`: returns `ε √(2/α)`.
pub fn rescaled_distance_bound(eps: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if eps < 0.0 {
        return Err(Error::OutOfRange(format!("eps = {eps} must be non-negative")));
    }
    Ok(eps * (2.0 / alpha).sqrt())
}

/// Membership of `candidate` in the purified-distance ball of radius `eps` around `center`.
pub fn in_ball(center: &DensityOperator, candidate: &DensityOperator, eps: f64) -> Result<bool> {
    if !candidate.is_normalized() {
        return Ok(false);
    }
    Ok(purified_distance(center, candidate)? <= eps)
}

/// Distance between `Σ √p_t |a_t>|t>` and `Σ √q_t |a_t>|t>` (same branch states):
/// `√(1 − (Σ √(p_t q_t))²)`.
pub fn tagged_superposition_distance(p: &[f64], q: &[f64]) -> f64 {
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).max(0.0).sqrt()).sum();
    from_fidelity(bc.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{random_density, rng_from_seed, Register};

    fn q(l: &str) -> Vec<Register> {
        vec![Register::new(l, 2)]
    }

    fn ket(i: usize) -> DensityOperator {
        StateVector::basis(q("A"), i).unwrap().density()
    }

    #[test]
    fn fidelity_with_itself_is_one() {
        let rho = random_density(q("A"), 2, &mut rng_from_seed(1)).unwrap();
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
        assert!(purified_distance(&rho, &rho).unwrap() < 1e-4);
    }

    #[test]
    fn orthogonal_pure_states() {
        assert!(fidelity(&ket(0), &ket(1)).unwrap().abs() < 1e-12);
        assert!((purified_distance(&ket(0), &ket(1)).unwrap() - 1.0).abs() < 1e-12);
        assert!((trace_distance(&ket(0), &ket(1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_versus_pure() {
        let mixed = DensityOperator::maximally_mixed(q("A")).unwrap();
        let f = fidelity(&mixed, &ket(0)).unwrap();
        assert!((f - 0.5f64.sqrt()).abs() < 1e-12);
        let p = purified_distance(&mixed, &ket(0)).unwrap();
        assert!((p - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_trace_distance() {
        let a = DensityOperator::diagonal(q("A"), &[0.7, 0.3]).unwrap();
        let b = DensityOperator::diagonal(q("A"), &[0.5, 0.5]).unwrap();
        assert!((trace_distance(&a, &b).unwrap() - 0.2).abs() < 1e-12);
        assert!(trace_distance(&a, &a).unwrap() < 1e-15);
    }

    #[test]
    fn subnormalized_sandwich_needs_the_generalized_distance() {
        let a = DensityOperator::diagonal(q("A"), &[0.7, 0.0]).unwrap();
        let b = DensityOperator::diagonal(q("A"), &[0.9, 0.1]).unwrap();
        let p = purified_distance(&a, &b).unwrap();
        let t = trace_distance(&a, &b).unwrap();
        let g = generalized_trace_distance(&a, &b).unwrap();
        assert!((p - 0.37f64.sqrt()).abs() < 1e-12);
        assert!((t - 0.15).abs() < 1e-12 && (g - 0.3).abs() < 1e-12);
        assert!(p > (2.0 * t).sqrt());
        assert!(p <= (2.0 * g).sqrt() + 1e-12);
    }

    #[test]
    fn fidelity_is_symmetric() {
        let mut rng = rng_from_seed(2);
        let a = random_density(q("A"), 2, &mut rng).unwrap();
        let b = random_density(q("A"), 1, &mut rng).unwrap();
        assert!((fidelity(&a, &b).unwrap() - fidelity(&b, &a).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn fidelity_rejects_non_psd() {
        let bad = DensityOperator::from_raw(
            q("A"),
            linalg::Matrix::from_diagonal(&linalg::Vector::from_vec(vec![linalg::real(1.2), linalg::real(-0.2)])),
        )
        .unwrap();
        assert!(fidelity(&bad, &ket(0)).is_err());
    }

    #[test]
    fn rescaled_bound_formula() {
        assert!((rescaled_distance_bound(0.1, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(rescaled_distance_bound(0.0, 0.3).unwrap(), 0.0);
        assert!(rescaled_distance_bound(0.1, 1.0).is_err());
        assert!(rescaled_distance_bound(0.1, 0.0).is_err());
    }

    #[test]
    fn rescaled_bound_holds_on_random_pairs() {
        let mut rng = rng_from_seed(77);
        let alpha = 0.3;
        for _ in 0..100 {
            let a = random_density(q("A"), 2, &mut rng).unwrap();
            let b = random_density(q("A"), 2, &mut rng).unwrap();
            let eps = purified_distance(&a.scaled(alpha), &b.scaled(alpha)).unwrap();
            let p = purified_distance(&a, &b).unwrap();
            assert!(p <= rescaled_distance_bound(eps, alpha).unwrap() + 1e-9);
        }
    }

    #[test]
    fn vector_route_matches_density_route() {
        let mut rng = rng_from_seed(5);
        let regs = vec![Register::new("A", 2), Register::new("B", 3)];
        let a = crate::hilbert::haar_state(regs.clone(), &mut rng).unwrap();
        let b = crate::hilbert::haar_state(regs, &mut rng)
            .unwrap()
            .scaled(linalg::real(0.8));
        let fv = vector_fidelity(&a, &b).unwrap();
        let fd = fidelity(&a.density(), &b.density()).unwrap();
        assert!((fv - fd).abs() < 1e-7);
    }

    #[test]
    fn tagged_superposition_matches_explicit_vectors() {
        let mut rng = rng_from_seed(12);
        let branch_regs = vec![Register::new("S", 3)];
        let branches: Vec<StateVector> = (0..3)
            .map(|_| crate::hilbert::haar_state(branch_regs.clone(), &mut rng).unwrap())
            .collect();
        let p = [0.5, 0.3, 0.2];
        let qd = [0.6, 0.4, 0.0];
        let build = |w: &[f64]| {
            let mut acc: Option<StateVector> = None;
            for (t, b) in branches.iter().enumerate() {
                let tag = StateVector::basis(vec![Register::new("M", 3)], t).unwrap();
                let term = b.tensor(&tag).unwrap().scaled(linalg::real(w[t].sqrt()));
                acc = Some(match acc {
                    None => term,
                    Some(a) => a.add(&term).unwrap(),
                });
            }
            acc.unwrap()
        };
        let explicit = vector_purified_distance(&build(&p), &build(&qd)).unwrap();
        assert!((explicit - tagged_superposition_distance(&p, &qd)).abs() < 1e-10);
    }
}
