//! Entropic quantities in bits.
//!
//! Unsmoothed quantities are evaluated exactly, either from eigenvalues or by
//! solving the semidefinite program
//!
//! ```text
//! minimize Tr X  subject to  I_m ⊗ X ≥ Q
//! ```
//!
//! with a log-barrier interior-point method. Every solve returns a primal
//! witness together with a dual lower bound, so the optimum is bracketed.
//! Smoothed quantities are only available through the bound chains at the
//! bottom of this file.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{purify, DensityOperator};
use crate::linalg::{self, Matrix, C64};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactEigen,
    FeasibilityOpt,
    BoundChain,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    /// Optimal `X`, embedded back into the full conditioning space.
    pub witness: Matrix,
    /// Smallest eigenvalue of `I ⊗ X − Q` after repair; never negative.
    pub slack: f64,
    /// Objective bracket `[lower, upper]` on `min Tr X`.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct EntropyReport {
    pub value: f64,
    pub method: Method,
    pub certificate: Option<Certificate>,
    /// False when the optimizer hit its iteration cap; the value is still a
    /// valid bound from the (repaired) primal witness.
    pub converged: bool,
}

impl EntropyReport {
    fn exact(value: f64) -> Self {
        Self {
            value,
            method: Method::ExactEigen,
            certificate: None,
            converged: true,
        }
    }

    fn chain(value: f64) -> Self {
        Self {
            value,
            method: Method::BoundChain,
            certificate: None,
            converged: true,
        }
    }
}

fn require_normalized(rho: &DensityOperator) -> Result<()> {
    if !rho.is_normalized() {
        return Err(Error::NotNormalized(rho.trace()));
    }
    Ok(())
}

/// von Neumann entropy.
pub fn entropy(rho: &DensityOperator) -> Result<f64> {
    require_normalized(rho)?;
    let ev: Vec<f64> = rho.eigenvalues().into_iter().map(|v| v.max(0.0)).collect();
    Ok(linalg::shannon_bits(&ev).max(0.0))
}

/// Weight of `rho` outside the support of `sigma`.
fn weight_off_support(rho: &Matrix, sigma: &Matrix) -> f64 {
    let (values, vectors) = linalg::eigh(sigma);
    let mut off = 0.0;
    for (k, &v) in values.iter().enumerate() {
        if v <= tol::SUPPORT {
            let col = vectors.column(k);
            off += (col.adjoint() * rho * col)[(0, 0)].re;
        }
    }
    off
}

fn log2_on_support(m: &Matrix) -> Matrix {
    linalg::hermitian_fn(m, |v| if v > tol::SUPPORT { v.log2() } else { 0.0 })
}

/// `Tr ρ log ρ − Tr ρ log σ`; `+∞` when `supp ρ ⊄ supp σ`.
pub fn relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let sigma = sigma.aligned_to(rho.registers())?;
    if weight_off_support(rho.matrix(), sigma.matrix()) > tol::STATE {
        return Ok(f64::INFINITY);
    }
    let diff = log2_on_support(rho.matrix()) - log2_on_support(sigma.matrix());
    Ok(linalg::trace(&(rho.matrix() * diff)).re)
}

/// `log λ_max(σ^{-1/2} ρ σ^{-1/2})`; `+∞` when `supp ρ ⊄ supp σ`.
pub fn dmax(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let sigma = sigma.aligned_to(rho.registers())?;
    if weight_off_support(rho.matrix(), sigma.matrix()) > tol::STATE {
        return Ok(f64::INFINITY);
    }
    let s = linalg::inv_sqrt_on_support(sigma.matrix(), tol::SUPPORT);
    let lam = linalg::max_eigenvalue(&(&s * rho.matrix() * &s));
    Ok(lam.log2())
}

fn check_parts(rho: &DensityOperator, parts: &[&[&str]]) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for part in parts {
        if part.is_empty() {
            return Err(Error::DimensionMismatch("empty register group".into()));
        }
        for l in *part {
            rho.register(l)?;
            if seen.contains(l) {
                return Err(Error::LabelCollision(l.to_string()));
            }
            seen.push(l);
        }
    }
    Ok(())
}

fn marginal_entropy(rho: &DensityOperator, keep: &[&str]) -> Result<f64> {
    entropy(&rho.partial_trace(keep)?)
}

fn concat<'a>(a: &[&'a str], b: &[&'a str]) -> Vec<&'a str> {
    a.iter().chain(b).copied().collect()
}

/// `I(A:B) = S(A) + S(B) − S(AB)`.
pub fn mutual_info(rho: &DensityOperator, a: &[&str], b: &[&str]) -> Result<f64> {
    check_parts(rho, &[a, b])?;
    Ok(marginal_entropy(rho, a)? + marginal_entropy(rho, b)? - marginal_entropy(rho, &concat(a, b))?)
}

/// `I(A:B|C) = S(AC) + S(BC) − S(C) − S(ABC)`.
pub fn cond_mutual_info(rho: &DensityOperator, a: &[&str], b: &[&str], c: &[&str]) -> Result<f64> {
    check_parts(rho, &[a, b, c])?;
    let ac = concat(a, c);
    let bc = concat(b, c);
    let abc = concat(&ac, b);
    Ok(marginal_entropy(rho, &ac)? + marginal_entropy(rho, &bc)?
        - marginal_entropy(rho, c)?
        - marginal_entropy(rho, &abc)?)
}

/// Outcome of `min Tr X s.t. I_m ⊗ X ≥ Q`.
#[derive(Clone, Debug)]
pub struct TraceSdpSolution {
    pub x: Matrix,
    /// Primal objective of the repaired witness.
    pub upper: f64,
    /// Dual objective `Tr(QY)` of a feasible `Y`.
    pub lower: f64,
    pub slack: f64,
    pub converged: bool,
}

/// Orthonormal Hermitian basis of `n x n` matrices under `Tr(AB)`.
fn hermitian_basis(n: usize) -> Vec<Matrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut e = Matrix::zeros(n, n);
        e[(i, i)] = linalg::ONE;
        basis.push(e);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = Matrix::zeros(n, n);
            e[(i, j)] = linalg::real(s);
            e[(j, i)] = linalg::real(s);
            basis.push(e);
            let mut f = Matrix::zeros(n, n);
            f[(i, j)] = linalg::c(0.0, s);
            f[(j, i)] = linalg::c(0.0, -s);
            basis.push(f);
        }
    }
    basis
}

fn compose(basis: &[Matrix], x: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for (e, &w) in basis.iter().zip(x) {
        m += e.scale(w);
    }
    m
}

/// Trace over the first (`m`-dimensional) factor of an `(m n) x (m n)` matrix.
fn trace_first(z: &Matrix, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| (0..m).map(|a| z[(a * n + i, a * n + j)]).sum())
}

/// `None` unless `s` is positive definite. Complex Cholesky does not reject
/// indefinite input, so the spectrum is checked directly.
fn log_det_pd(s: &Matrix) -> Option<f64> {
    let ev = linalg::eigvalsh(s);
    ev.iter().all(|&v| v > 0.0).then(|| ev.iter().map(|v| v.ln()).sum())
}

/// Solves `min Tr X` subject to `I_m ⊗ X ≥ Q` for Hermitian `Q` of side `m n`.
pub fn min_trace_dominating(q: &Matrix, m: usize, n: usize) -> Result<TraceSdpSolution> {
    if q.nrows() != m * n || q.ncols() != m * n {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}x{}, expected side {}",
            q.nrows(),
            q.ncols(),
            m * n
        )));
    }
    let q = (q + q.adjoint()).scale(0.5);
    let id_m = linalg::identity(m);
    let basis = hermitian_basis(n);
    let lifted: Vec<Matrix> = basis.iter().map(|e| linalg::kron(&id_m, e)).collect();
    let traces: Vec<f64> = basis.iter().map(|e| linalg::trace(e).re).collect();
    let nb = basis.len();

    let x0 = linalg::max_eigenvalue(&q).max(0.0) + 1.0;
    let mut x: Vec<f64> = (0..nb).map(|k| if k < n { x0 } else { 0.0 }).collect();
    let slack_of = |x: &[f64]| linalg::kron(&id_m, &compose(&basis, x, n)) - &q;

    let barrier_dim = (m * n) as f64;
    let mut t = barrier_dim / (x0 * n as f64);
    let mut converged = false;
    let mut newton_steps = 0usize;
    const MAX_NEWTON: usize = 2000;
    const MAX_CENTERING: usize = 50;

    'outer: loop {
        let centering_start = newton_steps;
        while newton_steps - centering_start < MAX_CENTERING {
            let s = slack_of(&x);
            let Some(zinv) = s.clone().try_inverse() else {
                break 'outer;
            };
            let zinv = (&zinv + zinv.adjoint()).scale(0.5);
            let ta = trace_first(&zinv, m, n);
            let grad: Vec<f64> = (0..nb)
                .map(|k| t * traces[k] - (linalg::trace(&(&ta * &basis[k]))).re)
                .collect();
            let g_mats: Vec<Matrix> = lifted.iter().map(|l| &zinv * l).collect();
            let mut hess = DMatrix::<f64>::zeros(nb, nb);
            for k in 0..nb {
                for l in k..nb {
                    let v = trace_product(&g_mats[k], &g_mats[l]);
                    hess[(k, l)] = v;
                    hess[(l, k)] = v;
                }
            }
            let g = nalgebra::DVector::from_vec(grad);
            let Some(ch) = hess.clone().cholesky() else {
                break 'outer;
            };
            let step = -ch.solve(&g);
            let decrement = -g.dot(&step);
            if decrement / 2.0 < 1e-10 {
                break;
            }
            let f0 = t * dot(&traces, &x) - log_det_pd(&s).unwrap_or(f64::NEG_INFINITY);
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
                if let Some(ld) = log_det_pd(&slack_of(&trial)) {
                    let f1 = t * dot(&traces, &trial) - ld;
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            newton_steps += 1;
            if !accepted && decrement < 1e-6 {
                break;
            }
            if !accepted || newton_steps > MAX_NEWTON {
                break 'outer;
            }
        }
        let objective = dot(&traces, &x).abs().max(1.0);
        if barrier_dim / t < 1e-10 * objective {
            converged = true;
            break;
        }
        t *= 16.0;
    }

    let mut xm = compose(&basis, &x, n);
    let mut slack = linalg::min_eigenvalue(&(linalg::kron(&id_m, &xm) - &q));
    if slack < 0.0 {
        xm += linalg::identity(n).scale(-slack);
        slack = linalg::min_eigenvalue(&(linalg::kron(&id_m, &xm) - &q));
    }
    let upper = linalg::trace(&xm).re;
    let lower = dual_bound(&q, &(linalg::kron(&id_m, &xm) - &q), m, n).min(upper);
    let converged = converged || upper - lower <= 1e-9 * upper.abs().max(1.0);
    Ok(TraceSdpSolution {
        x: xm,
        upper,
        lower,
        slack: slack.max(0.0),
        converged,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Re Tr(AB)` without forming the product.
fn trace_product(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc.re
}

/// Dual objective from `Y ∝ S⁻¹` rescaled to satisfy `Tr_A Y = I` exactly.
fn dual_bound(q: &Matrix, s: &Matrix, m: usize, n: usize) -> f64 {
    let Some(y) = s.clone().try_inverse() else { return 0.0 };
    let y = linalg::sqrtm_psd(&(&y + y.adjoint()).scale(0.5));
    let y = &y * &y;
    let ta = trace_first(&y, m, n);
    if linalg::min_eigenvalue(&ta) <= 0.0 {
        return 0.0;
    }
    let r = linalg::kron(&linalg::identity(m), &linalg::inv_sqrt_on_support(&ta, 0.0));
    let y = &r * y * &r;
    linalg::trace(&(q * y)).re
}

/// Restricts `Q` on `A ⊗ B` to `A ⊗ span(cols of pb)`.
fn compress_second(q: &Matrix, pa: &Matrix, pb: &Matrix) -> Matrix {
    let p = linalg::kron(pa, pb);
    p.adjoint() * q * p
}

fn split(rho: &DensityOperator, a: &[&str], b: &[&str]) -> Result<(DensityOperator, usize, usize)> {
    check_parts(rho, &[a, b])?;
    let ab = concat(a, b);
    let r = rho.partial_trace(&ab)?;
    let da: usize = a
        .iter()
        .map(|l| r.register(l).map(|x| x.dim))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    let db = r.dim() / da;
    Ok((r, da, db))
}

fn sdp_report(value: f64, sol: TraceSdpSolution, witness: Matrix) -> EntropyReport {
    let cert = Certificate {
        witness,
        slack: sol.slack,
        lower: sol.lower,
        upper: sol.upper,
    };
    EntropyReport {
        value,
        method: Method::FeasibilityOpt,
        certificate: Some(cert),
        converged: sol.converged,
    }
}

/// `H_min(A|B) = −log min{Tr X : I_A ⊗ X ≥ ρ_AB}`.
pub fn hmin(rho: &DensityOperator, a: &[&str], b: &[&str]) -> Result<EntropyReport> {
    let (r, da, _) = split(rho, a, b)?;
    require_normalized(&r)?;
    let rho_b = r.partial_trace(b)?;
    let pb = linalg::support_basis(rho_b.matrix(), tol::SUPPORT);
    let q = compress_second(r.matrix(), &linalg::identity(da), &pb);
    let sol = min_trace_dominating(&q, da, pb.ncols())?;
    let witness = &pb * &sol.x * pb.adjoint();
    let value = -sol.upper.log2();
    Ok(sdp_report(value, sol, witness))
}

/// `I_max(A:B) = log min{Tr X : ρ_A ⊗ X ≥ ρ_AB}`.
pub fn imax(rho: &DensityOperator, a: &[&str], b: &[&str]) -> Result<EntropyReport> {
    let (r, _, _) = split(rho, a, b)?;
    require_normalized(&r)?;
    let rho_a = r.partial_trace(a)?;
    let rho_b = r.partial_trace(b)?;
    let (va, ua) = linalg::eigh(rho_a.matrix());
    let rank_a = va.iter().filter(|&&v| v > tol::SUPPORT).count().max(1);
    let mut pa = ua.columns(0, rank_a).into_owned();
    for k in 0..rank_a {
        let s = 1.0 / va[k].sqrt();
        for row in 0..pa.nrows() {
            pa[(row, k)] *= s;
        }
    }
    let pb = linalg::support_basis(rho_b.matrix(), tol::SUPPORT);
    let q = compress_second(r.matrix(), &pa, &pb);
    let sol = min_trace_dominating(&q, rank_a, pb.ncols())?;
    let witness = &pb * &sol.x * pb.adjoint();
    let value = sol.upper.log2().max(0.0);
    Ok(sdp_report(value, sol, witness))
}

/// `H_max(A|B) = −H_min(A|E)` for a purification `ρ_ABE`.
pub fn hmax(rho: &DensityOperator, a: &[&str], b: &[&str]) -> Result<EntropyReport> {
    let (r, _, _) = split(rho, a, b)?;
    require_normalized(&r)?;
    let mut label = String::from("purifier");
    while r.register(&label).is_ok() {
        label.push('\'');
    }
    let pure = purify(&r, &label)?;
    let ae: Vec<&str> = a.iter().copied().chain(std::iter::once(label.as_str())).collect();
    let rho_ae = pure.marginal(&ae)?;
    let mut rep = hmin(&rho_ae, a, &[label.as_str()])?;
    rep.value = -rep.value;
    Ok(rep)
}

/// Continuity bound `ε log d + 1`, valid for `ε ≤ 1/(2e)`.
pub fn fannes_bound(eps: f64, d: usize) -> Result<f64> {
    let limit = 1.0 / (2.0 * std::f64::consts::E);
    if !(0.0..=limit).contains(&eps) {
        return Err(Error::OutOfRange(format!("eps = {eps} outside [0, 1/(2e)]")));
    }
    if d == 0 {
        return Err(Error::OutOfRange("dimension must be positive".into()));
    }
    Ok(eps * (d as f64).log2() + 1.0)
}

/// A bound obtained from a closed-form chain; negative values are clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChainBound {
    pub value: f64,
    pub unclamped: f64,
    pub clamped: bool,
}

impl ChainBound {
    fn clamp_at_zero(raw: f64) -> Self {
        Self {
            value: raw.max(0.0),
            unclamped: raw,
            clamped: raw < 0.0,
        }
    }
}

/// `I(R:BC) − 3δ log d − 3` from an already computed mutual information.
pub fn imax_delta_chain(mutual_info_bits: f64, log_d: f64, delta: f64) -> ChainBound {
    ChainBound::clamp_at_zero(mutual_info_bits - 3.0 * delta * log_d - 3.0)
}

/// Lower bound on the δ-smooth max-information `I_max^δ(R:BC)` for states of
/// the hard family, where `d` is the dimension of the transferred register.
pub fn imax_delta_lower_bound(
    omega: &DensityOperator,
    r: &[&str],
    bc: &[&str],
    d: usize,
    delta: f64,
) -> Result<ChainBound> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::OutOfRange(format!("delta = {delta} outside [0, 1)")));
    }
    let i = mutual_info(omega, r, bc)?;
    Ok(imax_delta_chain(i, (d as f64).log2(), delta))
}

/// `−H_max + log(1 − δ²)`; `−∞` once `δ` reaches 1.
pub fn hmax_chain(hmax_bits: f64, delta: f64) -> f64 {
    let s = 1.0 - delta * delta;
    if s <= 0.0 {
        f64::NEG_INFINITY
    } else {
        -hmax_bits + s.log2()
    }
}

/// Lower bound on `I_max^δ` of a pure state via `−H_max(A|B) + log(1 − δ²)`.
pub fn hmin_delta_upper_via_hmax(rho: &DensityOperator, a: &[&str], b: &[&str], delta: f64) -> Result<EntropyReport> {
    if delta < 0.0 {
        return Err(Error::OutOfRange(format!("delta = {delta} is negative")));
    }
    let h = hmax(rho, a, b)?;
    Ok(EntropyReport::chain(hmax_chain(h.value, delta)))
}

/// Exact-eigen report wrapper for callers that want a uniform return type.
pub fn entropy_report(rho: &DensityOperator) -> Result<EntropyReport> {
    entropy(rho).map(EntropyReport::exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{random_density, rng_from_seed, Register, StateVector};
    use crate::linalg::{real, Vector};

    fn qubits(labels: &[&str]) -> Vec<Register> {
        labels.iter().map(|l| Register::new(*l, 2)).collect()
    }

    fn bell() -> DensityOperator {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(
            qubits(&["A", "B"]),
            Vector::from_vec(vec![real(s), real(0.0), real(0.0), real(s)]),
        )
        .unwrap()
        .density()
    }

    fn max_entangled(d: usize) -> DensityOperator {
        let regs = vec![Register::new("A", d), Register::new("B", d)];
        let mut v = Vector::zeros(d * d);
        for i in 0..d {
            v[i * d + i] = real(1.0 / (d as f64).sqrt());
        }
        StateVector::new(regs, v).unwrap().density()
    }

    #[test]
    fn entropy_of_pure_and_mixed() {
        assert!(entropy(&bell()).unwrap().abs() < 1e-10);
        let mixed = DensityOperator::maximally_mixed(vec![Register::new("A", 8)]).unwrap();
        assert!((entropy(&mixed).unwrap() - 3.0).abs() < 1e-10);
        assert!(entropy(&mixed.scaled(0.5)).is_err());
    }

    #[test]
    fn relative_entropies_commuting() {
        let a = qubits(&["A"]);
        let zero = DensityOperator::diagonal(a.clone(), &[1.0, 0.0]).unwrap();
        let mixed = DensityOperator::maximally_mixed(a.clone()).unwrap();
        assert!((relative_entropy(&zero, &mixed).unwrap() - 1.0).abs() < 1e-10);
        assert!((dmax(&zero, &mixed).unwrap() - 1.0).abs() < 1e-10);
        assert!(relative_entropy(&mixed, &mixed).unwrap().abs() < 1e-10);
        assert!(dmax(&mixed, &mixed).unwrap().abs() < 1e-10);
        let p = DensityOperator::diagonal(a.clone(), &[0.9, 0.1]).unwrap();
        assert!((dmax(&p, &mixed).unwrap() - 1.8f64.log2()).abs() < 1e-10);
        assert!(relative_entropy(&mixed, &zero).unwrap().is_infinite());
        assert!(dmax(&mixed, &zero).unwrap().is_infinite());
    }

    #[test]
    fn mutual_information_examples() {
        assert!((mutual_info(&bell(), &["A"], &["B"]).unwrap() - 2.0).abs() < 1e-10);
        let prod = DensityOperator::diagonal(qubits(&["A"]), &[0.3, 0.7])
            .unwrap()
            .tensor(&DensityOperator::maximally_mixed(qubits(&["B"])).unwrap())
            .unwrap();
        assert!(mutual_info(&prod, &["A"], &["B"]).unwrap().abs() < 1e-10);
        assert!(mutual_info(&prod, &["A"], &["A"]).is_err());
        assert!(mutual_info(&prod, &["A"], &[]).is_err());
        assert!(mutual_info(&prod, &["A"], &["Z"]).is_err());
    }

    #[test]
    fn hmin_of_maximally_entangled_states() {
        for d in [2usize, 3] {
            let r = hmin(&max_entangled(d), &["A"], &["B"]).unwrap();
            assert!((r.value + (d as f64).log2()).abs() < 1e-7, "d={d}: {}", r.value);
            let c = r.certificate.unwrap();
            assert!(c.slack >= 0.0 && c.lower <= c.upper + 1e-12);
            assert!(c.upper - c.lower < 1e-7);
        }
    }

    #[test]
    fn hmin_of_maximally_mixed_product() {
        let rho = DensityOperator::maximally_mixed(vec![Register::new("A", 3), Register::new("B", 2)]).unwrap();
        let r = hmin(&rho, &["A"], &["B"]).unwrap();
        assert!((r.value - 3f64.log2()).abs() < 1e-7);
    }

    #[test]
    fn imax_of_product_is_zero() {
        let mut rng = rng_from_seed(3);
        let a = random_density(qubits(&["A"]), 2, &mut rng).unwrap();
        let b = random_density(qubits(&["B"]), 2, &mut rng).unwrap();
        let r = imax(&a.tensor(&b).unwrap(), &["A"], &["B"]).unwrap();
        assert!(r.value.abs() < 1e-7);
    }

    #[test]
    fn imax_of_bell_pair() {
        // ρ_A ⊗ X ≥ Φ needs Tr X = 4.
        let r = imax(&bell(), &["A"], &["B"]).unwrap();
        assert!((r.value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn hmax_of_maximally_entangled_and_mixed() {
        let r = hmax(&max_entangled(4), &["A"], &["B"]).unwrap();
        assert!((r.value + 2.0).abs() < 1e-7);
        let m = DensityOperator::maximally_mixed(qubits(&["A", "B"])).unwrap();
        assert!((hmax(&m, &["A"], &["B"]).unwrap().value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn register_order_does_not_matter() {
        let rho = random_density(
            vec![Register::new("A", 2), Register::new("B", 3)],
            3,
            &mut rng_from_seed(9),
        )
        .unwrap();
        let swapped = rho.reorder(&["B", "A"]).unwrap();
        let a = hmin(&rho, &["A"], &["B"]).unwrap().value;
        let b = hmin(&swapped, &["A"], &["B"]).unwrap().value;
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn fannes_formula() {
        assert_eq!(fannes_bound(0.0, 16).unwrap(), 1.0);
        assert!((fannes_bound(0.1, 16).unwrap() - 1.4).abs() < 1e-12);
        assert!(fannes_bound(0.2, 16).is_err());
    }

    #[test]
    fn chains() {
        let b = imax_delta_chain(4.0, 2.0, 0.0);
        assert_eq!(b.value, 1.0);
        assert!(!b.clamped);
        let c = imax_delta_chain(4.0, 2.0, 1.0 / 3.0);
        assert!(c.clamped && c.value == 0.0);
        assert!((hmax_chain(-3.0, 0.0) - 3.0).abs() < 1e-15);
        assert!((hmax_chain(-3.0, 0.5) - (3.0 + 0.75f64.log2())).abs() < 1e-12);
        assert_eq!(hmax_chain(-3.0, 1.0), f64::NEG_INFINITY);
    }
}
