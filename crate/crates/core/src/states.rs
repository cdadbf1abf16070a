//! The hard-instance state family and its maximally entangled companions.
//!
//! Register layout: `RA (d_a) · R' (d) · B (d) · C (d) · A (d_a)` for the
//! redistribution states and `R (d) · C (d)` for the transfer states. The
//! referee system `R` of the redistribution task is the pair `RA R'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{haar_unitary, rng_from_seed, Register, StateVector};
use crate::linalg::{self, Matrix, Vector};
use rand::Rng;

pub const REFEREE: [&str; 2] = ["RA", "R'"];
pub const MAX_TOTAL_DIM: usize = 1 << 12;

/// `e_2 = … = e_d = 1/(dβ)`, `e_1 = 1 − (d−1)/(dβ)`.
pub fn low_entropy_distribution(d: usize, beta: f64) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("d = {d} must exceed 1")));
    }
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::OutOfRange(format!(
            "beta = {beta} must be finite and at least 1"
        )));
    }
    let tail = 1.0 / (d as f64 * beta);
    let mut e = vec![tail; d];
    e[0] = 1.0 - (d as f64 - 1.0) * tail;
    Ok(e)
}

/// How the per-`a` bases `{v_j(a)}` and `{w_j(a)}` are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMode {
    /// One Haar pair `(V, W)`; each `v_j(a)` carries a seeded phase.
    #[default]
    PhasedShared,
    /// Fresh Haar bases for every `a`.
    IndependentPerA,
    /// Computational bases throughout.
    Computational,
}

#[derive(Clone, Debug)]
pub struct HardInstance {
    pub d: usize,
    pub d_a: usize,
    pub beta: f64,
    pub seed: u64,
    pub mode: BasisMode,
    pub eigenvalues: Vec<f64>,
    /// Column `j` of `v_bases[a]` is `v_j(a)`.
    pub v_bases: Vec<Matrix>,
    pub w_bases: Vec<Matrix>,
    pub psi: StateVector,
    pub omega: StateVector,
    pub psi_tilde: StateVector,
    pub omega_prime: StateVector,
}

fn phase_diag<R: Rng>(d: usize, rng: &mut R) -> Matrix {
    let phases: Vec<linalg::C64> = (0..d)
        .map(|_| {
            let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            linalg::c(t.cos(), t.sin())
        })
        .collect();
    Matrix::from_diagonal(&Vector::from_vec(phases))
}

fn draw_bases(d: usize, d_a: usize, seed: u64, mode: BasisMode) -> (Vec<Matrix>, Vec<Matrix>) {
    let mut rng = rng_from_seed(seed);
    match mode {
        BasisMode::Computational => (vec![linalg::identity(d); d_a], vec![linalg::identity(d); d_a]),
        BasisMode::IndependentPerA => (0..d_a)
            .map(|_| (haar_unitary(d, &mut rng), haar_unitary(d, &mut rng)))
            .unzip(),
        BasisMode::PhasedShared => {
            let v = haar_unitary(d, &mut rng);
            let w = haar_unitary(d, &mut rng);
            let vs = (0..d_a).map(|_| &v * phase_diag(d, &mut rng)).collect();
            (vs, vec![w; d_a])
        }
    }
}

pub fn redistribution_registers(d: usize, d_a: usize) -> Vec<Register> {
    vec![
        Register::new("RA", d_a),
        Register::new("R'", d),
        Register::new("B", d),
        Register::new("C", d),
        Register::new("A", d_a),
    ]
}

pub fn transfer_registers(d: usize) -> Vec<Register> {
    vec![Register::new("R", d), Register::new("C", d)]
}

/// `Σ_a Σ_j c_j |a>|u_j>|v_j(a)>|w_j(a)>|a> / √d_a` with `u_j` computational.
fn redistribution_state(coeffs: &[f64], d_a: usize, v: &[Matrix], w: &[Matrix]) -> Result<StateVector> {
    let d = coeffs.len();
    let regs = redistribution_registers(d, d_a);
    let mut amps = Vector::zeros(linalg::strides(&[d_a, d, d, d, d_a])[0] * d_a);
    let norm = 1.0 / (d_a as f64).sqrt();
    for a in 0..d_a {
        for (j, &cj) in coeffs.iter().enumerate() {
            for b in 0..d {
                for c in 0..d {
                    let idx = (((a * d + j) * d + b) * d + c) * d_a + a;
                    amps[idx] += v[a][(b, j)] * w[a][(c, j)] * (cj * norm);
                }
            }
        }
    }
    StateVector::new(regs, amps)
}

fn transfer_state(coeffs: &[f64], w: &Matrix) -> Result<StateVector> {
    let d = coeffs.len();
    let mut amps = Vector::zeros(d * d);
    for (j, &cj) in coeffs.iter().enumerate() {
        for c in 0..d {
            amps[j * d + c] += w[(c, j)] * cj;
        }
    }
    StateVector::new(transfer_registers(d), amps)
}

/// Builds the instance with the default [`BasisMode`].
pub fn build_instance(d: usize, d_a: usize, beta: f64, seed: u64) -> Result<HardInstance> {
    build_instance_with(d, d_a, beta, seed, BasisMode::default())
}

pub fn build_instance_with(d: usize, d_a: usize, beta: f64, seed: u64, mode: BasisMode) -> Result<HardInstance> {
    if d_a == 0 {
        return Err(Error::OutOfRange("d_a must be positive".into()));
    }
    let total = d_a
        .checked_mul(d_a)
        .and_then(|x| x.checked_mul(d.checked_pow(3)?))
        .ok_or_else(|| Error::OutOfRange("dimension overflow".into()))?;
    if total > MAX_TOTAL_DIM {
        return Err(Error::OutOfRange(format!(
            "total dimension {total} exceeds {MAX_TOTAL_DIM}; use the arithmetic-only bounds instead"
        )));
    }
    let eigenvalues = low_entropy_distribution(d, beta)?;
    let (v_bases, w_bases) = draw_bases(d, d_a, seed, mode);
    let sqrt_e: Vec<f64> = eigenvalues.iter().map(|e| e.sqrt()).collect();
    let flat = vec![1.0 / (d as f64).sqrt(); d];
    Ok(HardInstance {
        psi: redistribution_state(&sqrt_e, d_a, &v_bases, &w_bases)?,
        omega: redistribution_state(&flat, d_a, &v_bases, &w_bases)?,
        psi_tilde: transfer_state(&sqrt_e, &w_bases[0])?,
        omega_prime: transfer_state(&flat, &w_bases[0])?,
        d,
        d_a,
        beta,
        seed,
        mode,
        eigenvalues,
        v_bases,
        w_bases,
    })
}

impl HardInstance {
    /// Smallest eigenvalue `e_d = 1/(dβ)`.
    pub fn e_min(&self) -> f64 {
        *self.eigenvalues.last().expect("d > 1")
    }

    /// `Ψ_R^{-1/2}` on `RA R'`; `Ψ_R = I/d_a ⊗ diag(e)`.
    pub fn psi_r_inv_sqrt(&self) -> Matrix {
        let diag: Vec<f64> = self.eigenvalues.iter().map(|e| 1.0 / e.sqrt()).collect();
        let e = Matrix::from_diagonal(&Vector::from_iterator(self.d, diag.iter().map(|&x| linalg::real(x))));
        linalg::kron(&linalg::identity(self.d_a), &e).scale((self.d_a as f64).sqrt())
    }

    /// Largest entry of `ω − Ψ_R^{-1/2}Ψ/√(d_a d)`.
    pub fn omega_relation_residual(&self) -> Result<f64> {
        let regs = self.psi.registers()[..2].to_vec();
        let mapped = self.psi.apply(&self.psi_r_inv_sqrt(), &REFEREE, &regs)?;
        let scaled = mapped.scaled(linalg::real(1.0 / ((self.d_a * self.d) as f64).sqrt()));
        let diff = scaled.amplitudes() - self.omega.aligned_to(scaled.registers())?.amplitudes();
        Ok(diff.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Largest entry of `ω′ − Ψ̃_R^{-1/2}Ψ̃/√d`.
    pub fn omega_prime_relation_residual(&self) -> Result<f64> {
        let rho_r = self.psi_tilde.marginal(&["R"])?;
        let inv = linalg::inv_sqrt_on_support(rho_r.matrix(), 0.0);
        let regs = vec![Register::new("R", self.d)];
        let mapped = self.psi_tilde.apply(&inv, &["R"], &regs)?;
        let scaled = mapped.scaled(linalg::real(1.0 / (self.d as f64).sqrt()));
        let diff = scaled.amplitudes() - self.omega_prime.amplitudes();
        Ok(diff.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Branch `|ψ^a>` (or `|ω^a>` when `flat`) on `R' B C`.
    pub fn branch(&self, a: usize, flat: bool) -> Result<StateVector> {
        let src = if flat { &self.omega } else { &self.psi };
        let ra = StateVector::basis(vec![Register::new("RA", self.d_a)], a)?;
        let aa = StateVector::basis(vec![Register::new("A", self.d_a)], a)?;
        let v = src.partial_inner(&ra)?.partial_inner(&aa)?;
        Ok(v.scaled(linalg::real((self.d_a as f64).sqrt())))
    }

    pub fn descriptor(&self) -> InstanceDescriptor {
        InstanceDescriptor {
            schema: 1,
            d: self.d,
            d_a: self.d_a,
            beta: self.beta,
            seed: self.seed,
            bases: Some(self.mode),
        }
    }
}

/// On-disk description of an instance; the bases are regenerated from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDescriptor {
    pub schema: u32,
    pub d: usize,
    pub d_a: usize,
    pub beta: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bases: Option<BasisMode>,
}

impl InstanceDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if d.schema != 1 {
            return Err(Error::Schema(format!("unsupported schema version {}", d.schema)));
        }
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    pub fn build(&self) -> Result<HardInstance> {
        build_instance_with(self.d, self.d_a, self.beta, self.seed, self.bases.unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropies::{entropy, mutual_info};
    use crate::hilbert::DensityOperator;

    #[test]
    fn distribution_examples() {
        assert_eq!(low_entropy_distribution(2, 1.0).unwrap(), vec![0.5, 0.5]);
        let e = low_entropy_distribution(16, 2.0).unwrap();
        assert!((e[0] - 17.0 / 32.0).abs() < 1e-15 && (e[15] - 1.0 / 32.0).abs() < 1e-15);
        let e = low_entropy_distribution(4, 4.0).unwrap();
        assert!((e[0] - 13.0 / 16.0).abs() < 1e-15);
        assert!(low_entropy_distribution(4, 0.5).is_err());
        assert!(low_entropy_distribution(1, 2.0).is_err());
    }

    #[test]
    fn trivial_bases_give_schmidt_form() {
        let inst = build_instance_with(2, 1, 2.0, 0, BasisMode::Computational).unwrap();
        let a = inst.psi_tilde.amplitudes();
        assert!((a[0].re - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((a[3].re - 0.25f64.sqrt()).abs() < 1e-15);
        assert!(a[1].norm() < 1e-15 && a[2].norm() < 1e-15);
    }

    #[test]
    fn relation_residuals_vanish() {
        for mode in [BasisMode::PhasedShared, BasisMode::IndependentPerA] {
            let inst = build_instance_with(2, 2, 2.0, 11, mode).unwrap();
            assert!(inst.omega_relation_residual().unwrap() < 1e-10);
            assert!(inst.omega_prime_relation_residual().unwrap() < 1e-10);
        }
    }

    #[test]
    fn branch_overlap_closed_form() {
        let inst = build_instance(4, 2, 2.0, 5).unwrap();
        let expected: f64 = inst.eigenvalues.iter().map(|e| e.sqrt()).sum::<f64>() / 2.0;
        for a in 0..2 {
            let ov = inst
                .branch(a, true)
                .unwrap()
                .inner(&inst.branch(a, false).unwrap())
                .unwrap();
            assert!((ov.re - expected).abs() < 1e-12 && ov.im.abs() < 1e-12);
        }
    }

    #[test]
    fn omega_rb_is_classical_quantum() {
        let inst = build_instance(2, 2, 2.0, 3).unwrap();
        let rb = inst.omega.marginal(&["RA", "R'", "B"]).unwrap();
        // Dephase RA R' (computational = {|a>|u_j>}) and compare.
        let n = 4;
        let db = 2;
        let m = rb.matrix();
        let mut dephased = m.clone();
        for i in 0..n * db {
            for j in 0..n * db {
                if i / db != j / db {
                    dephased[(i, j)] = linalg::ZERO;
                }
            }
        }
        assert!(linalg::max_abs_diff(m, &dephased) < 1e-12);
    }

    #[test]
    fn omega_mutual_information() {
        let inst = build_instance(4, 2, 2.0, 1).unwrap();
        let w = inst.omega.density();
        let i = mutual_info(&w, &REFEREE, &["B", "C"]).unwrap();
        assert!((i - 4.0).abs() < 1e-9);
    }

    #[test]
    fn independent_bases_break_the_mutual_information_identity() {
        let inst = build_instance_with(2, 2, 2.0, 1, BasisMode::IndependentPerA).unwrap();
        let i = mutual_info(&inst.omega.density(), &REFEREE, &["B", "C"]).unwrap();
        assert!(i > 2.0 + 1e-3);
    }

    #[test]
    fn diag_entropy_at_small_beta() {
        let e = low_entropy_distribution(16, 2.0).unwrap();
        let h = entropy(&DensityOperator::diagonal(vec![Register::new("X", 16)], &e).unwrap()).unwrap();
        assert!((h - 2.8285).abs() < 1e-3 && h <= 4.0);
    }

    #[test]
    fn descriptor_roundtrip() {
        let inst = build_instance(2, 2, 2.0, 42).unwrap();
        let text = inst.descriptor().to_json();
        let back = InstanceDescriptor::from_json(&text).unwrap().build().unwrap();
        assert_eq!(back.psi.amplitudes(), inst.psi.amplitudes());
        assert!(InstanceDescriptor::from_json("{\"schema\":2,\"d\":2,\"d_a\":1,\"beta\":2,\"seed\":0}").is_err());
        assert!(InstanceDescriptor::from_json("{\"d\":2}").is_err());
    }

    #[test]
    fn oversized_instance_rejected() {
        assert!(build_instance(32, 1, 2.0, 0).is_err());
    }
}
