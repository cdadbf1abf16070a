//! Multi-register Hilbert-space kernel.
//!
//! States are dense and carry an ordered list of labeled registers. The
//! amplitude (or matrix) index is row-major over that list, first register
//! most significant, so `|0>_A ⊗ |1>_B` is basis index 1. Operations address
//! registers by label and reorder internally, so callers never depend on the
//! physical register order of a value.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, Matrix, Vector, C64, ZERO};
use crate::tol;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Register {
    pub label: String,
    pub dim: usize,
}

impl Register {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        assert!(dim >= 1, "register dimension must be positive");
        Self {
            label: label.into(),
            dim,
        }
    }
}

pub fn check_registers(registers: &[Register]) -> Result<()> {
    for (i, r) in registers.iter().enumerate() {
        if r.dim == 0 {
            return Err(Error::DimensionMismatch(format!(
                "register {} has dimension 0",
                r.label
            )));
        }
        if registers[..i].iter().any(|o| o.label == r.label) {
            return Err(Error::LabelCollision(r.label.clone()));
        }
    }
    Ok(())
}

pub fn total_dim(registers: &[Register]) -> usize {
    registers.iter().map(|r| r.dim).product()
}

fn position(registers: &[Register], label: &str) -> Result<usize> {
    registers
        .iter()
        .position(|r| r.label == label)
        .ok_or_else(|| Error::UnknownRegister(label.to_string()))
}

/// Axis permutation putting `labels` first (in the given order), the rest after
/// in their original order.
fn front_permutation(registers: &[Register], labels: &[&str]) -> Result<Vec<usize>> {
    let mut perm = Vec::with_capacity(registers.len());
    for l in labels {
        let p = position(registers, l)?;
        if perm.contains(&p) {
            return Err(Error::LabelCollision(l.to_string()));
        }
        perm.push(p);
    }
    let rest: Vec<usize> = (0..registers.len()).filter(|i| !perm.contains(i)).collect();
    perm.extend(rest);
    Ok(perm)
}

fn permuted(registers: &[Register], perm: &[usize]) -> Vec<Register> {
    perm.iter().map(|&p| registers[p].clone()).collect()
}

fn labels_of(registers: &[Register]) -> Vec<&str> {
    registers.iter().map(|r| r.label.as_str()).collect()
}

fn same_label_set(a: &[Register], b: &[Register]) -> bool {
    a.len() == b.len() && a.iter().all(|r| b.contains(r))
}

/// Register order after replacing `inputs` by `outputs` at the slot of the
/// first input register.
fn replaced_order(original: &[Register], inputs: &[&str], outputs: &[Register]) -> Vec<String> {
    let mut order = Vec::new();
    let mut placed = false;
    for r in original {
        if inputs.contains(&r.label.as_str()) {
            if !placed {
                order.extend(outputs.iter().map(|o| o.label.clone()));
                placed = true;
            }
        } else {
            order.push(r.label.clone());
        }
    }
    if !placed {
        order.splice(0..0, outputs.iter().map(|o| o.label.clone()));
    }
    order
}

#[derive(Clone, Debug)]
pub struct StateVector {
    registers: Vec<Register>,
    amplitudes: Vector,
}

impl StateVector {
    /// Normalized state; rejects vectors whose squared norm is off by more than 1e-10.
    pub fn new(registers: Vec<Register>, amplitudes: Vector) -> Result<Self> {
        let s = Self::from_raw(registers, amplitudes)?;
        let n = s.norm_sqr();
        if (n - 1.0).abs() > tol::NORM {
            return Err(Error::NotNormalized(n));
        }
        Ok(s)
    }

    /// Any vector of the right length; used for subnormalized intermediates.
    pub fn from_raw(registers: Vec<Register>, amplitudes: Vector) -> Result<Self> {
        check_registers(&registers)?;
        let d = total_dim(&registers);
        if amplitudes.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for total dimension {d}",
                amplitudes.len()
            )));
        }
        Ok(Self { registers, amplitudes })
    }

    pub fn basis(registers: Vec<Register>, index: usize) -> Result<Self> {
        let d = total_dim(&registers);
        if index >= d {
            return Err(Error::OutOfRange(format!("basis index {index} >= {d}")));
        }
        let mut v = Vector::zeros(d);
        v[index] = linalg::ONE;
        Self::new(registers, v)
    }

    /// Product basis state `|digits[0]>|digits[1]>...`.
    pub fn product_basis(registers: Vec<Register>, digits: &[usize]) -> Result<Self> {
        if digits.len() != registers.len() {
            return Err(Error::DimensionMismatch("one digit per register".into()));
        }
        let dims: Vec<usize> = registers.iter().map(|r| r.dim).collect();
        let st = linalg::strides(&dims);
        let mut idx = 0;
        for ((d, s), dim) in digits.iter().zip(&st).zip(&dims) {
            if d >= dim {
                return Err(Error::OutOfRange(format!("digit {d} >= {dim}")));
            }
            idx += d * s;
        }
        Self::basis(registers, idx)
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn labels(&self) -> Vec<&str> {
        labels_of(&self.registers)
    }

    pub fn amplitudes(&self) -> &Vector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn register(&self, label: &str) -> Result<&Register> {
        Ok(&self.registers[position(&self.registers, label)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol::NORM
    }

    pub fn normalized(&self) -> Option<Self> {
        let n = self.amplitudes.norm();
        (n > 0.0).then(|| Self {
            registers: self.registers.clone(),
            amplitudes: self.amplitudes.unscale(n),
        })
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            registers: self.registers.clone(),
            amplitudes: self.amplitudes.map(|a| a * s),
        }
    }

    /// Reorders registers to exactly `labels`.
    pub fn reorder(&self, labels: &[&str]) -> Result<Self> {
        if labels.len() != self.registers.len() {
            return Err(Error::DimensionMismatch(format!(
                "reorder needs all of {:?}, got {:?}",
                self.labels(),
                labels
            )));
        }
        self.to_front(labels)
    }

    /// Moves `labels` to the front, keeping the rest in order.
    pub fn to_front(&self, labels: &[&str]) -> Result<Self> {
        let perm = front_permutation(&self.registers, labels)?;
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let dims: Vec<usize> = self.registers.iter().map(|r| r.dim).collect();
        let data = linalg::permute_axes(self.amplitudes.as_slice(), &dims, &perm);
        Ok(Self {
            registers: permuted(&self.registers, &perm),
            amplitudes: DVector::from_vec(data),
        })
    }

    /// Same state with registers ordered like `other`; label sets must match.
    pub fn aligned_to(&self, other: &[Register]) -> Result<Self> {
        if !same_label_set(&self.registers, other) {
            return Err(Error::DimensionMismatch(format!(
                "register sets differ: {:?} vs {:?}",
                self.labels(),
                labels_of(other)
            )));
        }
        self.reorder(&labels_of(other))
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let p = position(&self.registers, from)?;
        let mut registers = self.registers.clone();
        registers[p].label = to.to_string();
        check_registers(&registers)?;
        Ok(Self {
            registers,
            amplitudes: self.amplitudes.clone(),
        })
    }

    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        let mut registers = self.registers.clone();
        registers.extend(other.registers.iter().cloned());
        check_registers(&registers)?;
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        Ok(Self { registers, amplitudes })
    }

    /// `<self|other>` after aligning register orders.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        let o = other.aligned_to(&self.registers)?;
        Ok(self.amplitudes.dotc(&o.amplitudes))
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        let o = other.aligned_to(&self.registers)?;
        Ok(Self {
            registers: self.registers.clone(),
            amplitudes: &self.amplitudes + &o.amplitudes,
        })
    }

    /// Euclidean distance `‖self - other‖` after alignment.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        let o = other.aligned_to(&self.registers)?;
        Ok((&self.amplitudes - &o.amplitudes).norm())
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            registers: self.registers.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    /// Reduced density operator on `keep` (in that order).
    pub fn marginal(&self, keep: &[&str]) -> Result<DensityOperator> {
        let front = self.to_front(keep)?;
        let dk = total_dim(&front.registers[..keep.len()]);
        let dr = front.dim() / dk;
        let m = linalg::reshape(front.amplitudes.as_slice(), dk, dr);
        Ok(DensityOperator {
            registers: front.registers[..keep.len()].to_vec(),
            matrix: &m * m.adjoint(),
        })
    }

    /// Applies `op` (`dim(out) x dim(in)`) to the registers `inputs`, replacing
    /// them by `outputs` at the slot of the first input register.
    pub fn apply(&self, op: &Matrix, inputs: &[&str], outputs: &[Register]) -> Result<Self> {
        let front = self.to_front(inputs)?;
        let rest = front.registers[inputs.len()..].to_vec();
        let din = total_dim(&front.registers[..inputs.len()]);
        let dout = total_dim(outputs);
        if op.ncols() != din || op.nrows() != dout {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, registers need {dout}x{din}",
                op.nrows(),
                op.ncols()
            )));
        }
        let dr = front.dim() / din;
        let m = linalg::reshape(front.amplitudes.as_slice(), din, dr);
        let out = op * m;
        let mut registers = outputs.to_vec();
        registers.extend(rest);
        let applied = Self::from_raw(registers, DVector::from_vec(linalg::flatten(&out)))?;
        let order = replaced_order(&self.registers, inputs, outputs);
        let order: Vec<&str> = order.iter().map(String::as_str).collect();
        applied.reorder(&order)
    }

    /// `(<bra| ⊗ I)|self>` on the registers not covered by `bra`.
    pub fn partial_inner(&self, bra: &StateVector) -> Result<StateVector> {
        let labels = bra.labels();
        let front = self.to_front(&labels)?;
        let bra = bra.reorder(&labels)?;
        let dk = bra.dim();
        let dr = front.dim() / dk;
        let m = linalg::reshape(front.amplitudes.as_slice(), dk, dr);
        let v = m.transpose() * bra.amplitudes.conjugate();
        Self::from_raw(front.registers[labels.len()..].to_vec(), v)
    }
}

#[derive(Clone, Debug)]
pub struct DensityOperator {
    registers: Vec<Register>,
    matrix: Matrix,
}

impl DensityOperator {
    /// Validated (sub)normalized state: Hermitian, PSD and trace in (0, 1] within 1e-10.
    pub fn new(registers: Vec<Register>, matrix: Matrix) -> Result<Self> {
        let rho = Self::from_raw(registers, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape-checked only; used for intermediate operators.
    pub fn from_raw(registers: Vec<Register>, matrix: Matrix) -> Result<Self> {
        check_registers(&registers)?;
        let d = total_dim(&registers);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for total dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { registers, matrix })
    }

    pub fn validate(&self) -> Result<()> {
        let h = linalg::hermitian_residual(&self.matrix);
        if h > tol::STATE {
            return Err(Error::InvalidState(format!("not Hermitian (residual {h:.3e})")));
        }
        let m = linalg::min_eigenvalue(&self.matrix);
        if m < -tol::STATE {
            return Err(Error::InvalidState(format!("negative eigenvalue {m:.3e}")));
        }
        let t = self.trace();
        if t <= 0.0 || t > 1.0 + tol::STATE {
            return Err(Error::InvalidState(format!("trace {t} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn maximally_mixed(registers: Vec<Register>) -> Result<Self> {
        let d = total_dim(&registers);
        Self::new(registers, linalg::identity(d).unscale(d as f64))
    }

    pub fn diagonal(registers: Vec<Register>, diag: &[f64]) -> Result<Self> {
        let v = Vector::from_iterator(diag.len(), diag.iter().map(|&x| linalg::real(x)));
        Self::new(registers, Matrix::from_diagonal(&v))
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn labels(&self) -> Vec<&str> {
        labels_of(&self.registers)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn register(&self, label: &str) -> Result<&Register> {
        Ok(&self.registers[position(&self.registers, label)?])
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn is_normalized(&self) -> bool {
        (self.trace() - 1.0).abs() <= tol::STATE
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            registers: self.registers.clone(),
            matrix: self.matrix.scale(s),
        }
    }

    pub fn reorder(&self, labels: &[&str]) -> Result<Self> {
        if labels.len() != self.registers.len() {
            return Err(Error::DimensionMismatch(format!(
                "reorder needs all of {:?}, got {:?}",
                self.labels(),
                labels
            )));
        }
        self.to_front(labels)
    }

    fn to_front(&self, labels: &[&str]) -> Result<Self> {
        let perm = front_permutation(&self.registers, labels)?;
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let n = self.registers.len();
        let dims: Vec<usize> = self.registers.iter().map(|r| r.dim).collect();
        let doubled_dims: Vec<usize> = dims.iter().chain(dims.iter()).copied().collect();
        let doubled_perm: Vec<usize> = perm.iter().copied().chain(perm.iter().map(|p| p + n)).collect();
        let data = linalg::permute_axes(&linalg::flatten(&self.matrix), &doubled_dims, &doubled_perm);
        let d = self.dim();
        Ok(Self {
            registers: permuted(&self.registers, &perm),
            matrix: linalg::reshape(&data, d, d),
        })
    }

    pub fn aligned_to(&self, other: &[Register]) -> Result<Self> {
        if !same_label_set(&self.registers, other) {
            return Err(Error::DimensionMismatch(format!(
                "register sets differ: {:?} vs {:?}",
                self.labels(),
                labels_of(other)
            )));
        }
        self.reorder(&labels_of(other))
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let p = position(&self.registers, from)?;
        let mut registers = self.registers.clone();
        registers[p].label = to.to_string();
        check_registers(&registers)?;
        Ok(Self {
            registers,
            matrix: self.matrix.clone(),
        })
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<Self> {
        let mut registers = self.registers.clone();
        registers.extend(other.registers.iter().cloned());
        check_registers(&registers)?;
        Ok(Self {
            registers,
            matrix: linalg::kron(&self.matrix, &other.matrix),
        })
    }

    /// Marginal on `keep`, registers ordered as given.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        let front = self.to_front(keep)?;
        let kept = front.registers[..keep.len()].to_vec();
        let dk = total_dim(&kept);
        let dr = front.dim() / dk;
        let m = &front.matrix;
        let reduced = Matrix::from_fn(dk, dk, |i, j| (0..dr).map(|t| m[(i * dr + t, j * dr + t)]).sum());
        Ok(Self {
            registers: kept,
            matrix: reduced,
        })
    }

    /// `K ρ K†` with `K` acting on `inputs` and producing `outputs`.
    pub fn conjugate(&self, op: &Matrix, inputs: &[&str], outputs: &[Register]) -> Result<Self> {
        let front = self.to_front(inputs)?;
        let din = total_dim(&front.registers[..inputs.len()]);
        let dout = total_dim(outputs);
        if op.ncols() != din || op.nrows() != dout {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, registers need {dout}x{din}",
                op.nrows(),
                op.ncols()
            )));
        }
        let dr = front.dim() / din;
        let k = linalg::kron(op, &linalg::identity(dr));
        let mut registers = outputs.to_vec();
        registers.extend(front.registers[inputs.len()..].iter().cloned());
        let out = Self::from_raw(registers, &k * &front.matrix * k.adjoint())?;
        let order = replaced_order(&self.registers, inputs, outputs);
        let order: Vec<&str> = order.iter().map(String::as_str).collect();
        out.reorder(&order)
    }

    /// `Σ_i w_i ρ_i`, all aligned to the first operand.
    pub fn mixture(weights: &[f64], states: &[DensityOperator]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::OutOfRange("empty mixture".into()))?;
        if weights.len() != states.len() {
            return Err(Error::DimensionMismatch("one weight per state".into()));
        }
        let mut m = Matrix::zeros(first.dim(), first.dim());
        for (w, s) in weights.iter().zip(states) {
            m += s.aligned_to(&first.registers)?.matrix.scale(*w);
        }
        Self::from_raw(first.registers.clone(), m)
    }

    /// Dephases in the computational basis of the whole space.
    pub fn dephased(&self) -> Self {
        let diag = self.matrix.diagonal();
        Self {
            registers: self.registers.clone(),
            matrix: Matrix::from_diagonal(&diag),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IsometryOp {
    pub in_registers: Vec<Register>,
    pub out_registers: Vec<Register>,
    pub matrix: Matrix,
}

impl IsometryOp {
    pub fn new(in_registers: Vec<Register>, out_registers: Vec<Register>, matrix: Matrix) -> Result<Self> {
        check_registers(&in_registers)?;
        check_registers(&out_registers)?;
        if matrix.nrows() != total_dim(&out_registers) || matrix.ncols() != total_dim(&in_registers) {
            return Err(Error::DimensionMismatch(format!(
                "isometry matrix {}x{} does not match registers",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let res = linalg::isometry_residual(&matrix);
        if res > tol::ISOMETRY {
            return Err(Error::NotIsometry(res));
        }
        Ok(Self {
            in_registers,
            out_registers,
            matrix,
        })
    }

    pub fn identity(registers: Vec<Register>) -> Self {
        let d = total_dim(&registers);
        Self {
            in_registers: registers.clone(),
            out_registers: registers,
            matrix: linalg::identity(d),
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        psi.apply(&self.matrix, &labels_of(&self.in_registers), &self.out_registers)
    }

    /// Applies `V†`, mapping the output registers back to the input ones.
    pub fn apply_adjoint(&self, psi: &StateVector) -> Result<StateVector> {
        psi.apply(
            &self.matrix.adjoint(),
            &labels_of(&self.out_registers),
            &self.in_registers,
        )
    }
}

#[derive(Clone, Debug)]
pub struct KrausChannel {
    pub in_registers: Vec<Register>,
    pub out_registers: Vec<Register>,
    pub kraus_ops: Vec<Matrix>,
    pub trace_preserving: bool,
}

impl KrausChannel {
    /// Accepts trace-preserving or trace-non-increasing Kraus sets.
    pub fn new(in_registers: Vec<Register>, out_registers: Vec<Register>, kraus_ops: Vec<Matrix>) -> Result<Self> {
        check_registers(&in_registers)?;
        check_registers(&out_registers)?;
        let din = total_dim(&in_registers);
        let dout = total_dim(&out_registers);
        let mut sum = Matrix::zeros(din, din);
        for k in &kraus_ops {
            if k.nrows() != dout || k.ncols() != din {
                return Err(Error::DimensionMismatch("Kraus operator shape".into()));
            }
            sum += k.adjoint() * k;
        }
        let deficit = linalg::identity(din) - &sum;
        let trace_preserving = deficit.iter().all(|x| x.norm() <= tol::ISOMETRY);
        if !trace_preserving && linalg::min_eigenvalue(&deficit) < -tol::ISOMETRY {
            return Err(Error::InvalidState("Σ K†K exceeds the identity".into()));
        }
        Ok(Self {
            in_registers,
            out_registers,
            kraus_ops,
            trace_preserving,
        })
    }

    /// Channel `ρ ↦ Tr_env V ρ V†` of an isometry into `out ⊗ env` (env dimension `env_dim`, last factor).
    pub fn from_stinespring(
        in_registers: Vec<Register>,
        out_registers: Vec<Register>,
        env_dim: usize,
        v: &Matrix,
    ) -> Result<Self> {
        let dout = total_dim(&out_registers);
        let din = total_dim(&in_registers);
        if v.nrows() != dout * env_dim || v.ncols() != din {
            return Err(Error::DimensionMismatch("Stinespring isometry shape".into()));
        }
        let kraus_ops = (0..env_dim)
            .map(|e| Matrix::from_fn(dout, din, |o, i| v[(o * env_dim + e, i)]))
            .collect();
        Self::new(in_registers, out_registers, kraus_ops)
    }

    /// Haar-random Stinespring dilation.
    pub fn random<R: Rng + ?Sized>(
        in_registers: Vec<Register>,
        out_registers: Vec<Register>,
        env_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let din = total_dim(&in_registers);
        let big = total_dim(&out_registers) * env_dim;
        if big < din {
            return Err(Error::DimensionMismatch("dilation smaller than input".into()));
        }
        let u = haar_unitary(big, rng);
        let v = u.columns(0, din).into_owned();
        Self::from_stinespring(in_registers, out_registers, env_dim, &v)
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let inputs = labels_of(&self.in_registers);
        let mut acc: Option<DensityOperator> = None;
        for k in &self.kraus_ops {
            let term = rho.conjugate(k, &inputs, &self.out_registers)?;
            acc = Some(match acc {
                None => term,
                Some(a) => {
                    let aligned = term.aligned_to(&a.registers)?;
                    DensityOperator::from_raw(a.registers.clone(), a.matrix + aligned.matrix)?
                }
            });
        }
        acc.ok_or_else(|| Error::OutOfRange("channel without Kraus operators".into()))
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementOutcome {
    pub probability: f64,
    /// `None` for outcomes of (numerically) zero probability.
    pub state: Option<StateVector>,
}

/// Checks that `projectors` are Hermitian idempotents summing to the identity.
pub fn check_projective(projectors: &[Matrix], dim: usize) -> Result<()> {
    let mut sum = Matrix::zeros(dim, dim);
    for (i, p) in projectors.iter().enumerate() {
        if p.nrows() != dim || p.ncols() != dim {
            return Err(Error::NotProjective(format!("projector {i} has wrong shape")));
        }
        if linalg::hermitian_residual(p) > tol::PROJECTOR {
            return Err(Error::NotProjective(format!("projector {i} is not Hermitian")));
        }
        if linalg::max_abs_diff(&(p * p), p) > tol::PROJECTOR {
            return Err(Error::NotProjective(format!("projector {i} is not idempotent")));
        }
        sum += p;
    }
    if linalg::max_abs_diff(&sum, &linalg::identity(dim)) > tol::PROJECTOR {
        return Err(Error::NotProjective("projectors do not sum to the identity".into()));
    }
    Ok(())
}

pub fn projective_measure(
    psi: &StateVector,
    labels: &[&str],
    projectors: &[Matrix],
) -> Result<Vec<MeasurementOutcome>> {
    let regs: Vec<Register> = labels.iter().map(|l| psi.register(l).cloned()).collect::<Result<_>>()?;
    check_projective(projectors, total_dim(&regs))?;
    projectors
        .iter()
        .map(|p| {
            let v = psi.apply(p, labels, &regs)?;
            let probability = v.norm_sqr();
            let state = if probability > tol::BRANCH {
                v.normalized()
            } else {
                None
            };
            Ok(MeasurementOutcome { probability, state })
        })
        .collect()
}

/// Rank-one projectors onto the computational basis.
pub fn computational_projectors(dim: usize) -> Vec<Matrix> {
    (0..dim)
        .map(|k| {
            let mut p = Matrix::zeros(dim, dim);
            p[(k, k)] = linalg::ONE;
            p
        })
        .collect()
}

/// Purifies a normalized state onto `ρ ⊗ ancilla`, ancilla dimension equal to `dim ρ`.
/// Eigenvalues are used in descending order, so a pure input maps to `|v>|0>`.
pub fn purify(rho: &DensityOperator, ancilla_label: &str) -> Result<StateVector> {
    if !rho.is_normalized() {
        return Err(Error::NotNormalized(rho.trace()));
    }
    let d = rho.dim();
    let (values, vectors) = linalg::eigh(rho.matrix());
    let mut amps = Vector::zeros(d * d);
    for (k, &lam) in values.iter().enumerate() {
        let w = lam.max(0.0).sqrt();
        if w == 0.0 {
            continue;
        }
        for i in 0..d {
            amps[i * d + k] += vectors[(i, k)] * w;
        }
    }
    let mut registers = rho.registers().to_vec();
    registers.push(Register::new(ancilla_label, d));
    let v = StateVector::from_raw(registers, amps)?;
    v.normalized()
        .ok_or_else(|| Error::InvalidState("zero state cannot be purified".into()))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

/// Haar-distributed unitary from the QR decomposition of a Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let z = Matrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::ONE };
        for row in 0..dim {
            q[(row, k)] *= phase;
        }
    }
    q
}

pub fn random_unitary(dim: usize, seed: u64) -> Matrix {
    haar_unitary(dim, &mut rng_from_seed(seed))
}

pub fn haar_state<R: Rng + ?Sized>(registers: Vec<Register>, rng: &mut R) -> Result<StateVector> {
    let d = total_dim(&registers);
    let v = Vector::from_fn(d, |_, _| gaussian_c64(rng));
    StateVector::from_raw(registers, v)?
        .normalized()
        .ok_or_else(|| Error::InvalidState("zero Gaussian sample".into()))
}

pub fn random_state(registers: Vec<Register>, seed: u64) -> Result<StateVector> {
    haar_state(registers, &mut rng_from_seed(seed))
}

/// Random mixed state: marginal of a Haar state on `registers ⊗ env(env_dim)`.
pub fn random_density<R: Rng + ?Sized>(
    registers: Vec<Register>,
    env_dim: usize,
    rng: &mut R,
) -> Result<DensityOperator> {
    let env = Register::new("__env", env_dim);
    let mut all = registers.clone();
    all.push(env);
    let psi = haar_state(all, rng)?;
    psi.marginal(&labels_of(&registers))
}

/// Zero matrix helper that keeps call sites short.
pub fn zeros(rows: usize, cols: usize) -> Matrix {
    Matrix::from_element(rows, cols, ZERO)
}
