//! Coherent representation of a protocol and its compilation from bounded
//! expected cost to bounded worst-case cost.
//!
//! The pipeline runs on explicit state vectors: `Ψ ⊗ θ` is pushed through the
//! stacked isometries `U, U₂, …, U_{r+1}`, bad transcripts are pruned, the input
//! is rescaled to its flat companion `ω`, heavy transcripts are truncated and
//! the resulting protocol with abort flags is simulated. Every distance in the
//! report is measured and compared against its analytic bound.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{total_dim, DensityOperator, IsometryOp, KrausChannel, Register, StateVector};
use crate::linalg::{self, Matrix};
use crate::metrics;
use crate::protocol::{self, History, Party, ProtocolRun, ProtocolSpec};
use crate::tol;

pub fn message_label(k: usize) -> String {
    format!("M{k}")
}

/// The flag copy `M′_k` of the round-`k` message register.
pub fn copy_label(k: usize) -> String {
    format!("M{k}'")
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn labels(regs: &[Register]) -> Vec<String> {
    regs.iter().map(|r| r.label.clone()).collect()
}

// ---------------------------------------------------------------------------
// Uhlmann synthesis

/// Isometry `V` from the registers of `sigma` that `rho` lacks to the registers
/// of `rho` that `sigma` lacks, maximizing `|<rho|(I ⊗ V)|sigma>|`; the shared
/// registers are those present in both. Returns `V` and the attained overlap,
/// which equals `F(ρ_A, σ_A)` for normalized inputs.
pub fn uhlmann_isometry(rho: &StateVector, sigma: &StateVector) -> Result<(IsometryOp, f64)> {
    let rho_labels = rho.labels();
    let common: Vec<&str> = sigma.labels().into_iter().filter(|l| rho_labels.contains(l)).collect();
    uhlmann_isometry_on(rho, sigma, &common)
}

/// As [`uhlmann_isometry`] with the shared registers named explicitly; the
/// remaining registers of the two states may reuse labels.
pub fn uhlmann_isometry_on(rho: &StateVector, sigma: &StateVector, common: &[&str]) -> Result<(IsometryOp, f64)> {
    for l in common {
        if rho.register(l)?.dim != sigma.register(l)?.dim {
            return Err(Error::DimensionMismatch(format!(
                "shared register {l} differs in dimension"
            )));
        }
    }
    let rf = rho.to_front(common)?;
    let sf = sigma.to_front(common)?;
    let da = total_dim(&rf.registers()[..common.len()]);
    let out_regs = rf.registers()[common.len()..].to_vec();
    let in_regs = sf.registers()[common.len()..].to_vec();
    let db = total_dim(&out_regs);
    let dc = total_dim(&in_regs);
    if dc > db {
        return Err(Error::DimensionMismatch(format!(
            "Uhlmann isometry needs dim C = {dc} <= dim B = {db}"
        )));
    }
    let r = linalg::reshape(rf.amplitudes().as_slice(), da, db);
    let s = linalg::reshape(sf.amplitudes().as_slice(), da, dc);
    // <rho|(I ⊗ V)|sigma> = Tr(V K) with K = Sᵀ R̄.
    let k = s.transpose() * r.map(|z| z.conj());
    let svd = k.svd(true, true);
    let w = svd.u.expect("requested");
    let z_adj = svd.v_t.expect("requested");
    let v = z_adj.adjoint() * w.adjoint();
    let overlap = svd.singular_values.iter().sum::<f64>();
    let op = IsometryOp::new(in_regs, out_regs, v)?;
    Ok((op, overlap))
}

// ---------------------------------------------------------------------------
// Controlled isometries

/// `Σ_h |h><h| ⊗ V_h` with `h` ranging over the basis of `controls`; histories
/// without a block use `default`.
#[derive(Clone, Debug)]
pub struct ControlledIsometry {
    pub controls: Vec<Register>,
    pub inputs: Vec<Register>,
    pub outputs: Vec<Register>,
    pub blocks: BTreeMap<History, Matrix>,
    pub default: Matrix,
}

impl ControlledIsometry {
    pub fn block(&self, history: &[u32]) -> &Matrix {
        self.blocks.get(history).unwrap_or(&self.default)
    }

    pub fn in_registers(&self) -> Vec<Register> {
        self.controls.iter().chain(&self.inputs).cloned().collect()
    }

    pub fn out_registers(&self) -> Vec<Register> {
        self.controls.iter().chain(&self.outputs).cloned().collect()
    }

    /// Dense matrix on `controls ⊗ inputs → controls ⊗ outputs`.
    pub fn matrix(&self) -> Matrix {
        let dims: Vec<usize> = self.controls.iter().map(|r| r.dim).collect();
        let nc = total_dim(&self.controls);
        let din = total_dim(&self.inputs);
        let dout = total_dim(&self.outputs);
        let mut m = Matrix::zeros(nc * dout, nc * din);
        for ci in 0..nc {
            let h = digits(ci, &dims);
            m.view_mut((ci * dout, ci * din), (dout, din)).copy_from(self.block(&h));
        }
        m
    }

    /// Same operator with the control registers renamed.
    pub fn with_controls(&self, names: &[String]) -> Result<Self> {
        if names.len() != self.controls.len() {
            return Err(Error::DimensionMismatch("one name per control register".into()));
        }
        let mut out = self.clone();
        for (r, n) in out.controls.iter_mut().zip(names) {
            r.label = n.clone();
        }
        Ok(out)
    }

    pub fn to_isometry(&self) -> Result<IsometryOp> {
        IsometryOp::new(self.in_registers(), self.out_registers(), self.matrix())
    }

    /// Block-wise application; the result lists `controls, outputs` first.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        apply_blocks(psi, &self.controls, &self.inputs, &self.outputs, |h| {
            self.block(h).clone()
        })
    }

    pub fn apply_adjoint(&self, psi: &StateVector) -> Result<StateVector> {
        apply_blocks(psi, &self.controls, &self.outputs, &self.inputs, |h| {
            self.block(h).adjoint()
        })
    }
}

fn apply_blocks(
    psi: &StateVector,
    controls: &[Register],
    inputs: &[Register],
    outputs: &[Register],
    block: impl Fn(&[u32]) -> Matrix,
) -> Result<StateVector> {
    let mut front_labels = labels(controls);
    front_labels.extend(labels(inputs));
    let front = psi.to_front(&strs(&front_labels))?;
    for (r, want) in front.registers().iter().zip(controls.iter().chain(inputs)) {
        if r.dim != want.dim {
            return Err(Error::DimensionMismatch(format!(
                "register {} has dim {}, operator expects {}",
                r.label, r.dim, want.dim
            )));
        }
    }
    let rest = front.registers()[front_labels.len()..].to_vec();
    let dims: Vec<usize> = controls.iter().map(|r| r.dim).collect();
    let nc = total_dim(controls);
    let din = total_dim(inputs);
    let dout = total_dim(outputs);
    let dr = total_dim(&rest);
    let amps = front.amplitudes().as_slice();
    let mut out = vec![linalg::ZERO; nc * dout * dr];
    for ci in 0..nc {
        let slab = &amps[ci * din * dr..(ci + 1) * din * dr];
        if slab.iter().all(|z| z.norm_sqr() == 0.0) {
            continue;
        }
        let b = block(&digits(ci, &dims));
        let m = linalg::reshape(slab, din, dr);
        let prod = b * m;
        out[ci * dout * dr..(ci + 1) * dout * dr].copy_from_slice(&linalg::flatten(&prod));
    }
    let mut registers = controls.to_vec();
    registers.extend(outputs.iter().cloned());
    registers.extend(rest);
    StateVector::from_raw(registers, linalg::Vector::from_vec(out))
}

fn digits(mut index: usize, dims: &[usize]) -> History {
    let mut out = vec![0u32; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = (index % dims[k]) as u32;
        index /= dims[k];
    }
    out
}

/// `I ⊗ |0>` appending a register of dimension `m` after the inputs.
fn append_zero(din: usize, m: usize) -> Matrix {
    Matrix::from_fn(din * m, din, |r, c| if r == c * m { linalg::ONE } else { linalg::ZERO })
}

/// First `din` columns of the identity on `dout`.
fn embedding(din: usize, dout: usize) -> Result<Matrix> {
    if dout < din {
        return Err(Error::DimensionMismatch(format!(
            "cannot embed dimension {din} into {dout}"
        )));
    }
    Ok(Matrix::from_fn(dout, din, |r, c| {
        if r == c {
            linalg::ONE
        } else {
            linalg::ZERO
        }
    }))
}

/// Matrix of a local operator acting on a subset of `full`, with the registers
/// of the result in the order `StateVector::apply` produces.
fn embed_local(op: &protocol::LocalOp, full: &[Register]) -> Result<(Vec<Register>, Matrix)> {
    let din = total_dim(full);
    let mut cols = Vec::with_capacity(din);
    let mut out_regs: Option<Vec<Register>> = None;
    for j in 0..din {
        let e = StateVector::basis(full.to_vec(), j)?;
        let v = e.apply(&op.matrix, &strs(&op.inputs), &op.outputs)?;
        let v = match &out_regs {
            None => {
                out_regs = Some(v.registers().to_vec());
                v
            }
            Some(regs) => v.aligned_to(regs)?,
        };
        cols.push(v.amplitudes().clone());
    }
    let regs = out_regs.unwrap_or_default();
    let dout = total_dim(&regs);
    let m = Matrix::from_fn(dout, din, |r, c| cols[c][r]);
    Ok((regs, m))
}

// ---------------------------------------------------------------------------
// Coherent representation

#[derive(Clone, Debug)]
pub struct Stage {
    pub party: Party,
    pub op: ControlledIsometry,
}

/// Stacked isometries of a protocol on a fixed input: `U` (round 1), `U₂ … U_r`
/// and the two halves of `U_{r+1}` (Alice's then Bob's final operators).
#[derive(Clone, Debug)]
pub struct CoherentRepresentation {
    pub rounds: usize,
    /// `Ψ ⊗ θ`.
    pub initial: StateVector,
    pub theta: StateVector,
    pub messages: Vec<Register>,
    pub stages: Vec<Stage>,
    /// Registers outside both parties' labs.
    pub referee: Vec<String>,
    pub output_labels: Vec<String>,
}

pub fn coherent_representation(
    spec: &ProtocolSpec,
    input: &StateVector,
    run: &ProtocolRun,
) -> Result<CoherentRepresentation> {
    let r = spec.rounds;
    let initial = run
        .tree
        .get(&Vec::new())
        .map(|n| n.state.clone())
        .ok_or_else(|| Error::Protocol("empty history tree".into()))?;
    let messages: Vec<Register> = (1..=r)
        .map(|k| Register::new(message_label(k), spec.max_message(k) as usize + 1))
        .collect();
    let mut stages = Vec::with_capacity(r + 2);
    for k in 1..=r {
        let party = Party::at_depth(k - 1);
        let owned = spec.party_labels(party);
        let owned_regs: Vec<Register> = owned
            .iter()
            .map(|l| initial.register(l).cloned())
            .collect::<Result<_>>()?;
        let mk = messages[k - 1].clone();
        let mut blocks = BTreeMap::new();
        for (h, node) in run.tree.iter().filter(|(h, _)| h.len() == k - 1) {
            let mut post: Option<StateVector> = None;
            for (child, cn) in run.tree.range(h.clone()..) {
                if child.len() != k || !child.starts_with(h) {
                    continue;
                }
                let tag = StateVector::basis(vec![mk.clone()], *child.last().expect("len k") as usize)?;
                let term = cn
                    .state
                    .tensor(&tag)?
                    .scaled(linalg::real((cn.probability / node.probability).sqrt()));
                post = Some(match post {
                    None => term,
                    Some(acc) => acc.add(&term)?,
                });
            }
            let Some(post) = post else { continue };
            let spectators: Vec<&str> = node
                .state
                .labels()
                .into_iter()
                .filter(|l| !owned.iter().any(|o| o == l))
                .collect();
            let mut sigma_order = spectators.clone();
            sigma_order.extend(strs(&owned));
            let mut rho_order = sigma_order.clone();
            rho_order.push(mk.label.as_str());
            let sigma = node.state.reorder(&sigma_order)?;
            let rho = post.reorder(&rho_order)?;
            let (v, overlap) = uhlmann_isometry_on(&rho, &sigma, &spectators)?;
            let gap = rho.norm_sqr().sqrt() - overlap;
            if gap > tol::UHLMANN_GAP {
                return Err(Error::UhlmannGap {
                    history: h.clone(),
                    gap,
                });
            }
            blocks.insert(h.clone(), v.matrix);
        }
        let din = total_dim(&owned_regs);
        let mut outputs = owned_regs.clone();
        outputs.push(mk.clone());
        stages.push(Stage {
            party,
            op: ControlledIsometry {
                controls: messages[..k - 1].to_vec(),
                inputs: owned_regs,
                outputs,
                blocks,
                default: append_zero(din, mk.dim),
            },
        });
    }
    for party in [Party::Alice, Party::Bob] {
        let owned = spec.party_labels(party);
        let owned_regs: Vec<Register> = owned
            .iter()
            .map(|l| initial.register(l).cloned())
            .collect::<Result<_>>()?;
        let din = total_dim(&owned_regs);
        let mut blocks = BTreeMap::new();
        let mut out_regs: Option<Vec<Register>> = None;
        for (h, f) in &spec.finals {
            let op = match party {
                Party::Alice => f.alice.as_ref(),
                Party::Bob => Some(&f.bob),
            };
            let (regs, m) = match op {
                Some(op) => embed_local(op, &owned_regs)?,
                None => (owned_regs.clone(), linalg::identity(din)),
            };
            let m = match &out_regs {
                None => {
                    out_regs = Some(regs);
                    m
                }
                Some(target) => realign_rows(&m, &regs, target)?,
            };
            blocks.insert(h.clone(), m);
        }
        let outputs = out_regs.unwrap_or_else(|| owned_regs.clone());
        let default = embedding(din, total_dim(&outputs))?;
        stages.push(Stage {
            party,
            op: ControlledIsometry {
                controls: messages.clone(),
                inputs: owned_regs,
                outputs,
                blocks,
                default,
            },
        });
    }
    let mut lab = spec.party_labels(Party::Alice);
    lab.extend(spec.party_labels(Party::Bob));
    let referee: Vec<String> = input
        .labels()
        .into_iter()
        .filter(|l| !lab.iter().any(|o| o == l))
        .map(String::from)
        .collect();
    Ok(CoherentRepresentation {
        rounds: r,
        initial,
        theta: spec.entanglement.clone(),
        messages,
        stages,
        referee,
        output_labels: spec.output_labels(input),
    })
}

/// Reorders the output rows of `m` from register order `from` to `to`.
fn realign_rows(m: &Matrix, from: &[Register], to: &[Register]) -> Result<Matrix> {
    let mut cols = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let v = StateVector::from_raw(from.to_vec(), m.column(j).into_owned())?.aligned_to(to)?;
        cols.push(v.amplitudes().clone());
    }
    Ok(Matrix::from_fn(m.nrows(), m.ncols(), |r, c| cols[c][r]))
}

impl CoherentRepresentation {
    /// `U_{r+1} ⋯ U₂ U |v>`.
    pub fn forward(&self, v: &StateVector) -> Result<StateVector> {
        self.stages.iter().try_fold(v.clone(), |acc, s| s.op.apply(&acc))
    }

    /// `U† U₂† ⋯ U_{r+1}† |v>`.
    pub fn adjoint(&self, v: &StateVector) -> Result<StateVector> {
        self.stages
            .iter()
            .rev()
            .try_fold(v.clone(), |acc, s| s.op.apply_adjoint(&acc))
    }

    /// `Σ_t √w_t |state_t>|t>` on the message registers.
    pub fn tagged(&self, branches: &[(History, f64, StateVector)]) -> Result<StateVector> {
        let mut acc: Option<StateVector> = None;
        for (t, w, s) in branches {
            let d: Vec<usize> = t.iter().map(|&i| i as usize).collect();
            let tag = StateVector::product_basis(self.messages.clone(), &d)?;
            let term = s.tensor(&tag)?.scaled(linalg::real(w.max(0.0).sqrt()));
            acc = Some(match acc {
                None => term,
                Some(a) => {
                    let term = term.aligned_to(a.registers())?;
                    a.add(&term)?
                }
            });
        }
        acc.ok_or_else(|| Error::EmptyGoodSet("no branches to superpose".into()))
    }

    /// `‖U_{r+1}⋯U(Ψ⊗θ) − Σ √p |τ>|t>‖`.
    pub fn reconstruction_residual(&self, run: &ProtocolRun) -> Result<f64> {
        let fwd = self.forward(&self.initial)?;
        let branches: Vec<_> = run
            .transcript
            .entries
            .iter()
            .map(|e| (e.tuple.clone(), e.probability, e.tau.clone()))
            .collect();
        let expected = self.tagged(&branches)?.aligned_to(fwd.registers())?;
        fwd.distance(&expected)
    }

    /// The same stages applied to another input on the same registers.
    pub fn with_initial(&self, initial: StateVector) -> Result<Self> {
        let initial = initial.aligned_to(self.initial.registers())?;
        Ok(Self {
            initial,
            ..self.clone()
        })
    }
}

// ---------------------------------------------------------------------------
// Pruning

#[derive(Clone, Debug, Serialize)]
pub struct PruneSplit {
    pub good: Vec<(History, f64)>,
    pub bad: Vec<(History, f64)>,
    pub good_mass: f64,
    /// Renormalized distribution `p′` on the good set.
    pub renormalized: Vec<(History, f64)>,
}

/// Splits a distribution by `F² > 1 − ε` and renormalizes on the good part.
pub fn prune_distribution(p: &[(History, f64)], fidelity_sq: &[f64], eps: f64) -> Result<PruneSplit> {
    if p.len() != fidelity_sq.len() {
        return Err(Error::DimensionMismatch("one fidelity per tuple".into()));
    }
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for ((t, q), f2) in p.iter().zip(fidelity_sq) {
        if *f2 <= 1.0 - eps - tol::SUPPORT {
            bad.push((t.clone(), *q));
        } else {
            good.push((t.clone(), *q));
        }
    }
    let good_mass: f64 = good.iter().map(|(_, q)| q).sum();
    if good.is_empty() || good_mass <= 0.0 {
        return Err(Error::EmptyGoodSet(format!(
            "every tuple fails F² > 1 − ε at ε = {eps}"
        )));
    }
    let renormalized = good.iter().map(|(t, q)| (t.clone(), q / good_mass)).collect();
    Ok(PruneSplit {
        good,
        bad,
        good_mass,
        renormalized,
    })
}

#[derive(Clone, Debug)]
pub struct Pruned {
    pub eps: f64,
    pub cost: f64,
    pub split: PruneSplit,
    pub fidelity_sq: BTreeMap<History, f64>,
    /// `κ` on the registers of `τ` outside the output, per good tuple.
    pub kappa: BTreeMap<History, StateVector>,
    /// `P(Ψ⊗θ, U†⋯U_{r+1}† Σ_G √p′ Ψ⊗κ|t>)`.
    pub residual: f64,
    /// Same distance evaluated before the adjoint chain.
    pub tagged_residual: f64,
    pub weight: f64,
}

/// Bad-tuple pruning against the pure target `Ψ` (input with the sent register relabeled).
pub fn prune_bad_tuples(
    rep: &CoherentRepresentation,
    run: &ProtocolRun,
    target: &StateVector,
    eps: f64,
    cost: f64,
) -> Result<Pruned> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::OutOfRange(format!("eps = {eps} must lie in [0, 1)")));
    }
    let out = strs(&rep.output_labels);
    let target = target.reorder(&out)?;
    let target_rho = target.density();
    let mut fidelity_sq = BTreeMap::new();
    let mut f2s = Vec::new();
    for e in &run.transcript.entries {
        let f = metrics::fidelity(&e.tau.marginal(&out)?, &target_rho)?;
        fidelity_sq.insert(e.tuple.clone(), f * f);
        f2s.push(f * f);
    }
    let split = prune_distribution(&run.transcript.distribution(), &f2s, eps)?;
    let mut kappa = BTreeMap::new();
    for (t, _) in &split.good {
        let e = run
            .transcript
            .entries
            .iter()
            .find(|e| &e.tuple == t)
            .expect("tuple from transcript");
        let (v, _) = uhlmann_isometry(&e.tau, &target)?;
        let k = StateVector::from_raw(v.out_registers.clone(), v.matrix.column(0).into_owned())?;
        kappa.insert(t.clone(), k);
    }
    let branches = good_branches(&split.renormalized, &kappa, &target)?;
    let chain = rep.tagged(&branches)?;
    let residual = metrics::vector_purified_distance(&rep.initial, &rep.adjoint(&chain)?)?;
    let fwd = rep.forward(&rep.initial)?;
    let tagged_residual = metrics::vector_purified_distance(&fwd, &chain.aligned_to(fwd.registers())?)?;
    let weight = protocol::tuple_weight(&split.renormalized);
    Ok(Pruned {
        eps,
        cost,
        split,
        fidelity_sq,
        kappa,
        residual,
        tagged_residual,
        weight,
    })
}

fn good_branches(
    dist: &[(History, f64)],
    kappa: &BTreeMap<History, StateVector>,
    target: &StateVector,
) -> Result<Vec<(History, f64, StateVector)>> {
    dist.iter()
        .map(|(t, q)| {
            let k = kappa
                .get(t)
                .ok_or_else(|| Error::Protocol(format!("no κ for tuple {t:?}")))?;
            Ok((t.clone(), *q, target.tensor(k)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Rescaling

#[derive(Clone, Debug)]
pub struct Rescaled {
    /// `e_d · d`: `λ_min(Ψ_R) · dim R`.
    pub alpha: f64,
    /// `K = √λ_min(Ψ_R) · Ψ_R^{-1/2}` on the referee registers.
    pub kraus: Matrix,
    pub referee: Vec<Register>,
    /// `KΨ/√α`.
    pub omega: StateVector,
    /// `P(ω⊗θ, U†⋯U_{r+1}† Σ_G √p′ ω⊗κ|t>)`.
    pub residual: f64,
    pub bound: f64,
}

/// The single-Kraus map `Ẽ(ρ) = K ρ K†` on the referee registers.
pub fn rescaling_map(input: &StateVector, referee: &[String]) -> Result<(Vec<Register>, Matrix, f64)> {
    let psi_r = input.marginal(&strs(referee))?;
    let (vals, _) = linalg::eigh(psi_r.matrix());
    let lmin = *vals.last().expect("nonempty");
    if lmin <= tol::SUPPORT {
        return Err(Error::InvalidState(format!(
            "referee marginal is not full rank (λ_min = {lmin:e})"
        )));
    }
    let k = linalg::hermitian_fn(psi_r.matrix(), |x| (lmin / x).sqrt());
    Ok((psi_r.registers().to_vec(), k, lmin * psi_r.dim() as f64))
}

pub fn rescaling_channel(input: &StateVector, referee: &[String]) -> Result<KrausChannel> {
    let (regs, k, _) = rescaling_map(input, referee)?;
    KrausChannel::new(regs.clone(), regs, vec![k])
}

pub fn rescale_to_omega(
    rep: &CoherentRepresentation,
    pruned: &Pruned,
    input: &StateVector,
    sent: &str,
    received: &str,
) -> Result<Rescaled> {
    let (referee, kraus, alpha) = rescaling_map(input, &rep.referee)?;
    let omega = input
        .apply(&kraus, &strs(&labels(&referee)), &referee)?
        .scaled(linalg::real(1.0 / alpha.sqrt()));
    let omega_rep = omega_representation(rep, &omega)?;
    let target = omega.relabel(sent, received)?.reorder(&strs(&rep.output_labels))?;
    let branches = good_branches(&pruned.split.renormalized, &pruned.kappa, &target)?;
    let chain = omega_rep.tagged(&branches)?;
    let residual = metrics::vector_purified_distance(&omega_rep.initial, &omega_rep.adjoint(&chain)?)?;
    Ok(Rescaled {
        alpha,
        kraus,
        referee,
        omega,
        residual,
        bound: (8.0 * pruned.eps / alpha).sqrt(),
    })
}

fn omega_representation(rep: &CoherentRepresentation, omega: &StateVector) -> Result<CoherentRepresentation> {
    rep.with_initial(omega.tensor(&rep.theta)?)
}

// ---------------------------------------------------------------------------
// Truncation

#[derive(Clone, Debug, Serialize)]
pub struct Truncation {
    pub mu: f64,
    pub eps: f64,
    pub cost: f64,
    /// `C/((1−ε)μ)`: tuples with `log ∏ i` above this are dropped.
    pub log_threshold: f64,
    pub kept: Vec<(History, f64)>,
    pub dropped: Vec<(History, f64)>,
    pub dropped_mass: f64,
    /// `q`: `p′` renormalized on the kept tuples.
    pub renormalized: Vec<(History, f64)>,
    /// `max log ∏(i_k + 1)` over kept tuples.
    pub worst_case_cost: f64,
    pub cost_bound: f64,
}

impl Truncation {
    pub fn threshold(&self) -> f64 {
        self.log_threshold.exp2()
    }

    /// All nonempty prefixes of kept tuples.
    pub fn prefixes(&self) -> BTreeSet<History> {
        let mut set = BTreeSet::new();
        for (t, _) in &self.kept {
            for k in 1..=t.len() {
                set.insert(t[..k].to_vec());
            }
        }
        set
    }
}

pub fn flagged_log_cost(tuple: &[u32]) -> f64 {
    tuple.iter().map(|&i| (i as f64 + 1.0).log2()).sum()
}

/// Drops tuples with `i₁⋯i_r > 2^{C/((1−ε)μ)}` from `p′` and renormalizes.
pub fn truncate_distribution(p_prime: &[(History, f64)], mu: f64, cost: f64, eps: f64) -> Result<Truncation> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::OutOfRange(format!(
            "truncation requires 0 < μ < 1, got μ = {mu}"
        )));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::OutOfRange(format!("eps = {eps} must lie in [0, 1)")));
    }
    if cost < 0.0 {
        return Err(Error::OutOfRange(format!("expected cost {cost} is negative")));
    }
    let log_threshold = cost / ((1.0 - eps) * mu);
    let (dropped, kept): (Vec<_>, Vec<_>) = p_prime
        .iter()
        .cloned()
        .partition(|(t, _)| protocol::tuple_log_cost(t) > log_threshold);
    let kept_mass: f64 = kept.iter().map(|(_, q)| q).sum();
    if kept.is_empty() || kept_mass <= 0.0 {
        return Err(Error::EmptyGoodSet(format!("no tuple survives truncation at μ = {mu}")));
    }
    let renormalized = kept.iter().map(|(t, q)| (t.clone(), q / kept_mass)).collect();
    let worst_case_cost = kept.iter().map(|(t, _)| flagged_log_cost(t)).fold(0.0, f64::max);
    Ok(Truncation {
        mu,
        eps,
        cost,
        log_threshold,
        dropped_mass: dropped.iter().map(|(_, q)| q).sum(),
        kept,
        dropped,
        renormalized,
        worst_case_cost,
        cost_bound: 2.0 * log_threshold,
    })
}

/// The protocol with flag registers `M′_k` and abort on `|0>`.
#[derive(Clone, Debug)]
pub struct CompiledProtocol {
    pub truncation: Truncation,
    pub prefixes: BTreeSet<History>,
    pub rounds: usize,
    pub messages: Vec<Register>,
    pub stages: Vec<Stage>,
    /// Flag unitaries `W_1 … W_r`.
    pub flags: Vec<FlagUnitary>,
    pub output_labels: Vec<String>,
    pub worst_case_cost: f64,
    pub error_bound: f64,
}

#[derive(Clone, Debug)]
pub struct Execution {
    pub output: DensityOperator,
    /// Squared norm of the branch with `M′_r = 0`.
    pub abort_mass: f64,
}

/// Round-`j` register held by `party`: the sender keeps `M_j`, the receiver `M′_j`.
fn own_copy(party: Party, j: usize) -> String {
    if Party::at_depth(j - 1) == party {
        message_label(j)
    } else {
        copy_label(j)
    }
}

/// `W_k |h>|j>|x> = |h>|j>|x + j>` when `(h, j)` is a kept prefix, identity otherwise.
#[derive(Clone, Debug)]
pub struct FlagUnitary {
    pub controls: Vec<Register>,
    pub message: Register,
    pub copy: Register,
    pub prefixes: BTreeSet<History>,
}

impl FlagUnitary {
    fn shift(&self, h: &[u32], j: usize) -> usize {
        let mut key = h.to_vec();
        key.push(j as u32);
        if self.prefixes.contains(&key) {
            j
        } else {
            0
        }
    }

    /// Target index of `|j>|x>` under the block for history `h`.
    fn image(&self, h: &[u32], j: usize, x: usize) -> usize {
        let m = self.message.dim;
        j * m + (x + self.shift(h, j)) % m
    }

    /// Dense matrix on `controls ⊗ M_k ⊗ M′_k`.
    pub fn matrix(&self) -> Matrix {
        let m = self.message.dim;
        let dims: Vec<usize> = self.controls.iter().map(|r| r.dim).collect();
        let nc = total_dim(&self.controls);
        let mut out = Matrix::zeros(nc * m * m, nc * m * m);
        for ci in 0..nc {
            let h = digits(ci, &dims);
            for j in 0..m {
                for x in 0..m {
                    out[(ci * m * m + self.image(&h, j, x), ci * m * m + j * m + x)] = linalg::ONE;
                }
            }
        }
        out
    }

    pub fn is_permutation(&self) -> bool {
        let m = self.message.dim;
        let dims: Vec<usize> = self.controls.iter().map(|r| r.dim).collect();
        (0..total_dim(&self.controls)).all(|ci| {
            let h = digits(ci, &dims);
            let images: BTreeSet<usize> = (0..m * m).map(|jx| self.image(&h, jx / m, jx % m)).collect();
            images.len() == m * m
        })
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        let mut front_labels = labels(&self.controls);
        front_labels.push(self.message.label.clone());
        front_labels.push(self.copy.label.clone());
        let front = psi.to_front(&strs(&front_labels))?;
        let m = self.message.dim;
        let dims: Vec<usize> = self.controls.iter().map(|r| r.dim).collect();
        let nc = total_dim(&self.controls);
        let dr = front.dim() / (nc * m * m);
        let amps = front.amplitudes().as_slice();
        let mut out = vec![linalg::ZERO; amps.len()];
        for ci in 0..nc {
            let h = digits(ci, &dims);
            for j in 0..m {
                for x in 0..m {
                    let src = (ci * m * m + j * m + x) * dr;
                    let dst = (ci * m * m + self.image(&h, j, x)) * dr;
                    out[dst..dst + dr].copy_from_slice(&amps[src..src + dr]);
                }
            }
        }
        StateVector::from_raw(front.registers().to_vec(), linalg::Vector::from_vec(out))
    }
}

pub fn compile(rep: &CoherentRepresentation, truncation: Truncation, error_bound: f64) -> Result<CompiledProtocol> {
    let prefixes = truncation.prefixes();
    let r = rep.rounds;
    let mut stages = Vec::with_capacity(rep.stages.len());
    let mut flags = Vec::with_capacity(r);
    for (idx, s) in rep.stages.iter().enumerate() {
        let k = (idx + 1).min(r + 1);
        let names: Vec<String> = (1..k).map(|j| own_copy(s.party, j)).collect();
        stages.push(Stage {
            party: s.party,
            op: s.op.with_controls(&names)?,
        });
        if idx < r {
            let m = rep.messages[idx].clone();
            let copy = Register::new(copy_label(idx + 1), m.dim);
            let controls = stages[idx].op.controls.clone();
            flags.push(FlagUnitary {
                controls,
                message: m,
                copy,
                prefixes: prefixes.clone(),
            });
        }
    }
    Ok(CompiledProtocol {
        worst_case_cost: truncation.worst_case_cost,
        truncation,
        prefixes,
        rounds: r,
        messages: rep.messages.clone(),
        stages,
        flags,
        output_labels: rep.output_labels.clone(),
        error_bound,
    })
}

impl CompiledProtocol {
    /// Coherent execution on `input ⊗ θ` (registers of the coherent representation).
    pub fn execute(&self, initial: &StateVector) -> Result<Execution> {
        let mut state = initial.clone();
        for (idx, s) in self.stages.iter().enumerate() {
            state = s.op.apply(&state)?;
            if idx < self.rounds {
                let copy = Register::new(copy_label(idx + 1), self.messages[idx].dim);
                state = state.tensor(&StateVector::basis(vec![copy], 0)?)?;
                state = self.flags[idx].apply(&state)?;
            }
        }
        let last = copy_label(self.rounds);
        let flag = state.marginal(&[last.as_str()])?;
        let abort_mass = flag.matrix()[(0, 0)].re;
        let output = state.marginal(&strs(&self.output_labels))?;
        Ok(Execution { output, abort_mass })
    }

    /// Whether every `W_k` maps the computational basis bijectively onto itself.
    pub fn flags_are_permutations(&self) -> bool {
        self.flags.iter().all(FlagUnitary::is_permutation)
    }
}

// ---------------------------------------------------------------------------
// End-to-end pipeline

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn new(measured: f64, bound: f64, slack: f64) -> Self {
        Self {
            measured,
            bound,
            pass: measured <= bound + slack,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub schema: u32,
    pub rounds: usize,
    pub tuples: usize,
    pub expected_cost: f64,
    pub measured_error: f64,
    pub eps: f64,
    pub mu: f64,
    pub alpha: f64,
    pub reconstruction: Check,
    pub convex_split: f64,
    pub good_tuples: usize,
    pub bad_tuples: usize,
    pub bad_mass: Check,
    pub prune_residual: Check,
    pub prune_weight: Check,
    pub rescale_residual: Check,
    pub kept_tuples: usize,
    pub dropped_tuples: usize,
    pub dropped_mass: Check,
    pub log_threshold: f64,
    pub worst_case_cost: Check,
    pub pi_residual: Check,
    pub compiled_error: Check,
    pub abort_mass: f64,
    pub pi_abort_mass: f64,
    pub pi_output_distance: f64,
    pub flags_are_permutations: bool,
    pub pass: bool,
}

impl PipelineReport {
    pub fn checks(&self) -> Vec<(&'static str, &Check)> {
        vec![
            ("reconstruction", &self.reconstruction),
            ("bad_mass", &self.bad_mass),
            ("prune_residual", &self.prune_residual),
            ("prune_weight", &self.prune_weight),
            ("rescale_residual", &self.rescale_residual),
            ("dropped_mass", &self.dropped_mass),
            ("worst_case_cost", &self.worst_case_cost),
            ("pi_residual", &self.pi_residual),
            ("compiled_error", &self.compiled_error),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub representation: CoherentRepresentation,
    pub pruned: Pruned,
    pub rescaled: Rescaled,
    pub compiled: CompiledProtocol,
}

/// Runs every stage on `input`. `eps` defaults to the measured protocol error and
/// may not be smaller than it.
pub fn run_pipeline(spec: &ProtocolSpec, input: &StateVector, eps: Option<f64>, mu: f64) -> Result<PipelineOutcome> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::OutOfRange(format!(
            "truncation requires 0 < μ < 1, got μ = {mu}"
        )));
    }
    let slack = tol::BOUND_SLACK * tol::scale_from_env();
    let run = protocol::run_protocol(spec, input)?;
    let target = input.relabel(&spec.sent, &spec.received)?;
    let measured_error = metrics::purified_distance(&run.output, &target.density())?;
    let eps = match eps {
        None => measured_error,
        Some(e) if e + slack < measured_error => {
            return Err(Error::OutOfRange(format!(
                "eps = {e} is below the measured protocol error {measured_error}"
            )));
        }
        Some(e) => e,
    };
    let cost = protocol::expected_cost(&run.transcript)?;
    let rep = coherent_representation(spec, input, &run)?;
    let reconstruction = rep.reconstruction_residual(&run)?;
    let convex_split = protocol::convex_split_residual(spec, &run)?;
    let pruned = prune_bad_tuples(&rep, &run, &target, eps, cost)?;
    let rescaled = rescale_to_omega(&rep, &pruned, input, &spec.sent, &spec.received)?;
    let truncation = truncate_distribution(&pruned.split.renormalized, mu, cost, eps)?;
    let error_bound = rescaled.bound + mu.sqrt();
    let omega_rep = omega_representation(&rep, &rescaled.omega)?;
    let omega_target = rescaled
        .omega
        .relabel(&spec.sent, &spec.received)?
        .reorder(&strs(&rep.output_labels))?;
    let pi_chain = omega_rep.tagged(&good_branches(&truncation.renormalized, &pruned.kappa, &omega_target)?)?;
    let pi = omega_rep.adjoint(&pi_chain)?;
    let pi_residual = metrics::vector_purified_distance(&omega_rep.initial, &pi)?;
    let compiled = compile(&rep, truncation, error_bound)?;
    let on_omega = compiled.execute(&omega_rep.initial)?;
    let on_pi = compiled.execute(&pi)?;
    let omega_rho = omega_target.density();
    let compiled_error = metrics::purified_distance(&on_omega.output, &omega_rho)?;
    let pi_output_distance = metrics::purified_distance(&on_pi.output, &omega_rho)?;
    let t = &compiled.truncation;
    let report = PipelineReport {
        schema: 1,
        rounds: spec.rounds,
        tuples: run.transcript.entries.len(),
        expected_cost: cost,
        measured_error,
        eps,
        mu,
        alpha: rescaled.alpha,
        reconstruction: Check::new(reconstruction, 1e-8, 0.0),
        convex_split,
        good_tuples: pruned.split.good.len(),
        bad_tuples: pruned.split.bad.len(),
        bad_mass: Check::new(1.0 - pruned.split.good_mass, eps, slack),
        prune_residual: Check::new(pruned.residual, 2.0 * eps.sqrt(), slack),
        prune_weight: Check::new(pruned.weight, cost / (1.0 - eps), 1e-9),
        rescale_residual: Check::new(rescaled.residual, rescaled.bound, slack),
        kept_tuples: t.kept.len(),
        dropped_tuples: t.dropped.len(),
        dropped_mass: Check::new(t.dropped_mass, mu, 0.0),
        log_threshold: t.log_threshold,
        worst_case_cost: Check::new(t.worst_case_cost, t.cost_bound, 1e-9),
        pi_residual: Check::new(pi_residual, error_bound, slack),
        compiled_error: Check::new(compiled_error, error_bound, slack),
        abort_mass: on_omega.abort_mass,
        pi_abort_mass: on_pi.abort_mass,
        pi_output_distance,
        flags_are_permutations: compiled.flags_are_permutations(),
        pass: false,
    };
    let pass = report.flags_are_permutations && report.checks().iter().all(|(_, c)| c.pass);
    Ok(PipelineOutcome {
        report: PipelineReport { pass, ..report },
        representation: rep,
        pruned,
        rescaled,
        compiled,
    })
}
