//! Interactive classical-message protocols with shared entanglement.
//!
//! Alice measures in odd rounds and Bob in even rounds; each measurement is
//! chosen by the history of previous messages. After the last round both
//! parties apply history-dependent final operators, and Bob's output carries
//! the received copy of the sent register.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    check_projective, haar_unitary, rng_from_seed, total_dim, DensityOperator, Register, StateVector,
};
use crate::linalg::{self, Matrix, Vector, C64};
use crate::metrics;
use crate::tol;

pub const ALICE_ENT: &str = "EA";
pub const BOB_ENT: &str = "EB";

pub type History = Vec<u32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    /// Party measuring in the round that follows `depth` earlier rounds.
    pub fn at_depth(depth: usize) -> Self {
        if depth.is_multiple_of(2) {
            Party::Alice
        } else {
            Party::Bob
        }
    }
}

#[derive(Clone, Debug)]
pub struct Measurement {
    pub registers: Vec<String>,
    /// `(message, projector)` pairs; messages are distinct positive integers.
    pub outcomes: Vec<(u32, Matrix)>,
}

#[derive(Clone, Debug)]
pub struct LocalOp {
    pub inputs: Vec<String>,
    pub outputs: Vec<Register>,
    pub matrix: Matrix,
}

#[derive(Clone, Debug)]
pub struct FinalOps {
    pub alice: Option<LocalOp>,
    pub bob: LocalOp,
}

#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    pub rounds: usize,
    pub alice: Vec<Register>,
    pub bob: Vec<Register>,
    /// `|θ>` on `EA EB` (either may have dimension 1).
    pub entanglement: StateVector,
    pub sent: String,
    pub received: String,
    pub measurements: BTreeMap<History, Measurement>,
    pub finals: BTreeMap<History, FinalOps>,
}

fn labels(regs: &[Register]) -> Vec<String> {
    regs.iter().map(|r| r.label.clone()).collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

impl ProtocolSpec {
    pub fn party_labels(&self, party: Party) -> Vec<String> {
        let (regs, ent) = match party {
            Party::Alice => (&self.alice, ALICE_ENT),
            Party::Bob => (&self.bob, BOB_ENT),
        };
        let mut l = labels(regs);
        l.push(ent.to_string());
        l
    }

    pub fn entanglement_register(&self, label: &str) -> Result<Register> {
        self.entanglement.register(label).cloned()
    }

    /// Registers of Bob's final output (shared by all histories).
    pub fn bob_outputs(&self) -> Result<&[Register]> {
        self.finals
            .values()
            .next()
            .map(|f| f.bob.outputs.as_slice())
            .ok_or_else(|| Error::Protocol("protocol has no final operators".into()))
    }

    /// Static checks: round parity, register ownership and operator shapes.
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.rounds.is_multiple_of(2) {
            return Err(Error::Protocol(format!("round count {} must be odd", self.rounds)));
        }
        let ent = self.entanglement.labels();
        if ent != [ALICE_ENT, BOB_ENT] {
            return Err(Error::Protocol(format!(
                "entanglement registers must be [{ALICE_ENT}, {BOB_ENT}], got {ent:?}"
            )));
        }
        let mut all = self.alice.clone();
        all.extend(self.bob.iter().cloned());
        all.extend(self.entanglement.registers().iter().cloned());
        crate::hilbert::check_registers(&all)?;
        if !self.alice.iter().any(|r| r.label == self.sent) {
            return Err(Error::Protocol(format!("sent register {} is not Alice's", self.sent)));
        }
        for (h, m) in &self.measurements {
            if h.len() >= self.rounds {
                return Err(Error::Protocol(format!(
                    "measurement at history {h:?} beyond round {}",
                    self.rounds
                )));
            }
            let owned = self.party_labels(Party::at_depth(h.len()));
            let mut dim = 1;
            for l in &m.registers {
                if !owned.contains(l) {
                    return Err(Error::Protocol(format!(
                        "history {h:?}: register {l} not held by the measuring party"
                    )));
                }
                dim *= all.iter().find(|r| &r.label == l).map(|r| r.dim).unwrap_or(1);
            }
            let mut seen = Vec::new();
            for (msg, _) in &m.outcomes {
                if *msg == 0 || seen.contains(msg) {
                    return Err(Error::Protocol(format!(
                        "history {h:?}: message {msg} repeated or zero"
                    )));
                }
                seen.push(*msg);
            }
            let ps: Vec<Matrix> = m.outcomes.iter().map(|(_, p)| p.clone()).collect();
            check_projective(&ps, dim).map_err(|e| Error::NotProjective(format!("history {h:?}: {e}")))?;
        }
        let mut bob_out: Option<&[Register]> = None;
        for (h, f) in &self.finals {
            if h.len() != self.rounds {
                return Err(Error::Protocol(format!(
                    "final operator at history {h:?} of wrong length"
                )));
            }
            if let Some(a) = &f.alice {
                let owned = self.party_labels(Party::Alice);
                if a.inputs.iter().any(|l| !owned.contains(l)) || labels(&a.outputs) != a.inputs {
                    return Err(Error::Protocol(format!(
                        "history {h:?}: Alice's final must be a unitary on her registers"
                    )));
                }
                if linalg::isometry_residual(&a.matrix) > tol::ISOMETRY || !a.matrix.is_square() {
                    return Err(Error::NotIsometry(linalg::isometry_residual(&a.matrix)));
                }
            }
            let owned = self.party_labels(Party::Bob);
            if f.bob.inputs.iter().any(|l| !owned.contains(l)) {
                return Err(Error::Protocol(format!(
                    "history {h:?}: Bob's final acts outside his registers"
                )));
            }
            if !f.bob.outputs.iter().any(|r| r.label == self.received) {
                return Err(Error::Protocol(format!(
                    "history {h:?}: Bob's final does not produce {}",
                    self.received
                )));
            }
            if linalg::isometry_residual(&f.bob.matrix) > tol::ISOMETRY {
                return Err(Error::NotIsometry(linalg::isometry_residual(&f.bob.matrix)));
            }
            match bob_out {
                None => bob_out = Some(&f.bob.outputs),
                Some(o) if o != f.bob.outputs.as_slice() => {
                    return Err(Error::Protocol(
                        "Bob's output registers differ between histories".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Registers of the averaged output: input minus the sent register plus the received one.
    pub fn output_labels(&self, input: &StateVector) -> Vec<String> {
        let mut out: Vec<String> = input
            .labels()
            .into_iter()
            .filter(|l| *l != self.sent)
            .map(String::from)
            .collect();
        out.push(self.received.clone());
        out
    }

    /// The ideal output: the input with the sent register relabeled as received.
    pub fn target(&self, input: &StateVector) -> Result<DensityOperator> {
        input.relabel(&self.sent, &self.received).map(|v| v.density())
    }

    /// Largest message index used in round `k` (1-based).
    pub fn max_message(&self, k: usize) -> u32 {
        self.measurements
            .iter()
            .filter(|(h, _)| h.len() + 1 == k)
            .flat_map(|(_, m)| m.outcomes.iter().map(|(i, _)| *i))
            .max()
            .unwrap_or(1)
    }
}

#[derive(Clone, Debug)]
pub struct TranscriptEntry {
    pub tuple: History,
    pub probability: f64,
    /// Post-protocol state `τ` on all registers (including `EA` and Bob's outputs).
    pub tau: StateVector,
}

#[derive(Clone, Debug, Default)]
pub struct TranscriptDistribution {
    pub entries: Vec<TranscriptEntry>,
}

impl TranscriptDistribution {
    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    pub fn distribution(&self) -> Vec<(History, f64)> {
        self.entries.iter().map(|e| (e.tuple.clone(), e.probability)).collect()
    }

    /// CSV with columns `tuple,probability,log_cost`; tuples are space separated.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tuple,probability,log_cost\n");
        for e in &self.entries {
            let t: Vec<String> = e.tuple.iter().map(|i| i.to_string()).collect();
            s.push_str(&format!(
                "{},{},{}\n",
                t.join(" "),
                e.probability,
                tuple_log_cost(&e.tuple)
            ));
        }
        s
    }
}

/// `log(i_1 · … · i_r)`; zero messages cost `+∞`.
pub fn tuple_log_cost(tuple: &[u32]) -> f64 {
    tuple.iter().map(|&i| (i as f64).log2()).sum()
}

#[derive(Clone, Debug)]
pub struct HistoryNode {
    /// Probability of reaching this prefix.
    pub probability: f64,
    /// Normalized global state `φ` after the prefix.
    pub state: StateVector,
}

#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub transcript: TranscriptDistribution,
    pub output: DensityOperator,
    pub tree: BTreeMap<History, HistoryNode>,
}

/// Executes the protocol on `input ⊗ θ`, branching on every outcome.
pub fn run_protocol(spec: &ProtocolSpec, input: &StateVector) -> Result<ProtocolRun> {
    spec.validate()?;
    for l in spec.alice.iter().chain(&spec.bob) {
        let r = input.register(&l.label)?;
        if r.dim != l.dim {
            return Err(Error::DimensionMismatch(format!(
                "register {} has dim {} in the input, {} in the protocol",
                l.label, r.dim, l.dim
            )));
        }
    }
    let start = input.tensor(&spec.entanglement)?;
    let mut tree = BTreeMap::new();
    tree.insert(
        Vec::new(),
        HistoryNode {
            probability: 1.0,
            state: start,
        },
    );
    let mut frontier = vec![Vec::new()];
    for _round in 0..spec.rounds {
        let mut next = Vec::new();
        for h in frontier {
            let node = tree[&h].clone();
            let m = spec
                .measurements
                .get(&h)
                .ok_or_else(|| Error::Protocol(format!("no measurement for reachable history {h:?}")))?;
            let regs: Vec<Register> = m
                .registers
                .iter()
                .map(|l| node.state.register(l).cloned())
                .collect::<Result<_>>()?;
            let lab = strs(&m.registers);
            for (msg, p) in &m.outcomes {
                let v = node.state.apply(p, &lab, &regs)?;
                let q = v.norm_sqr();
                let prob = node.probability * q;
                if prob <= tol::BRANCH {
                    continue;
                }
                let mut child = h.clone();
                child.push(*msg);
                let state = v.normalized().expect("nonzero branch");
                tree.insert(
                    child.clone(),
                    HistoryNode {
                        probability: prob,
                        state,
                    },
                );
                next.push(child);
            }
        }
        frontier = next;
    }
    let mut entries = Vec::new();
    for h in frontier {
        let node = &tree[&h];
        let f = spec
            .finals
            .get(&h)
            .ok_or_else(|| Error::Protocol(format!("no final operators for history {h:?}")))?;
        let mut tau = node.state.clone();
        if let Some(a) = &f.alice {
            tau = tau.apply(&a.matrix, &strs(&a.inputs), &a.outputs)?;
        }
        tau = tau.apply(&f.bob.matrix, &strs(&f.bob.inputs), &f.bob.outputs)?;
        entries.push(TranscriptEntry {
            tuple: h,
            probability: node.probability,
            tau,
        });
    }
    let total: f64 = entries.iter().map(|e| e.probability).sum();
    if (total - 1.0).abs() > tol::PROBABILITY {
        return Err(Error::Protocol(format!("transcript probabilities sum to {total}")));
    }
    let keep = spec.output_labels(input);
    let keep = strs(&keep);
    let marginals: Vec<DensityOperator> = entries.iter().map(|e| e.tau.marginal(&keep)).collect::<Result<_>>()?;
    let weights: Vec<f64> = entries.iter().map(|e| e.probability).collect();
    let output = DensityOperator::mixture(&weights, &marginals)?;
    Ok(ProtocolRun {
        transcript: TranscriptDistribution { entries },
        output,
        tree,
    })
}

/// `Σ p · log(i_1 ⋯ i_r)`.
pub fn expected_cost(t: &TranscriptDistribution) -> Result<f64> {
    let mut c = 0.0;
    for e in &t.entries {
        if e.tuple.contains(&0) {
            return Err(Error::OutOfRange(format!("message 0 in tuple {:?}", e.tuple)));
        }
        c += e.probability * tuple_log_cost(&e.tuple);
    }
    Ok(c)
}

/// Round-by-round form: `Σ_k Σ_{prefix of length k} p(prefix) · log(i_k)`.
pub fn expected_cost_by_round(tree: &BTreeMap<History, HistoryNode>) -> f64 {
    tree.iter()
        .filter_map(|(h, n)| h.last().map(|&i| n.probability * (i as f64).log2()))
        .sum()
}

/// `Σ_i p_i log i` where `p[k]` is the probability of message `k + 1`.
pub fn communication_weight(p: &[f64]) -> Result<f64> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > tol::PROBABILITY || p.iter().any(|&x| x < 0.0) {
        return Err(Error::OutOfRange(format!(
            "not a probability distribution (sum {total})"
        )));
    }
    Ok(p.iter().enumerate().map(|(k, &x)| x * ((k + 1) as f64).log2()).sum())
}

/// Communication weight of a distribution over message tuples.
pub fn tuple_weight(dist: &[(History, f64)]) -> f64 {
    dist.iter().map(|(t, p)| p * tuple_log_cost(t)).sum()
}

pub fn protocol_error(spec: &ProtocolSpec, input: &StateVector, target: &DensityOperator) -> Result<f64> {
    let run = run_protocol(spec, input)?;
    metrics::purified_distance(&run.output, target)
}

/// Largest deviation between a spectator marginal before a round and the
/// probability mixture of its post-measurement marginals, over all prefixes.
pub fn convex_split_residual(spec: &ProtocolSpec, run: &ProtocolRun) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (h, node) in &run.tree {
        if h.len() >= spec.rounds {
            continue;
        }
        let owned = spec.party_labels(Party::at_depth(h.len()));
        let spectators: Vec<&str> = node
            .state
            .labels()
            .into_iter()
            .filter(|l| !owned.iter().any(|o| o == l))
            .collect();
        if spectators.is_empty() {
            continue;
        }
        let before = node.state.marginal(&spectators)?;
        let mut mix = Matrix::zeros(before.dim(), before.dim());
        for (child, cn) in run.tree.range(h.clone()..) {
            if child.len() != h.len() + 1 || !child.starts_with(h) {
                continue;
            }
            let w = cn.probability / node.probability;
            mix += cn.state.marginal(&spectators)?.matrix().scale(w);
        }
        worst = worst.max(linalg::max_abs_diff(before.matrix(), &mix));
    }
    Ok(worst)
}

#[derive(PartialEq)]
struct Weight(f64);

impl Eq for Weight {}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Expected codeword length of a binary Huffman code for `probs`.
pub fn huffman_baseline(probs: &[f64]) -> Result<f64> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > tol::PROBABILITY {
        return Err(Error::OutOfRange("not a probability distribution".into()));
    }
    // Each merge adds the merged mass to the expected length.
    let mut heap: BinaryHeap<Reverse<Weight>> = probs.iter().map(|&p| Reverse(Weight(p))).collect();
    let mut length = 0.0;
    while heap.len() > 1 {
        let Reverse(Weight(a)) = heap.pop().expect("len > 1");
        let Reverse(Weight(b)) = heap.pop().expect("len > 1");
        length += a + b;
        heap.push(Reverse(Weight(a + b)));
    }
    Ok(length)
}

// ---------------------------------------------------------------------------
// Reference protocols

/// Which registers besides `C` the parties hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Alice holds `C`; Bob holds nothing else.
    Transfer,
    /// Alice holds `C, A(d_a)`; Bob holds `B(d)`.
    Redistribution { d_a: usize },
}

impl Layout {
    fn registers(self, d: usize) -> (Vec<Register>, Vec<Register>) {
        match self {
            Layout::Transfer => (vec![Register::new("C", d)], vec![]),
            Layout::Redistribution { d_a } => (
                vec![Register::new("C", d), Register::new("A", d_a)],
                vec![Register::new("B", d)],
            ),
        }
    }
}

fn shift(d: usize) -> Matrix {
    Matrix::from_fn(d, d, |r, c| if r == (c + 1) % d { linalg::ONE } else { linalg::ZERO })
}

fn clock(d: usize) -> Matrix {
    let w = std::f64::consts::TAU / d as f64;
    Matrix::from_diagonal(&Vector::from_fn(d, |j, _| {
        linalg::c((w * j as f64).cos(), (w * j as f64).sin())
    }))
}

fn pauli_pow(m: &Matrix, k: usize) -> Matrix {
    (0..k).fold(linalg::identity(m.nrows()), |acc, _| &acc * m)
}

/// Generalized Pauli `X^x Z^z`.
pub fn weyl(d: usize, x: usize, z: usize) -> Matrix {
    pauli_pow(&shift(d), x) * pauli_pow(&clock(d), z)
}

pub fn max_entangled(d: usize, a: &str, b: &str) -> StateVector {
    let mut v = Vector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = linalg::real(1.0 / (d as f64).sqrt());
    }
    StateVector::new(vec![Register::new(a, d), Register::new(b, d)], v).expect("normalized")
}

/// `exp(−iθY)` on levels `0, 1`, identity elsewhere.
pub fn rotation(d: usize, theta: f64) -> Matrix {
    let mut r = linalg::identity(d);
    if d >= 2 {
        let (s, c) = theta.sin_cos();
        r[(0, 0)] = linalg::real(c);
        r[(0, 1)] = linalg::real(-s);
        r[(1, 0)] = linalg::real(s);
        r[(1, 1)] = linalg::real(c);
    }
    r
}

/// One-round teleportation of `C` with outcome `(x, z)` sent as `messages[x d + z]`.
fn teleport_with_messages(d: usize, layout: Layout, theta: f64, messages: &[u32]) -> ProtocolSpec {
    let (alice, bob) = layout.registers(d);
    let phi = max_entangled(d, "C", ALICE_ENT);
    let mut outcomes = Vec::new();
    let mut finals = BTreeMap::new();
    let noise = rotation(d, theta);
    let mut bob_inputs: Vec<String> = labels(&bob);
    bob_inputs.push(BOB_ENT.into());
    let mut bob_outputs = bob.clone();
    bob_outputs.push(Register::new("C0", d));
    bob_outputs.push(Register::new("TB", 1));
    let id_b = linalg::identity(total_dim(&bob));
    for x in 0..d {
        for z in 0..d {
            let w = weyl(d, x, z);
            let beta = phi
                .apply(&w, &["C"], &[Register::new("C", d)])
                .expect("registers exist");
            let a = beta.amplitudes();
            let msg = messages[x * d + z];
            outcomes.push((msg, a * a.adjoint()));
            finals.insert(
                vec![msg],
                FinalOps {
                    alice: None,
                    bob: LocalOp {
                        inputs: bob_inputs.clone(),
                        outputs: bob_outputs.clone(),
                        matrix: linalg::kron(&id_b, &(&noise * &w)),
                    },
                },
            );
        }
    }
    let mut measurements = BTreeMap::new();
    measurements.insert(
        Vec::new(),
        Measurement {
            registers: vec!["C".into(), ALICE_ENT.into()],
            outcomes,
        },
    );
    ProtocolSpec {
        rounds: 1,
        alice,
        bob,
        entanglement: max_entangled(d, ALICE_ENT, BOB_ENT),
        sent: "C".into(),
        received: "C0".into(),
        measurements,
        finals,
    }
}

/// Standard teleportation of `C`; `theta` rotates Bob's corrected output.
pub fn teleport(d: usize, layout: Layout, theta: f64) -> ProtocolSpec {
    let messages: Vec<u32> = (1..=(d * d) as u32).collect();
    teleport_with_messages(d, layout, theta, &messages)
}

/// Teleportation whose `d²` outcomes are relabeled by a seeded injection into `1..=max_index`.
pub fn padded_teleport(d: usize, layout: Layout, seed: u64, max_index: u32) -> Result<ProtocolSpec> {
    if (max_index as usize) < d * d {
        return Err(Error::OutOfRange(format!("max_index {max_index} < {}", d * d)));
    }
    let mut pool: Vec<u32> = (1..=max_index).collect();
    pool.shuffle(&mut rng_from_seed(seed));
    Ok(teleport_with_messages(d, layout, 0.0, &pool[..d * d]))
}

/// Calibrates the noise angle so the teleport error on `input` equals `eps`.
pub fn calibrate_teleport_noise(
    d: usize,
    layout: Layout,
    input: &StateVector,
    eps: f64,
) -> Result<(ProtocolSpec, f64, f64)> {
    let err = |theta: f64| -> Result<f64> {
        let spec = teleport(d, layout, theta);
        let target = spec.target(input)?;
        protocol_error(&spec, input, &target)
    };
    if eps <= 0.0 {
        let spec = teleport(d, layout, 0.0);
        let e = err(0.0)?;
        return Ok((spec, 0.0, e));
    }
    let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
    if err(hi)? < eps {
        return Err(Error::OutOfRange(format!(
            "error {eps} not reachable by rotation noise"
        )));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if err(mid)? < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    Ok((teleport(d, layout, theta), theta, err(theta)?))
}

/// Alice announces nothing useful and Bob outputs `|0>` as `C0`.
pub fn do_nothing(d: usize, layout: Layout) -> ProtocolSpec {
    let (alice, bob) = layout.registers(d);
    let ent = StateVector::basis(vec![Register::new(ALICE_ENT, 1), Register::new(BOB_ENT, d)], 0).expect("basis");
    let mut measurements = BTreeMap::new();
    measurements.insert(
        Vec::new(),
        Measurement {
            registers: vec!["C".into()],
            outcomes: vec![(1, linalg::identity(d))],
        },
    );
    let mut bob_inputs = labels(&bob);
    bob_inputs.push(BOB_ENT.into());
    let mut bob_outputs = bob.clone();
    bob_outputs.push(Register::new("C0", d));
    bob_outputs.push(Register::new("TB", 1));
    let mut finals = BTreeMap::new();
    finals.insert(
        vec![1],
        FinalOps {
            alice: None,
            bob: LocalOp {
                inputs: bob_inputs,
                outputs: bob_outputs,
                matrix: linalg::identity(total_dim(&bob) * d),
            },
        },
    );
    ProtocolSpec {
        rounds: 1,
        alice,
        bob,
        entanglement: ent,
        sent: "C".into(),
        received: "C0".into(),
        measurements,
        finals,
    }
}

/// Projective measurement with `n` outcomes from a Haar basis split into blocks.
fn random_measurement<R: rand::Rng>(dim: usize, n: usize, messages: &[u32], rng: &mut R) -> Vec<(u32, Matrix)> {
    let u = haar_unitary(dim, rng);
    let mut out = Vec::with_capacity(n);
    let mut col = 0;
    for k in 0..n {
        let size = dim / n + usize::from(k < dim % n);
        let block = u.columns(col, size).into_owned();
        col += size;
        out.push((messages[k], &block * block.adjoint()));
    }
    out
}

/// Seeded three-round protocol with two outcomes per round and random final
/// unitaries. It is executable but not a correct state-transfer protocol.
pub fn synthetic(d: usize, layout: Layout, seed: u64) -> ProtocolSpec {
    let mut rng = rng_from_seed(seed);
    let (alice, bob) = layout.registers(d);
    let ent = crate::hilbert::haar_state(vec![Register::new(ALICE_ENT, 2), Register::new(BOB_ENT, d)], &mut rng)
        .expect("state");
    let alice_meas = vec!["C".to_string(), ALICE_ENT.to_string()];
    let alice_dim = 2 * d;
    let mut bob_meas = labels(&bob);
    bob_meas.push(BOB_ENT.into());
    let bob_dim = total_dim(&bob) * d;
    let mut measurements = BTreeMap::new();
    let mut finals = BTreeMap::new();
    let mut frontier: Vec<History> = vec![Vec::new()];
    for round in 0..3 {
        let mut next = Vec::new();
        for h in frontier {
            let mut msgs = [1u32, 2, 3];
            msgs.shuffle(&mut rng);
            let msgs = &msgs[..2];
            let (regs, dim) = if round % 2 == 0 {
                (&alice_meas, alice_dim)
            } else {
                (&bob_meas, bob_dim)
            };
            let outcomes = random_measurement(dim, 2, msgs, &mut rng);
            for &m in msgs {
                let mut c = h.clone();
                c.push(m);
                next.push(c);
            }
            measurements.insert(
                h,
                Measurement {
                    registers: regs.clone(),
                    outcomes,
                },
            );
        }
        frontier = next;
    }
    let mut bob_outputs = bob.clone();
    bob_outputs.push(Register::new("C0", d));
    bob_outputs.push(Register::new("TB", 1));
    for h in frontier {
        let alice_op = LocalOp {
            inputs: alice_meas.clone(),
            outputs: vec![Register::new("C", d), Register::new(ALICE_ENT, 2)],
            matrix: haar_unitary(alice_dim, &mut rng),
        };
        finals.insert(
            h,
            FinalOps {
                alice: Some(alice_op),
                bob: LocalOp {
                    inputs: bob_meas.clone(),
                    outputs: bob_outputs.clone(),
                    matrix: haar_unitary(bob_dim, &mut rng),
                },
            },
        );
    }
    ProtocolSpec {
        rounds: 3,
        alice,
        bob,
        entanglement: ent,
        sent: "C".into(),
        received: "C0".into(),
        measurements,
        finals,
    }
}

// ---------------------------------------------------------------------------
// JSON

type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn matrix_to_json(m: &Matrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn matrix_from_json(j: &JsonMatrix) -> Result<Matrix> {
    let rows = j.len();
    let cols = j.first().map_or(0, Vec::len);
    if j.iter().any(|r| r.len() != cols) {
        return Err(Error::Schema("ragged matrix".into()));
    }
    Ok(Matrix::from_fn(rows, cols, |r, c| C64::new(j[r][c][0], j[r][c][1])))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeJson {
    message: u32,
    projector: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementJson {
    history: History,
    registers: Vec<String>,
    outcomes: Vec<OutcomeJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalOpJson {
    inputs: Vec<String>,
    outputs: Vec<Register>,
    matrix: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalJson {
    history: History,
    #[serde(default)]
    alice: Option<LocalOpJson>,
    bob: LocalOpJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolJson {
    schema: u32,
    rounds: usize,
    alice: Vec<Register>,
    bob: Vec<Register>,
    entanglement_dims: [usize; 2],
    entanglement: Vec<[f64; 2]>,
    sent: String,
    received: String,
    measurements: Vec<MeasurementJson>,
    finals: Vec<FinalJson>,
}

fn op_to_json(op: &LocalOp) -> LocalOpJson {
    LocalOpJson {
        inputs: op.inputs.clone(),
        outputs: op.outputs.clone(),
        matrix: matrix_to_json(&op.matrix),
    }
}

fn op_from_json(j: LocalOpJson) -> Result<LocalOp> {
    Ok(LocalOp {
        inputs: j.inputs,
        outputs: j.outputs,
        matrix: matrix_from_json(&j.matrix)?,
    })
}

impl ProtocolSpec {
    pub fn to_json(&self) -> String {
        let ent = self.entanglement.registers();
        let j = ProtocolJson {
            schema: 1,
            rounds: self.rounds,
            alice: self.alice.clone(),
            bob: self.bob.clone(),
            entanglement_dims: [ent[0].dim, ent[1].dim],
            entanglement: self.entanglement.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
            sent: self.sent.clone(),
            received: self.received.clone(),
            measurements: self
                .measurements
                .iter()
                .map(|(h, m)| MeasurementJson {
                    history: h.clone(),
                    registers: m.registers.clone(),
                    outcomes: m
                        .outcomes
                        .iter()
                        .map(|(i, p)| OutcomeJson {
                            message: *i,
                            projector: matrix_to_json(p),
                        })
                        .collect(),
                })
                .collect(),
            finals: self
                .finals
                .iter()
                .map(|(h, f)| FinalJson {
                    history: h.clone(),
                    alice: f.alice.as_ref().map(op_to_json),
                    bob: op_to_json(&f.bob),
                })
                .collect(),
        };
        serde_json::to_string(&j).expect("protocol serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ProtocolJson = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if j.schema != 1 {
            return Err(Error::Schema(format!("unsupported schema version {}", j.schema)));
        }
        if j.alice.iter().chain(&j.bob).any(|r| r.dim == 0) || j.entanglement_dims.contains(&0) {
            return Err(Error::Schema("register dimensions must be positive".into()));
        }
        let ent_regs = vec![
            Register::new(ALICE_ENT, j.entanglement_dims[0]),
            Register::new(BOB_ENT, j.entanglement_dims[1]),
        ];
        let amps = Vector::from_iterator(
            j.entanglement.len(),
            j.entanglement.iter().map(|z| C64::new(z[0], z[1])),
        );
        let entanglement = StateVector::new(ent_regs, amps).map_err(|e| Error::Schema(format!("entanglement: {e}")))?;
        let mut measurements = BTreeMap::new();
        for m in j.measurements {
            let outcomes = m
                .outcomes
                .into_iter()
                .map(|o| Ok((o.message, matrix_from_json(&o.projector)?)))
                .collect::<Result<_>>()?;
            measurements.insert(
                m.history,
                Measurement {
                    registers: m.registers,
                    outcomes,
                },
            );
        }
        let mut finals = BTreeMap::new();
        for f in j.finals {
            finals.insert(
                f.history,
                FinalOps {
                    alice: f.alice.map(op_from_json).transpose()?,
                    bob: op_from_json(f.bob)?,
                },
            );
        }
        let spec = ProtocolSpec {
            rounds: j.rounds,
            alice: j.alice,
            bob: j.bob,
            entanglement,
            sent: j.sent,
            received: j.received,
            measurements,
            finals,
        };
        spec.validate()?;
        Ok(spec)
    }
}
