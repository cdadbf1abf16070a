//! Seeded numerical checks of the standard inequalities the compiler relies on.

use rand::Rng;
use serde::Serialize;

use crate::entropies::{entropy, fannes_bound, hmin, imax, mutual_info};
use crate::error::{Error, Result};
use crate::hilbert::{random_density, rng_from_seed, DensityOperator, KrausChannel, Register};
use crate::metrics::{fidelity, generalized_trace_distance, purified_distance};
use crate::tol;

pub const FACTS: [&str; 16] = [
    "triangle",
    "trace_le_purified",
    "purified_le_sqrt_trace_norm",
    "monotonicity",
    "joint_concavity",
    "fannes",
    "subadditivity",
    "araki_lieb",
    "entropy_concavity",
    "mutual_info_bound",
    "cond_mutual_info_bound",
    "joint_mutual_info_bound",
    "cq_imax",
    "cq_superadditivity",
    "imax_ge_neg_hmin",
    "rescaled_distance",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactRow {
    pub fact: &'static str,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; negative beyond the slack is a violation.
    pub margin: f64,
    pub pass: bool,
}

impl FactRow {
    fn new(fact: &'static str, trial: usize, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            fact,
            trial,
            lhs,
            rhs,
            margin,
            pass: margin >= -slack,
        }
    }
}

pub const CSV_HEADER: &str = "fact,trial,lhs,rhs,margin,pass";

pub fn to_csv(rows: &[FactRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{:e},{:e},{:e},{}\n",
            r.fact, r.trial, r.lhs, r.rhs, r.margin, r.pass
        ));
    }
    s
}

fn reg(label: &str, dim: usize) -> Vec<Register> {
    vec![Register::new(label, dim)]
}

fn regs(labels: &[&str], dim: usize) -> Vec<Register> {
    labels.iter().map(|l| Register::new(*l, dim)).collect()
}

fn random_rank<R: Rng>(regs: Vec<Register>, rng: &mut R) -> Result<DensityOperator> {
    let d: usize = regs.iter().map(|r| r.dim).product();
    let rank = rng.random_range(1..=d);
    random_density(regs, rank, rng)
}

fn weights<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Classical-quantum state `Σ_j p_j |j><j|_X ⊗ ρ_j`.
fn cq_state(p: &[f64], x_label: &str, parts: &[DensityOperator]) -> Result<DensityOperator> {
    let dx = p.len();
    let states: Vec<DensityOperator> = parts
        .iter()
        .enumerate()
        .map(|(j, rho)| DensityOperator::diagonal(reg(x_label, dx), &basis_diag(dx, j))?.tensor(rho))
        .collect::<Result<_>>()?;
    DensityOperator::mixture(p, &states)
}

fn basis_diag(d: usize, j: usize) -> Vec<f64> {
    (0..d).map(|k| if k == j { 1.0 } else { 0.0 }).collect()
}

/// Runs every fact `trials` times on registers of dimension `dim`.
pub fn verify_facts(seed: u64, trials: usize, dim: usize) -> Result<Vec<FactRow>> {
    if trials == 0 {
        return Err(Error::OutOfRange("trials must be at least 1".into()));
    }
    if !(2..=4).contains(&dim) {
        return Err(Error::OutOfRange(format!("dim = {dim} must lie in 2..=4")));
    }
    let slack = tol::BOUND_SLACK * tol::scale_from_env();
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(trials * FACTS.len());
    for t in 0..trials {
        let a = reg("A", dim);

        let r1 = random_rank(a.clone(), &mut rng)?;
        let r2 = random_rank(a.clone(), &mut rng)?;
        let r3 = random_rank(a.clone(), &mut rng)?;
        let lhs = purified_distance(&r1, &r3)?;
        let rhs = purified_distance(&r1, &r2)? + purified_distance(&r2, &r3)?;
        rows.push(FactRow::new("triangle", t, lhs, rhs, slack));

        let s1 = r1.scaled(0.5 + 0.5 * rng.random::<f64>());
        let s2 = r2.scaled(0.5 + 0.5 * rng.random::<f64>());
        let p = purified_distance(&s1, &s2)?;
        let td = generalized_trace_distance(&s1, &s2)?;
        rows.push(FactRow::new("trace_le_purified", t, td, p, slack));
        rows.push(FactRow::new(
            "purified_le_sqrt_trace_norm",
            t,
            p,
            (2.0 * td).sqrt(),
            slack,
        ));

        let out_dim = rng.random_range(2..=dim);
        let ch = KrausChannel::random(a.clone(), reg("B", out_dim), 2, &mut rng)?;
        let lhs = purified_distance(&ch.apply(&r1)?, &ch.apply(&r2)?)?;
        rows.push(FactRow::new(
            "monotonicity",
            t,
            lhs,
            purified_distance(&r1, &r2)?,
            slack,
        ));

        let w = weights(3, &mut rng);
        let rhos: Vec<DensityOperator> = (0..3)
            .map(|_| random_rank(a.clone(), &mut rng))
            .collect::<Result<_>>()?;
        let sigmas: Vec<DensityOperator> = (0..3)
            .map(|_| random_rank(a.clone(), &mut rng))
            .collect::<Result<_>>()?;
        let avg: f64 = (0..3)
            .map(|i| Ok(w[i] * fidelity(&rhos[i], &sigmas[i])?))
            .sum::<Result<f64>>()?;
        let joint = fidelity(
            &DensityOperator::mixture(&w, &rhos)?,
            &DensityOperator::mixture(&w, &sigmas)?,
        )?;
        rows.push(FactRow::new("joint_concavity", t, avg, joint, slack));

        let limit = 1.0 / (2.0 * std::f64::consts::E);
        let mut mix = 0.2 * rng.random::<f64>();
        let (near, eps) = loop {
            let near = DensityOperator::mixture(&[1.0 - mix, mix], &[r1.clone(), r2.clone()])?;
            let eps = purified_distance(&r1, &near)?;
            if eps <= limit {
                break (near, eps);
            }
            mix *= 0.5;
        };
        let lhs = (entropy(&r1)? - entropy(&near)?).abs();
        rows.push(FactRow::new("fannes", t, lhs, fannes_bound(eps, dim)?, slack));

        let ab = random_rank(regs(&["A", "B"], dim), &mut rng)?;
        let sa = entropy(&ab.partial_trace(&["A"])?)?;
        let sb = entropy(&ab.partial_trace(&["B"])?)?;
        let sab = entropy(&ab)?;
        rows.push(FactRow::new("subadditivity", t, sab, sa + sb, slack));
        rows.push(FactRow::new("araki_lieb", t, (sa - sb).abs(), sab, slack));

        let avg: f64 = (0..3).map(|i| Ok(w[i] * entropy(&rhos[i])?)).sum::<Result<f64>>()?;
        let mixed = entropy(&DensityOperator::mixture(&w, &rhos)?)?;
        rows.push(FactRow::new("entropy_concavity", t, avg, mixed, slack));

        let abc_dim = dim.min(3);
        let abc = random_rank(regs(&["A", "B", "C"], abc_dim), &mut rng)?;
        let sc = entropy(&abc.partial_trace(&["C"])?)?;
        rows.push(FactRow::new(
            "mutual_info_bound",
            t,
            mutual_info(&abc, &["A"], &["C"])?,
            2.0 * sc,
            slack,
        ));
        let cmi = crate::entropies::cond_mutual_info(&abc, &["A"], &["C"], &["B"])?;
        let i_ab_c = mutual_info(&abc, &["A", "B"], &["C"])?;
        rows.push(FactRow::new("cond_mutual_info_bound", t, cmi, i_ab_c, slack));
        rows.push(FactRow::new("joint_mutual_info_bound", t, i_ab_c, 2.0 * sc, slack));

        let px = weights(dim, &mut rng);
        let parts: Vec<DensityOperator> = (0..dim)
            .map(|_| random_rank(reg("B", dim), &mut rng))
            .collect::<Result<_>>()?;
        let cq = cq_state(&px, "X", &parts)?;
        let v = imax(&cq, &["X"], &["B"])?.value;
        rows.push(FactRow::new("cq_imax", t, v, (dim as f64).log2(), slack));

        let bc_dim = dim.min(2);
        let branches: Vec<DensityOperator> = (0..dim)
            .map(|_| random_rank(regs(&["B", "C"], bc_dim), &mut rng))
            .collect::<Result<_>>()?;
        let xbc = cq_state(&px, "X", &branches)?;
        let avg: f64 = (0..dim)
            .map(|j| Ok(px[j] * mutual_info(&branches[j], &["B"], &["C"])?))
            .sum::<Result<f64>>()?;
        rows.push(FactRow::new(
            "cq_superadditivity",
            t,
            avg,
            mutual_info(&xbc, &["X", "B"], &["C"])?,
            slack,
        ));

        let ab2 = random_rank(regs(&["A", "B"], dim.min(3)), &mut rng)?;
        let neg_hmin = -hmin(&ab2, &["A"], &["B"])?.value;
        let im = imax(&ab2, &["A"], &["B"])?.value;
        rows.push(FactRow::new("imax_ge_neg_hmin", t, neg_hmin, im, slack));

        let alpha = 0.05 + 0.9 * rng.random::<f64>();
        let eps = purified_distance(&r1.scaled(alpha), &r2.scaled(alpha))?;
        let bound = crate::metrics::rescaled_distance_bound(eps, alpha)?;
        rows.push(FactRow::new(
            "rescaled_distance",
            t,
            purified_distance(&r1, &r2)?,
            bound,
            slack,
        ));
    }
    Ok(rows)
}

pub fn all_pass(rows: &[FactRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes_and_is_deterministic() {
        let a = verify_facts(7, 3, 2).unwrap();
        assert_eq!(a.len(), 3 * FACTS.len());
        assert!(all_pass(&a), "{}", to_csv(&a));
        let b = verify_facts(7, 3, 2).unwrap();
        assert_eq!(to_csv(&a), to_csv(&b));
        let names: Vec<&str> = a[..FACTS.len()].iter().map(|r| r.fact).collect();
        assert_eq!(names, FACTS);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(verify_facts(1, 0, 2).is_err());
        assert!(verify_facts(1, 1, 5).is_err());
        assert!(verify_facts(1, 1, 1).is_err());
    }
}
