//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use qsrd_core::bounds::{
    error_in_mu, grid_optimal_mu, max_eps, optimal_mu, theorem_contradiction_check, transfer_worst_case_lower_bound,
    Mode, TheoremCheck, DEFAULT_LOG_D,
};
use qsrd_core::compiler::{coherent_representation, run_pipeline, truncate_distribution};
use qsrd_core::entropies::{entropy, hmax, hmin, imax, mutual_info};
use qsrd_core::facts::{all_pass, verify_facts, FACTS};
use qsrd_core::hilbert::{random_density, rng_from_seed, DensityOperator, Register};
use qsrd_core::linalg::{self, Matrix};
use qsrd_core::protocol::{calibrate_teleport_noise, run_protocol, synthetic, teleport, Layout};
use qsrd_core::states::{build_instance, REFEREE};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fact_suite() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    for dim in 2..=4 {
        rows.extend(verify_facts(1000 + dim as u64, 200, dim).expect("fact suite runs"));
    }
    let elapsed = start.elapsed();
    let violations: Vec<String> = rows
        .iter()
        .filter(|r| r.margin < -1e-6)
        .map(|r| format!("{}#{} margin {:e}", r.fact, r.trial, r.margin))
        .collect();
    let pass = violations.is_empty() && all_pass(&rows) && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{} rows over {} facts, {} violations, {:.1}s {}",
            rows.len(),
            FACTS.len(),
            violations.len(),
            elapsed.as_secs_f64(),
            violations.join("; ")
        ),
    )
}

fn hard_instances() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for &(d, d_a, beta) in &[(2usize, 1usize, 2.0f64), (2, 2, 2.0), (4, 2, 2.0), (8, 1, 4.0)] {
        let inst = build_instance(d, d_a, beta, 17).unwrap();
        let residual = inst.omega_relation_residual().unwrap();
        let diag = DensityOperator::diagonal(vec![Register::new("X", d)], &inst.eigenvalues).unwrap();
        let s = entropy(&diag).unwrap();
        let s_bound = 2.0 * (d as f64).log2() / beta;
        let omega = inst.omega.density();
        let i = mutual_info(&omega, &REFEREE, &["B", "C"]).unwrap();
        let i_target = 2.0 * (d as f64).log2();
        let ok = residual < 1e-10 && s <= s_bound && (i - i_target).abs() <= 1e-9;
        pass &= ok;
        notes.push(format!(
            "({d},{d_a},{beta}): res {residual:.1e} S {s:.4}<={s_bound:.4} I {i:.10}"
        ));
    }
    outcome(pass, notes.join(", "))
}

fn reconstruction() -> Outcome {
    let transfer = build_instance(2, 1, 2.0, 5).unwrap();
    let redist = build_instance(2, 2, 2.0, 5).unwrap();
    let cases = [
        ("teleport", teleport(2, Layout::Transfer, 0.0), &transfer.psi_tilde),
        (
            "synthetic-transfer",
            synthetic(2, Layout::Transfer, 21),
            &transfer.psi_tilde,
        ),
        (
            "synthetic-redistribution",
            synthetic(2, Layout::Redistribution { d_a: 2 }, 9),
            &redist.psi,
        ),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, spec, input) in cases.iter() {
        let run = run_protocol(spec, input).unwrap();
        let rep = coherent_representation(spec, input, &run).unwrap();
        let r = rep.reconstruction_residual(&run).unwrap();
        pass &= r < 1e-8;
        notes.push(format!("{name} (r={}) {r:.1e}", spec.rounds));
    }
    outcome(pass, notes.join(", "))
}

fn pipeline_bounds() -> Outcome {
    let inst = build_instance(2, 1, 2.0, 5).unwrap();
    let alpha = inst.e_min() * inst.d as f64;
    let mut pass = true;
    let mut notes = Vec::new();
    for &target in &[0.0, 0.005, 0.02] {
        let (spec, _, eps0) = calibrate_teleport_noise(2, Layout::Transfer, &inst.psi_tilde, target).unwrap();
        for &mu in &[0.1, 0.25] {
            let start = Instant::now();
            let out = run_pipeline(&spec, &inst.psi_tilde, None, mu).unwrap();
            let r = &out.report;
            let rescale_bound = (8.0 * eps0 / alpha).sqrt();
            let cost_bound = 2.0 * r.expected_cost / ((1.0 - eps0) * mu);
            let elapsed = start.elapsed();
            let ok = r.prune_residual.measured <= 2.0 * eps0.sqrt() + 1e-6
                && r.rescale_residual.measured <= rescale_bound + 1e-6
                && r.compiled_error.measured <= rescale_bound + mu.sqrt() + 1e-6
                && r.worst_case_cost.measured <= cost_bound
                && elapsed < Duration::from_secs(60);
            pass &= ok;
            notes.push(format!(
                "eps0={eps0:.4} mu={mu}: prune {:.2e} rescale {:.2e}<={rescale_bound:.3} compiled {:.2e} cost {:.2}<={cost_bound:.2} {:.2}s",
                r.prune_residual.measured,
                r.rescale_residual.measured,
                r.compiled_error.measured,
                r.worst_case_cost.measured,
                elapsed.as_secs_f64()
            ));
        }
    }
    outcome(pass, notes.join("; "))
}

fn truncation_arithmetic() -> Outcome {
    let p = vec![(vec![1u32], 0.9), (vec![64u32], 0.1)];
    let t = truncate_distribution(&p, 0.2, 0.6, 0.0).unwrap();
    let pass =
        t.kept == vec![(vec![1u32], 0.9)] && t.renormalized == vec![(vec![1u32], 1.0)] && t.worst_case_cost == 1.0;
    outcome(pass, format!("kept {:?}, worst cost {} bit", t.kept, t.worst_case_cost))
}

fn hmax_of_flat_state() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for &d in &[2usize, 4, 8] {
        let inst = build_instance(d, 1, 2.0, 3).unwrap();
        let h = hmax(&inst.omega_prime.density(), &["R"], &["C"]).unwrap().value;
        let want = -(d as f64).log2();
        pass &= (h - want).abs() <= 1e-6;
        notes.push(format!("d={d}: {h:.9}"));
    }
    let lb = transfer_worst_case_lower_bound(3.0, 0.5).unwrap();
    let want = 1.5 + 0.5 * 0.75f64.log2();
    pass &= (lb - want).abs() <= 1e-12;
    notes.push(format!("transfer lb(d=8, 1/2) = {lb:.12}"));
    outcome(pass, notes.join(", "))
}

fn theorem_arithmetic() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (mode, want) in [(Mode::Redistribution, 128.0), (Mode::Transfer, 16.0)] {
        for &p in &[0.0, 0.25, 0.5, 0.75] {
            let eps = max_eps(mode, p) * 1e-3;
            let params = theorem_contradiction_check(mode, p, eps, DEFAULT_LOG_D).unwrap();
            let product = params.params().unwrap().product;
            pass &= ((product - want) / want).abs() < 1e-12;
        }
        notes.push(format!("{mode}: product {want}"));
        for eps in [0.0, max_eps(mode, 0.5)] {
            let check = theorem_contradiction_check(mode, 0.5, eps, DEFAULT_LOG_D).unwrap();
            let params = check.params().unwrap();
            pass &= params.contradiction;
            notes.push(format!(
                "{mode} p=0.5 eps={eps:.3e}: error {:.6} cost {:.4} lb {:.4} contradiction {}",
                params.compiled_error_bound, params.compiled_cost_bound, params.lower_bound, params.contradiction
            ));
        }
        let infeasible = matches!(
            theorem_contradiction_check(mode, 1.0, 1e-3, DEFAULT_LOG_D).unwrap(),
            TheoremCheck::Infeasible { .. }
        );
        pass &= infeasible;
        for &p in &[0.0, 0.5, 0.9] {
            let eps = max_eps(mode, p) * 0.5;
            let analytic = optimal_mu(mode, p, eps);
            let oracle = brute_force_mu(|mu| error_in_mu(mode, p, eps, mu));
            let searched = grid_optimal_mu(mode, p, eps, 400);
            let ok = (analytic - oracle).abs() <= 1e-6 && (searched - analytic).abs() <= 1e-6;
            pass &= ok;
        }
    }
    outcome(pass, notes.join("; "))
}

/// Dense log grid over (0, 1) followed by repeated local re-gridding.
fn brute_force_mu(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-60.0f64, 0.0f64);
    for _ in 0..60 {
        let n = 200;
        let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let best = (0..=n)
            .min_by(|&a, &b| f(xs[a].exp2()).total_cmp(&f(xs[b].exp2())))
            .unwrap();
        lo = xs[best.saturating_sub(1)];
        hi = xs[(best + 1).min(n)];
    }
    (0.5 * (lo + hi)).exp2()
}

/// Qubit state with Bloch vector `v`, |v| < 1.
fn bloch(v: [f64; 3]) -> Matrix {
    let h = 0.5;
    Matrix::from_row_slice(
        2,
        2,
        &[
            linalg::c(h * (1.0 + v[2]), 0.0),
            linalg::c(h * v[0], -h * v[1]),
            linalg::c(h * v[0], h * v[1]),
            linalg::c(h * (1.0 - v[2]), 0.0),
        ],
    )
}

/// `log λ_max(M^{-1/2} ρ M^{-1/2})` for full-rank `M`.
fn dmax_full_rank(rho: &Matrix, m: &Matrix) -> f64 {
    let inv = linalg::hermitian_fn(m, |x| 1.0 / x.sqrt());
    linalg::max_eigenvalue(&(&inv * rho * &inv)).log2()
}

fn clip(v: [f64; 3], r: f64) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n <= r {
        v
    } else {
        v.map(|x| x * r / n)
    }
}

/// Minimizes `f` over the Bloch ball: cubic grid, then a shrinking pattern search.
fn minimize_over_ball(f: impl Fn([f64; 3]) -> f64) -> f64 {
    let r_max = 1.0 - 1e-9;
    let n = 10;
    let mut best = ([0.0; 3], f64::INFINITY);
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let g = |t: usize| -1.0 + 2.0 * t as f64 / n as f64;
                let v = [g(i), g(j), g(k)];
                if v.iter().map(|x| x * x).sum::<f64>() >= 1.0 {
                    continue;
                }
                let val = f(v);
                if val < best.1 {
                    best = (v, val);
                }
            }
        }
    }
    let mut step = 0.1;
    while step > 1e-9 {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut v = best.0;
                v[axis] += sign * step;
                let v = clip(v, r_max);
                let val = f(v);
                if val < best.1 - 1e-15 {
                    best = (v, val);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best.1
}

fn optimizer_vs_oracle() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let regs = vec![Register::new("A", 2), Register::new("B", 2)];
    let mut worst: f64 = 0.0;
    for t in 0..50 {
        let rho = random_density(regs.clone(), 2 + t % 3, &mut rng).unwrap();
        let rho_a = rho.partial_trace(&["A"]).unwrap();
        let m = rho.matrix();
        let imax_oracle = minimize_over_ball(|v| dmax_full_rank(m, &linalg::kron(rho_a.matrix(), &bloch(v)))).max(0.0);
        let hmin_oracle = -minimize_over_ball(|v| dmax_full_rank(m, &linalg::kron(&linalg::identity(2), &bloch(v))));
        let i = imax(&rho, &["A"], &["B"]).unwrap().value;
        let h = hmin(&rho, &["A"], &["B"]).unwrap().value;
        worst = worst.max((i - imax_oracle).abs()).max((h - hmin_oracle).abs());
    }
    outcome(worst <= 1e-3, format!("50 states, worst deviation {worst:.2e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("fact suite", fact_suite),
        ("hard-instance algebra", hard_instances),
        ("coherent reconstruction", reconstruction),
        ("pipeline bounds", pipeline_bounds),
        ("truncation arithmetic", truncation_arithmetic),
        ("H_max of the flat state", hmax_of_flat_state),
        ("theorem arithmetic", theorem_arithmetic),
        ("I_max/H_min optimizer", optimizer_vs_oracle),
    ];
    let mut failures = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {} [{name}]: {} | {}",
            n + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("{} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
