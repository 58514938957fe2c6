use std::time::Instant;

use serde::Serialize;

use crate::datastream::agrawal_features::{AGE, SALARY};
use crate::datastream::{AgrawalStream, Instance};
use crate::error::Result;
use crate::importance::{expected_pfi, permutation_estimate, Initialization, Loss};
use crate::learners::FrozenOracle;
use crate::sampling::{collision_probability, marginal_probability, SamplerKind, SamplingLaw};
use crate::theory::{
    agrawal_ground_truth, alpha_to_window, run_bias_study, run_variance_study, static_bias, strictly_decreasing,
    window_to_alpha, BiasStudyConfig, VarianceStudyConfig,
};

/// Outcome of one verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let started = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let detail = format!("{detail} ({:.1}s)", started.elapsed().as_secs_f64());
    log::info!("{name}: {} {detail}", if passed { "pass" } else { "FAIL" });
    Check { name, passed, detail }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn agrawal(n: usize, seed: u64) -> Vec<Instance> {
    AgrawalStream::new(1, seed).expect("concept 1 exists").take(n).collect()
}

/// Run the analytic-oracle suite: closed forms against direct computation
/// and the Monte-Carlo bias and variance studies.
pub fn verify() -> Vec<Check> {
    let oracle = FrozenOracle::agrawal(1).expect("concept 1 exists");
    let mut checks = Vec::new();

    checks.push(check("expected PFI equals the scaled mean over all permutations", || {
        let mut worst: f64 = 0.0;
        for n in 2..=6 {
            for seed in 0..3 {
                let data = agrawal(n, 100 * n as u64 + seed);
                let perms = permutations(n);
                for j in 0..9 {
                    let mut mean = 0.0;
                    for p in &perms {
                        mean += permutation_estimate(&oracle, &data, &[j], p, Loss::Absolute)?;
                    }
                    let scaled = mean / perms.len() as f64 * n as f64 / (n - 1) as f64;
                    worst = worst.max((scaled - expected_pfi(&oracle, &data, j, Loss::Absolute)?).abs());
                }
            }
        }
        Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
    }));

    checks.push(check("agrawal ground truth", || {
        let phi = agrawal_ground_truth(1)?;
        let data = agrawal(5000, 7);
        let mut ok = (phi[AGE] - 0.3419).abs() <= 1e-4 && (phi[SALARY] - 0.4734).abs() <= 1e-4;
        let mut detail = format!("closed form age {:.6} salary {:.6};", phi[AGE], phi[SALARY]);
        for j in 0..9 {
            let e = expected_pfi(&oracle, &data, j, Loss::Absolute)?;
            let tol = if j == AGE || j == SALARY { 0.03 } else { 0.01 };
            ok &= (e - phi[j]).abs() <= tol;
            detail.push_str(&format!(" {j}:{e:.4}"));
        }
        Ok((ok, detail))
    }));

    checks.push(check("sampling laws and collision probabilities", || {
        let mut worst: f64 = 0.0;
        for l in [2usize, 4, 10, 100] {
            let law = SamplingLaw::Geometric { capacity: l };
            let t0 = l as u64;
            for s in t0..=200.max(t0 + 1) {
                let mut total = 0.0;
                let mut squares = 0.0;
                for r in 0..s {
                    let q = marginal_probability(law, s, r, t0)?;
                    total += q;
                    squares += q * q;
                }
                worst = worst.max((total - 1.0).abs());
                worst = worst.max((squares - collision_probability(law, s, t0)?).abs());
            }
            let p = 1.0 / l as f64;
            worst = worst.max((collision_probability(law, t0 + 10_000, t0)? - p / (2.0 - p)).abs());
        }
        for s in 1..=200u64 {
            worst = worst.max((collision_probability(SamplingLaw::Uniform, s, 1)? - 1.0 / s as f64).abs());
        }
        Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
    }));

    checks.push(check("closed forms of bias and window size", || {
        let ok = (static_bias(0.5, 1, 1.0)? - 0.5).abs() < 1e-15
            && (static_bias(0.01, 100, 1.0)? - 0.99f64.powi(100)).abs() < 1e-15
            && static_bias(0.01, 10_000, 1.0)? < 1e-30
            && (window_to_alpha(199.0)? - 0.01).abs() < 1e-15
            && (alpha_to_window(window_to_alpha(1000.0)?)? - 1000.0).abs() < 1e-9;
        Ok((ok, String::new()))
    }));

    checks.push(check("bias of a zero-started smoother", || {
        let phi = agrawal_ground_truth(1)?;
        let report = run_bias_study(
            &BiasStudyConfig {
                alpha: 0.01,
                sampler: SamplerKind::UniformFull,
                replications: 200,
                checkpoints: vec![50, 100, 460],
                feature: SALARY,
                concept: 1,
                phi: phi[SALARY],
                init: Initialization::Zero,
                seed: 1,
            },
            &oracle,
        )?;
        let z = report.max_abs_z();
        Ok((z <= 3.0, format!("max |z| {z:.2}")))
    }));

    checks.push(check("variance falls with alpha (uniform) and with p (geometric)", || {
        let phi = agrawal_ground_truth(1)?;
        let base = VarianceStudyConfig {
            samplers: vec![SamplerKind::UniformFull],
            alphas: vec![0.05, 0.02, 0.01, 0.005],
            replications: 100,
            length: None,
            feature: SALARY,
            concept: 1,
            phi: phi[SALARY],
            init: Initialization::FirstIncrement,
            epsilon: 0.05,
            seed: 2,
        };
        let uniform: Vec<f64> = run_variance_study(&base, &oracle)?.rows.iter().map(|r| r.variance).collect();
        let geometric_config = VarianceStudyConfig {
            samplers: [2, 8, 32].map(|capacity| SamplerKind::Geometric { capacity }).to_vec(),
            alphas: vec![0.2],
            length: Some(300_000),
            ..base
        };
        let geometric: Vec<f64> = run_variance_study(&geometric_config, &oracle)?
            .rows
            .iter()
            .map(|r| r.variance)
            .collect();
        Ok((
            strictly_decreasing(&uniform) && strictly_decreasing(&geometric),
            format!("uniform {uniform:?}, geometric {geometric:?}"),
        ))
    }));

    checks
}
