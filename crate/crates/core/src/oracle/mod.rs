//! Exact finite-distribution laboratory.
//!
//! Every quantity is computed by summing a joint table over Q × X × D, so the
//! loss decomposition and the slope theorems can be checked to rounding
//! error. Each symbol is an atomic sequence; token chains are not modeled.

mod perturb;
mod sample;
mod verify;
mod world;

pub use perturb::{
    verify_error_bound, Conditionals, ErrorBoundPremise, ErrorBoundReport, Errors, PerturbedWorld,
    TripleBound, TripleOutcome,
};
pub use sample::{exact_profile, sample_points, WorldBackend};
pub use verify::{
    verify_bayes_decomposition, verify_ratio_inequality, verify_ratio_inequality_against,
    verify_slope_identity, BayesReport, RatioComparison, RatioInequalityReport, SlopeIdentityReport,
    BAYES_TOLERANCE, COMPARISON_SLACK, SLOPE_IDENTITY_TOLERANCE,
};
pub use world::{w1, DiscreteWorld, Event};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::Result;
use crate::parallel;

/// Builds a world in which demonstrations `d0` (d_hat) and `d1` (d_star)
/// induce the same `p(x|q,d)` for every q, so the pointwise premise
/// `p(x|q;d_hat) ≤ p(x|q;d_star)` holds (with equality, the only way it can
/// hold for normalized conditionals). All masses are Dirichlet(1, ..., 1).
pub fn premise_satisfying_world<R: Rng + ?Sized>(
    rng: &mut R,
    nq: usize,
    nx: usize,
    nd: usize,
) -> Result<DiscreteWorld> {
    let nd = nd.max(2);
    let mut simplex = |n: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = v.iter().sum();
        v.into_iter().map(|p| p / total).collect()
    };
    let p_q = simplex(nq);
    let mut joint = Vec::with_capacity(nq * nx * nd);
    let mut cells = vec![0.0; nq * nx * nd];
    for q in 0..nq {
        let p_d = simplex(nd);
        let mut p_x_given_d: Vec<Vec<f64>> = (0..nd).map(|_| simplex(nx)).collect();
        p_x_given_d[1] = p_x_given_d[0].clone();
        for x in 0..nx {
            for d in 0..nd {
                cells[(q * nx + x) * nd + d] = p_q[q] * p_d[d] * p_x_given_d[d][x];
            }
        }
    }
    let total: f64 = cells.iter().sum();
    joint.extend(cells.into_iter().map(|c| c / total));
    DiscreteWorld::from_joint(nq, nx, nd, joint)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub worlds: usize,
    pub seed: u64,
    pub max_side: usize,
    /// Number of premise-satisfying worlds for the synthetic-ratio check.
    pub ratio_worlds: usize,
    /// Perturbation magnitude for the error-bound check.
    pub perturbation_scale: f64,
    /// Minimum number of premise-satisfying triples for the error bound.
    pub min_bound_checks: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            worlds: 100,
            seed: 0,
            max_side: 4,
            ratio_worlds: 50,
            perturbation_scale: 0.05,
            min_bound_checks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesSummary {
    pub worlds: usize,
    pub triples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeIdentitySummary {
    pub worlds: usize,
    pub triples: usize,
    pub skipped: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioInequalitySummary {
    /// Worlds built so the premise holds.
    pub constructed_worlds: usize,
    /// Random worlds checked with (d_first, d_last); the premise almost never holds.
    pub random_worlds: usize,
    pub premise_failed: usize,
    pub held: usize,
    pub violated: usize,
    /// Largest synthetic_ratio − real_ratio among violations.
    pub max_violation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBoundSummary {
    pub worlds: usize,
    pub checked: usize,
    pub premise_failed: usize,
    pub violations: usize,
    pub max_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub bayes: BayesSummary,
    pub slope_identity: SlopeIdentitySummary,
    pub ratio_inequality: RatioInequalitySummary,
    pub error_bound: ErrorBoundSummary,
    pub passed: bool,
}

fn world_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * 1024);
    ChaCha8Rng::seed_from_u64(rng.random())
}

/// Dirichlet-random worlds for the suite, reproducible from `(seed, index)`.
pub fn random_world(seed: u64, index: usize, max_side: usize) -> Result<DiscreteWorld> {
    DiscreteWorld::random_sized(&mut world_rng(seed, 1, index), max_side)
}

/// Runs all four verifiers.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let worlds: Vec<DiscreteWorld> =
        parallel::map_range(config.worlds, |i| random_world(config.seed, i, config.max_side))
            .into_iter()
            .collect::<Result<_>>()?;

    let bayes_reports = parallel::map(&worlds, verify_bayes_decomposition);
    let bayes_max = bayes_reports.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    let bayes = BayesSummary {
        worlds: worlds.len(),
        triples: bayes_reports.iter().map(|r| r.checked).sum(),
        max_residual: bayes_max,
        tolerance: BAYES_TOLERANCE,
        passed: bayes_reports.iter().all(|r| r.passed),
    };

    let t1_reports = parallel::map(&worlds, verify_slope_identity);
    let slope_identity = SlopeIdentitySummary {
        worlds: worlds.len(),
        triples: t1_reports.iter().map(|r| r.checked).sum(),
        skipped: t1_reports.iter().map(|r| r.skipped).sum(),
        max_residual: t1_reports.iter().map(|r| r.max_residual).fold(0.0, f64::max),
        tolerance: SLOPE_IDENTITY_TOLERANCE,
        passed: t1_reports.iter().all(|r| r.passed),
    };

    let constructed: Vec<DiscreteWorld> = parallel::map_range(config.ratio_worlds, |i| {
        let mut rng = world_rng(config.seed, 2, i);
        let side = config.max_side.max(2);
        let nq = rng.random_range(1..=side);
        let nx = rng.random_range(1..=side);
        let nd = rng.random_range(2..=side);
        premise_satisfying_world(&mut rng, nq, nx, nd)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut t2_reports = parallel::try_map(&constructed, |w| {
        verify_ratio_inequality(w, &w.d_symbols()[0], &w.d_symbols()[1])
    })?;
    t2_reports.extend(parallel::try_map(&worlds, |w| {
        let d = w.d_symbols();
        verify_ratio_inequality(w, &d[0], &d[d.len() - 1])
    })?);
    let mut ratio_inequality = RatioInequalitySummary {
        constructed_worlds: constructed.len(),
        random_worlds: worlds.len(),
        premise_failed: 0,
        held: 0,
        violated: 0,
        max_violation: 0.0,
        passed: true,
    };
    for report in &t2_reports {
        match report {
            RatioInequalityReport::PremiseFailed { .. } => ratio_inequality.premise_failed += 1,
            RatioInequalityReport::Checked { comparisons, holds } => {
                if *holds {
                    ratio_inequality.held += 1;
                } else {
                    ratio_inequality.violated += 1;
                    for c in comparisons {
                        ratio_inequality.max_violation =
                            ratio_inequality.max_violation.max(c.synthetic_ratio - c.real_ratio);
                    }
                }
            }
        }
    }
    ratio_inequality.passed = ratio_inequality.violated == 0;

    let mut error_bound = ErrorBoundSummary {
        worlds: 0,
        checked: 0,
        premise_failed: 0,
        violations: 0,
        max_gap: f64::NEG_INFINITY,
        passed: true,
    };
    // Perturbed copies of the suite worlds, extended with further random worlds
    // until enough triples satisfy the premises.
    let batch = config.worlds.max(16);
    let mut offset = 0usize;
    while error_bound.checked < config.min_bound_checks && offset < 10_000 * batch {
        let reports: Vec<Option<ErrorBoundReport>> = parallel::map_range(batch, |i| {
            let index = offset + i;
            let base = random_world(config.seed, index, config.max_side).ok()?;
            let mut rng = world_rng(config.seed, 3, index);
            let pw = PerturbedWorld::random(base, config.perturbation_scale, &mut rng, 100)?;
            Some(verify_error_bound(&pw))
        });
        for report in reports.into_iter().flatten() {
            error_bound.worlds += 1;
            error_bound.checked += report.checked;
            error_bound.premise_failed += report.premise_failed;
            error_bound.violations += report.violations;
            for t in &report.triples {
                if let TripleOutcome::Checked { delta_i, delta_p, .. } = t.outcome {
                    error_bound.max_gap = error_bound.max_gap.max(delta_i - delta_p);
                }
            }
        }
        offset += batch;
    }
    error_bound.passed = error_bound.violations == 0 && error_bound.checked >= config.min_bound_checks;

    let passed = bayes.passed && slope_identity.passed && ratio_inequality.passed && error_bound.passed;
    Ok(SuiteReport { config: config.clone(), bayes, slope_identity, ratio_inequality, error_bound, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_worlds_satisfy_premise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = premise_satisfying_world(&mut rng, 2, 3, 3).unwrap();
            let r = verify_ratio_inequality(&w, "d0", "d1").unwrap();
            assert!(r.premise_held());
        }
    }

    #[test]
    fn random_worlds_reproducible() {
        assert_eq!(random_world(5, 3, 4).unwrap(), random_world(5, 3, 4).unwrap());
        assert_ne!(random_world(5, 3, 4).unwrap(), random_world(5, 4, 4).unwrap());
    }

    #[test]
    fn small_suite_runs() {
        let r = run_suite(&SuiteConfig {
            worlds: 10,
            ratio_worlds: 5,
            min_bound_checks: 5,
            ..SuiteConfig::default()
        })
        .unwrap();
        assert!(r.bayes.passed && r.slope_identity.passed && r.error_bound.passed);
        assert_eq!(r.ratio_inequality.constructed_worlds + r.ratio_inequality.random_worlds, 15);
    }
}
