//! Additive-error model `p̂(A|B) = p(A|B) + ε(A|B)` and the error bound
//! comparing the fitted slope with the plain likelihood ratio.
//!
//! For one triple write `r = p(d|q)/p(x|q)`, `I = p(x|q;d) − p(x|q)`,
//! `P = p(x|q;d)`, `e = ε(x|q;d)` and `N = ε(d|q;x) − e·r`. Then
//!
//! ```text
//! Δ_I = N / (I (I + e))        (error of the slope)
//! Δ_p = N / (P (P + e))        (error of p̂(d|q)/p̂(x|q))
//! ```
//!
//! and `Δ_I ≤ Δ_p` whenever `r ≥ ε(d|q)/ε(x|q) ≥ ε(d|q;x)/ε(x|q;d)` and
//! `I ≤ P`. The ratios are growth rates of positive errors, so `ε(x|q)` and
//! `ε(x|q;d)` must be positive, and the slope base `I` must be positive for
//! the closed forms to be defined. Each condition is checked per triple and a
//! failed one is reported by name; the inequality is only asserted when all
//! of them hold.

use rand::Rng;
use serde::Serialize;

use super::world::DiscreteWorld;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedWorld {
    base: DiscreteWorld,
    /// ε(x|q), indexed [q][x]
    eps_x_q: Vec<Vec<f64>>,
    /// ε(d|q), indexed [q][d]
    eps_d_q: Vec<Vec<f64>>,
    /// ε(x|q;d), indexed [q][x][d]
    eps_x_qd: Vec<Vec<Vec<f64>>>,
    /// ε(d|q;x), indexed [q][x][d]
    eps_d_qx: Vec<Vec<Vec<f64>>>,
}

impl PerturbedWorld {
    /// Every perturbed conditional must stay in (0, 1].
    pub fn new(
        base: DiscreteWorld,
        eps_x_q: Vec<Vec<f64>>,
        eps_d_q: Vec<Vec<f64>>,
        eps_x_qd: Vec<Vec<Vec<f64>>>,
        eps_d_qx: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let (nq, nx, nd) = base.dims();
        let shape_ok = eps_x_q.len() == nq
            && eps_x_q.iter().all(|r| r.len() == nx)
            && eps_d_q.len() == nq
            && eps_d_q.iter().all(|r| r.len() == nd)
            && [&eps_x_qd, &eps_d_qx]
                .iter()
                .all(|t| t.len() == nq && t.iter().all(|r| r.len() == nx && r.iter().all(|c| c.len() == nd)));
        if !shape_ok {
            return Err(Error::InvalidWorld("perturbation tables do not match the world".into()));
        }
        let pw = PerturbedWorld { base, eps_x_q, eps_d_q, eps_x_qd, eps_d_qx };
        for (q, x, d) in pw.base.triples() {
            let Ok(hat) = pw.perturbed(q, x, d) else {
                continue;
            };
            for (name, v) in [
                ("p̂(x|q)", hat.p_x_q),
                ("p̂(d|q)", hat.p_d_q),
                ("p̂(x|q;d)", hat.p_x_qd),
                ("p̂(d|q;x)", hat.p_d_qx),
            ] {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::InvalidWorld(format!(
                        "{name} = {v} at (q{q}, x{x}, d{d}) leaves (0, 1]"
                    )));
                }
            }
        }
        Ok(pw)
    }

    pub fn unperturbed(base: DiscreteWorld) -> Self {
        let (nq, nx, nd) = base.dims();
        PerturbedWorld {
            base,
            eps_x_q: vec![vec![0.0; nx]; nq],
            eps_d_q: vec![vec![0.0; nd]; nq],
            eps_x_qd: vec![vec![vec![0.0; nd]; nx]; nq],
            eps_d_qx: vec![vec![vec![0.0; nd]; nx]; nq],
        }
    }

    /// Uniform errors in `[-scale, scale]`, resampled until every perturbed
    /// conditional lies in (0, 1]. `None` after `max_tries` failures.
    pub fn random<R: Rng + ?Sized>(
        base: DiscreteWorld,
        scale: f64,
        rng: &mut R,
        max_tries: usize,
    ) -> Option<Self> {
        let (nq, nx, nd) = base.dims();
        for _ in 0..max_tries {
            let mut draw = || rng.random_range(-scale..=scale);
            let eps_x_q = (0..nq).map(|_| (0..nx).map(|_| draw()).collect()).collect();
            let eps_d_q = (0..nq).map(|_| (0..nd).map(|_| draw()).collect()).collect();
            let mut table = || -> Vec<Vec<Vec<f64>>> {
                (0..nq).map(|_| (0..nx).map(|_| (0..nd).map(|_| draw()).collect()).collect()).collect()
            };
            let eps_x_qd = table();
            let eps_d_qx = table();
            if let Ok(pw) = Self::new(base.clone(), eps_x_q, eps_d_q, eps_x_qd, eps_d_qx) {
                return Some(pw);
            }
        }
        None
    }

    pub fn base(&self) -> &DiscreteWorld {
        &self.base
    }

    pub fn errors(&self, q: usize, x: usize, d: usize) -> Errors {
        Errors {
            x_q: self.eps_x_q[q][x],
            d_q: self.eps_d_q[q][d],
            x_qd: self.eps_x_qd[q][x][d],
            d_qx: self.eps_d_qx[q][x][d],
        }
    }

    fn exact(&self, q: usize, x: usize, d: usize) -> Result<Conditionals> {
        Ok(Conditionals {
            p_x_q: self.base.p_x_q(q, x)?,
            p_d_q: self.base.p_d_q(q, d)?,
            p_x_qd: self.base.p_x_qd(q, x, d)?,
            p_d_qx: self.base.p_d_qx(q, x, d)?,
        })
    }

    /// The empirical predictor p̂ = p + ε at one triple.
    pub fn perturbed(&self, q: usize, x: usize, d: usize) -> Result<Conditionals> {
        let p = self.exact(q, x, d)?;
        let e = self.errors(q, x, d);
        Ok(Conditionals {
            p_x_q: p.p_x_q + e.x_q,
            p_d_q: p.p_d_q + e.d_q,
            p_x_qd: p.p_x_qd + e.x_qd,
            p_d_qx: p.p_d_qx + e.d_qx,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Errors {
    pub x_q: f64,
    pub d_q: f64,
    pub x_qd: f64,
    pub d_qx: f64,
}

impl Errors {
    fn is_zero(&self) -> bool {
        self.x_q == 0.0 && self.d_q == 0.0 && self.x_qd == 0.0 && self.d_qx == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conditionals {
    pub p_x_q: f64,
    pub p_d_q: f64,
    pub p_x_qd: f64,
    pub p_d_qx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorBoundPremise {
    /// ε(x|q) > 0 and ε(x|q;d) > 0.
    PositiveErrors,
    /// r ≥ ε(d|q)/ε(x|q) ≥ ε(d|q;x)/ε(x|q;d).
    RatioChain,
    /// p(x|q;d) − p(x|q) > 0.
    PositiveRelevance,
    /// p(x|q;d) − p(x|q) ≤ p(x|q;d).
    RelevanceBelowLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TripleOutcome {
    Degenerate,
    PremiseFailed {
        premise: ErrorBoundPremise,
    },
    Checked {
        /// Closed-form slope error.
        delta_i: f64,
        /// Closed-form ratio error.
        delta_p: f64,
        /// Slope error from the perturbed increments, for reference.
        direct_delta_i: f64,
        /// Ratio error from the perturbed marginals, for reference.
        direct_delta_p: f64,
        holds: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleBound {
    pub q: usize,
    pub x: usize,
    pub d: usize,
    pub outcome: TripleOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBoundReport {
    pub triples: Vec<TripleBound>,
    pub checked: usize,
    pub premise_failed: usize,
    pub degenerate: usize,
    pub violations: usize,
}

impl ErrorBoundReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn evaluate(pw: &PerturbedWorld, q: usize, x: usize, d: usize) -> TripleOutcome {
    let Ok(p) = pw.exact(q, x, d) else {
        return TripleOutcome::Degenerate;
    };
    let e = pw.errors(q, x, d);
    let r = p.p_d_q / p.p_x_q;
    let relevance = p.p_x_qd - p.p_x_q;
    let gain = p.p_d_qx - p.p_d_q;

    if e.is_zero() {
        return TripleOutcome::Checked {
            delta_i: 0.0,
            delta_p: 0.0,
            direct_delta_i: 0.0,
            direct_delta_p: 0.0,
            holds: true,
        };
    }
    if !(e.x_q > 0.0 && e.x_qd > 0.0) {
        return TripleOutcome::PremiseFailed { premise: ErrorBoundPremise::PositiveErrors };
    }
    let rate_without = e.d_q / e.x_q;
    let rate_with = e.d_qx / e.x_qd;
    if !(r >= rate_without && rate_without >= rate_with) {
        return TripleOutcome::PremiseFailed { premise: ErrorBoundPremise::RatioChain };
    }
    if relevance <= 0.0 {
        return TripleOutcome::PremiseFailed { premise: ErrorBoundPremise::PositiveRelevance };
    }
    if relevance > p.p_x_qd {
        return TripleOutcome::PremiseFailed { premise: ErrorBoundPremise::RelevanceBelowLikelihood };
    }

    let numerator = e.d_qx - e.x_qd * r;
    let delta_i = numerator / (relevance * (relevance + e.x_qd));
    let delta_p = numerator / (p.p_x_qd * (p.p_x_qd + e.x_qd));
    let direct_delta_i = (gain + e.d_qx - e.d_q) / (relevance + e.x_qd - e.x_q) - gain / relevance;
    let direct_delta_p = (p.p_d_q + e.d_q) / (p.p_x_q + e.x_q) - r;
    TripleOutcome::Checked { delta_i, delta_p, direct_delta_i, direct_delta_p, holds: delta_i <= delta_p }
}

/// Evaluates the bound on every triple of the world.
pub fn verify_error_bound(pw: &PerturbedWorld) -> ErrorBoundReport {
    let triples: Vec<TripleBound> =
        pw.base.triples().map(|(q, x, d)| TripleBound { q, x, d, outcome: evaluate(pw, q, x, d) }).collect();
    let count = |f: fn(&TripleOutcome) -> bool| triples.iter().filter(|t| f(&t.outcome)).count();
    ErrorBoundReport {
        checked: count(|o| matches!(o, TripleOutcome::Checked { .. })),
        premise_failed: count(|o| matches!(o, TripleOutcome::PremiseFailed { .. })),
        degenerate: count(|o| matches!(o, TripleOutcome::Degenerate)),
        violations: count(|o| matches!(o, TripleOutcome::Checked { holds: false, .. })),
        triples,
    }
}
