use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-12;

/// A (possibly partial) assignment of the three variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Event {
    pub q: Option<usize>,
    pub x: Option<usize>,
    pub d: Option<usize>,
}

impl Event {
    pub fn q(q: usize) -> Self {
        Event { q: Some(q), ..Event::default() }
    }

    pub fn qx(q: usize, x: usize) -> Self {
        Event { q: Some(q), x: Some(x), d: None }
    }

    pub fn qd(q: usize, d: usize) -> Self {
        Event { q: Some(q), x: None, d: Some(d) }
    }

    pub fn x(x: usize) -> Self {
        Event { x: Some(x), ..Event::default() }
    }

    pub fn d(d: usize) -> Self {
        Event { d: Some(d), ..Event::default() }
    }

    /// Conjunction; `None` when the two events assign different values.
    pub fn and(self, other: Event) -> Option<Event> {
        fn merge(a: Option<usize>, b: Option<usize>) -> Option<Option<usize>> {
            match (a, b) {
                (Some(a), Some(b)) if a != b => None,
                (a, b) => Some(a.or(b)),
            }
        }
        Some(Event { q: merge(self.q, other.q)?, x: merge(self.x, other.x)?, d: merge(self.d, other.d)? })
    }

    fn matches(&self, q: usize, x: usize, d: usize) -> bool {
        self.q.is_none_or(|v| v == q) && self.x.is_none_or(|v| v == x) && self.d.is_none_or(|v| v == d)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [("q", self.q), ("x", self.x), ("d", self.d)]
            .iter()
            .filter_map(|(n, v)| v.map(|v| format!("{n}{v}")))
            .collect();
        if parts.is_empty() {
            write!(f, "Ω")
        } else {
            write!(f, "{}", parts.join(","))
        }
    }
}

/// Finite joint distribution over questions × outputs × demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorld {
    q_symbols: Vec<String>,
    x_symbols: Vec<String>,
    d_symbols: Vec<String>,
    /// Row-major over (q, x, d).
    joint: Vec<f64>,
}

impl DiscreteWorld {
    pub fn new(
        q_symbols: Vec<String>,
        x_symbols: Vec<String>,
        d_symbols: Vec<String>,
        joint: Vec<f64>,
    ) -> Result<Self> {
        if q_symbols.is_empty() || x_symbols.is_empty() || d_symbols.is_empty() {
            return Err(Error::InvalidWorld("every sample space needs a symbol".into()));
        }
        let expected = q_symbols.len() * x_symbols.len() * d_symbols.len();
        if joint.len() != expected {
            return Err(Error::InvalidWorld(format!(
                "joint has {} entries, expected {expected}",
                joint.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in q_symbols.iter().chain(&x_symbols).chain(&d_symbols) {
            if s.is_empty() || s.contains(char::is_whitespace) {
                return Err(Error::InvalidWorld(format!("bad symbol label {s:?}")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::InvalidWorld(format!("duplicate symbol label {s:?}")));
            }
        }
        if let Some(bad) = joint.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidWorld(format!("negative or non-finite mass {bad}")));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidWorld(format!("joint sums to {total}, not 1")));
        }
        Ok(DiscreteWorld { q_symbols, x_symbols, d_symbols, joint })
    }

    /// Builds a world with generated labels `q0.., x0.., d0..`.
    pub fn from_joint(nq: usize, nx: usize, nd: usize, joint: Vec<f64>) -> Result<Self> {
        let labels = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(labels("q", nq), labels("x", nx), labels("d", nd), joint)
    }

    /// Dirichlet(1, ..., 1) joint over an `nq × nx × nd` table.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, nq: usize, nx: usize, nd: usize) -> Result<Self> {
        let n = nq * nx * nd;
        let mut joint: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = joint.iter().sum();
        joint.iter_mut().for_each(|p| *p /= total);
        // Renormalizing twice keeps the float sum within the validation tolerance.
        let total: f64 = joint.iter().sum();
        joint.iter_mut().for_each(|p| *p /= total);
        Self::from_joint(nq, nx, nd, joint)
    }

    /// Random world with each dimension drawn from `1..=max_side`.
    pub fn random_sized<R: Rng + ?Sized>(rng: &mut R, max_side: usize) -> Result<Self> {
        let nq = rng.random_range(1..=max_side);
        let nx = rng.random_range(1..=max_side);
        let nd = rng.random_range(1..=max_side);
        Self::random(rng, nq, nx, nd)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.q_symbols.len(), self.x_symbols.len(), self.d_symbols.len())
    }

    pub fn q_symbols(&self) -> &[String] {
        &self.q_symbols
    }

    pub fn x_symbols(&self) -> &[String] {
        &self.x_symbols
    }

    pub fn d_symbols(&self) -> &[String] {
        &self.d_symbols
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn mass(&self, q: usize, x: usize, d: usize) -> f64 {
        let (_, nx, nd) = self.dims();
        self.joint[(q * nx + x) * nd + d]
    }

    /// Exact probability of an event by summation over the table.
    pub fn probability(&self, event: &Event) -> f64 {
        let (nq, nx, nd) = self.dims();
        let mut total = 0.0;
        for q in 0..nq {
            for x in 0..nx {
                for d in 0..nd {
                    if event.matches(q, x, d) {
                        total += self.mass(q, x, d);
                    }
                }
            }
        }
        total
    }

    /// `p(target | given)`.
    pub fn conditional(&self, target: &Event, given: &Event) -> Result<f64> {
        let denom = self.probability(given);
        if denom <= 0.0 {
            return Err(Error::DegenerateConditioning { given: given.to_string() });
        }
        Ok(match target.and(*given) {
            Some(both) => self.probability(&both) / denom,
            None => 0.0,
        })
    }

    pub fn p_x_q(&self, q: usize, x: usize) -> Result<f64> {
        self.conditional(&Event::x(x), &Event::q(q))
    }

    pub fn p_d_q(&self, q: usize, d: usize) -> Result<f64> {
        self.conditional(&Event::d(d), &Event::q(q))
    }

    pub fn p_x_qd(&self, q: usize, x: usize, d: usize) -> Result<f64> {
        self.conditional(&Event::x(x), &Event::qd(q, d))
    }

    pub fn p_d_qx(&self, q: usize, x: usize, d: usize) -> Result<f64> {
        self.conditional(&Event::d(d), &Event::qx(q, x))
    }

    pub fn q_index(&self, label: &str) -> Result<usize> {
        position(&self.q_symbols, label)
    }

    pub fn x_index(&self, label: &str) -> Result<usize> {
        position(&self.x_symbols, label)
    }

    pub fn d_index(&self, label: &str) -> Result<usize> {
        position(&self.d_symbols, label)
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        let (nq, nx, nd) = self.dims();
        (0..nq).flat_map(move |q| (0..nx).flat_map(move |x| (0..nd).map(move |d| (q, x, d))))
    }
}

fn position(symbols: &[String], label: &str) -> Result<usize> {
    symbols.iter().position(|s| s == label).ok_or_else(|| Error::UnknownSymbol(label.to_string()))
}

/// The two-output, two-demonstration world used throughout the tests:
/// `p(x1,d1)=0.4, p(x1,d2)=0.1, p(x2,d1)=0.2, p(x2,d2)=0.3` under one question.
pub fn w1() -> DiscreteWorld {
    DiscreteWorld::new(
        vec!["q".into()],
        vec!["x1".into(), "x2".into()],
        vec!["d1".into(), "d2".into()],
        vec![0.4, 0.1, 0.2, 0.3],
    )
    .expect("W1 is a valid world")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn w1_conditionals() {
        let w = w1();
        assert!((w.p_x_q(0, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((w.p_d_qx(0, 0, 0).unwrap() - 0.8).abs() < 1e-15);
        assert!((w.p_x_qd(0, 0, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.p_d_q(0, 0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_question_is_degenerate() {
        let w = DiscreteWorld::from_joint(2, 1, 1, vec![1.0, 0.0]).unwrap();
        assert!(matches!(w.p_x_q(1, 0), Err(Error::DegenerateConditioning { .. })));
        assert_eq!(w.p_x_q(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn validation() {
        assert!(DiscreteWorld::from_joint(1, 1, 2, vec![0.5, 0.4]).is_err());
        assert!(DiscreteWorld::from_joint(1, 1, 2, vec![1.5, -0.5]).is_err());
        assert!(DiscreteWorld::from_joint(1, 1, 2, vec![1.0]).is_err());
        assert!(DiscreteWorld::new(vec!["a".into()], vec!["a".into()], vec!["d".into()], vec![1.0]).is_err());
    }

    #[test]
    fn conflicting_target_is_zero() {
        let w = w1();
        let p = w.conditional(&Event::qx(0, 1), &Event::qx(0, 0)).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn random_worlds_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let w = DiscreteWorld::random_sized(&mut rng, 4).unwrap();
            let (nq, nx, nd) = w.dims();
            assert!(nq <= 4 && nx <= 4 && nd <= 4);
            assert!(w.joint().iter().all(|p| *p > 0.0));
        }
    }
}
