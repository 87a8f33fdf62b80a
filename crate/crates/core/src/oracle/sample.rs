use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::world::DiscreteWorld;
use crate::backend::LanguageModel;
use crate::error::{BackendError, Error, Result};
use crate::types::{LikelihoodProfile, NormalizedLikelihood, ScoredPoint};

/// Exact profile of one triple, each conditional as a one-token likelihood.
pub fn exact_profile(world: &DiscreteWorld, q: usize, x: usize, d: usize) -> Result<LikelihoodProfile> {
    Ok(LikelihoodProfile {
        p_x_q: NormalizedLikelihood::from_probability(world.p_x_q(q, x)?)?,
        p_x_qd: NormalizedLikelihood::from_probability(world.p_x_qd(q, x, d)?)?,
        p_d_q: NormalizedLikelihood::from_probability(world.p_d_q(q, d)?)?,
        p_d_qx: NormalizedLikelihood::from_probability(world.p_d_qx(q, x, d)?)?,
    })
}

/// Draws `n` i.i.d. triples from the joint and scores them with the exact
/// conditionals. Instance ids are `s000000`, `s000001`, ...; demo ids are
/// the sampled d labels.
pub fn sample_points(world: &DiscreteWorld, n: usize, seed: u64) -> Result<Vec<ScoredPoint>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples to fit a line, got {n}")));
    }
    let cells = WeightedIndex::new(world.joint())
        .map_err(|e| Error::InvalidWorld(format!("cannot sample joint: {e}")))?;
    let (_, nx, nd) = world.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let cell = cells.sample(&mut rng);
            let (q, x, d) = (cell / (nx * nd), (cell / nd) % nx, cell % nd);
            let profile = exact_profile(world, q, x, d)?;
            Ok(ScoredPoint::from_profile(format!("s{i:06}"), world.d_symbols()[d].clone(), profile, None))
        })
        .collect()
}

/// A [`LanguageModel`] whose texts are world symbol labels.
///
/// Whitespace-separated tokens that name a symbol fix the corresponding
/// variable; other tokens are ignored. The continuation must name exactly one
/// symbol, and its log-probability given the context symbols is returned as a
/// single token.
pub struct WorldBackend<'a> {
    world: &'a DiscreteWorld,
}

impl<'a> WorldBackend<'a> {
    pub fn new(world: &'a DiscreteWorld) -> Self {
        WorldBackend { world }
    }

    fn parse(&self, text: &str) -> Result<super::Event, BackendError> {
        let mut event = super::Event::default();
        for token in text.split_whitespace() {
            let single = if let Ok(q) = self.world.q_index(token) {
                super::Event::q(q)
            } else if let Ok(x) = self.world.x_index(token) {
                super::Event::x(x)
            } else if let Ok(d) = self.world.d_index(token) {
                super::Event::d(d)
            } else {
                continue;
            };
            event = event
                .and(single)
                .ok_or_else(|| BackendError::InvalidRequest(format!("conflicting symbols in {text:?}")))?;
        }
        Ok(event)
    }
}

impl LanguageModel for WorldBackend<'_> {
    fn continuation_logprobs(&self, context: &str, continuation: &str) -> Result<Vec<f64>, BackendError> {
        let given = self.parse(context)?;
        let target = self.parse(continuation)?;
        let named = [target.q, target.x, target.d].iter().flatten().count();
        if named != 1 {
            return Err(BackendError::InvalidRequest(format!(
                "continuation {continuation:?} must name exactly one symbol"
            )));
        }
        let p = self
            .world
            .conditional(&target, &given)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        if p <= 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "zero probability for {continuation:?} given {context:?}"
            )));
        }
        Ok(vec![libm::log(p)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fit_lcs;
    use crate::oracle::world::w1;

    #[test]
    fn deterministic_by_seed() {
        let a = sample_points(&w1(), 200, 11).unwrap();
        let b = sample_points(&w1(), 200, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_points(&w1(), 200, 12).unwrap());
    }

    #[test]
    fn needs_two_points() {
        assert!(sample_points(&w1(), 1, 0).is_err());
    }

    /// Population least-squares slope of t on s under W1, by enumeration.
    fn w1_population_slope() -> f64 {
        let w = w1();
        let (mut es, mut et, mut est, mut ess) = (0.0, 0.0, 0.0, 0.0);
        for (q, x, d) in w.triples() {
            let m = w.mass(q, x, d);
            let s = w.p_x_qd(q, x, d).unwrap() - w.p_x_q(q, x).unwrap();
            let t = w.p_d_qx(q, x, d).unwrap() - w.p_d_q(q, d).unwrap();
            es += m * s;
            et += m * t;
            est += m * s * t;
            ess += m * s * s;
        }
        (est - es * et) / (ess - es * es)
    }

    #[test]
    fn w1_sampled_slope_near_population_slope() {
        let population = w1_population_slope();
        assert!((population - 0.96).abs() < 1e-12);
        let fit = fit_lcs(&sample_points(&w1(), 1000, 2024).unwrap()).unwrap();
        assert!((fit.slope - population).abs() < 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn world_backend_scores_conditionals() {
        let w = w1();
        let b = WorldBackend::new(&w);
        let lp = b.continuation_logprobs("q example d1", "x1").unwrap();
        assert!((lp[0].exp() - 2.0 / 3.0).abs() < 1e-15);
        let lp = b.continuation_logprobs("q", "example d2").unwrap();
        assert!((lp[0].exp() - 0.4).abs() < 1e-15);
        assert!(b.continuation_logprobs("q", "x1 d1").is_err());
        assert!(b.continuation_logprobs("x1 x2", "d1").is_err());
    }
}
