//! Fixtures shared by the acceptance suite and the benchmarks.
//!
//! [`BigramOracle`] rescores texts with a bigram model written independently
//! of the reference backend. [`signal_fixture`] builds a corpus in which each
//! demonstration is informative for exactly one instance.
//! [`constant_ratio_world`] is a discrete world with a fixed p(d|q)/p(x|q).

use std::collections::{BTreeMap, BTreeSet};

use iclslope::oracle::DiscreteWorld;
use iclslope::{Demonstration, LikelihoodProfile, NormalizedLikelihood, Origin, TaskInstance};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Work = Vec<(TaskInstance, Vec<Demonstration>)>;

const END: &str = "</s>";
const UNKNOWN: &str = "<unk>";

/// Add-alpha bigram model over whitespace tokens. Counts never cross line
/// boundaries; in open mode every line ends with `</s>` and unseen tokens
/// map to `<unk>`.
#[derive(Debug, Clone)]
pub struct BigramOracle {
    pairs: BTreeMap<(String, String), f64>,
    rows: BTreeMap<String, f64>,
    vocab: BTreeSet<String>,
    alpha: f64,
}

impl BigramOracle {
    pub fn new(corpus: &str, alpha: f64, open: bool) -> Self {
        let mut pairs = BTreeMap::new();
        let mut rows = BTreeMap::new();
        let mut vocab = BTreeSet::new();
        for line in corpus.lines().filter(|l| !l.trim().is_empty()) {
            let mut toks: Vec<String> = line.split_whitespace().map(String::from).collect();
            if open {
                toks.push(END.into());
            }
            vocab.extend(toks.iter().cloned());
            for w in toks.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_insert(0.0) += 1.0;
                *rows.entry(w[0].clone()).or_insert(0.0) += 1.0;
            }
        }
        if open {
            vocab.insert(END.into());
            vocab.insert(UNKNOWN.into());
        }
        BigramOracle { pairs, rows, vocab, alpha }
    }

    fn known(&self, t: &str) -> String {
        if self.vocab.contains(t) {
            t.into()
        } else {
            UNKNOWN.into()
        }
    }

    pub fn probability(&self, prev: &str, next: &str) -> f64 {
        let (prev, next) = (self.known(prev), self.known(next));
        let count = self.pairs.get(&(prev.clone(), next)).copied().unwrap_or(0.0);
        let row = self.rows.get(&prev).copied().unwrap_or(0.0);
        (count + self.alpha) / (row + self.alpha * self.vocab.len() as f64)
    }

    /// Geometric-mean probability of `target` after the last token of
    /// `context` (which must be non-empty).
    pub fn likelihood(&self, context: &str, target: &str) -> f64 {
        let mut prev = context.split_whitespace().last().expect("non-empty context").to_string();
        let toks: Vec<&str> = target.split_whitespace().collect();
        let mut total = 0.0;
        for t in &toks {
            total += self.probability(&prev, t).ln();
            prev = t.to_string();
        }
        (total / toks.len() as f64).exp()
    }

    /// The four likelihoods of one (instance, demo) pair under question-first
    /// plain concatenation. Only the last context token matters to a bigram
    /// model, so the separator drops out as long as it is whitespace.
    pub fn profile(&self, instance: &TaskInstance, demo: &Demonstration) -> [f64; 4] {
        let output = instance.output_text(" ");
        let demo_text = demo.text(" ");
        let q = &instance.question;
        [
            self.likelihood(q, &output),
            self.likelihood(&format!("{q} {demo_text}"), &output),
            self.likelihood(q, &demo_text),
            self.likelihood(&format!("{q} {output}"), &demo_text),
        ]
    }
}

/// Corpus plus informative and mismatched work for the same instances.
#[derive(Debug, Clone)]
pub struct SignalFixture {
    pub corpus: String,
    pub informative: Work,
    pub shuffled: Work,
}

/// `n` instances `q{i} → a{i}` with demonstrations `c{i} → b{i}`.
///
/// Per instance the corpus holds `r_i` lines `b{i} a{i} c{i}` and a varying
/// number of direct `q{i} a{i}` lines, so both how much the demonstration
/// helps the answer and how much the answer predicts the demonstration grow
/// together. Every other successor is padded with `z` so that each row of
/// the bigram table has the same total regardless of `i`. In the shuffled
/// work instance `i` receives the demonstration of instance `i + shift`,
/// which shares no tokens with it.
pub fn signal_fixture(n: usize, shift: usize) -> SignalFixture {
    assert!(n >= 2 && !shift.is_multiple_of(n), "shift must move every demonstration");
    const ROW: usize = 4;
    const LINK: usize = 4;
    const DIRECT: usize = 1;
    let mut lines: Vec<String> = Vec::new();
    let mut push = |line: String, times: usize| lines.extend(std::iter::repeat_n(line, times));
    let mut instances = Vec::with_capacity(n);
    let mut demos = Vec::with_capacity(n);
    for i in 1..=n {
        let strength = 1 + (i - 1) % 3;
        let direct = i % 2;
        push(format!("q{i} a{i}"), direct);
        push(format!("q{i} z"), DIRECT - direct);
        push(format!("b{i} a{i} c{i}"), strength);
        push(format!("b{i} z"), ROW - strength);
        push(format!("a{i} z"), ROW - strength - direct);
        push(format!("c{i} z"), ROW - strength);
        push(format!("c{i} b{i}"), LINK);
        instances
            .push(TaskInstance::new(format!("i{i:02}"), format!("q{i}"), format!("a{i}")).expect("valid"));
        demos.push(
            Demonstration::new(format!("d{i:02}"), format!("c{i}"), format!("b{i}"), Origin::Labeled)
                .expect("valid"),
        );
    }
    let informative = instances.iter().cloned().zip(demos.iter().map(|d| vec![d.clone()])).collect();
    let shuffled = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (inst.clone(), vec![demos[(i + shift) % n].clone()]))
        .collect();
    SignalFixture { corpus: lines.join("\n"), informative, shuffled }
}

/// Ratio p(d|q)/p(x|q) shared by every cell of [`constant_ratio_world`].
pub const CONSTANT_RATIO: f64 = 0.5;

/// One question, two answers and four demonstrations with
/// p(x0, d) = (0.2, 0.15, 0.1, 0.05) and p(x1, d) reversed. Both answer
/// marginals are 0.5 and every demo marginal is 0.25.
pub fn constant_ratio_world() -> DiscreteWorld {
    DiscreteWorld::from_joint(1, 2, 4, vec![0.2, 0.15, 0.1, 0.05, 0.05, 0.1, 0.15, 0.2]).expect("valid world")
}

/// `instances` instances sampled from `world` (first question only), each
/// with `shots` demonstrations drawn from p(d|q,x). Demonstration texts are
/// `example → d` so a world backend sees only the demo symbol.
pub fn world_work(world: &DiscreteWorld, instances: usize, shots: usize, seed: u64) -> Work {
    let (_, nx, nd) = world.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let answers =
        WeightedIndex::new((0..nx).map(|x| world.p_x_q(0, x).unwrap_or(0.0))).expect("answer weights");
    (0..instances)
        .map(|i| {
            let x = answers.sample(&mut rng);
            let demo_weights =
                WeightedIndex::new((0..nd).map(|d| world.mass(0, x, d))).expect("demo weights");
            let instance = TaskInstance::new(
                format!("w{i:03}"),
                world.q_symbols()[0].clone(),
                world.x_symbols()[x].clone(),
            )
            .expect("valid");
            let demos = (0..shots)
                .map(|k| {
                    let d = demo_weights.sample(&mut rng);
                    Demonstration::new(
                        format!("k{k}-{}", world.d_symbols()[d]),
                        "example",
                        world.d_symbols()[d].clone(),
                        Origin::Labeled,
                    )
                    .expect("valid")
                })
                .collect();
            (instance, demos)
        })
        .collect()
}

/// Exact profile as [`LikelihoodProfile`], for comparison with scored points.
pub fn profile_of(values: [f64; 4]) -> LikelihoodProfile {
    let p = |v| NormalizedLikelihood::from_probability(v).expect("probability in (0, 1]");
    LikelihoodProfile { p_x_q: p(values[0]), p_x_qd: p(values[1]), p_d_q: p(values[2]), p_d_qx: p(values[3]) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_rows_are_distributions() {
        let fx = signal_fixture(10, 1);
        let oracle = BigramOracle::new(&fx.corpus, 1.0, true);
        for prev in ["q1", "b4", "c7", "zzz"] {
            let total: f64 = oracle.vocab.iter().map(|t| oracle.probability(prev, t)).sum();
            assert!((total - 1.0).abs() < 1e-12, "{prev}: {total}");
        }
    }

    #[test]
    fn world_work_has_requested_shape() {
        let work = world_work(&constant_ratio_world(), 10, 3, 1);
        assert_eq!(work.len(), 10);
        assert!(work.iter().all(|(_, d)| d.len() == 3));
    }
}
