//! Offline member/non-member benchmark built on a smoothed Markov model.
//!
//! A random Markov chain plays the role of the data distribution. Member and
//! non-member sequences are both drawn from it; the scored model is an
//! additive-smoothed n-gram model fitted on the member sequences only, so
//! membership is known exactly and every next-token statistic can be
//! computed by summing over the (small) vocabulary.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::records::{Corpus, Label, SampleRecord, TokenStats};
use crate::scalar::Scalar;
use crate::scoring::DEFAULT_ZLIB_LEVEL;

/// Concentration of the Dirichlet draws that define the data-generating
/// chain. Below 1 the conditionals are peaked, like natural text.
const GENERATOR_CONCENTRATION: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub vocab_size: usize,
    /// Context length of both the generator and the fitted model.
    pub order: usize,
    pub n_member: usize,
    pub n_nonmember: usize,
    pub seq_len: usize,
    /// How many times each member sequence is counted (epochs).
    pub train_passes: usize,
    pub dirichlet_alpha: f64,
    /// Perturbed copies scored per sample for the Neighbor baseline; 0 omits
    /// `neighbor_losses`.
    pub n_neighbors: usize,
    /// Fraction of positions resampled in each perturbed copy.
    pub neighbor_mask_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            vocab_size: 64,
            order: 2,
            n_member: 500,
            n_nonmember: 500,
            seq_len: 64,
            train_passes: 4,
            dirichlet_alpha: 0.1,
            n_neighbors: 8,
            neighbor_mask_frac: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.vocab_size > u32::MAX as usize {
            return bad("vocab_size does not fit a token id".into());
        }
        if self.order == 0 {
            return bad("order must be >= 1".into());
        }
        if self.seq_len <= self.order {
            return bad(format!(
                "seq_len ({}) must exceed order ({})",
                self.seq_len, self.order
            ));
        }
        if self.n_member == 0 || self.n_nonmember == 0 {
            return bad("n_member and n_nonmember must be positive".into());
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return bad(format!(
                "dirichlet_alpha must be positive, got {}",
                self.dirichlet_alpha
            ));
        }
        if !(0.0..=1.0).contains(&self.neighbor_mask_frac) {
            return bad(format!(
                "neighbor_mask_frac must lie in [0, 1], got {}",
                self.neighbor_mask_frac
            ));
        }
        if (self.vocab_size as u128)
            .checked_pow(self.order as u32)
            .is_none_or(|n| n > u64::MAX as u128)
        {
            return bad("vocab_size^order overflows the context index".into());
        }
        Ok(())
    }
}

fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random Markov chain standing in for the text distribution.
#[derive(Clone, Debug)]
pub struct MarkovSource {
    seed: u64,
    order: usize,
    vocab_size: usize,
    cache: HashMap<u64, (Vec<f64>, WeightedIndex<f64>)>,
}

impl MarkovSource {
    pub fn new(seed: u64, order: usize, vocab_size: usize) -> Self {
        Self {
            seed,
            order,
            vocab_size,
            cache: HashMap::new(),
        }
    }

    fn context_index(&self, ctx: &[u32]) -> u64 {
        ctx.iter()
            .fold(0u64, |acc, &t| acc * self.vocab_size as u64 + t as u64)
    }

    fn entry(&mut self, ctx: &[u32]) -> &(Vec<f64>, WeightedIndex<f64>) {
        let idx = self.context_index(ctx);
        let (seed, vocab) = (self.seed, self.vocab_size);
        self.cache.entry(idx).or_insert_with(|| {
            // Each context owns its own stream, so the chain does not depend
            // on the order contexts are first visited.
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed, idx));
            let gamma = Gamma::new(GENERATOR_CONCENTRATION, 1.0).expect("valid gamma");
            let mut weights: Vec<f64> = (0..vocab).map(|_| gamma.sample(&mut rng)).collect();
            if weights.iter().all(|&w| w <= 0.0) {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let dist = WeightedIndex::new(&weights).expect("non-degenerate weights");
            (probs, dist)
        })
    }

    /// Next-token distribution for a context of exactly `order` tokens.
    pub fn distribution(&mut self, ctx: &[u32]) -> Vec<f64> {
        self.entry(ctx).0.clone()
    }

    pub fn next_token<R: Rng>(&mut self, ctx: &[u32], rng: &mut R) -> u32 {
        self.entry(ctx).1.sample(rng) as u32
    }

    pub fn sample_sequence<R: Rng>(&mut self, len: usize, rng: &mut R) -> Vec<u32> {
        let mut seq: Vec<u32> = (0..self.order.min(len))
            .map(|_| rng.random_range(0..self.vocab_size as u32))
            .collect();
        while seq.len() < len {
            let ctx = seq[seq.len() - self.order..].to_vec();
            let next = self.next_token(&ctx, rng);
            seq.push(next);
        }
        seq
    }
}

/// Additive-smoothed n-gram model:
/// `p(v | ctx) = (count(ctx, v) + alpha) / (count(ctx) + alpha * V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyLm {
    pub order: usize,
    pub vocab_size: usize,
    pub counts: HashMap<Vec<u32>, Vec<u64>>,
    pub dirichlet_alpha: f64,
}

impl ToyLm {
    pub fn new(order: usize, vocab_size: usize, dirichlet_alpha: f64) -> Self {
        Self {
            order,
            vocab_size,
            counts: HashMap::new(),
            dirichlet_alpha,
        }
    }

    /// Adds every (context, next token) transition of `seq`, `passes` times.
    pub fn fit(&mut self, seq: &[u32], passes: usize) {
        if passes == 0 {
            return;
        }
        for window in seq.windows(self.order + 1) {
            let (ctx, next) = window.split_at(self.order);
            let row = self
                .counts
                .entry(ctx.to_vec())
                .or_insert_with(|| vec![0; self.vocab_size]);
            row[next[0] as usize] += passes as u64;
        }
    }

    pub fn conditional(&self, ctx: &[u32]) -> Vec<f64> {
        let v = self.vocab_size as f64;
        let alpha = self.dirichlet_alpha;
        match self.counts.get(ctx) {
            None => vec![1.0 / v; self.vocab_size],
            Some(row) => {
                let total = row.iter().sum::<u64>() as f64 + alpha * v;
                row.iter().map(|&c| (c as f64 + alpha) / total).collect()
            }
        }
    }

    pub fn logprob(&self, ctx: &[u32], token: u32) -> f64 {
        self.conditional(ctx)[token as usize].ln()
    }

    pub fn token_stats<T: Scalar>(&self, ctx: &[u32], target: u32) -> TokenStats<T> {
        let exact = TokenStats::<f64>::from_distribution(&self.conditional(ctx), target as usize);
        TokenStats {
            target_logprob: T::of(exact.target_logprob),
            top1_logprob: T::of(exact.top1_logprob),
            mean_logprob: T::of(exact.mean_logprob),
            std_logprob: T::of(exact.std_logprob),
        }
    }

    /// Mean cross-entropy (nats) over the predicted positions of `seq`.
    pub fn mean_loss(&self, seq: &[u32]) -> f64 {
        let n = seq.len() - self.order;
        -seq.windows(self.order + 1)
            .map(|w| self.logprob(&w[..self.order], w[self.order]))
            .sum::<f64>()
            / n as f64
    }
}

/// Output of [`build_toy_lm`].
#[derive(Clone, Debug)]
pub struct SynthBenchmark {
    pub lm: ToyLm,
    pub source: MarkovSource,
    pub members: Vec<Vec<u32>>,
    pub nonmembers: Vec<Vec<u32>>,
}

/// Samples the data chain, draws member and non-member sequences from it,
/// and fits the toy model on the members only. Deterministic in the seed.
pub fn build_toy_lm(config: &SynthConfig) -> Result<SynthBenchmark, SynthError> {
    config.validate()?;
    let mut source = MarkovSource::new(config.seed, config.order, config.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let members: Vec<Vec<u32>> = (0..config.n_member)
        .map(|_| source.sample_sequence(config.seq_len, &mut rng))
        .collect();
    let nonmembers: Vec<Vec<u32>> = (0..config.n_nonmember)
        .map(|_| source.sample_sequence(config.seq_len, &mut rng))
        .collect();
    let mut lm = ToyLm::new(config.order, config.vocab_size, config.dirichlet_alpha);
    for seq in &members {
        lm.fit(seq, config.train_passes);
    }
    Ok(SynthBenchmark {
        lm,
        source,
        members,
        nonmembers,
    })
}

const SYLLABLE_ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "h",
];
const SYLLABLE_NUCLEI: [&str; 4] = ["a", "e", "i", "o"];

/// Renders a token id as a pronounceable word (base-64 syllables).
pub fn token_word(mut id: u32) -> String {
    let mut word = String::new();
    loop {
        let s = (id % 64) as usize;
        word.push_str(SYLLABLE_ONSETS[s % 16]);
        word.push_str(SYLLABLE_NUCLEI[s / 16]);
        id /= 64;
        if id == 0 {
            return word;
        }
    }
}

pub fn render_text(tokens: &[u32]) -> String {
    tokens
        .iter()
        .map(|&t| token_word(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Turns token sequences into records with exact statistics for positions
/// `order+1 ..= len`. Sample ids are `syn-00000`, `syn-00001`, ... in input
/// order.
pub fn emit_records<T: Scalar>(
    lm: &ToyLm,
    texts: &[Vec<u32>],
    labels: &[Option<Label>],
) -> Result<Corpus<T>, SynthError> {
    assert_eq!(texts.len(), labels.len(), "one label per text");
    let mut records = Vec::with_capacity(texts.len());
    for (index, (seq, label)) in texts.iter().zip(labels).enumerate() {
        if seq.len() <= lm.order {
            return Err(SynthError::TextTooShort {
                index,
                len: seq.len(),
                order: lm.order,
            });
        }
        let tokens = seq
            .windows(lm.order + 1)
            .map(|w| lm.token_stats(&w[..lm.order], w[lm.order]))
            .collect();
        records.push(SampleRecord {
            sample_id: format!("syn-{index:05}"),
            label: *label,
            text: Some(render_text(seq)),
            tokens,
            neighbor_losses: None,
        });
    }
    let mut corpus = Corpus::new(records);
    corpus
        .metadata
        .insert("generator".into(), "markov-toy".into());
    corpus.metadata.insert("order".into(), lm.order.to_string());
    corpus
        .metadata
        .insert("vocab_size".into(), lm.vocab_size.to_string());
    corpus
        .metadata
        .insert("first_scored_position".into(), (lm.order + 1).to_string());
    corpus
        .metadata
        .insert("zlib_level".into(), DEFAULT_ZLIB_LEVEL.to_string());
    Ok(corpus)
}

/// Resamples a `mask_frac` share of the predicted positions from the data
/// chain, conditioning on the already-perturbed prefix.
fn perturb<R: Rng>(
    source: &mut MarkovSource,
    seq: &[u32],
    order: usize,
    mask_frac: f64,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = seq.to_vec();
    for t in order..out.len() {
        if rng.random::<f64>() < mask_frac {
            let ctx = out[t - order..t].to_vec();
            out[t] = source.next_token(&ctx, rng);
        }
    }
    out
}

/// Builds the whole labeled benchmark corpus, members first.
pub fn synthesize<T: Scalar>(config: &SynthConfig) -> Result<Corpus<T>, SynthError> {
    let SynthBenchmark {
        lm,
        mut source,
        members,
        nonmembers,
    } = build_toy_lm(config)?;
    let labels: Vec<Option<Label>> = std::iter::repeat_n(Some(Label::Member), members.len())
        .chain(std::iter::repeat_n(
            Some(Label::Nonmember),
            nonmembers.len(),
        ))
        .collect();
    let texts: Vec<Vec<u32>> = members.into_iter().chain(nonmembers).collect();
    let mut corpus: Corpus<T> = emit_records(&lm, &texts, &labels)?;

    if config.n_neighbors > 0 {
        for (i, (record, seq)) in corpus.records.iter_mut().zip(&texts).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(config.seed, 0x6e65_6967_6862_6f72));
            rng.set_stream(i as u64);
            let losses = (0..config.n_neighbors)
                .map(|_| {
                    let nb = perturb(
                        &mut source,
                        seq,
                        lm.order,
                        config.neighbor_mask_frac,
                        &mut rng,
                    );
                    T::of(lm.mean_loss(&nb))
                })
                .collect();
            record.neighbor_losses = Some(losses);
        }
    }

    let meta: BTreeMap<String, String> = [
        ("seed", config.seed.to_string()),
        ("n_member", config.n_member.to_string()),
        ("n_nonmember", config.n_nonmember.to_string()),
        ("seq_len", config.seq_len.to_string()),
        ("train_passes", config.train_passes.to_string()),
        ("dirichlet_alpha", config.dirichlet_alpha.to_string()),
        ("n_neighbors", config.n_neighbors.to_string()),
        ("neighbor_mask_frac", config.neighbor_mask_frac.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    corpus.metadata.extend(meta);
    Ok(corpus)
}
