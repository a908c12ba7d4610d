//! Token-level scores, sliding-window smoothing, bottom-k aggregation and
//! the per-sample membership scores.
//!
//! Every sample score is oriented so that a higher value is stronger
//! evidence that the sample was in the training set.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ScoreError};
use crate::records::SampleRecord;
use crate::scalar::{pivot_mean, Scalar};

pub const DEFAULT_K_PERCENT: f64 = 20.0;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_ZLIB_LEVEL: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Mean target log-probability (negated cross-entropy).
    Loss,
    /// Summed target log-probability over the zlib-compressed text length.
    Zlib,
    /// Mean neighbour loss minus the sample's own loss.
    Neighbor,
    /// Mean of the lowest k% target log-probabilities.
    #[serde(rename = "mink")]
    MinK,
    /// Mean of the lowest k% standardized log-probabilities `z_t`.
    #[serde(rename = "minkpp")]
    MinKpp,
    /// Mean of the lowest k% window-averaged top-1 gaps.
    #[serde(rename = "gapk")]
    GapK,
    /// Min-K%++ with window smoothing applied to `z_t`.
    #[serde(rename = "minkpp_smoothed")]
    MinKppSmoothed,
    /// Gap-K% without smoothing.
    #[serde(rename = "gapk_top1")]
    GapKUnsmoothedTop1,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Loss,
        Method::Zlib,
        Method::Neighbor,
        Method::MinK,
        Method::MinKpp,
        Method::GapK,
        Method::MinKppSmoothed,
        Method::GapKUnsmoothedTop1,
    ];

    /// The six methods compared in the main evaluation.
    pub const MAIN: [Method; 6] = [
        Method::Loss,
        Method::Zlib,
        Method::Neighbor,
        Method::MinK,
        Method::MinKpp,
        Method::GapK,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Loss => "loss",
            Method::Zlib => "zlib",
            Method::Neighbor => "neighbor",
            Method::MinK => "mink",
            Method::MinKpp => "minkpp",
            Method::GapK => "gapk",
            Method::MinKppSmoothed => "minkpp_smoothed",
            Method::GapKUnsmoothedTop1 => "gapk_top1",
        }
    }

    pub fn uses_k(self) -> bool {
        matches!(
            self,
            Method::MinK
                | Method::MinKpp
                | Method::GapK
                | Method::MinKppSmoothed
                | Method::GapKUnsmoothedTop1
        )
    }

    pub fn uses_window(self) -> bool {
        matches!(self, Method::GapK | Method::MinKppSmoothed)
    }

    /// Whether the method produces a token-level trace.
    pub fn has_trace(self) -> bool {
        matches!(
            self,
            Method::MinKpp | Method::GapK | Method::MinKppSmoothed | Method::GapKUnsmoothedTop1
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '%' | '_'))
            .map(|c| if c == '+' { 'p' } else { c })
            .collect();
        Ok(match norm.as_str() {
            "loss" => Method::Loss,
            "zlib" => Method::Zlib,
            "neighbor" | "neighbour" => Method::Neighbor,
            "mink" => Method::MinK,
            "minkpp" => Method::MinKpp,
            "gapk" => Method::GapK,
            "minkppsmoothed" => Method::MinKppSmoothed,
            "gapktop1" => Method::GapKUnsmoothedTop1,
            _ => return Err(ConfigError::UnknownMethod(s.to_string())),
        })
    }
}

/// Order in which token scores are fed to the sliding window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SmoothingOrder {
    #[default]
    Sequential,
    /// Scores are permuted with a seeded shuffle before smoothing. Inside
    /// [`score_sample`] the seed is first mixed with the sample id.
    Shuffled { seed: u64 },
}

/// Which score to compute and with what hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub k_percent: f64,
    pub window: usize,
    pub smoothing_order: SmoothingOrder,
    pub sigma_floor: f64,
    pub zlib_level: u32,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            k_percent: DEFAULT_K_PERCENT,
            window: DEFAULT_WINDOW,
            smoothing_order: SmoothingOrder::Sequential,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            zlib_level: DEFAULT_ZLIB_LEVEL,
        }
    }

    pub fn with_k(mut self, k_percent: f64) -> Self {
        self.k_percent = k_percent;
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_order(mut self, order: SmoothingOrder) -> Self {
        self.smoothing_order = order;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(ConfigError::KPercent(self.k_percent));
        }
        if self.window == 0 {
            return Err(ConfigError::Window);
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(ConfigError::SigmaFloor(self.sigma_floor));
        }
        if self.zlib_level > 9 {
            return Err(ConfigError::Other(format!(
                "zlib_level must be 0..=9, got {}",
                self.zlib_level
            )));
        }
        Ok(())
    }
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self::new(Method::GapK)
    }
}

/// Token-level view of one scored sample.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TokenScoreTrace<T> {
    pub sample_id: String,
    /// Per-position `g_t` or `z_t`, in original token order.
    pub raw_scores: Vec<T>,
    /// Window means, `max(1, L - w + 1)` of them.
    pub smoothed_scores: Vec<T>,
    /// Start indices (into `smoothed_scores`) of the bottom-k windows.
    pub selected_indices: Vec<usize>,
}

fn denom<T: Scalar>(std: T, sigma_floor: T) -> T {
    std.max(sigma_floor)
}

pub fn token_logprobs<T: Scalar>(sample: &SampleRecord<T>) -> Vec<T> {
    sample.tokens.iter().map(|t| t.target_logprob).collect()
}

/// `z_t = (target - mean) / max(std, floor)`.
pub fn z_scores<T: Scalar>(sample: &SampleRecord<T>, sigma_floor: T) -> Vec<T> {
    sample
        .tokens
        .iter()
        .map(|t| (t.target_logprob - t.mean_logprob) / denom(t.std_logprob, sigma_floor))
        .collect()
}

/// `g_t = (target - top1) / max(std, floor)`; never positive.
pub fn gap_scores<T: Scalar>(sample: &SampleRecord<T>, sigma_floor: T) -> Vec<T> {
    sample
        .tokens
        .iter()
        .map(|t| (t.target_logprob - t.top1_logprob) / denom(t.std_logprob, sigma_floor))
        .collect()
}

/// `delta_t = (top1 - mean) / max(std, floor)`, so that `g_t = z_t - delta_t`.
pub fn delta_scores<T: Scalar>(sample: &SampleRecord<T>, sigma_floor: T) -> Vec<T> {
    sample
        .tokens
        .iter()
        .map(|t| (t.top1_logprob - t.mean_logprob) / denom(t.std_logprob, sigma_floor))
        .collect()
}

/// Sliding-window means of `scores`.
///
/// Output position `t` averages `scores[t..t + window]`. A window longer than
/// the input collapses to one full-sequence mean. In shuffled mode the scores
/// are permuted with `shuffle_permutation(seed, len)` first.
pub fn smooth<T: Scalar>(scores: &[T], window: usize, order: SmoothingOrder) -> Vec<T> {
    match order {
        SmoothingOrder::Sequential => smooth_sequential(scores, window),
        SmoothingOrder::Shuffled { seed } => {
            smooth_permuted(scores, window, &shuffle_permutation(seed, scores.len()))
        }
    }
}

/// Smooths `scores` after reordering them as `scores[permutation[i]]`.
pub fn smooth_permuted<T: Scalar>(scores: &[T], window: usize, permutation: &[usize]) -> Vec<T> {
    assert_eq!(
        permutation.len(),
        scores.len(),
        "permutation length must match score length"
    );
    let permuted: Vec<T> = permutation.iter().map(|&i| scores[i]).collect();
    smooth_sequential(&permuted, window)
}

fn smooth_sequential<T: Scalar>(scores: &[T], window: usize) -> Vec<T> {
    assert!(window >= 1, "window must be at least 1");
    if scores.is_empty() {
        return Vec::new();
    }
    if window == 1 {
        return scores.to_vec();
    }
    if window >= scores.len() {
        return vec![pivot_mean(scores.iter().copied()).unwrap()];
    }
    scores
        .windows(window)
        .map(|w| pivot_mean(w.iter().copied()).unwrap())
        .collect()
}

/// Seeded Fisher-Yates permutation of `0..len`.
pub fn shuffle_permutation(seed: u64, len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    perm
}

/// Per-sample shuffle seed derived from a corpus-level seed and the sample id
/// (64-bit FNV-1a of the id, mixed with the seed). Stable across platforms
/// and releases.
pub fn sample_seed(corpus_seed: u64, sample_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in sample_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer over the combination
    let mut z = h ^ corpus_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Number of values kept by bottom-k selection: `max(1, floor(k/100 * len))`.
pub fn selection_count(len: usize, k_percent: f64) -> usize {
    // k * len is exact for integral k; the epsilon absorbs the division.
    let m = ((k_percent * len as f64) / 100.0 + 1e-9).floor() as usize;
    m.clamp(1, len.max(1))
}

/// Mean of the `selection_count` smallest scores and their indices (sorted
/// ascending). Ties go to the lower index. Panics on an empty input.
pub fn bottom_k_mean<T: Scalar>(scores: &[T], k_percent: f64) -> (T, Vec<usize>) {
    assert!(!scores.is_empty(), "bottom_k_mean needs at least one score");
    let m = selection_count(scores.len(), k_percent);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected = order[..m].to_vec();
    selected.sort_unstable();
    let mean = pivot_mean(selected.iter().map(|&i| scores[i])).unwrap();
    (mean, selected)
}

/// Byte length of `text` after zlib compression at `level`.
pub fn compressed_len(text: &str, level: u32) -> usize {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(level));
    enc.write_all(text.as_bytes())
        .expect("writing into a Vec cannot fail");
    enc.finish().expect("writing into a Vec cannot fail").len()
}

/// Computes the membership score of one sample.
///
/// Shuffled smoothing uses a permutation seeded by
/// `sample_seed(seed, sample_id)`.
pub fn score_sample<T: Scalar>(
    sample: &SampleRecord<T>,
    config: &MethodConfig,
) -> Result<(T, TokenScoreTrace<T>), ScoreError> {
    score_sample_with(sample, config, |id, len| match config.smoothing_order {
        SmoothingOrder::Sequential => (0..len).collect(),
        SmoothingOrder::Shuffled { seed } => shuffle_permutation(sample_seed(seed, id), len),
    })
}

/// Like [`score_sample`], but in shuffled mode the token permutation comes
/// from `permuter(sample_id, len)`. The permuter is ignored for sequential
/// smoothing.
pub fn score_sample_with<T, P>(
    sample: &SampleRecord<T>,
    config: &MethodConfig,
    permuter: P,
) -> Result<(T, TokenScoreTrace<T>), ScoreError>
where
    T: Scalar,
    P: Fn(&str, usize) -> Vec<usize>,
{
    let floor = T::of(config.sigma_floor);
    let mut trace = TokenScoreTrace {
        sample_id: sample.sample_id.clone(),
        ..Default::default()
    };
    let missing = |field| ScoreError::MissingInput {
        sample_id: sample.sample_id.clone(),
        field,
        method: config.method.as_str(),
    };

    let score = match config.method {
        Method::Loss => pivot_mean(sample.tokens.iter().map(|t| t.target_logprob)).unwrap(),
        Method::Zlib => {
            let text = sample.text.as_deref().ok_or_else(|| missing("text"))?;
            let total: T = sample.tokens.iter().map(|t| t.target_logprob).sum();
            total / T::of_usize(compressed_len(text, config.zlib_level))
        }
        Method::Neighbor => {
            let losses = sample
                .neighbor_losses
                .as_deref()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| missing("neighbor_losses"))?;
            let own = pivot_mean(sample.tokens.iter().map(|t| t.target_logprob)).unwrap();
            let neighbours = pivot_mean(losses.iter().copied()).unwrap();
            own + neighbours
        }
        Method::MinK => bottom_k_mean(&token_logprobs(sample), config.k_percent).0,
        Method::MinKpp | Method::GapKUnsmoothedTop1 => {
            let raw = if config.method == Method::MinKpp {
                z_scores(sample, floor)
            } else {
                gap_scores(sample, floor)
            };
            let (score, selected) = bottom_k_mean(&raw, config.k_percent);
            trace.smoothed_scores = raw.clone();
            trace.raw_scores = raw;
            trace.selected_indices = selected;
            score
        }
        Method::GapK | Method::MinKppSmoothed => {
            let raw = if config.method == Method::GapK {
                gap_scores(sample, floor)
            } else {
                z_scores(sample, floor)
            };
            let smoothed = match config.smoothing_order {
                SmoothingOrder::Sequential => smooth_sequential(&raw, config.window),
                SmoothingOrder::Shuffled { .. } => {
                    smooth_permuted(&raw, config.window, &permuter(&sample.sample_id, raw.len()))
                }
            };
            let (score, selected) = bottom_k_mean(&smoothed, config.k_percent);
            trace.raw_scores = raw;
            trace.smoothed_scores = smoothed;
            trace.selected_indices = selected;
            score
        }
    };
    Ok((score, trace))
}
