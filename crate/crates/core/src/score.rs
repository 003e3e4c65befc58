//! Morphological-alignment scoring.
//!
//! Per item, boundaries are compared as sets of internal byte offsets and
//! subwords are matched by span equality. Aggregation is a fold over
//! [`Accumulator`], which merges associatively, so cells can be scored in
//! parallel chunks and combined in order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gold::GoldItem;
use crate::stats::{self, SpearmanResult, StatsError};
use crate::tokenize::TokenizationResult;

/// Bucket for items lacking the feature a breakdown is keyed on.
pub const ABSENT: &str = "_absent_";

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("prediction is for `{pred}` but gold word is `{gold}`")]
    WordMismatch { gold: String, pred: String },
    #[error("no scoreable items")]
    NoScoreableItems,
    #[error("unknown breakdown key `{0}` (expected `upos` or `feat:NAME`)")]
    UnknownBreakdownKey(String),
    #[error("unknown context mode `{0}`")]
    UnknownContext(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    LeadingSpace,
    Bare,
}

impl Context {
    pub fn leading_space(self) -> bool {
        self == Context::LeadingSpace
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Context::LeadingSpace => "leading_space",
            Context::Bare => "bare",
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    #[default]
    LeadingSpace,
    Bare,
    Both,
}

impl ContextMode {
    pub fn contexts(self) -> Vec<Context> {
        match self {
            ContextMode::LeadingSpace => vec![Context::LeadingSpace],
            ContextMode::Bare => vec![Context::Bare],
            ContextMode::Both => vec![Context::LeadingSpace, Context::Bare],
        }
    }
}

impl FromStr for ContextMode {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leading_space" => Ok(ContextMode::LeadingSpace),
            "bare" => Ok(ContextMode::Bare),
            "both" => Ok(ContextMode::Both),
            other => Err(ScoreError::UnknownContext(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BreakdownKey {
    Upos,
    Feat(String),
}

impl BreakdownKey {
    pub fn value_of<'a>(&self, item: &'a ScoredItem) -> &'a str {
        match self {
            BreakdownKey::Upos => &item.upos,
            BreakdownKey::Feat(name) => item.feats.get(name).map_or(ABSENT, String::as_str),
        }
    }
}

impl fmt::Display for BreakdownKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BreakdownKey::Upos => f.write_str("upos"),
            BreakdownKey::Feat(name) => write!(f, "feat:{name}"),
        }
    }
}

impl FromStr for BreakdownKey {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "upos" => Ok(BreakdownKey::Upos),
            Some(("feat", name)) if !name.is_empty() => Ok(BreakdownKey::Feat(name.to_string())),
            _ => Err(ScoreError::UnknownBreakdownKey(s.to_string())),
        }
    }
}

impl TryFrom<String> for BreakdownKey {
    type Error = ScoreError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BreakdownKey> for String {
    fn from(k: BreakdownKey) -> Self {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub frequency_scaling: bool,
    pub include_single_token: bool,
    pub breakdown_keys: Vec<BreakdownKey>,
    pub context_mode: ContextMode,
    /// Collapse occurrences to one item per (word, segmentation).
    pub dedupe_types: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            frequency_scaling: true,
            include_single_token: false,
            breakdown_keys: Vec::new(),
            context_mode: ContextMode::LeadingSpace,
            dedupe_types: true,
        }
    }
}

/// The four (frequency_scaling, include_single_token) conditions.
pub const CONDITION_GRID: [(bool, bool); 4] = [(true, true), (true, false), (false, true), (false, false)];

impl EvalConfig {
    pub fn with_condition(&self, frequency_scaling: bool, include_single_token: bool) -> Self {
        EvalConfig {
            frequency_scaling,
            include_single_token,
            ..self.clone()
        }
    }

    /// `True_False` style label: frequency scaling, then single-token inclusion.
    pub fn condition_label(&self) -> String {
        condition_label(self.frequency_scaling, self.include_single_token)
    }
}

pub fn condition_label(frequency_scaling: bool, include_single_token: bool) -> String {
    let b = |v: bool| if v { "True" } else { "False" };
    format!("{}_{}", b(frequency_scaling), b(include_single_token))
}

/// Raw counts for one (gold, prediction) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemScore {
    pub boundary_tp: u32,
    pub boundary_fp: u32,
    pub boundary_fn: u32,
    pub subword_tp: u32,
    pub subword_fp: u32,
    pub subword_fn: u32,
    pub n_tokens: u32,
    pub n_morphemes: u32,
    /// Wordform frequency; used as the weight under frequency scaling.
    pub weight: u64,
    pub single_token: bool,
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Number of per-item ratios tracked for macro averages.
const N_RATIOS: usize = 5;

/// Per-item ratios in the order boundary P, boundary R, subword P, subword R,
/// subword F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemRatios {
    pub boundary_precision: f64,
    pub boundary_recall: f64,
    pub subword_precision: f64,
    pub subword_recall: f64,
    pub subword_f1: f64,
}

impl ItemRatios {
    const PERFECT: ItemRatios = ItemRatios {
        boundary_precision: 1.0,
        boundary_recall: 1.0,
        subword_precision: 1.0,
        subword_recall: 1.0,
        subword_f1: 1.0,
    };

    fn as_array(&self) -> [f64; N_RATIOS] {
        [
            self.boundary_precision,
            self.boundary_recall,
            self.subword_precision,
            self.subword_recall,
            self.subword_f1,
        ]
    }
}

impl ItemScore {
    /// Ratios of a multi-token item. Single-token items have no predicted
    /// boundary, so their boundary precision is 0 here; aggregation handles
    /// them by policy before this is consulted.
    pub fn ratios(&self) -> ItemRatios {
        let sp = ratio(self.subword_tp, self.n_tokens);
        let sr = ratio(self.subword_tp, self.n_morphemes);
        ItemRatios {
            boundary_precision: ratio(self.boundary_tp, self.boundary_tp + self.boundary_fp),
            boundary_recall: ratio(self.boundary_tp, self.boundary_tp + self.boundary_fn),
            subword_precision: sp,
            subword_recall: sr,
            subword_f1: f1(sp, sr),
        }
    }

    /// Ratios as counted under a scoring policy: single-token items score
    /// 1.0 everywhere when included.
    pub fn policy_ratios(&self, include_single_token: bool) -> Option<ItemRatios> {
        match (self.single_token, include_single_token) {
            (true, false) => None,
            (true, true) => Some(ItemRatios::PERFECT),
            (false, _) => Some(self.ratios()),
        }
    }
}

pub fn score_item(gold: &GoldItem, pred: &TokenizationResult) -> Result<ItemScore, ScoreError> {
    if gold.word != pred.word {
        return Err(ScoreError::WordMismatch {
            gold: gold.word.clone(),
            pred: pred.word.clone(),
        });
    }
    let gold_bounds: HashSet<usize> = gold.boundary_bytes().into_iter().collect();
    let pred_bounds: HashSet<usize> = pred.boundary_offsets_bytes().into_iter().collect();
    let boundary_tp = gold_bounds.intersection(&pred_bounds).count() as u32;

    let gold_spans: HashSet<(usize, usize)> = gold.morpheme_byte_spans().into_iter().collect();
    let subword_tp = pred.spans.iter().filter(|s| gold_spans.contains(s)).count() as u32;

    let n_tokens = pred.spans.len() as u32;
    let n_morphemes = gold_spans.len() as u32;
    Ok(ItemScore {
        boundary_tp,
        boundary_fp: pred_bounds.len() as u32 - boundary_tp,
        boundary_fn: gold_bounds.len() as u32 - boundary_tp,
        subword_tp,
        subword_fp: n_tokens - subword_tp,
        subword_fn: n_morphemes - subword_tp,
        n_tokens,
        n_morphemes,
        weight: gold.frequency,
        single_token: n_tokens == 1,
    })
}

/// An item score with the annotations breakdowns are keyed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub key: String,
    pub word: String,
    pub upos: String,
    pub feats: BTreeMap<String, String>,
    pub tokens: Vec<String>,
    pub score: ItemScore,
}

impl ScoredItem {
    pub fn new(gold: &GoldItem, pred: &TokenizationResult) -> Result<Self, ScoreError> {
        Ok(ScoredItem {
            key: gold.key(),
            word: gold.word.clone(),
            upos: gold.upos.clone(),
            feats: gold.feats.clone(),
            tokens: pred.tokens.clone(),
            score: score_item(gold, pred)?,
        })
    }
}

/// Keeps the first occurrence of each (word, segmentation) pair. The
/// frequency field already carries the occurrence count.
pub fn dedupe_types(items: &[GoldItem]) -> Vec<GoldItem> {
    let mut seen = HashSet::new();
    items
        .iter()
        .filter(|i| seen.insert((i.word.as_str(), i.morphemes.clone())))
        .cloned()
        .collect()
}

/// Summed counts, weighted ratio sums and squared sums of one cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    pub n_scored: u64,
    pub n_skipped: u64,
    pub subword_tp: u64,
    pub subword_fp: u64,
    pub subword_fn: u64,
    pub boundary_tp: u64,
    pub boundary_fp: u64,
    pub boundary_fn: u64,
    pub weight_sum: f64,
    sums: [f64; N_RATIOS],
    sq_sums: [f64; N_RATIOS],
}

impl Accumulator {
    pub fn add(&mut self, score: &ItemScore, frequency_scaling: bool, include_single_token: bool) {
        let Some(ratios) = score.policy_ratios(include_single_token) else {
            self.n_skipped += 1;
            return;
        };
        self.n_scored += 1;
        let mult = if frequency_scaling { score.weight } else { 1 };
        let w = mult as f64;
        if score.single_token {
            // full credit: every gold morpheme and boundary counted as found
            self.subword_tp += mult * score.n_morphemes as u64;
            self.boundary_tp += mult * (score.n_morphemes as u64 - 1);
        } else {
            self.subword_tp += mult * score.subword_tp as u64;
            self.subword_fp += mult * score.subword_fp as u64;
            self.subword_fn += mult * score.subword_fn as u64;
            self.boundary_tp += mult * score.boundary_tp as u64;
            self.boundary_fp += mult * score.boundary_fp as u64;
            self.boundary_fn += mult * score.boundary_fn as u64;
        }
        self.weight_sum += w;
        for (k, r) in ratios.as_array().into_iter().enumerate() {
            self.sums[k] += w * r;
            self.sq_sums[k] += w * r * r;
        }
    }

    pub fn merge(mut self, other: &Accumulator) -> Accumulator {
        self.n_scored += other.n_scored;
        self.n_skipped += other.n_skipped;
        self.subword_tp += other.subword_tp;
        self.subword_fp += other.subword_fp;
        self.subword_fn += other.subword_fn;
        self.boundary_tp += other.boundary_tp;
        self.boundary_fp += other.boundary_fp;
        self.boundary_fn += other.boundary_fn;
        self.weight_sum += other.weight_sum;
        for k in 0..N_RATIOS {
            self.sums[k] += other.sums[k];
            self.sq_sums[k] += other.sq_sums[k];
        }
        self
    }

    pub fn finish(&self, frequency_scaling: bool, include_single_token: bool) -> Result<MetricsBundle, ScoreError> {
        if self.n_scored == 0 {
            return Err(ScoreError::NoScoreableItems);
        }
        let mean = |k: usize| self.sums[k] / self.weight_sum;
        let std = |k: usize| {
            let m = mean(k);
            (self.sq_sums[k] / self.weight_sum - m * m).max(0.0).sqrt()
        };
        let frac = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let p_micro = frac(self.subword_tp, self.subword_tp + self.subword_fp);
        let r_micro = frac(self.subword_tp, self.subword_tp + self.subword_fn);
        Ok(MetricsBundle {
            boundary_precision_macro: mean(0),
            boundary_recall_macro: mean(1),
            subword_precision_micro: p_micro,
            subword_precision_macro: mean(2),
            subword_recall_micro: r_micro,
            subword_recall_macro: mean(3),
            subword_f1_micro: f1(p_micro, r_micro),
            subword_f1_macro: mean(4),
            n_items_scored: self.n_scored,
            n_items_skipped: self.n_skipped,
            macro_std: MacroStd {
                boundary_precision: std(0),
                boundary_recall: std(1),
                subword_precision: std(2),
                subword_recall: std(3),
                subword_f1: std(4),
            },
            counts: MicroCounts {
                subword_tp: self.subword_tp,
                subword_fp: self.subword_fp,
                subword_fn: self.subword_fn,
                boundary_tp: self.boundary_tp,
                boundary_fp: self.boundary_fp,
                boundary_fn: self.boundary_fn,
            },
            frequency_scaling,
            include_single_token,
        })
    }
}

/// Weighted per-item standard deviation of each macro metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroStd {
    pub boundary_precision: f64,
    pub boundary_recall: f64,
    pub subword_precision: f64,
    pub subword_recall: f64,
    pub subword_f1: f64,
}

/// Summed (frequency-multiplied, when scaling) counts behind the micro metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroCounts {
    pub subword_tp: u64,
    pub subword_fp: u64,
    pub subword_fn: u64,
    pub boundary_tp: u64,
    pub boundary_fp: u64,
    pub boundary_fn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub boundary_precision_macro: f64,
    pub boundary_recall_macro: f64,
    pub subword_precision_micro: f64,
    pub subword_precision_macro: f64,
    pub subword_recall_micro: f64,
    pub subword_recall_macro: f64,
    pub subword_f1_micro: f64,
    pub subword_f1_macro: f64,
    pub n_items_scored: u64,
    pub n_items_skipped: u64,
    pub macro_std: MacroStd,
    pub counts: MicroCounts,
    pub frequency_scaling: bool,
    pub include_single_token: bool,
}

impl MetricsBundle {
    /// The eight reported metrics in a fixed order, paired with their names.
    pub fn metrics(&self) -> [(&'static str, f64); 8] {
        [
            ("boundary_precision_macro", self.boundary_precision_macro),
            ("boundary_recall_macro", self.boundary_recall_macro),
            ("subword_precision_micro", self.subword_precision_micro),
            ("subword_precision_macro", self.subword_precision_macro),
            ("subword_recall_micro", self.subword_recall_micro),
            ("subword_recall_macro", self.subword_recall_macro),
            ("subword_f1_micro", self.subword_f1_micro),
            ("subword_f1_macro", self.subword_f1_macro),
        ]
    }
}

pub fn accumulate<'a, I>(scores: I, config: &EvalConfig) -> Accumulator
where
    I: IntoIterator<Item = &'a ItemScore>,
{
    let mut acc = Accumulator::default();
    for s in scores {
        acc.add(s, config.frequency_scaling, config.include_single_token);
    }
    acc
}

pub fn aggregate(scores: &[ItemScore], config: &EvalConfig) -> Result<MetricsBundle, ScoreError> {
    accumulate(scores, config).finish(config.frequency_scaling, config.include_single_token)
}

/// Folds fixed-size chunks in parallel and merges the partial sums in chunk
/// order, so the result does not depend on the thread count.
pub fn aggregate_parallel(
    scores: &[ItemScore],
    config: &EvalConfig,
    chunk_size: usize,
) -> Result<MetricsBundle, ScoreError> {
    let partials: Vec<Accumulator> = scores
        .par_chunks(chunk_size.max(1))
        .map(|chunk| accumulate(chunk, config))
        .collect();
    partials
        .iter()
        .fold(Accumulator::default(), |acc, p| acc.merge(p))
        .finish(config.frequency_scaling, config.include_single_token)
}

pub type Breakdown = BTreeMap<String, BTreeMap<String, MetricsBundle>>;

/// Aggregates each breakdown cell separately. Cells with nothing left to
/// score under the single-token policy are omitted.
pub fn breakdown(items: &[ScoredItem], config: &EvalConfig) -> Breakdown {
    let mut out = Breakdown::new();
    for key in &config.breakdown_keys {
        let mut cells: BTreeMap<&str, Accumulator> = BTreeMap::new();
        for item in items {
            cells.entry(key.value_of(item)).or_default().add(
                &item.score,
                config.frequency_scaling,
                config.include_single_token,
            );
        }
        let bundles = cells
            .into_iter()
            .filter_map(|(value, acc)| {
                acc.finish(config.frequency_scaling, config.include_single_token)
                    .ok()
                    .map(|b| (value.to_string(), b))
            })
            .collect();
        out.insert(key.to_string(), bundles);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    /// Mean tokens per item.
    pub fertility: f64,
    /// Total tokens over all items.
    pub corpus_token_count: u64,
    pub n_items: usize,
}

pub fn compression_metrics(scores: &[ItemScore]) -> Result<Compression, ScoreError> {
    if scores.is_empty() {
        return Err(ScoreError::NoScoreableItems);
    }
    let total: u64 = scores.iter().map(|s| s.n_tokens as u64).sum();
    Ok(Compression {
        fertility: total as f64 / scores.len() as f64,
        corpus_token_count: total,
        n_items: scores.len(),
    })
}

/// Which per-item ratio stands for "alignment" in frequency correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMetric {
    #[default]
    BoundaryPrecision,
    BoundaryRecall,
    SubwordF1,
}

impl AlignmentMetric {
    fn pick(self, r: &ItemRatios) -> f64 {
        match self {
            AlignmentMetric::BoundaryPrecision => r.boundary_precision,
            AlignmentMetric::BoundaryRecall => r.boundary_recall,
            AlignmentMetric::SubwordF1 => r.subword_f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCorrelation {
    pub metric: AlignmentMetric,
    /// Frequency vs per-item alignment, over items kept by the single-token policy.
    pub frequency_alignment: SpearmanResult,
    /// Frequency vs token count, over all items.
    pub frequency_tokens: SpearmanResult,
}

pub fn frequency_alignment_correlation(
    scores: &[ItemScore],
    include_single_token: bool,
    metric: AlignmentMetric,
) -> Result<FrequencyCorrelation, ScoreError> {
    let (freq, align): (Vec<f64>, Vec<f64>) = scores
        .iter()
        .filter_map(|s| {
            s.policy_ratios(include_single_token)
                .map(|r| (s.weight as f64, metric.pick(&r)))
        })
        .unzip();
    let frequency_alignment = stats::spearman(&freq, &align)?;
    let all_freq: Vec<f64> = scores.iter().map(|s| s.weight as f64).collect();
    let tokens: Vec<f64> = scores.iter().map(|s| s.n_tokens as f64).collect();
    let frequency_tokens = stats::spearman(&all_freq, &tokens)?;
    Ok(FrequencyCorrelation {
        metric,
        frequency_alignment,
        frequency_tokens,
    })
}
