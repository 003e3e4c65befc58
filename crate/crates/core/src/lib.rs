//! Gold morpheme segmentations from Universal Dependencies treebanks, and
//! scoring of how well subword tokenizers align with morpheme boundaries.
//!
//! The pipeline is: [`conllu`] reads treebanks, [`gold`] derives
//! prefix/stem/suffix segmentations from (wordform, lemma) pairs,
//! [`tokenize`] produces byte-span tokenizations, [`score`] compares the two
//! at boundary and subword level, and [`stats`] holds the rank-correlation
//! and regression helpers used by the analyses.

pub mod conllu;
pub mod gold;
pub mod score;
pub mod stats;
pub mod tokenize;

pub use conllu::{iterate_treebank, parse_conllu, ParseMode, Split, UdSentence, UdToken};
pub use gold::{build_dataset, propose_segmentation, GoldItem, LanguageDataset, MatchPolicy, Rejection};
pub use score::{aggregate, score_item, EvalConfig, ItemScore, MetricsBundle};
pub use tokenize::{TokenizationResult, TokenizerSpec};
