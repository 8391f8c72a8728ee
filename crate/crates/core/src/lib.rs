//! Diagnostics for machine-translation failures of large language models.
//!
//! The crate covers corpus loading and prompt rendering, a byte-level BPE
//! engine for token activation rates (TAR), output-noise detection,
//! typological distance features, BLEU/chrF++ scoring, reasoning-token
//! counting and the correlation statistics tying them together. The
//! `report` module turns these into CSV reports driven by a TOML config.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod reasoning;
pub mod report;
pub mod rng;
pub mod stats;
pub mod tar;
pub mod tokenize;
pub mod typology;

pub use corpus::{Corpus, CorpusFormat, Instance, LangCode, LanguagePair, PromptTemplate};
pub use error::{Error, Result};
pub use metrics::{Metric, ScoreTable};
pub use stats::{CorrelationResult, PairedSample};
pub use tar::{Tar, TarRecord};
pub use tokenize::{VocabModel, VocabOptions};
