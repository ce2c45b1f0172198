//! Culturally-aware image captioning.
//!
//! A baseline caption is turned into one that names the cultural elements an
//! image shows. The chain: extract category words from the caption, ask one
//! curated VQA question per detected category, and have a chat model rewrite
//! the caption from the answers. The crate also carries the question curation
//! tools, the caption metrics and the human-evaluation survey files.

pub mod backends;
pub mod captioning;
pub mod extraction;
pub mod metrics;
pub mod pipeline;
pub mod question_bank;
pub mod seed;
pub mod survey;
