//! Consultation value assessment for personalized product search.
//!
//! [`corpus`] holds the data model and JSONL formats, [`index`] and
//! [`linkage`] build the term index and consultation-action links, and
//! [`value`] scores and filters consultation histories per search.
//! [`datagen`] plants synthetic journeys with known ground truth and
//! [`eval`] ranks candidates and computes HR/NDCG/MRR.

pub mod corpus;
pub mod datagen;
pub mod eval;
pub mod index;
pub mod linkage;
pub mod value;
