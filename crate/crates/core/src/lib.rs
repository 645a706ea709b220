//! Maps of where highly-cited papers come from.
//!
//! The pipeline runs ingest → top slice → occurrence extraction → geocoding →
//! agglomeration → percentile classes → map emission → verification. Each stage
//! is a plain function over values so it can be driven step by step or end to end
//! through [`pipeline::run_pipeline`].

pub mod agglomerate;
pub mod classify;
pub mod config;
pub mod emit;
pub mod geocode;
pub mod ingest;
pub mod pipeline;
pub mod topslice;
pub mod verify;
