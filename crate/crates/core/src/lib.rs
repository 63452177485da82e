//! Sign co-movement analysis of equity markets.
//!
//! Daily closes are reduced to up/down signs, pairs are scored by how often
//! they move together, and a seeded partial hierarchical clustering reveals
//! tightly bound groups ("atoms") and the looser groups they form
//! ("molecules").

pub mod atoms;
pub mod cmx;
pub mod comovement;
pub mod error;
pub mod ingest;
pub mod molecules;
pub mod phc;
pub mod synth;

pub use comovement::{CoMatrix, Sign, SignMatrix};
pub use error::{Error, ErrorClass, Result};
