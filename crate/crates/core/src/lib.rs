//! Ad hoc table retrieval and table matching.

pub mod corpus;
pub mod embeddings;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod kb;
pub mod lexical;
pub mod ltr;
pub mod semantic;
pub mod synth;
pub mod tablematch;
pub mod textindex;

pub use error::{Error, Result};
