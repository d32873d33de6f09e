//! Sentiment classification on short texts with word-embedding features,
//! convolutional and recurrent classifiers, and transfer-learning
//! experiment drivers.

pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod models;
pub mod nncore;
pub mod synthetic;

pub use error::{Error, Result};
