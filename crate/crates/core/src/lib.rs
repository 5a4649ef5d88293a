//! Intent detection for chat-based tutoring conversations.
//!
//! Every student message is classified as [`Intent::Continue`] (stay in the
//! current lesson) or [`Intent::ChangeTopic`] (the student wants to leave).
//! Classification is pluggable: a local TF-IDF + random forest model, a
//! remote chat model prompted to emit an `<exit>` sentinel, or a remote chat
//! model offered a `change_topic` tool. The [`dialogue`] module routes turns
//! through a phased lesson, and [`bench`] compares backends on accuracy and
//! per-message latency.

pub mod bench;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dialogue;
pub mod forest;
pub mod llm;
pub mod seed;
pub mod service;
pub mod textfeat;

pub use classifier::{ChatMessage, ChatRole, IntentClassifier, IntentPrediction};
pub use corpus::{Dataset, Intent, LabeledMessage};
