//! Stable virtual tool-API gateway and benchmark metric engines.
//!
//! Calls flow through a [`gateway::Gateway`] that serves each request from a
//! persistent [`cache::Cache`], a real [`upstream::Upstream`], or an LLM
//! [`simulator::Simulator`], in that order. The [`evaluation`] module scores
//! agent answers with the solvable pass and win rates.

pub mod agent;
pub mod cache;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod docs;
pub mod evaluation;
pub mod gateway;
pub mod llm;
pub mod model;
pub mod prompts;
pub mod simulator;
pub mod upstream;
