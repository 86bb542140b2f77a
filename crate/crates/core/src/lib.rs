pub mod actor;
pub mod bench;
#[cfg(feature = "service")]
pub mod config;
pub mod exec;
pub mod kb;
pub mod llm;
pub mod pipeline;
pub mod plan;
pub mod planner;
#[cfg(feature = "service")]
pub mod service;
pub mod synth;
pub mod table;
