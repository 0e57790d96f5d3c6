//! Security-compliance engine for RAN network-function configurations.

pub mod agents;
pub mod config_model;
pub mod digest;
pub mod enforcement;
pub mod eval;
pub mod events;
pub mod knowledge_base;
pub mod llm_provider;
pub mod par;
pub mod policy_hub;
pub mod text;
