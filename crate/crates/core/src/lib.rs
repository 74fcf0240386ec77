//! Closed-loop reward-program search for a balancing walker.
//!
//! Reward programs are generated by a language-model backend, trained with
//! teacher-regularized PPO in a fast randomized simulator, evaluated through
//! a signal homomorphism in slower deployment twins, gated on safety limits,
//! and summarized into feedback for the next generation round.

pub mod dsl;
pub mod env;
pub mod eval;
pub mod llm;
pub mod orchestrator;
pub mod policy;
pub mod seed;
