pub mod cli;
pub mod counting;
pub mod diophantine;
pub mod error;
pub mod feasibility;
pub mod pattern;
pub mod scheduler;
mod seeding;
pub mod signaling;
