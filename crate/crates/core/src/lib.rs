pub mod corpus;
pub mod lexicon;
pub mod similarity;
pub mod network;
pub mod triggers;
pub mod analytics;
pub mod simulator;
pub mod report;
pub mod cli;
