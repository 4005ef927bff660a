pub mod cli;
pub mod controlgen;
pub mod corpus;
pub mod freqprior;
pub mod measures;
pub mod report;
pub mod scorer;
pub mod stats;
