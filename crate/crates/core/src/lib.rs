//! Simulation-guided beam search (SGBS), efficient active search (EAS) and
//! their alternation for step-by-step constructive combinatorial
//! optimization, with TSP, CVRP and FFSP adapters.

pub mod problem;
pub mod policy;
pub mod search;
pub mod eas;
pub mod runner;
