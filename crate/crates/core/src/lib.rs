//! Budget-constrained multi-round resource auctions for mobile device
//! clouds: winner determination, single- and multi-round mechanisms,
//! baselines, seeded experiments and a command-line front end.

pub mod cli;
pub mod error;
pub mod mechanisms;
pub mod model;
pub mod scenario;
pub mod simlab;
pub mod wdp;

pub use error::{Error, Result};
pub use mechanisms::{
    adjust_bid, replay, run_double_auction, run_mafl, run_repeated_srmra, run_srmra, AdjustmentPolicy, AuctionResult,
    MechanismKind, ReplayFixture,
};
pub use model::{
    Assignment, AuctionLedger, Bid, Buyer, BuyerId, Money, ResourceVector, RoundOutcome, Seller, SellerId,
};
pub use scenario::{AdjustScope, MechanismConfig, Pricing, Scenario, SolverKind, TieRule};
pub use simlab::{compare, evaluate, generate_scenario, ComparisonReport, GeneratorParams, MechanismSpec, Metrics};
pub use wdp::{check_feasible, solve_exact, solve_greedy, WdpInstance, WdpSolution};
