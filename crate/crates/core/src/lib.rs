//! Nodal electricity market toolkit: clearing, offer mitigation, and
//! strategic bidding on DC networks.
//!
//! The crate is organized around one data flow:
//!
//! 1. [`network`] describes the physical system — buses, branches,
//!    generating units with block offer curves, and demand — loaded from
//!    JSON scenario files.
//! 2. [`clearing`] dispatches the system at least offered cost under DC
//!    power flow and reports locational marginal prices together with the
//!    full sensitivity set of the dispatch problem.
//! 3. [`mitigation`] screens submitted offers against reference levels
//!    (conduct on offer prices, impact on resulting prices) and re-clears
//!    with mitigated offers when both screens trip.
//! 4. [`bidding`] computes a profit-maximizing offer for one strategic
//!    owner by collapsing the two-level problem (owner chooses offers, the
//!    operator clears) into a single mixed-integer program, for several
//!    assumptions about how much of the mitigation pipeline the owner
//!    anticipates.
//! 5. [`oracle`] cross-checks the optimizer by brute force over a price
//!    grid and evaluates symmetric multi-owner play.
//! 6. [`report`] renders results as CSV tables and small self-contained
//!    SVG charts; [`verify`] re-derives the bundled golden outputs.
//!
//! The numerical foundation is an exact-arithmetic-free but carefully
//! toleranced [`lp`] simplex engine and an SOS1 branch-and-bound layer in
//! [`milp`]; both report dual information and are deterministic across
//! runs on the same input.

pub mod bidding;
pub mod clearing;
pub mod error;
pub mod lp;
pub mod milp;
pub mod mitigation;
pub mod network;
pub mod oracle;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
