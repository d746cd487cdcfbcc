//! Metapopulation dynamics on Markovian landscapes.
//!
//! A discrete-time incidence-function metapopulation in which every habitat
//! patch carries a characteristic that evolves as a Markov chain. The crate
//! provides:
//!
//! * [`landscape`] — Markov-chain machinery for patch characteristics:
//!   finite chains with exact linear algebra, the Beta-jump survival chain
//!   on `[0,1]`, dual (time-reversed) kernels and mixing diagnostics.
//! * [`patch`] — species/landscape ingredients: survival and weight maps,
//!   colonisation functions, the exponential dispersal kernel and the
//!   spatial quadrature grid.
//! * [`sim`] — exact finite-n stochastic simulation with reproducible
//!   per-patch random streams.
//! * [`meanfield`] — the large-n occupancy recursion, the inner fixed
//!   point, the operator `H` and equilibrium computation.
//! * [`persistence`] — the threshold `r_S · r(M)`, the operator `A`,
//!   local-population lifespan and stochastic-ordering comparisons.

pub mod error;
pub mod landscape;
pub mod meanfield;
pub mod patch;
pub mod persistence;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use landscape::{
    BetaJumpParams, ChainDiagnosis, DualKernel, FiniteChain, Landscape, SampledChain, Theta,
};
pub use meanfield::{
    ConnectivityProfile, Equilibrium, LandscapeBasis, McSettings, MomentEstimate, OccupancyField,
    QPhiMethod,
};
pub use patch::{Colonisation, DispersalKernel, Grid, PatchTraits, SpatialDomain, ThetaMap};
pub use persistence::{ComparisonReport, Dominance, PersistenceReport, Verdict};
pub use sim::{MetapopState, OccupancySummary};
