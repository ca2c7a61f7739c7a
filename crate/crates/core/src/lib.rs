//! Simulator and library for Gaussian-modulated coherent-state continuous
//! variable quantum key distribution with single-bit reverse reconciliation.
//!
//! The pipeline follows the protocol end to end:
//!
//! 1. Alice modulates Gaussian key elements; the lossy, noisy channel
//!    delivers Bob's measurements and the optimal Gaussian eavesdropper her
//!    correlated estimate ([`channel`], [`eve`]).
//! 2. Alice slices her element space into width-`w` regions, pairs regions
//!    at separation `delta_a`, assigns bits by pair side, and announces the
//!    pair of every pulse ([`pairing`]).
//! 3. Bob computes posteriors over the announced pair, decides each bit,
//!    discards bits with BER above the cut, and sorts the rest into groups
//!    of approximately identical BER and pair asymmetry ([`decoder`]).
//! 4. Per-group information accounting produces the practical key rate and
//!    its theoretical benchmark ([`pipeline`], [`keyrate`]).
//! 5. A full two-party session adds channel estimation, a normality screen,
//!    error-correction leakage accounting with digest verification, and
//!    privacy amplification over a recorded transcript ([`session`],
//!    [`transcript`]).
//! 6. Distance / excess-noise sweeps reproduce the rate-versus-distance
//!    curves and emit CSV, SVG, and run metadata ([`sweep`]).

pub mod channel;
pub mod decoder;
pub mod error;
pub mod eve;
pub mod keyrate;
pub mod numerics;
pub mod pairing;
pub mod pipeline;
pub mod session;
pub mod svg;
pub mod sweep;
pub mod transcript;

pub use channel::{ChannelParams, RawKeySample};
pub use decoder::{GroupId, GroupingPolicy, PosteriorMethod, SoftBit};
pub use error::{Error, Result};
pub use eve::EveParams;
pub use keyrate::{GroupSummary, KeyRateReport};
pub use numerics::{QuadratureSpec, RngStream};
pub use pairing::{PairLabel, PairingGrid};
pub use session::{SessionConfig, SessionResult};
pub use sweep::{SweepConfig, SweepMode};
