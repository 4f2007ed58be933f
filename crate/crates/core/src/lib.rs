//! Numerical laboratory for pseudo-differential operators with compactly
//! supported spreading functions.
//!
//! * [`signal`]: sampled signals, grids, continuous-normalised transforms.
//! * [`synth`]: bandlimited (superoscillatory) fits on an interval.
//! * [`operator`]: spreading functions, symbols, application, norms.
//! * [`pipeline`]: budgeted box-input and sinc-input constructions and the
//!   obstruction check.
//! * [`cli`]: configs and subcommands for the `opwlab` binary.

// `!(x > 0.0)` is used deliberately so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod operator;
pub mod pipeline;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use operator::{
    apply, apply_with, densify, hs_norm, mollifier, spreading_to_symbol, support_box, symbol_sup_norm,
    symbol_to_spreading, ApplyOptions, Grid2D, OperatorRep, SpreadingGrid, SupportBox,
};
pub use pipeline::{
    build_theorem1, build_theorem2, input_substitution, verify_obstruction, BudgetSplit, Construction,
    ObstructionReport, TheoremReport, TheoremSetup,
};
pub use signal::{make_grid, sample, Grid1D, SampledSignal, SignalKind, C64};
pub use synth::{synthesize, SincBasis, SolveMethod, SynthesisConfig, SynthesisResult};
