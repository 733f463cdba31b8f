//! Scalable hardness: ensembles with self-reductions, booleanization, and
//! the oracle-access distinguishers that make OI hard.

pub mod ensemble;
pub mod graph;
pub mod oi;

pub use ensemble::{
    gl_repetitions, inner_product, reconstruct_bit, Booleanized, CliqueEnsemble, Costs,
    LinearEnsemble, Oracle, ScalableEnsemble,
};
pub use graph::{clique_count, clique_downward, Graph};
pub use oi::{
    build_hard_nature, hardness_demo, induction_claims_check, round_bit, ClaimOutcome,
    ClaimReport, DemoConfig, DemoReport, HardNature, Layout,
};
