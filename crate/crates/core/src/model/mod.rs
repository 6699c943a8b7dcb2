//! Coefficients, empirical measures and assumption validators.

pub mod assumptions;
pub mod coeffs;
pub mod initial;
pub mod measure;

pub use assumptions::{
    check_coercivity, check_local_boundedness, check_one_sided_lipschitz, AssumptionId,
    AssumptionReport, CheckConfig, CoercivityForm, LipschitzForm, TupleSampler, Verdict, Witness,
};
pub use coeffs::{
    CoefficientSet, Coefficients, CubicInteraction, FamilyParams, FamilyRegistry, Frozen,
    LinearMeanField,
};
pub use initial::{Initial, InitialLaw, Scaled};
pub use measure::{
    beta_norm, interaction_term, lyapunov_diagnostic, EmpiricalMeasure, Kernel, MeasureFlow,
};
