//! Analyst/audience principle-weight model.
//!
//! Analysts and audience members carry per-principle logits built from a
//! field mean, resource terms and a random deviation. The distance between
//! an analyst and an audience (or the mean of a group) is tested against
//! strong, weak and potential success criteria, either on one realized draw
//! or as a Monte Carlo probability. [`correction`] moves an analyst toward
//! their audience; [`scenario`] and [`engine`] wrap it all behind a JSON
//! document and reproducible reports.

pub mod correction;
pub mod engine;
pub mod error;
pub mod montecarlo;
pub mod principle;
pub mod sampling;
pub mod scenario;
pub mod success;

pub use correction::{
    allocate_proportions, allocate_weights, correct_to_target, correct_toward, optimize_for_group,
    CorrectedProfile, CorrectionBounds, CorrectionPlan, CorrectionTarget, GroupCorrection,
};
pub use engine::{
    run_correct, run_evaluate, run_sweep, CorrectOutput, ResultReport, SweepParam, SweepTable,
    ENGINE_VERSION,
};
pub use error::{Error, Issue, Result};
pub use montecarlo::{Experiment, MonteCarloSummary, Participant, SuccessKind};
pub use principle::{
    expected_distance, expected_group_distance, group_distance, inverse_logit, logit, mean_logits,
    pairwise_distance, person_logit, CoefficientMatrix, DistanceVector, FieldParams, FieldTable,
    FixedEffects, PersonProfile, PrincipleCatalog, ResourceVector, Role, WeightVector,
    DEFAULT_PRINCIPLES,
};
pub use sampling::{
    logits_to_simplex, sample_deviation, sample_person, sample_weights, DeviationDistribution,
    DeviationSpec, PopulationSpec, StreamSeed,
};
pub use scenario::{load_scenario, parse_scenario, parse_scenario_str, Scenario, SCHEMA_VERSION};
pub use success::{
    closed_form_success_probability, group_success_report, lp_mean_norm, normal_cdf,
    pairwise_success_report, potential_success, strong_success, sup_norm, weak_success,
    weak_success_with_order, NormOrder, ProbabilityEstimate, SuccessCriteria, SuccessReport,
};
