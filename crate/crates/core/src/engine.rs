//! Scenario runs: evaluate, correct and sweep, and their report documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correction::{
    allocate_weights, correct_to_target, CorrectionBounds, CorrectionPlan, CorrectionTarget,
    GroupCorrection,
};
use crate::error::{Error, Result};
use crate::montecarlo::{Experiment, MonteCarloSummary};
use crate::principle::{mean_logits, person_logit, DistanceVector};
use crate::scenario::{CorrectionConfig, Scenario, SCHEMA_VERSION};
use crate::success::{
    lp_mean_norm, NormOrder, ProbabilityEstimate, SuccessCriteria, SuccessReport,
};

pub const ENGINE_VERSION: &str = concat!("analysis-success/", env!("CARGO_PKG_VERSION"));

/// Stream label of the single realized draw shown in the principle table.
const REALIZED: &str = "realized";

/// Fixed header of the tabular output.
pub const TABLE_HEADER: [&str; 8] = [
    "k",
    "name",
    "psi",
    "expected_psi",
    "alpha_mean",
    "expected_alpha_mean",
    "distance",
    "expected_distance",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleRow {
    /// 1-based principle index.
    pub k: usize,
    pub name: String,
    pub psi: f64,
    pub expected_psi: f64,
    pub alpha_mean: f64,
    pub expected_alpha_mean: f64,
    pub distance: f64,
    pub expected_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaEcho {
    pub epsilon: f64,
    pub weak_epsilon: f64,
    pub p: NormOrder,
    pub potential_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessFlags {
    pub strong: bool,
    pub weak: bool,
    pub potential: bool,
    pub sup_norm: f64,
    pub lp_norm: f64,
    pub expected_sup_norm: f64,
    /// Set for audiences of more than one member, where the strong and weak
    /// tests are applied to the group distance by extension.
    pub group_extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub strong: ProbabilityEstimate,
    pub weak: ProbabilityEstimate,
    /// Exact strong-success probability; present when every random
    /// component is normal.
    pub strong_closed_form: Option<ProbabilityEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloDiagnostics {
    pub mean_distance: Vec<f64>,
    pub distance_sd: Vec<f64>,
    /// Sample variance of the audience-mean deviation per principle.
    pub audience_mean_deviation_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub rho: f64,
    pub target: CorrectionTarget,
    pub bounds: Option<CorrectionBounds>,
    pub target_logits: Vec<f64>,
    pub original_logits: Vec<f64>,
    pub corrected_logits: Vec<f64>,
    pub correction: Vec<f64>,
    pub residual_expected_distance: DistanceVector,
    pub sup_before: f64,
    pub sup_after: f64,
    pub total_weight: u64,
    pub original_weights: Vec<u64>,
    pub corrected_weights: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub engine_version: String,
    pub schema_version: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub replicates: u64,
    pub audience_size: u64,
    pub criteria: CriteriaEcho,
    pub principles: Vec<PrincipleRow>,
    pub success: SuccessFlags,
    pub probabilities: Probabilities,
    /// Absent when nothing in the scenario is random.
    pub monte_carlo: Option<MonteCarloDiagnostics>,
    /// The scenario's correction plan. `evaluate` reports it without
    /// applying it; `correct` applies it to the principle table.
    pub correction: Option<CorrectionSummary>,
}

impl ResultReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        write_csv(&TABLE_HEADER, |w| self.write_rows(w, &[]))
    }

    fn write_rows(&self, w: &mut csv::Writer<Vec<u8>>, prefix: &[String]) -> csv::Result<()> {
        for row in &self.principles {
            let mut rec: Vec<String> = prefix.to_vec();
            rec.extend([
                row.k.to_string(),
                row.name.clone(),
                fmt_f64(row.psi),
                fmt_f64(row.expected_psi),
                fmt_f64(row.alpha_mean),
                fmt_f64(row.expected_alpha_mean),
                fmt_f64(row.distance),
                fmt_f64(row.expected_distance),
            ]);
            w.write_record(&rec)?;
        }
        Ok(())
    }
}

/// Shortest representation that round-trips, matching the JSON output.
fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

fn write_csv(
    header: &[&str],
    rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let run = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
        w.write_record(header)?;
        rows(w)?;
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| Error::Runtime(format!("csv output failed: {e}")))?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Runtime(format!("csv output failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Runtime(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectOutput {
    pub correction: CorrectionSummary,
    pub report: ResultReport,
}

impl CorrectOutput {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Sweepable scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Epsilon,
    Rho,
    AudienceSize,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::Rho => "rho",
            SweepParam::AudienceSize => "audience-size",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepParam::Epsilon),
            "rho" => Ok(SweepParam::Rho),
            "audience-size" | "J" | "j" => Ok(SweepParam::AudienceSize),
            other => Err(Error::Invalid(format!(
                "unknown sweep parameter `{other}`; expected epsilon, rho or audience-size"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: ResultReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParam,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["parameter", "value"];
        header.extend(TABLE_HEADER);
        write_csv(&header, |w| {
            for p in &self.points {
                p.report
                    .write_rows(w, &[self.parameter.to_string(), fmt_f64(p.value)])?;
            }
            Ok(())
        })
    }
}

/// Everything about a run except the correction block.
fn build_report(
    scenario: &Scenario,
    exp: &Experiment,
    correction: Option<CorrectionSummary>,
) -> Result<ResultReport> {
    let criteria = &scenario.criteria;
    let k = exp.k();
    let offset = exp.offset().to_vec();

    let (analyst, audience) = exp.realize(scenario.mc.seed, REALIZED)?;
    let psi = person_logit(&analyst, exp.fields())?;
    let alphas = audience
        .iter()
        .map(|a| person_logit(a, exp.fields()))
        .collect::<Result<Vec<_>>>()?;
    let alpha_mean = mean_logits(&alphas)?;
    let distance = exp.realized_distance(&analyst, &audience)?;
    let expected_psi = exp.expected_analyst_logits()?;
    let expected_alpha = exp.expected_audience_mean()?;
    let expected = exp.expected_distance()?;

    let principles = (0..k)
        .map(|i| PrincipleRow {
            k: i + 1,
            name: scenario.catalog.names()[i].clone(),
            psi: psi[i] + offset[i],
            expected_psi: expected_psi[i] + offset[i],
            alpha_mean: alpha_mean[i],
            expected_alpha_mean: expected_alpha[i],
            distance: distance.as_slice()[i],
            expected_distance: expected.as_slice()[i],
        })
        .collect();

    let report = SuccessReport::evaluate(distance, expected, criteria, exp.audience_size() > 1);
    let success = SuccessFlags {
        strong: report.strong,
        weak: report.weak,
        potential: report.potential,
        sup_norm: report.norms.sup,
        lp_norm: report.norms.lp,
        expected_sup_norm: report.expected_sup_norm,
        group_extrapolated: report.group_extrapolated,
    };

    let closed_form = exp.closed_form(criteria.epsilon)?;
    let (probabilities, monte_carlo) = if exp.has_randomness() {
        let MonteCarloSummary {
            strong,
            weak,
            mean_distance,
            audience_mean_deviation_variance,
        } = exp.monte_carlo(criteria, scenario.mc.replicates, scenario.mc.seed)?;
        (
            Probabilities {
                strong,
                weak,
                strong_closed_form: closed_form,
            },
            Some(MonteCarloDiagnostics {
                mean_distance,
                distance_sd: exp.distance_sd(),
                audience_mean_deviation_variance,
            }),
        )
    } else {
        // nothing is random: both probabilities are indicators
        let d = exp.deterministic_distance()?;
        let weak = lp_mean_norm(d.as_slice(), criteria.p) < criteria.weak_epsilon();
        let strong = closed_form.unwrap_or(ProbabilityEstimate::exact(
            if d.sup_norm() < criteria.epsilon {
                1.0
            } else {
                0.0
            },
        ));
        (
            Probabilities {
                strong,
                weak: ProbabilityEstimate::exact(if weak { 1.0 } else { 0.0 }),
                strong_closed_form: closed_form,
            },
            None,
        )
    };

    Ok(ResultReport {
        engine_version: ENGINE_VERSION.to_string(),
        schema_version: SCHEMA_VERSION.to_string(),
        scenario_digest: scenario.digest(),
        seed: scenario.mc.seed,
        replicates: scenario.mc.replicates,
        audience_size: scenario.audience_size(),
        criteria: CriteriaEcho {
            epsilon: criteria.epsilon,
            weak_epsilon: criteria.weak_epsilon(),
            p: criteria.p,
            potential_tolerance: criteria.potential_tolerance,
        },
        principles,
        success,
        probabilities,
        monte_carlo,
        correction,
    })
}

/// The correction the scenario's plan would make, against the expected
/// analyst logits.
fn plan_correction(
    scenario: &Scenario,
    exp: &Experiment,
    config: &CorrectionConfig,
) -> Result<CorrectionSummary> {
    let analyst = exp.expected_analyst_logits()?;
    let target = match config.plan.target {
        CorrectionTarget::GroupMean => exp.expected_audience_mean()?,
        CorrectionTarget::Population => {
            let expected = scenario
                .audience
                .iter()
                .map(|a| a.participant.effects().expected_logits(exp.fields()))
                .collect::<Result<Vec<_>>>()?;
            mean_logits(&expected)?
        }
        CorrectionTarget::Individual => {
            let (_, audience) = exp.realize(scenario.mc.seed, REALIZED)?;
            let alphas = audience
                .iter()
                .map(|a| person_logit(a, exp.fields()))
                .collect::<Result<Vec<_>>>()?;
            mean_logits(&alphas)?
        }
    };
    let GroupCorrection {
        target_logits,
        profile,
        sup_before,
        sup_after,
    } = correct_to_target(&analyst, target, &config.plan)?;
    Ok(CorrectionSummary {
        rho: config.plan.rho,
        target: config.plan.target,
        bounds: config.plan.bounds.clone(),
        original_weights: allocate_weights(config.total_weight, &profile.original_logits)?.weights,
        corrected_weights: allocate_weights(config.total_weight, &profile.corrected_logits)?
            .weights,
        target_logits,
        original_logits: profile.original_logits,
        corrected_logits: profile.corrected_logits,
        correction: profile.correction,
        residual_expected_distance: profile.residual_expected_distance,
        sup_before,
        sup_after,
        total_weight: config.total_weight,
    })
}

/// Evaluates the scenario as written. A correction plan, if any, is
/// reported but not applied.
pub fn run_evaluate(scenario: &Scenario) -> Result<ResultReport> {
    let exp = scenario.experiment()?;
    let correction = scenario
        .correction
        .as_ref()
        .map(|c| plan_correction(scenario, &exp, c))
        .transpose()?;
    build_report(scenario, &exp, correction)
}

/// Applies the scenario's correction plan and re-evaluates. With `rho = 0`
/// the report equals [`run_evaluate`]'s.
pub fn run_correct(scenario: &Scenario) -> Result<CorrectOutput> {
    let config = scenario.correction.as_ref().ok_or_else(|| {
        Error::Validation(vec![crate::error::Issue::new(
            "correction",
            "a correction block is required",
        )])
    })?;
    let exp = scenario.experiment()?;
    let summary = plan_correction(scenario, &exp, config)?;
    let corrected = exp.with_offset(summary.correction.clone())?;
    let report = build_report(scenario, &corrected, Some(summary.clone()))?;
    Ok(CorrectOutput {
        correction: summary,
        report,
    })
}

/// One report per grid value. The grid must be nonempty and strictly
/// ascending. `rho` sweeps apply the correction; the other parameters
/// evaluate.
pub fn run_sweep(scenario: &Scenario, param: SweepParam, grid: &[f64]) -> Result<SweepTable> {
    check_grid(param, grid)?;
    let points = grid
        .iter()
        .map(|&value| {
            let s = with_param(scenario, param, value)?;
            let report = match param {
                SweepParam::Rho => run_correct(&s)?.report,
                _ => run_evaluate(&s)?,
            };
            Ok(SweepPoint { value, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        parameter: param,
        points,
    })
}

fn check_grid(param: SweepParam, grid: &[f64]) -> Result<()> {
    let issue = |i: Option<usize>, msg: String| {
        let path = match i {
            Some(i) => format!("grid[{i}]"),
            None => "grid".to_string(),
        };
        Error::Validation(vec![crate::error::Issue::new(path, msg)])
    };
    if grid.is_empty() {
        return Err(issue(None, "grid must not be empty".into()));
    }
    for (i, &v) in grid.iter().enumerate() {
        let ok = match param {
            SweepParam::Epsilon => v > 0.0 && v.is_finite(),
            SweepParam::Rho => (0.0..=1.0).contains(&v),
            SweepParam::AudienceSize => v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64,
        };
        if !ok {
            let want = match param {
                SweepParam::Epsilon => "a positive number",
                SweepParam::Rho => "within [0, 1]",
                SweepParam::AudienceSize => "a positive integer",
            };
            return Err(issue(Some(i), format!("{param} must be {want}, got {v}")));
        }
        if i > 0 && grid[i - 1] >= v {
            return Err(issue(Some(i), "grid must be strictly ascending".into()));
        }
    }
    Ok(())
}

/// A copy of `scenario` with one parameter replaced.
pub fn with_param(scenario: &Scenario, param: SweepParam, value: f64) -> Result<Scenario> {
    let mut s = scenario.clone();
    match param {
        SweepParam::Epsilon => {
            s.criteria = SuccessCriteria {
                epsilon: value,
                ..s.criteria
            };
            s.criteria.validate()?;
        }
        SweepParam::Rho => {
            let config = s.correction.get_or_insert_with(|| CorrectionConfig {
                plan: CorrectionPlan::new(0.0).expect("0 is a valid degree"),
                total_weight: crate::scenario::DEFAULT_TOTAL_WEIGHT,
            });
            config.plan.rho = value;
            config.plan.validate()?;
        }
        SweepParam::AudienceSize => {
            if s.audience.len() != 1 {
                return Err(Error::Validation(vec![crate::error::Issue::new(
                    "audience",
                    format!(
                        "an audience-size sweep needs exactly one audience entry, found {}",
                        s.audience.len()
                    ),
                )]));
            }
            s.audience[0].count = value as u64;
        }
    }
    Ok(s)
}
