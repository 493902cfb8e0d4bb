//! Scenario documents: parsing, validation with document paths, defaults,
//! and the canonical form used for digests.
//!
//! A scenario is a JSON object:
//!
//! ```json
//! {
//!   "principles": ["data-matching", "..."],
//!   "fields": [{ "id": "stats", "lambda": [0, 0, 0, 0, 0, 0], "deviation_scale": [1, 1, 1, 1, 1, 1] }],
//!   "analyst": { "field": "stats", "resources": { "hours": 10 }, "coefficients": [{ "hours": 0.05 }, "..."] },
//!   "audience": [{ "field": "stats", "count": 3 }],
//!   "criteria": { "epsilon": 0.5, "p": 2, "potential_tolerance": 1e-9 },
//!   "mc": { "replicates": 10000, "seed": 7 },
//!   "correction": { "rho": 0.5, "bounds": { "min": ["..."], "max": ["..."] } }
//! }
//! ```
//!
//! Epsilon and all distances are on the logit scale. A participant with a
//! `deviation` array is a realized person; otherwise it is a population
//! whose deviations are drawn (by default normal, with the field's
//! `deviation_scale`).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correction::{CorrectionBounds, CorrectionPlan, CorrectionTarget};
use crate::error::{Error, Issue, Result};
use crate::montecarlo::{Experiment, Participant, MIN_REPLICATES};
use crate::principle::{
    CoefficientMatrix, FieldParams, FieldTable, FixedEffects, PersonProfile, PrincipleCatalog,
    ResourceVector, Role,
};
use crate::sampling::{DeviationDistribution, DeviationSpec, PopulationSpec};
use crate::success::{NormOrder, SuccessCriteria, DEFAULT_POTENTIAL_TOLERANCE};

/// Version of the scenario and report documents.
pub const SCHEMA_VERSION: &str = "1";

/// JSON Schema for scenario documents.
pub const SCENARIO_SCHEMA: &str = include_str!("../schema/scenario.schema.json");

pub const DEFAULT_REPLICATES: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TOTAL_WEIGHT: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principles: Option<Vec<String>>,
    pub fields: Vec<FieldDoc>,
    pub analyst: ParticipantDoc,
    pub audience: Vec<ParticipantDoc>,
    pub criteria: CriteriaDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDoc {
    pub id: String,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation_scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantDoc {
    pub field: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resources: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<BTreeMap<String, f64>>>,
    /// Realized deviation; makes this participant a fixed person.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<Vec<f64>>,
    /// Population deviation scale; defaults to the field's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation_scale: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DeviationDistribution>,
    /// Audience only: number of members this entry contributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

impl ParticipantDoc {
    pub fn in_field(field: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            resources: BTreeMap::new(),
            coefficients: None,
            deviation: None,
            deviation_scale: None,
            distribution: None,
            count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaDoc {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<NormOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionDoc {
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<CorrectionTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsDoc>,
    /// Weight budget used when presenting logits as integer weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_weight: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replicates: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudienceEntry {
    pub participant: Participant,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionConfig {
    pub plan: CorrectionPlan,
    pub total_weight: u64,
}

/// A validated scenario with every default applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub catalog: PrincipleCatalog,
    /// Fields in document order.
    pub fields: Vec<FieldParams>,
    pub analyst: Participant,
    pub audience: Vec<AudienceEntry>,
    pub criteria: SuccessCriteria,
    pub mc: MonteCarloConfig,
    pub correction: Option<CorrectionConfig>,
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.catalog.len()
    }

    pub fn field_table(&self) -> Result<FieldTable> {
        FieldTable::new(self.k(), self.fields.iter().cloned())
    }

    pub fn audience_size(&self) -> u64 {
        self.audience.iter().map(|a| a.count).sum()
    }

    /// Audience expanded to one participant per member, in document order.
    pub fn audience_members(&self) -> Vec<Participant> {
        self.audience
            .iter()
            .flat_map(|a| std::iter::repeat_n(a.participant.clone(), a.count as usize))
            .collect()
    }

    pub fn experiment(&self) -> Result<Experiment> {
        Experiment::new(
            self.field_table()?,
            self.analyst.clone(),
            self.audience_members(),
        )
    }

    /// Fully explicit document for this scenario.
    pub fn to_doc(&self) -> ScenarioDoc {
        ScenarioDoc {
            principles: Some(self.catalog.names().to_vec()),
            fields: self
                .fields
                .iter()
                .map(|f| FieldDoc {
                    id: f.id.clone(),
                    lambda: f.lambda.clone(),
                    deviation_scale: Some(f.deviation_scale.clone()),
                })
                .collect(),
            analyst: participant_doc(&self.analyst, None),
            audience: self
                .audience
                .iter()
                .map(|a| participant_doc(&a.participant, Some(a.count)))
                .collect(),
            criteria: CriteriaDoc {
                epsilon: self.criteria.epsilon,
                weak_epsilon: self.criteria.weak_epsilon,
                p: Some(self.criteria.p),
                potential_tolerance: Some(self.criteria.potential_tolerance),
            },
            mc: Some(McDoc {
                replicates: Some(self.mc.replicates),
                seed: Some(self.mc.seed),
            }),
            correction: self.correction.as_ref().map(|c| CorrectionDoc {
                rho: c.plan.rho,
                target: Some(c.plan.target),
                bounds: c.plan.bounds.as_ref().map(|b| BoundsDoc {
                    min: b.min.clone(),
                    max: b.max.clone(),
                }),
                total_weight: Some(c.total_weight),
            }),
        }
    }

    /// Canonical JSON: the explicit document with object keys sorted.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self.to_doc()).expect("scenario documents serialize");
        serde_json::to_string(&value).expect("json values serialize")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("scenario documents serialize")
    }
}

fn participant_doc(p: &Participant, count: Option<u64>) -> ParticipantDoc {
    let effects = p.effects();
    let mut doc = ParticipantDoc {
        field: effects.field_id.clone(),
        resources: effects.resources.entries().clone(),
        coefficients: Some(effects.coefficients.rows().to_vec()),
        deviation: None,
        deviation_scale: None,
        distribution: None,
        count,
    };
    match p {
        Participant::Fixed(person) => doc.deviation = Some(person.deviation.clone()),
        Participant::Population(pop) => {
            doc.deviation_scale = Some(pop.deviation.scale.clone());
            doc.distribution = Some(pop.deviation.distribution);
        }
    }
    doc
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(vec![Issue::new("", format!("{}: {e}", path.display()))]))?;
    parse_scenario_str(&text)
}

pub fn parse_scenario<R: Read>(mut reader: R) -> Result<Scenario> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Validation(vec![Issue::new("", format!("read failed: {e}"))]))?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        Error::Validation(vec![Issue::new(path, e.into_inner().to_string())])
    })?;
    validate(doc)
}

pub fn parse_scenario_value(value: serde_json::Value) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        Error::Validation(vec![Issue::new(path, e.into_inner().to_string())])
    })?;
    validate(doc)
}

/// Collects every problem in `doc` instead of stopping at the first.
struct Checker {
    issues: Vec<Issue>,
}

impl Checker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue::new(path, message));
    }

    fn vector(&mut self, path: &str, values: &[f64], k: usize, nonnegative: bool) -> bool {
        let mut ok = true;
        if values.len() != k {
            self.push(
                path,
                format!(
                    "length mismatch: expected {k} values (one per principle), got {}",
                    values.len()
                ),
            );
            ok = false;
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                self.push(format!("{path}[{i}]"), format!("must be finite, got {v}"));
                ok = false;
            } else if nonnegative && *v < 0.0 {
                self.push(format!("{path}[{i}]"), format!("must be >= 0, got {v}"));
                ok = false;
            }
        }
        ok
    }
}

/// Validates a parsed document and applies defaults.
pub fn validate(doc: ScenarioDoc) -> Result<Scenario> {
    let mut c = Checker { issues: Vec::new() };

    let catalog = match &doc.principles {
        None => PrincipleCatalog::default(),
        Some(names) => {
            let mut seen = BTreeSet::new();
            for (i, name) in names.iter().enumerate() {
                if name.trim().is_empty() {
                    c.push(
                        format!("principles[{i}]"),
                        "principle names must be non-empty",
                    );
                } else if !seen.insert(name) {
                    c.push(
                        format!("principles[{i}]"),
                        format!("duplicate principle `{name}`"),
                    );
                }
            }
            if names.is_empty() {
                c.push("principles", "at least one principle is required");
            }
            match PrincipleCatalog::new(names.clone()) {
                Ok(cat) => cat,
                Err(_) => return Err(Error::Validation(c.issues)),
            }
        }
    };
    let k = catalog.len();

    let mut fields = Vec::new();
    let mut field_ids = BTreeSet::new();
    if doc.fields.is_empty() {
        c.push("fields", "at least one field is required");
    }
    for (i, f) in doc.fields.iter().enumerate() {
        let path = format!("fields[{i}]");
        if f.id.is_empty() {
            c.push(format!("{path}.id"), "field id must be non-empty");
        } else if !field_ids.insert(f.id.clone()) {
            c.push(
                format!("{path}.id"),
                format!("duplicate field id `{}`", f.id),
            );
        }
        let mut ok = c.vector(&format!("{path}.lambda"), &f.lambda, k, false);
        let scale = f.deviation_scale.clone().unwrap_or_else(|| vec![0.0; k]);
        ok &= c.vector(&format!("{path}.deviation_scale"), &scale, k, true);
        if ok && !f.id.is_empty() {
            fields.push(FieldParams {
                id: f.id.clone(),
                lambda: f.lambda.clone(),
                deviation_scale: scale,
            });
        }
    }
    let field_map: BTreeMap<&str, &FieldParams> =
        fields.iter().map(|f| (f.id.as_str(), f)).collect();

    let analyst = participant(
        &mut c,
        "analyst",
        &doc.analyst,
        Role::Analyst,
        k,
        &field_ids,
        &field_map,
    );
    if doc.analyst.count.is_some() {
        c.push("analyst.count", "count applies to audience entries only");
    }

    let mut audience = Vec::new();
    if doc.audience.is_empty() {
        c.push("audience", "at least one audience member is required");
    }
    for (i, a) in doc.audience.iter().enumerate() {
        let path = format!("audience[{i}]");
        let count = a.count.unwrap_or(1);
        if count == 0 {
            c.push(format!("{path}.count"), "count must be at least 1");
        }
        if let Some(p) = participant(&mut c, &path, a, Role::Audience, k, &field_ids, &field_map) {
            audience.push(AudienceEntry {
                participant: p,
                count,
            });
        }
    }

    let cr = &doc.criteria;
    if !(cr.epsilon > 0.0 && cr.epsilon.is_finite()) {
        c.push(
            "criteria.epsilon",
            format!("must be a positive number, got {}", cr.epsilon),
        );
    }
    if let Some(w) = cr.weak_epsilon {
        if !(w > 0.0 && w.is_finite()) {
            c.push(
                "criteria.weak_epsilon",
                format!("must be a positive number, got {w}"),
            );
        }
    }
    let tau = cr
        .potential_tolerance
        .unwrap_or(DEFAULT_POTENTIAL_TOLERANCE);
    if !(tau >= 0.0 && tau.is_finite()) {
        c.push(
            "criteria.potential_tolerance",
            format!("must be >= 0, got {tau}"),
        );
    }
    let criteria = SuccessCriteria {
        epsilon: cr.epsilon,
        weak_epsilon: cr.weak_epsilon,
        p: cr.p.unwrap_or_default(),
        potential_tolerance: tau,
    };

    let mc = MonteCarloConfig {
        replicates: doc
            .mc
            .as_ref()
            .and_then(|m| m.replicates)
            .unwrap_or(DEFAULT_REPLICATES),
        seed: doc.mc.as_ref().and_then(|m| m.seed).unwrap_or(DEFAULT_SEED),
    };
    if mc.replicates < MIN_REPLICATES {
        c.push(
            "mc.replicates",
            format!(
                "at least {MIN_REPLICATES} replicates are required, got {}",
                mc.replicates
            ),
        );
    }

    let correction = doc.correction.as_ref().and_then(|cd| {
        let mut ok = true;
        if !(0.0..=1.0).contains(&cd.rho) {
            c.push(
                "correction.rho",
                format!("must be within [0, 1], got {}", cd.rho),
            );
            ok = false;
        }
        let total_weight = cd.total_weight.unwrap_or(DEFAULT_TOTAL_WEIGHT);
        if total_weight == 0 {
            c.push("correction.total_weight", "must be at least 1");
            ok = false;
        }
        let bounds = match &cd.bounds {
            None => None,
            Some(b) => {
                ok &= c.vector("correction.bounds.min", &b.min, k, false);
                ok &= c.vector("correction.bounds.max", &b.max, k, false);
                if ok {
                    for (i, (lo, hi)) in b.min.iter().zip(&b.max).enumerate() {
                        if lo > hi {
                            c.push(
                                format!("correction.bounds.min[{i}]"),
                                format!("min {lo} exceeds max {hi}"),
                            );
                            ok = false;
                        }
                    }
                }
                ok.then(|| CorrectionBounds {
                    min: b.min.clone(),
                    max: b.max.clone(),
                })
            }
        };
        ok.then(|| CorrectionConfig {
            plan: CorrectionPlan {
                rho: cd.rho,
                target: cd.target.unwrap_or_default(),
                bounds,
            },
            total_weight,
        })
    });

    if !c.issues.is_empty() {
        return Err(Error::Validation(c.issues));
    }
    let scenario = Scenario {
        catalog,
        fields,
        analyst: analyst.expect("no issues means the analyst parsed"),
        audience,
        criteria,
        mc,
        correction,
    };
    // cross-checks already done above; this catches anything they missed
    scenario
        .experiment()
        .map_err(|e| Error::Validation(vec![Issue::new("", e.to_string())]))?;
    Ok(scenario)
}

#[allow(clippy::too_many_arguments)]
fn participant(
    c: &mut Checker,
    path: &str,
    doc: &ParticipantDoc,
    role: Role,
    k: usize,
    field_ids: &BTreeSet<String>,
    fields: &BTreeMap<&str, &FieldParams>,
) -> Option<Participant> {
    let start = c.issues.len();
    if !field_ids.contains(&doc.field) {
        c.push(
            format!("{path}.field"),
            format!("unknown field `{}`", doc.field),
        );
    }
    for (name, v) in &doc.resources {
        if !v.is_finite() {
            c.push(
                format!("{path}.resources.{name}"),
                format!("must be finite, got {v}"),
            );
        }
    }
    let rows = match &doc.coefficients {
        Some(rows) => {
            if rows.len() != k {
                c.push(
                    format!("{path}.coefficients"),
                    format!(
                        "length mismatch: expected {k} rows (one per principle), got {}",
                        rows.len()
                    ),
                );
            }
            for (i, row) in rows.iter().enumerate() {
                let missing: Vec<&str> = doc
                    .resources
                    .keys()
                    .filter(|r| !row.contains_key(*r))
                    .map(String::as_str)
                    .collect();
                let extra: Vec<&str> = row
                    .keys()
                    .filter(|n| !doc.resources.contains_key(*n))
                    .map(String::as_str)
                    .collect();
                if !missing.is_empty() || !extra.is_empty() {
                    c.push(
                        format!("{path}.coefficients[{i}]"),
                        format!("keys must match resources: missing {missing:?}, extra {extra:?}"),
                    );
                }
                for (name, v) in row {
                    if !v.is_finite() {
                        c.push(
                            format!("{path}.coefficients[{i}].{name}"),
                            format!("must be finite, got {v}"),
                        );
                    }
                }
            }
            rows.clone()
        }
        None => {
            if !doc.resources.is_empty() {
                c.push(
                    format!("{path}.coefficients"),
                    "coefficients are required when resources are given",
                );
            }
            vec![BTreeMap::new(); k]
        }
    };

    if let Some(dev) = &doc.deviation {
        c.vector(&format!("{path}.deviation"), dev, k, false);
        if doc.deviation_scale.is_some() {
            c.push(
                format!("{path}.deviation_scale"),
                "a realized deviation and a deviation scale are mutually exclusive",
            );
        }
        if doc.distribution.is_some() {
            c.push(
                format!("{path}.distribution"),
                "a realized deviation and a distribution are mutually exclusive",
            );
        }
    }
    if let Some(scale) = &doc.deviation_scale {
        c.vector(&format!("{path}.deviation_scale"), scale, k, true);
    }
    if c.issues.len() > start {
        return None;
    }

    let effects = FixedEffects::new(
        doc.field.clone(),
        ResourceVector::new(doc.resources.clone()).ok()?,
        CoefficientMatrix::new(rows).ok()?,
    );
    Some(match &doc.deviation {
        Some(dev) => Participant::Fixed(PersonProfile {
            role,
            effects,
            deviation: dev.clone(),
        }),
        None => {
            let scale = doc
                .deviation_scale
                .clone()
                .or_else(|| {
                    fields
                        .get(doc.field.as_str())
                        .map(|f| f.deviation_scale.clone())
                })
                .unwrap_or_else(|| vec![0.0; k]);
            Participant::Population(PopulationSpec::new(
                effects,
                DeviationSpec {
                    distribution: doc.distribution.unwrap_or_default(),
                    scale,
                },
            ))
        }
    })
}
