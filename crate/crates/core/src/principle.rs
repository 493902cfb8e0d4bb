//! Principle catalog, field and person parameterizations, and the
//! deterministic logit-scale arithmetic built on them.
//!
//! Every analyst and audience member carries a log-odds value per principle:
//!
//! ```text
//! logit = field mean + individual deviation + sum_r resource[r] * coefficient[k][r]
//! ```
//!
//! Distances between an analyst and an audience are taken directly on this
//! scale. Realized integer weights never enter a distance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six default principles, in catalog order.
pub const DEFAULT_PRINCIPLES: [&str; 6] = [
    "data-matching",
    "exhaustive",
    "skeptical",
    "second-order",
    "transparent",
    "reproducible",
];

/// Ordered, duplicate-free list of principle names. The position of a name
/// is its principle index everywhere else in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PrincipleCatalog {
    names: Vec<String>,
}

impl PrincipleCatalog {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Invalid(
                "catalog needs at least one principle".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(Error::Invalid("principle names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Invalid(format!("duplicate principle `{name}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Default for PrincipleCatalog {
    fn default() -> Self {
        Self {
            names: DEFAULT_PRINCIPLES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for PrincipleCatalog {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<PrincipleCatalog> for Vec<String> {
    fn from(catalog: PrincipleCatalog) -> Self {
        catalog.names
    }
}

/// Conventions of one field: a mean logit per principle and the standard
/// deviation of individual departures from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub id: String,
    pub lambda: Vec<f64>,
    pub deviation_scale: Vec<f64>,
}

impl FieldParams {
    pub fn new(id: impl Into<String>, lambda: Vec<f64>, deviation_scale: Vec<f64>) -> Result<Self> {
        let field = Self {
            id: id.into(),
            lambda,
            deviation_scale,
        };
        field.validate(field.lambda.len())?;
        Ok(field)
    }

    /// Field with the given means and no individual variation.
    pub fn fixed(id: impl Into<String>, lambda: Vec<f64>) -> Result<Self> {
        let k = lambda.len();
        Self::new(id, lambda, vec![0.0; k])
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Invalid("field id must be non-empty".into()));
        }
        check_len("lambda", k, self.lambda.len())?;
        check_len("deviation_scale", k, self.deviation_scale.len())?;
        if let Some(&v) = self.lambda.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "lambda",
                value: v,
            });
        }
        if let Some(&v) = self
            .deviation_scale
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Domain {
                what: "deviation_scale",
                value: v,
            });
        }
        Ok(())
    }
}

/// Fields keyed by id, all sized to the same catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    k: usize,
    fields: BTreeMap<String, FieldParams>,
}

impl FieldTable {
    pub fn new(k: usize, fields: impl IntoIterator<Item = FieldParams>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for field in fields {
            field.validate(k)?;
            if table.contains_key(&field.id) {
                return Err(Error::Invalid(format!("duplicate field `{}`", field.id)));
            }
            table.insert(field.id.clone(), field);
        }
        Ok(Self { k, fields: table })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, id: &str) -> Result<&FieldParams> {
        self.fields
            .get(id)
            .ok_or_else(|| Error::UnknownField(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FieldParams> {
        self.fields.values()
    }

    /// Copy of the table with `shift[k]` added to every field's mean for
    /// principle `k`.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        check_len("shift", self.k, shift.len())?;
        let fields = self
            .fields
            .values()
            .map(|f| {
                let mut f = f.clone();
                f.lambda.iter_mut().zip(shift).for_each(|(l, s)| *l += s);
                f
            })
            .collect::<Vec<_>>();
        Self::new(self.k, fields)
    }
}

/// Named resource covariates (time, budget, headcount, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ResourceVector(BTreeMap<String, f64>);

impl ResourceVector {
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((name, &v)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "resource `{name}` is not finite: {v}"
            )));
        }
        Ok(Self(entries))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    /// Copy with `name` set to `value`.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut entries = self.0.clone();
        entries.insert(name.to_string(), value);
        Self::new(entries)
    }
}

impl TryFrom<BTreeMap<String, f64>> for ResourceVector {
    type Error = Error;

    fn try_from(entries: BTreeMap<String, f64>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<ResourceVector> for BTreeMap<String, f64> {
    fn from(r: ResourceVector) -> Self {
        r.0
    }
}

/// Per-principle coefficients relating each resource to the logit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientMatrix {
    rows: Vec<BTreeMap<String, f64>>,
}

impl CoefficientMatrix {
    pub fn new(rows: Vec<BTreeMap<String, f64>>) -> Result<Self> {
        for (k, row) in rows.iter().enumerate() {
            if let Some((name, v)) = row.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "coefficient `{name}` for principle {} is not finite: {v}",
                    k + 1
                )));
            }
        }
        Ok(Self { rows })
    }

    /// `k` empty rows: no resource enters the logit.
    pub fn empty(k: usize) -> Self {
        Self {
            rows: vec![BTreeMap::new(); k],
        }
    }

    /// Builds one row per principle from name/value pairs.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = Vec<(&'a str, f64)>>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(|r| r.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[BTreeMap<String, f64>] {
        &self.rows
    }

    /// `resources . coefficients[k]` for every principle. Each row's key set
    /// must equal the resource key set.
    pub fn linear_predictor(&self, resources: &ResourceVector) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let missing: Vec<String> = resources
                    .keys()
                    .filter(|r| !row.contains_key(*r))
                    .map(str::to_string)
                    .collect();
                let extra: Vec<String> = row
                    .keys()
                    .filter(|c| resources.get(c).is_none())
                    .cloned()
                    .collect();
                if !missing.is_empty() || !extra.is_empty() {
                    return Err(Error::KeyMismatch {
                        principle: k + 1,
                        missing,
                        extra,
                    });
                }
                Ok(row
                    .iter()
                    .map(|(name, beta)| resources.0[name] * beta)
                    .sum())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Analyst,
    Audience,
}

/// The deviation-free part of a person: field membership plus resource
/// perception and coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffects {
    pub field_id: String,
    #[serde(default)]
    pub resources: ResourceVector,
    pub coefficients: CoefficientMatrix,
}

impl FixedEffects {
    pub fn new(
        field_id: impl Into<String>,
        resources: ResourceVector,
        coefficients: CoefficientMatrix,
    ) -> Self {
        Self {
            field_id: field_id.into(),
            resources,
            coefficients,
        }
    }

    /// Field membership only: no resources, empty coefficient rows.
    pub fn field_only(field_id: impl Into<String>, k: usize) -> Self {
        Self::new(
            field_id,
            ResourceVector::default(),
            CoefficientMatrix::empty(k),
        )
    }

    /// `lambda_f + x'beta` per principle; the expected logit of anyone with
    /// these fixed effects.
    pub fn expected_logits(&self, fields: &FieldTable) -> Result<Vec<f64>> {
        let field = fields.get(&self.field_id)?;
        check_len("coefficient rows", fields.k(), self.coefficients.len())?;
        let linear = self.coefficients.linear_predictor(&self.resources)?;
        Ok(field
            .lambda
            .iter()
            .zip(linear)
            .map(|(lambda, xb)| lambda + xb)
            .collect())
    }
}

/// A realized analyst or audience member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonProfile {
    pub role: Role,
    #[serde(flatten)]
    pub effects: FixedEffects,
    pub deviation: Vec<f64>,
}

impl PersonProfile {
    pub fn new(role: Role, effects: FixedEffects, deviation: Vec<f64>) -> Result<Self> {
        if let Some(&v) = deviation.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "deviation",
                value: v,
            });
        }
        Ok(Self {
            role,
            effects,
            deviation,
        })
    }

    pub fn field_id(&self) -> &str {
        &self.effects.field_id
    }
}

/// Per-principle difference between analyst and audience logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceVector(Vec<f64>);

impl DistanceVector {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some(&v) = d.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "distance",
                value: v,
            });
        }
        Ok(Self(d))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `max_k |d_k|`.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, d| m.max(d.abs()))
    }
}

impl std::ops::Neg for DistanceVector {
    type Output = DistanceVector;

    fn neg(self) -> DistanceVector {
        DistanceVector(self.0.into_iter().map(|d| -d).collect())
    }
}

/// Integer weights across principles with their total budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<u64>,
    pub total: u64,
}

impl WeightVector {
    pub fn new(weights: Vec<u64>) -> Result<Self> {
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return Err(Error::Invalid("weight total must be at least 1".into()));
        }
        Ok(Self { weights, total })
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// `ln(p / (1 - p))` for `p` strictly inside `(0, 1)`.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "probability",
            value: p,
        });
    }
    Ok((p / (1.0 - p)).ln())
}

/// Logistic function, evaluated without overflow on either tail.
pub fn inverse_logit(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain {
            what: "logit",
            value: x,
        });
    }
    Ok(if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    })
}

/// Realized logit of a person: expected logit plus their deviation.
pub fn person_logit(person: &PersonProfile, fields: &FieldTable) -> Result<Vec<f64>> {
    check_len("deviation", fields.k(), person.deviation.len())?;
    let expected = person.effects.expected_logits(fields)?;
    Ok(expected
        .iter()
        .zip(&person.deviation)
        .map(|(e, d)| e + d)
        .collect())
}

/// `analyst - audience`, componentwise.
pub fn pairwise_distance(analyst: &[f64], audience: &[f64]) -> Result<DistanceVector> {
    check_len("audience logits", analyst.len(), audience.len())?;
    DistanceVector::new(analyst.iter().zip(audience).map(|(a, b)| a - b).collect())
}

/// Expected pairwise distance; individual deviations drop out since their
/// mean is zero.
pub fn expected_distance(
    analyst: &FixedEffects,
    audience: &FixedEffects,
    fields: &FieldTable,
) -> Result<DistanceVector> {
    let psi = analyst.expected_logits(fields)?;
    let alpha = audience.expected_logits(fields)?;
    pairwise_distance(&psi, &alpha)
}

/// Componentwise mean of equal-length vectors.
///
/// Uses a running mean so that averaging identical vectors returns that
/// vector bit-for-bit.
pub fn mean_logits<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Invalid("audience must have at least one member".into()))?
        .as_ref();
    let mut mean = first.to_vec();
    for (n, v) in vectors.iter().enumerate().skip(1) {
        let v = v.as_ref();
        check_len("audience logits", mean.len(), v.len())?;
        let count = (n + 1) as f64;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += (x - *m) / count;
        }
    }
    Ok(mean)
}

/// Distance from the analyst to the mean audience logit.
pub fn group_distance<V: AsRef<[f64]>>(analyst: &[f64], audience: &[V]) -> Result<DistanceVector> {
    let mean = mean_logits(audience)?;
    pairwise_distance(analyst, &mean)
}

/// Expected group distance: analyst expectation minus the mean of the
/// audience expectations.
pub fn expected_group_distance(
    analyst: &FixedEffects,
    audience: &[&FixedEffects],
    fields: &FieldTable,
) -> Result<DistanceVector> {
    let psi = analyst.expected_logits(fields)?;
    let alphas = audience
        .iter()
        .map(|a| a.expected_logits(fields))
        .collect::<Result<Vec<_>>>()?;
    group_distance(&psi, &alphas)
}
