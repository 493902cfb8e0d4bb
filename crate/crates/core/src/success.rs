//! Strong, weak, and potential success tests on distance vectors, their
//! group forms, and probability estimates of strong success.

use std::fmt;

use libm::erfc;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::principle::{
    expected_group_distance, group_distance, person_logit, DistanceVector, FieldTable,
    PersonProfile,
};

/// Default tolerance for the expected-distance-is-zero test, in logit units.
pub const DEFAULT_POTENTIAL_TOLERANCE: f64 = 1e-9;

/// Order of the averaged power mean used by weak success. `Infinity` is the
/// sup norm. Serialized as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(NormOrder::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(NormOrder::Finite(p))
        } else {
            Err(Error::Domain {
                what: "norm order p",
                value: p,
            })
        }
    }

    pub fn value(self) -> f64 {
        match self {
            NormOrder::Finite(p) => p,
            NormOrder::Infinity => f64::INFINITY,
        }
    }
}

impl Default for NormOrder {
    fn default() -> Self {
        NormOrder::Finite(2.0)
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NormOrder::Finite(p) => s.serialize_f64(*p),
            NormOrder::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Number(p) => p,
            Raw::Text(t) if matches!(t.as_str(), "inf" | "Inf" | "INF" | "infinity") => {
                f64::INFINITY
            }
            Raw::Text(t) => {
                return Err(serde::de::Error::custom(format!(
                    "expected a number >= 1 or \"inf\", got \"{t}\""
                )))
            }
        };
        NormOrder::new(p).map_err(serde::de::Error::custom)
    }
}

/// Thresholds for the three success tests. `weak_epsilon` falls back to
/// `epsilon` when unset.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCriteria {
    pub epsilon: f64,
    pub weak_epsilon: Option<f64>,
    pub p: NormOrder,
    pub potential_tolerance: f64,
}

impl SuccessCriteria {
    pub fn new(epsilon: f64) -> Result<Self> {
        let criteria = Self {
            epsilon,
            weak_epsilon: None,
            p: NormOrder::default(),
            potential_tolerance: DEFAULT_POTENTIAL_TOLERANCE,
        };
        criteria.validate()?;
        Ok(criteria)
    }

    pub fn with_p(mut self, p: NormOrder) -> Self {
        self.p = p;
        self
    }

    pub fn with_tolerance(mut self, tau: f64) -> Result<Self> {
        self.potential_tolerance = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn weak_epsilon(&self) -> f64 {
        self.weak_epsilon.unwrap_or(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_epsilon(self.weak_epsilon())?;
        if !(self.potential_tolerance >= 0.0 && self.potential_tolerance.is_finite()) {
            return Err(Error::Domain {
                what: "potential tolerance",
                value: self.potential_tolerance,
            });
        }
        Ok(())
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && !eps.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "epsilon",
            value: eps,
        })
    }
}

/// `max_k |d_k|`.
pub fn sup_norm(d: &[f64]) -> f64 {
    d.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `((1/K) sum_k |d_k|^p)^(1/p)`, or the sup norm for `p = inf`.
///
/// Computed relative to the largest component, which avoids overflow and
/// guarantees the result never exceeds the sup norm.
pub fn lp_mean_norm(d: &[f64], p: NormOrder) -> f64 {
    let max = sup_norm(d);
    let p = match p {
        NormOrder::Infinity => return max,
        NormOrder::Finite(p) => p,
    };
    if max == 0.0 || d.is_empty() {
        return 0.0;
    }
    let mean = d.iter().map(|x| (x.abs() / max).powf(p)).sum::<f64>() / d.len() as f64;
    (max * mean.powf(1.0 / p)).min(max)
}

/// Every component strictly inside `(-eps, eps)`.
pub fn strong_success(d: &DistanceVector, eps: f64) -> bool {
    sup_norm(d.as_slice()) < eps
}

/// Averaged power mean of the components strictly below `eps`.
pub fn weak_success(d: &DistanceVector, eps: f64, p: NormOrder) -> bool {
    lp_mean_norm(d.as_slice(), p) < eps
}

/// Weak success with a raw order; fails for `p < 1`.
pub fn weak_success_with_order(d: &DistanceVector, eps: f64, p: f64) -> Result<bool> {
    Ok(weak_success(d, eps, NormOrder::new(p)?))
}

/// Expected distance within `tau` of zero in every component.
pub fn potential_success(expected: &DistanceVector, tau: f64) -> bool {
    sup_norm(expected.as_slice()) <= tau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub sup: f64,
    pub lp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub distance: DistanceVector,
    pub expected_distance: DistanceVector,
    pub strong: bool,
    pub weak: bool,
    pub potential: bool,
    pub norms: Norms,
    pub expected_sup_norm: f64,
    /// Strong and weak tests applied to a group distance. Only the potential
    /// test has a settled group form; the other two are an extension.
    pub group_extrapolated: bool,
}

impl SuccessReport {
    pub fn evaluate(
        distance: DistanceVector,
        expected_distance: DistanceVector,
        criteria: &SuccessCriteria,
        group_extrapolated: bool,
    ) -> Self {
        let d = distance.as_slice();
        Self {
            strong: strong_success(&distance, criteria.epsilon),
            weak: weak_success(&distance, criteria.weak_epsilon(), criteria.p),
            potential: potential_success(&expected_distance, criteria.potential_tolerance),
            norms: Norms {
                sup: sup_norm(d),
                lp: lp_mean_norm(d, criteria.p),
            },
            expected_sup_norm: sup_norm(expected_distance.as_slice()),
            distance,
            expected_distance,
            group_extrapolated,
        }
    }
}

pub fn pairwise_success_report(
    analyst: &PersonProfile,
    audience: &PersonProfile,
    fields: &FieldTable,
    criteria: &SuccessCriteria,
) -> Result<SuccessReport> {
    group_success_report(analyst, std::slice::from_ref(audience), fields, criteria)
}

/// Success report for an analyst presenting to one or more realized audience
/// members.
pub fn group_success_report(
    analyst: &PersonProfile,
    audience: &[PersonProfile],
    fields: &FieldTable,
    criteria: &SuccessCriteria,
) -> Result<SuccessReport> {
    criteria.validate()?;
    if audience.is_empty() {
        return Err(Error::Invalid(
            "audience must have at least one member".into(),
        ));
    }
    let psi = person_logit(analyst, fields)?;
    let alphas = audience
        .iter()
        .map(|a| person_logit(a, fields))
        .collect::<Result<Vec<_>>>()?;
    let distance = group_distance(&psi, &alphas)?;
    let effects: Vec<_> = audience.iter().map(|a| &a.effects).collect();
    let expected = expected_group_distance(&analyst.effects, &effects, fields)?;
    Ok(SuccessReport::evaluate(
        distance,
        expected,
        criteria,
        audience.len() > 1,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Number of Monte Carlo replicates; absent for closed-form values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    pub method: EstimateMethod,
}

impl ProbabilityEstimate {
    pub fn from_counts(successes: u64, replicates: u64) -> Self {
        let estimate = successes as f64 / replicates as f64;
        Self {
            estimate,
            std_error: (estimate * (1.0 - estimate) / replicates as f64).sqrt(),
            replicates: Some(replicates),
            method: EstimateMethod::MonteCarlo,
        }
    }

    pub fn exact(estimate: f64) -> Self {
        Self {
            estimate,
            std_error: 0.0,
            replicates: None,
            method: EstimateMethod::ClosedForm,
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(a < Z < b)` for standard normal `Z`, taken on whichever tail keeps
/// the subtraction well conditioned.
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        // both in the upper tail
        normal_cdf(-a) - normal_cdf(-b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_cdf(-b)
    }
}

/// Exact strong-success probability when each distance component is an
/// independent normal with mean `mean[k]` and standard deviation `sd[k]`:
///
/// ```text
/// prod_k [ Phi((eps - mean_k) / sd_k) - Phi((-eps - mean_k) / sd_k) ]
/// ```
///
/// A zero standard deviation contributes the indicator `|mean_k| < eps`.
pub fn closed_form_success_probability(
    mean: &[f64],
    sd: &[f64],
    eps: f64,
) -> Result<ProbabilityEstimate> {
    crate::principle::check_len("standard deviations", mean.len(), sd.len())?;
    check_epsilon(eps)?;
    let mut prob = 1.0;
    for (&mu, &s) in mean.iter().zip(sd) {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Domain {
                what: "standard deviation",
                value: s,
            });
        }
        prob *= if s == 0.0 {
            if mu.abs() < eps {
                1.0
            } else {
                0.0
            }
        } else {
            normal_interval((-eps - mu) / s, (eps - mu) / s).clamp(0.0, 1.0)
        };
    }
    Ok(ProbabilityEstimate::exact(prob))
}
