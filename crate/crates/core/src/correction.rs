//! Audience correction: the analyst moves their logits part of the way
//! toward what they believe the audience prefers.
//!
//! With correction degree `rho` the adjustment for principle `k` is
//! `clamp(rho * (target_k - analyst_k), min_k, max_k)`. The logit scale is
//! where distances are linear, so `rho` interpolates the expected distance
//! linearly between no correction (`rho = 0`) and full agreement (`rho = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::principle::{check_len, mean_logits, DistanceVector, FieldTable, WeightVector};
use crate::sampling::{logits_to_simplex, PopulationSpec};

/// What the analyst corrects toward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionTarget {
    /// The realized logits of the actual audience members (their mean, for
    /// a group).
    Individual,
    /// The mean of the expected logits of each distinct audience population,
    /// regardless of how many members each contributes.
    Population,
    /// The mean of the expected logits over every audience member.
    #[default]
    GroupMean,
}

/// Per-principle limits on the adjustment, in logit units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl CorrectionBounds {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        check_len("bounds.max", min.len(), max.len())?;
        for (k, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Invalid(format!(
                    "bounds for principle {} need min <= max, got [{lo}, {hi}]",
                    k + 1
                )));
            }
        }
        Ok(Self { min, max })
    }

    /// `[-limit, limit]` for every principle.
    pub fn symmetric(k: usize, limit: f64) -> Result<Self> {
        Self::new(vec![-limit.abs(); k], vec![limit.abs(); k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPlan {
    pub rho: f64,
    #[serde(default)]
    pub target: CorrectionTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<CorrectionBounds>,
}

impl CorrectionPlan {
    pub fn new(rho: f64) -> Result<Self> {
        let plan = Self {
            rho,
            target: CorrectionTarget::default(),
            bounds: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_bounds(mut self, bounds: CorrectionBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_target(mut self, target: CorrectionTarget) -> Self {
        self.target = target;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Domain {
                what: "correction degree rho",
                value: self.rho,
            });
        }
        if let Some(b) = &self.bounds {
            CorrectionBounds::new(b.min.clone(), b.max.clone())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedProfile {
    pub original_logits: Vec<f64>,
    pub corrected_logits: Vec<f64>,
    pub correction: Vec<f64>,
    /// `corrected - target`.
    pub residual_expected_distance: DistanceVector,
}

/// Moves `analyst` toward `target` by the plan's degree, within its bounds.
pub fn correct_toward(
    analyst: &[f64],
    target: &[f64],
    plan: &CorrectionPlan,
) -> Result<CorrectedProfile> {
    plan.validate()?;
    check_len("target logits", analyst.len(), target.len())?;
    if let Some(b) = &plan.bounds {
        check_len("correction bounds", analyst.len(), b.min.len())?;
    }

    let k = analyst.len();
    let mut correction = Vec::with_capacity(k);
    let mut corrected = Vec::with_capacity(k);
    let mut residual = Vec::with_capacity(k);
    for i in 0..k {
        let (a, t) = (analyst[i], target[i]);
        let mut c = plan.rho * (t - a);
        if let Some(b) = &plan.bounds {
            c = c.clamp(b.min[i], b.max[i]);
        }
        if c == 0.0 {
            c = 0.0; // no negative zero in reports
        }
        // (a - t) is exactly -(t - a), so a full correction leaves an exact 0
        let r = (a - t) + c;
        corrected.push(if c == 0.0 {
            a
        } else if r == 0.0 {
            t
        } else {
            a + c
        });
        correction.push(c);
        residual.push(r);
    }
    Ok(CorrectedProfile {
        original_logits: analyst.to_vec(),
        corrected_logits: corrected,
        correction,
        residual_expected_distance: DistanceVector::new(residual)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCorrection {
    pub target_logits: Vec<f64>,
    pub profile: CorrectedProfile,
    /// Sup norm of the expected group distance before correction.
    pub sup_before: f64,
    pub sup_after: f64,
}

/// Corrects toward the mean expected logit of the given audience
/// populations.
pub fn optimize_for_group(
    analyst: &[f64],
    audience: &[PopulationSpec],
    fields: &FieldTable,
    plan: &CorrectionPlan,
) -> Result<GroupCorrection> {
    let expected = audience
        .iter()
        .map(|p| p.effects.expected_logits(fields))
        .collect::<Result<Vec<_>>>()?;
    let target = mean_logits(&expected)?;
    correct_to_target(analyst, target, plan)
}

/// [`correct_toward`] plus before/after sup norms.
pub fn correct_to_target(
    analyst: &[f64],
    target: Vec<f64>,
    plan: &CorrectionPlan,
) -> Result<GroupCorrection> {
    let profile = correct_toward(analyst, &target, plan)?;
    let sup_before = analyst
        .iter()
        .zip(&target)
        .fold(0.0_f64, |m, (a, t)| m.max((a - t).abs()));
    Ok(GroupCorrection {
        target_logits: target,
        sup_after: profile.residual_expected_distance.sup_norm(),
        sup_before,
        profile,
    })
}

/// Integer weights summing to `total` that round `total * pi`, where `pi`
/// is the simplex image of `logits`. Largest-remainder rounding; ties go to
/// the lowest principle index.
pub fn allocate_weights(total: u64, logits: &[f64]) -> Result<WeightVector> {
    if total == 0 {
        return Err(Error::Invalid("weight total must be at least 1".into()));
    }
    let probs = logits_to_simplex(logits)?;
    allocate_proportions(total, &probs)
}

/// Largest-remainder rounding of `total * probs`.
pub fn allocate_proportions(total: u64, probs: &[f64]) -> Result<WeightVector> {
    let n = total as f64;
    let quotas: Vec<f64> = probs.iter().map(|p| n * p).collect();
    let mut weights: Vec<u64> = quotas.iter().map(|q| q.floor().max(0.0) as u64).collect();
    let assigned: u64 = weights.iter().sum();
    if assigned > total {
        return Err(Error::Runtime(format!(
            "rounded quotas exceed the total: {assigned} > {total}"
        )));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for &i in order.iter().cycle().take((total - assigned) as usize) {
        weights[i] += 1;
    }
    WeightVector::new(weights)
}
