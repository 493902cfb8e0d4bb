//! Seeded randomness: individual deviations, multinomial weight draws, and
//! whole profiles sampled from a population description.
//!
//! # Stream discipline
//!
//! Every sampled entity owns a named stream. The stream key is the SHA-256 of
//! the run seed and the entity label, so adding an entity never perturbs the
//! draws of any other. Replicates of the same entity use distinct ChaCha
//! stream ids under one key, which keeps Monte Carlo results independent of
//! evaluation order and thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::principle::{
    check_len, inverse_logit, FieldTable, FixedEffects, PersonProfile, Role, WeightVector,
};

pub type StreamRng = ChaCha8Rng;

const STREAM_DOMAIN: &[u8] = b"analysis-success/stream/v1";

/// Seed plus stream label; the pair fully determines a draw sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSeed {
    seed: u64,
    label: String,
    key: [u8; 32],
}

impl StreamSeed {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update(seed.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        Self {
            seed,
            label,
            key: hasher.finalize().into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Stream for a sub-entity, labelled `<label>/<suffix>`.
    pub fn child(&self, suffix: impl std::fmt::Display) -> Self {
        Self::new(self.seed, format!("{}/{}", self.label, suffix))
    }

    pub fn rng(&self) -> StreamRng {
        self.replicate(0)
    }

    /// Independent generator for replicate `index` of this entity.
    pub fn replicate(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationDistribution {
    #[default]
    Normal,
    Uniform,
}

/// Mean-zero deviation law with a per-principle standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub distribution: DeviationDistribution,
    pub scale: Vec<f64>,
}

impl DeviationSpec {
    pub fn new(distribution: DeviationDistribution, scale: Vec<f64>) -> Result<Self> {
        if let Some(&v) = scale.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain {
                what: "deviation scale",
                value: v,
            });
        }
        Ok(Self {
            distribution,
            scale,
        })
    }

    pub fn normal(scale: Vec<f64>) -> Result<Self> {
        Self::new(DeviationDistribution::Normal, scale)
    }

    pub fn zero(k: usize) -> Self {
        Self {
            distribution: DeviationDistribution::Normal,
            scale: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    /// True when every component is identically zero.
    pub fn is_degenerate(&self) -> bool {
        self.scale.iter().all(|s| *s == 0.0)
    }

    pub fn variance(&self) -> Vec<f64> {
        self.scale.iter().map(|s| s * s).collect()
    }

    /// Draws one deviation vector. One underlying variate is consumed per
    /// principle even where the scale is zero, so streams stay aligned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.scale
            .iter()
            .map(|&s| {
                let unit = match self.distribution {
                    DeviationDistribution::Normal => rng.sample::<f64, _>(StandardNormal),
                    // uniform on [-sqrt(3), sqrt(3)) has unit variance
                    DeviationDistribution::Uniform => {
                        3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0)
                    }
                };
                if s == 0.0 {
                    0.0
                } else {
                    s * unit
                }
            })
            .collect()
    }
}

pub fn sample_deviation<R: Rng + ?Sized>(spec: &DeviationSpec, rng: &mut R) -> Vec<f64> {
    spec.sample(rng)
}

/// Population of analysts or audience members sharing fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(flatten)]
    pub effects: FixedEffects,
    pub deviation: DeviationSpec,
}

impl PopulationSpec {
    pub fn new(effects: FixedEffects, deviation: DeviationSpec) -> Self {
        Self { effects, deviation }
    }

    /// Population whose deviation law is the field's own: normal with the
    /// field's deviation scale.
    pub fn from_field(effects: FixedEffects, fields: &FieldTable) -> Result<Self> {
        let field = fields.get(&effects.field_id)?;
        let deviation = DeviationSpec::normal(field.deviation_scale.clone())?;
        Ok(Self { effects, deviation })
    }

    pub fn validate(&self, fields: &FieldTable) -> Result<()> {
        check_len("deviation scale", fields.k(), self.deviation.len())?;
        self.effects.expected_logits(fields).map(|_| ())
    }
}

/// Draws a person from `pop`: fixed effects copied, deviation freshly drawn.
pub fn sample_person<R: Rng + ?Sized>(
    role: Role,
    pop: &PopulationSpec,
    fields: &FieldTable,
    rng: &mut R,
) -> Result<PersonProfile> {
    pop.validate(fields)?;
    let deviation = pop.deviation.sample(rng);
    PersonProfile::new(role, pop.effects.clone(), deviation)
}

/// Normalized inverse logits: one way to put independently modelled
/// per-principle logits on the probability simplex.
pub fn logits_to_simplex(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Invalid("at least one logit is required".into()));
    }
    let raw = logits
        .iter()
        .map(|&x| inverse_logit(x))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// One multinomial draw of `total` units over `probs`, by sequential
/// conditional binomials.
pub fn sample_weights<R: Rng + ?Sized>(
    total: u64,
    probs: &[f64],
    rng: &mut R,
) -> Result<WeightVector> {
    if total == 0 {
        return Err(Error::Invalid("weight total must be at least 1".into()));
    }
    if probs.is_empty() {
        return Err(Error::Invalid(
            "at least one probability is required".into(),
        ));
    }
    if let Some(&p) = probs.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(Error::Domain {
            what: "probability",
            value: p,
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "probabilities must sum to 1 (within 1e-9), got {sum}"
        )));
    }

    let mut weights = Vec::with_capacity(probs.len());
    let mut remaining = total;
    let mut mass = 1.0_f64;
    for (k, &p) in probs.iter().enumerate() {
        if k + 1 == probs.len() {
            weights.push(remaining);
            break;
        }
        let draw = if remaining == 0 || p == 0.0 {
            0
        } else if p >= mass {
            remaining
        } else {
            let conditional = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, conditional)
                .map_err(|e| Error::Runtime(format!("binomial draw: {e}")))?
                .sample(rng)
        };
        weights.push(draw);
        remaining -= draw;
        mass -= p;
    }
    WeightVector::new(weights)
}
