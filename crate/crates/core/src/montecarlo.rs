//! Monte Carlo estimation of success probabilities.
//!
//! An [`Experiment`] is an analyst and an expanded audience (one entry per
//! member). Each replicate redraws every random deviation from its own
//! stream, so the result depends only on the seed and the replicate count.
//! Replicates are processed in fixed-size chunks and the chunk summaries are
//! merged in chunk order; float results are therefore identical regardless of
//! how many threads run the chunks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::principle::{
    check_len, expected_group_distance, group_distance, mean_logits, person_logit, DistanceVector,
    FieldTable, FixedEffects, PersonProfile, Role,
};
use crate::sampling::{DeviationDistribution, PopulationSpec, StreamSeed};
use crate::success::{
    closed_form_success_probability, lp_mean_norm, sup_norm, ProbabilityEstimate, SuccessCriteria,
};

/// Smallest replicate count for which a binomial standard error is reported.
pub const MIN_REPLICATES: u64 = 100;

const CHUNK: u64 = 2048;

/// Either a realized person or a population to draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Participant {
    Fixed(PersonProfile),
    Population(PopulationSpec),
}

impl Participant {
    pub fn effects(&self) -> &FixedEffects {
        match self {
            Participant::Fixed(p) => &p.effects,
            Participant::Population(p) => &p.effects,
        }
    }

    pub fn validate(&self, fields: &FieldTable) -> Result<()> {
        match self {
            Participant::Fixed(p) => person_logit(p, fields).map(|_| ()),
            Participant::Population(p) => p.validate(fields),
        }
    }

    /// Logits with every random component at zero: the expected logits plus
    /// any realized deviation a fixed person carries.
    fn deterministic_logits(&self, fields: &FieldTable) -> Result<Vec<f64>> {
        match self {
            Participant::Fixed(p) => person_logit(p, fields),
            Participant::Population(p) => p.effects.expected_logits(fields),
        }
    }

    fn random_part(&self) -> Option<&PopulationSpec> {
        match self {
            Participant::Population(p) if !p.deviation.is_degenerate() => Some(p),
            _ => None,
        }
    }

    /// One realization: fixed persons as-is, populations drawn from `stream`.
    pub fn realize(
        &self,
        role: Role,
        fields: &FieldTable,
        stream: &StreamSeed,
    ) -> Result<PersonProfile> {
        match self {
            Participant::Fixed(p) => Ok(PersonProfile { role, ..p.clone() }),
            Participant::Population(p) => {
                crate::sampling::sample_person(role, p, fields, &mut stream.rng())
            }
        }
    }
}

/// Which strong/weak test a probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuccessKind {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub strong: ProbabilityEstimate,
    pub weak: ProbabilityEstimate,
    /// Empirical mean of the sampled distance per principle.
    pub mean_distance: Vec<f64>,
    /// Sample variance of the audience-mean deviation per principle.
    pub audience_mean_deviation_variance: Vec<f64>,
}

struct RandomEntity {
    stream: StreamSeed,
    spec: PopulationSpec,
}

/// Analyst plus audience members, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Experiment {
    fields: FieldTable,
    analyst: Participant,
    audience: Vec<Participant>,
    offset: Vec<f64>,
}

impl Experiment {
    pub fn new(
        fields: FieldTable,
        analyst: Participant,
        audience: Vec<Participant>,
    ) -> Result<Self> {
        if audience.is_empty() {
            return Err(Error::Invalid(
                "audience must have at least one member".into(),
            ));
        }
        analyst.validate(&fields)?;
        for member in &audience {
            member.validate(&fields)?;
        }
        let offset = vec![0.0; fields.k()];
        Ok(Self {
            fields,
            analyst,
            audience,
            offset,
        })
    }

    /// Adds `offset` to every distance this experiment produces: an
    /// analyst-side correction applied to the distance itself.
    pub fn with_offset(mut self, offset: Vec<f64>) -> Result<Self> {
        check_len("correction", self.k(), offset.len())?;
        self.offset = offset;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.fields.k()
    }

    pub fn fields(&self) -> &FieldTable {
        &self.fields
    }

    pub fn analyst(&self) -> &Participant {
        &self.analyst
    }

    pub fn audience(&self) -> &[Participant] {
        &self.audience
    }

    pub fn audience_size(&self) -> usize {
        self.audience.len()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    fn apply_offset(&self, d: DistanceVector) -> Result<DistanceVector> {
        if self.offset.iter().all(|c| *c == 0.0) {
            return Ok(d);
        }
        DistanceVector::new(
            d.as_slice()
                .iter()
                .zip(&self.offset)
                .map(|(d, c)| d + c)
                .collect(),
        )
    }

    pub fn expected_analyst_logits(&self) -> Result<Vec<f64>> {
        self.analyst.effects().expected_logits(&self.fields)
    }

    /// Mean of the audience members' expected logits.
    pub fn expected_audience_mean(&self) -> Result<Vec<f64>> {
        let alphas = self
            .audience
            .iter()
            .map(|a| a.effects().expected_logits(&self.fields))
            .collect::<Result<Vec<_>>>()?;
        mean_logits(&alphas)
    }

    /// Expected (group) distance, offset included.
    pub fn expected_distance(&self) -> Result<DistanceVector> {
        let audience: Vec<&FixedEffects> = self.audience.iter().map(|a| a.effects()).collect();
        let d = expected_group_distance(self.analyst.effects(), &audience, &self.fields)?;
        self.apply_offset(d)
    }

    /// Distance with every random deviation at zero, offset included. This
    /// is the mean of the sampled distance.
    pub fn deterministic_distance(&self) -> Result<DistanceVector> {
        let psi = self.analyst.deterministic_logits(&self.fields)?;
        let alphas = self
            .audience
            .iter()
            .map(|a| a.deterministic_logits(&self.fields))
            .collect::<Result<Vec<_>>>()?;
        let d = group_distance(&psi, &alphas)?;
        self.apply_offset(d)
    }

    /// Per-principle standard deviation of the sampled distance:
    /// `sqrt(var(analyst) + sum_j var(member_j) / J^2)`.
    pub fn distance_sd(&self) -> Vec<f64> {
        let j = self.audience.len() as f64;
        let mut var = vec![0.0; self.k()];
        if let Some(p) = self.analyst.random_part() {
            var.iter_mut()
                .zip(p.deviation.variance())
                .for_each(|(v, s2)| *v += s2);
        }
        for member in &self.audience {
            if let Some(p) = member.random_part() {
                var.iter_mut()
                    .zip(p.deviation.variance())
                    .for_each(|(v, s2)| *v += s2 / (j * j));
            }
        }
        var.into_iter().map(f64::sqrt).collect()
    }

    /// True when every random component is normal, so the sampled distance
    /// is an independent normal in each principle.
    pub fn is_gaussian(&self) -> bool {
        std::iter::once(&self.analyst)
            .chain(&self.audience)
            .filter_map(Participant::random_part)
            .all(|p| p.deviation.distribution == DeviationDistribution::Normal)
    }

    pub fn has_randomness(&self) -> bool {
        std::iter::once(&self.analyst)
            .chain(&self.audience)
            .any(|p| p.random_part().is_some())
    }

    /// Exact strong-success probability; `None` unless [`Self::is_gaussian`].
    pub fn closed_form(&self, eps: f64) -> Result<Option<ProbabilityEstimate>> {
        if !self.is_gaussian() {
            return Ok(None);
        }
        let mean = self.deterministic_distance()?;
        closed_form_success_probability(mean.as_slice(), &self.distance_sd(), eps).map(Some)
    }

    /// One realized analyst and audience, drawn from streams labelled
    /// `<label>/analyst` and `<label>/audience/<j>`.
    pub fn realize(&self, seed: u64, label: &str) -> Result<(PersonProfile, Vec<PersonProfile>)> {
        let root = StreamSeed::new(seed, label);
        let analyst = self
            .analyst
            .realize(Role::Analyst, &self.fields, &root.child("analyst"))?;
        let audience = self
            .audience
            .iter()
            .enumerate()
            .map(|(j, a)| {
                a.realize(
                    Role::Audience,
                    &self.fields,
                    &root.child(format_args!("audience/{j}")),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((analyst, audience))
    }

    /// Realized distance for the draw made by [`Self::realize`], offset
    /// included.
    pub fn realized_distance(
        &self,
        analyst: &PersonProfile,
        audience: &[PersonProfile],
    ) -> Result<DistanceVector> {
        let psi = person_logit(analyst, &self.fields)?;
        let alphas = audience
            .iter()
            .map(|a| person_logit(a, &self.fields))
            .collect::<Result<Vec<_>>>()?;
        self.apply_offset(group_distance(&psi, &alphas)?)
    }

    /// Draws the distance vector of replicate `index`.
    pub fn sample_distance(&self, seed: u64, index: u64) -> Result<Vec<f64>> {
        let sampler = Sampler::new(self, seed)?;
        let mut d = vec![0.0; self.k()];
        let mut eta_mean = vec![0.0; self.k()];
        sampler.draw(index, &mut d, &mut eta_mean);
        Ok(d)
    }

    /// Strong and weak success frequencies over `replicates` draws, plus
    /// distance and audience-deviation diagnostics.
    pub fn monte_carlo(
        &self,
        criteria: &SuccessCriteria,
        replicates: u64,
        seed: u64,
    ) -> Result<MonteCarloSummary> {
        criteria.validate()?;
        if replicates < MIN_REPLICATES {
            return Err(Error::Invalid(format!(
                "at least {MIN_REPLICATES} replicates are required, got {replicates}"
            )));
        }
        let sampler = Sampler::new(self, seed)?;
        let k = self.k();
        let chunks = replicates.div_ceil(CHUNK);
        let partials: Vec<Accumulator> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(replicates);
                let mut acc = Accumulator::new(k);
                let mut d = vec![0.0; k];
                let mut eta_mean = vec![0.0; k];
                for r in start..end {
                    sampler.draw(r, &mut d, &mut eta_mean);
                    acc.push(&d, &eta_mean, criteria);
                }
                acc
            })
            .collect();
        let total = partials
            .into_iter()
            .reduce(Accumulator::merge)
            .expect("at least one chunk");
        Ok(total.finish())
    }

    pub fn estimate_success_probability(
        &self,
        criteria: &SuccessCriteria,
        kind: SuccessKind,
        replicates: u64,
        seed: u64,
    ) -> Result<ProbabilityEstimate> {
        let summary = self.monte_carlo(criteria, replicates, seed)?;
        Ok(match kind {
            SuccessKind::Strong => summary.strong,
            SuccessKind::Weak => summary.weak,
        })
    }
}

/// Precomputed per-entity streams and the deterministic part of `D`.
struct Sampler {
    base: Vec<f64>,
    analyst: Option<RandomEntity>,
    audience: Vec<RandomEntity>,
    audience_size: f64,
}

impl Sampler {
    fn new(exp: &Experiment, seed: u64) -> Result<Self> {
        let entity = |p: &Participant, label: String| {
            p.random_part().map(|spec| RandomEntity {
                stream: StreamSeed::new(seed, label),
                spec: spec.clone(),
            })
        };
        Ok(Self {
            base: exp.deterministic_distance()?.into_inner(),
            analyst: entity(&exp.analyst, "mc/analyst".into()),
            audience: exp
                .audience
                .iter()
                .enumerate()
                .filter_map(|(j, a)| entity(a, format!("mc/audience/{j}")))
                .collect(),
            audience_size: exp.audience.len() as f64,
        })
    }

    fn draw(&self, index: u64, d: &mut [f64], eta_mean: &mut [f64]) {
        d.copy_from_slice(&self.base);
        eta_mean.iter_mut().for_each(|e| *e = 0.0);
        if let Some(a) = &self.analyst {
            let delta = a.spec.deviation.sample(&mut a.stream.replicate(index));
            d.iter_mut().zip(delta).for_each(|(d, x)| *d += x);
        }
        for m in &self.audience {
            let eta = m.spec.deviation.sample(&mut m.stream.replicate(index));
            eta_mean.iter_mut().zip(eta).for_each(|(e, x)| *e += x);
        }
        for (d, e) in d.iter_mut().zip(eta_mean.iter_mut()) {
            *e /= self.audience_size;
            *d -= *e;
        }
    }
}

/// Per-chunk tallies; merged in chunk order with Chan's pairwise update.
struct Accumulator {
    n: u64,
    strong: u64,
    weak: u64,
    d_mean: Vec<f64>,
    eta_mean: Vec<f64>,
    eta_m2: Vec<f64>,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self {
            n: 0,
            strong: 0,
            weak: 0,
            d_mean: vec![0.0; k],
            eta_mean: vec![0.0; k],
            eta_m2: vec![0.0; k],
        }
    }

    fn push(&mut self, d: &[f64], eta: &[f64], criteria: &SuccessCriteria) {
        self.n += 1;
        let n = self.n as f64;
        if sup_norm(d) < criteria.epsilon {
            self.strong += 1;
        }
        if lp_mean_norm(d, criteria.p) < criteria.weak_epsilon() {
            self.weak += 1;
        }
        for (m, x) in self.d_mean.iter_mut().zip(d) {
            *m += (x - *m) / n;
        }
        for ((m, m2), x) in self.eta_mean.iter_mut().zip(&mut self.eta_m2).zip(eta) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.n == 0 {
            return self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for (a, b) in self.d_mean.iter_mut().zip(&other.d_mean) {
            *a += (b - *a) * nb / n;
        }
        for (((ma, m2a), mb), m2b) in self
            .eta_mean
            .iter_mut()
            .zip(&mut self.eta_m2)
            .zip(&other.eta_mean)
            .zip(&other.eta_m2)
        {
            let delta = mb - *ma;
            *ma += delta * nb / n;
            *m2a += m2b + delta * delta * na * nb / n;
        }
        self.n += other.n;
        self.strong += other.strong;
        self.weak += other.weak;
        self
    }

    fn finish(self) -> MonteCarloSummary {
        let denom = (self.n.saturating_sub(1)).max(1) as f64;
        MonteCarloSummary {
            strong: ProbabilityEstimate::from_counts(self.strong, self.n),
            weak: ProbabilityEstimate::from_counts(self.weak, self.n),
            mean_distance: self.d_mean,
            audience_mean_deviation_variance: self
                .eta_m2
                .into_iter()
                .map(|m2| m2 / denom)
                .collect(),
        }
    }
}
