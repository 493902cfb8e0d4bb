//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use analysis_success::correction::{correct_toward, CorrectionBounds, CorrectionPlan};
use analysis_success::engine::{run_correct, run_sweep, SweepParam};
use analysis_success::montecarlo::{Experiment, Participant};
use analysis_success::principle::{
    expected_distance, pairwise_distance, person_logit, CoefficientMatrix, FieldParams, FieldTable,
    FixedEffects, PersonProfile, ResourceVector, Role,
};
use analysis_success::scenario::parse_scenario_value;
use analysis_success::{
    group_distance, group_success_report, lp_mean_norm, pairwise_success_report, sample_weights,
    strong_success, weak_success, DeviationDistribution, DeviationSpec, DistanceVector, NormOrder,
    PopulationSpec, StreamSeed, SuccessCriteria,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const K: usize = 6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("definition consistency", definition_consistency),
        ("expectation law", expectation_law),
        ("group behavior", group_behavior),
        ("multinomial correctness", multinomial_correctness),
        ("correction", correction),
        (
            "same-field cancellation and shift invariance",
            cancellation_and_shift,
        ),
        ("reproducibility", reproducibility),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {} [PRIMARY] {}: {} ({}; {:.1}s)",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} primary criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn one_field_table(fields: Vec<FieldParams>) -> FieldTable {
    FieldTable::new(K, fields).unwrap()
}

fn population(field: &str, scale: Vec<f64>, distribution: DeviationDistribution) -> Participant {
    Participant::Population(PopulationSpec::new(
        FixedEffects::field_only(field, K),
        DeviationSpec::new(distribution, scale).unwrap(),
    ))
}

/// Distance mean `mu` in every principle with total standard deviation
/// `sd`, split evenly between analyst and audience.
fn gaussian_experiment(mu: f64, sd: f64) -> Experiment {
    let fields = one_field_table(vec![
        FieldParams::fixed("analyst", vec![mu; K]).unwrap(),
        FieldParams::fixed("audience", vec![0.0; K]).unwrap(),
    ]);
    let side = sd / 2f64.sqrt();
    Experiment::new(
        fields,
        population("analyst", vec![side; K], DeviationDistribution::Normal),
        vec![population(
            "audience",
            vec![side; K],
            DeviationDistribution::Normal,
        )],
    )
    .unwrap()
}

fn oracle_equivalence() -> Outcome {
    const M: u64 = 100_000;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut configs = 0;
    for mu in [-1.0, 0.0, 1.0] {
        for sd in [0.25, 1.0, 2.0] {
            for eps in [0.5, 1.96, 4.0] {
                configs += 1;
                let exp = gaussian_experiment(mu, sd);
                let criteria = SuccessCriteria::new(eps).unwrap();
                let cf = exp.closed_form(eps).unwrap().unwrap().estimate;
                let mc = exp
                    .monte_carlo(&criteria, M, 20_240_601)
                    .unwrap()
                    .strong
                    .estimate;
                let se = (cf * (1.0 - cf) / M as f64).sqrt();
                let gap = (mc - cf).abs();
                if se > 0.0 {
                    worst = worst.max(gap / se);
                }
                if gap > 3.0 * se {
                    bad.push(format!("mu={mu} sd={sd} eps={eps}: mc {mc} cf {cf}"));
                }
            }
        }
    }

    let exp = gaussian_experiment(0.0, 1.0);
    let cf = exp.closed_form(1.96).unwrap().unwrap().estimate;
    let mc = exp
        .monte_carlo(&SuccessCriteria::new(1.96).unwrap(), M, 20_240_601)
        .unwrap()
        .strong
        .estimate;
    let se = (0.7351_f64 * (1.0 - 0.7351) / M as f64).sqrt();
    let canonical = (mc - 0.7351).abs() <= 3.0 * se && (cf - 0.7351).abs() <= 3.0 * se;
    if !canonical {
        bad.push(format!("canonical point: mc {mc} cf {cf}"));
    }
    outcome(
        bad.is_empty(),
        format!(
            "{configs} configs at M={M}, worst |mc-cf|/se = {worst:.2}; canonical cf {cf:.6} mc {mc:.5}{}",
            if bad.is_empty() { String::new() } else { format!("; failures: {}", bad.join(", ")) }
        ),
    )
}

fn definition_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..1000 {
        let scale = rng.random_range(0.01..5.0);
        let d: Vec<f64> = (0..K).map(|_| rng.random_range(-scale..scale)).collect();
        let eps = rng.random_range(0.01..5.0);
        let d = DistanceVector::new(d).unwrap();
        let strong = strong_success(&d, eps);
        let mut last = 0.0;
        for p in [1.0, 2.0, 4.0] {
            let p = NormOrder::new(p).unwrap();
            if strong && !weak_success(&d, eps, p) {
                violations += 1;
            }
            let n = lp_mean_norm(d.as_slice(), p);
            if n < last {
                violations += 1;
            }
            last = n;
        }
        if lp_mean_norm(d.as_slice(), NormOrder::Infinity) < last {
            violations += 1;
        }
        if weak_success(&d, eps, NormOrder::Infinity) != strong {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("1000 vectors, {violations} violations"),
    )
}

fn expectation_law() -> Outcome {
    const M: u64 = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for s in 0..5 {
        let la: Vec<f64> = (0..K).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lb: Vec<f64> = (0..K).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fields = one_field_table(vec![
            FieldParams::fixed("a", la).unwrap(),
            FieldParams::fixed("b", lb).unwrap(),
        ]);
        let hours = rng.random_range(0.0..20.0);
        let coef = |rng: &mut ChaCha8Rng| {
            CoefficientMatrix::from_rows(
                (0..K)
                    .map(|_| vec![("hours", rng.random_range(-0.2..0.2))])
                    .collect::<Vec<_>>(),
            )
            .unwrap()
        };
        let analyst_effects = FixedEffects::new(
            "a",
            ResourceVector::from_pairs([("hours", hours)]).unwrap(),
            coef(&mut rng),
        );
        let audience_effects = FixedEffects::new(
            "b",
            ResourceVector::from_pairs([("hours", rng.random_range(0.0..20.0))]).unwrap(),
            coef(&mut rng),
        );
        let dist = if s % 2 == 0 {
            DeviationDistribution::Normal
        } else {
            DeviationDistribution::Uniform
        };
        let scale = |rng: &mut ChaCha8Rng| (0..K).map(|_| rng.random_range(0.1..1.5)).collect();
        let analyst = Participant::Population(PopulationSpec::new(
            analyst_effects,
            DeviationSpec::new(dist, scale(&mut rng)).unwrap(),
        ));
        let members = 1 + s;
        let audience = (0..members)
            .map(|_| {
                Participant::Population(PopulationSpec::new(
                    audience_effects.clone(),
                    DeviationSpec::new(dist, scale(&mut rng)).unwrap(),
                ))
            })
            .collect();
        let exp = Experiment::new(fields, analyst, audience).unwrap();
        let expected = exp.expected_distance().unwrap();
        let sd = exp.distance_sd();
        let summary = exp
            .monte_carlo(&SuccessCriteria::new(1.0).unwrap(), M, 30 + s as u64)
            .unwrap();
        for ((mean, e), s) in summary
            .mean_distance
            .iter()
            .zip(expected.as_slice())
            .zip(&sd)
        {
            let z = (mean - e).abs() / (s / (M as f64).sqrt());
            worst = worst.max(z);
            if z > 3.0 {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0,
        format!(
            "5 scenarios x {K} principles at M={M}, worst |z| = {worst:.2}, {bad} outside 3 sd"
        ),
    )
}

fn group_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fields = one_field_table(vec![
        FieldParams::fixed("a", (0..K).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
        FieldParams::fixed("b", (0..K).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
    ]);
    let criteria = SuccessCriteria::new(1.0).unwrap();
    let mut mismatches = 0;
    for _ in 0..200 {
        let person = |field: &str, role, rng: &mut ChaCha8Rng| {
            let dev = (0..K).map(|_| rng.random_range(-1.0..1.0)).collect();
            PersonProfile::new(role, FixedEffects::field_only(field, K), dev).unwrap()
        };
        let a = person("a", Role::Analyst, &mut rng);
        let b = person("b", Role::Audience, &mut rng);
        let pair = pairwise_success_report(&a, &b, &fields, &criteria).unwrap();
        let group = group_success_report(&a, std::slice::from_ref(&b), &fields, &criteria).unwrap();
        let direct = pairwise_distance(
            &person_logit(&a, &fields).unwrap(),
            &person_logit(&b, &fields).unwrap(),
        )
        .unwrap();
        let grouped = group_distance(
            &person_logit(&a, &fields).unwrap(),
            &[person_logit(&b, &fields).unwrap()],
        )
        .unwrap();
        if pair != group || direct != grouped || group.distance != direct {
            mismatches += 1;
        }
    }

    let scenario = parse_scenario_value(json!({
        "fields": [
            { "id": "a", "lambda": vec![0.0; K] },
            { "id": "b", "lambda": vec![0.0; K], "deviation_scale": vec![1.0; K] }
        ],
        "analyst": { "field": "a" },
        "audience": [{ "field": "b" }],
        "criteria": { "epsilon": 1.0 },
        "mc": { "replicates": 2000, "seed": 5 }
    }))
    .unwrap();
    let grid = [10.0, 100.0, 1000.0, 10000.0];
    let table = run_sweep(&scenario, SweepParam::AudienceSize, &grid).unwrap();
    let points: Vec<(f64, f64)> = table
        .points
        .iter()
        .map(|p| {
            let v = &p
                .report
                .monte_carlo
                .as_ref()
                .unwrap()
                .audience_mean_deviation_variance;
            (p.value.ln(), (v.iter().sum::<f64>() / v.len() as f64).ln())
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    outcome(
        mismatches == 0 && (slope + 1.0).abs() <= 0.1,
        format!("200 group-of-one cases, {mismatches} mismatches; log-log variance slope over J=10..10000 is {slope:.4}"),
    )
}

fn multinomial_correctness() -> Outcome {
    const DRAWS: u64 = 200_000;
    let mut rng = StreamSeed::new(6, "acceptance/multinomial").rng();
    let mut counts = [0u64; 4];
    let mut bad_sums = 0;
    for _ in 0..DRAWS {
        let w = sample_weights(3, &[0.5, 0.5], &mut rng).unwrap();
        if w.weights.iter().sum::<u64>() != 3 {
            bad_sums += 1;
        }
        counts[w.weights[0] as usize] += 1;
    }
    // brute force: enumerate all 2^3 unit assignments
    let mut exact = [0.0; 4];
    for mask in 0u32..8 {
        exact[mask.count_ones() as usize] += 0.125;
    }
    let worst = (0..4)
        .map(|i| (counts[i] as f64 / DRAWS as f64 - exact[i]).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.005 && bad_sums == 0,
        format!("{DRAWS} draws, max pmf error {worst:.5}, {bad_sums} draws not summing to N"),
    )
}

fn correction() -> Outcome {
    let scenario = parse_scenario_value(json!({
        "fields": [
            { "id": "a", "lambda": [0.8, 1.0, 1.2, 0.2, 0.5, 1.1], "deviation_scale": vec![0.5; K] },
            { "id": "b", "lambda": [1.5, -0.2, 0.3, -0.5, 0.9, 0.4], "deviation_scale": vec![0.7; K] }
        ],
        "analyst": { "field": "a" },
        "audience": [{ "field": "b", "count": 7 }],
        "criteria": { "epsilon": 0.75, "potential_tolerance": 0.0 },
        "mc": { "replicates": 1000, "seed": 8 },
        "correction": { "rho": 1.0 }
    }))
    .unwrap();
    let full = run_correct(&scenario).unwrap().report;
    let full_ok = full.success.expected_sup_norm < 1e-12 && full.success.potential;

    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let sweep = run_sweep(&scenario, SweepParam::Rho, &grid).unwrap();
    let sups: Vec<f64> = sweep
        .points
        .iter()
        .map(|p| p.report.success.expected_sup_norm)
        .collect();
    let mut monotone = sups.windows(2).all(|w| w[1] <= w[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let a: Vec<f64> = (0..K).map(|_| rng.random_range(-5.0..5.0)).collect();
        let t: Vec<f64> = (0..K).map(|_| rng.random_range(-5.0..5.0)).collect();
        let bounds = CorrectionBounds::symmetric(K, rng.random_range(0.0..4.0)).unwrap();
        let mut last = f64::INFINITY;
        for rho in grid {
            let plan = CorrectionPlan::new(rho)
                .unwrap()
                .with_bounds(bounds.clone());
            let r = correct_toward(&a, &t, &plan)
                .unwrap()
                .residual_expected_distance
                .sup_norm();
            monotone &= r <= last;
            last = r;
        }
    }
    outcome(
        full_ok && monotone,
        format!(
            "rho=1 sup |E[D]| = {:e}, potential at tau=0: {}; residual sup over rho grid {:?}; 500 random bounded cases monotone: {monotone}",
            full.success.expected_sup_norm, full.success.potential, sups
        ),
    )
}

fn cancellation_and_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut nonzero = 0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..K).map(|_| rng.random_range(-4.0..4.0)).collect()
        };
        let fields = one_field_table(vec![
            FieldParams::fixed("a", lambda(&mut rng)).unwrap(),
            FieldParams::fixed("b", lambda(&mut rng)).unwrap(),
        ]);
        let resources = ResourceVector::from_pairs([
            ("hours", rng.random_range(0.0..40.0)),
            ("staff", rng.random_range(0.0..5.0)),
        ])
        .unwrap();
        let coefs = CoefficientMatrix::from_rows(
            (0..K)
                .map(|_| {
                    vec![
                        ("hours", rng.random_range(-0.3..0.3)),
                        ("staff", rng.random_range(-0.3..0.3)),
                    ]
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let same = FixedEffects::new("a", resources.clone(), coefs.clone());
        if expected_distance(&same, &same.clone(), &fields).unwrap() != DistanceVector::zeros(K) {
            nonzero += 1;
        }

        let other = FixedEffects::new("b", resources, coefs);
        let shift = vec![rng.random_range(-10.0..10.0); K];
        let shifted = fields.shifted(&shift).unwrap();
        let before = expected_distance(&same, &other, &fields).unwrap();
        let after = expected_distance(&same, &other, &shifted).unwrap();
        let dev = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..K).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let a = PersonProfile::new(Role::Analyst, same.clone(), dev(&mut rng)).unwrap();
        let b = PersonProfile::new(Role::Audience, other.clone(), dev(&mut rng)).unwrap();
        let realized = |f: &FieldTable| {
            pairwise_distance(&person_logit(&a, f).unwrap(), &person_logit(&b, f).unwrap()).unwrap()
        };
        let (rb, ra) = (realized(&fields), realized(&shifted));
        for (x, y) in before
            .as_slice()
            .iter()
            .zip(after.as_slice())
            .chain(rb.as_slice().iter().zip(ra.as_slice()))
        {
            worst_shift = worst_shift.max((x - y).abs());
        }
    }
    outcome(
        nonzero == 0 && worst_shift <= 1e-12,
        format!(
            "1000 cases: {nonzero} nonzero same-field distances, max shift change {worst_shift:e}"
        ),
    )
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn reproducibility() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_analysis-success");
    let root = workspace_root();
    let runs: [&[&str]; 3] = [
        &[
            "evaluate",
            "scenarios/golden.json",
            "--seed",
            "42",
            "--replicates",
            "20000",
        ],
        &["correct", "scenarios/correction.json", "--seed", "42"],
        &[
            "evaluate",
            "scenarios/group.json",
            "--format",
            "table",
            "--seed",
            "42",
        ],
    ];
    let mut same = 0;
    let mut detail = Vec::new();
    for args in runs {
        let run = || {
            Command::new(bin)
                .args(args)
                .current_dir(&root)
                .output()
                .unwrap()
        };
        let (a, b) = (run(), run());
        let ok = a.status.success()
            && b.status.success()
            && !a.stdout.is_empty()
            && a.stdout == b.stdout;
        if ok {
            same += 1;
        }
        detail.push(format!("{} {}: {} bytes", args[0], args[1], a.stdout.len()));
    }
    outcome(
        same == runs.len(),
        format!(
            "{same}/{} command pairs byte-identical ({})",
            runs.len(),
            detail.join(", ")
        ),
    )
}
