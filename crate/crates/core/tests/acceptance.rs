//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use smr_core::attributes::{extract_attributes, SmoothingParams};
use smr_core::eval::{compare_reports, evaluate_curve, pr_curve, EvalReport, ScoredMatch};
use smr_core::filters::{remove_matches, FilterConfig};
use smr_core::labeling::label_queries;
use smr_core::matrixio::{normalize_slice, slice_query, DistanceMatrix, QuerySlice};
use smr_core::mlp::{predict, smote_oversample, FeatureSelection, MlpModel, Sample};
use smr_core::pipeline::{
    false_positive_count, prepare_battery, removal_audit, run_experiment, test_macro_f1, train_pooled, ExperimentReport,
    PipelineConfig, Prepared,
};
use smr_core::seqmatch::sequence_match;
use smr_core::synth::{generate, scenario_battery, ScenarioSpec};

type Outcome = (bool, String);

fn seqmatch_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = DistanceMatrix::from_fn(64, 64, |_, _| rng.random_range(0.0..2.0)).unwrap();
        for l in [2, 4, 6, 8, 10] {
            let s = sequence_match(&d, l).unwrap();
            for i in l - 1..64 {
                for j in l - 1..64 {
                    let mut sum = 0.0;
                    for x in 0..l {
                        sum += d.get(i - x, j - x);
                    }
                    worst = worst.max((s.get(i, j) - sum).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (worst <= 1e-6 && secs < 10.0, format!("max |delta| {worst:.2e}, {secs:.2} s"))
}

fn rank_of(keys: &[f64], rank: usize) -> usize {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    // stable sort keeps the lower index first on ties
    idx.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap());
    idx[rank]
}

/// Naive A1..A4 straight from the definitions, for one rank.
fn naive_attributes(s: &QuerySlice, rank: usize, window: usize, eps: f64) -> [f64; 4] {
    let (r, l) = (s.rows(), s.seq_len);
    let rows = r - l + 1;
    let mut diag = vec![vec![0.0; l]; rows];
    for (i, row) in diag.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = s.get(i + c, c);
        }
    }
    let hist = |row: &[f64]| row[..l - 1].iter().sum::<f64>();

    let diag_means: Vec<f64> = diag.iter().map(|row| hist(row) / (l - 1) as f64).collect();
    let slice_means: Vec<f64> = (0..r).map(|i| hist(s.row(i)) / (l - 1) as f64).collect();
    let d_star = rank_of(&diag_means, rank);
    let h_star = rank_of(&slice_means, rank);
    let a1 = hist(&diag[d_star]) / (hist(s.row(h_star)) + eps);

    let sums: Vec<f64> = diag.iter().map(|row| row.iter().sum()).collect();
    let i_star = rank_of(&sums, rank);
    let mut last: Vec<f64> = (0..r).map(|i| s.get(i, l - 1)).collect();
    last.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let a2 = last[rank] / (diag[i_star][l - 1] + eps);

    let mut block = vec![vec![0.0; l]; rows];
    let mut start = 0;
    while start < rows {
        let end = (start + l).min(rows);
        let mut total = 0.0;
        for row in &diag[start..end] {
            for v in row {
                total += v;
            }
        }
        let mean = total / ((end - start) * l) as f64;
        for row in &mut block[start..end] {
            row.fill(mean);
        }
        start = end;
    }
    let den3: f64 = block[i_star].iter().sum();
    let a3 = if den3 == 0.0 { 0.0 } else { hist(&diag[i_star]) / den3 };

    let mut group = vec![0.0; l];
    let mut n = 0.0;
    for (m, row) in diag.iter().enumerate() {
        if m + window >= i_star && m <= i_star + window {
            n += 1.0;
            for c in 0..l {
                group[c] += row[c];
            }
        }
    }
    let den4: f64 = group.iter().map(|g| g / n).sum();
    let a4 = if den4 == 0.0 { 0.0 } else { hist(&diag[i_star]) / den4 };
    [a1, a2, a3, a4]
}

fn attribute_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let l = [2, 3, 4, 6, 8, 10][rng.random_range(0..6)];
        let r = rng.random_range(2 * l + 2..=80);
        let values = (0..r * l).map(|_| rng.random_range(0.05..2.0)).collect();
        let slice = normalize_slice(QuerySlice::from_values(seed as usize, l, values).unwrap());
        let params = SmoothingParams { window: rng.random_range(0..=3), epsilon: 1e-9 };
        let got = extract_attributes(&slice, 3, &params).unwrap();
        for (rank, a) in got.iter().enumerate() {
            let want = naive_attributes(&slice, rank, params.window, params.epsilon);
            for (g, w) in [a.a1, a.a2, a.a3, a.a4].iter().zip(want) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    let mut worst_closed = 0.0f64;
    for l in 2..=10 {
        for r in [2 * l, 3 * l + 1, 50] {
            for c in [0.2, 1.0, 7.5] {
                let slice = normalize_slice(QuerySlice::from_values(0, l, vec![c; r * l]).unwrap());
                for window in 0..=3 {
                    let a = extract_attributes(&slice, 3, &SmoothingParams { window, epsilon: 1e-9 }).unwrap();
                    let expect = (l - 1) as f64 / l as f64;
                    for v in &a {
                        worst_closed = worst_closed.max((v.a3 - expect).abs()).max((v.a4 - expect).abs());
                    }
                }
            }
        }
    }
    (
        worst <= 1e-9 && worst_closed <= 1e-12,
        format!("max |delta| {worst:.2e} over 1000 slices x 3 ranks, constant-slice A3/A4 off by {worst_closed:.2e}"),
    )
}

fn gradient_check() -> Outcome {
    let h = 1e-4;
    let alpha = 1e-3;
    let mut worst = 0.0f64;
    let mut resampled = 0;
    for state in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + state);
        let model = MlpModel::initialized(vec![4, 128, 128, 128, 4], &mut rng).unwrap();
        let data: Vec<Sample> = (0..16)
            .map(|k| Sample::new((0..4).map(|_| rng.random_range(0.0..1.5)).collect(), k % 4))
            .collect();
        let (_, g) = model.loss_and_gradients(&data, alpha).unwrap();
        let mut checked = 0;
        while checked < 10 {
            let layer = rng.random_range(0..model.layers());
            let (rows, cols) = model.weight_shape(layer);
            let (i, j) = (rng.random_range(0..rows), rng.random_range(0..cols));
            let w = model.weight(layer, i, j);
            let mut plus = model.clone();
            plus.set_weight(layer, i, j, w + h);
            let mut minus = model.clone();
            minus.set_weight(layer, i, j, w - h);
            // a ReLU switching inside the stencil makes the difference quotient meaningless
            if plus.relu_pattern(&data) != minus.relu_pattern(&data) {
                resampled += 1;
                continue;
            }
            let fd = (plus.loss(&data, alpha).unwrap() - minus.loss(&data, alpha).unwrap()) / (2.0 * h);
            let an = g.weights[layer][[i, j]];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over 50 coordinates ({resampled} resampled at ReLU kinks)"),
    )
}

fn on_segment(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    if dd == 0.0 {
        return p.iter().zip(a).all(|(x, y)| (x - y).abs() <= 1e-12);
    }
    let u: f64 = p.iter().zip(a).zip(&d).map(|((x, y), z)| (x - y) * z).sum::<f64>() / dd;
    (-1e-12..=1.0 + 1e-12).contains(&u) && p.iter().zip(a).zip(&d).all(|((x, y), z)| (x - (y + u * z)).abs() <= 1e-9)
}

fn smote_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut samples = Vec::new();
    for (class, n) in [50, 10, 30, 20].into_iter().enumerate() {
        for _ in 0..n {
            let f = (0..4).map(|_| class as f64 + rng.random_range(0.0..1.0)).collect();
            samples.push(Sample::new(f, class));
        }
    }
    let out = smote_oversample(&samples, 5, 9).unwrap();
    let mut counts = [0; 4];
    for s in &out {
        counts[s.class] += 1;
    }
    let equal = counts == [50; 4];
    let originals_kept = out[..samples.len()] == samples[..];
    let on_segments = out[samples.len()..].iter().all(|p| {
        let same: Vec<&Sample> = samples.iter().filter(|s| s.class == p.class).collect();
        same.iter().any(|a| same.iter().any(|b| on_segment(&p.features, &a.features, &b.features)))
    });
    let repeat = smote_oversample(&samples, 5, 9).unwrap() == out;
    let other = smote_oversample(&samples, 5, 10).unwrap() != out;
    (
        equal && originals_kept && on_segments && repeat && other,
        format!(
            "counts {counts:?}, originals kept {originals_kept}, {} synthetic on segments {on_segments}, same seed identical {repeat}, new seed differs {other}",
            out.len() - samples.len()
        ),
    )
}

fn report_with_aoc(aoc: f64) -> EvalReport {
    EvalReport {
        name: "anchor".into(),
        queries: 0,
        max_recall: 1.0,
        integration_range: 1.0,
        auc_at_max_recall: 1.0 - aoc,
        aoc_at_max_recall: aoc,
        max_recall_point: None,
        best_f1_point: None,
        reduction_percent: None,
    }
}

fn table_anchors() -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (base, filt, expected) in [(0.6522, 0.4862, 25.46), (0.2164, 0.1050, 51.46), (0.2478, 0.1274, 48.61)] {
        let r = compare_reports(&report_with_aoc(base), &report_with_aoc(filt)).reduction_percent;
        pass &= (r - expected).abs() <= 0.05;
        detail.push(format!("{r:.3}% vs {expected}%"));
    }
    (pass, detail.join(", "))
}

fn filter_improvement(report: &ExperimentReport, secs: f64) -> Outcome {
    let pass = report.improved_share >= 0.8 && report.mean_reduction_percent >= 15.0 && secs < 300.0;
    let per: Vec<String> = report.scenarios.iter().map(|s| format!("{:.1}", s.removal.reduction_percent)).collect();
    (
        pass,
        format!(
            "improved on {:.0}% of scenarios, mean AOC reduction {:.2}% (per scenario {}), {secs:.1} s",
            100.0 * report.improved_share,
            report.mean_reduction_percent,
            per.join(" ")
        ),
    )
}

fn oracle_ceiling(prepared: &[Prepared], cfg: &PipelineConfig) -> Outcome {
    let (mut fp, mut removed_fp, mut removed_tp) = (0, 0, 0);
    for p in prepared {
        let decisions = remove_matches(&p.matches, p.first_query(), &p.oracle_predictions(), &cfg.filter).unwrap();
        let (wrong, right) = removal_audit(p, &decisions);
        fp += false_positive_count(p);
        removed_fp += wrong;
        removed_tp += right;
    }
    (
        removed_fp == fp && removed_tp == 0,
        format!("removed {removed_fp} of {fp} false positives and {removed_tp} true positives"),
    )
}

fn monotonicity(prepared: &[Prepared], model: &MlpModel, report: &ExperimentReport) -> Outcome {
    let mut failures = Vec::new();

    // removed set shrinks as the trust threshold rises
    for p in prepared {
        let preds = p.predictions(model);
        let mut previous: Option<Vec<usize>> = None;
        for k in 0..=20 {
            let cfg = FilterConfig { trust_threshold: k as f64 / 20.0, ..FilterConfig::default() };
            let removed: Vec<usize> = remove_matches(&p.matches, p.first_query(), &preds, &cfg)
                .unwrap()
                .iter()
                .filter(|d| d.final_ref.is_none())
                .map(|d| d.query)
                .collect();
            if let Some(prev) = &previous {
                if !removed.iter().all(|q| prev.contains(q)) {
                    failures.push(format!("{}: removed set grew at tau {}", p.name, k as f64 / 20.0));
                }
            }
            previous = Some(removed);
        }
    }

    // a wider tolerance never makes a correct-after query incorrect
    for p in prepared {
        let mut previous: Option<Vec<bool>> = None;
        for t in 0..=6 {
            let labels = label_queries(&p.matrix, &p.seq, &p.truth.with_tolerance(t)).unwrap();
            let after: Vec<bool> = labels.iter().map(|l| l.correct_after).collect();
            if let Some(prev) = &previous {
                if prev.iter().zip(&after).any(|(was, now)| *was && !now) {
                    failures.push(format!("{}: tolerance {t} lost a correct match", p.name));
                }
            }
            previous = Some(after);
        }
    }

    // AUC + AOC spans the integration range
    let mut worst_identity = 0.0f64;
    for s in &report.scenarios {
        for r in [&s.baseline, &s.filtered, &s.restored] {
            worst_identity = worst_identity.max((r.auc_at_max_recall + r.aoc_at_max_recall - r.integration_range).abs());
        }
    }
    if worst_identity > 1e-12 {
        failures.push(format!("AUC+AOC identity off by {worst_identity:.2e}"));
    }

    // cubing positive scores changes nothing
    let mut worst_cube = 0.0f64;
    for p in prepared {
        let positive: Vec<ScoredMatch> = (p.first_query()..p.matrix.cols())
            .map(|j| ScoredMatch {
                query: j,
                reference: Some(p.matches.best_ref(j)),
                confidence: 1.0 / p.matches.best_score(j),
            })
            .collect();
        let cubed: Vec<ScoredMatch> = positive
            .iter()
            .map(|m| ScoredMatch { confidence: m.confidence.powi(3), ..*m })
            .collect();
        let (a, b) = (pr_curve(&positive, &p.truth).unwrap(), pr_curve(&cubed, &p.truth).unwrap());
        let same_points = a.points.len() == b.points.len()
            && a.points.iter().zip(&b.points).all(|(x, y)| x.precision == y.precision && x.recall == y.recall);
        if !same_points {
            failures.push(format!("{}: PR points changed under cubing", p.name));
        }
        let (ra, rb) = (evaluate_curve("a", &a, None), evaluate_curve("b", &b, None));
        worst_cube = worst_cube.max((ra.auc_at_max_recall - rb.auc_at_max_recall).abs());
    }
    if worst_cube > 1e-12 {
        failures.push(format!("AUC changed by {worst_cube:.2e} under cubing"));
    }

    let detail = if failures.is_empty() {
        format!(
            "tau 0..1 in 21 steps, tolerance 0..6, AUC+AOC within {worst_identity:.1e}, cubing moved AUC by {worst_cube:.1e}"
        )
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}

fn ablation_direction(prepared: &[Prepared], cfg: &PipelineConfig, all_f1: f64) -> Outcome {
    let single: Vec<f64> = (0..4)
        .into_par_iter()
        .map(|a| {
            let acfg = PipelineConfig { selection: FeatureSelection::single(a), ..cfg.clone() };
            test_macro_f1(prepared, &train_pooled(prepared, &acfg).unwrap())
        })
        .collect();
    let best = single.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (
        all_f1 >= best,
        format!(
            "all attributes {all_f1:.4}, single A1..A4 {}",
            single.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn latency() -> Outcome {
    let l = 4;
    let spec = ScenarioSpec { noise_sigma: 0.05, ..ScenarioSpec::clean("latency", 1000, 3) };
    let (matrix, _) = generate(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = MlpModel::initialized(vec![4, 128, 128, 128, 4], &mut rng).unwrap();
    let params = SmoothingParams::default();
    let queries: Vec<usize> = (l - 1..matrix.cols()).step_by(3).collect();
    let mut checksum = 0.0;
    let start = Instant::now();
    for &j in &queries {
        let slice = normalize_slice(slice_query(&matrix, j, l).unwrap());
        let attrs = extract_attributes(&slice, 3, &params).unwrap();
        checksum += predict(&model, &attrs[0]).removal_score;
    }
    let per_query = start.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
    (
        per_query <= 5.0 && checksum.is_finite(),
        format!("{per_query:.3} ms per query over {} queries, R=1000, L=4", queries.len()),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name, outcome: Outcome| {
        println!("{} {name}: {}", if outcome.0 { "PASS" } else { "FAIL" }, outcome.1);
        results.push((name, outcome));
    };

    // timed before anything else occupies the machine
    record("inference latency", latency());
    record("sequence-matching oracle", seqmatch_oracle());
    record("attribute oracle", attribute_oracle());
    record("gradient check", gradient_check());
    record("SMOTE properties", smote_properties());
    record("reduction anchors", table_anchors());

    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let scenarios = scenario_battery(7).unwrap();
    let prepared = prepare_battery(&scenarios, &cfg).unwrap();
    let (model, report) = run_experiment(&prepared, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    record("filter improvement", filter_improvement(&report, secs));
    record("oracle ceiling", oracle_ceiling(&prepared, &cfg));
    record("monotonicity", monotonicity(&prepared, &model, &report));
    record("ablation direction", ablation_direction(&prepared, &cfg, report.test_macro_f1));

    let failed = results.iter().filter(|(_, o)| !o.0).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
