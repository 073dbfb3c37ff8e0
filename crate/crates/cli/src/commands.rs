use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use smr_core::attributes::{
    attributes_from_csv, attributes_to_csv, extract_all, read_attribute_records, write_attribute_records,
    AttributeRecord, AttributeTable, ATTRIBUTE_NAMES,
};
use smr_core::eval::{
    compare_reports, curve_to_csv, evaluate_curve, pr_curve, reduction_table, EvalReport, PrCurve, ReductionRow,
    ScoredMatch,
};
use smr_core::filters::{
    decisions_from_csv, decisions_to_csv, remove_matches, restore_matches, ModelScorer, Verdict,
};
use smr_core::labeling::{class_histogram, label_queries, labels_from_csv, labels_to_csv};
use smr_core::matrixio::{load_ground_truth, load_matrix, save_ground_truth, save_matrix, DistanceMatrix, MatrixFormat};
use smr_core::mlp::{
    predict as predict_one, predictions_from_csv, predictions_to_csv, smote_oversample, stratified_kfold_f1, train as train_model,
    FeatureSelection, MlpModel, Sample,
};
use smr_core::pipeline::{evaluate_model, prepare_battery, run_experiment, system_matches, test_macro_f1, train_pooled, ExperimentReport, PipelineConfig};
use smr_core::plot::{bar_chart, line_chart, Series};
use smr_core::seqmatch::{best_matches, sequence_match, SeqDistanceMatrix};
use smr_core::synth::{battery_specs, generate_all, BatteryEntry, BatteryManifest, Scenario, ScenarioSpec};
use smr_core::{Result, SmrError};

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::{Half, OutFormat};

/// Name the file in IO errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        SmrError::Io(io) => SmrError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn read_text(path: &Path) -> Result<String> {
    at(path, fs::read_to_string(path).map_err(SmrError::from))
}

fn read_matrix(path: &Path) -> Result<DistanceMatrix> {
    at(path, load_matrix(path, MatrixFormat::from_path(path)))
}

fn read_truth(path: &Path, tolerance: usize) -> Result<smr_core::matrixio::GroundTruth> {
    at(path, load_ground_truth(path, tolerance))
}

fn write_matrix(m: &DistanceMatrix, path: &Path) -> Result<()> {
    save_matrix(m, path, MatrixFormat::from_path(path))
}

fn read_seq(path: &Path) -> Result<SeqDistanceMatrix> {
    SeqDistanceMatrix::from_tagged(read_matrix(path)?)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_records(path: &Path) -> Result<Vec<AttributeRecord>> {
    if is_csv(path) {
        attributes_from_csv(&read_text(path)?)
    } else {
        read_attribute_records(at(path, fs::File::open(path).map_err(SmrError::from))?)
    }
}

fn write_records(records: &[AttributeRecord], path: &Path) -> Result<()> {
    if is_csv(path) {
        fs::write(path, attributes_to_csv(records))?;
    } else {
        let mut buf = Vec::new();
        write_attribute_records(records, &mut buf)?;
        fs::write(path, buf)?;
    }
    Ok(())
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    Ok(())
}

/// `battery`, `clean`, or a JSON file with one spec or a list of specs.
fn load_specs(cfg: &RunConfig, spec: &str, noise_scale: f64, size: usize) -> Result<Vec<ScenarioSpec>> {
    match spec {
        "battery" => Ok(battery_specs(cfg.seed, noise_scale)),
        "clean" => {
            let mut s = ScenarioSpec::clean("clean", size, cfg.seed);
            s.tolerance = cfg.tolerance;
            Ok(vec![s])
        }
        path => {
            let text = read_text(Path::new(path))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.is_array() {
                Ok(serde_json::from_value(value)?)
            } else {
                Ok(vec![serde_json::from_value(value)?])
            }
        }
    }
}

pub fn gen(cfg: &RunConfig, spec: &str, out: &Path, noise_scale: f64, size: usize, format: OutFormat) -> Result<()> {
    let specs = load_specs(cfg, spec, noise_scale, size)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("gen", cfg);
    if Path::new(spec).is_file() {
        manifest.input(Path::new(spec))?;
    }
    let ext = match format {
        OutFormat::Binary => "smrm",
        OutFormat::Csv => "csv",
    };
    let mut entries = Vec::new();
    for s in generate_all(&specs)? {
        let matrix_file = format!("{}.{ext}", s.name());
        let truth_file = format!("{}.truth.csv", s.name());
        write_matrix(&s.matrix, &out.join(&matrix_file))?;
        save_ground_truth(&s.truth, out.join(&truth_file))?;
        manifest.output(&out.join(&matrix_file))?;
        manifest.output(&out.join(&truth_file))?;
        entries.push(BatteryEntry { matrix_file, truth_file, spec: s.spec });
    }
    let battery = out.join("battery.json");
    write_json(&BatteryManifest { seed: cfg.seed, scenarios: entries }, &battery)?;
    manifest.output(&battery)?;
    manifest.write_for(out)?;
    println!("wrote {} scenarios to {}", specs.len(), out.display());
    Ok(())
}

pub fn seqmatch(cfg: &RunConfig, matrix: &Path, out: &Path, matches: Option<&Path>) -> Result<()> {
    let d = read_matrix(matrix)?;
    let seq = sequence_match(&d, cfg.seq_len)?;
    write_matrix(seq.matrix(), out)?;
    let mut manifest = Manifest::new("seqmatch", cfg);
    manifest.input(matrix)?;
    manifest.output(out)?;
    if let Some(path) = matches {
        let set = best_matches(&seq, cfg.rank_depth.min(seq.rows()))?;
        let mut text = String::from("query,rank,reference,distance\n");
        for j in seq.valid_from..set.queries() {
            for (r, (reference, score)) in set.ranked_refs(j).iter().zip(set.ranked_scores(j)).enumerate() {
                text.push_str(&format!("{j},{r},{reference},{score}\n"));
            }
        }
        fs::write(path, text)?;
        manifest.output(path)?;
    }
    manifest.write_for(out)?;
    Ok(())
}

pub fn attrs(cfg: &RunConfig, matrix: &Path, out: &Path, labels: Option<&Path>) -> Result<()> {
    let d = read_matrix(matrix)?;
    let table = extract_all(&d, cfg.seq_len, cfg.working_depth(), &cfg.smoothing())?;
    let mut manifest = Manifest::new("attrs", cfg);
    manifest.input(matrix)?;
    let classes = match labels {
        Some(path) => {
            manifest.input(path)?;
            let labels = labels_from_csv(&read_text(path)?)?;
            labels.into_iter().map(|l| (l.query, l.class.index() as u8)).collect()
        }
        None => std::collections::HashMap::new(),
    };
    let records: Vec<AttributeRecord> = table
        .iter()
        .map(|a| AttributeRecord {
            attrs: *a,
            label: if a.rank == 0 { classes.get(&a.query).copied() } else { None },
        })
        .collect();
    write_records(&records, out)?;
    manifest.output(out)?;
    manifest.write_for(out)?;
    Ok(())
}

pub fn label(cfg: &RunConfig, matrix: &Path, seq: Option<&Path>, truth: &Path, out: &Path) -> Result<()> {
    let d = read_matrix(matrix)?;
    let mut manifest = Manifest::new("label", cfg);
    manifest.input(matrix)?;
    let seq = match seq {
        Some(p) => {
            manifest.input(p)?;
            read_seq(p)?
        }
        None => sequence_match(&d, cfg.seq_len)?,
    };
    let gt = read_truth(truth, cfg.tolerance)?;
    manifest.input(truth)?;
    let labels = label_queries(&d, &seq, &gt)?;
    fs::write(out, labels_to_csv(&labels))?;
    manifest.output(out)?;
    manifest.write_for(out)?;
    let h = class_histogram(&labels);
    println!("labelled {} queries: {:?}", labels.len(), h);
    Ok(())
}

fn parse_selection(names: &[String]) -> Result<FeatureSelection> {
    if names.is_empty() {
        return Ok(FeatureSelection::all());
    }
    let idx = names
        .iter()
        .map(|n| {
            ATTRIBUTE_NAMES
                .iter()
                .position(|a| a.eq_ignore_ascii_case(n.trim()))
                .ok_or_else(|| SmrError::Config(format!("unknown attribute {n:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let sel = FeatureSelection(idx);
    sel.validate()?;
    Ok(sel)
}

/// Labelled rank-0 samples of one attribute file, restricted to a half of its queries.
fn labelled_samples(records: &[AttributeRecord], half: Half, selection: &FeatureSelection) -> Vec<Sample> {
    let rank0: Vec<&AttributeRecord> = records.iter().filter(|r| r.attrs.rank == 0).collect();
    let lo = rank0.iter().map(|r| r.attrs.query).min().unwrap_or(0);
    let hi = rank0.iter().map(|r| r.attrs.query + 1).max().unwrap_or(0);
    let mid = lo + (hi - lo) / 2;
    rank0
        .into_iter()
        .filter(|r| match half {
            Half::All => true,
            Half::First => r.attrs.query < mid,
            Half::Second => r.attrs.query >= mid,
        })
        .filter_map(|r| {
            let class = r.label?;
            Some(Sample::new(selection.project(&r.attrs), class as usize))
        })
        .collect()
}

pub fn train(cfg: &RunConfig, attrs: &[PathBuf], out: &Path, half: Half, attributes: &[String], cv: bool) -> Result<()> {
    let selection = parse_selection(attributes)?;
    let mut manifest = Manifest::new("train", cfg);
    let mut samples = Vec::new();
    for path in attrs {
        manifest.input(path)?;
        samples.extend(labelled_samples(&read_records(path)?, half, &selection));
    }
    if samples.is_empty() {
        return Err(SmrError::Data("no labelled rank-0 rows to train on".into()));
    }
    let train_cfg = cfg.train_config();
    let balanced = smote_oversample(&samples, cfg.smote_neighbors, train_cfg.seed)?;
    let mut model = train_model(&balanced, &train_cfg)?.with_selection(selection)?;
    model.trained_on = format!(
        "{} files, {} samples ({} after oversampling), L={}",
        attrs.len(),
        samples.len(),
        balanced.len(),
        cfg.seq_len
    );
    model.save(out)?;
    manifest.output(out)?;
    if cv {
        let report = stratified_kfold_f1(&samples, &train_cfg, cfg.folds, cfg.smote_neighbors)?;
        let path = sibling(out, "cv.json");
        write_json(&report, &path)?;
        manifest.output(&path)?;
        println!("cross-validated macro F1 {:.4} over {} folds", report.mean_f1, cfg.folds);
    }
    manifest.write_for(out)?;
    println!(
        "trained on {} samples for {} epochs, final loss {:.4}",
        samples.len(),
        model.loss_curve.len(),
        model.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// `out` with its extension replaced by `suffix`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

pub fn predict(cfg: &RunConfig, model: &Path, attrs: &Path, out: &Path) -> Result<()> {
    let m = MlpModel::load(model)?;
    let records = read_records(attrs)?;
    let preds: Vec<_> = records
        .iter()
        .filter(|r| r.attrs.rank == 0)
        .map(|r| {
            if !r.attrs.is_finite() {
                return Err(SmrError::Data(format!("query {} has non-finite attributes", r.attrs.query)));
            }
            Ok(predict_one(&m, &r.attrs))
        })
        .collect::<Result<_>>()?;
    fs::write(out, predictions_to_csv(&preds))?;
    let mut manifest = Manifest::new("predict", cfg);
    manifest.input(model)?;
    manifest.input(attrs)?;
    manifest.output(out)?;
    manifest.write_for(out)?;
    Ok(())
}

pub fn filter(
    cfg: &RunConfig,
    seq: &Path,
    preds: &Path,
    out: &Path,
    restore: bool,
    model: Option<&Path>,
    attrs: Option<&Path>,
) -> Result<()> {
    let s = read_seq(seq)?;
    let filter = cfg.filter();
    let depth = if restore { filter.required_depth() } else { 1 };
    let matches = best_matches(&s, depth)?;
    let p = predictions_from_csv(&read_text(preds)?)?;
    let mut manifest = Manifest::new("filter", cfg);
    manifest.input(seq)?;
    manifest.input(preds)?;
    let mut decisions = remove_matches(&matches, s.valid_from, &p, &filter)?;
    if restore {
        let (model_path, attrs_path) = model
            .zip(attrs)
            .ok_or_else(|| SmrError::Config("--restore needs --model and --attrs".into()))?;
        let m = MlpModel::load(model_path)?;
        let table = AttributeTable::from_records(&read_records(attrs_path)?)?;
        manifest.input(model_path)?;
        manifest.input(attrs_path)?;
        decisions = restore_matches(&decisions, &matches, &ModelScorer { model: &m, table: &table }, &filter)?;
    }
    fs::write(out, decisions_to_csv(&decisions))?;
    manifest.output(out)?;
    manifest.write_for(out)?;
    let count = |v: Verdict| decisions.iter().filter(|d| d.verdict == v).count();
    println!(
        "kept {}, removed {}, restored {}",
        count(Verdict::Kept),
        count(Verdict::Removed),
        count(Verdict::Restored)
    );
    Ok(())
}

fn half_range(lo: usize, hi: usize, half: Half) -> std::ops::Range<usize> {
    let mid = lo + (hi - lo) / 2;
    match half {
        Half::All => lo..hi,
        Half::First => lo..mid,
        Half::Second => mid..hi,
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FilteredEval {
    baseline: EvalReport,
    filtered: EvalReport,
    reduction: ReductionRow,
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    cfg: &RunConfig,
    seq: &Path,
    truth: &Path,
    decisions: Option<&Path>,
    half: Half,
    out: &Path,
    pr_csv: Option<&Path>,
    svg: Option<&Path>,
) -> Result<()> {
    let s = read_seq(seq)?;
    let gt = read_truth(truth, cfg.tolerance)?;
    gt.validate_against(s.matrix())?;
    let mut manifest = Manifest::new("eval", cfg);
    manifest.input(seq)?;
    manifest.input(truth)?;
    let queries = half_range(s.valid_from, s.cols(), half);
    let matches = best_matches(&s, 1)?;
    let baseline: Vec<ScoredMatch> = queries
        .clone()
        .map(|j| ScoredMatch { query: j, reference: Some(matches.best_ref(j)), confidence: -matches.best_score(j) })
        .collect();
    let base_curve = pr_curve(&baseline, &gt)?;
    let mut curves: Vec<(&str, PrCurve)> = vec![("VPR+SM", base_curve.clone())];

    match decisions {
        None => {
            let report = evaluate_curve("VPR+SM", &base_curve, None);
            write_json(&report, out)?;
            print!("{}", report.to_table());
        }
        Some(path) => {
            manifest.input(path)?;
            let rows = decisions_from_csv(&read_text(path)?)?;
            let mut by_query = vec![None; s.cols()];
            for r in rows {
                if r.query >= s.cols() {
                    return Err(SmrError::Coverage(format!("decision for query {} outside the matrix", r.query)));
                }
                if let Some(f) = r.final_ref {
                    if f >= s.rows() {
                        return Err(SmrError::Range(format!("decision for query {} names reference {f}", r.query)));
                    }
                }
                by_query[r.query] = Some(r);
            }
            let filtered = queries
                .clone()
                .map(|j| {
                    let r = by_query[j].ok_or_else(|| SmrError::Coverage(format!("no decision for query {j}")))?;
                    let shown = r.final_ref.unwrap_or(r.original_ref);
                    Ok(ScoredMatch { query: j, reference: r.final_ref, confidence: -s.get(shown, j) })
                })
                .collect::<Result<Vec<_>>>()?;
            let filt_curve = pr_curve(&filtered, &gt)?;
            let filt = evaluate_curve("VPR+SM+Pred", &filt_curve, None);
            let base = evaluate_curve("VPR+SM", &base_curve, Some(filt.max_recall));
            let reduction = compare_reports(&base, &filt);
            let filt = EvalReport { reduction_percent: Some(reduction.reduction_percent), ..filt };
            print!("{}\n{}", base.to_table(), filt.to_table());
            write_json(&FilteredEval { baseline: base, filtered: filt, reduction }, out)?;
            curves.push(("VPR+SM+Pred", filt_curve));
        }
    }
    manifest.output(out)?;
    if let Some(path) = pr_csv {
        fs::write(path, curve_to_csv(&curves.last().expect("baseline curve").1))?;
        manifest.output(path)?;
    }
    if let Some(path) = svg {
        fs::write(path, pr_svg("Precision-recall", &curves))?;
        manifest.output(path)?;
    }
    manifest.write_for(out)?;
    Ok(())
}

fn pr_svg(title: &str, curves: &[(&str, PrCurve)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(name, c)| Series {
            label: name.to_string(),
            points: c.points.iter().map(|p| (p.recall, p.precision)).collect(),
        })
        .collect();
    line_chart(title, "recall", "precision", &series)
}

/// Report JSON written by `eval`: a bare report or the filtered pair.
fn read_report(path: &Path, key: &str) -> Result<EvalReport> {
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
    let inner = value.get(key).cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

pub fn compare(cfg: &RunConfig, baseline: &Path, filtered: &Path, out: &Path) -> Result<()> {
    let b = read_report(baseline, "baseline")?;
    let f = read_report(filtered, "filtered")?;
    let row = compare_reports(&b, &f);
    write_json(&row, out)?;
    print!("{}", reduction_table(std::slice::from_ref(&row)));
    let mut manifest = Manifest::new("eval", cfg);
    manifest.input(baseline)?;
    manifest.input(filtered)?;
    manifest.output(out)?;
    manifest.write_for(out)?;
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LengthRow {
    seq_len: usize,
    test_macro_f1: f64,
    mean_baseline_auc: f64,
    mean_filtered_auc: f64,
    mean_reduction_percent: f64,
    improved_share: f64,
    scenarios: Vec<ReductionRow>,
}

impl From<&ExperimentReport> for LengthRow {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            seq_len: r.seq_len,
            test_macro_f1: r.test_macro_f1,
            mean_baseline_auc: r.mean_baseline_auc,
            mean_filtered_auc: r.mean_filtered_auc,
            mean_reduction_percent: r.mean_reduction_percent,
            improved_share: r.improved_share,
            scenarios: r.scenarios.iter().map(|s| s.removal.clone()).collect(),
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ThresholdRow {
    trust_threshold: f64,
    mean_filtered_auc: f64,
    mean_reduction_percent: f64,
    removed: usize,
    restored: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AttributeRow {
    attributes: Vec<String>,
    test_macro_f1: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Ablation {
    scenarios: Vec<String>,
    lengths: Vec<LengthRow>,
    threshold_seq_len: usize,
    thresholds: Vec<ThresholdRow>,
    attributes: Vec<AttributeRow>,
}

fn load_battery(cfg: &RunConfig, spec: &str, noise_scale: f64) -> Result<Vec<Scenario>> {
    let path = Path::new(spec);
    if path.is_file() {
        // a battery.json written by `gen` points at its matrices
        let value: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
        if value.get("scenarios").is_some() {
            let manifest: BatteryManifest = serde_json::from_value(value)?;
            let dir = path.parent().unwrap_or(Path::new("."));
            return manifest
                .scenarios
                .into_iter()
                .map(|e| {
                    Ok(Scenario {
                        matrix: read_matrix(&dir.join(&e.matrix_file))?,
                        truth: read_truth(&dir.join(&e.truth_file), cfg.tolerance)?,
                        spec: e.spec,
                    })
                })
                .collect();
        }
    }
    generate_all(&load_specs(cfg, spec, noise_scale, 600)?)
}

pub fn ablate(cfg: &RunConfig, spec: &str, out: &Path, noise_scale: f64, attributes: bool) -> Result<()> {
    create_dir(out)?;
    let scenarios = load_battery(cfg, spec, noise_scale)?;
    let mut manifest = Manifest::new("ablate", cfg);
    if Path::new(spec).is_file() {
        manifest.input(Path::new(spec))?;
    }
    let lengths = if cfg.seq_len_sweep.is_empty() { vec![2, 4, 6, 8, 10] } else { cfg.seq_len_sweep.clone() };
    let taus = if cfg.trust_threshold_sweep.is_empty() {
        vec![0.1, 0.3, 0.5, 0.7, 0.9]
    } else {
        cfg.trust_threshold_sweep.clone()
    };
    let tau_len = if lengths.contains(&4) { 4 } else { lengths[0] };

    let mut length_rows = Vec::new();
    let mut threshold_rows = Vec::new();
    let mut attribute_rows = Vec::new();
    let mut pr_plot = None;
    for &l in &lengths {
        let pcfg = PipelineConfig { seq_len: l, ..cfg.pipeline() };
        let prepared = prepare_battery(&scenarios, &pcfg)?;
        let (model, report) = run_experiment(&prepared, &pcfg)?;
        length_rows.push(LengthRow::from(&report));
        if l != tau_len {
            continue;
        }
        for &tau in &taus {
            let tcfg = PipelineConfig { filter: cfg.filter_with(tau), ..pcfg.clone() };
            let r = evaluate_model(&prepared, &model, &tcfg)?;
            threshold_rows.push(ThresholdRow {
                trust_threshold: tau,
                mean_filtered_auc: r.mean_filtered_auc,
                mean_reduction_percent: r.mean_reduction_percent,
                removed: r.scenarios.iter().map(|s| s.removed).sum(),
                restored: r.scenarios.iter().map(|s| s.restored_count).sum(),
            });
        }
        let first = &prepared[0];
        let sys = system_matches(first, &first.predictions(&model), Some(&model), &pcfg)?;
        pr_plot = Some((
            format!("{} (L={l})", first.name),
            vec![
                ("VPR+SM", pr_curve(&sys.baseline, &first.truth)?),
                ("VPR+SM+Pred", pr_curve(&sys.removed, &first.truth)?),
                ("VPR+SM+Pred+Restore", pr_curve(&sys.restored, &first.truth)?),
            ],
        ));
        if attributes {
            attribute_rows.push(AttributeRow {
                attributes: ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
                test_macro_f1: test_macro_f1(&prepared, &model),
            });
            for (a, name) in ATTRIBUTE_NAMES.iter().enumerate() {
                let acfg = PipelineConfig { selection: FeatureSelection::single(a), ..pcfg.clone() };
                let m = train_pooled(&prepared, &acfg)?;
                attribute_rows.push(AttributeRow {
                    attributes: vec![name.to_string()],
                    test_macro_f1: test_macro_f1(&prepared, &m),
                });
            }
        }
    }

    let ablation = Ablation {
        scenarios: scenarios.iter().map(|s| s.name().to_string()).collect(),
        lengths: length_rows,
        threshold_seq_len: tau_len,
        thresholds: threshold_rows,
        attributes: attribute_rows,
    };
    let table = ablation_table(&ablation);
    print!("{table}");
    let mut outputs = vec![out.join("ablation.json"), out.join("table.txt"), out.join("auc_by_length.svg")];
    write_json(&ablation, &outputs[0])?;
    fs::write(&outputs[1], &table)?;
    let cats: Vec<String> = ablation.lengths.iter().map(|r| format!("L={}", r.seq_len)).collect();
    let bars = vec![
        ("VPR+SM".to_string(), ablation.lengths.iter().map(|r| r.mean_baseline_auc).collect()),
        ("VPR+SM+Pred".to_string(), ablation.lengths.iter().map(|r| r.mean_filtered_auc).collect()),
    ];
    fs::write(&outputs[2], bar_chart("Mean PR AUC by sequence length", "PR AUC", &cats, &bars))?;
    if !ablation.thresholds.is_empty() {
        let path = out.join("threshold_sweep.svg");
        let series = vec![Series {
            label: format!("VPR+SM+Pred, L={tau_len}"),
            points: ablation.thresholds.iter().map(|r| (r.trust_threshold, r.mean_filtered_auc)).collect(),
        }];
        fs::write(&path, line_chart("Mean PR AUC by trust threshold", "trust threshold", "PR AUC", &series))?;
        outputs.push(path);
    }
    if let Some((title, curves)) = pr_plot {
        let path = out.join("pr_curves.svg");
        fs::write(&path, pr_svg(&title, &curves))?;
        outputs.push(path);
    }
    for p in &outputs {
        manifest.output(p)?;
    }
    manifest.write_for(out)?;
    Ok(())
}

fn ablation_table(a: &Ablation) -> String {
    let mut out = format!(
        "{:<6}{:>10}{:>12}{:>12}{:>12}{:>10}\n",
        "L", "macro F1", "AUC base", "AUC pred", "AOC red.", "improved"
    );
    for r in &a.lengths {
        out.push_str(&format!(
            "{:<6}{:>10.4}{:>12.4}{:>12.4}{:>11.2}%{:>9.0}%\n",
            r.seq_len,
            r.test_macro_f1,
            r.mean_baseline_auc,
            r.mean_filtered_auc,
            r.mean_reduction_percent,
            100.0 * r.improved_share
        ));
    }
    if !a.thresholds.is_empty() {
        out.push_str(&format!(
            "\ntrust threshold sweep at L={}\n{:<8}{:>12}{:>12}{:>10}{:>10}\n",
            a.threshold_seq_len, "tau", "AUC pred", "AOC red.", "removed", "restored"
        ));
        for r in &a.thresholds {
            out.push_str(&format!(
                "{:<8.2}{:>12.4}{:>11.2}%{:>10}{:>10}\n",
                r.trust_threshold, r.mean_filtered_auc, r.mean_reduction_percent, r.removed, r.restored
            ));
        }
    }
    if !a.attributes.is_empty() {
        out.push_str(&format!("\nattribute ablation at L={}\n", a.threshold_seq_len));
        for r in &a.attributes {
            out.push_str(&format!("{:<16}{:>10.4}\n", r.attributes.join("+"), r.test_macro_f1));
        }
    }
    out
}
