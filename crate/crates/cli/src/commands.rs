//! Standalone subcommand implementations over the documented file
//! formats.

use crate::config::Granularity;
use crate::{CliError, Result};
use entroscan::dataset::{self, ScanRecord, SplitConfig};
use entroscan::ensemble::{self, scan_of_sample};
use entroscan::entropy::{SampleSpec, SampleStrategy, SAMPLE_CSV_HEADER};
use entroscan::learner::{
    self, Label, LinearModel, PredictionMatrix, TrainConfig, NUM_CLASSES,
};
use entroscan::metrics::{self, MetricsReport, ReportJson};
use entroscan::preprocess::{
    features_csv_header, features_csv_row, preprocess_slice, FeaturesSidecar, PreprocessConfig,
};
use entroscan::volume::{extract_slices, load_volume, parse_header, Axis};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

fn parse_triple(text: &str, what: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Config(format!("bad {what} '{text}' (expected a,b,c)")))?;
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "bad {what} '{text}' (expected exactly three values)"
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_target(text: &str) -> Result<(usize, usize)> {
    let (h, w) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| CliError::Config(format!("bad target '{text}' (expected HxW)")))?;
    let h = h
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad target height in '{text}'")))?;
    let w = w
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad target width in '{text}'")))?;
    if h < 1 || w < 1 {
        return Err(CliError::Config(format!(
            "target '{text}' must be at least 1x1"
        )));
    }
    Ok((h, w))
}

/// Reject hyperparameters the trainer would refuse.
pub fn check_train_config(config: &TrainConfig) -> Result<()> {
    if config.batch_size < 1 {
        return Err(CliError::Config("batch size must be at least 1".to_string()));
    }
    if config.learning_rate <= 0.0 {
        return Err(CliError::Config(format!(
            "learning rate {} must be positive",
            config.learning_rate
        )));
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "input".to_string())
}

/// Map scan_id -> label from a manifest.
fn label_map(records: &[ScanRecord]) -> BTreeMap<String, Label> {
    records
        .iter()
        .map(|r| (r.scan_id.clone(), r.label))
        .collect()
}

/// Label of a slice or scan sample id via its scan prefix.
fn label_of(map: &BTreeMap<String, Label>, sample_id: &str) -> Result<Label> {
    let scan = scan_of_sample(sample_id);
    map.get(scan).copied().ok_or_else(|| {
        CliError::Input(format!("sample '{sample_id}': scan '{scan}' not in manifest"))
    })
}

pub fn cmd_synth(out_dir: &Path, per_class: &str, extents: &str, seed: u64) -> Result<()> {
    let per_class = parse_triple(per_class, "per-class counts")?;
    let [nx, ny, nz] = parse_triple(extents, "extents")?;
    let records = dataset::generate_dataset(per_class, seed, (nx, ny, nz), out_dir)?;
    println!(
        "synth: {} scans ({} AD, {} MCI, {} CN) -> {}",
        records.len(),
        per_class[0],
        per_class[1],
        per_class[2],
        out_dir.join("manifest.csv").display()
    );
    Ok(())
}

pub fn cmd_inspect(input: &Path) -> Result<()> {
    let bytes = entroscan::volume::read_stream(input)?;
    let h = parse_header(&bytes)?;
    println!("sizeof_hdr={}", h.sizeof_hdr);
    println!("endianness={:?}", h.endianness);
    println!(
        "dim={}",
        h.dim.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
    );
    println!("datatype={:?}", h.datatype);
    println!("bitpix={}", h.bitpix);
    println!(
        "pixdim={}",
        h.pixdim.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
    );
    println!("vox_offset={}", h.vox_offset);
    println!("scl_slope={}", h.scl_slope);
    println!("scl_inter={}", h.scl_inter);
    println!("magic={:?}", String::from_utf8_lossy(&h.magic));
    Ok(())
}

struct SampleArgs {
    spec: SampleSpec,
    axis: Axis,
}

fn sample_args(
    strategy: &str,
    trim_head: usize,
    trim_tail: usize,
    bins: usize,
    axis: &str,
) -> Result<SampleArgs> {
    let strategy: SampleStrategy = strategy.parse().map_err(CliError::Config)?;
    let axis: Axis = axis.parse().map_err(CliError::Config)?;
    if bins < 2 {
        return Err(CliError::Config(format!(
            "bin count {bins} must be at least 2"
        )));
    }
    Ok(SampleArgs {
        spec: SampleSpec {
            strategy,
            trim_head,
            trim_tail,
            bin_count: bins,
        },
        axis,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sample(
    input: Option<&Path>,
    manifest: Option<&Path>,
    strategy: &str,
    trim_head: usize,
    trim_tail: usize,
    bins: usize,
    axis: &str,
    out: &Path,
) -> Result<()> {
    let args = sample_args(strategy, trim_head, trim_tail, bins, axis)?;
    let paths: Vec<std::path::PathBuf> = match (input, manifest) {
        (Some(file), None) => vec![file.to_path_buf()],
        (None, Some(manifest)) => dataset::read_manifest(manifest)?
            .into_iter()
            .map(|r| r.path)
            .collect(),
        _ => {
            return Err(CliError::Config(
                "sample needs exactly one of --input or --manifest".to_string(),
            ))
        }
    };

    let mut csv = String::from(SAMPLE_CSV_HEADER);
    csv.push('\n');
    let mut selected_total = 0usize;
    let mut slice_total = 0usize;
    for path in &paths {
        let volume = load_volume(path)?;
        let slices = extract_slices(&volume, args.axis);
        slice_total += slices.len();
        selected_total += entroscan::entropy::select_samples(&slices, &args.spec)?.len();
        csv.push_str(&entroscan::entropy::sample_manifest_rows(&slices, &args.spec)?);
    }
    std::fs::write(out, csv)?;
    println!(
        "sample: strategy {}, {selected_total} of {slice_total} slices selected -> {}",
        args.spec.strategy,
        out.display()
    );
    Ok(())
}

/// (scan_id, slice_index) pairs marked selected=1 in a sampling manifest.
fn read_selected(path: &Path) -> Result<HashSet<(String, usize)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SAMPLE_CSV_HEADER => {}
        other => {
            return Err(CliError::Input(format!(
                "bad samples header '{}'",
                other.unwrap_or("")
            )))
        }
    }
    let mut selected = HashSet::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Input(format!("bad samples row '{line}'")));
        }
        if fields[3] == "1" {
            let index = fields[1]
                .parse()
                .map_err(|_| CliError::Input(format!("bad slice index in '{line}'")))?;
            selected.insert((fields[0].to_string(), index));
        }
    }
    Ok(selected)
}

pub fn cmd_preprocess(
    manifest: &Path,
    samples: Option<&Path>,
    target: &str,
    normalization: &str,
    axis: &str,
    out: &Path,
) -> Result<()> {
    let target = parse_target(target)?;
    let normalization = normalization.parse().map_err(CliError::Config)?;
    let axis: Axis = axis.parse().map_err(CliError::Config)?;
    let config = PreprocessConfig {
        target,
        normalization,
    };
    let records = dataset::read_manifest(manifest)?;
    let selected = samples.map(read_selected).transpose()?;

    let mut csv = features_csv_header(target.0 * target.1);
    csv.push('\n');
    let mut rows = 0usize;
    for record in &records {
        let volume = load_volume(&record.path)?;
        for slice in extract_slices(&volume, axis) {
            if let Some(keep) = &selected {
                if !keep.contains(&(record.scan_id.clone(), slice.index())) {
                    continue;
                }
            }
            let processed = preprocess_slice(&slice, &config);
            csv.push_str(&features_csv_row(&processed));
            csv.push('\n');
            rows += 1;
        }
    }
    std::fs::write(out, csv)?;
    let sidecar = FeaturesSidecar {
        height: target.0,
        width: target.1,
        normalization,
    };
    let sidecar_path = out.with_extension("json");
    std::fs::write(
        &sidecar_path,
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    println!(
        "preprocess: {rows} slices at {}x{} -> {}",
        target.0,
        target.1,
        out.display()
    );
    Ok(())
}

pub fn cmd_split(
    manifest: &Path,
    train_fraction: f64,
    seed: u64,
    out_train: &Path,
    out_test: &Path,
) -> Result<()> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let records = dataset::read_manifest(manifest)?;
    let (train, test) = dataset::stratified_split(
        &records,
        &SplitConfig {
            train_fraction,
            seed,
        },
    )?;
    dataset::write_manifest(&train, out_train)?;
    dataset::write_manifest(&test, out_test)?;
    println!(
        "split: {} train / {} test scans -> {}, {}",
        train.len(),
        test.len(),
        out_train.display(),
        out_test.display()
    );
    Ok(())
}

/// Rows of a features CSV: sample id (`scan/index`), scan id, features.
pub struct FeatureRows {
    pub ids: Vec<String>,
    pub scan_ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
}

pub fn read_features(path: &Path) -> Result<FeatureRows> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Input(format!("{}: empty features file", path.display())))?;
    if !header.starts_with("scan_id,slice_index,px0") {
        return Err(CliError::Input(format!(
            "{}: bad features header",
            path.display()
        )));
    }
    let width = header.split(',').count() - 2;
    let mut rows = FeatureRows {
        ids: Vec::new(),
        scan_ids: Vec::new(),
        features: Vec::new(),
    };
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let scan_id = parts
            .next()
            .ok_or_else(|| CliError::Input(format!("bad features row '{line}'")))?;
        let index: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Input(format!("bad slice index in '{line}'")))?;
        let features: Vec<f64> = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::Input(format!("bad pixel value in '{line}'")))?;
        if features.len() != width {
            return Err(CliError::Input(format!(
                "row '{scan_id}/{index}' has {} pixels, header says {width}",
                features.len()
            )));
        }
        rows.ids.push(format!("{scan_id}/{index}"));
        rows.scan_ids.push(scan_id.to_string());
        rows.features.push(features);
    }
    Ok(rows)
}

/// Keep only rows whose scan appears in the manifest, and resolve labels.
fn rows_for_manifest(
    rows: &FeatureRows,
    map: &BTreeMap<String, Label>,
) -> (Vec<String>, Vec<Vec<f64>>, Vec<Label>) {
    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for ((id, scan), row) in rows.ids.iter().zip(&rows.scan_ids).zip(&rows.features) {
        if let Some(&label) = map.get(scan) {
            ids.push(id.clone());
            features.push(row.clone());
            labels.push(label);
        }
    }
    (ids, features, labels)
}

pub fn cmd_train_base(
    features: &Path,
    manifest: &Path,
    config: &TrainConfig,
    out: &Path,
) -> Result<()> {
    check_train_config(config)?;
    let rows = read_features(features)?;
    let map = label_map(&dataset::read_manifest(manifest)?);
    let (_, train_features, labels) = rows_for_manifest(&rows, &map);
    let model = learner::train(&train_features, &labels, config)?;
    learner::save_model(out, &model, config)?;
    println!(
        "train-base: {} samples, {} features -> {}",
        train_features.len(),
        model.feature_dim,
        out.display()
    );
    Ok(())
}

pub fn cmd_predict(
    model: &Path,
    features: &Path,
    manifest: Option<&Path>,
    model_id: &str,
    out: &Path,
) -> Result<()> {
    let (model, _) = learner::load_model(model)?;
    let rows = read_features(features)?;
    let pm = predict_rows(&model, &rows, manifest, model_id)?;
    pm.save_csv(out)?;
    println!("predict: {} rows as '{model_id}' -> {}", pm.len(), out.display());
    Ok(())
}

pub fn predict_rows(
    model: &LinearModel,
    rows: &FeatureRows,
    manifest: Option<&Path>,
    model_id: &str,
) -> Result<PredictionMatrix> {
    let (ids, features) = match manifest {
        Some(path) => {
            let map = label_map(&dataset::read_manifest(path)?);
            let (ids, features, _) = rows_for_manifest(rows, &map);
            (ids, features)
        }
        None => (rows.ids.clone(), rows.features.clone()),
    };
    Ok(learner::predict_proba(model, model_id, ids, &features)?)
}

pub fn cmd_ingest(input: &Path, model_id: &str, out: &Path) -> Result<()> {
    let pm = learner::load_predictions(input, model_id)?;
    pm.save_csv(out)?;
    println!(
        "ingest: {} rows validated as '{model_id}' -> {}",
        pm.len(),
        out.display()
    );
    Ok(())
}

/// Macro recall extracted from an eval report JSON.
fn report_recall(path: &Path) -> Result<(String, f64)> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let model_id = value
        .get("model_id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| CliError::Input(format!("{}: no model_id", path.display())))?;
    let recall = value
        .get("macro")
        .and_then(|m| m.get("recall"))
        .and_then(|v| v.as_f64())
        .ok_or_else(|| CliError::Input(format!("{}: no macro.recall", path.display())))?;
    Ok((model_id.to_string(), recall))
}

pub fn cmd_select_top(evals: &[std::path::PathBuf], k: usize, out: &Path) -> Result<()> {
    let mut recalls = BTreeMap::new();
    for path in evals {
        let (model_id, recall) = report_recall(path)?;
        if recalls.insert(model_id.clone(), recall).is_some() {
            return Err(CliError::Input(format!(
                "model '{model_id}' reported twice"
            )));
        }
    }
    let selected = ensemble::select_top_k_models(&recalls, k)?;
    let json = serde_json::json!({ "selected": selected });
    std::fs::write(out, serde_json::to_string_pretty(&json)? + "\n")?;
    println!("select-top: {} -> {}", selected.join(", "), out.display());
    Ok(())
}

/// Load three prediction CSVs, naming them by explicit ids or file stems.
pub fn load_bases(
    paths: &[std::path::PathBuf],
    model_ids: Option<&[String]>,
) -> Result<Vec<PredictionMatrix>> {
    let ids: Vec<String> = match model_ids {
        Some(ids) => ids.to_vec(),
        None => paths.iter().map(|p| file_stem(p)).collect(),
    };
    if ids.len() != paths.len() {
        return Err(CliError::Config(format!(
            "{} model ids for {} base files",
            ids.len(),
            paths.len()
        )));
    }
    let unique: HashSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(CliError::Config(
            "base model ids collide; pass --model-ids to disambiguate".to_string(),
        ));
    }
    paths
        .iter()
        .zip(&ids)
        .map(|(path, id)| Ok(learner::load_predictions(path, id.clone())?))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_stack(
    train_bases: &[std::path::PathBuf],
    predict_bases: &[std::path::PathBuf],
    manifest: &Path,
    model_ids: Option<&[String]>,
    config: &TrainConfig,
    out_model: &Path,
    out: &Path,
) -> Result<()> {
    check_train_config(config)?;
    let train = load_bases(train_bases, model_ids)?;
    let predict = load_bases(predict_bases, model_ids)?;
    let map = label_map(&dataset::read_manifest(manifest)?);
    let labels: Vec<Label> = train[0]
        .ids()
        .iter()
        .map(|id| label_of(&map, id))
        .collect::<Result<_>>()?;
    let model = ensemble::stack_train(&train, &labels, config)?;
    std::fs::write(out_model, serde_json::to_string_pretty(&model)? + "\n")?;
    let pm = ensemble::stack_predict(&model, &predict)?;
    pm.save_csv(out)?;
    println!(
        "stack: trained on {} samples, scored {} -> {}",
        train[0].len(),
        pm.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_vote(
    bases: &[std::path::PathBuf],
    model_ids: Option<&[String]>,
    out: &Path,
    out_scores: Option<&Path>,
) -> Result<()> {
    let bases = load_bases(bases, model_ids)?;
    let results = ensemble::majority_vote(&bases)?;
    std::fs::write(out, ensemble::votes_to_csv(&results))?;
    if let Some(path) = out_scores {
        ensemble::mean_softmax(&bases, "vote")?.save_csv(path)?;
    }
    println!(
        "vote: {} samples, tie fraction {} -> {}",
        results.len(),
        entroscan::format::fmt_sig(ensemble::tie_fraction(&results)),
        out.display()
    );
    Ok(())
}

/// Parse a vote CSV back into (id, decision, tie) triples.
fn read_votes(path: &Path) -> Result<Vec<(String, Label, bool)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == ensemble::VOTE_CSV_HEADER => {}
        other => {
            return Err(CliError::Input(format!(
                "bad votes header '{}'",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Input(format!("bad votes row '{line}'")));
        }
        let decision: Label = fields[4].parse()?;
        let tie = fields[5] == "1";
        rows.push((fields[0].to_string(), decision, tie));
    }
    Ok(rows)
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    pub json: String,
}

/// Evaluate a prediction matrix against manifest labels, optionally
/// rolled up to scan level first.
pub fn evaluate_predictions(
    pm: &PredictionMatrix,
    map: &BTreeMap<String, Label>,
    granularity: Granularity,
    model_id: &str,
) -> Result<EvalOutcome> {
    let pm = match granularity {
        Granularity::Slice => pm.clone(),
        Granularity::Scan => ensemble::aggregate_scans(pm)?,
    };
    let truth: Vec<Label> = pm
        .ids()
        .iter()
        .map(|id| label_of(map, id))
        .collect::<Result<_>>()?;
    let report = MetricsReport::from_labels(&truth, &pm.decisions())?;
    let json = ReportJson::new(model_id, granularity.as_str(), &report, None).to_json();
    Ok(EvalOutcome { report, json })
}

pub fn cmd_eval(
    preds: Option<&Path>,
    votes: Option<&Path>,
    manifest: &Path,
    model_id: Option<&str>,
    granularity: Granularity,
    out_report: &Path,
    out_confusion: Option<&Path>,
) -> Result<()> {
    let map = label_map(&dataset::read_manifest(manifest)?);
    let (report, json) = match (preds, votes) {
        (Some(path), None) => {
            let id = model_id.map(str::to_string).unwrap_or_else(|| file_stem(path));
            let pm = learner::load_predictions(path, id.clone())?;
            let outcome = evaluate_predictions(&pm, &map, granularity, &id)?;
            (outcome.report, outcome.json)
        }
        (None, Some(path)) => {
            let id = model_id.map(str::to_string).unwrap_or_else(|| file_stem(path));
            let rows = read_votes(path)?;
            let truth: Vec<Label> = rows
                .iter()
                .map(|(sample, _, _)| label_of(&map, sample))
                .collect::<Result<_>>()?;
            let decisions: Vec<Label> = rows.iter().map(|(_, d, _)| *d).collect();
            let ties = rows.iter().filter(|(_, _, tie)| *tie).count();
            let tie_fraction = ties as f64 / rows.len().max(1) as f64;
            let report = MetricsReport::from_labels(&truth, &decisions)?;
            let json = ReportJson::new(&id, granularity.as_str(), &report, Some(tie_fraction))
                .to_json();
            (report, json)
        }
        _ => {
            return Err(CliError::Config(
                "eval needs exactly one of --preds or --votes".to_string(),
            ))
        }
    };
    std::fs::write(out_report, &json)?;
    if let Some(path) = out_confusion {
        std::fs::write(path, report.confusion.to_csv())?;
    }
    println!(
        "eval: accuracy {}, macro recall {} -> {}",
        entroscan::format::fmt_sig(report.accuracy),
        entroscan::format::fmt_sig(report.macro_avg.recall),
        out_report.display()
    );
    Ok(())
}

pub fn cmd_roc(
    preds: &Path,
    manifest: &Path,
    granularity: Granularity,
    out_prefix: &Path,
) -> Result<()> {
    let map = label_map(&dataset::read_manifest(manifest)?);
    let pm = learner::load_predictions(preds, file_stem(preds))?;
    let pm = match granularity {
        Granularity::Slice => pm,
        Granularity::Scan => ensemble::aggregate_scans(&pm)?,
    };
    let truth: Vec<Label> = pm
        .ids()
        .iter()
        .map(|id| label_of(&map, id))
        .collect::<Result<_>>()?;
    for (class, path) in roc_paths(out_prefix) {
        let curve = metrics::roc_one_vs_all(&pm, &truth, class)?;
        std::fs::write(&path, curve.to_csv())?;
        println!(
            "roc {}: auc {} -> {}",
            class,
            entroscan::format::fmt_sig(curve.auc),
            path.display()
        );
    }
    Ok(())
}

/// Per-class output paths `<prefix>_AD.csv` etc.
pub fn roc_paths(prefix: &Path) -> [(Label, std::path::PathBuf); NUM_CLASSES] {
    let mk = |label: Label| {
        let name = format!(
            "{}_{}.csv",
            prefix.file_name().map(|s| s.to_string_lossy()).unwrap_or_default(),
            label
        );
        (label, prefix.with_file_name(name))
    };
    [mk(Label::Ad), mk(Label::Mci), mk(Label::Cn)]
}
