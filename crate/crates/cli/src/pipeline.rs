//! End-to-end pipeline: synth -> sample -> preprocess -> split -> three
//! seeded base learners (or ingested prediction files) -> select-top ->
//! stack/vote -> eval -> roc.
//!
//! Every stage writes its artifact to the work dir and the next stage
//! reads the written file back, so a pipeline run is byte-identical to
//! running the standalone subcommands by hand, and two runs with the
//! same config produce byte-identical trees.
//!
//! All randomness fans out from one root seed with fixed offsets per
//! stage: synthesis +1, split +2, base learner i +10+i, stacking +20.

use crate::commands::{self, evaluate_predictions, read_features, roc_paths};
use crate::config::{
    EnsembleMode, Granularity, IngestSection, PipelineConfig, WORK_DIR_ENV,
};
use crate::{CliError, Result};
use entroscan::dataset::{self, ScanRecord, SplitConfig};
use entroscan::ensemble::{self, scan_of_sample};
use entroscan::entropy::{sample_manifest_rows, select_samples, SAMPLE_CSV_HEADER};
use entroscan::format::{fmt_sig, round_sig};
use entroscan::learner::{self, Label, PredictionMatrix, TrainConfig};
use entroscan::metrics::{roc_one_vs_all, ReportJson};
use entroscan::preprocess::{
    features_csv_header, features_csv_row, preprocess_slice, FeaturesSidecar,
};
use entroscan::volume::{extract_slices, load_volume};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const SEED_SYNTH: u64 = 1;
const SEED_SPLIT: u64 = 2;
const SEED_BASE: u64 = 10;
const SEED_STACK: u64 = 20;

/// Number of seeded built-in learners standing in for the top-3 models.
const BASE_COUNT: usize = 3;

pub fn run_pipeline(
    config_path: Option<&Path>,
    seed_flag: Option<u64>,
    work_dir_flag: Option<&Path>,
) -> Result<()> {
    let config = match config_path {
        Some(path) => PipelineConfig::from_path(path)?,
        None => PipelineConfig::default(),
    };
    let root_seed = seed_flag.or(config.seed).unwrap_or(0);
    let work_dir = work_dir_flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(WORK_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.paths.work_dir.clone())
        .unwrap_or_else(|| PathBuf::from("entroscan_run"));
    std::fs::create_dir_all(&work_dir)?;
    println!("pipeline: seed {root_seed}, work dir {}", work_dir.display());

    let stack_config = TrainConfig {
        epochs: config.training.epochs,
        learning_rate: config.training.learning_rate,
        batch_size: config.training.batch_size.unwrap_or(16),
        seed: root_seed.wrapping_add(SEED_STACK),
    };
    commands::check_train_config(&stack_config)?;

    if let Some(ingest) = &config.ingest {
        let (train, test, map) = load_ingested(&config, ingest)?;
        return ensemble_stage(
            &work_dir,
            train,
            test,
            &map,
            config.evaluation.granularity,
            config.ensemble.mode,
            &stack_config,
        );
    }

    // Stage 1: dataset (existing manifest or synthesized volumes).
    let records = match &config.paths.manifest {
        Some(path) if !path.as_os_str().is_empty() => dataset::read_manifest(path)?,
        _ => {
            let volumes_dir = work_dir.join("volumes");
            let per_class = config.synth.per_class;
            let [nx, ny, nz] = config.synth.extents;
            let records = dataset::generate_dataset(
                per_class,
                root_seed.wrapping_add(SEED_SYNTH),
                (nx, ny, nz),
                &volumes_dir,
            )?;
            println!("synth: {} scans -> {}", records.len(), volumes_dir.display());
            records
        }
    };

    // Stage 2+3: entropy sampling and preprocessing, one pass per scan.
    let spec = config.sampling.spec()?;
    let axis = config.sampling.axis()?;
    let pp_config = config.preprocess.config()?;
    let (th, tw) = pp_config.target;

    let mut samples_csv = String::from(SAMPLE_CSV_HEADER);
    samples_csv.push('\n');
    let mut features_csv = features_csv_header(th * tw);
    features_csv.push('\n');
    let mut selected_count = 0usize;
    let mut slice_count = 0usize;
    for record in &records {
        let volume = load_volume(&record.path)?;
        let slices = extract_slices(&volume, axis);
        slice_count += slices.len();
        samples_csv.push_str(&sample_manifest_rows(&slices, &spec)?);
        let mut selected = select_samples(&slices, &spec)?;
        selected.sort_by_key(|s| s.index());
        selected_count += selected.len();
        for slice in &selected {
            features_csv.push_str(&features_csv_row(&preprocess_slice(slice, &pp_config)));
            features_csv.push('\n');
        }
    }
    let samples_path = work_dir.join("samples.csv");
    std::fs::write(&samples_path, samples_csv)?;
    let features_path = work_dir.join("features.csv");
    std::fs::write(&features_path, features_csv)?;
    let sidecar = FeaturesSidecar {
        height: th,
        width: tw,
        normalization: pp_config.normalization,
    };
    std::fs::write(
        features_path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    println!(
        "sample+preprocess: {selected_count} of {slice_count} slices ({}) -> {}",
        spec.strategy,
        features_path.display()
    );

    // Stage 4: stratified scan-level split.
    let (train_records, test_records) = dataset::stratified_split(
        &records,
        &SplitConfig {
            train_fraction: config.split.train_fraction,
            seed: root_seed.wrapping_add(SEED_SPLIT),
        },
    )?;
    dataset::write_manifest(&train_records, work_dir.join("train_manifest.csv"))?;
    dataset::write_manifest(&test_records, work_dir.join("test_manifest.csv"))?;
    println!(
        "split: {} train / {} test scans",
        train_records.len(),
        test_records.len()
    );

    // Stage 5: three seeded base learners over the written features.
    let rows = read_features(&features_path)?;
    let train_map = label_map(&train_records);
    let test_map = label_map(&test_records);
    let full_map = label_map(&records);
    let (train_features, train_labels) = subset(&rows, &train_map);
    let batch_size = config.training.batch_size_for(spec.strategy);

    let mut train_bases = Vec::new();
    let mut test_bases = Vec::new();
    for i in 0..BASE_COUNT {
        let model_id = format!("base{i}");
        let train_config = TrainConfig {
            epochs: config.training.epochs,
            learning_rate: config.training.learning_rate,
            batch_size,
            seed: root_seed.wrapping_add(SEED_BASE + i as u64),
        };
        let model = learner::train(&train_features, &train_labels, &train_config)?;
        learner::save_model(work_dir.join(format!("{model_id}.json")), &model, &train_config)?;

        for (map, side, store) in [
            (&train_map, "train", &mut train_bases),
            (&test_map, "test", &mut test_bases),
        ] {
            let (ids, features) = subset_ids(&rows, map);
            let pm = learner::predict_proba(&model, &model_id, ids, &features)?;
            let path = work_dir.join(format!("preds_{side}_{model_id}.csv"));
            pm.save_csv(&path)?;
            // Reload so downstream stages see exactly the file contents.
            store.push(learner::load_predictions(&path, &model_id)?);
        }
        println!("train base{i}: {} samples, batch {batch_size}", train_features.len());
    }

    ensemble_stage(
        &work_dir,
        train_bases,
        test_bases,
        &full_map,
        config.evaluation.granularity,
        config.ensemble.mode,
        &stack_config,
    )
}

fn label_map(records: &[ScanRecord]) -> BTreeMap<String, Label> {
    records
        .iter()
        .map(|r| (r.scan_id.clone(), r.label))
        .collect()
}

fn subset(
    rows: &commands::FeatureRows,
    map: &BTreeMap<String, Label>,
) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (scan, row) in rows.scan_ids.iter().zip(&rows.features) {
        if let Some(&label) = map.get(scan) {
            features.push(row.clone());
            labels.push(label);
        }
    }
    (features, labels)
}

fn subset_ids(
    rows: &commands::FeatureRows,
    map: &BTreeMap<String, Label>,
) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut ids = Vec::new();
    let mut features = Vec::new();
    for ((id, scan), row) in rows.ids.iter().zip(&rows.scan_ids).zip(&rows.features) {
        if map.contains_key(scan) {
            ids.push(id.clone());
            features.push(row.clone());
        }
    }
    (ids, features)
}

type IngestedBases = (
    Vec<PredictionMatrix>,
    Vec<PredictionMatrix>,
    BTreeMap<String, Label>,
);

fn load_ingested(config: &PipelineConfig, ingest: &IngestSection) -> Result<IngestedBases> {
    let manifest_path = config
        .paths
        .manifest
        .as_ref()
        .filter(|p| !p.as_os_str().is_empty())
        .ok_or_else(|| {
            CliError::Config("[ingest] requires [paths] manifest for labels".to_string())
        })?;
    if ingest.model_ids.len() != BASE_COUNT
        || ingest.train.len() != BASE_COUNT
        || ingest.test.len() != BASE_COUNT
    {
        return Err(CliError::Config(format!(
            "[ingest] needs exactly {BASE_COUNT} train files, test files, and model ids"
        )));
    }
    let records = dataset::read_manifest(manifest_path)?;
    let map = label_map(&records);
    let load = |paths: &[PathBuf]| -> Result<Vec<PredictionMatrix>> {
        paths
            .iter()
            .zip(&ingest.model_ids)
            .map(|(path, id)| Ok(learner::load_predictions(path, id.clone())?))
            .collect()
    };
    println!("ingest: using external prediction files for {:?}", ingest.model_ids);
    Ok((load(&ingest.train)?, load(&ingest.test)?, map))
}

fn labels_for(pm: &PredictionMatrix, map: &BTreeMap<String, Label>) -> Result<Vec<Label>> {
    pm.ids()
        .iter()
        .map(|id| {
            let scan = scan_of_sample(id);
            map.get(scan).copied().ok_or_else(|| {
                CliError::Input(format!("sample '{id}': scan '{scan}' not in manifest"))
            })
        })
        .collect()
}

/// Select the top models by macro recall, then stack and/or vote, eval,
/// and emit ROC curves.
fn ensemble_stage(
    work_dir: &Path,
    train_bases: Vec<PredictionMatrix>,
    test_bases: Vec<PredictionMatrix>,
    map: &BTreeMap<String, Label>,
    granularity: Granularity,
    mode: EnsembleMode,
    stack_config: &TrainConfig,
) -> Result<()> {
    // At scan granularity every downstream stage operates on scan-level
    // rows; aggregation is idempotent, so evaluate/roc can keep passing
    // the granularity through.
    let maybe_aggregate = |bases: Vec<PredictionMatrix>| -> Result<Vec<PredictionMatrix>> {
        match granularity {
            Granularity::Slice => Ok(bases),
            Granularity::Scan => bases
                .into_iter()
                .map(|pm| Ok(ensemble::aggregate_scans(&pm)?))
                .collect(),
        }
    };
    let train_bases = maybe_aggregate(train_bases)?;
    let test_bases = maybe_aggregate(test_bases)?;

    // Per-base evaluation on the held-out side; macro recall drives
    // model selection.
    let mut recalls = BTreeMap::new();
    for pm in &test_bases {
        let id = pm.model_id().to_string();
        let outcome = evaluate_predictions(pm, map, granularity, &id)?;
        std::fs::write(work_dir.join(format!("eval_{id}.json")), &outcome.json)?;
        std::fs::write(
            work_dir.join(format!("confusion_{id}.csv")),
            outcome.report.confusion.to_csv(),
        )?;
        println!(
            "eval {id}: accuracy {}, macro recall {}",
            fmt_sig(outcome.report.accuracy),
            fmt_sig(outcome.report.macro_avg.recall)
        );
        recalls.insert(id, round_sig(outcome.report.macro_avg.recall));
    }

    let top = ensemble::select_top_k_models(&recalls, BASE_COUNT.min(recalls.len()))?;
    std::fs::write(
        work_dir.join("top_models.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "selected": top }))? + "\n",
    )?;
    println!("top models: {}", top.join(", "));

    let pick = |bases: &[PredictionMatrix]| -> Vec<PredictionMatrix> {
        top.iter()
            .filter_map(|id| bases.iter().find(|b| b.model_id() == id).cloned())
            .collect()
    };
    let ordered_train = pick(&train_bases);
    let ordered_test = pick(&test_bases);

    if matches!(mode, EnsembleMode::Stack | EnsembleMode::Both) {
        let labels = labels_for(&ordered_train[0], map)?;
        let model = ensemble::stack_train(&ordered_train, &labels, stack_config)?;
        std::fs::write(
            work_dir.join("stack_model.json"),
            serde_json::to_string_pretty(&model)? + "\n",
        )?;
        let preds_path = work_dir.join("preds_test_stack.csv");
        ensemble::stack_predict(&model, &ordered_test)?.save_csv(&preds_path)?;
        let pm = learner::load_predictions(&preds_path, "stack")?;
        let outcome = evaluate_predictions(&pm, map, granularity, "stack")?;
        std::fs::write(work_dir.join("eval_stack.json"), &outcome.json)?;
        std::fs::write(
            work_dir.join("confusion_stack.csv"),
            outcome.report.confusion.to_csv(),
        )?;
        println!(
            "stack: accuracy {}, macro recall {}",
            fmt_sig(outcome.report.accuracy),
            fmt_sig(outcome.report.macro_avg.recall)
        );
        write_roc(work_dir, "roc_stack", &pm, map, granularity)?;
    }

    if matches!(mode, EnsembleMode::Vote | EnsembleMode::Both) {
        let results = ensemble::majority_vote(&ordered_test)?;
        std::fs::write(work_dir.join("votes_test.csv"), ensemble::votes_to_csv(&results))?;
        let scores_path = work_dir.join("preds_test_vote.csv");
        ensemble::mean_softmax(&ordered_test, "vote")?.save_csv(&scores_path)?;

        let truth: Vec<Label> = results
            .iter()
            .map(|r| {
                let scan = scan_of_sample(&r.id);
                map.get(scan).copied().ok_or_else(|| {
                    CliError::Input(format!("vote sample '{}' not in manifest", r.id))
                })
            })
            .collect::<Result<_>>()?;
        let decisions: Vec<Label> = results.iter().map(|r| r.decision).collect();
        let tie_fraction = ensemble::tie_fraction(&results);
        let report = entroscan::metrics::MetricsReport::from_labels(&truth, &decisions)?;
        let json =
            ReportJson::new("vote", granularity.as_str(), &report, Some(tie_fraction)).to_json();
        std::fs::write(work_dir.join("eval_vote.json"), json)?;
        std::fs::write(
            work_dir.join("confusion_vote.csv"),
            report.confusion.to_csv(),
        )?;
        println!(
            "vote: accuracy {}, macro recall {}, tie fraction {}",
            fmt_sig(report.accuracy),
            fmt_sig(report.macro_avg.recall),
            fmt_sig(tie_fraction)
        );

        let pm = learner::load_predictions(&scores_path, "vote")?;
        write_roc(work_dir, "roc_vote", &pm, map, granularity)?;
    }

    println!("pipeline: done, artifacts in {}", work_dir.display());
    Ok(())
}

fn write_roc(
    work_dir: &Path,
    prefix: &str,
    pm: &PredictionMatrix,
    map: &BTreeMap<String, Label>,
    granularity: Granularity,
) -> Result<()> {
    let pm = match granularity {
        Granularity::Slice => pm.clone(),
        Granularity::Scan => ensemble::aggregate_scans(pm)?,
    };
    let truth = labels_for(&pm, map)?;
    for (class, path) in roc_paths(&work_dir.join(prefix)) {
        let curve = roc_one_vs_all(&pm, &truth, class)?;
        std::fs::write(&path, curve.to_csv())?;
        println!("{prefix} {class}: auc {}", fmt_sig(curve.auc));
    }
    Ok(())
}
