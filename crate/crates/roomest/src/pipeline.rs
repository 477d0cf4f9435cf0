//! Dataset synthesis, featurization, training and evaluation over directories.
//!
//! A dataset directory holds `labels.csv`, `manifest.json` and one `<id>.wav`
//! per example; `featurize` adds `<id>.rsft` files next to copies of both.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use log::{info, warn};
use rayon::prelude::*;
use roomest_core::dataset::{
    chunk_count, generate_recipes, make_splits, synthesize_example, train_label_stats,
    DatasetError, DatasetManifest, RecipeConfig, Sources, Split, SplitConfig,
};
use roomest_core::eval::{EvalReport, Pair};
use roomest_core::features::{compute_mfcc, standardize, FeatureMatrix, FeatureStats, MfccConfig};
use roomest_core::fingerprint::Fingerprint;
use roomest_core::nn::{
    train, validation_split, EpochRecord, Estimator, Model, ModelKind, ModelSpec, Samples,
    TrainConfig, TrainOutcome, WeightStore,
};
use roomest_core::rir::analyze_rir;
use roomest_core::{AcousticLabel, LabelFlags, LabelStats, Signal, PIPELINE_RATE};

use crate::formats::{read_features, write_features};
use crate::labels::{encode_labels, read_labels, LabelRow};
use crate::wav::{read_wav, wav_info, write_wav};
use crate::Error;

pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURE_CONFIG_FILE: &str = "features.json";

/// Model input dropout used by every CLI-built network.
pub const DROPOUT: f64 = 0.2;

fn create_dir(d: &Path) -> Result<(), Error> {
    fs::create_dir_all(d).map_err(|e| Error::io(d, e))
}

/// Thread pool of `jobs` workers (0 = rayon default).
pub fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

/// Sorted `*.wav` paths directly under `dir`.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn path_string(p: &Path) -> Result<String, Error> {
    let abs = fs::canonicalize(p).map_err(|e| Error::io(p, e))?;
    abs.to_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::Format(format!("{}: path is not UTF-8", abs.display())))
}

pub struct ManifestRequest<'a> {
    pub speech_dir: &'a Path,
    pub rir_dir: &'a Path,
    pub noise_dir: Option<&'a Path>,
    pub seed: u64,
    pub split: SplitConfig,
    pub recipes: RecipeConfig,
}

/// Scans the source directories and draws the recipes. Paths are stored absolute.
pub fn gen_manifest(req: &ManifestRequest<'_>) -> Result<DatasetManifest, Error> {
    let to_strings = |d: &Path| -> Result<Vec<String>, Error> {
        list_wavs(d)?.iter().map(|p| path_string(p)).collect()
    };
    let speech = to_strings(req.speech_dir)?;
    let rirs = to_strings(req.rir_dir)?;
    let noise = match req.noise_dir {
        Some(d) => to_strings(d)?,
        None => Vec::new(),
    };
    let mut chunks = BTreeMap::new();
    for s in &speech {
        let (len, rate) = wav_info(Path::new(s))?;
        chunks.insert(s.clone(), chunk_count(len, rate));
    }
    let splits = make_splits(&speech, &rirs, req.seed, &req.split)?;
    Ok(generate_recipes(
        splits,
        &chunks,
        &noise,
        req.seed,
        req.split,
        req.recipes,
    )?)
}

/// WAV-backed [`Sources`] with a cache of decoded files and RIR analyses.
#[derive(Default)]
pub struct FileSources {
    signals: Mutex<HashMap<String, Arc<Signal>>>,
    rooms: Mutex<HashMap<String, AcousticLabel>>,
}

impl FileSources {
    fn load(&self, path: &str) -> Result<Signal, DatasetError> {
        if let Some(s) = self.signals.lock().unwrap().get(path) {
            return Ok((**s).clone());
        }
        let s = read_wav(Path::new(path)).map_err(|e| DatasetError::Source {
            path: path.into(),
            reason: e.to_string(),
        })?;
        self.signals
            .lock()
            .unwrap()
            .insert(path.into(), Arc::new(s.clone()));
        Ok(s)
    }

    /// Analysis of the RIR at the pipeline rate, computed once per file.
    pub fn room(&self, path: &str) -> Result<AcousticLabel, DatasetError> {
        if let Some(l) = self.rooms.lock().unwrap().get(path) {
            return Ok(*l);
        }
        let h = self.load(path)?.resample(PIPELINE_RATE)?;
        let l = analyze_rir(&h)?;
        self.rooms.lock().unwrap().insert(path.into(), l);
        Ok(l)
    }
}

impl Sources for FileSources {
    fn speech(&self, path: &str) -> Result<Signal, DatasetError> {
        self.load(path)
    }
    fn rir(&self, path: &str) -> Result<Signal, DatasetError> {
        self.load(path)
    }
    fn noise(&self, path: &str) -> Result<Signal, DatasetError> {
        self.load(path)
    }
}

#[derive(Debug, Default)]
pub struct BuildSummary {
    pub written: usize,
    pub skipped: Vec<(String, String)>,
}

/// Synthesizes every recipe into `out/<id>.wav`, then writes `labels.csv` and the
/// manifest with labels and train-split label statistics filled in. Failed recipes
/// are logged and left out. Output does not depend on `jobs`.
pub fn build_dataset(
    manifest: &mut DatasetManifest,
    out: &Path,
    jobs: usize,
) -> Result<BuildSummary, Error> {
    create_dir(out)?;
    let sources = FileSources::default();
    let results: Vec<Result<AcousticLabel, Error>> = pool(jobs).install(|| {
        manifest
            .entries
            .par_iter()
            .map(|r| {
                let room = r.rir.as_deref().map(|p| sources.room(p)).transpose()?;
                let ex = synthesize_example(r, &sources, room)?;
                write_wav(&out.join(format!("{}.wav", r.id)), &ex.mixture)?;
                Ok(ex.label)
            })
            .collect()
    });
    let mut summary = BuildSummary::default();
    let mut rows = Vec::new();
    for (r, res) in manifest.entries.iter_mut().zip(results) {
        match res {
            Ok(label) => {
                r.label = Some(label);
                rows.push(LabelRow::new(&r.id, r.split, &label));
                summary.written += 1;
            }
            Err(e) => {
                warn!("skipping {}: {e}", r.id);
                r.label = None;
                summary.skipped.push((r.id.clone(), e.to_string()));
            }
        }
    }
    manifest.label_stats = train_label_stats(&manifest.entries);
    let labels = out.join(LABELS_FILE);
    fs::write(&labels, encode_labels(&rows)?).map_err(|e| Error::io(&labels, e))?;
    write_json(&out.join(MANIFEST_FILE), manifest)?;
    info!(
        "wrote {} examples, skipped {}",
        summary.written,
        summary.skipped.len()
    );
    Ok(summary)
}

pub fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// MFCCs of every example in `input` into `out/<id>.rsft`, with the label CSV,
/// manifest and feature config copied alongside.
pub fn featurize(input: &Path, out: &Path, cfg: &MfccConfig, jobs: usize) -> Result<usize, Error> {
    cfg.validate()?;
    create_dir(out)?;
    let rows = read_labels(&input.join(LABELS_FILE))?;
    pool(jobs).install(|| {
        rows.par_iter().try_for_each(|r| -> Result<(), Error> {
            let s = read_wav(&input.join(format!("{}.wav", r.id)))?.resample(cfg.sample_rate)?;
            write_features(&out.join(format!("{}.rsft", r.id)), &compute_mfcc(&s, cfg)?)
        })
    })?;
    if input != out {
        for f in [LABELS_FILE, MANIFEST_FILE] {
            let src = input.join(f);
            if src.exists() {
                fs::copy(&src, out.join(f)).map_err(|e| Error::io(&src, e))?;
            }
        }
    }
    write_json(&out.join(FEATURE_CONFIG_FILE), cfg)?;
    Ok(rows.len())
}

/// Examples of one split with their features.
pub struct LoadedSplit {
    pub rows: Vec<LabelRow>,
    pub labels: Vec<AcousticLabel>,
    pub features: Vec<FeatureMatrix>,
    /// Identity of the label file the rows came from.
    pub fingerprint: Fingerprint,
}

/// Feature config of a dataset directory: `features.json` when present, else the default.
pub fn dataset_feature_config(dir: &Path) -> Result<MfccConfig, Error> {
    let p = dir.join(FEATURE_CONFIG_FILE);
    if p.exists() {
        read_json(&p)
    } else {
        Ok(MfccConfig::default())
    }
}

/// Reads `<id>.rsft` when it exists, otherwise computes MFCCs from `<id>.wav`.
/// Examples flagged silent are dropped.
pub fn load_split(
    dir: &Path,
    split: Split,
    cfg: &MfccConfig,
    jobs: usize,
) -> Result<LoadedSplit, Error> {
    let label_path = dir.join(LABELS_FILE);
    let bytes = fs::read(&label_path).map_err(|e| Error::io(&label_path, e))?;
    let rows: Vec<LabelRow> = read_labels(&label_path)?
        .into_iter()
        .filter(|r| r.split == split)
        .collect();
    let labels = rows
        .iter()
        .map(LabelRow::label)
        .collect::<Result<Vec<_>, _>>()?;
    let keep: Vec<usize> = (0..rows.len())
        .filter(|&i| !labels[i].flags.contains(LabelFlags::SILENT))
        .collect();
    let rows: Vec<LabelRow> = keep.iter().map(|&i| rows[i].clone()).collect();
    let labels: Vec<AcousticLabel> = keep.iter().map(|&i| labels[i]).collect();
    let features = pool(jobs).install(|| {
        rows.par_iter()
            .map(|r| -> Result<FeatureMatrix, Error> {
                let rsft = dir.join(format!("{}.rsft", r.id));
                if rsft.exists() {
                    read_features(&rsft)
                } else {
                    let s =
                        read_wav(&dir.join(format!("{}.wav", r.id)))?.resample(cfg.sample_rate)?;
                    Ok(compute_mfcc(&s, cfg)?)
                }
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(LoadedSplit {
        rows,
        labels,
        features,
        fingerprint: Fingerprint::of(&bytes),
    })
}

pub struct TrainResult {
    pub store: WeightStore,
    pub outcome: TrainOutcome,
}

/// Trains on the train split of `data`. Feature and target statistics come from
/// the whole train split; `cfg.validation_fraction` of it is held out for early stopping.
pub fn train_on(
    data: &LoadedSplit,
    kind: ModelKind,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainResult, Error> {
    if data.features.is_empty() {
        return Err(DatasetError::EmptySourceList("train example").into());
    }
    let fp = data.features[0].fingerprint();
    if data.features.iter().any(|f| f.fingerprint() != fp) {
        return Err(Error::Format(
            "train features were computed with different configs".into(),
        ));
    }
    let feature_stats = FeatureStats::from_matrices(&data.features)?;
    let target_stats = LabelStats::from_labels(&data.labels)
        .ok_or_else(|| Error::Format("train labels are missing an SNR or are not finite".into()))?;
    let inputs = data
        .features
        .iter()
        .map(|f| standardize(f, &feature_stats))
        .collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<[f64; 6]> = data
        .labels
        .iter()
        .map(|l| target_stats.standardize(l.to_array()))
        .collect();
    let (tr, va) = validation_split(inputs.len(), cfg.validation_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> (Vec<&FeatureMatrix>, Vec<[f64; 6]>) {
        (
            idx.iter().map(|&i| &inputs[i]).collect(),
            idx.iter().map(|&i| targets[i]).collect(),
        )
    };
    let (tr_x, tr_y) = pick(&tr);
    let (va_x, va_y) = pick(&va);
    let spec = ModelSpec::new(kind, inputs[0].rows(), inputs[0].cols(), DROPOUT);
    let mut model = Model::<f32>::new(spec, cfg.seed)?;
    let outcome = train(
        &mut model,
        Samples {
            inputs: &tr_x,
            targets: &tr_y,
        },
        Samples {
            inputs: &va_x,
            targets: &va_y,
        },
        cfg,
        on_epoch,
    )?;
    let store = WeightStore::from_model(&mut model, fp, feature_stats, target_stats);
    Ok(TrainResult { store, outcome })
}

/// Predictions for every example of `data`, parallel over batches.
pub fn predict_split(
    est: &Estimator,
    data: &LoadedSplit,
    jobs: usize,
) -> Result<Vec<AcousticLabel>, Error> {
    const BATCH: usize = 8;
    let refs: Vec<&FeatureMatrix> = data.features.iter().collect();
    let parts = pool(jobs).install(|| {
        refs.par_chunks(BATCH)
            .map(|c| est.predict_batch(c, BATCH))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn pairs(data: &LoadedSplit, preds: &[AcousticLabel]) -> Vec<Pair> {
    data.rows
        .iter()
        .zip(&data.labels)
        .zip(preds)
        .map(|((r, t), p)| Pair {
            id: r.id.clone(),
            truth: *t,
            pred: *p,
        })
        .collect()
}

/// Evaluates a weight store on the test split of `dir`.
pub fn evaluate(store: WeightStore, dir: &Path, jobs: usize) -> Result<EvalReport, Error> {
    let model_fp = store.model_fingerprint;
    let cfg = dataset_feature_config(dir)?;
    let est = Estimator::new(store)?;
    let data = load_split(dir, Split::Test, &cfg, jobs)?;
    let preds = predict_split(&est, &data, jobs)?;
    Ok(EvalReport::build(
        pairs(&data, &preds),
        model_fp,
        data.fingerprint,
    )?)
}

/// Every prediction equal to the training-set mean label.
pub fn mean_predictor_report(train: &LoadedSplit, test: &LoadedSplit) -> Result<EvalReport, Error> {
    let stats = LabelStats::from_labels(&train.labels)
        .ok_or_else(|| Error::Format("train labels are missing an SNR or are not finite".into()))?;
    let mean = AcousticLabel::from_array(stats.mean, LabelFlags::NONE);
    let preds = vec![mean; test.labels.len()];
    Ok(EvalReport::build(
        pairs(test, &preds),
        Fingerprint::of(b"train-mean"),
        test.fingerprint,
    )?)
}
