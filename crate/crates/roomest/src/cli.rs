//! `roomest` subcommands. Exit status: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomest_core::dataset::{RecipeConfig, SplitConfig};
use roomest_core::features::{compute_mfcc, MfccConfig};
use roomest_core::nn::{
    gradient_check, Estimator, LayerSpec, Model, ModelKind, ModelSpec, Tensor, TrainConfig,
};
use roomest_core::noise::{gen_pink, gen_white};
use roomest_core::rir::{analyze_rir, ANALYZER_VERSION};
use roomest_core::wada::{build_wada_table, wada_snr, WadaTable, MIN_SAMPLES_PER_POINT};
use roomest_core::{nn::Act, AcousticLabel, Param};
use serde::Serialize;

use crate::corpus::{write_corpus, CorpusConfig};
use crate::formats::{read_wada_table, read_weights, write_wada_table, write_weights};
use crate::pipeline::{
    build_dataset, dataset_feature_config, evaluate, featurize, gen_manifest, load_split,
    read_json, train_on, write_json, ManifestRequest,
};
use crate::wav::{read_wav, write_wav};
use crate::Error;

#[derive(Parser, Debug)]
#[command(
    name = "roomest",
    version,
    about = "Room acoustic parameter estimation from speech"
)]
pub struct Cli {
    /// Master seed (overrides config files where they carry one).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NoiseArg {
    White,
    Pink,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelArg {
    Crnn,
    #[value(name = "baseline_cnn", alias = "baseline-cnn")]
    BaselineCnn,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Crnn => ModelKind::Crnn,
            ModelArg::BaselineCnn => ModelKind::BaselineCnn,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ground-truth parameters of room impulse responses.
    AnalyzeRir {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        /// CSV output (the default unless --json).
        #[arg(long, conflicts_with = "json")]
        csv: bool,
    },
    /// Generated noise to a WAV file.
    MakeNoise {
        #[arg(long, value_enum)]
        kind: NoiseArg,
        #[arg(long)]
        seconds: f64,
        #[arg(long, default_value_t = 16_000)]
        rate: u32,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Synthetic speech-like and RIR source files.
    MakeCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        speech_files: usize,
        #[arg(long, default_value_t = 60.0)]
        speech_seconds: f64,
        #[arg(long, default_value_t = 200)]
        rirs: usize,
    },
    /// Splits sources and draws example recipes.
    GenManifest {
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        rirs: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        reverb_free: f64,
        #[arg(long, default_value_t = 0.1)]
        noise_free: f64,
        #[arg(short, long, default_value = "manifest.json")]
        out: PathBuf,
    },
    /// Renders every recipe of a manifest.
    SynthDataset {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// MFCC feature files for a dataset directory.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Trains a model on the train split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss history as JSON.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// MAE tables on the test split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Calibration CSV (`param,bin_lo,bin_hi,n,mean_pred,std_pred`).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Six parameters of one recording.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
    },
    /// Blind SNR of one recording.
    Wada {
        #[arg(long)]
        wav: PathBuf,
        /// Table cache; built and written when missing or stamped with another seed.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = MIN_SAMPLES_PER_POINT)]
        samples: usize,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Data(Error::io(Path::new("<stdout>"), e)))
}

fn json_line<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<(), Failure> {
    let mut s = serde_json::to_string(v).map_err(Error::from)?;
    s.push('\n');
    emit(out, &s)
}

#[derive(Serialize)]
struct RirRecord<'a> {
    file: String,
    rt60_s: f64,
    drr_db: f64,
    c50_db: f64,
    c80_db: f64,
    sti: f64,
    flags: String,
    analyzer: &'a str,
}

#[derive(Serialize)]
struct Estimate {
    rt60_s: f64,
    drr_db: f64,
    c50_db: f64,
    c80_db: f64,
    sti: f64,
    snr_db: f64,
}

impl From<&AcousticLabel> for Estimate {
    fn from(l: &AcousticLabel) -> Self {
        Self {
            rt60_s: l.rt60,
            drr_db: l.drr,
            c50_db: l.c50,
            c80_db: l.c80,
            sti: l.sti,
            snr_db: l.snr.unwrap_or(f64::NAN),
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::AnalyzeRir { wavs, csv: _ } => {
            let mut w = (!cli.json).then(|| csv::Writer::from_writer(Vec::new()));
            for p in wavs {
                let l = analyze_rir(&read_wav(p)?).map_err(Error::from)?;
                let rec = RirRecord {
                    file: p.display().to_string(),
                    rt60_s: l.rt60,
                    drr_db: l.drr,
                    c50_db: l.c50,
                    c80_db: l.c80,
                    sti: l.sti,
                    flags: l.flags.to_names(),
                    analyzer: ANALYZER_VERSION,
                };
                match &mut w {
                    Some(w) => w.serialize(&rec).map_err(Error::from)?,
                    None => json_line(out, &rec)?,
                }
            }
            if let Some(w) = w {
                let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
                emit(out, &String::from_utf8_lossy(&bytes))?;
            }
        }
        Command::MakeNoise {
            kind,
            seconds,
            rate,
            out: path,
        } => {
            if seconds.is_nan() || *seconds <= 0.0 || *rate == 0 {
                return Err(Failure::Usage(
                    "--seconds and --rate must be positive".into(),
                ));
            }
            let n = (seconds * *rate as f64).round() as usize;
            let s = match kind {
                NoiseArg::White => gen_white(n, seed, *rate),
                NoiseArg::Pink => gen_pink(n, seed, *rate),
            }
            .map_err(Error::from)?;
            write_wav(path, &s)?;
        }
        Command::MakeCorpus {
            out: dir,
            speech_files,
            speech_seconds,
            rirs,
        } => {
            write_corpus(
                dir,
                &CorpusConfig {
                    speech_files: *speech_files,
                    speech_seconds: *speech_seconds,
                    rirs: *rirs,
                    seed,
                },
            )?;
        }
        Command::GenManifest {
            speech,
            rirs,
            noise,
            count,
            reverb_free,
            noise_free,
            out: path,
        } => {
            let m = gen_manifest(&ManifestRequest {
                speech_dir: speech,
                rir_dir: rirs,
                noise_dir: noise.as_deref(),
                seed,
                split: SplitConfig::default(),
                recipes: RecipeConfig {
                    count: *count,
                    reverb_free_fraction: *reverb_free,
                    noise_free_fraction: *noise_free,
                },
            })?;
            write_json(path, &m)?;
        }
        Command::SynthDataset { manifest, out: dir } => {
            let mut m = read_json(manifest)?;
            let s = build_dataset(&mut m, dir, cli.jobs)?;
            if cli.json {
                json_line(
                    out,
                    &serde_json::json!({ "written": s.written, "skipped": s.skipped }),
                )?;
            } else {
                emit(
                    out,
                    &format!(
                        "{} examples written, {} skipped\n",
                        s.written,
                        s.skipped.len()
                    ),
                )?;
            }
        }
        Command::Featurize {
            input,
            out: dir,
            config,
        } => {
            let cfg: MfccConfig = match config {
                Some(p) => read_json(p)?,
                None => MfccConfig::default(),
            };
            let n = featurize(input, dir, &cfg, cli.jobs)?;
            emit(out, &format!("{n} feature files written\n"))?;
        }
        Command::Train {
            dataset,
            model,
            config,
            out: path,
            history,
        } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let fcfg = dataset_feature_config(dataset)?;
            let data = load_split(
                dataset,
                roomest_core::dataset::Split::Train,
                &fcfg,
                cli.jobs,
            )?;
            let mut log = |r: &roomest_core::nn::EpochRecord| {
                log::info!(
                    "epoch {} train {:.5} val {:.5} updates {}",
                    r.epoch,
                    r.train_loss,
                    r.val_loss,
                    r.updates
                )
            };
            let res = train_on(&data, (*model).into(), &cfg, &mut log)?;
            write_weights(path, &res.store)?;
            if let Some(h) = history {
                write_json(h, &res.outcome.history)?;
            }
            let summary = serde_json::json!({
                "best_epoch": res.outcome.best_epoch,
                "best_val_loss": res.outcome.best_val_loss,
                "epochs": res.outcome.history.len(),
                "stop": format!("{:?}", res.outcome.stop),
            });
            json_line(out, &summary)?;
        }
        Command::Evaluate {
            model,
            dataset,
            out: path,
            calibration,
        } => {
            let report = evaluate(read_weights(model)?, dataset, cli.jobs)?;
            write_json(path, &report)?;
            if let Some(c) = calibration {
                let mut w = csv::Writer::from_path(c).map_err(Error::from)?;
                for row in report.calibration() {
                    w.serialize(&row).map_err(Error::from)?;
                }
                w.flush().map_err(|e| Error::io(c, e))?;
            }
            emit(out, &report.mae_table())?;
            emit(out, "\n")?;
            emit(out, &report.binned_table())?;
        }
        Command::Estimate { model, wav } => {
            let store = read_weights(model)?;
            let est = Estimator::new(store).map_err(Error::from)?;
            let cfg = MfccConfig::default();
            let s = read_wav(wav)?
                .resample(cfg.sample_rate)
                .map_err(Error::from)?;
            let f = compute_mfcc(&s, &cfg).map_err(Error::from)?;
            let l = est.predict(&f).map_err(Error::from)?;
            if cli.json {
                json_line(out, &Estimate::from(&l))?;
            } else {
                let mut text = String::new();
                for p in Param::ALL {
                    text.push_str(&format!(
                        "{:<6} {:>9.3} {}\n",
                        p.name(),
                        l.get(p).unwrap_or(f64::NAN),
                        p.unit()
                    ));
                }
                emit(out, &text)?;
            }
        }
        Command::Wada {
            wav,
            table,
            samples,
        } => {
            let t = wada_table(table.as_deref(), seed, *samples)?;
            let snr = wada_snr(&read_wav(wav)?, &t).map_err(Error::from)?;
            if cli.json {
                json_line(out, &serde_json::json!({ "snr_db": snr }))?;
            } else {
                emit(out, &format!("{snr:.2} dB\n"))?;
            }
        }
        Command::Gradcheck { eps } => {
            let mut failed = false;
            for (name, limit, rel) in gradcheck_suite(*eps)? {
                let ok = rel < limit;
                failed |= !ok;
                if cli.json {
                    json_line(
                        out,
                        &serde_json::json!({ "case": name, "max_rel_error": rel, "limit": limit, "pass": ok }),
                    )?;
                } else {
                    emit(
                        out,
                        &format!(
                            "{name:<28} {rel:.3e} (limit {limit:.0e}) {}\n",
                            if ok { "ok" } else { "FAIL" }
                        ),
                    )?;
                }
            }
            if failed {
                return Err(Error::Format("gradient check failed".into()).into());
            }
        }
    }
    Ok(())
}

/// Default cache location of the WADA table for `seed`.
pub fn default_table_path(seed: u64, samples: usize) -> PathBuf {
    std::env::temp_dir().join(format!("roomest-wada-{seed}-{samples}.bin"))
}

/// Loads the cached table when its seed and sample count match, else builds and caches it.
pub fn wada_table(path: Option<&Path>, seed: u64, samples: usize) -> Result<WadaTable, Error> {
    let path = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_table_path(seed, samples));
    if path.exists() {
        match read_wada_table(&path) {
            Ok(t) if t.seed == seed && t.samples_per_point == samples => return Ok(t),
            Ok(_) => log::info!("{}: stamped with another seed, rebuilding", path.display()),
            Err(e) => log::warn!("{}: {e}, rebuilding", path.display()),
        }
    }
    let t = build_wada_table(seed, samples)?;
    write_wada_table(&path, &t)?;
    Ok(t)
}

/// `(case, limit, max relative error)` for the three reference networks.
pub fn gradcheck_suite(eps: f64) -> Result<Vec<(&'static str, f64, f64)>, Error> {
    let cases: [(&str, f64, Vec<LayerSpec>, usize, usize, Vec<usize>); 3] = [
        (
            "dense",
            1e-6,
            vec![
                LayerSpec::TimeFlatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Dense { units: 3 },
            ],
            2,
            4,
            vec![3, 2, 3],
        ),
        (
            "conv_batchnorm_pool_elu",
            1e-5,
            vec![
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters: 3,
                },
                LayerSpec::BatchNorm,
                LayerSpec::Activation { act: Act::Elu },
                LayerSpec::MaxPool,
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters: 2,
                },
                LayerSpec::GlobalFlatten,
                LayerSpec::Dense { units: 6 },
            ],
            6,
            5,
            vec![3, 6],
        ),
        (
            "gru_two_layer_seven_steps",
            1e-5,
            vec![
                LayerSpec::TimeFlatten,
                LayerSpec::Gru {
                    units: 4,
                    return_sequences: true,
                },
                LayerSpec::Gru {
                    units: 3,
                    return_sequences: false,
                },
                LayerSpec::Dense { units: 6 },
            ],
            7,
            3,
            vec![3, 6],
        ),
    ];
    let random = |shape: &[usize], seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
    };
    let mut out = Vec::new();
    for (name, limit, layers, frames, coeffs, target) in cases {
        let spec = ModelSpec {
            name: name.into(),
            input_frames: frames,
            input_coeffs: coeffs,
            layers,
        };
        let mut m = Model::<f64>::new(spec, 7)?;
        let x = random(&[3, 1, frames, coeffs], 1)?;
        let r = gradient_check(&mut m, &x, &random(&target, 2)?, eps)?;
        out.push((name, limit, r.max_rel_error));
    }
    Ok(out)
}
