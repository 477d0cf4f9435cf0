//! Acceptance criteria 1-13, one line each.
//!
//! Desk-scale sizes can be changed with `ROOMEST_DESK_EXAMPLES` (default 600)
//! and `ROOMEST_DESK_EPOCHS` (default 20). `ROOMEST_ACCEPT_ONLY=1,4,9` runs a subset.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomest::cli;
use roomest::corpus::{write_corpus, CorpusConfig};
use roomest::pipeline::{
    build_dataset, gen_manifest, load_split, mean_predictor_report, pairs, predict_split, train_on,
    LoadedSplit, ManifestRequest, DROPOUT,
};
use roomest_core::dataset::{
    synthesize_example, ExampleRecipe, MemorySources, RecipeConfig, Split, SplitConfig, SNR_MAX_DB,
    SNR_MIN_DB,
};
use roomest_core::eval::EvalReport;
use roomest_core::features::{
    compute_mfcc, standardize, FeatureMatrix, FeatureStats, Mfcc, MfccConfig,
};
use roomest_core::nn::{
    build_model, evaluate_mse, stack_features, train_step, Adam, AdamConfig, Estimator, LayerSpec,
    Model, ModelKind, ModelSpec, Samples, TrainConfig,
};
use roomest_core::noise::{
    band_slope_db_per_octave, gen_pink, gen_white, measured_snr, welch_psd, NoiseKind, NoiseSpec,
    SLOPE_BAND_EDGES,
};
use roomest_core::rir::{
    align_onset, analyze_rir, compute_sti, energy_ratio, estimate_rt60, schroeder_decay,
    C50_SPLIT_MS, C80_SPLIT_MS, DRR_SPLIT_MS,
};
use roomest_core::synth::{
    draw_room, exponential_rir, noise_rir, render_room, speech_like, two_slope_rir,
};
use roomest_core::wada::{build_wada_table, gamma_speech, wada_snr, MIN_SAMPLES_PER_POINT};
use roomest_core::{AcousticLabel, LabelStats, Param, Signal};

const FS: u32 = 16_000;

enum Verdict {
    Pass,
    Fail,
    /// Soft criterion not met: reported, never fatal.
    Warn,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

/// Criteria that cannot be met as stated; see the decisions ledger. They still print FAIL.
const UNATTAINABLE: &[usize] = &[8];

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn c1_rt60() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for t in [0.2, 0.5, 1.0, 2.0] {
        let h = exponential_rir(t, FS, 1.5 * t + 0.5);
        let start = Instant::now();
        let est = estimate_rt60(&schroeder_decay(&align_onset(&h).unwrap()).unwrap()).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        worst = worst.max((est - t).abs() / t);
    }
    check(
        worst < 0.02 && slowest < 1.0,
        format!(
            "max rel err {:.3}%, slowest {:.3} s",
            worst * 100.0,
            slowest
        ),
    )
}

/// Direct summation in f64 over the onset-aligned response; the split sample belongs to the late part.
fn ratio_oracle(h: &[f32], split_ms: f64) -> f64 {
    let peak = h.iter().fold(0.0f32, |m, x| m.max(x.abs()));
    let onset = h.iter().position(|x| x.abs() >= 0.05 * peak).unwrap();
    let h = &h[onset..];
    let split = ((split_ms * FS as f64 / 1000.0).ceil() as usize).min(h.len());
    let (mut early, mut late) = (0.0f64, 0.0f64);
    for (i, &x) in h.iter().enumerate() {
        let e = x as f64 * x as f64;
        if i < split {
            early += e;
        } else {
            late += e;
        }
    }
    10.0 * (early / late).log10()
}

fn c2_ratios() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut nesting_violations = 0;
    let mut finite = 0;
    for i in 0..100 {
        let t = rng.random_range(0.1..2.5);
        let direct = rng.random_range(0.0..30.0);
        let h = if i % 2 == 0 {
            noise_rir(t, direct, FS, 1.2 * t + 0.3, i)
        } else {
            two_slope_rir(t * 0.5, t, 0.2, direct, FS, 1.2 * t + 0.3, i)
        };
        let aligned = align_onset(&h).unwrap();
        let mut vals = [0.0; 3];
        for (k, ms) in [DRR_SPLIT_MS, C50_SPLIT_MS, C80_SPLIT_MS]
            .into_iter()
            .enumerate()
        {
            let got = energy_ratio(&aligned, ms).unwrap();
            worst = worst.max((got - ratio_oracle(h.samples(), ms)).abs());
            vals[k] = got;
        }
        if vals.iter().all(|v| v.is_finite()) {
            finite += 1;
            if !(vals[2] >= vals[1] && vals[1] >= vals[0]) {
                nesting_violations += 1;
            }
        }
    }
    check(
        worst < 0.01 && nesting_violations == 0,
        format!("max |diff| {worst:.2e} dB, nesting violations {nesting_violations}/{finite}"),
    )
}

fn c3_sti() -> Outcome {
    let unit = compute_sti(&Signal::new(vec![1.0], FS).unwrap())
        .unwrap()
        .sti;
    let stis: Vec<f64> = [0.1, 0.3, 0.6, 1.2, 2.4]
        .iter()
        .map(|&t| {
            compute_sti(&noise_rir(t, 0.0, FS, 1.5 * t + 0.5, 3))
                .unwrap()
                .sti
        })
        .collect();
    let decreasing = stis.windows(2).all(|w| w[1] < w[0]);
    let list: Vec<String> = stis.iter().map(|s| format!("{s:.3}")).collect();
    check(
        unit == 1.0 && decreasing,
        format!("unit impulse {unit}, T sweep [{}]", list.join(", ")),
    )
}

fn c4_mixer() -> Outcome {
    let mut src = MemorySources::default();
    src.0.insert("speech".into(), speech_like(17.0, FS, 4));
    src.0.insert(
        "room".into(),
        render_room(&draw_room(&mut ChaCha8Rng::seed_from_u64(4)), FS, 4),
    );
    let mut worst: f64 = 0.0;
    for (i, target) in (SNR_MIN_DB..=SNR_MAX_DB).enumerate() {
        let kind = if i % 2 == 0 {
            NoiseKind::White
        } else {
            NoiseKind::Pink
        };
        let r = ExampleRecipe {
            id: format!("{i:06}"),
            split: Split::Train,
            speech: "speech".into(),
            chunk: i % 2,
            rir: Some("room".into()),
            noise: NoiseSpec::generated(kind, 100 + i as u64),
            target_snr: Some(target),
            label: None,
        };
        let out = synthesize_example(&r, &src, None).unwrap();
        let snr = measured_snr(&out.speech, out.noise.as_ref().unwrap()).unwrap();
        worst = worst.max((snr - target as f64).abs());
    }
    check(
        worst < 0.01,
        format!("30 targets, max |measured - target| {worst:.2e} dB"),
    )
}

fn c5_noise_slopes() -> Outcome {
    let n = 20 * FS as usize;
    let slope = |s: Signal| band_slope_db_per_octave(&welch_psd(&s, 4096), FS, &SLOPE_BAND_EDGES);
    let pink = slope(gen_pink(n, 5, FS).unwrap());
    let white = slope(gen_white(n, 5, FS).unwrap());
    check(
        (pink + 3.0).abs() <= 0.5 && white.abs() <= 0.5,
        format!("pink {pink:+.2} dB/oct, white {white:+.2} dB/oct"),
    )
}

fn c6_mfcc() -> Outcome {
    let cfg = MfccConfig::default();
    let s = speech_like(8.0, FS, 6);
    let f = compute_mfcc(&s, &cfg).unwrap();
    let shape_ok = (f.rows(), f.cols()) == (798, 32);

    let full = Mfcc::new(MfccConfig {
        num_coeffs: 40,
        ..cfg.clone()
    })
    .unwrap();
    let mut dct_err: f64 = 0.0;
    for start in [0usize, 16_000, 64_000] {
        let log_mel = full.log_mel(&s.samples()[start..start + 400]);
        let c = full.cepstrum(&log_mel);
        let n = log_mel.len() as f64;
        for (i, want) in log_mel.iter().enumerate() {
            let mut x = c[0] / n.sqrt();
            for (k, ck) in c.iter().enumerate().skip(1) {
                x += ck * (2.0 / n).sqrt() * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos();
            }
            dct_err = dct_err.max((x - want).abs());
        }
    }

    let short = s.slice(0, 2 * FS as usize);
    let mut delayed = vec![0.0f32; 160];
    delayed.extend_from_slice(short.samples());
    let a = compute_mfcc(&short, &cfg).unwrap();
    let b = compute_mfcc(&Signal::new(delayed, FS).unwrap(), &cfg).unwrap();
    let mut shift_err: f64 = 0.0;
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            shift_err = shift_err.max((a.get(r, c) - b.get(r + 1, c)).abs() as f64);
        }
    }
    check(
        shape_ok && dct_err < 1e-4 && shift_err < 1e-5,
        format!(
            "{}x{}, DCT round trip {dct_err:.1e}, hop shift {shift_err:.1e}",
            f.rows(),
            f.cols()
        ),
    )
}

fn c7_gradients() -> Outcome {
    let cases = cli::gradcheck_suite(1e-5).unwrap();
    let ok = cases.iter().all(|(_, limit, rel)| rel < limit);
    let parts: Vec<String> = cases
        .iter()
        .map(|(n, l, r)| format!("{n} {r:.1e}<{l:.0e}"))
        .collect();
    check(ok, parts.join(", "))
}

fn c8_param_counts() -> Outcome {
    let crnn = build_model(ModelKind::Crnn).param_count().unwrap();
    let cnn = build_model(ModelKind::BaselineCnn).param_count().unwrap();
    let dc = (crnn as f64 - 369_000.0) / 369_000.0;
    let db = (cnn as f64 - 1_660_000.0) / 1_660_000.0;
    check(
        dc.abs() <= 0.10 && db.abs() <= 0.05,
        format!(
            "crnn {crnn} ({:+.1}% vs 369K), baseline_cnn {cnn} ({:+.1}% vs 1.66M)",
            dc * 100.0,
            db * 100.0
        ),
    )
}

/// Reverberant noisy clips of `seconds`, with their labels.
fn short_examples(n: usize, seconds: f64, seed: u64) -> Vec<(Signal, AcousticLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let h = render_room(&draw_room(&mut rng), FS, seed + i as u64);
            let mut label = analyze_rir(&h).unwrap();
            let x = speech_like(seconds, FS, seed * 1000 + i as u64)
                .convolve(&h)
                .unwrap();
            let x = x.slice(0, (seconds * FS as f64) as usize);
            let snr = rng.random_range(SNR_MIN_DB..=SNR_MAX_DB);
            let noise = gen_white(x.len(), seed + 77 + i as u64, FS).unwrap();
            let noise = roomest_core::noise::scale_to_snr(&x, &noise, snr as f64).unwrap();
            label.snr = Some(snr as f64);
            (x.mix(&noise).unwrap().normalize_peak().signal, label)
        })
        .collect()
}

fn c9_overfit() -> Outcome {
    const LIMIT: usize = 2000;
    let data = short_examples(32, 0.5, 9);
    let cfg = MfccConfig::default();
    let feats: Vec<FeatureMatrix> = data
        .iter()
        .map(|(s, _)| compute_mfcc(s, &cfg).unwrap())
        .collect();
    let stats = FeatureStats::from_matrices(&feats).unwrap();
    let inputs: Vec<FeatureMatrix> = feats
        .iter()
        .map(|f| standardize(f, &stats).unwrap())
        .collect();
    let refs: Vec<&FeatureMatrix> = inputs.iter().collect();
    let labels: Vec<AcousticLabel> = data.iter().map(|(_, l)| *l).collect();
    let tstats = LabelStats::from_labels(&labels).unwrap();
    let targets: Vec<[f64; 6]> = labels
        .iter()
        .map(|l| tstats.standardize(l.to_array()))
        .collect();
    let spec = ModelSpec::new(ModelKind::Crnn, inputs[0].rows(), inputs[0].cols(), DROPOUT);
    let mut model = Model::<f32>::new(spec, 9).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples = Samples {
        inputs: &refs,
        targets: &targets,
    };
    let x = stack_features::<f32>(&refs).unwrap();
    let mut mse = f64::INFINITY;
    let mut updates = 0;
    while updates < LIMIT {
        train_step(&mut model, &mut adam, x.clone(), &targets, &mut rng).unwrap();
        updates += 1;
        if updates % 25 == 0 {
            mse = evaluate_mse(&model, samples, 32).unwrap();
            if mse < 1e-2 {
                break;
            }
        }
    }
    check(
        mse < 1e-2,
        format!("32 clips of 0.5 s, full batch: train MSE {mse:.2e} after {updates} updates"),
    )
}

/// Forward multiply-accumulates per example.
fn forward_macs(spec: &ModelSpec) -> f64 {
    let shapes = spec.shapes().unwrap();
    let mut input = vec![1, spec.input_frames, spec.input_coeffs];
    let mut total = 0.0;
    for (layer, out) in spec.layers.iter().zip(&shapes) {
        let n_out: usize = out.iter().product();
        total += match layer {
            LayerSpec::Conv2d { kernel, .. } => (n_out * input[0] * kernel * kernel) as f64,
            LayerSpec::Dense { units } => (input.iter().product::<usize>() * units) as f64,
            LayerSpec::Gru { units, .. } => (input[0] * 3 * units * (input[1] + units)) as f64,
            _ => 0.0,
        };
        input = out.clone();
    }
    total
}

struct Desk {
    crnn: EvalReport,
    mean: EvalReport,
    crnn_updates: usize,
    cnn: Option<(EvalReport, usize)>,
    seconds: f64,
}

fn desk_run(dir: &Path) -> Desk {
    let start = Instant::now();
    let examples = env_usize("ROOMEST_DESK_EXAMPLES", 600);
    let epochs = env_usize("ROOMEST_DESK_EPOCHS", 20);
    let (speech, rirs) = write_corpus(
        dir,
        &CorpusConfig {
            speech_files: 20,
            speech_seconds: 60.0,
            rirs: 200,
            seed: 10,
        },
    )
    .unwrap();
    let mut manifest = gen_manifest(&ManifestRequest {
        speech_dir: &speech,
        rir_dir: &rirs,
        noise_dir: None,
        seed: 10,
        split: SplitConfig::default(),
        recipes: RecipeConfig {
            count: examples,
            ..RecipeConfig::default()
        },
    })
    .unwrap();
    let ds = dir.join("dataset");
    build_dataset(&mut manifest, &ds, 0).unwrap();
    let cfg = MfccConfig::default();
    let train: LoadedSplit = load_split(&ds, Split::Train, &cfg, 0).unwrap();
    let test: LoadedSplit = load_split(&ds, Split::Test, &cfg, 0).unwrap();

    let tcfg = TrainConfig {
        batch_size: 16,
        max_epochs: epochs,
        // Validation loss is volatile at this size: run every epoch, keep the best.
        patience: epochs,
        validation_fraction: 0.15,
        seed: 10,
        ..TrainConfig::default()
    };
    let report = |store: roomest_core::nn::WeightStore| {
        let fp = store.model_fingerprint;
        let est = Estimator::new(store).unwrap();
        let preds = predict_split(&est, &test, 0).unwrap();
        EvalReport::build(pairs(&test, &preds), fp, test.fingerprint).unwrap()
    };
    let crnn = train_on(&train, ModelKind::Crnn, &tcfg, &mut |_| {}).unwrap();
    let crnn_updates = crnn.outcome.history.last().map_or(0, |r| r.updates);
    let crnn_report = report(crnn.store);

    // Same compute for the CNN: its update budget shrinks by the forward-MAC ratio.
    let frames = train.features[0].rows();
    let ratio = forward_macs(&ModelSpec::new(ModelKind::Crnn, frames, 32, DROPOUT))
        / forward_macs(&ModelSpec::new(ModelKind::BaselineCnn, frames, 32, DROPOUT));
    let cnn_updates = ((crnn_updates as f64 * ratio).round() as usize).max(1);
    let cnn = train_on(
        &train,
        ModelKind::BaselineCnn,
        &TrainConfig {
            max_updates: Some(cnn_updates),
            ..tcfg
        },
        &mut |_| {},
    )
    .ok()
    .map(|r| (report(r.store), cnn_updates));
    Desk {
        crnn: crnn_report,
        mean: mean_predictor_report(&train, &test).unwrap(),
        crnn_updates,
        cnn,
        seconds: start.elapsed().as_secs_f64(),
    }
}

const REFERENCE: [(Param, f64); 6] = [
    (Param::Snr, 1.98),
    (Param::Sti, 0.033),
    (Param::Drr, 2.91),
    (Param::Rt60, 0.21),
    (Param::C50, 5.95),
    (Param::C80, 6.60),
];

fn c10_desk(d: &Desk) -> Outcome {
    let mut beats = 0;
    let mut parts = Vec::new();
    for (p, reference) in REFERENCE {
        let (m, b) = (
            d.crnn.param(p).mae.unwrap_or(f64::NAN),
            d.mean.param(p).mae.unwrap_or(f64::NAN),
        );
        if m < b {
            beats += 1;
        }
        parts.push(format!("{} {m:.3}/{b:.3} (ref {reference})", p.name()));
    }
    let bin = |row: usize, p: Param| d.crnn.bins[row].cells[p.index()].map(|c| c.0);
    let mut trend = true;
    for p in [Param::Sti, Param::C50, Param::C80] {
        match (bin(0, p), bin(5, p)) {
            (Some(lo), Some(hi)) => trend &= lo > hi,
            _ => trend = false,
        }
    }
    check(
        beats == 6 && trend,
        format!(
            "crnn/mean MAE: {}; beats mean on {beats}/6; low-SNR bin worse for STI/C50/C80: {trend}; {} updates, {:.0} s",
            parts.join(", "),
            d.crnn_updates,
            d.seconds
        ),
    )
}

fn c11_crnn_vs_cnn(d: &Desk) -> Outcome {
    let Some((cnn, updates)) = &d.cnn else {
        return Outcome {
            verdict: Verdict::Warn,
            detail: "baseline_cnn training failed".into(),
        };
    };
    let mae = |r: &EvalReport, p: Param| r.param(p).mae.unwrap_or(f64::NAN);
    let wins = Param::ALL
        .iter()
        .filter(|&&p| mae(&d.crnn, p) <= mae(cnn, p))
        .count();
    Outcome {
        verdict: if wins >= 4 {
            Verdict::Pass
        } else {
            Verdict::Warn
        },
        detail: format!(
            "crnn <= cnn on {wins}/6 (cnn given {updates} updates at equal forward MACs)"
        ),
    }
}

fn c12_wada() -> Outcome {
    let table = build_wada_table(12, MIN_SAMPLES_PER_POINT).unwrap();
    let n = 5 * FS as usize;
    let mut est = Vec::new();
    let mut err = 0.0;
    for (i, truth) in (-5..=20).enumerate() {
        let s = gamma_speech(n, 1000 + i as u64, FS);
        let noise = gen_white(n, 2000 + i as u64, FS).unwrap();
        let noise = roomest_core::noise::scale_to_snr(&s, &noise, truth as f64).unwrap();
        let e = wada_snr(&s.mix(&noise).unwrap(), &table).unwrap();
        err += (e - truth as f64).abs();
        est.push(e);
    }
    let mae = err / est.len() as f64;
    let monotone = est.windows(2).all(|w| w[1] > w[0]);
    check(
        mae <= 6.0 && monotone,
        format!("MAE {mae:.3} dB over -5..20 dB, monotone {monotone}"),
    )
}

fn c13_determinism() -> Outcome {
    let run_once = |dir: &Path| -> (Vec<u8>, Vec<u8>) {
        let s = |p: &Path| p.to_str().unwrap().to_string();
        let mut sink = Vec::new();
        let mut call = |args: &[String]| {
            let argv = ["roomest", "--seed", "13", "--jobs", "1"]
                .iter()
                .map(|a| a.to_string())
                .chain(args.iter().cloned());
            assert_eq!(cli::run(argv, &mut sink), 0, "{args:?}");
        };
        let corpus = dir.join("corpus");
        let v = |a: &[&str]| a.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        call(
            &[
                v(&[
                    "make-corpus",
                    "--speech-files",
                    "3",
                    "--speech-seconds",
                    "17",
                    "--rirs",
                    "8",
                    "--out",
                ]),
                vec![s(&corpus)],
            ]
            .concat(),
        );
        let m = dir.join("m.json");
        call(
            &[
                v(&["gen-manifest", "--count", "12", "--speech"]),
                vec![
                    s(&corpus.join("speech")),
                    "--rirs".into(),
                    s(&corpus.join("rirs")),
                    "-o".into(),
                    s(&m),
                ],
            ]
            .concat(),
        );
        let ds = dir.join("ds");
        call(
            &[
                v(&["synth-dataset", "--manifest"]),
                vec![s(&m), "--out".into(), s(&ds)],
            ]
            .concat(),
        );
        let cfg = dir.join("train.json");
        std::fs::write(&cfg, r#"{"max_epochs": 2, "batch_size": 4}"#).unwrap();
        let hist = dir.join("hist.json");
        call(
            &[
                v(&["train", "--model", "crnn", "--dataset"]),
                vec![
                    s(&ds),
                    "--config".into(),
                    s(&cfg),
                    "--out".into(),
                    s(&dir.join("m.rswt")),
                    "--history".into(),
                    s(&hist),
                ],
            ]
            .concat(),
        );
        (
            std::fs::read(ds.join("labels.csv")).unwrap(),
            std::fs::read(hist).unwrap(),
        )
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (la, ha) = run_once(a.path());
    let (lb, hb) = run_once(b.path());
    check(
        la == lb && ha == hb,
        format!(
            "labels.csv identical {} ({} bytes), loss history identical {}",
            la == lb,
            la.len(),
            ha == hb
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, o: Outcome| {
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Warn => "WARN",
        };
        println!("criterion {n:>2} {tag} {name}: {}", o.detail);
        results.push((n, name, o));
    };
    let only: Option<Vec<usize>> = std::env::var("ROOMEST_ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let simple: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "rt60 analytic oracle", c1_rt60),
        (2, "clarity/drr oracle", c2_ratios),
        (3, "sti endpoints", c3_sti),
        (4, "mixer round trip", c4_mixer),
        (5, "noise spectra", c5_noise_slopes),
        (6, "mfcc contract", c6_mfcc),
        (7, "gradient check", c7_gradients),
        (8, "parameter counts", c8_param_counts),
        (9, "overfit", c9_overfit),
    ];
    for (n, name, f) in simple {
        if want(n) {
            record(n, name, f());
        }
    }
    if want(10) || want(11) {
        let dir = tempfile::tempdir().unwrap();
        let desk = desk_run(dir.path());
        record(10, "desk-scale end to end", c10_desk(&desk));
        record(11, "crnn vs cnn (soft)", c11_crnn_vs_cnn(&desk));
    }
    if want(12) {
        record(12, "wada baseline", c12_wada());
    }
    if want(13) {
        record(13, "determinism", c13_determinism());
    }

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, _, o)| matches!(o.verdict, Verdict::Fail))
        .map(|(n, _, _)| *n)
        .collect();
    let unexpected: Vec<usize> = failed
        .iter()
        .copied()
        .filter(|n| !UNATTAINABLE.contains(n))
        .collect();
    println!(
        "acceptance: {} pass, {} fail {:?} (known unattainable {:?})",
        results.len() - failed.len(),
        failed.len(),
        failed,
        UNATTAINABLE
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
