//! Split assignment, example recipes and synthesis of `y = x * h + n`.
//!
//! Nothing here touches the file system. Recipes name their sources by path and
//! a [`Sources`] implementation turns those names into signals.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{AcousticLabel, LabelFlags, LabelStats};
use crate::noise::{
    fit_noise_length, gen_pink, gen_white, scale_to_snr, NoiseError, NoiseKind, NoiseSpec,
};
use crate::rir::{analyze_rir, RirError, ANALYZER_VERSION, RATIO_CAP_DB};
use crate::signal::{Signal, SignalError};
use crate::PIPELINE_RATE;

pub const MANIFEST_VERSION: u16 = 1;
/// 8 s at 16 kHz.
pub const CHUNK_SAMPLES: usize = 128_000;
/// SNR label of a noise-free example.
pub const CLEAN_SNR_CAP_DB: f64 = 30.0;
pub const SNR_MIN_DB: i32 = -5;
pub const SNR_MAX_DB: i32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("no {0} sources")]
    EmptySourceList(&'static str),
    #[error("{path}: chunk {chunk} needs {needed} samples, source has {available}")]
    ChunkTooShort {
        path: String,
        chunk: usize,
        needed: usize,
        available: usize,
    },
    #[error("cannot load {path}: {reason}")]
    Source { path: String, reason: String },
    #[error("invalid recipe {id}: {reason}")]
    InvalidRecipe { id: String, reason: String },
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Rir(#[from] RirError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub speech_train_fraction: f64,
    /// RIRs are split `rir_train : rir_test`.
    pub rir_train: usize,
    pub rir_test: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            speech_train_fraction: 0.8,
            rir_train: 306,
            rir_test: 100,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..=1.0).contains(&self.speech_train_fraction) {
            return Err(DatasetError::InvalidConfig(
                "speech train fraction outside [0, 1]",
            ));
        }
        if self.rir_train + self.rir_test == 0 {
            return Err(DatasetError::InvalidConfig("RIR ratio is 0:0"));
        }
        Ok(())
    }

    /// Train count of `n` speech files, rounded to nearest.
    pub fn speech_train_count(&self, n: usize) -> usize {
        ((n as f64 * self.speech_train_fraction).round() as usize).min(n)
    }

    /// Train count of `n` RIRs at the configured ratio, rounded half up.
    pub fn rir_train_count(&self, n: usize) -> usize {
        let total = self.rir_train + self.rir_test;
        (n * self.rir_train + total / 2) / total
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub speech_train: Vec<String>,
    pub speech_test: Vec<String>,
    pub rir_train: Vec<String>,
    pub rir_test: Vec<String>,
}

impl SplitAssignment {
    pub fn speech(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.speech_train,
            Split::Test => &self.speech_test,
        }
    }

    pub fn rirs(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.rir_train,
            Split::Test => &self.rir_test,
        }
    }
}

/// Stream seed `i` of `master`, via SplitMix64 finalization.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn shuffled(files: &[String], seed: u64) -> Vec<String> {
    let mut v = files.to_vec();
    v.sort();
    v.dedup();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Seeded shuffle, then the first share of each list goes to train. The result
/// does not depend on input order.
pub fn make_splits(
    speech_files: &[String],
    rir_files: &[String],
    master_seed: u64,
    cfg: &SplitConfig,
) -> Result<SplitAssignment, DatasetError> {
    cfg.validate()?;
    if speech_files.is_empty() {
        return Err(DatasetError::EmptySourceList("speech"));
    }
    if rir_files.is_empty() {
        return Err(DatasetError::EmptySourceList("RIR"));
    }
    let mut speech = shuffled(speech_files, derive_seed(master_seed, 0x5350));
    let mut rirs = shuffled(rir_files, derive_seed(master_seed, 0x5249));
    let speech_test = speech.split_off(cfg.speech_train_count(speech.len()));
    let rir_test = rirs.split_off(cfg.rir_train_count(rirs.len()));
    Ok(SplitAssignment {
        speech_train: speech,
        speech_test,
        rir_train: rirs,
        rir_test,
    })
}

/// One example: which chunk of which speech file, which RIR and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecipe {
    pub id: String,
    pub split: Split,
    pub speech: String,
    pub chunk: usize,
    pub rir: Option<String>,
    pub noise: NoiseSpec,
    /// Integer dB in `[-5, 24]`; absent exactly when there is no noise.
    pub target_snr: Option<i32>,
    /// Filled in once the example has been synthesized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<AcousticLabel>,
}

impl ExampleRecipe {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason: &str| DatasetError::InvalidRecipe {
            id: self.id.clone(),
            reason: reason.into(),
        };
        self.noise.validate()?;
        match (self.noise.kind, self.target_snr) {
            (NoiseKind::None, Some(_)) => Err(bad("target SNR without noise")),
            (NoiseKind::None, None) => Ok(()),
            (_, None) => Err(bad("noise without target SNR")),
            (_, Some(s)) if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&s) => {
                Err(bad("target SNR outside [-5, 24] dB"))
            }
            _ => Ok(()),
        }
    }
}

/// Knobs for [`generate_recipes`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeConfig {
    pub count: usize,
    /// Share of examples with no RIR.
    pub reverb_free_fraction: f64,
    /// Share of examples with no noise.
    pub noise_free_fraction: f64,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            count: 100,
            reverb_free_fraction: 0.1,
            noise_free_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u16,
    pub master_seed: u64,
    pub analyzer: String,
    pub sample_rate: u32,
    pub chunk_samples: usize,
    pub clean_snr_cap_db: f64,
    pub ratio_cap_db: f64,
    pub split_config: SplitConfig,
    pub recipe_config: RecipeConfig,
    pub splits: SplitAssignment,
    /// Noise recordings available to train and test examples.
    pub noise_train: Vec<String>,
    pub noise_test: Vec<String>,
    pub entries: Vec<ExampleRecipe>,
    /// Label mean/std over the train split, set once the dataset is built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_stats: Option<LabelStats>,
}

/// Resampled length as produced by [`Signal::resample`].
pub fn resampled_len(len: usize, from: u32, to: u32) -> usize {
    if from == to {
        return len;
    }
    ((len as u64 * to as u64 + from as u64 / 2) / from as u64) as usize
}

/// Whole chunks in a speech file of `len` samples at `rate`.
pub fn chunk_count(len: usize, rate: u32) -> usize {
    resampled_len(len, rate, PIPELINE_RATE) / CHUNK_SAMPLES
}

/// Builds the manifest. `speech_chunks` maps each speech path to its chunk count;
/// files without a whole chunk are never used. Noise recordings are split with the
/// speech fraction when there are at least two.
pub fn generate_recipes(
    splits: SplitAssignment,
    speech_chunks: &BTreeMap<String, usize>,
    noise_files: &[String],
    master_seed: u64,
    split_config: SplitConfig,
    cfg: RecipeConfig,
) -> Result<DatasetManifest, DatasetError> {
    if !(0.0..=1.0).contains(&cfg.reverb_free_fraction)
        || !(0.0..=1.0).contains(&cfg.noise_free_fraction)
    {
        return Err(DatasetError::InvalidConfig("fractions must lie in [0, 1]"));
    }
    let mut noise = shuffled(noise_files, derive_seed(master_seed, 0x4E53));
    let noise_test = if noise.len() >= 2 {
        let k = split_config
            .speech_train_count(noise.len())
            .clamp(1, noise.len() - 1);
        noise.split_off(k)
    } else {
        noise.clone()
    };
    let noise_train = noise;

    let pools = [Split::Train, Split::Test].map(|split| {
        let mut chunks: Vec<(String, usize)> = splits
            .speech(split)
            .iter()
            .flat_map(|p| {
                (0..speech_chunks.get(p).copied().unwrap_or(0)).map(move |c| (p.clone(), c))
            })
            .collect();
        chunks.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            master_seed,
            0x4348 + split as u64,
        )));
        chunks
    });
    if pools[0].is_empty() || pools[1].is_empty() {
        return Err(DatasetError::EmptySourceList("speech chunk"));
    }

    let n_train = split_config.speech_train_count(cfg.count);
    let mut next = [0usize; 2];
    let mut entries = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let split = if i < n_train {
            Split::Train
        } else {
            Split::Test
        };
        let s = split as usize;
        let seed = derive_seed(master_seed, 0x1_0000 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Chunks are used in shuffled order and reused once exhausted.
        let (speech, chunk) = pools[s][next[s] % pools[s].len()].clone();
        next[s] += 1;
        let rirs = splits.rirs(split);
        let rir = if rng.random_bool(cfg.reverb_free_fraction) || rirs.is_empty() {
            None
        } else {
            Some(rirs[rng.random_range(0..rirs.len())].clone())
        };
        let noise_pool = if split == Split::Train {
            &noise_train
        } else {
            &noise_test
        };
        let (noise, target_snr) = if rng.random_bool(cfg.noise_free_fraction) {
            (NoiseSpec::none(), None)
        } else {
            let kinds = if noise_pool.is_empty() { 2 } else { 3 };
            let noise_seed = derive_seed(seed, 0x4E);
            let spec = match rng.random_range(0..kinds) {
                0 => NoiseSpec::generated(NoiseKind::White, noise_seed),
                1 => NoiseSpec::generated(NoiseKind::Pink, noise_seed),
                _ => NoiseSpec::real(
                    noise_pool[rng.random_range(0..noise_pool.len())].clone(),
                    noise_seed,
                ),
            };
            (spec, Some(rng.random_range(SNR_MIN_DB..=SNR_MAX_DB)))
        };
        entries.push(ExampleRecipe {
            id: format!("{i:06}"),
            split,
            speech,
            chunk,
            rir,
            noise,
            target_snr,
            label: None,
        });
    }
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        master_seed,
        analyzer: ANALYZER_VERSION.into(),
        sample_rate: PIPELINE_RATE,
        chunk_samples: CHUNK_SAMPLES,
        clean_snr_cap_db: CLEAN_SNR_CAP_DB,
        ratio_cap_db: RATIO_CAP_DB,
        split_config,
        recipe_config: cfg,
        splits,
        noise_train,
        noise_test,
        entries,
        label_stats: None,
    })
}

/// Loads named sources at their native rate.
pub trait Sources {
    fn speech(&self, path: &str) -> Result<Signal, DatasetError>;
    fn rir(&self, path: &str) -> Result<Signal, DatasetError>;
    fn noise(&self, path: &str) -> Result<Signal, DatasetError>;
}

/// In-memory [`Sources`], one map for all three kinds.
#[derive(Clone, Debug, Default)]
pub struct MemorySources(pub BTreeMap<String, Signal>);

impl MemorySources {
    fn get(&self, path: &str) -> Result<Signal, DatasetError> {
        self.0
            .get(path)
            .cloned()
            .ok_or_else(|| DatasetError::Source {
                path: path.into(),
                reason: "not found".into(),
            })
    }
}

impl Sources for MemorySources {
    fn speech(&self, path: &str) -> Result<Signal, DatasetError> {
        self.get(path)
    }
    fn rir(&self, path: &str) -> Result<Signal, DatasetError> {
        self.get(path)
    }
    fn noise(&self, path: &str) -> Result<Signal, DatasetError> {
        self.get(path)
    }
}

/// A synthesized example with its components kept for inspection.
/// `speech + noise` equals `mixture` up to `f32` rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesized {
    pub mixture: Signal,
    /// Reverberant speech chunk, under the same normalization gain as `mixture`.
    pub speech: Signal,
    pub noise: Option<Signal>,
    pub label: AcousticLabel,
}

/// Labels of an example without an RIR.
pub fn reverb_free_label() -> AcousticLabel {
    AcousticLabel {
        rt60: 0.0,
        drr: RATIO_CAP_DB,
        c50: RATIO_CAP_DB,
        c80: RATIO_CAP_DB,
        sti: 1.0,
        snr: None,
        flags: LabelFlags::REVERB_FREE
            | LabelFlags::DRR_CAPPED
            | LabelFlags::C50_CAPPED
            | LabelFlags::C80_CAPPED,
    }
}

/// Attaches the SNR label: the target, or the clean cap when there is no noise.
pub fn with_snr(mut room: AcousticLabel, target_snr: Option<i32>) -> AcousticLabel {
    match target_snr {
        Some(s) => room.snr = Some(s as f64),
        None => {
            room.snr = Some(CLEAN_SNR_CAP_DB);
            room.flags.insert(LabelFlags::SNR_CLEAN_CAP);
        }
    }
    room
}

/// Samples `[kC, (k+1)C)` of `x * h`, convolving only the input that reaches them.
pub fn reverberant_chunk(x: &Signal, h: &Signal, chunk: usize) -> Result<Signal, DatasetError> {
    let start = chunk * CHUNK_SAMPLES;
    let end = start + CHUNK_SAMPLES;
    let from = (start + 1).saturating_sub(h.len());
    let segment = x.slice(from, end.min(x.len()));
    let y = segment.convolve(h)?;
    let offset = start - from;
    let mut out: Vec<f32> = y
        .samples()
        .get(offset..)
        .unwrap_or(&[])
        .iter()
        .take(CHUNK_SAMPLES)
        .copied()
        .collect();
    out.resize(CHUNK_SAMPLES, 0.0);
    Ok(Signal::new(out, x.sample_rate())?)
}

/// Runs the recipe: resample to 16 kHz, convolve with the RIR, cut the chunk, mix
/// noise at the target SNR against the reverberant chunk, peak-normalize.
/// `room` is the RIR analysis when the caller already has it.
pub fn synthesize_example(
    recipe: &ExampleRecipe,
    sources: &dyn Sources,
    room: Option<AcousticLabel>,
) -> Result<Synthesized, DatasetError> {
    recipe.validate()?;
    let x = sources.speech(&recipe.speech)?.resample(PIPELINE_RATE)?;
    let needed = (recipe.chunk + 1) * CHUNK_SAMPLES;
    if x.len() < needed {
        return Err(DatasetError::ChunkTooShort {
            path: recipe.speech.clone(),
            chunk: recipe.chunk,
            needed,
            available: x.len(),
        });
    }
    let (speech, room) = match &recipe.rir {
        Some(path) => {
            let h = sources.rir(path)?.resample(PIPELINE_RATE)?;
            let room = match room {
                Some(r) => r,
                None => analyze_rir(&h)?,
            };
            (reverberant_chunk(&x, &h, recipe.chunk)?, room)
        }
        None => (
            x.slice(recipe.chunk * CHUNK_SAMPLES, needed),
            reverb_free_label(),
        ),
    };
    let noise = match (recipe.noise.kind, recipe.target_snr) {
        (NoiseKind::None, _) | (_, None) => None,
        (kind, Some(target)) => {
            let seed = recipe.noise.seed.unwrap_or(0);
            let raw = match kind {
                NoiseKind::White => gen_white(CHUNK_SAMPLES, seed, PIPELINE_RATE)?,
                NoiseKind::Pink => gen_pink(CHUNK_SAMPLES, seed, PIPELINE_RATE)?,
                _ => {
                    let path = recipe.noise.source.as_deref().unwrap_or_default();
                    let n = sources.noise(path)?.resample(PIPELINE_RATE)?;
                    fit_noise_length(&n, CHUNK_SAMPLES, seed)?
                }
            };
            Some(scale_to_snr(&speech, &raw, target as f64)?)
        }
    };
    let mixed = match &noise {
        Some(n) => speech.mix(n)?,
        None => speech.clone(),
    };
    let norm = mixed.normalize_peak();
    let mut label = with_snr(room, recipe.target_snr);
    if norm.silent {
        label.flags.insert(LabelFlags::SILENT);
    }
    Ok(Synthesized {
        mixture: norm.signal,
        speech: speech.scaled(norm.gain),
        noise: noise.map(|n| n.scaled(norm.gain)),
        label,
    })
}

/// Label mean/std over the train entries that carry a label.
pub fn train_label_stats(entries: &[ExampleRecipe]) -> Option<LabelStats> {
    LabelStats::from_labels(
        entries
            .iter()
            .filter(|e| e.split == Split::Train)
            .filter_map(|e| e.label.as_ref()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::measured_snr;
    use crate::synth;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:03}.wav")).collect()
    }

    #[test]
    fn split_counts() {
        let cfg = SplitConfig::default();
        let a = make_splits(&names("s", 10), &names("r", 406), 7, &cfg).unwrap();
        assert_eq!((a.speech_train.len(), a.speech_test.len()), (8, 2));
        assert_eq!((a.rir_train.len(), a.rir_test.len()), (306, 100));
        assert_eq!(
            a,
            make_splits(&names("s", 10), &names("r", 406), 7, &cfg).unwrap()
        );
        let mut reversed = names("s", 10);
        reversed.reverse();
        assert_eq!(
            a,
            make_splits(&reversed, &names("r", 406), 7, &cfg).unwrap()
        );
        assert_ne!(
            a,
            make_splits(&names("s", 10), &names("r", 406), 8, &cfg).unwrap()
        );
        assert_eq!(
            make_splits(&[], &names("r", 4), 0, &cfg),
            Err(DatasetError::EmptySourceList("speech"))
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn splits_are_disjoint_and_complete(ns in 1usize..60, nr in 1usize..60, seed in any::<u64>()) {
            let a = make_splits(&names("s", ns), &names("r", nr), seed, &SplitConfig::default()).unwrap();
            for (train, test, all) in [(&a.speech_train, &a.speech_test, names("s", ns)), (&a.rir_train, &a.rir_test, names("r", nr))] {
                prop_assert!(train.iter().all(|f| !test.contains(f)));
                let mut joined: Vec<String> = train.iter().chain(test.iter()).cloned().collect();
                joined.sort();
                prop_assert_eq!(joined, all);
            }
        }
    }

    fn sources() -> MemorySources {
        let mut m = BTreeMap::new();
        m.insert("a.wav".into(), synth::speech_like(17.0, 16_000, 1));
        m.insert("b.wav".into(), synth::speech_like(9.0, 22_050, 2));
        m.insert("short.wav".into(), synth::speech_like(5.0, 16_000, 3));
        m.insert(
            "room.wav".into(),
            synth::noise_rir(0.6, 4.0, 16_000, 0.8, 4),
        );
        m.insert(
            "room2.wav".into(),
            synth::noise_rir(0.4, 2.0, 48_000, 0.5, 5),
        );
        m.insert("delta.wav".into(), Signal::new(vec![1.0], 16_000).unwrap());
        m.insert("hum.wav".into(), synth::speech_like(3.0, 16_000, 6));
        MemorySources(m)
    }

    fn recipe(rir: Option<&str>, noise: NoiseSpec, snr: Option<i32>) -> ExampleRecipe {
        ExampleRecipe {
            id: "000001".into(),
            split: Split::Train,
            speech: "a.wav".into(),
            chunk: 1,
            rir: rir.map(Into::into),
            noise,
            target_snr: snr,
            label: None,
        }
    }

    #[test]
    fn clean_dry_example() {
        let out =
            synthesize_example(&recipe(None, NoiseSpec::none(), None), &sources(), None).unwrap();
        assert_eq!(out.mixture.len(), CHUNK_SAMPLES);
        assert_eq!(out.mixture.peak(), 1.0);
        let l = out.label;
        assert_eq!(
            (l.rt60, l.sti, l.drr, l.c50, l.c80, l.snr),
            (0.0, 1.0, 60.0, 60.0, 60.0, Some(30.0))
        );
        assert!(l
            .flags
            .contains(LabelFlags::REVERB_FREE | LabelFlags::SNR_CLEAN_CAP));
        // Pass-through: the mixture is the normalized dry chunk.
        let dry = sources()
            .speech("a.wav")
            .unwrap()
            .slice(CHUNK_SAMPLES, 2 * CHUNK_SAMPLES);
        assert_eq!(out.mixture, dry.normalize_peak().signal);
    }

    #[test]
    fn delta_rir_white_noise_at_zero_db() {
        let r = recipe(
            Some("delta.wav"),
            NoiseSpec::generated(NoiseKind::White, 9),
            Some(0),
        );
        let out = synthesize_example(&r, &sources(), None).unwrap();
        let snr = measured_snr(&out.speech, out.noise.as_ref().unwrap()).unwrap();
        assert!(snr.abs() < 0.01, "{snr}");
        assert_eq!(out.mixture.peak(), 1.0);
    }

    #[test]
    fn every_target_snr_round_trips() {
        let src = sources();
        for (i, target) in (SNR_MIN_DB..=SNR_MAX_DB).enumerate() {
            let kind = if i % 2 == 0 {
                NoiseKind::White
            } else {
                NoiseKind::Pink
            };
            let r = recipe(
                Some("room.wav"),
                NoiseSpec::generated(kind, i as u64),
                Some(target),
            );
            let out = synthesize_example(&r, &src, None).unwrap();
            let snr = measured_snr(&out.speech, out.noise.as_ref().unwrap()).unwrap();
            assert!((snr - target as f64).abs() < 0.01, "{target}: {snr}");
            assert_eq!(out.label.snr, Some(target as f64));
        }
    }

    #[test]
    fn chunk_matches_full_convolution() {
        let src = sources();
        let x = src.speech("a.wav").unwrap();
        let h = src.rir("room.wav").unwrap();
        let full = x.convolve(&h).unwrap();
        for k in 0..2 {
            let c = reverberant_chunk(&x, &h, k).unwrap();
            let want = full.slice(k * CHUNK_SAMPLES, (k + 1) * CHUNK_SAMPLES);
            let err = c
                .samples()
                .iter()
                .zip(want.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max);
            assert!(err < 1e-5, "{err}");
        }
    }

    #[test]
    fn room_labels_independent_of_speech() {
        let src = sources();
        let mut a = recipe(Some("room2.wav"), NoiseSpec::none(), None);
        let mut b = a.clone();
        b.speech = "b.wav".into();
        b.chunk = 0;
        a.noise = NoiseSpec::real("hum.wav".into(), 3);
        a.target_snr = Some(5);
        let la = synthesize_example(&a, &src, None).unwrap().label;
        let lb = synthesize_example(&b, &src, None).unwrap().label;
        assert_eq!(la.to_array()[..5], lb.to_array()[..5]);
        assert!(la.rt60 > 0.3 && la.rt60 < 0.5, "{}", la.rt60);
    }

    #[test]
    fn short_speech_and_bad_recipes_rejected() {
        let src = sources();
        let mut r = recipe(None, NoiseSpec::none(), None);
        r.speech = "short.wav".into();
        r.chunk = 0;
        assert!(matches!(
            synthesize_example(&r, &src, None),
            Err(DatasetError::ChunkTooShort { .. })
        ));
        let r = recipe(None, NoiseSpec::none(), Some(3));
        assert!(matches!(
            synthesize_example(&r, &src, None),
            Err(DatasetError::InvalidRecipe { .. })
        ));
        let r = recipe(None, NoiseSpec::generated(NoiseKind::White, 1), Some(25));
        assert!(matches!(
            synthesize_example(&r, &src, None),
            Err(DatasetError::InvalidRecipe { .. })
        ));
    }

    #[test]
    fn manifest_generation() {
        let speech = names("s", 10);
        let rirs = names("r", 8);
        let chunks: BTreeMap<String, usize> = speech.iter().map(|s| (s.clone(), 2)).collect();
        let a = make_splits(&speech, &rirs, 3, &SplitConfig::default()).unwrap();
        let cfg = RecipeConfig {
            count: 200,
            ..RecipeConfig::default()
        };
        let m = generate_recipes(
            a.clone(),
            &chunks,
            &names("n", 5),
            3,
            SplitConfig::default(),
            cfg,
        )
        .unwrap();
        assert_eq!(m.entries.len(), 200);
        assert_eq!(
            m.entries.iter().filter(|e| e.split == Split::Train).count(),
            160
        );
        for e in &m.entries {
            e.validate().unwrap();
            assert!(a.speech(e.split).contains(&e.speech));
            if let Some(r) = &e.rir {
                assert!(a.rirs(e.split).contains(r));
            }
            if let Some(n) = &e.noise.source {
                let pool = if e.split == Split::Train {
                    &m.noise_train
                } else {
                    &m.noise_test
                };
                assert!(pool.contains(n));
            }
        }
        assert!(m.noise_train.iter().all(|n| !m.noise_test.contains(n)));
        let clean = m.entries.iter().filter(|e| e.target_snr.is_none()).count();
        let dry = m.entries.iter().filter(|e| e.rir.is_none()).count();
        assert!(
            (5..=40).contains(&clean) && (5..=40).contains(&dry),
            "{clean} {dry}"
        );
        let again =
            generate_recipes(a, &chunks, &names("n", 5), 3, SplitConfig::default(), cfg).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn train_stats_standardize_train_labels() {
        let mk = |split, v: f64| ExampleRecipe {
            label: Some(AcousticLabel::from_array(
                [v, 2.0 * v, v - 1.0, v + 3.0, v / 10.0, -v],
                LabelFlags::NONE,
            )),
            split,
            ..recipe(None, NoiseSpec::none(), None)
        };
        let entries = vec![
            mk(Split::Train, 1.0),
            mk(Split::Train, 2.0),
            mk(Split::Train, 4.5),
            mk(Split::Test, 100.0),
        ];
        let stats = train_label_stats(&entries).unwrap();
        let z: Vec<[f64; 6]> = entries[..3]
            .iter()
            .map(|e| stats.standardize(e.label.unwrap().to_array()))
            .collect();
        for k in 0..6 {
            let mean = z.iter().map(|r| r[k]).sum::<f64>() / 3.0;
            let var = z.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-6 && (var.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn seeds_and_lengths() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(chunk_count(3 * CHUNK_SAMPLES - 1, 16_000), 2);
        assert_eq!(chunk_count(441_000, 44_100), 1);
        let s = synth::speech_like(1.3, 22_050, 1);
        assert_eq!(
            resampled_len(s.len(), 22_050, 16_000),
            s.resample(16_000).unwrap().len()
        );
    }
}
