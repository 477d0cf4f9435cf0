//! Synthetic source corpora written as WAV files, for running the pipeline
//! without external recordings.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roomest_core::dataset::derive_seed;
use roomest_core::synth::{draw_room, render_room, speech_like};
use roomest_core::PIPELINE_RATE;

use crate::wav::write_wav;
use crate::Error;

#[derive(Clone, Debug)]
pub struct CorpusConfig {
    pub speech_files: usize,
    pub speech_seconds: f64,
    pub rirs: usize,
    pub seed: u64,
}

/// Writes `speech/speech_NNN.wav` and `rirs/rir_NNN.wav` under `out`.
/// Returns the two directories.
pub fn write_corpus(out: &Path, cfg: &CorpusConfig) -> Result<(PathBuf, PathBuf), Error> {
    let speech_dir = out.join("speech");
    let rir_dir = out.join("rirs");
    for d in [&speech_dir, &rir_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for i in 0..cfg.speech_files {
        let s = speech_like(
            cfg.speech_seconds,
            PIPELINE_RATE,
            derive_seed(cfg.seed, 0x5300_0000 + i as u64),
        );
        write_wav(&speech_dir.join(format!("speech_{i:03}.wav")), &s)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5200_0000));
    for i in 0..cfg.rirs {
        let room = draw_room(&mut rng);
        let h = render_room(
            &room,
            PIPELINE_RATE,
            derive_seed(cfg.seed, 0x5201_0000 + i as u64),
        );
        write_wav(&rir_dir.join(format!("rir_{i:03}.wav")), &h)?;
    }
    Ok((speech_dir, rir_dir))
}
