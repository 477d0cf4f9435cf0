//! RIFF/WAVE reading (PCM 8–32 bit, float 32) and mono float-32 writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use roomest_core::Signal;

use crate::Error;

/// Reads any PCM or float WAV and averages its channels to mono.
pub fn read_wav(path: &Path) -> Result<Signal, Error> {
    let wav_err = |e| Error::Wav(path.display().to_string(), e);
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    };
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(Signal::from_f64(&mono, spec.sample_rate)?)
}

/// Sample count and rate from the header alone.
pub fn wav_info(path: &Path) -> Result<(usize, u32), Error> {
    let reader = WavReader::open(path).map_err(|e| Error::Wav(path.display().to_string(), e))?;
    Ok((reader.duration() as usize, reader.spec().sample_rate))
}

pub fn write_wav(path: &Path, s: &Signal) -> Result<(), Error> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: s.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let wav_err = |e| Error::Wav(path.display().to_string(), e);
    let mut w = WavWriter::create(path, spec).map_err(wav_err)?;
    for &v in s.samples() {
        w.write_sample(v).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// 16-bit PCM with rounding and clipping at full scale.
pub fn write_wav_pcm16(path: &Path, s: &Signal) -> Result<(), Error> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: s.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let wav_err = |e| Error::Wav(path.display().to_string(), e);
    let mut w = WavWriter::create(path, spec).map_err(wav_err)?;
    for &v in s.samples() {
        let q = (v as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}
