//! Little-endian binary files: feature matrices (`RSFT`), weight stores (`RSWT`)
//! and cached WADA tables (`RSWD`).

use std::fs;
use std::path::Path;

use roomest_core::features::{FeatureMatrix, FeatureStats};
use roomest_core::fingerprint::Fingerprint;
use roomest_core::nn::{ModelSpec, NamedTensor, WeightStore, WEIGHT_STORE_VERSION};
use roomest_core::wada::WadaTable;
use roomest_core::LabelStats;

use crate::Error;

pub const FEATURE_MAGIC: &[u8; 4] = b"RSFT";
pub const FEATURE_VERSION: u16 = 1;
pub const WEIGHT_MAGIC: &[u8; 4] = b"RSWT";
pub const WADA_MAGIC: &[u8; 4] = b"RSWD";
pub const WADA_VERSION: u16 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.bytes(&x.to_le_bytes()));
    }
    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(4 * v.len());
        v.iter().for_each(|x| self.bytes(&x.to_le_bytes()));
    }
    fn len(&mut self, n: usize) -> Result<(), Error> {
        self.u32(
            u32::try_from(n)
                .map_err(|_| Error::Format(format!("length {n} does not fit in 32 bits")))?,
        );
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'a str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| {
            Error::Format(format!("{}: truncated at byte {}", self.what, self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], Error> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, Error> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, Error> {
        let b = self.take(
            n.checked_mul(8)
                .ok_or_else(|| self.bad("length overflow"))?,
        )?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, Error> {
        let b = self.take(
            n.checked_mul(4)
                .ok_or_else(|| self.bad("length overflow"))?,
        )?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn fingerprint(&mut self) -> Result<Fingerprint, Error> {
        Ok(Fingerprint(self.array()?))
    }
    fn magic(&mut self, m: &[u8; 4]) -> Result<(), Error> {
        if self.take(4)? != m {
            return Err(self.bad("wrong magic"));
        }
        Ok(())
    }
    fn end(&self) -> Result<(), Error> {
        if self.pos != self.buf.len() {
            return Err(self.bad("trailing bytes"));
        }
        Ok(())
    }
    fn bad(&self, msg: &str) -> Error {
        Error::Format(format!("{}: {msg}", self.what))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_features(f: &FeatureMatrix) -> Result<Vec<u8>, Error> {
    let mut w = Writer::default();
    w.bytes(FEATURE_MAGIC);
    w.u16(FEATURE_VERSION);
    w.len(f.rows())?;
    w.len(f.cols())?;
    w.bytes(f.fingerprint().as_bytes());
    w.f32s(f.values());
    Ok(w.0)
}

pub fn decode_features(buf: &[u8], what: &str) -> Result<FeatureMatrix, Error> {
    let mut r = Reader::new(buf, what);
    r.magic(FEATURE_MAGIC)?;
    let version = r.u16()?;
    if version != FEATURE_VERSION {
        return Err(r.bad(&format!("unsupported version {version}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let fp = r.fingerprint()?;
    let values = r.f32s(
        rows.checked_mul(cols)
            .ok_or_else(|| r.bad("size overflow"))?,
    )?;
    r.end()?;
    Ok(FeatureMatrix::new(rows, cols, values, fp))
}

pub fn write_features(path: &Path, f: &FeatureMatrix) -> Result<(), Error> {
    write_file(path, &encode_features(f)?)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, Error> {
    decode_features(&read_file(path)?, &path.display().to_string())
}

/// Header, stats, the model spec as JSON text, then one record per tensor:
/// layer, name, rank, extents, values.
pub fn encode_weights(s: &WeightStore) -> Result<Vec<u8>, Error> {
    let mut w = Writer::default();
    w.bytes(WEIGHT_MAGIC);
    w.u16(WEIGHT_STORE_VERSION);
    w.bytes(s.model_fingerprint.as_bytes());
    w.bytes(s.feature_fingerprint.as_bytes());
    w.f64s(&s.target_stats.mean);
    w.f64s(&s.target_stats.std);
    let spec = serde_json::to_vec(&s.model)?;
    w.len(spec.len())?;
    w.bytes(&spec);
    if s.feature_stats.mean.len() != s.feature_stats.std.len() {
        return Err(Error::Format(
            "feature stats mean/std lengths differ".into(),
        ));
    }
    w.len(s.feature_stats.mean.len())?;
    w.f64s(&s.feature_stats.mean);
    w.f64s(&s.feature_stats.std);
    w.len(s.tensors.len())?;
    for t in &s.tensors {
        w.u32(t.layer);
        let name = t.name.as_bytes();
        w.u16(u16::try_from(name.len()).map_err(|_| Error::Format("tensor name too long".into()))?);
        w.bytes(name);
        w.u8(u8::try_from(t.shape.len())
            .map_err(|_| Error::Format("tensor rank too high".into()))?);
        for &d in &t.shape {
            w.len(d)?;
        }
        w.len(t.data.len())?;
        w.f32s(&t.data);
    }
    Ok(w.0)
}

pub fn decode_weights(buf: &[u8], what: &str) -> Result<WeightStore, Error> {
    let mut r = Reader::new(buf, what);
    r.magic(WEIGHT_MAGIC)?;
    let version = r.u16()?;
    if version != WEIGHT_STORE_VERSION {
        return Err(r.bad(&format!("unsupported version {version}")));
    }
    let model_fingerprint = r.fingerprint()?;
    let feature_fingerprint = r.fingerprint()?;
    let mean = r.f64s(6)?.try_into().unwrap();
    let std = r.f64s(6)?.try_into().unwrap();
    let spec_len = r.u32()? as usize;
    let model: ModelSpec = serde_json::from_slice(r.take(spec_len)?)?;
    let cols = r.u32()? as usize;
    let feature_stats = FeatureStats {
        mean: r.f64s(cols)?,
        std: r.f64s(cols)?,
    };
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let layer = r.u32()?;
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| r.bad("tensor name is not UTF-8"))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = r.u32()? as usize;
        if shape.iter().product::<usize>() != len {
            return Err(r.bad(&format!(
                "tensor {layer}/{name}: shape {shape:?} does not hold {len} values"
            )));
        }
        tensors.push(NamedTensor {
            layer,
            name,
            shape,
            data: r.f32s(len)?,
        });
    }
    r.end()?;
    Ok(WeightStore {
        model,
        model_fingerprint,
        feature_fingerprint,
        feature_stats,
        target_stats: LabelStats { mean, std },
        tensors,
    })
}

pub fn write_weights(path: &Path, s: &WeightStore) -> Result<(), Error> {
    write_file(path, &encode_weights(s)?)
}

pub fn read_weights(path: &Path) -> Result<WeightStore, Error> {
    decode_weights(&read_file(path)?, &path.display().to_string())
}

pub fn encode_wada_table(t: &WadaTable) -> Result<Vec<u8>, Error> {
    let mut w = Writer::default();
    w.bytes(WADA_MAGIC);
    w.u16(WADA_VERSION);
    w.u64(t.seed);
    w.u64(t.samples_per_point as u64);
    w.len(t.g.len())?;
    w.f64s(&t.snr_db);
    w.f64s(&t.g);
    Ok(w.0)
}

pub fn decode_wada_table(buf: &[u8], what: &str) -> Result<WadaTable, Error> {
    let mut r = Reader::new(buf, what);
    r.magic(WADA_MAGIC)?;
    if r.u16()? != WADA_VERSION {
        return Err(r.bad("unsupported version"));
    }
    let seed = r.u64()?;
    let samples_per_point = r.u64()? as usize;
    let n = r.u32()? as usize;
    let t = WadaTable {
        seed,
        samples_per_point,
        snr_db: r.f64s(n)?,
        g: r.f64s(n)?,
    };
    r.end()?;
    if n < 2 || !t.is_strictly_monotone() {
        return Err(r.bad("table is not strictly monotone"));
    }
    Ok(t)
}

pub fn write_wada_table(path: &Path, t: &WadaTable) -> Result<(), Error> {
    write_file(path, &encode_wada_table(t)?)
}

pub fn read_wada_table(path: &Path) -> Result<WadaTable, Error> {
    decode_wada_table(&read_file(path)?, &path.display().to_string())
}
