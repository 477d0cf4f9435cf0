//! Label CSV: `id,split,rt60_s,drr_db,c50_db,c80_db,sti,snr_db,flags`.

use std::path::Path;

use roomest_core::dataset::Split;
use roomest_core::{AcousticLabel, LabelFlags};
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub id: String,
    pub split: Split,
    pub rt60_s: f64,
    pub drr_db: f64,
    pub c50_db: f64,
    pub c80_db: f64,
    pub sti: f64,
    pub snr_db: Option<f64>,
    /// `|`-separated flag names.
    pub flags: String,
}

impl LabelRow {
    pub fn new(id: &str, split: Split, l: &AcousticLabel) -> Self {
        Self {
            id: id.into(),
            split,
            rt60_s: l.rt60,
            drr_db: l.drr,
            c50_db: l.c50,
            c80_db: l.c80,
            sti: l.sti,
            snr_db: l.snr,
            flags: l.flags.to_names(),
        }
    }

    pub fn label(&self) -> Result<AcousticLabel, Error> {
        let flags = LabelFlags::parse_names(&self.flags).ok_or_else(|| {
            Error::Format(format!("{}: unknown flag in {:?}", self.id, self.flags))
        })?;
        Ok(AcousticLabel {
            rt60: self.rt60_s,
            drr: self.drr_db,
            c50: self.c50_db,
            c80: self.c80_db,
            sti: self.sti,
            snr: self.snr_db,
            flags,
        })
    }
}

pub fn encode_labels(rows: &[LabelRow]) -> Result<Vec<u8>, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), Error> {
    std::fs::write(path, encode_labels(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, Error> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<LabelRow>, _>>()?;
    Ok(rows)
}
