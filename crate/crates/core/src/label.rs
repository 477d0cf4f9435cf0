//! The six-parameter acoustic label shared by ground truth and predictions.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// One of the six jointly estimated quantities, in canonical vector order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Rt60,
    Drr,
    C50,
    C80,
    Sti,
    Snr,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Rt60,
        Param::Drr,
        Param::C50,
        Param::C80,
        Param::Sti,
        Param::Snr,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Rt60 => "rt60",
            Param::Drr => "drr",
            Param::C50 => "c50",
            Param::C80 => "c80",
            Param::Sti => "sti",
            Param::Snr => "snr",
        }
    }

    /// Column header used in label CSVs.
    pub fn column(self) -> &'static str {
        match self {
            Param::Rt60 => "rt60_s",
            Param::Drr => "drr_db",
            Param::C50 => "c50_db",
            Param::C80 => "c80_db",
            Param::Sti => "sti",
            Param::Snr => "snr_db",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Param::Rt60 => "s",
            Param::Sti => "",
            _ => "dB",
        }
    }

    /// Flag that marks this parameter's label as capped or invalid.
    pub fn exclusion_flag(self) -> LabelFlags {
        match self {
            Param::Rt60 => LabelFlags::RT60_INVALID,
            Param::Drr => LabelFlags::DRR_CAPPED,
            Param::C50 => LabelFlags::C50_CAPPED,
            Param::C80 => LabelFlags::C80_CAPPED,
            Param::Sti => LabelFlags::STI_BAND_SILENT,
            Param::Snr => LabelFlags::SNR_CLEAN_CAP,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bit set of label annotations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelFlags(u16);

impl LabelFlags {
    pub const NONE: LabelFlags = LabelFlags(0);
    pub const RT60_INVALID: LabelFlags = LabelFlags(1 << 0);
    pub const DRR_CAPPED: LabelFlags = LabelFlags(1 << 1);
    pub const C50_CAPPED: LabelFlags = LabelFlags(1 << 2);
    pub const C80_CAPPED: LabelFlags = LabelFlags(1 << 3);
    /// At least one octave band carried no energy; its MTI was taken as 0.
    pub const STI_BAND_SILENT: LabelFlags = LabelFlags(1 << 4);
    /// Noise-free example; SNR label is the clean cap.
    pub const SNR_CLEAN_CAP: LabelFlags = LabelFlags(1 << 5);
    /// Example has no RIR; the room labels are the reverb-free defaults.
    pub const REVERB_FREE: LabelFlags = LabelFlags(1 << 6);
    /// Synthesized chunk was all zeros.
    pub const SILENT: LabelFlags = LabelFlags(1 << 7);

    const NAMES: [(LabelFlags, &'static str); 8] = [
        (Self::RT60_INVALID, "rt60_invalid"),
        (Self::DRR_CAPPED, "drr_capped"),
        (Self::C50_CAPPED, "c50_capped"),
        (Self::C80_CAPPED, "c80_capped"),
        (Self::STI_BAND_SILENT, "sti_band_silent"),
        (Self::SNR_CLEAN_CAP, "snr_clean_cap"),
        (Self::REVERB_FREE, "reverb_free"),
        (Self::SILENT, "silent"),
    ];

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Self {
        LabelFlags(bits)
    }

    pub fn contains(self, other: LabelFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: LabelFlags) -> bool {
        self.0 & other.0 != 0
    }

    pub fn insert(&mut self, other: LabelFlags) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// `|`-separated flag names, empty when no flag is set.
    pub fn to_names(self) -> String {
        let mut out = String::new();
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !out.is_empty() {
                    out.push('|');
                }
                out.push_str(name);
            }
        }
        out
    }

    /// Inverse of [`LabelFlags::to_names`]; `None` on an unknown name.
    pub fn parse_names(s: &str) -> Option<LabelFlags> {
        let mut flags = LabelFlags::NONE;
        for part in s.split('|').filter(|p| !p.is_empty()) {
            let (flag, _) = Self::NAMES.iter().find(|(_, n)| *n == part)?;
            flags.insert(*flag);
        }
        Some(flags)
    }
}

impl core::ops::BitOr for LabelFlags {
    type Output = LabelFlags;
    fn bitor(self, rhs: LabelFlags) -> LabelFlags {
        LabelFlags(self.0 | rhs.0)
    }
}

/// Ground-truth or predicted room-acoustic parameters.
///
/// `snr` is absent for a bare RIR analysis and attached when noise is mixed in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticLabel {
    pub rt60: f64,
    pub drr: f64,
    pub c50: f64,
    pub c80: f64,
    pub sti: f64,
    pub snr: Option<f64>,
    #[serde(default)]
    pub flags: LabelFlags,
}

impl AcousticLabel {
    pub fn get(&self, p: Param) -> Option<f64> {
        match p {
            Param::Rt60 => Some(self.rt60),
            Param::Drr => Some(self.drr),
            Param::C50 => Some(self.c50),
            Param::C80 => Some(self.c80),
            Param::Sti => Some(self.sti),
            Param::Snr => self.snr,
        }
    }

    /// Canonical six-vector; a missing SNR becomes NaN.
    pub fn to_array(&self) -> [f64; 6] {
        Param::ALL.map(|p| self.get(p).unwrap_or(f64::NAN))
    }

    pub fn from_array(v: [f64; 6], flags: LabelFlags) -> Self {
        Self {
            rt60: v[0],
            drr: v[1],
            c50: v[2],
            c80: v[3],
            sti: v[4],
            snr: Some(v[5]),
            flags,
        }
    }

    /// Whether `p` should count toward an error metric.
    pub fn is_valid(&self, p: Param) -> bool {
        !self.flags.intersects(p.exclusion_flag()) && self.get(p).is_some()
    }
}

const STATS_STD_FLOOR: f64 = 1e-6;

/// Per-parameter z-score statistics for network targets (population std).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl LabelStats {
    pub const IDENTITY: LabelStats = LabelStats {
        mean: [0.0; 6],
        std: [1.0; 6],
    };

    /// `None` when there are no labels or an SNR is missing.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a AcousticLabel>) -> Option<Self> {
        let rows: alloc::vec::Vec<[f64; 6]> = labels.into_iter().map(|l| l.to_array()).collect();
        if rows.is_empty() || rows.iter().flatten().any(|v| !v.is_finite()) {
            return None;
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for k in 0..6 {
            mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            std[k] = (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt();
        }
        Some(Self { mean, std })
    }

    pub fn standardize(&self, v: [f64; 6]) -> [f64; 6] {
        core::array::from_fn(|k| (v[k] - self.mean[k]) / self.std[k].max(STATS_STD_FLOOR))
    }

    pub fn destandardize(&self, z: [f64; 6]) -> [f64; 6] {
        core::array::from_fn(|k| z[k] * self.std[k].max(STATS_STD_FLOOR) + self.mean[k])
    }
}
