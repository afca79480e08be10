use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Decimal places written for every CSV value (time included).
pub const CSV_DECIMALS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInfo {
    pub name: String,
    pub unit: &'static str,
}

/// Run metadata written next to the samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMeta {
    /// SHA-256 of the case in canonical serialized form, hex.
    pub case_hash: String,
    pub dt: f64,
    pub t_end: f64,
    pub sample_period: f64,
    pub version: String,
    /// Applied schedule actions and switch events: `(time, target, what)`.
    pub events: Vec<(f64, String, String)>,
    /// Largest per-step DC-link power residual over all plants, pu.
    pub max_dc_residual: f64,
    pub steps: u64,
    /// Initialization snapshot text for the run log.
    pub snapshot: String,
}

/// Uniformly sampled channels, stored column by column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    pub channels: Vec<ChannelInfo>,
    pub time: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    pub meta: RunMeta,
}

impl Recording {
    pub fn new(channels: Vec<ChannelInfo>, meta: RunMeta) -> Self {
        let data = vec![Vec::new(); channels.len()];
        Recording {
            channels,
            time: Vec::new(),
            data,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn push(&mut self, t: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.data.len());
        self.time.push(t);
        for (col, &v) in self.data.iter_mut().zip(values) {
            col.push(v);
        }
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .map(|k| self.data[k].as_slice())
    }

    /// CSV text: header `time,<channels>`, then one row per sample with
    /// every value in fixed notation with [`CSV_DECIMALS`] decimals.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidValue(format!("csv: {e}"));
        let mut header = vec!["time".to_string()];
        header.extend(self.channels.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(csv_err)?;
        let mut row = Vec::with_capacity(self.data.len() + 1);
        for (k, t) in self.time.iter().enumerate() {
            row.clear();
            row.push(format!("{t:.CSV_DECIMALS$}"));
            for col in &self.data {
                // Adding zero turns -0 into 0.
                row.push(format!("{:.CSV_DECIMALS$}", col[k] + 0.0));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidValue(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }

    /// Sidecar text with run metadata and channel units.
    pub fn meta_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let _ = writeln!(out, "version {}", m.version);
        let _ = writeln!(out, "case_sha256 {}", m.case_hash);
        let _ = writeln!(out, "dt {}", m.dt);
        let _ = writeln!(out, "t_end {}", m.t_end);
        let _ = writeln!(out, "sample_period {}", m.sample_period);
        let _ = writeln!(out, "samples {}", self.len());
        let _ = writeln!(out, "steps {}", m.steps);
        let _ = writeln!(out, "decimals {CSV_DECIMALS}");
        let _ = writeln!(out, "max_dc_residual {:.3e}", m.max_dc_residual);
        let _ = writeln!(out, "channel time s");
        for c in &self.channels {
            let _ = writeln!(out, "channel {} {}", c.name, c.unit);
        }
        for (t, target, what) in &m.events {
            let _ = writeln!(out, "event {t:.6} {target} {what}");
        }
        out
    }
}

pub fn write_csv(rec: &Recording, path: &Path) -> Result<()> {
    std::fs::write(path, rec.to_csv()?).map_err(|e| Error::io(path, e))
}

pub fn write_meta(rec: &Recording, path: &Path) -> Result<()> {
    std::fs::write(path, rec.meta_text()).map_err(|e| Error::io(path, e))
}
