use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{io_err, CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardSource {
    Splat,
    Icm,
    Task,
}

impl RewardSource {
    pub fn name(self) -> &'static str {
        match self {
            RewardSource::Splat => "splat",
            RewardSource::Icm => "icm",
            RewardSource::Task => "task",
        }
    }
}

/// Per-step reward CSV with columns `step,e_t,r,source`.
pub struct RewardTrace {
    out: csv::Writer<BufWriter<File>>,
}

impl RewardTrace {
    /// Open for appending; the header is written only to a new file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let fresh = !path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut out = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        if fresh {
            out.write_record(["step", "e_t", "r", "source"]).map_err(csv_err)?;
        }
        Ok(Self { out })
    }

    pub fn record(&mut self, step: u64, error: f64, reward: f64, source: RewardSource) -> Result<()> {
        self.out
            .write_record([
                step.to_string(),
                format!("{error:.6e}"),
                format!("{reward}"),
                source.name().to_string(),
            ])
            .map_err(csv_err)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| CoreError::Output(format!("reward trace: {e}")))
    }
}

fn csv_err(e: csv::Error) -> CoreError {
    CoreError::Output(format!("csv: {e}"))
}
