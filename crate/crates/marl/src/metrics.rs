use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use marl_core::rl::BatchSummary;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const COLUMNS: [&str; 7] = ["batch", "team", "mean_reward", "win_rate", "lr", "seconds", "mean_alive"];

const PREAMBLE: &str = "# mean_reward: summed team reward per episode divided by the team's starting size, averaged over the batch\n";

/// One team's row of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub batch: u64,
    pub team: u8,
    pub mean_reward: f64,
    /// Empty for Jungle.
    pub win_rate: Option<f64>,
    /// Empty for teams that do not learn.
    pub lr: Option<f64>,
    /// Seconds since training started; empty when wall-clock recording is off.
    pub seconds: Option<f64>,
    pub mean_alive: f64,
}

impl MetricsRow {
    pub fn from_summary(s: &BatchSummary, seconds: Option<f64>) -> Vec<MetricsRow> {
        s.teams
            .iter()
            .map(|t| MetricsRow {
                batch: s.batch,
                team: t.team,
                mean_reward: t.mean_reward,
                win_rate: t.win_rate,
                lr: t.lr,
                seconds,
                mean_alive: t.mean_alive,
            })
            .collect()
    }
}

pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(Error::io(path))?;
        file.write_all(PREAMBLE.as_bytes()).map_err(Error::io(path))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Csv(e.into()))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(Error::io(path))?;
    if first != PREAMBLE {
        return Err(Error::Config(format!("{}: not a metrics file", path.display())));
    }
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(COLUMNS) {
        return Err(Error::Config(format!("{}: unexpected metrics columns", path.display())));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
