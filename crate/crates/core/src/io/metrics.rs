//! Run metrics. The JSON-lines log is the source of truth (one
//! self-describing record per line, first line is the resolved config); the
//! CSV mirror has a frozen column order for plotting:
//!
//! `run_id,step,episode,episodic_reward,eval_reward,delta_mean_abs,entropy,
//!  grad_norm_actor,grad_norm_critic,grad_norm_rnn,wall_time`
//!
//! Optional fields are left empty in the CSV. `wall_time` is only populated
//! when timing is explicitly enabled, so that identical (seed, config) runs
//! produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub step: u64,
    pub episode: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodic_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_reward: Option<f64>,
    pub delta_mean_abs: f64,
    pub entropy: f64,
    pub grad_norm_actor: f64,
    pub grad_norm_critic: f64,
    pub grad_norm_rnn: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

pub const CSV_HEADER: &str = "run_id,step,episode,episodic_reward,eval_reward,delta_mean_abs,entropy,grad_norm_actor,grad_norm_critic,grad_norm_rnn,wall_time";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn csv_line(r: &MetricRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.run_id,
        r.step,
        r.episode,
        csv_opt(r.episodic_reward),
        csv_opt(r.eval_reward),
        r.delta_mean_abs,
        r.entropy,
        r.grad_norm_actor,
        r.grad_norm_critic,
        r.grad_norm_rnn,
        csv_opt(r.wall_time),
    )
}

/// Parse one CSV data line back into a record (used by tests and tooling).
pub fn parse_csv_line(line: &str) -> Option<MetricRecord> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 11 {
        return None;
    }
    let opt = |s: &str| -> Option<f64> {
        if s.is_empty() {
            None
        } else {
            s.parse().ok()
        }
    };
    Some(MetricRecord {
        run_id: f[0].to_string(),
        step: f[1].parse().ok()?,
        episode: f[2].parse().ok()?,
        episodic_reward: opt(f[3]),
        eval_reward: opt(f[4]),
        delta_mean_abs: f[5].parse().ok()?,
        entropy: f[6].parse().ok()?,
        grad_norm_actor: f[7].parse().ok()?,
        grad_norm_critic: f[8].parse().ok()?,
        grad_norm_rnn: f[9].parse().ok()?,
        wall_time: opt(f[10]),
    })
}

/// Single-writer metric sink for one run.
pub trait MetricSink: Send {
    /// Called once before any record with the resolved config as JSON.
    fn config_header(&mut self, config_json: &str) -> Result<()>;
    fn record(&mut self, r: &MetricRecord) -> Result<()>;
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Discards everything (library-level training runs in tests).
pub struct NullSink;

impl MetricSink for NullSink {
    fn config_header(&mut self, _config_json: &str) -> Result<()> {
        Ok(())
    }
    fn record(&mut self, _r: &MetricRecord) -> Result<()> {
        Ok(())
    }
}

/// Accumulates the exact bytes the file sink would write.
#[derive(Default)]
pub struct MemorySink {
    pub jsonl: String,
    pub csv: String,
    pub records: Vec<MetricRecord>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl MetricSink for MemorySink {
    fn config_header(&mut self, config_json: &str) -> Result<()> {
        self.jsonl.push_str(&format!("{{\"type\":\"config\",\"config\":{config_json}}}\n"));
        self.csv.push_str(CSV_HEADER);
        self.csv.push('\n');
        Ok(())
    }

    fn record(&mut self, r: &MetricRecord) -> Result<()> {
        self.jsonl.push_str(&serde_json::to_string(r).expect("record serializes"));
        self.jsonl.push('\n');
        self.csv.push_str(&csv_line(r));
        self.csv.push('\n');
        self.records.push(r.clone());
        Ok(())
    }
}

/// Writes `<stem>.jsonl` and `<stem>.csv`.
pub struct FileSink {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
}

impl FileSink {
    pub fn create(dir: &Path, stem: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let jsonl = BufWriter::new(File::create(dir.join(format!("{stem}.jsonl")))?);
        let csv = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
        Ok(FileSink { jsonl, csv })
    }
}

impl MetricSink for FileSink {
    fn config_header(&mut self, config_json: &str) -> Result<()> {
        writeln!(self.jsonl, "{{\"type\":\"config\",\"config\":{config_json}}}")?;
        writeln!(self.csv, "{CSV_HEADER}")?;
        Ok(())
    }

    fn record(&mut self, r: &MetricRecord) -> Result<()> {
        writeln!(self.jsonl, "{}", serde_json::to_string(r).expect("record serializes"))?;
        writeln!(self.csv, "{}", csv_line(r))?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.jsonl.flush()?;
        self.csv.flush()?;
        Ok(())
    }
}
