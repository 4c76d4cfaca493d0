//! Triples JSONL, per-epoch trace CSV and checkpoint JSON.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

use super::{EpochTrace, ToyEncoderParams, TrainConfig, TrainState, TripleRef};

pub const TRACE_HEADER: &str = "epoch,mean_w_d,mean_w_q,t_d,t_q,dlen,qlen";

pub fn read_triples(reader: impl BufRead, source: &str) -> Result<Vec<TripleRef>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TripleRef = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{source}:{}", lineno + 1), e))?;
        if !t.teacher_margin.is_finite() {
            return Err(Error::parse(
                format!("{source}:{}", lineno + 1),
                "teacher_margin must be finite",
            ));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_triples<'a>(
    mut writer: impl Write,
    triples: impl IntoIterator<Item = &'a TripleRef>,
) -> Result<()> {
    for t in triples {
        serde_json::to_writer(&mut writer, t).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_trace(mut writer: impl Write, traces: &[EpochTrace]) -> Result<()> {
    writeln!(writer, "{TRACE_HEADER}")?;
    for t in traces {
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            t.epoch, t.mean_doc_weight, t.mean_query_weight, t.t_d, t.t_q, t.mean_dlen, t.mean_qlen
        )?;
    }
    Ok(())
}

/// Serialized training result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ToyEncoderParams,
    pub t_d: f64,
    pub t_q: f64,
    pub cfg: TrainConfig,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn new(state: &TrainState, cfg: &TrainConfig) -> Self {
        Checkpoint {
            params: state.params.clone(),
            t_d: state.t_d,
            t_q: state.t_q,
            cfg: *cfg,
            seed: state.rng_seed,
            step: state.step,
        }
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            params: self.params.clone(),
            t_d: self.t_d,
            t_q: self.t_q,
            step: self.step,
            rng_seed: self.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, |w| {
            serde_json::to_writer(&mut *w, self)?;
            w.write_all(b"\n")
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        ckpt.params.validate()?;
        if !(ckpt.t_d.is_finite() && ckpt.t_d >= 0.0 && ckpt.t_q.is_finite() && ckpt.t_q >= 0.0) {
            return Err(Error::parse(path.display().to_string(), "thresholds must be finite and >= 0"));
        }
        Ok(ckpt)
    }
}
