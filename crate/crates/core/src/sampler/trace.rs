//! Per-iteration chain records and their JSON Lines form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::moves::MoveType;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, OperatorSet, SymbolicTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub tree: usize,
    #[serde(rename = "type")]
    pub kind: MoveType,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub log_jmp: f64,
    pub trees: Vec<Arc<SymbolicTree>>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub moves: Vec<MoveRecord>,
}

impl TraceRecord {
    pub fn expressions(&self) -> Vec<String> {
        self.trees.iter().map(|t| t.canonical_string()).collect()
    }
}

/// Serialized form of a record. Trees are canonical strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub iter: usize,
    pub log_jmp: f64,
    pub trees: Vec<String>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub moves: Vec<MoveRecord>,
}

impl From<&TraceRecord> for RawRecord {
    fn from(r: &TraceRecord) -> Self {
        RawRecord {
            iter: r.iter,
            log_jmp: r.log_jmp,
            trees: r.expressions(),
            beta: r.beta.clone(),
            sigma2: r.sigma2,
            moves: r.moves.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceCounts {
    pub grow_proposed: usize,
    pub grow_accepted: usize,
    pub prune_proposed: usize,
    pub prune_accepted: usize,
}

impl AcceptanceCounts {
    pub fn record(&mut self, m: &MoveRecord) {
        match m.kind {
            MoveType::Grow => {
                self.grow_proposed += 1;
                self.grow_accepted += usize::from(m.accepted);
            }
            MoveType::Prune => {
                self.prune_proposed += 1;
                self.prune_accepted += usize::from(m.accepted);
            }
        }
    }

    pub fn proposed(&self) -> usize {
        self.grow_proposed + self.prune_proposed
    }

    pub fn accepted(&self) -> usize {
        self.grow_accepted + self.prune_accepted
    }

    pub fn rate(&self) -> f64 {
        self.accepted() as f64 / self.proposed().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub counts: AcceptanceCounts,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: TraceRecord) {
        for m in &record.moves {
            self.counts.record(m);
        }
        self.records.push(record);
    }

    pub fn log_jmp_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.log_jmp).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, &RawRecord::from(r)).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        self.write_jsonl(BufWriter::new(File::create(path)?))
    }

    /// Rebuilds a trace from raw records, parsing trees over `p` features.
    pub fn from_raw(raw: &[RawRecord], p: usize, ops: &OperatorSet) -> Result<ChainTrace> {
        let mut trace = ChainTrace::default();
        for r in raw {
            let trees = r
                .trees
                .iter()
                .map(|s| parse_expression(s, p, ops).map(Arc::new))
                .collect::<Result<Vec<_>>>()?;
            trace.push(TraceRecord {
                iter: r.iter,
                log_jmp: r.log_jmp,
                trees,
                beta: r.beta.clone(),
                sigma2: r.sigma2,
                moves: r.moves.clone(),
            });
        }
        Ok(trace)
    }
}

/// Reads a JSON Lines trace. Malformed lines yield a parse error naming the
/// 1-based line.
pub fn read_raw_jsonl(path: &Path) -> Result<Vec<RawRecord>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
