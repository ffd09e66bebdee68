//! Newline-delimited JSON episode datasets.
//!
//! One line per [`EpisodeRecord`]:
//! `{"episode_id":..,"seed":..,"policy_id":..,"transitions":[{"state":[..],
//! "action":{"cont":[..],"mode":0},"reward":..,"next_state":[..],"terminal":..}],
//! "success":..}`. Floats use shortest round-trip decimal encoding, so
//! parse followed by serialize reproduces a file byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use q2opt_core::cem::HybridAction;
use q2opt_core::distrl::Transition;
use q2opt_core::sim::EpisodeRecord;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Serialize)]
struct TransitionOut<'a> {
    state: &'a [f64],
    action: &'a HybridAction,
    reward: f64,
    next_state: &'a [f64],
    terminal: bool,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    episode_id: u64,
    seed: u64,
    policy_id: &'a str,
    transitions: Vec<TransitionOut<'a>>,
    success: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionIn {
    state: Vec<f64>,
    action: HybridAction,
    reward: f64,
    next_state: Vec<f64>,
    terminal: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    episode_id: u64,
    seed: u64,
    policy_id: String,
    transitions: Vec<TransitionIn>,
    success: bool,
}

/// Serializes one record as a single line without the trailing newline.
pub fn record_to_line(record: &EpisodeRecord) -> String {
    let out = RecordOut {
        episode_id: record.episode_id,
        seed: record.seed,
        policy_id: &record.policy_id,
        transitions: record
            .transitions
            .iter()
            .map(|t| TransitionOut {
                state: &t.state,
                action: &t.action,
                reward: t.reward,
                next_state: &t.next_state,
                terminal: t.terminal,
            })
            .collect(),
        success: record.success,
    };
    serde_json::to_string(&out).expect("records hold only finite numbers")
}

/// Parses one line; the error message carries no location.
pub fn parse_line(line: &str) -> std::result::Result<EpisodeRecord, String> {
    let r: RecordIn = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let n = r.transitions.len();
    let mut transitions = Vec::with_capacity(n);
    for (i, t) in r.transitions.into_iter().enumerate() {
        if t.terminal && i + 1 != n {
            return Err(format!("transition {i} is terminal but not last"));
        }
        if !t.action.is_valid() {
            return Err(format!("transition {i} has an out-of-range action"));
        }
        transitions.push(Transition {
            state: t.state,
            action: t.action,
            reward: t.reward,
            next_state: t.next_state,
            terminal: t.terminal,
            policy_id: r.policy_id.clone(),
            episode_id: r.episode_id,
            step_index: i as u32,
        });
    }
    Ok(EpisodeRecord {
        episode_id: r.episode_id,
        seed: r.seed,
        policy_id: r.policy_id,
        transitions,
        success: r.success,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DatasetSummary {
    pub episodes: u64,
    pub transitions: u64,
    pub successes: u64,
}

impl DatasetSummary {
    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }

    fn add(&mut self, record: &EpisodeRecord) {
        self.episodes += 1;
        self.transitions += record.transitions.len() as u64;
        self.successes += u64::from(record.success);
    }
}

pub struct DatasetWriter<W: Write = BufWriter<File>> {
    inner: W,
    path: PathBuf,
    summary: DatasetSummary,
}

impl DatasetWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufWriter::new(file), path))
    }
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(inner: W, path: &Path) -> Self {
        Self {
            inner,
            path: path.to_path_buf(),
            summary: DatasetSummary::default(),
        }
    }

    pub fn write(&mut self, record: &EpisodeRecord) -> Result<()> {
        let line = record_to_line(record);
        writeln!(self.inner, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.summary.add(record);
        Ok(())
    }

    pub fn finish(mut self) -> Result<DatasetSummary> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.summary)
    }
}

/// Streams records from a dataset file, reporting malformed lines by
/// number (1-based).
pub struct DatasetReader {
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
    line: usize,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            lines: BufReader::new(file).lines(),
            path: path.to_path_buf(),
            line: 0,
        })
    }
}

impl Iterator for DatasetReader {
    type Item = Result<EpisodeRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_line(&text).map_err(|message| Error::Dataset {
                path: self.path.clone(),
                line: self.line,
                message,
            }));
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<EpisodeRecord>> {
    DatasetReader::open(path)?.collect()
}

pub fn write_dataset(path: &Path, records: &[EpisodeRecord]) -> Result<DatasetSummary> {
    let mut w = DatasetWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

/// Endless stream of transitions that reopens the dataset when it runs
/// out, so offline training can take several passes.
pub struct TransitionCycle {
    path: PathBuf,
    reader: DatasetReader,
    pending: std::vec::IntoIter<Transition>,
    passes: u64,
    seen_in_pass: u64,
}

impl TransitionCycle {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            reader: DatasetReader::open(path)?,
            pending: Vec::new().into_iter(),
            passes: 0,
            seen_in_pass: 0,
        })
    }

    /// Completed passes over the file.
    pub fn passes(&self) -> u64 {
        self.passes
    }

    pub fn next_transition(&mut self) -> Result<Transition> {
        loop {
            if let Some(t) = self.pending.next() {
                self.seen_in_pass += 1;
                return Ok(t);
            }
            match self.reader.next() {
                Some(record) => self.pending = record?.transitions.into_iter(),
                None => {
                    if self.seen_in_pass == 0 {
                        return Err(Error::Dataset {
                            path: self.path.clone(),
                            line: self.reader.line,
                            message: "dataset holds no transitions".into(),
                        });
                    }
                    self.passes += 1;
                    self.seen_in_pass = 0;
                    self.reader = DatasetReader::open(&self.path)?;
                }
            }
        }
    }
}
