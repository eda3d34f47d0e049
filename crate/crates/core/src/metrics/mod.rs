//! Episode metrics and the per-run CSV log.
//!
//! Every metric is a pure function of an [`EpisodeTrace`], which is just the
//! env's exported trace rows plus a task and phase tag, so metrics can be
//! recomputed from a trace file.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Task, TraceStep, FORCE_RANGE, SUCCESS_REWARD};

/// A step counts as a touch event when the force/torque reading exceeds
/// this magnitude.
pub const TOUCH_EVENT_THRESHOLD: f64 = 1e-3;

/// Exact column order of the run log.
pub const LOG_COLUMNS: [&str; 17] = [
    "step",
    "episode",
    "phase",
    "variant",
    "seed",
    "r_int_mean",
    "extrinsic_return",
    "success",
    "episode_steps",
    "touch_var",
    "touch_events",
    "obj_move",
    "l_touch",
    "l_fdm",
    "l_critic",
    "l_actor",
    "alpha",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has no rows")]
    EmptyTrace,
    #[error("log schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaDrift { expected: String, found: String },
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Exploration,
    Adaptation,
    /// Deterministic evaluation episodes.
    Evaluation,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Exploration => "exploration",
            Phase::Adaptation => "adaptation",
            Phase::Evaluation => "evaluation",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        [Phase::Exploration, Phase::Adaptation, Phase::Evaluation]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| MetricsError::UnknownPhase(s.to_string()))
    }
}

/// One episode: the state right after reset followed by one row per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task: Task,
    pub phase: Phase,
    rows: Vec<TraceStep>,
}

impl EpisodeTrace {
    pub fn new(task: Task, phase: Phase, initial: TraceStep) -> Self {
        Self {
            task,
            phase,
            rows: vec![initial],
        }
    }

    pub fn from_rows(task: Task, phase: Phase, rows: Vec<TraceStep>) -> Result<Self> {
        if rows.is_empty() {
            return Err(MetricsError::EmptyTrace);
        }
        Ok(Self { task, phase, rows })
    }

    pub fn read_csv<R: Read>(task: Task, phase: Phase, input: R) -> Result<Self> {
        Self::from_rows(task, phase, crate::env::read_trace_csv(input)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::env::write_trace_csv(out, &self.rows)?;
        Ok(())
    }

    pub fn push(&mut self, row: TraceStep) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceStep] {
        &self.rows
    }

    /// Rows produced by env steps (everything after the reset row).
    pub fn step_rows(&self) -> &[TraceStep] {
        &self.rows[1..]
    }

    pub fn steps(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn extrinsic_return(&self) -> f64 {
        self.step_rows().iter().map(|r| r.reward).sum()
    }

    pub fn success(&self) -> bool {
        self.step_rows().iter().any(|r| r.reward >= SUCCESS_REWARD)
    }
}

/// Population variance, shifted by the first value so constant signals give
/// exactly zero.
fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(base) = it.next() else {
        return 0.0;
    };
    let n = values.clone().count() as f64;
    let shift = values.clone().map(|v| v - base).sum::<f64>() / n;
    values.map(|v| (v - base - shift).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchInteraction {
    /// Mean over the six force/torque components of their variance across
    /// the episode.
    pub variance: f64,
    /// Steps whose force/torque magnitude exceeds the threshold.
    pub events: usize,
}

pub fn touch_interaction(trace: &EpisodeTrace) -> TouchInteraction {
    touch_interaction_with(trace, TOUCH_EVENT_THRESHOLD)
}

pub fn touch_interaction_with(trace: &EpisodeTrace, threshold: f64) -> TouchInteraction {
    let rows = trace.step_rows();
    let components = FORCE_RANGE.len() as f64;
    let variance = FORCE_RANGE
        .map(|j| variance(rows.iter().map(move |r| r.touch[j])))
        .sum::<f64>()
        / components;
    let events = rows
        .iter()
        .filter(|r| r.touch[FORCE_RANGE].iter().map(|f| f * f).sum::<f64>().sqrt() > threshold)
        .count();
    TouchInteraction { variance, events }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectMovement {
    /// Door-angle variance (rad^2) for Opening, otherwise the summed
    /// variance of the object's x and y position (m^2).
    pub variance: f64,
    /// Final offset from the start: degrees of door swing for Opening,
    /// millimetres of object travel otherwise.
    pub displacement: f64,
}

pub fn object_movement(trace: &EpisodeTrace) -> ObjectMovement {
    let rows = trace.rows();
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    if trace.task == Task::Opening {
        ObjectMovement {
            variance: variance(rows.iter().map(|r| r.object_angle)),
            displacement: (last.object_angle - first.object_angle).to_degrees(),
        }
    } else {
        ObjectMovement {
            variance: variance(rows.iter().map(|r| r.object_x)) + variance(rows.iter().map(|r| r.object_y)),
            displacement: (last.object_x - first.object_x).hypot(last.object_y - first.object_y) * 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub success: bool,
    pub steps: usize,
    pub extrinsic_return: f64,
    pub touch: TouchInteraction,
    pub movement: ObjectMovement,
}

impl EpisodeSummary {
    pub fn of(trace: &EpisodeTrace) -> Self {
        Self {
            success: trace.success(),
            steps: trace.steps(),
            extrinsic_return: trace.extrinsic_return(),
            touch: touch_interaction(trace),
            movement: object_movement(trace),
        }
    }
}

fn mean_of(window: &[EpisodeSummary], f: impl Fn(&EpisodeSummary) -> f64) -> Option<f64> {
    if window.is_empty() {
        return None;
    }
    Some(window.iter().map(f).sum::<f64>() / window.len() as f64)
}

/// Fraction of successful episodes; `None` for an empty window.
pub fn success_rate(window: &[EpisodeSummary]) -> Option<f64> {
    mean_of(window, |e| if e.success { 1.0 } else { 0.0 })
}

/// Mean steps to success, with failed episodes counted as `horizon`.
pub fn episode_steps(window: &[EpisodeSummary], horizon: usize) -> Option<f64> {
    mean_of(window, |e| if e.success { e.steps as f64 } else { horizon as f64 })
}

/// Window means of every per-episode metric in the log.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindowStats {
    pub episodes: usize,
    pub success: Option<f64>,
    pub episode_steps: Option<f64>,
    pub extrinsic_return: Option<f64>,
    pub touch_var: Option<f64>,
    pub touch_events: Option<f64>,
    pub obj_move: Option<f64>,
}

impl WindowStats {
    pub fn of(window: &[EpisodeSummary], horizon: usize) -> Self {
        Self {
            episodes: window.len(),
            success: success_rate(window),
            episode_steps: episode_steps(window, horizon),
            extrinsic_return: mean_of(window, |e| e.extrinsic_return),
            touch_var: mean_of(window, |e| e.touch.variance),
            touch_events: mean_of(window, |e| e.touch.events as f64),
            obj_move: mean_of(window, |e| e.movement.variance),
        }
    }
}

/// One row of the run log. Empty cells (`None`) mark values with nothing
/// to average over in that interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub episode: u64,
    pub phase: Phase,
    pub variant: String,
    pub seed: u64,
    pub r_int_mean: Option<f64>,
    pub extrinsic_return: Option<f64>,
    pub success: Option<f64>,
    pub episode_steps: Option<f64>,
    pub touch_var: Option<f64>,
    pub touch_events: Option<f64>,
    pub obj_move: Option<f64>,
    pub l_touch: Option<f64>,
    pub l_fdm: Option<f64>,
    pub l_critic: Option<f64>,
    pub l_actor: Option<f64>,
    pub alpha: Option<f64>,
}

/// Columns holding per-interval numbers, the ones worth plotting.
pub const METRIC_COLUMNS: [&str; 12] = [
    "r_int_mean",
    "extrinsic_return",
    "success",
    "episode_steps",
    "touch_var",
    "touch_events",
    "obj_move",
    "l_touch",
    "l_fdm",
    "l_critic",
    "l_actor",
    "alpha",
];

impl LogRow {
    /// Value of a metric column; `None` for names outside `METRIC_COLUMNS`.
    pub fn metric(&self, name: &str) -> Option<Option<f64>> {
        Some(match name {
            "r_int_mean" => self.r_int_mean,
            "extrinsic_return" => self.extrinsic_return,
            "success" => self.success,
            "episode_steps" => self.episode_steps,
            "touch_var" => self.touch_var,
            "touch_events" => self.touch_events,
            "obj_move" => self.obj_move,
            "l_touch" => self.l_touch,
            "l_fdm" => self.l_fdm,
            "l_critic" => self.l_critic,
            "l_actor" => self.l_actor,
            "alpha" => self.alpha,
            _ => return None,
        })
    }
}

fn check_header(found: &[String]) -> Result<()> {
    if found.iter().map(String::as_str).eq(LOG_COLUMNS) {
        Ok(())
    } else {
        Err(MetricsError::SchemaDrift {
            expected: LOG_COLUMNS.join(","),
            found: found.join(","),
        })
    }
}

/// Append-only CSV stream with a fixed schema; every row is flushed.
pub struct RunLog<W: Write> {
    writer: csv::Writer<W>,
    rows: usize,
}

impl<W: Write> RunLog<W> {
    /// Starts a fresh log, writing the header.
    pub fn new(out: W) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        writer.write_record(LOG_COLUMNS)?;
        writer.flush()?;
        Ok(Self { writer, rows: 0 })
    }

    pub fn log(&mut self, row: &LogRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        self.rows += 1;
        Ok(())
    }

    /// Rows written by this handle.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer.into_inner().map_err(|e| MetricsError::Io(e.into_error()))
    }
}

impl RunLog<File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(File::create(path)?)
    }

    /// Continues an existing log after checking its header; a missing or
    /// empty file gets a fresh header.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let existing = match File::open(path) {
            Ok(f) => {
                let mut first = String::new();
                BufReader::new(f).read_line(&mut first)?;
                Some(first)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        match existing {
            Some(line) if !line.trim().is_empty() => {
                let found: Vec<String> = line.trim_end().split(',').map(str::to_string).collect();
                check_header(&found)?;
                let file = OpenOptions::new().append(true).open(path)?;
                let writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
                Ok(Self { writer, rows: 0 })
            }
            _ => Self::create(path),
        }
    }
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    check_header(&header)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_log_file(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    read_log(BufReader::new(File::open(path)?))
}
