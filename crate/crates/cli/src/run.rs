use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use sha1::{Digest, Sha1};
use toc_core::agent::{self, AgentState, Learner};
use toc_core::metrics::RunLog;

use crate::config::RunConfig;
use crate::CliError;

/// Overrides the directory run outputs are written under.
pub const OUTPUT_ROOT_VAR: &str = "TOC_OUTPUT_ROOT";

pub const CONFIG_FILE: &str = "config.cfg";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

pub fn version_string() -> String {
    format!("toc {}", env!("CARGO_PKG_VERSION"))
}

/// Git blob id of `content`.
pub fn git_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

/// `<root>/<output_dir>/<variant>/seed-<seed>`.
pub fn run_dir(root: &Path, config: &RunConfig, learner: Learner, seed: u64) -> PathBuf {
    root.join(&config.output_dir).join(learner.name()).join(format!("seed-{seed}"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_description(dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg = dir.join(CONFIG_FILE);
    fs::write(&cfg, config.to_text()).map_err(io_err(&cfg))?;
    let version = version_string();
    let manifest = format!(
        "version = {version}\nversion_hash = {}\nvariants = {}\nseeds = {}\n",
        git_hash(version.as_bytes()),
        config.variants.iter().map(|l| l.name()).collect::<Vec<_>>().join(", "),
        config.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
    );
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(io_err(&path))
}

/// One training run: log, final checkpoint and its own description.
pub fn run_single(root: &Path, config: &RunConfig, learner: Learner, seed: u64) -> Result<PathBuf, CliError> {
    let dir = run_dir(root, config, learner, seed);
    write_description(&dir, &config.single(learner, seed))?;
    let log_path = dir.join(LOG_FILE);
    let mut log = RunLog::create(&log_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let state: AgentState =
        agent::train(&config.trainer(learner, seed), &mut log).map_err(|e| CliError::Runtime(e.to_string()))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    state.save(&ckpt).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(dir)
}

/// Runs every variant x seed. With `jobs > 1` each run is a child process
/// of `exe`; otherwise runs go one after another in this process. Returns
/// the run directories. Every run is attempted; the first failure is
/// reported after the rest finish.
pub fn run_all(root: &Path, config: &RunConfig, jobs: usize, exe: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    write_description(&root.join(&config.output_dir), config)?;
    let pairs: Vec<(Learner, u64)> = config
        .variants
        .iter()
        .flat_map(|&l| config.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let mut dirs = Vec::new();
    let mut first_error = None;
    match exe {
        Some(exe) if jobs > 1 => {
            for chunk in pairs.chunks(jobs) {
                let mut children = Vec::new();
                for &(l, s) in chunk {
                    let single = config.single(l, s);
                    let dir = run_dir(root, config, l, s);
                    write_description(&dir, &single)?;
                    let child = Command::new(exe)
                        .arg("run")
                        .arg("--config")
                        .arg(dir.join(CONFIG_FILE))
                        .arg("--worker")
                        .env(OUTPUT_ROOT_VAR, root)
                        .spawn()
                        .map_err(|e| CliError::Runtime(format!("cannot spawn worker: {e}")))?;
                    children.push((dir, child));
                }
                for (dir, mut child) in children {
                    let status = child.wait().map_err(|e| CliError::Runtime(e.to_string()))?;
                    if status.success() {
                        dirs.push(dir);
                    } else if first_error.is_none() {
                        first_error = Some(CliError::Runtime(format!("worker for {} failed ({status})", dir.display())));
                    }
                }
            }
        }
        _ => {
            for (l, s) in pairs {
                match run_single(root, config, l, s) {
                    Ok(dir) => dirs.push(dir),
                    Err(e) => {
                        eprintln!("{} seed {s}: {e}", l.name());
                        first_error.get_or_insert(e);
                    }
                }
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(dirs),
    }
}
