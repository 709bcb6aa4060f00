//! CSV episode logs and sweep summaries.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a log
//! back reproduces every value bit for bit.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::controller::{Mode, Termination};
use crate::cost::{CriticWeights, Q_DIM};
use crate::dynamics::{Action, ActionVector, BodyState, StateVector, LEG_NAMES};
use crate::error::{Error, Result};
use crate::sim::{EpisodeLog, EpisodeSummary, Failure, LogRow, SweepResult, POSE_AXES};

const STATE_NAMES: [&str; 12] = [
    "px", "py", "pz", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz",
];

// Column offsets of the episode CSV.
const COL_STATE: usize = 1;
const COL_DES: usize = 13;
const COL_U: usize = 25;
const COL_APPLIED: usize = 37;
const COL_R: usize = 49;
const COL_ACC: usize = 50;
const COL_ITERS: usize = 51;
const COL_STATUS: usize = 52;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EPISODES_FILE: &str = "episodes.csv";

pub fn episode_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(STATE_NAMES.iter().map(|s| s.to_string()));
    h.extend(STATE_NAMES.iter().map(|s| format!("des_{s}")));
    for suffix in ["", "_applied"] {
        for leg in LEG_NAMES {
            for c in ["fx", "fy", "fz"] {
                h.push(format!("{leg}_{c}{suffix}"));
            }
        }
    }
    h.extend(["r", "acc", "iters", "status"].map(String::from));
    h.extend((0..Q_DIM).map(|j| format!("w{j}")));
    h
}

fn termination_str(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::Stalled => "stalled",
        Termination::MaxIters => "max_iters",
    }
}

fn parse_termination(s: &str) -> Option<Termination> {
    match s {
        "converged" => Some(Termination::Converged),
        "stalled" => Some(Termination::Stalled),
        "max_iters" => Some(Termination::MaxIters),
        _ => None,
    }
}

const FAILED_PREFIX: &str = "failed: ";

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn row_record(row: &LogRow) -> Vec<String> {
    let mut rec = vec![f(row.t)];
    rec.extend(row.x.to_vector().iter().map(|v| f(*v)));
    rec.extend(row.x_des.to_vector().iter().map(|v| f(*v)));
    rec.extend(row.u.to_vector().iter().map(|v| f(*v)));
    rec.extend(row.applied.to_vector().iter().map(|v| f(*v)));
    rec.push(f(row.r));
    rec.push(f(row.accumulated));
    rec.push(row.iterations.to_string());
    rec.push(termination_str(row.termination).to_string());
    match &row.critic {
        Some(w) => rec.extend(w.0.iter().map(|v| f(*v))),
        None => rec.extend(std::iter::repeat_n(String::new(), Q_DIM)),
    }
    rec
}

fn failure_record(fail: &Failure) -> Vec<String> {
    let width = episode_header().len();
    let mut rec = vec![f(fail.t)];
    rec.extend(fail.x.to_vector().iter().map(|v| f(*v)));
    rec.resize(COL_STATUS, String::new());
    rec.push(format!("{FAILED_PREFIX}{}", fail.message));
    rec.resize(width, String::new());
    rec
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn episode_csv(log: &EpisodeLog) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(episode_header())?;
    for row in &log.rows {
        w.write_record(row_record(row))?;
    }
    if let Some(fail) = &log.failure {
        w.write_record(failure_record(fail))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `log` as `dir/{mode}_N{N}_seed{seed}.csv` and returns the path.
pub fn write_episode(dir: &Path, log: &EpisodeLog) -> Result<PathBuf> {
    let path = dir.join(log.file_name());
    write_atomic(&path, &episode_csv(log)?)?;
    Ok(path)
}

/// Mode, horizon and seed encoded in an episode file name.
pub fn parse_episode_file_name(name: &str) -> Option<(Mode, usize, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (mode, rest) = stem.split_once("_N")?;
    let (n, seed) = rest.split_once("_seed")?;
    Some((mode.parse().ok()?, n.parse().ok()?, seed.parse().ok()?))
}

fn parse_f(field: &str, what: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Config(format!("bad {what} value {field:?}")))
}

fn parse_slice(rec: &csv::StringRecord, start: usize, what: &str) -> Result<[f64; 12]> {
    let mut out = [0.0; 12];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = parse_f(&rec[start + k], what)?;
    }
    Ok(out)
}

pub fn read_episode(path: &Path) -> Result<EpisodeLog> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let (mode, horizon, seed) = parse_episode_file_name(name)
        .ok_or_else(|| Error::Config(format!("not an episode file name: {name}")))?;
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != episode_header() {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut log = EpisodeLog {
        mode,
        horizon,
        seed,
        rows: Vec::new(),
        failure: None,
    };
    for rec in reader.records() {
        let rec = rec?;
        let t = parse_f(&rec[0], "t")?;
        let x = BodyState::from_vector(&StateVector::from(parse_slice(&rec, COL_STATE, "state")?));
        let status = &rec[COL_STATUS];
        if let Some(message) = status.strip_prefix(FAILED_PREFIX) {
            log.failure = Some(Failure {
                t,
                x,
                message: message.to_string(),
            });
            continue;
        }
        let x_des = BodyState::from_vector(&StateVector::from(parse_slice(&rec, COL_DES, "reference")?));
        let u = Action::from_vector(&ActionVector::from(parse_slice(&rec, COL_U, "action")?));
        let applied = Action::from_vector(&ActionVector::from(parse_slice(&rec, COL_APPLIED, "applied action")?));
        let termination = parse_termination(status)
            .ok_or_else(|| Error::Config(format!("bad status {status:?}")))?;
        let critic = if rec[COL_STATUS + 1].is_empty() {
            None
        } else {
            let mut w = [0.0; Q_DIM];
            for (j, slot) in w.iter_mut().enumerate() {
                *slot = parse_f(&rec[COL_STATUS + 1 + j], "critic weight")?;
            }
            Some(CriticWeights(w.into()))
        };
        log.rows.push(LogRow {
            t,
            x,
            x_des,
            u,
            applied,
            r: parse_f(&rec[COL_R], "r")?,
            accumulated: parse_f(&rec[COL_ACC], "acc")?,
            iterations: rec[COL_ITERS]
                .parse()
                .map_err(|_| Error::Config(format!("bad iters {:?}", &rec[COL_ITERS])))?,
            termination,
            critic,
        });
    }
    Ok(log)
}

pub fn summary_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "mode",
        "horizon",
        "episodes",
        "failures",
        "accumulated_mean",
        "accumulated_std",
        "mean_cost_mean",
        "mean_cost_std",
    ]
    .map(String::from)
    .to_vec();
    header.extend(POSE_AXES.iter().map(|a| format!("max_err_{a}")));
    w.write_record(&header)?;
    for c in &result.cells {
        let mut rec = vec![
            c.mode.to_string(),
            c.horizon.to_string(),
            c.episodes.to_string(),
            c.failures.to_string(),
            f(c.accumulated_mean),
            f(c.accumulated_std),
            f(c.mean_cost_mean),
            f(c.mean_cost_std),
        ];
        rec.extend(c.max_errors.iter().map(|v| f(*v)));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn episodes_csv(episodes: &[EpisodeSummary]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["mode", "horizon", "seed", "accumulated", "mean_cost", "rows", "failure"]
        .map(String::from)
        .to_vec();
    header.extend(POSE_AXES.iter().map(|a| format!("max_err_{a}")));
    w.write_record(&header)?;
    for e in episodes {
        let (sum, mean, count) = match &e.cost {
            Some(c) => (f(c.sum), f(c.mean), c.count.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let mut rec = vec![
            e.mode.to_string(),
            e.horizon.to_string(),
            e.seed.to_string(),
            sum,
            mean,
            count,
            e.failure.clone().unwrap_or_default(),
        ];
        rec.extend(e.max_errors.iter().map(|v| f(*v)));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `summary.csv` and `episodes.csv` into `dir`.
pub fn write_summary(dir: &Path, result: &SweepResult) -> Result<()> {
    write_atomic(&dir.join(SUMMARY_FILE), &summary_csv(result)?)?;
    write_atomic(&dir.join(EPISODES_FILE), &episodes_csv(&result.episodes)?)
}

/// Episode files in `dir`, sorted by name.
pub fn episode_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if parse_episode_file_name(name).is_some() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Rebuilds a sweep result from the episode CSVs in `dir`.
pub fn resummarize(dir: &Path, transient_skip: f64) -> Result<SweepResult> {
    let files = episode_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyWindow(format!("no episode CSVs in {}", dir.display())));
    }
    let summaries = files
        .iter()
        .map(|p| read_episode(p).map(|log| EpisodeSummary::from_log(&log, transient_skip)))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::sim::summarize(summaries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_width() {
        assert_eq!(episode_header().len(), 1 + 48 + 4 + Q_DIM);
        assert_eq!(episode_header()[COL_STATUS], "status");
        assert_eq!(episode_header()[COL_APPLIED], "fl_fx_applied");
        assert_eq!(episode_header()[COL_ITERS], "iters");
    }

    #[test]
    fn file_names_round_trip() {
        let name = crate::sim::episode_file_name(Mode::Rql, 8, 2);
        assert_eq!(name, "rql_N8_seed2.csv");
        assert_eq!(parse_episode_file_name(&name), Some((Mode::Rql, 8, 2)));
        assert_eq!(parse_episode_file_name("summary.csv"), None);
    }
}
