//! Location traces: CSV with header `user_id,time,location`.
//!
//! Rows of one user must appear in strictly increasing `time` order. For the
//! i.i.d. model, location labels are arbitrary strings numbered in order of
//! first appearance. For the Markov model they must be the graph's 1-based
//! state labels.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::markov::{fit_markov_profile, MobilityGraph};
use crate::metrics::UserLaw;
use crate::mobility::{fit_iid_profile, StateId, Trajectory};

pub const DEFAULT_SMOOTHING: f64 = 1.0;

#[derive(Debug, Clone)]
pub enum TraceModel {
    /// `r` defaults to the number of distinct labels; a larger value adds
    /// states that the traces never visit.
    Iid { r: Option<usize> },
    Markov(MobilityGraph),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDataset {
    /// User ids in order of first appearance.
    pub users: Vec<String>,
    /// Per-user `(time, state)` sequences, times strictly increasing.
    pub records: Vec<Vec<(i64, StateId)>>,
    /// `labels[s]` is the file label of internal state `s`.
    pub labels: Vec<String>,
}

impl TraceDataset {
    pub fn r(&self) -> usize {
        self.labels.len()
    }

    pub fn trajectory(&self, user: usize) -> Trajectory {
        Trajectory::new(self.records[user].iter().map(|&(_, s)| s).collect())
    }

    /// Shortest per-user trace length.
    pub fn min_len(&self) -> usize {
        self.records.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Reads and validates a trace file, then fits one law per user with the
/// given additive smoothing.
pub fn ingest_traces_from<R: Read>(
    input: R,
    model: &TraceModel,
    smoothing: f64,
) -> Result<(TraceDataset, Vec<UserLaw>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("trace file is missing column `{name}`")))
    };
    let (cu, ct, cl) = (col("user_id")?, col("time")?, col("location")?);

    let mut users: Vec<String> = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut records: Vec<Vec<(i64, StateId)>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    if let TraceModel::Markov(g) = model {
        labels = (1..=g.r()).map(|s| s.to_string()).collect();
        label_index = labels.iter().cloned().zip(0..).collect();
    }

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let user = rec[cu].to_string();
        let time: i64 = rec[ct]
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: time `{}` is not an integer", &rec[ct])))?;
        let label = rec[cl].to_string();
        let state = match (model, label_index.get(&label)) {
            (_, Some(&s)) => s,
            (TraceModel::Markov(g), None) => {
                return Err(Error::Parse(format!(
                    "line {line}: location `{label}` is not a state label 1..={}",
                    g.r()
                )))
            }
            (TraceModel::Iid { .. }, None) => {
                label_index.insert(label.clone(), labels.len());
                labels.push(label);
                labels.len() - 1
            }
        };
        let u = *user_index.entry(user.clone()).or_insert_with(|| {
            users.push(user.clone());
            records.push(Vec::new());
            users.len() - 1
        });
        if let Some(&(prev, _)) = records[u].last() {
            if time <= prev {
                return Err(Error::Parse(format!(
                    "line {line}: time {time} of user `{user}` does not follow {prev}"
                )));
            }
        }
        records[u].push((time, StateId(state)));
    }
    if users.is_empty() {
        return Err(Error::Parse("trace file has no rows".into()));
    }

    if let TraceModel::Iid { r } = model {
        if r.is_some_and(|r| r < labels.len()) {
            return Err(Error::Config(format!(
                "traces use {} distinct locations but r = {}",
                labels.len(),
                r.unwrap_or_default()
            )));
        }
        // A profile needs at least two locations.
        let r = r.unwrap_or(labels.len()).max(2);
        labels.extend((labels.len()..r).map(|s| format!("(unvisited {})", s + 1)));
    }
    let data = TraceDataset {
        users,
        records,
        labels,
    };

    let laws = (0..data.users.len())
        .map(|u| {
            let trace = data.trajectory(u);
            let law = match model {
                TraceModel::Iid { .. } => fit_iid_profile(&trace, data.r(), smoothing).map(UserLaw::Iid),
                TraceModel::Markov(g) => fit_markov_profile(&trace, g, smoothing).map(UserLaw::Markov),
            };
            law.map_err(|e| Error::Parse(format!("user `{}`: {e}", data.users[u])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((data, laws))
}

pub fn ingest_traces(
    path: impl AsRef<Path>,
    model: &TraceModel,
) -> Result<(TraceDataset, Vec<UserLaw>)> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_traces_from(file, model, DEFAULT_SMOOTHING)
}
