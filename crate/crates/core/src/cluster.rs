//! Representative-led clustering of correct attempts and the on-disk
//! cluster store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{compile, SourceUnit};
use crate::interp::InputSet;
use crate::matching::{matches, matches_with_traces, spec_traces};
use crate::model::{Program, Trace};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("attempt {id} does not run on every input")]
    NotCorrect { id: String },
    #[error("duplicate attempt id {id}")]
    Duplicate { id: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ClusterError + '_ {
    move |source| ClusterError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub source: SourceUnit,
    pub program: Program,
}

/// What one clustering step did with the incoming attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AddOutcome {
    Joined { rep: String },
    Promoted { demoted: Vec<String> },
    NewCluster,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Clustering {
    /// Representatives in creation order.
    pub order: Vec<String>,
    /// Representative id to member ids (the representative included).
    pub clusters: BTreeMap<String, BTreeSet<String>>,
    pub programs: BTreeMap<String, Entry>,
}

#[derive(Serialize, Deserialize)]
struct StoreIndex {
    version: u32,
    order: Vec<String>,
}

impl Clustering {
    pub fn new() -> Clustering {
        Clustering::default()
    }

    pub fn representatives(&self) -> impl Iterator<Item = (&String, &Entry)> + '_ {
        self.order.iter().map(move |id| (id, &self.programs[id]))
    }

    pub fn num_members(&self) -> usize {
        self.clusters.values().map(BTreeSet::len).sum()
    }

    /// One iteration of the clustering algorithm.
    pub fn add_attempt(
        &mut self,
        id: &str,
        source: SourceUnit,
        program: Program,
        ins: &InputSet,
        step_limit: usize,
    ) -> Result<AddOutcome, ClusterError> {
        let mut cache = BTreeMap::new();
        self.add_cached(id, Entry { source, program }, ins, step_limit, &mut cache)
    }

    fn add_cached(
        &mut self,
        id: &str,
        entry: Entry,
        ins: &InputSet,
        step_limit: usize,
        cache: &mut BTreeMap<String, Vec<Trace>>,
    ) -> Result<AddOutcome, ClusterError> {
        if self.programs.contains_key(id) {
            return Err(ClusterError::Duplicate { id: id.to_string() });
        }
        let q = &entry.program;
        let q_traces = spec_traces(q, ins, step_limit).ok_or_else(|| ClusterError::NotCorrect { id: id.to_string() })?;
        for rep in &self.order {
            if !cache.contains_key(rep) {
                let t = spec_traces(&self.programs[rep].program, ins, step_limit)
                    .ok_or_else(|| ClusterError::NotCorrect { id: rep.clone() })?;
                cache.insert(rep.clone(), t);
            }
        }
        let reps: Vec<&String> = self.order.iter().collect();
        let joined = reps.par_iter().position_first(|rep| {
            matches_with_traces(&self.programs[*rep].program, &cache[*rep], q, ins, step_limit).is_some()
        });
        let outcome = if let Some(i) = joined {
            let rep = self.order[i].clone();
            self.clusters.get_mut(&rep).expect("representative").insert(id.to_string());
            AddOutcome::Joined { rep }
        } else {
            let below: Vec<bool> = reps
                .par_iter()
                .map(|rep| matches_with_traces(q, &q_traces, &self.programs[*rep].program, ins, step_limit).is_some())
                .collect();
            let demoted: Vec<String> =
                self.order.iter().zip(&below).filter(|(_, b)| **b).map(|(r, _)| r.clone()).collect();
            let mut members = BTreeSet::from([id.to_string()]);
            for r in &demoted {
                members.extend(self.clusters.remove(r).unwrap_or_default());
                cache.remove(r);
            }
            let pos = self.order.iter().position(|r| demoted.contains(r)).unwrap_or(self.order.len());
            self.order.retain(|r| !demoted.contains(r));
            self.order.insert(pos.min(self.order.len()), id.to_string());
            self.clusters.insert(id.to_string(), members);
            cache.insert(id.to_string(), q_traces);
            if demoted.is_empty() {
                AddOutcome::NewCluster
            } else {
                AddOutcome::Promoted { demoted }
            }
        };
        self.programs.insert(id.to_string(), entry);
        Ok(outcome)
    }

    /// Checks that every member matches its representative and that no
    /// two representatives match each other.
    pub fn audit(&self, ins: &InputSet, step_limit: usize) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for (rep, members) in &self.clusters {
            if !members.contains(rep) {
                return Err(format!("cluster {rep} does not contain its representative"));
            }
            let p = &self.programs[rep].program;
            for m in members {
                if !seen.insert(m) {
                    return Err(format!("{m} belongs to two clusters"));
                }
                let q = &self.programs[m].program;
                if matches(p, q, ins, step_limit).is_none() {
                    return Err(format!("member {m} does not match representative {rep}"));
                }
                if p.vars.len() > q.vars.len() {
                    return Err(format!("representative {rep} has more variables than member {m}"));
                }
            }
        }
        if seen.len() != self.programs.len() {
            return Err("some programs belong to no cluster".into());
        }
        for a in &self.order {
            for b in &self.order {
                if a != b && matches(&self.programs[a].program, &self.programs[b].program, ins, step_limit).is_some() {
                    return Err(format!("representative {a} matches representative {b}"));
                }
            }
        }
        Ok(())
    }
}

/// Clusters correct attempts in the given order.
pub fn cluster(correct: Vec<(String, SourceUnit, Program)>, ins: &InputSet, step_limit: usize) -> Result<Clustering, ClusterError> {
    let mut c = Clustering::new();
    let mut cache = BTreeMap::new();
    for (id, source, program) in correct {
        c.add_cached(&id, Entry { source, program }, ins, step_limit, &mut cache)?;
    }
    Ok(c)
}

fn write_unit(path: &Path, unit: &SourceUnit) -> Result<(), ClusterError> {
    fs::write(path, &unit.text).map_err(io_err(path))
}

fn read_unit(path: &Path, id: &str) -> Result<Entry, ClusterError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let source = SourceUnit::new(id, text);
    let program = compile(&source).map_err(|e| ClusterError::Schema { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(Entry { source, program })
}

/// Writes the store under `dir/clusters`, replacing any previous one.
pub fn save_store(c: &Clustering, dir: &Path) -> Result<(), ClusterError> {
    let root = dir.join("clusters");
    if root.exists() {
        fs::remove_dir_all(&root).map_err(io_err(&root))?;
    }
    for rep in &c.order {
        let members_dir = root.join(rep).join("members");
        fs::create_dir_all(&members_dir).map_err(io_err(&members_dir))?;
        write_unit(&root.join(rep).join("rep.mini"), &c.programs[rep].source)?;
        for m in c.clusters[rep].iter().filter(|m| *m != rep) {
            write_unit(&members_dir.join(format!("{m}.mini")), &c.programs[m].source)?;
        }
    }
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let index = StoreIndex { version: STORE_VERSION, order: c.order.clone() };
    let path = root.join("store.json");
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text).map_err(io_err(&path))
}

/// Reads the store under `dir/clusters`; a missing store is empty.
pub fn load_store(dir: &Path) -> Result<Clustering, ClusterError> {
    let root = dir.join("clusters");
    let index_path = root.join("store.json");
    if !index_path.exists() {
        return Ok(Clustering::new());
    }
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let index: StoreIndex = serde_json::from_str(&text)
        .map_err(|e| ClusterError::Schema { path: index_path.clone(), message: e.to_string() })?;
    if index.version != STORE_VERSION {
        return Err(ClusterError::Schema {
            path: index_path,
            message: format!("store version {} is not supported (expected {STORE_VERSION})", index.version),
        });
    }
    let mut c = Clustering::new();
    for rep in &index.order {
        let entry = read_unit(&root.join(rep).join("rep.mini"), rep)?;
        c.programs.insert(rep.clone(), entry);
        let mut members = BTreeSet::from([rep.clone()]);
        let members_dir = root.join(rep).join("members");
        if members_dir.exists() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&members_dir)
                .map_err(io_err(&members_dir))?
                .map(|e| e.map(|e| e.path()).map_err(io_err(&members_dir)))
                .collect::<Result<_, _>>()?;
            paths.sort();
            for path in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "mini")) {
                let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                c.programs.insert(id.clone(), read_unit(&path, &id)?);
                members.insert(id);
            }
        }
        c.clusters.insert(rep.clone(), members);
        c.order.push(rep.clone());
    }
    Ok(c)
}
