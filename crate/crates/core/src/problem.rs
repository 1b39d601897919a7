//! Problem directories: `problem.toml`, `inputs/*.json` and the cluster
//! store.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{run_all, Input, InputSet, DEFAULT_STEP_LIMIT};
use crate::model::{Program, Value};

pub const DEFAULT_COST_FALLBACK_THRESHOLD: usize = 100;
const DEFAULT_FALLBACK: &str = "Your attempt does not compute the expected results. Re-read the problem statement and trace your code on a small input.";

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
}

fn default_fallback() -> String {
    DEFAULT_FALLBACK.to_string()
}

fn default_step_limit() -> usize {
    DEFAULT_STEP_LIMIT
}

fn default_threshold() -> usize {
    DEFAULT_COST_FALLBACK_THRESHOLD
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub statement: String,
    #[serde(default = "default_fallback")]
    pub fallback_text: String,
    #[serde(default = "default_step_limit")]
    pub step_limit: usize,
    #[serde(default = "default_threshold")]
    pub cost_fallback_threshold: usize,
    /// Whether correct submissions to the service join the cluster store.
    #[serde(default)]
    pub grow_store: bool,
    /// Parameter order used to bind input files.
    pub params: Vec<String>,
    /// Expected return value per input file stem.
    #[serde(default)]
    pub expected_outputs: BTreeMap<String, toml::Value>,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub id: String,
    pub dir: PathBuf,
    pub config: ProblemConfig,
    pub inputs: InputSet,
    /// Expected return values, aligned with `inputs`.
    pub expected: Vec<Value>,
}

pub fn value_from_json(v: &serde_json::Value) -> Result<Value, String> {
    use serde_json::Value as J;
    Ok(match v {
        J::Null => Value::Undef,
        J::Bool(b) => Value::Bool(*b),
        J::Number(n) => match n.as_i64() {
            Some(i) if !n.is_f64() => Value::Int(i),
            _ => Value::Float(n.as_f64().ok_or_else(|| format!("number {n} out of range"))?),
        },
        J::String(s) => Value::Str(s.clone()),
        J::Array(xs) => Value::List(xs.iter().map(value_from_json).collect::<Result<_, _>>()?),
        J::Object(_) => return Err("objects are not values".into()),
    })
}

pub fn value_to_json(v: &Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        Value::Int(i) => J::from(*i),
        Value::Float(x) => serde_json::Number::from_f64(*x).map(J::Number).unwrap_or(J::Null),
        Value::Bool(b) => J::Bool(*b),
        Value::Str(s) => J::String(s.clone()),
        Value::List(xs) => J::Array(xs.iter().map(value_to_json).collect()),
        Value::Undef => J::Null,
    }
}

pub fn value_from_toml(v: &toml::Value) -> Result<Value, String> {
    use toml::Value as T;
    Ok(match v {
        T::Integer(i) => Value::Int(*i),
        T::Float(x) => Value::Float(*x),
        T::Boolean(b) => Value::Bool(*b),
        T::String(s) => Value::Str(s.clone()),
        T::Array(xs) => Value::List(xs.iter().map(value_from_toml).collect::<Result<_, _>>()?),
        other => return Err(format!("unsupported value {other}")),
    })
}

fn config_err(path: &Path, message: impl Into<String>) -> ProblemError {
    ProblemError::Config { path: path.to_path_buf(), message: message.into() }
}

impl Problem {
    /// Loads `dir/problem.toml` and `dir/inputs/*.json` (sorted by name).
    pub fn load(dir: &Path) -> Result<Problem, ProblemError> {
        let cfg_path = dir.join("problem.toml");
        let text = fs::read_to_string(&cfg_path).map_err(|source| ProblemError::Io { path: cfg_path.clone(), source })?;
        let config: ProblemConfig = toml::from_str(&text).map_err(|e| config_err(&cfg_path, e.to_string()))?;
        let inputs_dir = dir.join("inputs");
        let mut paths: Vec<PathBuf> = fs::read_dir(&inputs_dir)
            .map_err(|source| ProblemError::Io { path: inputs_dir.clone(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut inputs = Vec::new();
        let mut expected = Vec::new();
        for path in &paths {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = fs::read_to_string(path).map_err(|source| ProblemError::Io { path: path.clone(), source })?;
            let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| config_err(path, e.to_string()))?;
            let obj = json.as_object().ok_or_else(|| config_err(path, "an input must be a JSON object"))?;
            if obj.len() != config.params.len() {
                return Err(config_err(path, format!("expected {} parameters, found {}", config.params.len(), obj.len())));
            }
            let mut args = Vec::new();
            for p in &config.params {
                let v = obj.get(p).ok_or_else(|| config_err(path, format!("missing parameter {p}")))?;
                args.push((p.clone(), value_from_json(v).map_err(|m| config_err(path, m))?));
            }
            inputs.push(Input::new(stem.clone(), args));
            let exp = config
                .expected_outputs
                .get(&stem)
                .ok_or_else(|| config_err(&cfg_path, format!("no expected output for input {stem}")))?;
            expected.push(value_from_toml(exp).map_err(|m| config_err(&cfg_path, m))?);
        }
        let inputs = InputSet::new(inputs).map_err(|e| config_err(&inputs_dir, e.message))?;
        let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or("problem").to_string();
        Ok(Problem { id, dir: dir.to_path_buf(), config, inputs, expected })
    }

    pub fn step_limit(&self) -> usize {
        self.config.step_limit
    }

    /// Whether `p` returns the expected value on every input.
    pub fn is_correct(&self, p: &Program) -> bool {
        run_all(p, &self.inputs, self.config.step_limit)
            .iter()
            .zip(&self.expected)
            .all(|(o, e)| o.return_value().as_ref() == Some(e))
    }
}
