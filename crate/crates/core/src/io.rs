//! JSON model files and row-major matrix (de)serialization.
//!
//! A model file is a JSON object with `"type": "lqg"` or `"type": "nposs"`, a `horizon`, and a
//! `stationary` flag. When `stationary` is true the per-stage data is given once and replicated.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{FiniteNposs, LqgSystem, StageMatrices};

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix_as_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in rows(m) {
        seq.serialize_element(&r)?;
    }
    seq.end()
}

pub fn matrices_as_rows<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(ms.len()))?;
    for m in ms {
        seq.serialize_element(&rows(m))?;
    }
    seq.end()
}

pub fn vector_as_list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Dense matrix from row-major nested arrays.
pub fn from_rows(r: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nr = r.len();
    let nc = r.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(Error::Format(format!("{what} is empty")));
    }
    if let Some(i) = r.iter().position(|row| row.len() != nc) {
        return Err(Error::Format(format!("{what} row {i} has {} entries, expected {nc}", r[i].len())));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| r[i][j]))
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    #[serde(rename = "F")]
    f: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "C")]
    c: Rows,
    #[serde(rename = "D")]
    d: Rows,
    #[serde(rename = "G")]
    g: Rows,
    #[serde(rename = "N")]
    n: Rows,
    #[serde(rename = "K_W")]
    k_w: Rows,
    #[serde(rename = "Q")]
    q: Rows,
    #[serde(rename = "R")]
    r: Rows,
}

impl RawStage {
    fn build(&self, t: usize) -> Result<StageMatrices> {
        let m = |r: &Rows, name: &str| from_rows(r, &format!("stages[{t}].{name}"));
        Ok(StageMatrices {
            f: m(&self.f, "F")?,
            b: m(&self.b, "B")?,
            c: m(&self.c, "C")?,
            d: m(&self.d, "D")?,
            g: m(&self.g, "G")?,
            n: m(&self.n, "N")?,
            k_w: m(&self.k_w, "K_W")?,
            q: m(&self.q, "Q")?,
            r: m(&self.r, "R")?,
        })
    }

    fn from_stage(s: &StageMatrices) -> Self {
        RawStage {
            f: rows(&s.f),
            b: rows(&s.b),
            c: rows(&s.c),
            d: rows(&s.d),
            g: rows(&s.g),
            n: rows(&s.n),
            k_w: rows(&s.k_w),
            q: rows(&s.q),
            r: rows(&s.r),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLqg {
    horizon: usize,
    #[serde(default)]
    stationary: bool,
    stages: Vec<RawStage>,
    mu_x1: Vec<f64>,
    k_x1: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNposs {
    horizon: usize,
    #[serde(default)]
    stationary: bool,
    #[serde(rename = "S")]
    s: Value,
    #[serde(rename = "Q")]
    q: Value,
    initial: Vec<f64>,
    cost: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawModel {
    Lqg(RawLqg),
    Nposs(RawNposs),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Lqg(LqgSystem),
    Nposs(FiniteNposs),
}

/// Parsed model plus whether it was declared stationary.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub stationary: bool,
    pub model: Model,
}

impl ModelFile {
    pub fn horizon(&self) -> usize {
        match &self.model {
            Model::Lqg(s) => s.horizon(),
            Model::Nposs(m) => m.horizon,
        }
    }

    /// Replaces the horizon of a stationary model.
    pub fn with_horizon(&self, n: usize) -> Result<ModelFile> {
        if n == 0 {
            return Err(Error::Contract {
                op: "with_horizon",
                msg: "horizon must be positive".into(),
            });
        }
        if !self.stationary && n != self.horizon() {
            return Err(Error::Contract {
                op: "with_horizon",
                msg: "only stationary models accept a horizon override".into(),
            });
        }
        let model = match &self.model {
            Model::Lqg(s) => Model::Lqg(s.with_horizon(n)),
            Model::Nposs(m) => Model::Nposs(m.with_horizon(n)),
        };
        Ok(ModelFile {
            stationary: self.stationary,
            model,
        })
    }
}

fn typed<T: serde::de::DeserializeOwned>(v: &Value, what: &str) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("{what}: {e}")))
}

fn per_stage<T: serde::de::DeserializeOwned + Clone>(v: &Value, stationary: bool, horizon: usize, what: &str) -> Result<Vec<T>> {
    if stationary {
        Ok(vec![typed::<T>(v, what)?; horizon])
    } else {
        let out: Vec<T> = typed(v, what)?;
        if out.len() != horizon {
            return Err(Error::Format(format!("{what} has {} stages, expected {horizon}", out.len())));
        }
        Ok(out)
    }
}

/// Parses a model document. Structural problems are format errors; the result is not
/// validated.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    match raw {
        RawModel::Lqg(r) => {
            if r.horizon == 0 {
                return Err(Error::Format("horizon must be positive".into()));
            }
            let expected = if r.stationary { 1 } else { r.horizon };
            if r.stages.len() != expected {
                return Err(Error::Format(format!("stages has {} entries, expected {expected}", r.stages.len())));
            }
            let stages = r.stages.iter().enumerate().map(|(t, s)| s.build(t)).collect::<Result<Vec<_>>>()?;
            let system = LqgSystem {
                stages,
                mu_x1: DVector::from_vec(r.mu_x1),
                k_x1: from_rows(&r.k_x1, "k_x1")?,
            };
            Ok(ModelFile {
                stationary: r.stationary,
                model: Model::Lqg(system.with_horizon(r.horizon)),
            })
        }
        RawModel::Nposs(r) => {
            if r.horizon == 0 {
                return Err(Error::Format("horizon must be positive".into()));
            }
            let transition: Vec<Vec<Vec<Vec<Vec<f64>>>>> = per_stage(&r.s, r.stationary, r.horizon, "S")?;
            let observation: Vec<Vec<Vec<Vec<f64>>>> = per_stage(&r.q, r.stationary, r.horizon, "Q")?;
            let cost: Vec<Vec<Vec<f64>>> = per_stage(&r.cost, r.stationary, r.horizon, "cost")?;
            let n_outputs = observation[0].first().and_then(|v| v.first()).map_or(0, Vec::len);
            let model = FiniteNposs {
                n_states: r.initial.len(),
                n_actions: cost[0].len(),
                n_outputs,
                horizon: r.horizon,
                transition,
                observation,
                initial: r.initial,
                cost,
            };
            Ok(ModelFile {
                stationary: r.stationary,
                model: Model::Nposs(model),
            })
        }
    }
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// JSON document for `file`. Stationary models are written with a single stage.
pub fn model_to_json(file: &ModelFile) -> Value {
    let raw = match &file.model {
        Model::Lqg(s) => {
            let stages = if file.stationary { &s.stages[..1] } else { &s.stages[..] };
            RawModel::Lqg(RawLqg {
                horizon: s.horizon(),
                stationary: file.stationary,
                stages: stages.iter().map(RawStage::from_stage).collect(),
                mu_x1: vector_as_list(&s.mu_x1),
                k_x1: rows(&s.k_x1),
            })
        }
        Model::Nposs(m) => {
            let pick = |v: Value| match (file.stationary, v) {
                (true, Value::Array(mut a)) if !a.is_empty() => a.swap_remove(0),
                (_, v) => v,
            };
            RawModel::Nposs(RawNposs {
                horizon: m.horizon,
                stationary: file.stationary,
                s: pick(serde_json::to_value(&m.transition).expect("plain data")),
                q: pick(serde_json::to_value(&m.observation).expect("plain data")),
                initial: m.initial.clone(),
                cost: pick(serde_json::to_value(&m.cost).expect("plain data")),
            })
        }
    };
    serde_json::to_value(raw).expect("plain data")
}
