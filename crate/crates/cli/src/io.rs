//! On-disk formats: JSON system and scenario files, CSV signal tables.

use std::fs;
use std::path::{Path, PathBuf};

use outerfactor::linalg::{Mat, Vector};
use outerfactor::par::Execution;
use outerfactor::simharness::{EstimatorSelection, InitialState, InputModel, ScenarioConfig};
use outerfactor::{Domain, StateSpaceModel};
use serde::{Deserialize, Deserializer, Serialize};

use crate::failure::Failure;

/// Row-major matrix; every row must have the same length.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Rows(pub Vec<Vec<f64>>);

impl<'de> Deserialize<'de> for Rows {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().position(|r| r.len() != first.len()) {
                return Err(serde::de::Error::custom(format!(
                    "ragged matrix: row {bad} has {} entries, row 0 has {}",
                    rows[bad].len(),
                    first.len()
                )));
            }
        }
        Ok(Rows(rows))
    }
}

impl Rows {
    fn from_mat(m: &Mat) -> Self {
        Rows((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }

    /// `cols` fixes the width of an empty matrix.
    fn to_mat(&self, cols: usize) -> Mat {
        match self.0.first() {
            Some(first) => Mat::from_fn(self.0.len(), first.len(), |i, j| self.0[i][j]),
            None => Mat::zeros(0, cols),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    #[serde(alias = "z")]
    Discrete,
    #[serde(alias = "s")]
    Continuous,
}

/// A state-space model on disk. `H` fixes the input and output counts, so
/// static systems are written with `A = G = []`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub domain: DomainTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
}

impl SystemFile {
    pub fn from_model(sys: &StateSpaceModel, metadata: Option<serde_json::Value>) -> Self {
        let domain = match sys.domain() {
            Domain::DiscreteZ => DomainTag::Discrete,
            Domain::ContinuousS => DomainTag::Continuous,
        };
        SystemFile {
            domain,
            metadata,
            a: Rows::from_mat(sys.a()),
            g: Rows::from_mat(sys.g()),
            c: Rows::from_mat(sys.c()),
            h: Rows::from_mat(sys.h()),
            q: Some(Rows::from_mat(sys.q_proc())),
            r: Some(Rows::from_mat(sys.r_meas())),
        }
    }

    pub fn to_model(&self, origin: &str) -> Result<StateSpaceModel, Failure> {
        let bad = |e: outerfactor::Error| Failure::parse(format!("{origin}: {e}"));
        let h = self.h.to_mat(0);
        let (p, m) = h.shape();
        let n = self.a.0.len();
        let domain = match self.domain {
            DomainTag::Discrete => Domain::DiscreteZ,
            DomainTag::Continuous => Domain::ContinuousS,
        };
        let sys = StateSpaceModel::new(self.a.to_mat(n), self.g.to_mat(m), self.c.to_mat(n), h, domain).map_err(bad)?;
        let q = self.q.as_ref().map_or_else(|| Mat::zeros(n, n), |q| q.to_mat(n));
        let r = self.r.as_ref().map_or_else(|| Mat::identity(p, p), |r| r.to_mat(p));
        sys.with_noise(q, r).map_err(bad)
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

pub fn load_system(path: &Path) -> Result<StateSpaceModel, Failure> {
    let file: SystemFile = parse_json(path)?;
    file.to_model(&path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

pub fn write_system(path: &Path, sys: &StateSpaceModel, metadata: serde_json::Value) -> Result<(), Failure> {
    write_json(path, &SystemFile::from_model(sys, Some(metadata)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InputSpec {
    Zero,
    White { cov: Rows },
    Ar1 { coefficient: f64 },
    Ar { coeffs: Vec<Rows>, innovation_cov: Rows },
    Sequence { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InitialSpec {
    Random { scale: f64 },
    Fixed { value: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimatorSpec {
    sise_on_plant: bool,
    sise_on_outer: bool,
    highd: bool,
    stats: bool,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        let d = EstimatorSelection::default();
        Self { sise_on_plant: d.sise_on_plant, sise_on_outer: d.sise_on_outer, highd: d.highd, stats: d.stats }
    }
}

/// Experiment description. The plant is given inline (`system`) or as a
/// path relative to the scenario file (`system_file`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    system: Option<SystemFile>,
    #[serde(default)]
    system_file: Option<PathBuf>,
    horizon: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    trials: usize,
    #[serde(default)]
    input: Option<InputSpec>,
    #[serde(rename = "Q", default)]
    q: Option<Rows>,
    #[serde(rename = "R", default)]
    r: Option<Rows>,
    #[serde(default)]
    burn_in: Option<usize>,
    #[serde(default)]
    initial_state: Option<InitialSpec>,
    #[serde(default)]
    outer_initial: Option<Vec<f64>>,
    #[serde(default)]
    inner_initial: Option<Vec<f64>>,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default)]
    checkpoint: Option<usize>,
    #[serde(default)]
    estimators: EstimatorSpec,
}

fn one() -> usize {
    1
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    let file: ScenarioFile = parse_json(path)?;
    let origin = path.display().to_string();
    let plant = match (&file.system, &file.system_file) {
        (Some(sys), None) => sys.to_model(&origin)?,
        (None, Some(rel)) => load_system(&path.parent().unwrap_or(Path::new(".")).join(rel))?,
        _ => return Err(Failure::parse(format!("{origin}: give exactly one of `system` and `system_file`"))),
    };
    let (n, m, p) = (plant.n(), plant.inputs(), plant.outputs());
    let mut cfg = ScenarioConfig::new(plant, file.horizon, file.seed);
    cfg.trials = file.trials;
    cfg.input = match file.input {
        None => cfg.input,
        Some(InputSpec::Zero) => InputModel::zero(m),
        Some(InputSpec::White { cov }) => InputModel::White { cov: cov.to_mat(m) },
        Some(InputSpec::Ar1 { coefficient }) => InputModel::ar1(m, coefficient),
        Some(InputSpec::Ar { coeffs, innovation_cov }) => InputModel::Ar {
            coeffs: coeffs.iter().map(|c| c.to_mat(m)).collect(),
            innovation_cov: innovation_cov.to_mat(m),
        },
        Some(InputSpec::Sequence { values }) => InputModel::Deterministic(values.into_iter().map(Vector::from_vec).collect()),
    };
    cfg.q_proc = file.q.map(|q| q.to_mat(n));
    cfg.r_meas = file.r.map(|r| r.to_mat(p));
    cfg.burn_in = file.burn_in;
    if let Some(init) = file.initial_state {
        cfg.initial_state = match init {
            InitialSpec::Random { scale } => InitialState::Random { scale },
            InitialSpec::Fixed { value } => InitialState::Fixed(Vector::from_vec(value)),
        };
    }
    cfg.outer_initial = file.outer_initial.map(Vector::from_vec);
    cfg.inner_initial = file.inner_initial.map(Vector::from_vec);
    if let Some(eps) = file.epsilon {
        cfg.epsilon = eps;
    }
    if let Some(cp) = file.checkpoint {
        cfg.checkpoint = cp;
    }
    let e = file.estimators;
    cfg.estimators =
        EstimatorSelection { sise_on_plant: e.sise_on_plant, sise_on_outer: e.sise_on_outer, highd: e.highd, stats: e.stats };
    cfg.execution = Execution::default();
    Ok(cfg)
}

/// Reads a numeric CSV with a header row. An empty file has no rows.
pub fn read_signal(path: &Path) -> Result<(Vec<String>, Vec<Vector>), Failure> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.trim().parse::<f64>().map_err(|_| {
                    Failure::parse(format!("{}: line {line}, column {}: not a number: {field:?}", path.display(), col + 1))
                })
            })
            .collect::<Result<Vec<f64>, Failure>>()?;
        rows.push(Vector::from_vec(values));
    }
    Ok((header, rows))
}

/// Numbers in CSV output carry 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Table {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> Result<Self, Failure> {
        let io = |e: csv::Error| Failure::io(format!("{}: {e}", path.display()));
        let mut writer = csv::Writer::from_path(path).map_err(io)?;
        writer.write_record(header).map_err(io)?;
        Ok(Self { writer, path: path.to_owned() })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), Failure> {
        self.writer.write_record(fields).map_err(|e| Failure::io(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.writer.flush().map_err(|e| Failure::io(format!("{}: {e}", self.path.display())))
    }
}

pub fn indexed(name: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (0..count).map(move |i| format!("{name}[{i}]"))
}
