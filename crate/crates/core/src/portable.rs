//! Self-contained JSON model documents (`.dpcm.json`) for deployment outside the engine.
//!
//! A document carries the model parameters, the fitted preprocessing pipeline when
//! there is one, and a summary of the privacy spend. Every field is enumerated below;
//! no record-level data is ever written. Output is canonical: keys are sorted and
//! floats use the shortest decimal that round-trips, so exporting the same model twice
//! gives identical bytes and importing it reproduces predictions bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::credit_risk::{write_losses_csv, CreditRiskModel};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::learners::{ForestModel, GbtModel, LinearModel, Link, Predict, Tree};
use crate::matrix::Matrix;
use crate::preprocess::{ColumnKind, Frame, InputColumn, Pipeline};
use crate::privacy::{LedgerEntry, Mode};

pub const FORMAT_VERSION: &str = "1";
pub const FILE_EXTENSION: &str = ".dpcm.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Linear,
    Logistic,
    Forest,
    Gbt,
    CreditRiskBundle,
}

/// A model that can be exported.
#[derive(Debug, Clone, PartialEq)]
pub enum PortableModel {
    /// A linear model with the identity link.
    Linear(LinearModel),
    /// A linear model with the logit link.
    Logistic(LinearModel),
    Forest(ForestModel),
    Gbt(GbtModel),
    CreditRiskBundle(Box<CreditRiskModel>),
}

impl PortableModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            PortableModel::Linear(_) => ModelKind::Linear,
            PortableModel::Logistic(_) => ModelKind::Logistic,
            PortableModel::Forest(_) => ModelKind::Forest,
            PortableModel::Gbt(_) => ModelKind::Gbt,
            PortableModel::CreditRiskBundle(_) => ModelKind::CreditRiskBundle,
        }
    }

    /// Wraps a linear model under the kind matching its link.
    pub fn linear(model: LinearModel) -> PortableModel {
        match model.link {
            Link::Identity => PortableModel::Linear(model),
            Link::Logit => PortableModel::Logistic(model),
        }
    }

    fn n_features(&self) -> Option<usize> {
        match self {
            PortableModel::Linear(m) | PortableModel::Logistic(m) => Some(m.n_features()),
            PortableModel::Forest(m) => Some(m.n_features()),
            PortableModel::Gbt(m) => Some(m.n_features()),
            PortableModel::CreditRiskBundle(_) => None,
        }
    }
}

/// One ledger entry without its timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpend {
    pub query_id: String,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerSummary {
    pub epsilon_spent: f64,
    pub delta_spent: f64,
    pub queries: Vec<QuerySpend>,
}

impl LedgerSummary {
    pub fn from_ledger(entries: &[LedgerEntry]) -> LedgerSummary {
        LedgerSummary {
            epsilon_spent: entries.iter().fold(0.0, |acc, e| acc + e.epsilon),
            delta_spent: entries.iter().fold(0.0, |acc, e| acc + e.delta),
            queries: entries
                .iter()
                .map(|e| QuerySpend {
                    query_id: e.query_id.clone(),
                    epsilon: e.epsilon,
                    delta: e.delta,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub trained_mode: Mode,
    pub privacy: LedgerSummary,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    weights: Vec<f64>,
    intercept: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestParams {
    n_features: usize,
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GbtParams {
    n_features: usize,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleParams {
    pd: GbtParams,
    ccf: ForestParams,
    lgd_nonzero: GbtParams,
    lgd_rate: ForestParams,
}

impl ForestParams {
    fn from_model(m: &ForestModel) -> ForestParams {
        ForestParams {
            n_features: m.n_features,
            trees: m.trees.clone(),
        }
    }

    fn into_model(self, path: &str) -> Result<ForestModel> {
        let trees = validate_trees(self.trees, self.n_features, path)?;
        ForestModel::new(trees, self.n_features).map_err(|e| malformed(path, e))
    }
}

impl GbtParams {
    fn from_model(m: &GbtModel) -> GbtParams {
        GbtParams {
            n_features: m.n_features,
            base_score: m.base_score,
            learning_rate: m.learning_rate,
            trees: m.trees.clone(),
        }
    }

    fn into_model(self, path: &str) -> Result<GbtModel> {
        Ok(GbtModel {
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees: validate_trees(self.trees, self.n_features, path)?,
            n_features: self.n_features,
        })
    }
}

fn malformed(path: &str, message: impl ToString) -> Error {
    Error::MalformedDocument {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn validate_trees(trees: Vec<Tree>, n_features: usize, path: &str) -> Result<Vec<Tree>> {
    trees
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            Tree::from_nodes(t.nodes().to_vec(), n_features).map_err(|e| malformed(&format!("{path}.trees[{i}]"), e))
        })
        .collect()
}

/// Decodes `value` as `T`, reporting faults as a path under `prefix`.
fn decode<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else if prefix.is_empty() {
            inner
        } else {
            format!("{prefix}.{inner}")
        };
        malformed(&path, e.into_inner())
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    format_version: String,
    model_kind: ModelKind,
    column_names: Vec<String>,
    parameters: Value,
    pipeline: Option<Pipeline>,
    metadata: Metadata,
}

/// The input columns a bundle needs: the pipeline's inputs plus the funded amount used
/// for exposure.
fn bundle_columns(pipeline: &Pipeline) -> Vec<String> {
    let mut columns = pipeline.required_columns();
    if !columns.iter().any(|c| c == "total_funded_amount") {
        columns.push("total_funded_amount".into());
    }
    columns
}

/// An exported model.
///
/// With a pipeline, `column_names` are the raw input columns the pipeline reads and the
/// model consumes the pipeline's output. Without one, they name the model's features in
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct PortableModelDocument {
    pub column_names: Vec<String>,
    pub model: PortableModel,
    pub pipeline: Option<Pipeline>,
    pub metadata: Metadata,
}

impl PortableModelDocument {
    /// A document for a bare model reading `column_names` directly.
    pub fn new(model: PortableModel, column_names: Vec<String>, metadata: Metadata) -> Result<Self> {
        let doc = PortableModelDocument {
            column_names,
            model,
            pipeline: None,
            metadata,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// A document for a model that consumes `pipeline`'s output.
    pub fn with_pipeline(model: PortableModel, pipeline: Pipeline, metadata: Metadata) -> Result<Self> {
        let column_names = match &model {
            PortableModel::CreditRiskBundle(_) => bundle_columns(&pipeline),
            _ => pipeline.required_columns(),
        };
        let doc = PortableModelDocument {
            column_names,
            model,
            pipeline: Some(pipeline),
            metadata,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// A bundle document for a trained credit-risk model and the ledger it spent.
    pub fn from_credit_risk(model: &CreditRiskModel, ledger: &[LedgerEntry], seed: Option<u64>) -> Result<Self> {
        let metadata = Metadata {
            trained_mode: model.mode,
            privacy: LedgerSummary::from_ledger(ledger),
            seed,
        };
        let pipeline = model.pipeline.clone();
        PortableModelDocument::with_pipeline(PortableModel::CreditRiskBundle(Box::new(model.clone())), pipeline, metadata)
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.kind()
    }

    fn validate(&self) -> Result<()> {
        let width = match (&self.pipeline, &self.model) {
            (Some(p), _) if !p.is_fitted() => return Err(malformed("pipeline", "pipeline is not fitted")),
            (Some(p), _) => p.output_columns()?.len(),
            (None, PortableModel::CreditRiskBundle(_)) => {
                return Err(malformed("pipeline", "a credit-risk bundle requires its pipeline"))
            }
            (None, _) => self.column_names.len(),
        };
        if let Some(actual) = self.model.n_features() {
            if actual != width {
                return Err(malformed(
                    "parameters",
                    Error::WidthMismatch { expected: width, actual },
                ));
            }
        }
        Ok(())
    }

    fn parameters(&self) -> Result<Value> {
        let value = match &self.model {
            PortableModel::Linear(m) | PortableModel::Logistic(m) => serde_json::to_value(LinearParams {
                weights: m.weights.clone(),
                intercept: m.intercept,
            }),
            PortableModel::Forest(m) => serde_json::to_value(ForestParams::from_model(m)),
            PortableModel::Gbt(m) => serde_json::to_value(GbtParams::from_model(m)),
            PortableModel::CreditRiskBundle(m) => serde_json::to_value(BundleParams {
                pd: GbtParams::from_model(&m.pd_model),
                ccf: ForestParams::from_model(&m.ccf_model),
                lgd_nonzero: GbtParams::from_model(&m.lgd_nonzero),
                lgd_rate: ForestParams::from_model(&m.lgd_rate),
            }),
        };
        Ok(value?)
    }

    /// Canonical JSON: sorted keys, shortest round-trip floats, trailing newline.
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let wire = Wire {
            format_version: FORMAT_VERSION.to_string(),
            model_kind: self.model_kind(),
            column_names: self.column_names.clone(),
            parameters: self.parameters()?,
            pipeline: self.pipeline.clone(),
            metadata: self.metadata.clone(),
        };
        // Round-tripping through `Value` sorts every object's keys.
        let value = serde_json::to_value(&wire)?;
        let mut bytes = serde_json::to_vec_pretty(&value)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| malformed("$", e))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| malformed("format_version", "missing field"))?;
        let version = version
            .as_str()
            .ok_or_else(|| malformed("format_version", "expected a string"))?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        let wire: Wire = decode(value, "")?;
        let model = match wire.model_kind {
            ModelKind::Linear | ModelKind::Logistic => {
                let p: LinearParams = decode(wire.parameters, "parameters")?;
                if !p.weights.iter().chain([&p.intercept]).all(|v| v.is_finite()) {
                    return Err(malformed("parameters", "non-finite coefficient"));
                }
                PortableModel::linear(LinearModel {
                    weights: p.weights,
                    intercept: p.intercept,
                    link: if wire.model_kind == ModelKind::Linear { Link::Identity } else { Link::Logit },
                })
            }
            ModelKind::Forest => {
                let p: ForestParams = decode(wire.parameters, "parameters")?;
                PortableModel::Forest(p.into_model("parameters")?)
            }
            ModelKind::Gbt => {
                let p: GbtParams = decode(wire.parameters, "parameters")?;
                PortableModel::Gbt(p.into_model("parameters")?)
            }
            ModelKind::CreditRiskBundle => {
                let p: BundleParams = decode(wire.parameters, "parameters")?;
                let pipeline = wire
                    .pipeline
                    .clone()
                    .ok_or_else(|| malformed("pipeline", "a credit-risk bundle requires its pipeline"))?;
                let model = CreditRiskModel::from_parts(
                    p.pd.into_model("parameters.pd")?,
                    p.ccf.into_model("parameters.ccf")?,
                    p.lgd_nonzero.into_model("parameters.lgd_nonzero")?,
                    p.lgd_rate.into_model("parameters.lgd_rate")?,
                    pipeline,
                    wire.metadata.trained_mode,
                )
                .map_err(|e| malformed("parameters", e))?;
                PortableModel::CreditRiskBundle(Box::new(model))
            }
        };
        let doc = PortableModelDocument {
            column_names: wire.column_names,
            model,
            pipeline: wire.pipeline,
            metadata: wire.metadata,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Predictions for a feature matrix in the model's input space (after the pipeline,
    /// if any). For a bundle this is the per-row PD.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        match &self.model {
            PortableModel::Linear(m) | PortableModel::Logistic(m) => m.predict(x),
            PortableModel::Forest(m) => m.predict(x),
            PortableModel::Gbt(m) => m.predict(x),
            PortableModel::CreditRiskBundle(m) => m.pd_model.predict(x),
        }
    }

    /// Reads features from `input` and writes predictions to `output`.
    ///
    /// A bundle writes `member_id,pd,ead,lgd,expected_loss`. Other kinds write
    /// `id,prediction`, where `id` is the `member_id` column when present and the
    /// 1-based row number otherwise.
    pub fn predict_csv<R: Read, W: Write>(&self, input: R, output: W) -> Result<()> {
        let schema: Vec<InputColumn> = match &self.pipeline {
            Some(p) => p.inputs().to_vec(),
            None => self
                .column_names
                .iter()
                .map(|name| InputColumn {
                    name: name.clone(),
                    kind: ColumnKind::Numeric,
                    bounds: None,
                })
                .collect(),
        };
        let (frame, headers, rows) = Frame::read_csv(input, &schema, &self.column_names)?;
        let id_col = headers.iter().position(|h| h.trim() == "member_id");
        let ids: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| match id_col {
                Some(c) => r.get(c).unwrap_or("").trim().to_string(),
                None => (i + 1).to_string(),
            })
            .collect();

        if let PortableModel::CreditRiskBundle(m) = &self.model {
            return write_losses_csv(output, &m.predict_frame(&frame, &ids)?);
        }
        let x = match &self.pipeline {
            Some(p) => p.transform(&frame)?.1,
            None => frame_matrix(&frame, &self.column_names)?,
        };
        let predictions = self.predict_matrix(&x)?;
        let mut w = csv::Writer::from_writer(output);
        w.write_record(["id", "prediction"])?;
        for (id, p) in ids.iter().zip(&predictions) {
            w.write_record([id.as_str(), &p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}

fn frame_matrix(frame: &Frame, names: &[String]) -> Result<Matrix> {
    let mut values = vec![0.0; frame.n_rows() * names.len()];
    for (j, name) in names.iter().enumerate() {
        let column = frame
            .column(name)
            .ok_or_else(|| Error::SchemaMismatch { column: name.clone() })?;
        let crate::preprocess::ColumnData::Numeric(cells) = &column.data else {
            return Err(Error::params(format!("column `{name}` must be numeric")));
        };
        for (i, cell) in cells.iter().enumerate() {
            values[i * names.len() + j] = cell.ok_or_else(|| Error::MissingValues(name.clone()))?;
        }
    }
    Matrix::new(frame.n_rows(), names.len(), values)
}

/// Writes `document` to `path` atomically.
pub fn export_model(document: &PortableModelDocument, path: &Path) -> Result<()> {
    write_atomic(path, &document.to_json()?)
}

pub fn import_model(path: &Path) -> Result<PortableModelDocument> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PortableModelDocument::from_json(&bytes)
}

/// Scores the feature CSV at `input` with `document` and writes the prediction CSV to
/// `output`. No privacy machinery is involved.
pub fn standalone_predict(document: &PortableModelDocument, input: &Path, output: &Path) -> Result<()> {
    let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let mut bytes = Vec::new();
    document.predict_csv(std::io::BufReader::new(file), &mut bytes)?;
    write_atomic(output, &bytes)
}
