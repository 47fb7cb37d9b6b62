use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, Params};
use super::train::{OptimizerState, TrainConfig};
use super::vocab::Vocabulary;
use super::{Seq2SeqModel, TrainingExample};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const WEIGHTS_FORMAT: &str = "nile-seq2seq";

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("{path}:{line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("weights file version {found} is not supported (expected {WEIGHTS_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("weights do not match their vocabulary ({vocab} words, {rows} embedding rows)")]
    Shape { vocab: usize, rows: usize },
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    config: TrainConfig,
    vocab: Vocabulary,
    params: Params<f32>,
    /// Adam moments, so fine-tuning resumes where training stopped.
    #[serde(default)]
    optimizer: Option<OptimizerState>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

impl Seq2SeqModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        let file = WeightsFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_FORMAT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.network.params.clone(),
            optimizer: self.optimizer_state.clone(),
        };
        let tmp = path.as_ref().with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut out, &file)?;
            out.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        let text = std::fs::read_to_string(path)?;
        let header: Header = serde_json::from_str(&text)?;
        if header.format != WEIGHTS_FORMAT || header.version != WEIGHTS_FORMAT_VERSION {
            return Err(PersistError::Version { found: header.version });
        }
        let file: WeightsFile = serde_json::from_str(&text)?;
        let rows = file.params.vocab_size();
        if rows != file.vocab.len() || file.params.out_b.len() != rows {
            return Err(PersistError::Shape {
                vocab: file.vocab.len(),
                rows,
            });
        }
        let optimizer = file.optimizer.filter(|s| s.matches(&file.params));
        let mut model = Seq2SeqModel::from_parts(file.vocab, Network { params: file.params }, file.config);
        model.optimizer_state = optimizer;
        Ok(model)
    }
}

/// Reads a JSON-lines dataset; blank lines are skipped.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<TrainingExample>, PersistError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example = serde_json::from_str(&line).map_err(|e| PersistError::Line {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(example);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &[TrainingExample]) -> Result<(), PersistError> {
    let mut out = BufWriter::new(File::create(path)?);
    for example in dataset {
        serde_json::to_writer(&mut out, example)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Appends one example and syncs it to disk.
pub fn append_example(path: impl AsRef<Path>, example: &TrainingExample) -> Result<(), PersistError> {
    let mut line = serde_json::to_vec(example)?;
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&line)?;
    file.sync_data()?;
    Ok(())
}
