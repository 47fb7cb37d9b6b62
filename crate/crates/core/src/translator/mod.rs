//! Sequence-to-sequence translation from anonymized entity tokens to
//! anonymized Nile tokens.

mod metrics;
pub mod network;
mod persist;
mod tokens;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};

pub use metrics::{r_squared, r_squared_indices, MetricError};
pub use network::{EncodedExample, Network, Params};
pub use persist::{append_example, read_dataset, write_dataset, PersistError, WEIGHTS_FORMAT_VERSION};
pub use tokens::{anonymize_program, detokenize, tokenize_program};
pub use train::{
    incorporate_feedback, train, train_with_vocab, EpochStats, OptimizerState, Optimizer, TrainConfig, TrainError,
    TrainingReport,
};
pub use vocab::{index_tokens, Vocabulary, EOS, INTENT_NAME_TOKEN, NILE_WORDS, PAD, SOS, UNK};

use crate::anonymizer::TokenSequence;

/// Longest program the decoder may emit before giving up.
pub const MAX_DECODE_LEN: usize = 128;

/// One training pair. Serialized as a dataset line
/// `{"entities": [...], "nile": "space separated program tokens"}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DatasetLine", into = "DatasetLine")]
pub struct TrainingExample {
    pub input: TokenSequence,
    pub output: TokenSequence,
}

impl TrainingExample {
    pub fn new(input: TokenSequence, output: TokenSequence) -> Self {
        Self { input, output }
    }

    /// Program side re-joined into Nile text.
    pub fn program_text(&self) -> String {
        detokenize(&self.output)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetLine {
    entities: Vec<String>,
    nile: String,
}

impl TryFrom<DatasetLine> for TrainingExample {
    type Error = String;

    fn try_from(line: DatasetLine) -> Result<Self, Self::Error> {
        let output: Vec<String> = line.nile.split_whitespace().map(str::to_string).collect();
        if line.entities.is_empty() || output.is_empty() {
            return Err("dataset line needs non-empty `entities` and `nile`".into());
        }
        Ok(Self {
            input: line.entities,
            output,
        })
    }
}

impl From<TrainingExample> for DatasetLine {
    fn from(ex: TrainingExample) -> Self {
        Self {
            entities: ex.input,
            nile: ex.output.join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranslateError {
    #[error("decoder emitted no end token within {MAX_DECODE_LEN} steps")]
    MaxLengthExceeded { partial: TokenSequence },
}

#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    pub vocab: Vocabulary,
    pub network: Network<f32>,
    pub config: TrainConfig,
    pub(crate) optimizer_state: Option<OptimizerState>,
}

impl Seq2SeqModel {
    pub fn from_parts(vocab: Vocabulary, network: Network<f32>, config: TrainConfig) -> Self {
        assert_eq!(vocab.len(), network.vocab_size(), "vocabulary does not match network");
        Self {
            vocab,
            network,
            config,
            optimizer_state: None,
        }
    }

    /// Untrained model with the configured sizes.
    pub fn untrained(config: TrainConfig) -> Self {
        use rand::SeedableRng;
        let vocab = Vocabulary::standard();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let network = Network::init(vocab.len(), config.embed_dim, config.hidden_dim, &mut rng);
        Self::from_parts(vocab, network, config)
    }

    /// Greedy decoding of `input`, without SOS/EOS.
    pub fn translate<S: AsRef<str>>(&self, input: &[S]) -> Result<TokenSequence, TranslateError> {
        let indices = index_tokens(input, &self.vocab);
        let (out, finished) = self.network.greedy_decode(&indices, MAX_DECODE_LEN);
        let words: TokenSequence = out
            .into_iter()
            .map(|i| self.vocab.word(i).unwrap_or(vocab::RESERVED[UNK]).to_string())
            .collect();
        if finished {
            Ok(words)
        } else {
            Err(TranslateError::MaxLengthExceeded { partial: words })
        }
    }

    /// Final encoder `(h, c)` state for `input`.
    pub fn thought_vector<S: AsRef<str>>(&self, input: &[S]) -> (Vec<f32>, Vec<f32>) {
        let (h, c) = self.network.thought_vector(&index_tokens(input, &self.vocab));
        (h.to_vec(), c.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> TokenSequence {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn iperf_example() -> TrainingExample {
        TrainingExample::new(
            toks("@middlebox @middlebox#2 @origin @destination"),
            toks("define intent @intent_name : from endpoint ( ' @origin ' ) to endpoint ( ' @destination ' ) add middlebox ( ' @middlebox ' ) , middlebox ( ' @middlebox#2 ' )"),
        )
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 70,
            batch_size: 64,
            validation_split: 0.0,
            learning_rate: 0.01,
            seed: 3,
            embed_dim: 16,
            hidden_dim: 32,
            optimizer: Optimizer::Adam,
            clip_norm: 5.0,
        }
    }

    #[test]
    fn dataset_line_format() {
        let ex = TrainingExample::new(toks("@middlebox"), toks("add middlebox ( ' @middlebox ' )"));
        let json = serde_json::to_string(&ex).unwrap();
        assert_eq!(json, r#"{"entities":["@middlebox"],"nile":"add middlebox ( ' @middlebox ' )"}"#);
        assert_eq!(serde_json::from_str::<TrainingExample>(&json).unwrap(), ex);
        assert!(serde_json::from_str::<TrainingExample>(r#"{"entities":[],"nile":"x"}"#).is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(train(&[], &small_config()).unwrap_err(), TrainError::EmptyDataset);
    }

    #[test]
    fn unknown_tokens_rejected() {
        let ex = TrainingExample::new(toks("@bogus"), toks("add"));
        assert!(matches!(train(&[ex], &small_config()), Err(TrainError::UnknownToken { .. })));
    }

    #[test]
    fn memorizes_a_single_pattern() {
        let ex = iperf_example();
        let data = vec![ex.clone(); 64];
        let config = TrainConfig {
            embed_dim: 64,
            hidden_dim: 128,
            ..small_config()
        };
        let (model, report) = train(&data, &config).unwrap();
        assert_eq!(report.epochs.len(), 70);
        assert!(report.epochs.last().unwrap().train_loss < report.epochs[0].train_loss);
        assert_eq!(model.translate(&ex.input).unwrap(), ex.output);
    }

    #[test]
    fn training_is_deterministic() {
        let data = vec![iperf_example(); 8];
        let config = TrainConfig {
            epochs: 3,
            ..small_config()
        };
        let (a, _) = train(&data, &config).unwrap();
        let (b, _) = train(&data, &config).unwrap();
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn untrained_model_does_not_crash() {
        let model = Seq2SeqModel::untrained(small_config());
        match model.translate(&["@middlebox", "@origin"]) {
            Ok(out) => assert!(out.len() < MAX_DECODE_LEN),
            Err(TranslateError::MaxLengthExceeded { partial }) => assert_eq!(partial.len(), MAX_DECODE_LEN),
        }
        let _ = model.translate::<&str>(&[]);
    }

    #[test]
    fn feedback_grows_dataset_with_duplicates() {
        let ex = iperf_example();
        let mut data = vec![ex.clone(); 4];
        let config = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        let (mut model, _) = train(&data, &config).unwrap();
        incorporate_feedback(&mut model, &mut data, ex).unwrap();
        assert_eq!(data.len(), 5);
    }
}
