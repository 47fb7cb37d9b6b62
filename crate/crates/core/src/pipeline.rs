//! Utterance to Nile: extraction, anonymization, translation and
//! deanonymization, plus turning operator corrections into training pairs.

use serde::Serialize;

use crate::anonymizer::{anonymize, deanonymize, AnonymizationMap, AnonymizeError, TokenSequence};
use crate::extractor::{extract_entities, EntitySet, ExtractError, Lexicon};
use crate::nile::{parse_nile, render_nile, NileIntent, ParseError};
use crate::translator::{
    anonymize_program, detokenize, Seq2SeqModel, TrainingExample, TranslateError, INTENT_NAME_TOKEN, UNK,
};

pub const DEFAULT_INTENT_NAME: &str = "testIntent";

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub utterance: String,
    pub entities: EntitySet,
    /// Anonymized entity tokens fed to the translator.
    pub input: TokenSequence,
    pub map: AnonymizationMap,
    /// Anonymized program tokens produced by the translator.
    pub program: TokenSequence,
    /// Canonical concrete program.
    pub nile_text: String,
    #[serde(skip)]
    pub intent: NileIntent,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Anonymize(#[from] AnonymizeError),
    #[error("translation is not a valid program ({error}):\n{text}")]
    Unparseable { text: String, error: ParseError },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrectionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("`{0}` was not part of the original request and cannot be learned from")]
    OutOfVocabulary(String),
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub lexicon: Lexicon,
    pub intent_name: String,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            lexicon: Lexicon::builtin(),
            intent_name: DEFAULT_INTENT_NAME.into(),
        }
    }
}

impl Pipeline {
    pub fn refine(&self, utterance: &str, model: &Seq2SeqModel) -> Result<Candidate, PipelineError> {
        let entities = extract_entities(utterance, &self.lexicon)?;
        let (input, mut map) = anonymize(&entities)?;
        map.bind(INTENT_NAME_TOKEN, self.intent_name.clone());

        let mut warnings = Vec::new();
        let program = match model.translate(&input) {
            Ok(tokens) => tokens,
            Err(TranslateError::MaxLengthExceeded { partial }) => {
                warnings.push("low confidence: the translator did not finish the program".to_string());
                partial
            }
        };
        let text = deanonymize(&detokenize(&program), &map)?;
        let intent = parse_nile(&text).map_err(|error| PipelineError::Unparseable {
            text: text.clone(),
            error,
        })?;
        Ok(Candidate {
            utterance: utterance.to_string(),
            entities,
            input,
            map,
            program,
            nile_text: render_nile(&intent),
            intent,
            warnings,
        })
    }

    /// Training pair for `candidate` confirmed as-is.
    pub fn confirmation(candidate: &Candidate) -> TrainingExample {
        TrainingExample::new(candidate.input.clone(), candidate.program.clone())
    }

    /// Training pair for an operator-edited program. Values are mapped back
    /// to the placeholders bound for this request.
    pub fn correction(candidate: &Candidate, corrected: &str, model: &Seq2SeqModel) -> Result<TrainingExample, CorrectionError> {
        let intent = parse_nile(corrected)?;
        let program = anonymize_program(&render_nile(&intent), &candidate.map);
        if let Some(unknown) = program.iter().find(|t| model.vocab.get(t).is_none_or(|i| i == UNK)) {
            return Err(CorrectionError::OutOfVocabulary(unknown.clone()));
        }
        Ok(TrainingExample::new(candidate.input.clone(), program))
    }
}
