use super::vocab::{index_tokens, Vocabulary, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("expected sequence is empty")]
    EmptyExpected,
    #[error("expected sequence has zero variance; compare by exact match instead")]
    DegenerateExpected,
}

/// Coefficient of determination between two token sequences, computed over
/// their vocabulary indices. The shorter vector is right-padded with PAD,
/// and the total sum of squares is taken over the padded expected vector.
pub fn r_squared<S: AsRef<str>>(predicted: &[S], expected: &[S], vocab: &Vocabulary) -> Result<f64, MetricError> {
    if expected.is_empty() {
        return Err(MetricError::EmptyExpected);
    }
    let mut pred = index_tokens(predicted, vocab);
    let mut exp = index_tokens(expected, vocab);
    let n = pred.len().max(exp.len());
    pred.resize(n, PAD);
    exp.resize(n, PAD);
    r_squared_indices(&pred, &exp)
}

/// [`r_squared`] over equal-length index vectors.
pub fn r_squared_indices(predicted: &[usize], expected: &[usize]) -> Result<f64, MetricError> {
    assert_eq!(predicted.len(), expected.len());
    if expected.is_empty() {
        return Err(MetricError::EmptyExpected);
    }
    let mean = expected.iter().sum::<usize>() as f64 / expected.len() as f64;
    let ss_tot: f64 = expected.iter().map(|&y| (y as f64 - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::DegenerateExpected);
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(expected)
        .map(|(&p, &y)| (p as f64 - y as f64).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}
