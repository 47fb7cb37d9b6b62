//! LSTM encoder-decoder with hand-written backpropagation through time.
//!
//! One embedding matrix is shared by encoder and decoder inputs. The
//! encoder's final `(h, c)` is the thought vector that initializes the
//! decoder; the decoder is teacher-forced during training and projects
//! each hidden state onto the vocabulary.
//!
//! Gate columns are laid out `[input | forget | candidate | output]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis, NdFloat};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{EOS, SOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell<F> {
    /// `E x 4H`
    pub wx: Array2<F>,
    /// `H x 4H`
    pub wh: Array2<F>,
    /// `4H`
    pub b: Array1<F>,
}

impl<F: NdFloat> LstmCell<F> {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            wx: Array2::zeros((input, 4 * hidden)),
            wh: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    fn hidden(&self) -> usize {
        self.wh.nrows()
    }
}

/// All trainable tensors. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<F> {
    /// `V x E`
    pub embedding: Array2<F>,
    pub encoder: LstmCell<F>,
    pub decoder: LstmCell<F>,
    /// `H x V`
    pub out_w: Array2<F>,
    /// `V`
    pub out_b: Array1<F>,
}

impl<F: NdFloat> Params<F> {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize) -> Self {
        Self {
            embedding: Array2::zeros((vocab, embed)),
            encoder: LstmCell::zeros(embed, hidden),
            decoder: LstmCell::zeros(embed, hidden),
            out_w: Array2::zeros((hidden, vocab)),
            out_b: Array1::zeros(vocab),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.embed_dim(), self.hidden_dim())
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden()
    }

    /// Named flat views over every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[F])> {
        vec![
            ("embedding", self.embedding.as_slice().unwrap()),
            ("encoder.wx", self.encoder.wx.as_slice().unwrap()),
            ("encoder.wh", self.encoder.wh.as_slice().unwrap()),
            ("encoder.b", self.encoder.b.as_slice().unwrap()),
            ("decoder.wx", self.decoder.wx.as_slice().unwrap()),
            ("decoder.wh", self.decoder.wh.as_slice().unwrap()),
            ("decoder.b", self.decoder.b.as_slice().unwrap()),
            ("out_w", self.out_w.as_slice().unwrap()),
            ("out_b", self.out_b.as_slice().unwrap()),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [F])> {
        vec![
            ("embedding", self.embedding.as_slice_mut().unwrap()),
            ("encoder.wx", self.encoder.wx.as_slice_mut().unwrap()),
            ("encoder.wh", self.encoder.wh.as_slice_mut().unwrap()),
            ("encoder.b", self.encoder.b.as_slice_mut().unwrap()),
            ("decoder.wx", self.decoder.wx.as_slice_mut().unwrap()),
            ("decoder.wh", self.decoder.wh.as_slice_mut().unwrap()),
            ("decoder.b", self.decoder.b.as_slice_mut().unwrap()),
            ("out_w", self.out_w.as_slice_mut().unwrap()),
            ("out_b", self.out_b.as_slice_mut().unwrap()),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> F {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(F::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn scale(&mut self, factor: F) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// An example with tokens already mapped to vocabulary indices.
/// `target` excludes SOS and ends with EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
}

impl EncodedExample {
    pub fn new(input: Vec<usize>, mut output: Vec<usize>) -> Self {
        if output.last() != Some(&EOS) {
            output.push(EOS);
        }
        Self { input, target: output }
    }
}

struct StepCache<F> {
    tokens: Vec<usize>,
    x: Array2<F>,
    h_prev: Array2<F>,
    c_prev: Array2<F>,
    /// Activated gates, `B x 4H`.
    gates: Array2<F>,
    tanh_c: Array2<F>,
    mask: Vec<bool>,
}

fn sigmoid<F: NdFloat>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// One masked LSTM step over a batch. Rows with `mask == false` carry
/// their state through unchanged.
fn lstm_step<F: NdFloat>(
    cell: &LstmCell<F>,
    embedding: &Array2<F>,
    tokens: &[usize],
    h: &Array2<F>,
    c: &Array2<F>,
    mask: &[bool],
) -> (Array2<F>, Array2<F>, StepCache<F>) {
    let hidden = cell.hidden();
    let batch = tokens.len();
    let x = embedding.select(Axis(0), tokens);
    let mut z = Array2::zeros((batch, 4 * hidden));
    general_mat_mul(F::one(), &x, &cell.wx, F::zero(), &mut z);
    general_mat_mul(F::one(), h, &cell.wh, F::one(), &mut z);
    z += &cell.b;

    let mut h_new = h.clone();
    let mut c_new = c.clone();
    let mut tanh_c = Array2::zeros((batch, hidden));
    for (row, &active) in mask.iter().enumerate() {
        let gates = z.row_mut(row).into_slice().unwrap();
        for k in 0..hidden {
            gates[k] = sigmoid(gates[k]);
            gates[hidden + k] = sigmoid(gates[hidden + k]);
            gates[2 * hidden + k] = gates[2 * hidden + k].tanh();
            gates[3 * hidden + k] = sigmoid(gates[3 * hidden + k]);
        }
        if !active {
            continue;
        }
        for k in 0..hidden {
            let (i, f, g, o) = (gates[k], gates[hidden + k], gates[2 * hidden + k], gates[3 * hidden + k]);
            let cell_state = f * c[[row, k]] + i * g;
            let t = cell_state.tanh();
            c_new[[row, k]] = cell_state;
            tanh_c[[row, k]] = t;
            h_new[[row, k]] = o * t;
        }
    }

    let cache = StepCache {
        tokens: tokens.to_vec(),
        x,
        h_prev: h.clone(),
        c_prev: c.clone(),
        gates: z,
        tanh_c,
        mask: mask.to_vec(),
    };
    (h_new, c_new, cache)
}

/// Backward through one step. Returns `(dh_prev, dc_prev)`.
fn lstm_step_backward<F: NdFloat>(
    cell: &LstmCell<F>,
    cache: &StepCache<F>,
    dh: &Array2<F>,
    dc: &Array2<F>,
    grad_cell: &mut LstmCell<F>,
    grad_embedding: &mut Array2<F>,
) -> (Array2<F>, Array2<F>) {
    let hidden = cell.hidden();
    let batch = cache.mask.len();
    let one = F::one();
    let mut dz = Array2::zeros((batch, 4 * hidden));
    let mut dc_prev = dc.clone();

    for (row, &active) in cache.mask.iter().enumerate() {
        if !active {
            continue;
        }
        let gates = cache.gates.row(row);
        let dz_row = dz.row_mut(row).into_slice().unwrap();
        for k in 0..hidden {
            let (i, f, g, o) = (gates[k], gates[hidden + k], gates[2 * hidden + k], gates[3 * hidden + k]);
            let t = cache.tanh_c[[row, k]];
            let dh_k = dh[[row, k]];
            let dc_k = dc[[row, k]] + dh_k * o * (one - t * t);
            dz_row[k] = dc_k * g * i * (one - i);
            dz_row[hidden + k] = dc_k * cache.c_prev[[row, k]] * f * (one - f);
            dz_row[2 * hidden + k] = dc_k * i * (one - g * g);
            dz_row[3 * hidden + k] = dh_k * t * o * (one - o);
            dc_prev[[row, k]] = dc_k * f;
        }
    }

    general_mat_mul(one, &cache.x.t(), &dz, one, &mut grad_cell.wx);
    general_mat_mul(one, &cache.h_prev.t(), &dz, one, &mut grad_cell.wh);
    grad_cell.b += &dz.sum_axis(Axis(0));

    let mut dx = Array2::zeros((batch, cell.wx.nrows()));
    general_mat_mul(one, &dz, &cell.wx.t(), F::zero(), &mut dx);
    for (row, &token) in cache.tokens.iter().enumerate() {
        if cache.mask[row] {
            let mut target = grad_embedding.row_mut(token);
            target += &dx.row(row);
        }
    }

    let mut dh_prev = Array2::zeros((batch, hidden));
    general_mat_mul(one, &dz, &cell.wh.t(), F::zero(), &mut dh_prev);
    for (row, &active) in cache.mask.iter().enumerate() {
        if !active {
            let mut target = dh_prev.row_mut(row);
            target.assign(&dh.row(row));
        }
    }
    (dh_prev, dc_prev)
}

/// Softmax over each row, in place; returns nothing, rows sum to one.
fn softmax_rows<F: NdFloat>(logits: &mut Array2<F>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Result of a teacher-forced pass over one batch.
pub struct BatchOutcome<F> {
    /// Mean cross-entropy per target token.
    pub loss: F,
    pub tokens: usize,
    pub grads: Option<Params<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<F> {
    pub params: Params<F>,
}

impl<F: NdFloat> Network<F> {
    /// Uniform initialization in `±1/sqrt(H)`, forget-gate bias 1.
    pub fn init<R: Rng>(vocab: usize, embed: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = Params::zeros(vocab, embed, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for (name, tensor) in params.tensors_mut() {
            if name.ends_with(".b") || name == "out_b" {
                continue;
            }
            for v in tensor.iter_mut() {
                *v = F::from(rng.gen_range(-bound..bound)).unwrap();
            }
        }
        for cell in [&mut params.encoder, &mut params.decoder] {
            cell.b.slice_mut(s![hidden..2 * hidden]).fill(F::one());
        }
        Self { params }
    }

    pub fn vocab_size(&self) -> usize {
        self.params.vocab_size()
    }

    fn encode(&self, batch: &[&EncodedExample], caches: Option<&mut Vec<StepCache<F>>>) -> (Array2<F>, Array2<F>) {
        let hidden = self.params.hidden_dim();
        let mut h = Array2::zeros((batch.len(), hidden));
        let mut c = Array2::zeros((batch.len(), hidden));
        let steps = batch.iter().map(|e| e.input.len()).max().unwrap_or(0);
        let mut caches = caches;
        for t in 0..steps {
            let tokens: Vec<usize> = batch.iter().map(|e| e.input.get(t).copied().unwrap_or(0)).collect();
            let mask: Vec<bool> = batch.iter().map(|e| t < e.input.len()).collect();
            let (h2, c2, cache) = lstm_step(&self.params.encoder, &self.params.embedding, &tokens, &h, &c, &mask);
            h = h2;
            c = c2;
            if let Some(caches) = caches.as_deref_mut() {
                caches.push(cache);
            }
        }
        (h, c)
    }

    /// Final encoder state `(h, c)` for a single input.
    pub fn thought_vector(&self, input: &[usize]) -> (Array1<F>, Array1<F>) {
        let example = EncodedExample {
            input: input.to_vec(),
            target: vec![],
        };
        let (h, c) = self.encode(&[&example], None);
        (h.row(0).to_owned(), c.row(0).to_owned())
    }

    /// Teacher-forced cross-entropy over the batch, with gradients when
    /// `with_grads` is set.
    pub fn run_batch(&self, batch: &[&EncodedExample], with_grads: bool) -> BatchOutcome<F> {
        let p = &self.params;
        let bsz = batch.len();
        let vocab = p.vocab_size();
        let mut enc_caches = Vec::new();
        let (mut h, mut c) = self.encode(batch, with_grads.then_some(&mut enc_caches));

        let steps = batch.iter().map(|e| e.target.len()).max().unwrap_or(0);
        let total_tokens: usize = batch.iter().map(|e| e.target.len()).sum();
        let norm = F::from(total_tokens.max(1)).unwrap();

        let mut loss = F::zero();
        let mut dec_caches = Vec::with_capacity(steps);
        let mut step_outputs: Vec<(Array2<F>, Array2<F>)> = Vec::with_capacity(steps);
        for t in 0..steps {
            let tokens: Vec<usize> = batch
                .iter()
                .map(|e| if t == 0 { SOS } else { e.target.get(t - 1).copied().unwrap_or(0) })
                .collect();
            let mask: Vec<bool> = batch.iter().map(|e| t < e.target.len()).collect();
            let (h2, c2, cache) = lstm_step(&p.decoder, &p.embedding, &tokens, &h, &c, &mask);
            h = h2;
            c = c2;

            let mut probs = Array2::zeros((bsz, vocab));
            general_mat_mul(F::one(), &h, &p.out_w, F::zero(), &mut probs);
            probs += &p.out_b;
            softmax_rows(&mut probs);
            for (row, example) in batch.iter().enumerate() {
                if let Some(&gold) = example.target.get(t) {
                    loss -= probs[[row, gold]].max(F::min_positive_value()).ln();
                    if with_grads {
                        probs[[row, gold]] -= F::one();
                    }
                } else {
                    probs.row_mut(row).fill(F::zero());
                }
            }
            if with_grads {
                probs.mapv_inplace(|v| v / norm);
                step_outputs.push((h.clone(), probs));
                dec_caches.push(cache);
            }
        }
        let loss = loss / norm;
        if !with_grads {
            return BatchOutcome { loss, tokens: total_tokens, grads: None };
        }

        let mut grads = p.zeros_like();
        let hidden = p.hidden_dim();
        let mut dh = Array2::zeros((bsz, hidden));
        let mut dc = Array2::zeros((bsz, hidden));
        for (cache, (h_out, dlogits)) in dec_caches.iter().zip(&step_outputs).rev() {
            general_mat_mul(F::one(), &h_out.t(), dlogits, F::one(), &mut grads.out_w);
            grads.out_b += &dlogits.sum_axis(Axis(0));
            general_mat_mul(F::one(), dlogits, &p.out_w.t(), F::one(), &mut dh);
            let (dh_prev, dc_prev) =
                lstm_step_backward(&p.decoder, cache, &dh, &dc, &mut grads.decoder, &mut grads.embedding);
            dh = dh_prev;
            dc = dc_prev;
        }
        for cache in enc_caches.iter().rev() {
            let (dh_prev, dc_prev) =
                lstm_step_backward(&p.encoder, cache, &dh, &dc, &mut grads.encoder, &mut grads.embedding);
            dh = dh_prev;
            dc = dc_prev;
        }

        BatchOutcome {
            loss,
            tokens: total_tokens,
            grads: Some(grads),
        }
    }

    /// Greedy decoding from SOS. Returns the emitted indices (without EOS)
    /// and whether EOS was reached within `max_len` steps.
    pub fn greedy_decode(&self, input: &[usize], max_len: usize) -> (Vec<usize>, bool) {
        let p = &self.params;
        let example = EncodedExample {
            input: input.to_vec(),
            target: vec![],
        };
        let (mut h, mut c) = self.encode(&[&example], None);
        let mut previous = SOS;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (h2, c2, _) = lstm_step(&p.decoder, &p.embedding, &[previous], &h, &c, &[true]);
            h = h2;
            c = c2;
            let logits = h.row(0).dot(&p.out_w) + &p.out_b;
            let next = argmax(&logits);
            if next == EOS {
                return (out, true);
            }
            out.push(next);
            previous = next;
        }
        (out, false)
    }
}

fn argmax<F: NdFloat>(row: &Array1<F>) -> usize {
    let mut best = 0;
    let mut best_value = F::neg_infinity();
    for (idx, &v) in row.iter().enumerate() {
        if v > best_value {
            best = idx;
            best_value = v;
        }
    }
    best
}
