//! Layers built from tape primitives. Layers only hold parameter indices;
//! values live in a [`ParameterSet`] and are bound to a tape per step.

use rand::Rng;

use super::{ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `y = x W + b`.
pub fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub weight: usize,
    pub bias: usize,
}

impl Affine {
    pub fn register<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.insert_uniform(format!("{name}.w"), input, output, input, rng);
        let bias = params.insert_uniform(format!("{name}.b"), 1, output, input, rng);
        Affine { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        affine(tape, x, bound[self.weight], bound[self.bias])
    }

    pub fn input_dim(&self, params: &ParameterSet) -> usize {
        params.get(self.weight).value.rows()
    }

    pub fn output_dim(&self, params: &ParameterSet) -> usize {
        params.get(self.weight).value.cols()
    }
}

/// Two-layer feed-forward head: tanh hidden layer, linear output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Affine,
    pub output: Affine,
}

impl Mlp {
    pub fn register<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Mlp {
            hidden: Affine::register(params, &format!("{name}.l1"), input, hidden, rng),
            output: Affine::register(params, &format!("{name}.l2"), hidden, output, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, bound, x)?;
        let h = tape.tanh(h);
        self.output.forward(tape, bound, h)
    }
}

/// One LSTM direction. Gate blocks in the `4H` axis are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        input: usize,
        hidden: usize,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        let w_ih = params.insert_uniform(format!("{name}.w_ih"), input, 4 * hidden, input, rng);
        let w_hh = params.insert_uniform(format!("{name}.w_hh"), hidden, 4 * hidden, hidden, rng);
        let bias = params.insert_uniform(format!("{name}.b"), 1, 4 * hidden, hidden, rng);
        let b = &mut params.get_mut(bias).value;
        for j in hidden..2 * hidden {
            b.set(0, j, forget_bias);
        }
        LstmParams { w_ih, w_hh, bias, hidden }
    }
}

/// Cell update from the gate pre-activations `x W_ih + h W_hh + b` (`1 x 4H`).
fn lstm_cell(tape: &mut Tape, gates: Var, c: Var, hidden: usize) -> Result<(Var, Var)> {
    let i = tape.slice_cols(gates, 0, hidden)?;
    let f = tape.slice_cols(gates, hidden, hidden)?;
    let g = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Single LSTM step on a `1 x D` input; returns `(h', c')`.
pub fn lstm_step(
    tape: &mut Tape,
    bound: &[Var],
    lstm: &LstmParams,
    x_t: Var,
    (h, c): (Var, Var),
) -> Result<(Var, Var)> {
    if tape.value(x_t).rows() != 1 {
        return Err(Error::shape("lstm_step", "input must be a single row"));
    }
    let xw = tape.matmul(x_t, bound[lstm.w_ih])?;
    let hw = tape.matmul(h, bound[lstm.w_hh])?;
    let pre = tape.add(xw, hw)?;
    let gates = tape.add_bias(pre, bound[lstm.bias])?;
    lstm_cell(tape, gates, c, lstm.hidden)
}

/// Runs one direction over all rows of `input` and returns the `T x H`
/// hidden sequence in original time order.
fn run_direction(
    tape: &mut Tape,
    bound: &[Var],
    lstm: &LstmParams,
    input: Var,
    reverse: bool,
) -> Result<Var> {
    let frames = tape.value(input).rows();
    // Input projections for all frames at once; only the recurrent product is per step.
    let xw = tape.matmul(input, bound[lstm.w_ih])?;
    let xw = tape.add_bias(xw, bound[lstm.bias])?;
    let mut h = tape.constant(Tensor::zeros(1, lstm.hidden));
    let mut c = tape.constant(Tensor::zeros(1, lstm.hidden));
    let mut outputs = vec![h; frames];
    let order: Box<dyn Iterator<Item = usize>> =
        if reverse { Box::new((0..frames).rev()) } else { Box::new(0..frames) };
    for t in order {
        let x_row = tape.gather_rows(xw, &[t])?;
        let hw = tape.matmul(h, bound[lstm.w_hh])?;
        let gates = tape.add(x_row, hw)?;
        (h, c) = lstm_cell(tape, gates, c, lstm.hidden)?;
        outputs[t] = h;
    }
    tape.stack_rows(&outputs)
}

/// Stacked bidirectional LSTM. Each layer outputs `[forward | backward]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiLstm {
    pub layers: Vec<(LstmParams, LstmParams)>,
}

impl BiLstm {
    pub fn register<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 { input } else { 2 * hidden };
                let fwd = LstmParams::register(params, &format!("{name}.l{l}.fwd"), d, hidden, forget_bias, rng);
                let bwd = LstmParams::register(params, &format!("{name}.l{l}.bwd"), d, hidden, forget_bias, rng);
                (fwd, bwd)
            })
            .collect();
        BiLstm { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers.first().map_or(0, |(f, _)| f.hidden)
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    /// `T x D` input to `T x 2H` output of the last layer.
    pub fn encode(&self, tape: &mut Tape, bound: &[Var], input: Var) -> Result<Var> {
        if tape.value(input).rows() == 0 {
            return Err(Error::shape("bilstm_encode", "empty input sequence"));
        }
        let mut x = input;
        for (fwd, bwd) in &self.layers {
            let f = run_direction(tape, bound, fwd, x, false)?;
            let b = run_direction(tape, bound, bwd, x, true)?;
            x = tape.concat_cols(&[f, b])?;
        }
        Ok(x)
    }
}
