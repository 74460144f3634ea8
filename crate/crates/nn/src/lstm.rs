use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::init;
use crate::params::{ParamId, ParamStore};

/// Parameters of one LSTM cell. Gates are packed as `[input, forget, cell,
/// output]` along the second weight axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub weights: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input_size: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let weights = store.add(
            format!("{name}.weights"),
            init::lstm_weights(input_size + hidden, 4 * hidden, hidden, rng),
        );
        let bias = store.add(format!("{name}.bias"), init::lstm_bias(hidden));
        LstmParams {
            weights,
            bias,
            input_size,
            hidden,
        }
    }
}

/// One step of the standard LSTM recurrence with sigmoid gates and tanh
/// activations. Returns `(h', c')`.
pub fn lstm_cell(g: &mut Graph, x: Var, h: Var, c: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hs = p.hidden;
    let w = g.param(p.weights);
    let b = g.param(p.bias);
    let xh = g.concat(&[x, h]);
    let z = g.linear(xh, w, Some(b))?;
    let i = g.slice(z, 0, hs)?;
    let i = g.sigmoid(i);
    let f = g.slice(z, hs, hs)?;
    let f = g.sigmoid(f);
    let cand = g.slice(z, 2 * hs, hs)?;
    let cand = g.tanh(cand);
    let o = g.slice(z, 3 * hs, hs)?;
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs a stateless LSTM over `inputs` from zero state and returns the
/// final `(h, c)`.
pub fn lstm_sequence(g: &mut Graph, inputs: &[Var], p: &LstmParams) -> Result<(Var, Var)> {
    let zeros = crate::tensor::Tensor::zeros(&[p.hidden]);
    let mut h = g.input(zeros.clone());
    let mut c = g.input(zeros);
    for &x in inputs {
        (h, c) = lstm_cell(g, x, h, c, p)?;
    }
    Ok((h, c))
}
