//! Parameter initializers. Conv and dense weights use a fan-in scaled
//! uniform (He) bound, LSTM weights a small uniform bound, biases start at
//! zero except the LSTM forget gate, which starts at one.

use rand::Rng;

use crate::tensor::Tensor;

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

pub fn dense_weights(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    uniform(&[fan_in, fan_out], (6.0 / fan_in as f64).sqrt(), rng)
}

pub fn conv_kernel(kh: usize, kw: usize, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Tensor {
    let fan_in = kh * kw * c_in;
    uniform(&[kh, kw, c_in, c_out], (6.0 / fan_in as f64).sqrt(), rng)
}

pub fn lstm_weights(fan_in: usize, fan_out: usize, hidden: usize, rng: &mut impl Rng) -> Tensor {
    uniform(&[fan_in, fan_out], 1.0 / (hidden as f64).sqrt(), rng)
}

pub fn lstm_bias(hidden: usize) -> Tensor {
    let mut b = Tensor::zeros(&[4 * hidden]);
    b.data_mut()[hidden..2 * hidden].fill(1.0);
    b
}

pub fn zeros(len: usize) -> Tensor {
    Tensor::zeros(&[len])
}
