//! Parameter bundles for the dense and convolutional layers shared by the
//! network and the ResNet baseline.

use rand::Rng;
use vru_nn::{init, Graph, ParamId, ParamStore, Result, Var};

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let w = store.add(format!("{name}.w"), init::dense_weights(fan_in, fan_out, rng));
        let b = store.add(format!("{name}.b"), init::zeros(fan_out));
        Dense { w, b, fan_in, fan_out }
    }

    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.linear(x, w, Some(b))
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub k: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kh: usize,
        kw: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let k = store.add(format!("{name}.k"), init::conv_kernel(kh, kw, c_in, c_out, rng));
        let b = store.add(format!("{name}.b"), init::zeros(c_out));
        Conv { k, b, stride }
    }

    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let k = g.param(self.k);
        let b = g.param(self.b);
        g.conv2d(x, k, Some(b), self.stride)
    }
}

/// Output length of a same-padded strided axis.
pub fn ceil_div(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}
