//! Fixed-shape tanh network `in -> h1 -> h2 -> out` with explicit reverse mode.
//!
//! Parameters are stored flat as `W1, b1, W2, b2, W3, b3`, weights row-major
//! with one row per output unit.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub inputs: usize,
    pub hidden: [usize; 2],
    pub outputs: usize,
}

/// Widest layer supported.
pub const MAX_WIDTH: usize = 64;

/// Activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    input: [f64; MAX_WIDTH],
    z1: [f64; MAX_WIDTH],
    z2: [f64; MAX_WIDTH],
}

/// `tanh` through `expm1`; about twice as fast as the libm routine here.
#[inline]
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp_m1();
    (-e / (e + 2.0)).copysign(x)
}

impl Shape {
    pub fn param_count(&self) -> usize {
        let [h1, h2] = self.hidden;
        h1 * self.inputs + h1 + h2 * h1 + h2 + self.outputs * h2 + self.outputs
    }

    fn offsets(&self) -> [usize; 6] {
        let [h1, h2] = self.hidden;
        let w1 = 0;
        let b1 = w1 + h1 * self.inputs;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + self.outputs * h2;
        [w1, b1, w2, b2, w3, b3]
    }

    /// Offset and length of the output bias.
    pub fn output_bias(&self) -> std::ops::Range<usize> {
        let b3 = self.offsets()[5];
        b3..b3 + self.outputs
    }

    /// Indices of the first-layer weights that read input `k`.
    pub fn input_weights(&self, k: usize) -> Vec<usize> {
        (0..self.hidden[0]).map(|j| j * self.inputs + k).collect()
    }

    /// Fan-in of the layer owning parameter `idx`.
    pub fn fan_in(&self, idx: usize) -> usize {
        let [_, _, w2, _, w3, _] = self.offsets();
        if idx < w2 {
            self.inputs
        } else if idx < w3 {
            self.hidden[0]
        } else {
            self.hidden[1]
        }
    }

    pub fn new_tape(&self) -> Tape {
        assert!(self.inputs.max(self.hidden[0]).max(self.hidden[1]) <= MAX_WIDTH);
        Tape {
            input: [0.0; MAX_WIDTH],
            z1: [0.0; MAX_WIDTH],
            z2: [0.0; MAX_WIDTH],
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64], tape: &mut Tape, out: &mut [f64]) {
        let [ow1, ob1, ow2, ob2, ow3, ob3] = self.offsets();
        let [h1, h2] = self.hidden;
        let ni = self.inputs;
        tape.input[..ni].copy_from_slice(input);
        for j in 0..h1 {
            let row = &params[ow1 + j * ni..ow1 + (j + 1) * ni];
            let mut s = params[ob1 + j];
            for (w, x) in row.iter().zip(input) {
                s += w * x;
            }
            tape.z1[j] = tanh(s);
        }
        for j in 0..h2 {
            let row = &params[ow2 + j * h1..ow2 + (j + 1) * h1];
            let mut s = params[ob2 + j];
            for (w, x) in row.iter().zip(&tape.z1[..h1]) {
                s += w * x;
            }
            tape.z2[j] = tanh(s);
        }
        for (k, o) in out.iter_mut().enumerate() {
            let row = &params[ow3 + k * h2..ow3 + (k + 1) * h2];
            let mut s = params[ob3 + k];
            for (w, x) in row.iter().zip(&tape.z2[..h2]) {
                s += w * x;
            }
            *o = s;
        }
    }

    /// Accumulates `J^T seed` into `grad` (parameters) and `grad_input`.
    pub fn backward(&self, params: &[f64], tape: &Tape, seed: &[f64], grad: &mut [f64], grad_input: &mut [f64]) {
        let [ow1, ob1, ow2, ob2, ow3, ob3] = self.offsets();
        let [h1, h2] = self.hidden;
        let ni = self.inputs;
        let mut d2 = [0.0; MAX_WIDTH];
        for (k, s) in seed.iter().enumerate() {
            grad[ob3 + k] += s;
            for j in 0..h2 {
                grad[ow3 + k * h2 + j] += s * tape.z2[j];
                d2[j] += s * params[ow3 + k * h2 + j];
            }
        }
        let mut d1 = [0.0; MAX_WIDTH];
        for j in 0..h2 {
            let g = d2[j] * (1.0 - tape.z2[j] * tape.z2[j]);
            grad[ob2 + j] += g;
            for i in 0..h1 {
                grad[ow2 + j * h1 + i] += g * tape.z1[i];
                d1[i] += g * params[ow2 + j * h1 + i];
            }
        }
        grad_input.iter_mut().for_each(|g| *g = 0.0);
        for j in 0..h1 {
            let g = d1[j] * (1.0 - tape.z1[j] * tape.z1[j]);
            grad[ob1 + j] += g;
            for i in 0..ni {
                grad[ow1 + j * ni + i] += g * tape.input[i];
                grad_input[i] += g * params[ow1 + j * ni + i];
            }
        }
    }
}
