//! Dense ReLU networks with reverse-mode gradients, Adam, and a flat binary
//! weight format.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];
const MAGIC: &[u8; 4] = b"TNET";

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("backward called without a recorded forward pass")]
    NoTape,
    #[error("bad weight stream: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn shape_err(expected: impl ToString, got: impl ToString) -> NetError {
    NetError::Shape { expected: expected.to_string(), got: got.to_string() }
}

#[derive(Debug, Clone)]
struct Tape {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
}

/// Multi-layer perceptron. Weights are stored `fan_in × fan_out` so a batch
/// of row vectors multiplies on the left.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    tape: Option<Tape>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.weights == other.weights && self.biases == other.biases
    }
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Grads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

fn check_sizes(sizes: &[usize]) -> Result<(), NetError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(shape_err("at least two positive layer sizes", format!("{sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// Uniform `[−1/√fan_in, 1/√fan_in]` initialisation.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, NetError> {
        check_sizes(sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((pair[0], pair[1]), || rng.random_range(-bound..bound)));
            biases.push(Array1::from_shape_simple_fn(pair[1], || rng.random_range(-bound..bound)));
        }
        Ok(Self { sizes: sizes.to_vec(), weights, biases, tape: None })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, NetError> {
        check_sizes(sizes)?;
        let weights = sizes.windows(2).map(|p| Array2::zeros((p[0], p[1]))).collect();
        let biases = sizes.windows(2).map(|p| Array1::zeros(p[1])).collect();
        Ok(Self { sizes: sizes.to_vec(), weights, biases, tape: None })
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self, NetError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(shape_err("one bias per weight matrix", format!("{} vs {}", weights.len(), biases.len())));
        }
        let mut sizes = vec![weights[0].nrows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != *sizes.last().unwrap() || b.len() != w.ncols() {
                return Err(shape_err("consecutive layer dimensions to agree", format!("{:?}", w.dim())));
            }
            sizes.push(w.ncols());
        }
        check_sizes(&sizes)?;
        let weights = weights.into_iter().map(|w| w.as_standard_layout().into_owned()).collect();
        Ok(Self { sizes, weights, biases, tape: None })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// All parameters in storage order (each weight matrix row-major, then its bias).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(shape_err(self.param_count(), params.len()));
        }
        let mut it = params.iter();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|x| *x = *it.next().unwrap());
        }
        Ok(())
    }

    fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| {
            [w.as_slice_mut().expect("standard layout"), b.as_slice_mut().expect("contiguous")]
        })
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.sizes[0] {
            return Err(shape_err(format!("{} input columns", self.sizes[0]), x.ncols()));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>, mut record: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(a);
            }
            a = z;
        }
        a
    }

    /// Batched inference; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&x)?;
        Ok(self.run(x, None))
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| NetError::Format(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let out = self.run(x, Some(&mut inputs));
        self.tape = Some(Tape { inputs });
        Ok(out)
    }

    fn backprop(&mut self, grad_out: &Array2<f64>, want_params: bool) -> Result<(Option<Grads>, Array2<f64>), NetError> {
        let tape = self.tape.take().ok_or(NetError::NoTape)?;
        let batch = tape.inputs[0].nrows();
        if grad_out.dim() != (batch, self.output_dim()) {
            return Err(shape_err(format!("{:?}", (batch, self.output_dim())), format!("{:?}", grad_out.dim())));
        }
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut g = grad_out.clone();
        for l in (0..layers).rev() {
            let input = &tape.inputs[l];
            if want_params {
                let w = input.t().dot(&g);
                gw.push(if w.is_standard_layout() { w } else { w.as_standard_layout().into_owned() });
                gb.push(g.sum_axis(Axis(0)));
            }
            let mut gi = g.dot(&self.weights[l].t());
            if l > 0 {
                // The recorded input of layer l is the ReLU output of layer l−1.
                ndarray::Zip::from(&mut gi).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            g = gi;
        }
        let grads = want_params.then(|| {
            gw.reverse();
            gb.reverse();
            Grads { weights: gw, biases: gb }
        });
        Ok((grads, g))
    }

    /// Parameter gradients and input gradient of the recorded pass, given
    /// `∂loss/∂output`. Consumes the recording.
    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<(Grads, Array2<f64>), NetError> {
        let (g, gi) = self.backprop(grad_out, true)?;
        Ok((g.expect("requested"), gi))
    }

    /// Only `∂loss/∂input`; parameters are treated as constants.
    pub fn backward_input(&mut self, grad_out: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.backprop(grad_out, false)?.1)
    }

    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    /// `self ← τ·source + (1−τ)·self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<(), NetError> {
        if self.sizes != source.sizes {
            return Err(shape_err(format!("{:?}", self.sizes), format!("{:?}", source.sizes)));
        }
        for (t, s) in self.weights.iter_mut().zip(&source.weights) {
            t.zip_mut_with(s, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        for (t, s) in self.biases.iter_mut().zip(&source.biases) {
            t.zip_mut_with(s, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NetError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * self.param_count());
        for x in self.flat_params() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads exactly one network from `r`.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NetError> {
        let truncated = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                NetError::Format("truncated stream".into())
            } else {
                NetError::Io(e)
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(truncated)?;
        let count = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&count) {
            return Err(NetError::Format(format!("implausible layer count {count}")));
        }
        let mut sizes = Vec::with_capacity(count);
        let mut b8 = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut b8).map_err(truncated)?;
            let s = u64::from_le_bytes(b8);
            if s == 0 || s > 1 << 20 {
                return Err(NetError::Format(format!("implausible layer size {s}")));
            }
            sizes.push(s as usize);
        }
        let mut net = Mlp::zeros(&sizes)?;
        let mut raw = vec![0u8; 8 * net.param_count()];
        r.read_exact(&mut raw).map_err(truncated)?;
        let params: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        net.set_flat_params(&params)?;
        Ok(net)
    }

    /// Parses a complete stream; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut cursor = bytes;
        let net = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(NetError::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(net)
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.param_count(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn apply(&mut self, offset: usize, params: &mut [f64], grads: &[f64], c1: f64, c2: f64) {
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
        }
    }

    fn corrections(&mut self) -> (f64, f64) {
        self.t += 1;
        let t = self.t as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err(self.m.len(), format!("{} params / {} grads", params.len(), grads.len())));
        }
        let (c1, c2) = self.corrections();
        self.apply(0, params, grads, c1, c2);
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut Mlp, grads: &Grads) -> Result<(), NetError> {
        if net.param_count() != self.m.len() {
            return Err(shape_err(self.m.len(), net.param_count()));
        }
        let same = grads.weights.len() == net.weights.len()
            && grads.weights.iter().zip(&net.weights).all(|(g, w)| g.dim() == w.dim())
            && grads.biases.iter().zip(&net.biases).all(|(g, b)| g.dim() == b.dim());
        if !same {
            return Err(shape_err("gradients shaped like the network", "mismatched gradients"));
        }
        let (c1, c2) = self.corrections();
        let gslices = grads.weights.iter().zip(&grads.biases).flat_map(|(w, b)| {
            [w.as_slice().expect("standard layout"), b.as_slice().expect("contiguous")]
        });
        let mut offset = 0;
        let pairs: Vec<(&mut [f64], &[f64])> = net.param_slices_mut().zip(gslices).collect();
        for (p, g) in pairs {
            let len = p.len();
            self.apply(offset, p, g, c1, c2);
            offset += len;
        }
        Ok(())
    }
}
