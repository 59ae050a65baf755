//! Small multilayer ε-predictor with hand-written reverse-mode gradients.
//!
//! Input is the concatenation `[z_t, z_c, time embedding, prompt embedding]`;
//! two SiLU hidden layers feed a linear output of the latent dimension. All
//! parameters live in one flat vector so optimizers and gradient checks can
//! treat the model as a point in ℝᴾ.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::EpsilonPredictor;
use crate::error::{Error, Result};
use crate::latent::{same_dim, LatentVec};
use crate::prompt::PromptClass;
use crate::rng::{seeded, standard_normal};

const CHECKPOINT_FORMAT: &str = "gencomm-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpShape {
    /// Latent dimension d.
    pub dim: usize,
    pub hidden: usize,
    /// Width of the sinusoidal time embedding (even).
    pub time_dim: usize,
    pub prompt_dim: usize,
    /// Number of prompt classes; one extra row holds the null token.
    pub classes: usize,
}

impl MlpShape {
    pub fn new(dim: usize, classes: usize) -> Self {
        MlpShape {
            dim,
            hidden: 128,
            time_dim: 16,
            prompt_dim: 16,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(Error::config("MLP dim, hidden width and classes must be >= 1"));
        }
        if self.time_dim % 2 != 0 {
            return Err(Error::config("time embedding width must be even"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * self.dim + self.time_dim + self.prompt_dim
    }

    fn layout(&self) -> Layout {
        let mut off = 0;
        let mut take = |n: usize| {
            let start = off;
            off += n;
            start
        };
        let (h, i, d) = (self.hidden, self.input_dim(), self.dim);
        Layout {
            table: take((self.classes + 1) * self.prompt_dim),
            w1: take(h * i),
            b1: take(h),
            w2: take(h * h),
            b2: take(h),
            w3: take(d * h),
            b3: take(d),
            total: off,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    table: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    row: usize,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    shape: MlpShape,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    shape: MlpShape,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal embedding `[sin(t·f_i), cos(t·f_i)]` with `f_i = 10000^(-i/half)`.
pub fn time_embedding(t: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = vec![0.0; width];
    for i in 0..half {
        let f = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let a = t as f64 * f;
        out[i] = a.sin();
        out[i + half] = a.cos();
    }
    out
}

/// `out = W·x + b` for row-major `W` of shape `out.len() × x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        *o = b[i] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

impl MlpDenoiser {
    /// Seeded initialization: Gaussian weights with variance 1/fan-in, zero
    /// biases, standard-normal prompt embeddings.
    pub fn new(shape: MlpShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let l = shape.layout();
        let mut rng = seeded(seed);
        let mut params = vec![0.0; l.total];
        let (h, i, d) = (shape.hidden, shape.input_dim(), shape.dim);
        let mut fill = |range: std::ops::Range<usize>, std: f64| {
            for p in &mut params[range] {
                *p = std * standard_normal(&mut rng);
            }
        };
        fill(l.table..l.w1, 1.0);
        fill(l.w1..l.w1 + h * i, (1.0 / i as f64).sqrt());
        fill(l.w2..l.w2 + h * h, (1.0 / h as f64).sqrt());
        fill(l.w3..l.w3 + d * h, (1.0 / h as f64).sqrt());
        Ok(MlpDenoiser { shape, params })
    }

    pub fn zeros(shape: MlpShape) -> Result<Self> {
        shape.validate()?;
        Ok(MlpDenoiser {
            shape,
            params: vec![0.0; shape.num_params()],
        })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn table_row(&self, prompt: Option<PromptClass>) -> Result<usize> {
        match prompt {
            None => Ok(self.shape.classes),
            Some(PromptClass(c)) if c < self.shape.classes => Ok(c),
            Some(PromptClass(c)) => Err(Error::contract(format!(
                "prompt class {c} outside the {} classes of the model",
                self.shape.classes
            ))),
        }
    }

    pub fn forward(
        &self,
        z_t: &LatentVec,
        z_c: &LatentVec,
        prompt: Option<PromptClass>,
        t: usize,
    ) -> Result<ForwardCache> {
        same_dim(z_t, z_c)?;
        let s = &self.shape;
        if z_t.dim() != s.dim {
            return Err(Error::contract(format!(
                "MLP expects latents of length {}, got {}",
                s.dim,
                z_t.dim()
            )));
        }
        let l = s.layout();
        let row = self.table_row(prompt)?;
        let mut input = Vec::with_capacity(s.input_dim());
        input.extend_from_slice(z_t.as_slice());
        input.extend_from_slice(z_c.as_slice());
        input.extend(time_embedding(t, s.time_dim));
        let e = l.table + row * s.prompt_dim;
        input.extend_from_slice(&self.params[e..e + s.prompt_dim]);

        let p = &self.params;
        let (h, d) = (s.hidden, s.dim);
        let mut pre1 = vec![0.0; h];
        affine(&p[l.w1..l.b1], &p[l.b1..l.w2], &input, &mut pre1);
        let act1: Vec<f64> = pre1.iter().map(|&x| silu(x)).collect();
        let mut pre2 = vec![0.0; h];
        affine(&p[l.w2..l.b2], &p[l.b2..l.w3], &act1, &mut pre2);
        let act2: Vec<f64> = pre2.iter().map(|&x| silu(x)).collect();
        let mut output = vec![0.0; d];
        affine(&p[l.w3..l.b3], &p[l.b3..l.total], &act2, &mut output);
        Ok(ForwardCache {
            input,
            row,
            pre1,
            act1,
            pre2,
            act2,
            output,
        })
    }

    /// Accumulates ∂L/∂θ into `grad` given ∂L/∂output.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        let s = &self.shape;
        let l = s.layout();
        let p = &self.params;
        let (h, n_in) = (s.hidden, s.input_dim());

        let mut g_act2 = vec![0.0; h];
        for (i, &go) in grad_out.iter().enumerate() {
            grad[l.b3 + i] += go;
            let w = l.w3 + i * h;
            for j in 0..h {
                grad[w + j] += go * cache.act2[j];
                g_act2[j] += p[w + j] * go;
            }
        }
        let g_pre2: Vec<f64> = g_act2.iter().zip(&cache.pre2).map(|(g, &x)| g * silu_grad(x)).collect();
        let mut g_act1 = vec![0.0; h];
        for (i, &gp) in g_pre2.iter().enumerate() {
            grad[l.b2 + i] += gp;
            let w = l.w2 + i * h;
            for j in 0..h {
                grad[w + j] += gp * cache.act1[j];
                g_act1[j] += p[w + j] * gp;
            }
        }
        let g_pre1: Vec<f64> = g_act1.iter().zip(&cache.pre1).map(|(g, &x)| g * silu_grad(x)).collect();
        let emb_start = 2 * s.dim + s.time_dim;
        let table = l.table + cache.row * s.prompt_dim;
        for (i, &gp) in g_pre1.iter().enumerate() {
            grad[l.b1 + i] += gp;
            let w = l.w1 + i * n_in;
            for j in 0..n_in {
                grad[w + j] += gp * cache.input[j];
            }
            for k in 0..s.prompt_dim {
                grad[table + k] += p[w + emb_start + k] * gp;
            }
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            shape: self.shape,
            params: self.params.clone(),
        };
        serde_json::to_writer(w, &ck).map_err(|e| Error::Io(e.into()))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_reader(r).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.shape.validate()?;
        if ck.params.len() != ck.shape.num_params() {
            return Err(Error::Parse(format!(
                "checkpoint holds {} parameters, shape needs {}",
                ck.params.len(),
                ck.shape.num_params()
            )));
        }
        if ck.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parse("checkpoint contains non-finite parameters".into()));
        }
        Ok(MlpDenoiser {
            shape: ck.shape,
            params: ck.params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl EpsilonPredictor for MlpDenoiser {
    fn predict(
        &self,
        z_t: &LatentVec,
        z_c: &LatentVec,
        prompt: Option<PromptClass>,
        t: usize,
    ) -> Result<LatentVec> {
        Ok(LatentVec::new(self.forward(z_t, z_c, prompt, t)?.output))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_vec;

    fn small() -> MlpShape {
        MlpShape {
            dim: 3,
            hidden: 5,
            time_dim: 4,
            prompt_dim: 2,
            classes: 2,
        }
    }

    #[test]
    fn parameter_count() {
        // table 3·2, W1 5·12 + 5, W2 5·5 + 5, W3 3·5 + 3
        assert_eq!(small().num_params(), 6 + 65 + 30 + 18);
    }

    #[test]
    fn zero_weights_zero_output() {
        let m = MlpDenoiser::zeros(small()).unwrap();
        let mut rng = seeded(1);
        let (a, b) = (normal_vec(&mut rng, 3), normal_vec(&mut rng, 3));
        assert_eq!(m.predict(&a, &b, Some(PromptClass(1)), 7).unwrap(), LatentVec::zeros(3));
    }

    #[test]
    fn null_token_for_missing_prompt() {
        let m = MlpDenoiser::new(small(), 3).unwrap();
        let mut rng = seeded(2);
        let (a, b) = (normal_vec(&mut rng, 3), normal_vec(&mut rng, 3));
        let none = m.predict(&a, &b, None, 10).unwrap();
        assert_eq!(none, m.predict(&a, &b, None, 10).unwrap());
        assert_ne!(none, m.predict(&a, &b, Some(PromptClass(0)), 10).unwrap());
        assert!(m.predict(&a, &b, Some(PromptClass(2)), 10).is_err());
    }

    #[test]
    fn time_embedding_values() {
        let e = time_embedding(0, 4);
        assert_eq!(e, vec![0.0, 0.0, 1.0, 1.0]);
        let e = time_embedding(2, 4);
        assert!((e[0] - 2f64.sin()).abs() < 1e-15);
        assert!((e[1] - 0.02f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = MlpDenoiser::new(small(), 4).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(MlpDenoiser::read_from(&buf[..]).unwrap(), m);
        let text = String::from_utf8(buf).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(MlpDenoiser::read_from(text.as_bytes()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = MlpDenoiser::new(small(), 5).unwrap();
        let mut rng = seeded(6);
        let (a, b) = (normal_vec(&mut rng, 3), normal_vec(&mut rng, 3));
        let target = normal_vec(&mut rng, 3);
        let loss = |m: &MlpDenoiser| {
            let out = m.forward(&a, &b, Some(PromptClass(1)), 42).unwrap().output;
            out.iter().zip(target.as_slice()).map(|(o, t)| (o - t).powi(2)).sum::<f64>()
        };
        let cache = m.forward(&a, &b, Some(PromptClass(1)), 42).unwrap();
        let g_out: Vec<f64> = cache.output.iter().zip(target.as_slice()).map(|(o, t)| 2.0 * (o - t)).collect();
        let mut grad = vec![0.0; m.num_params()];
        m.backward(&cache, &g_out, &mut grad);
        let h = 1e-6;
        for i in 0..m.num_params() {
            let orig = m.params[i];
            m.params[i] = orig + h;
            let up = loss(&m);
            m.params[i] = orig - h;
            let down = loss(&m);
            m.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let tol = 1e-6 * (1.0 + fd.abs());
            assert!((fd - grad[i]).abs() < tol, "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
