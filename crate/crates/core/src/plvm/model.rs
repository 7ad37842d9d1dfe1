use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particles::Point;
use crate::rng::Rng;
use crate::targets::Density;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense row-major matrix, serialized as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Model(format!(
                "matrix data of length {} does not fit {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn mul_vec_add(&self, v: &[f64], bias: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| bias[i] + self.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Model("matrix rows differ in length".into()));
        }
        let n = rows.len();
        Self::from_row_major(n, cols, rows.into_iter().flatten().collect())
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.data.chunks(m.cols).map(<[f64]>::to_vec).collect()
    }
}

/// Conditional likelihood p(x|z) = N(x | decode(z), σ²I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decoder", rename_all = "snake_case")]
pub enum Decoder {
    /// decode(z) = W z + b
    Linear { w: Matrix, b: Vec<f64>, sigma: f64 },
    /// decode(z) = W2 tanh(W1 z + b1) + b2
    Mlp {
        w1: Matrix,
        b1: Vec<f64>,
        w2: Matrix,
        b2: Vec<f64>,
        sigma: f64,
    },
}

/// Which observation dimensions enter the likelihood (`true` = observed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask(Vec<bool>);

impl ObservationMask {
    pub fn new(observed: Vec<bool>) -> Self {
        Self(observed)
    }

    pub fn all(d_obs: usize) -> Self {
        Self(vec![true; d_obs])
    }

    /// Everything observed except `targets`.
    pub fn hiding(d_obs: usize, targets: &[usize]) -> Result<Self> {
        let mut m = vec![true; d_obs];
        for &t in targets {
            *m.get_mut(t).ok_or_else(|| {
                Error::input(format!("target column {t} out of range for {d_obs} columns"))
            })? = false;
        }
        Ok(Self(m))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_observed(&self, d: usize) -> bool {
        self.0[d]
    }

    pub fn observed_count(&self) -> usize {
        self.0.iter().filter(|o| **o).count()
    }

    pub fn hidden(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&d| !self.0[d]).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Decoder plus a standard-normal prior on the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlvmModel {
    decoder: Decoder,
}

struct Eval {
    loglik: f64,
    dz: Vec<f64>,
    dtheta: Vec<f64>,
}

impl PlvmModel {
    pub fn new(decoder: Decoder) -> Result<Self> {
        let m = Self { decoder };
        m.validate()?;
        Ok(m)
    }

    pub fn linear(w: Matrix, b: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(Decoder::Linear { w, b, sigma })
    }

    pub fn mlp(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(Decoder::Mlp { w1, b1, w2, b2, sigma })
    }

    /// Small random weights, bias at `offset`, unit noise.
    pub fn init_linear(d_obs: usize, d_lv: usize, offset: &[f64], rng: &mut Rng) -> Result<Self> {
        let w = Matrix::random(d_obs, d_lv, 1.0 / (d_lv as f64).sqrt(), rng);
        Self::linear(w, offset.to_vec(), 1.0)
    }

    pub fn init_mlp(d_obs: usize, d_lv: usize, hidden: usize, offset: &[f64], rng: &mut Rng) -> Result<Self> {
        let w1 = Matrix::random(hidden, d_lv, 1.0 / (d_lv as f64).sqrt(), rng);
        let w2 = Matrix::random(d_obs, hidden, 1.0 / (hidden as f64).sqrt(), rng);
        Self::mlp(w1, vec![0.0; hidden], w2, offset.to_vec(), 1.0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn kind(&self) -> &'static str {
        match self.decoder {
            Decoder::Linear { .. } => "linear",
            Decoder::Mlp { .. } => "mlp",
        }
    }

    pub fn sigma(&self) -> f64 {
        match self.decoder {
            Decoder::Linear { sigma, .. } | Decoder::Mlp { sigma, .. } => sigma,
        }
    }

    pub fn d_obs(&self) -> usize {
        match &self.decoder {
            Decoder::Linear { w, .. } => w.rows(),
            Decoder::Mlp { w2, .. } => w2.rows(),
        }
    }

    pub fn d_lv(&self) -> usize {
        match &self.decoder {
            Decoder::Linear { w, .. } => w.cols(),
            Decoder::Mlp { w1, .. } => w1.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Model(format!("noise scale must be > 0, got {sigma}")));
        }
        let (ok, what) = match &self.decoder {
            Decoder::Linear { w, b, .. } => (b.len() == w.rows(), "b must have one entry per row of W"),
            Decoder::Mlp { w1, b1, w2, b2, .. } => (
                b1.len() == w1.rows() && w2.cols() == w1.rows() && b2.len() == w2.rows(),
                "MLP layer shapes are inconsistent",
            ),
        };
        if !ok {
            return Err(Error::Model(what.into()));
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("model parameters must be finite".into()));
        }
        Ok(())
    }

    /// Flat parameter vector: matrices row-major, then biases, layer by
    /// layer, with log σ last.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        match &self.decoder {
            Decoder::Linear { w, b, sigma } => {
                out.extend_from_slice(w.as_slice());
                out.extend_from_slice(b);
                out.push(sigma.ln());
            }
            Decoder::Mlp { w1, b1, w2, b2, sigma } => {
                out.extend_from_slice(w1.as_slice());
                out.extend_from_slice(b1);
                out.extend_from_slice(w2.as_slice());
                out.extend_from_slice(b2);
                out.push(sigma.ln());
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        match &self.decoder {
            Decoder::Linear { w, b, .. } => w.as_slice().len() + b.len() + 1,
            Decoder::Mlp { w1, b1, w2, b2, .. } => {
                w1.as_slice().len() + b1.len() + w2.as_slice().len() + b2.len() + 1
            }
        }
    }

    /// Same architecture with parameters taken from a [`params`](Self::params) layout.
    pub fn with_params(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.num_params() {
            return Err(Error::input(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        let mut rest = theta;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let decoder = match &self.decoder {
            Decoder::Linear { w, b, .. } => Decoder::Linear {
                w: Matrix::from_row_major(w.rows(), w.cols(), take(w.as_slice().len()))?,
                b: take(b.len()),
                sigma: take(1)[0].exp(),
            },
            Decoder::Mlp { w1, b1, w2, b2, .. } => Decoder::Mlp {
                w1: Matrix::from_row_major(w1.rows(), w1.cols(), take(w1.as_slice().len()))?,
                b1: take(b1.len()),
                w2: Matrix::from_row_major(w2.rows(), w2.cols(), take(w2.as_slice().len()))?,
                b2: take(b2.len()),
                sigma: take(1)[0].exp(),
            },
        };
        Self::new(decoder)
    }

    pub fn with_sigma(&self, s: f64) -> Result<Self> {
        let mut decoder = self.decoder.clone();
        match &mut decoder {
            Decoder::Linear { sigma, .. } | Decoder::Mlp { sigma, .. } => *sigma = s,
        }
        Self::new(decoder)
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        match &self.decoder {
            Decoder::Linear { w, b, .. } => w.mul_vec_add(z, b),
            Decoder::Mlp { w1, b1, w2, b2, .. } => {
                let h: Vec<f64> = w1.mul_vec_add(z, b1).into_iter().map(f64::tanh).collect();
                w2.mul_vec_add(&h, b2)
            }
        }
    }

    /// Upper bound on the curvature of −log p(z|x) in z (exact for the
    /// linear decoder, a product of Frobenius norms for the MLP).
    pub fn stiffness(&self) -> f64 {
        let fro2 = |m: &Matrix| m.as_slice().iter().map(|v| v * v).sum::<f64>();
        let s2 = self.sigma().powi(2);
        match &self.decoder {
            Decoder::Linear { w, .. } => {
                let wt = nalgebra::DMatrix::from_row_slice(w.rows(), w.cols(), w.as_slice());
                let g = wt.transpose() * &wt;
                let top = g.symmetric_eigenvalues().max();
                1.0 + top / s2
            }
            Decoder::Mlp { w1, w2, .. } => 1.0 + fro2(w1) * fro2(w2) / s2,
        }
    }

    fn check(&self, x: &[f64], z: &[f64], mask: Option<&ObservationMask>) -> Result<()> {
        if x.len() != self.d_obs() {
            return Err(Error::input(format!(
                "observation has {} entries, model expects {}",
                x.len(),
                self.d_obs()
            )));
        }
        if z.len() != self.d_lv() {
            return Err(Error::input(format!(
                "latent point has {} entries, model expects {}",
                z.len(),
                self.d_lv()
            )));
        }
        if let Some(m) = mask {
            if m.len() != x.len() {
                return Err(Error::input(format!(
                    "mask has {} entries, observation has {}",
                    m.len(),
                    x.len()
                )));
            }
        }
        Ok(())
    }

    // Log-likelihood over observed dims, with optional gradients.
    fn eval(&self, x: &[f64], z: &[f64], mask: Option<&ObservationMask>, dz: bool, dtheta: bool) -> Eval {
        let seen = |d: usize| mask.is_none_or(|m| m.is_observed(d));
        let sigma = self.sigma();
        let s2 = sigma * sigma;
        let d_obs = self.d_obs();
        let mut out = Eval {
            loglik: 0.0,
            dz: if dz { vec![0.0; z.len()] } else { Vec::new() },
            dtheta: if dtheta { Vec::with_capacity(self.num_params()) } else { Vec::new() },
        };
        let (y, hidden) = match &self.decoder {
            Decoder::Linear { w, b, .. } => (w.mul_vec_add(z, b), None),
            Decoder::Mlp { w1, b1, w2, b2, .. } => {
                let h: Vec<f64> = w1.mul_vec_add(z, b1).into_iter().map(f64::tanh).collect();
                (w2.mul_vec_add(&h, b2), Some(h))
            }
        };
        // g = ∂loglik/∂y, zero on hidden dims
        let mut g = vec![0.0; d_obs];
        let mut sq = 0.0;
        let mut n_obs = 0usize;
        for d in 0..d_obs {
            if seen(d) {
                let r = x[d] - y[d];
                sq += r * r;
                g[d] = r / s2;
                n_obs += 1;
            }
        }
        let n = n_obs as f64;
        out.loglik = -0.5 * n * LN_2PI - n * sigma.ln() - 0.5 * sq / s2;
        let dlog_sigma = -n + sq / s2;

        match &self.decoder {
            Decoder::Linear { w, .. } => {
                if dz {
                    for (d, gd) in g.iter().enumerate() {
                        for (o, wv) in out.dz.iter_mut().zip(w.row(d)) {
                            *o += wv * gd;
                        }
                    }
                }
                if dtheta {
                    for gd in &g {
                        out.dtheta.extend(z.iter().map(|zj| gd * zj));
                    }
                    out.dtheta.extend_from_slice(&g);
                    out.dtheta.push(dlog_sigma);
                }
            }
            Decoder::Mlp { w1, w2, .. } => {
                let h = hidden.expect("mlp forward pass");
                // δ = ∂loglik/∂(pre-activation)
                let delta: Vec<f64> = (0..h.len())
                    .map(|k| (1.0 - h[k] * h[k]) * (0..d_obs).map(|d| w2.get(d, k) * g[d]).sum::<f64>())
                    .collect();
                if dz {
                    for (k, dk) in delta.iter().enumerate() {
                        for (o, wv) in out.dz.iter_mut().zip(w1.row(k)) {
                            *o += wv * dk;
                        }
                    }
                }
                if dtheta {
                    for dk in &delta {
                        out.dtheta.extend(z.iter().map(|zj| dk * zj));
                    }
                    out.dtheta.extend_from_slice(&delta);
                    for gd in &g {
                        out.dtheta.extend(h.iter().map(|hk| gd * hk));
                    }
                    out.dtheta.extend_from_slice(&g);
                    out.dtheta.push(dlog_sigma);
                }
            }
        }
        out
    }
}

/// log N(x | decode(z), σ²I), normalization included.
pub fn loglik(m: &PlvmModel, x: &[f64], z: &[f64]) -> Result<f64> {
    loglik_masked(m, x, z, None)
}

/// Log-likelihood restricted to the observed dimensions of `mask`.
pub fn loglik_masked(m: &PlvmModel, x: &[f64], z: &[f64], mask: Option<&ObservationMask>) -> Result<f64> {
    m.check(x, z, mask)?;
    Ok(m.eval(x, z, mask, false, false).loglik)
}

/// ∇_z [log N(z|0,I) + log p(x_obs|z)].
pub fn posterior_score(m: &PlvmModel, x: &[f64], z: &[f64], mask: Option<&ObservationMask>) -> Result<Point> {
    m.check(x, z, mask)?;
    let mut s = m.eval(x, z, mask, true, false).dz;
    for (o, zj) in s.iter_mut().zip(z) {
        *o -= zj;
    }
    Point::new(s)
}

/// Gradient of [`loglik`] in the [`PlvmModel::params`] layout (σ as log σ).
pub fn grad_theta_loglik(m: &PlvmModel, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    m.check(x, z, None)?;
    Ok(m.eval(x, z, None, false, true).dtheta)
}

/// The unnormalized posterior p(z|x) ∝ N(z|0,I) p(x_obs|z) as a flow target.
#[derive(Debug, Clone)]
pub struct PosteriorTarget<'a> {
    model: &'a PlvmModel,
    x: &'a [f64],
    mask: Option<&'a ObservationMask>,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(model: &'a PlvmModel, x: &'a [f64], mask: Option<&'a ObservationMask>) -> Result<Self> {
        model.check(x, &vec![0.0; model.d_lv()], mask)?;
        Ok(Self { model, x, mask })
    }
}

impl Density for PosteriorTarget<'_> {
    fn name(&self) -> &str {
        "posterior"
    }

    fn dim(&self) -> usize {
        self.model.d_lv()
    }

    fn log_density_unnorm(&self, z: &[f64]) -> f64 {
        let prior = -0.5 * z.iter().map(|v| v * v).sum::<f64>();
        prior + self.model.eval(self.x, z, self.mask, false, false).loglik
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) {
        let e = self.model.eval(self.x, z, self.mask, true, false);
        for ((o, g), zj) in out.iter_mut().zip(e.dz).zip(z) {
            *o = g - zj;
        }
    }
}
