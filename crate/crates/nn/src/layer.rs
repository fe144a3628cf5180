use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Plain,
    Noisy,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Plain => "plain",
            LayerKind::Noisy => "noisy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(LayerKind::Plain),
            "noisy" => Some(LayerKind::Noisy),
            _ => None,
        }
    }
}

/// Affine layer `y = act((nu_w + sigma_w * eps_w)^T x + nu_b + sigma_b * eps_b)`.
///
/// Weights are stored `in_dim x out_dim` row-major. Plain layers keep the
/// sigma/eps vectors empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) kind: LayerKind,
    pub(crate) activation: Activation,
    pub(crate) nu_w: Vec<f64>,
    pub(crate) nu_b: Vec<f64>,
    pub(crate) sigma_w: Vec<f64>,
    pub(crate) sigma_b: Vec<f64>,
    pub(crate) eps_w: Vec<f64>,
    pub(crate) eps_b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    input: Matrix,
    output: Matrix,
    w_eff: Vec<f64>,
}

/// Gradient of one layer, laid out like [`DenseLayer::param_slices`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerGrad {
    pub nu_w: Vec<f64>,
    pub nu_b: Vec<f64>,
    pub sigma_w: Vec<f64>,
    pub sigma_b: Vec<f64>,
}

impl LayerCache {
    pub(crate) fn rows(&self) -> usize {
        self.input.rows()
    }
}

impl DenseLayer {
    pub(crate) fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        kind: LayerKind,
        activation: Activation,
        init_bound: Option<f64>,
        sigma_init: f64,
        rng: &mut R,
    ) -> Self {
        let bound = init_bound.unwrap_or(1.0 / (in_dim as f64).sqrt());
        let nu_w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let nu_b = (0..out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let (sigma_w, sigma_b, eps_w, eps_b) = match kind {
            LayerKind::Plain => (vec![], vec![], vec![], vec![]),
            LayerKind::Noisy => (
                vec![sigma_init; in_dim * out_dim],
                vec![sigma_init; out_dim],
                vec![0.0; in_dim * out_dim],
                vec![0.0; out_dim],
            ),
        };
        Self {
            in_dim,
            out_dim,
            kind,
            activation,
            nu_w,
            nu_b,
            sigma_w,
            sigma_b,
            eps_w,
            eps_b,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn nu_w(&self) -> &[f64] {
        &self.nu_w
    }

    pub fn sigma_w(&self) -> &[f64] {
        &self.sigma_w
    }

    pub fn eps_w(&self) -> &[f64] {
        &self.eps_w
    }

    pub fn eps_b(&self) -> &[f64] {
        &self.eps_b
    }

    /// Parameter arrays in a fixed order: nu_w, nu_b, then sigma_w, sigma_b
    /// for noisy layers.
    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.nu_w, &self.nu_b];
        if self.kind == LayerKind::Noisy {
            v.push(&self.sigma_w);
            v.push(&self.sigma_b);
        }
        v
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.nu_w, &mut self.nu_b];
        if self.kind == LayerKind::Noisy {
            v.push(&mut self.sigma_w);
            v.push(&mut self.sigma_b);
        }
        v
    }

    pub(crate) fn sample_noise<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for e in self.eps_w.iter_mut().chain(self.eps_b.iter_mut()) {
            *e = rng.sample(StandardNormal);
        }
    }

    /// Installs explicit noise values (noisy layers only).
    pub fn set_noise(&mut self, eps_w: &[f64], eps_b: &[f64]) -> crate::Result<()> {
        if eps_w.len() != self.eps_w.len() || eps_b.len() != self.eps_b.len() {
            return Err(crate::NnError::ShapeMismatch {
                context: "DenseLayer::set_noise",
                expected: self.eps_w.len() + self.eps_b.len(),
                got: eps_w.len() + eps_b.len(),
            });
        }
        self.eps_w.copy_from_slice(eps_w);
        self.eps_b.copy_from_slice(eps_b);
        Ok(())
    }

    pub(crate) fn clear_noise(&mut self) {
        self.eps_w.iter_mut().for_each(|e| *e = 0.0);
        self.eps_b.iter_mut().for_each(|e| *e = 0.0);
    }

    fn effective_weights(&self) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            LayerKind::Plain => (self.nu_w.clone(), self.nu_b.clone()),
            LayerKind::Noisy => {
                let w = self
                    .nu_w
                    .iter()
                    .zip(&self.sigma_w)
                    .zip(&self.eps_w)
                    .map(|((n, s), e)| n + s * e)
                    .collect();
                let b = self
                    .nu_b
                    .iter()
                    .zip(&self.sigma_b)
                    .zip(&self.eps_b)
                    .map(|((n, s), e)| n + s * e)
                    .collect();
                (w, b)
            }
        }
    }

    pub(crate) fn forward_one(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self.kind {
            LayerKind::Plain => {
                out.extend_from_slice(&self.nu_b);
                for (i, &xi) in x.iter().enumerate() {
                    let row = &self.nu_w[i * self.out_dim..(i + 1) * self.out_dim];
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += xi * w;
                    }
                }
            }
            LayerKind::Noisy => {
                out.extend(
                    self.nu_b
                        .iter()
                        .zip(&self.sigma_b)
                        .zip(&self.eps_b)
                        .map(|((n, s), e)| n + s * e),
                );
                for (i, &xi) in x.iter().enumerate() {
                    let span = i * self.out_dim..(i + 1) * self.out_dim;
                    let (n, s, e) = (
                        &self.nu_w[span.clone()],
                        &self.sigma_w[span.clone()],
                        &self.eps_w[span],
                    );
                    for (o, ((n, s), e)) in out.iter_mut().zip(n.iter().zip(s).zip(e)) {
                        *o += xi * (n + s * e);
                    }
                }
            }
        }
        for o in out.iter_mut() {
            *o = self.activation.apply(*o);
        }
    }

    pub(crate) fn forward_batch(&self, x: &Matrix) -> (Matrix, LayerCache) {
        let (w_eff, b_eff) = self.effective_weights();
        let mut out = Matrix::zeros(x.rows(), self.out_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let orow = out.row_mut(r);
            orow.copy_from_slice(&b_eff);
            for (i, &xi) in xr.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wrow = &w_eff[i * self.out_dim..(i + 1) * self.out_dim];
                for (o, w) in orow.iter_mut().zip(wrow) {
                    *o += xi * w;
                }
            }
            for o in orow.iter_mut() {
                *o = self.activation.apply(*o);
            }
        }
        let cache = LayerCache {
            input: x.clone(),
            output: out.clone(),
            w_eff,
        };
        (out, cache)
    }

    /// Returns the parameter gradient and the gradient with respect to the
    /// layer input.
    pub(crate) fn backward(&self, cache: &LayerCache, upstream: &Matrix) -> (LayerGrad, Matrix) {
        let batch = upstream.rows();
        let mut dz = upstream.clone();
        if self.activation != Activation::Identity {
            for (d, a) in dz.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
                *d *= self.activation.derivative_from_output(*a);
            }
        }
        let mut d_w = vec![0.0; self.in_dim * self.out_dim];
        let mut d_b = vec![0.0; self.out_dim];
        let mut d_x = Matrix::zeros(batch, self.in_dim);
        for r in 0..batch {
            let dzr = dz.row(r);
            for (db, g) in d_b.iter_mut().zip(dzr) {
                *db += g;
            }
            let xr = cache.input.row(r);
            let dxr = d_x.row_mut(r);
            for i in 0..self.in_dim {
                let span = i * self.out_dim..(i + 1) * self.out_dim;
                let xi = xr[i];
                if xi != 0.0 {
                    for (dw, g) in d_w[span.clone()].iter_mut().zip(dzr) {
                        *dw += xi * g;
                    }
                }
                dxr[i] = cache.w_eff[span]
                    .iter()
                    .zip(dzr)
                    .map(|(w, g)| w * g)
                    .sum();
            }
        }
        let (sigma_w, sigma_b) = match self.kind {
            LayerKind::Plain => (vec![], vec![]),
            LayerKind::Noisy => (
                d_w.iter().zip(&self.eps_w).map(|(g, e)| g * e).collect(),
                d_b.iter().zip(&self.eps_b).map(|(g, e)| g * e).collect(),
            ),
        };
        (
            LayerGrad {
                nu_w: d_w,
                nu_b: d_b,
                sigma_w,
                sigma_b,
            },
            d_x,
        )
    }
}
