use rand::Rng;

use crate::layer::{Activation, DenseLayer, LayerCache, LayerKind};
use crate::matrix::Matrix;
use crate::{NnError, Result};

/// Initial value of every noise-scale parameter in a noisy layer.
pub const DEFAULT_SIGMA_INIT: f64 = 0.017;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub kind: LayerKind,
    pub activation: Activation,
    /// Half-width of the uniform init for `nu`; `None` uses `1/sqrt(fan_in)`.
    pub init_bound: Option<f64>,
}

impl LayerSpec {
    pub fn new(out_dim: usize, kind: LayerKind, activation: Activation) -> Self {
        Self {
            out_dim,
            kind,
            activation,
            init_bound: None,
        }
    }

    pub fn with_init_bound(mut self, bound: f64) -> Self {
        self.init_bound = Some(bound);
        self
    }
}

/// Parameter gradients, one array per entry of [`Network::param_slices`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    arrays: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            arrays: net.param_slices().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    pub fn arrays(&self) -> &[Vec<f64>] {
        &self.arrays
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.arrays.iter().flatten().copied().collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.arrays
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.arrays.iter_mut().flatten().for_each(|g| *g *= k);
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let n = self.global_norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.iter().flatten().all(|g| g.is_finite())
    }
}

/// Feed-forward stack of dense (plain or noisy) layers.
#[derive(Debug, Clone)]
pub struct Network {
    input_dim: usize,
    layers: Vec<DenseLayer>,
    cache: Option<Vec<LayerCache>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

impl Network {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Self {
        Self::with_sigma_init(input_dim, specs, DEFAULT_SIGMA_INIT, rng)
    }

    pub fn with_sigma_init<R: Rng + ?Sized>(
        input_dim: usize,
        specs: &[LayerSpec],
        sigma_init: f64,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for s in specs {
            layers.push(DenseLayer::init(
                fan_in,
                s.out_dim,
                s.kind,
                s.activation,
                s.init_bound,
                sigma_init,
                rng,
            ));
            fan_in = s.out_dim;
        }
        Self {
            input_dim,
            layers,
            cache: None,
        }
    }

    pub(crate) fn from_layers(input_dim: usize, layers: Vec<DenseLayer>) -> Self {
        Self {
            input_dim,
            layers,
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.param_slices()).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.cache = None;
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Flat parameter vector (theta), ordered like [`Network::param_slices`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, theta: &[f64]) -> Result<()> {
        let count = self.param_count();
        if theta.len() != count {
            return Err(NnError::ShapeMismatch {
                context: "Network::set_flat_params",
                expected: count,
                got: theta.len(),
            });
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            let n = s.len();
            s.copy_from_slice(&theta[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn has_noise(&self) -> bool {
        self.layers.iter().any(|l| l.kind == LayerKind::Noisy)
    }

    /// Draws fresh i.i.d. standard-normal noise for every noisy parameter.
    pub fn sample_noise<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.cache = None;
        for l in &mut self.layers {
            l.sample_noise(rng);
        }
    }

    /// Zeroes all noise so the network acts with its mean parameters.
    pub fn clear_noise(&mut self) {
        self.cache = None;
        for l in &mut self.layers {
            l.clear_noise();
        }
    }

    /// Single-sample forward pass; does not touch the backward cache.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(NnError::ShapeMismatch {
                context: "Network::forward",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_one(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Batched forward pass without caching.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward_batch(&cur).0;
        }
        Ok(cur)
    }

    /// Batched forward pass that caches activations for [`Network::backward`].
    pub fn forward_batch(&mut self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let (out, c) = l.forward_batch(&cur);
            caches.push(c);
            cur = out;
        }
        self.cache = Some(caches);
        Ok(cur)
    }

    /// Back-propagates `upstream` (d loss / d output, one row per sample)
    /// through the cached forward pass. Returns parameter gradients summed
    /// over the batch and the gradient with respect to the input.
    pub fn backward(&self, upstream: &Matrix) -> Result<(Gradients, Matrix)> {
        let caches = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        if upstream.cols() != self.output_dim() {
            return Err(NnError::ShapeMismatch {
                context: "Network::backward (columns)",
                expected: self.output_dim(),
                got: upstream.cols(),
            });
        }
        let batch = caches.first().map_or(0, LayerCache::rows);
        if upstream.rows() != batch {
            return Err(NnError::ShapeMismatch {
                context: "Network::backward (rows)",
                expected: batch,
                got: upstream.rows(),
            });
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (l, c) in self.layers.iter().zip(caches).rev() {
            let (g, dx) = l.backward(c, &grad);
            per_layer.push((l.kind, g));
            grad = dx;
        }
        per_layer.reverse();
        let mut arrays = Vec::new();
        for (kind, g) in per_layer {
            arrays.push(g.nu_w);
            arrays.push(g.nu_b);
            if kind == LayerKind::Noisy {
                arrays.push(g.sigma_w);
                arrays.push(g.sigma_b);
            }
        }
        Ok((Gradients { arrays }, grad))
    }

    /// Soft update: `self <- tau * online + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, online: &Network, tau: f64) -> Result<()> {
        let src = online.param_slices();
        let count = self.param_count();
        if online.param_count() != count {
            return Err(NnError::ShapeMismatch {
                context: "Network::soft_update_from",
                expected: count,
                got: online.param_count(),
            });
        }
        for (dst, s) in self.param_slices_mut().into_iter().zip(src) {
            for (d, o) in dst.iter_mut().zip(s) {
                *d = tau * o + (1.0 - tau) * *d;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(NnError::ShapeMismatch {
                context: "Network::forward_batch",
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        Ok(())
    }
}

