//! Argument regressor: one small MLP head per filter, optionally conditioned on
//! embeddings of the previously predicted arguments.
//!
//! Each head computes `θ_i = tanh(w2 · tanh(W1 x + b1) + b2)`. In cascade mode
//! head `i` sees `x = [Z ; e_1 θ_1 ; … ; e_{i−1} θ_{i−1}]` where `e_j` is a
//! learned embedding vector; in multihead mode every head sees `Z` alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::pipeline::ArgVector;
use crate::regressor::features::{FeatureVector, FEATURE_DIM};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_EMBED_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegressorMode {
    #[default]
    Cascade,
    Multihead,
}

impl std::str::FromStr for RegressorMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cascade" => Ok(Self::Cascade),
            "multihead" | "multi-head" => Ok(Self::Multihead),
            _ => Err(domain!("unknown regressor mode {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            feature_dim: FEATURE_DIM,
            hidden: DEFAULT_HIDDEN,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

/// One regression head. `w1` is `hidden × input_dim`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub input_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Head {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            w1: vec![0.0; hidden * input_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    fn hidden(&self) -> usize {
        self.b1.len()
    }

    /// Returns `(hidden activations, output)`.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let h: Vec<f64> = self
            .w1
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, b)| (b + dot(row, x)).tanh())
            .collect();
        let out = (self.b2 + dot(&self.w2, &h)).tanh();
        (h, out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub schema_version: u32,
    pub mode: RegressorMode,
    pub shape: ModelShape,
    pub heads: Vec<Head>,
    /// Argument embeddings `e_1 … e_{k−1}`; empty in multihead mode.
    pub embeddings: Vec<Vec<f64>>,
}

/// Intermediate values of one forward pass, consumed by
/// [`RegressorModel::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl ForwardCache {
    pub fn args(&self) -> ArgVector {
        ArgVector::clamped(self.outputs.clone())
    }
}

impl RegressorModel {
    /// All weights zero: predicts θ = 0.
    pub fn zeros(mode: RegressorMode, k: usize, shape: ModelShape) -> Self {
        let heads = (0..k)
            .map(|i| Head::zeros(Self::head_input_dim(mode, shape, i), shape.hidden))
            .collect();
        let n_embed = match mode {
            RegressorMode::Cascade => k.saturating_sub(1),
            RegressorMode::Multihead => 0,
        };
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            mode,
            shape,
            heads,
            embeddings: vec![vec![0.0; shape.embed_dim]; n_embed],
        }
    }

    /// Seeded Glorot-uniform hidden layers, small output layers (so the
    /// initial prediction stays close to the identity) and unit-scale
    /// embeddings.
    pub fn init(mode: RegressorMode, k: usize, shape: ModelShape, seed: u64) -> Self {
        let mut m = Self::zeros(mode, k, shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for head in &mut m.heads {
            let a = (6.0 / (head.input_dim + shape.hidden) as f64).sqrt();
            head.w1.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
            let a = 0.1 / (shape.hidden as f64).sqrt();
            head.w2.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        }
        for e in &mut m.embeddings {
            e.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        }
        m
    }

    pub fn head_input_dim(mode: RegressorMode, shape: ModelShape, index: usize) -> usize {
        match mode {
            RegressorMode::Cascade => shape.feature_dim + shape.embed_dim * index,
            RegressorMode::Multihead => shape.feature_dim,
        }
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(domain!(
                "model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let k = self.k();
        if k == 0 {
            return Err(domain!("model has no heads"));
        }
        let s = self.shape;
        for (i, h) in self.heads.iter().enumerate() {
            let want = Self::head_input_dim(self.mode, s, i);
            if h.input_dim != want
                || h.w1.len() != s.hidden * want
                || h.b1.len() != s.hidden
                || h.w2.len() != s.hidden
            {
                return Err(domain!("head {i} has inconsistent shape"));
            }
        }
        let n_embed = match self.mode {
            RegressorMode::Cascade => k - 1,
            RegressorMode::Multihead => 0,
        };
        if self.embeddings.len() != n_embed
            || self.embeddings.iter().any(|e| e.len() != s.embed_dim)
        {
            return Err(domain!("embedding shapes do not match the model mode"));
        }
        if self.params().any(|w| !w.is_finite()) {
            return Err(domain!("model contains non-finite weights"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn forward(&self, z: &FeatureVector) -> Result<ForwardCache> {
        if z.values().len() != self.shape.feature_dim {
            return Err(domain!(
                "feature vector has {} entries, model expects {}",
                z.values().len(),
                self.shape.feature_dim
            ));
        }
        let k = self.k();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(k),
            hidden: Vec::with_capacity(k),
            outputs: Vec::with_capacity(k),
        };
        let mut x = z.values().to_vec();
        for (i, head) in self.heads.iter().enumerate() {
            let (h, theta) = head.forward(&x);
            cache.hidden.push(h);
            cache.outputs.push(theta);
            if self.mode == RegressorMode::Cascade && i + 1 < k {
                let mut next = x.clone();
                next.extend(self.embeddings[i].iter().map(|e| e * theta));
                cache.inputs.push(std::mem::replace(&mut x, next));
            } else {
                cache.inputs.push(x.clone());
            }
        }
        Ok(cache)
    }

    fn ensure_mode(&self, mode: RegressorMode) -> Result<()> {
        if self.mode != mode {
            return Err(domain!("model is in {:?} mode, not {mode:?}", self.mode));
        }
        Ok(())
    }

    pub fn predict(&self, z: &FeatureVector) -> Result<ArgVector> {
        Ok(self.forward(z)?.args())
    }

    pub fn predict_multihead(&self, z: &FeatureVector) -> Result<ArgVector> {
        self.ensure_mode(RegressorMode::Multihead)?;
        self.predict(z)
    }

    pub fn predict_cascade(&self, z: &FeatureVector) -> Result<ArgVector> {
        self.ensure_mode(RegressorMode::Cascade)?;
        self.predict(z)
    }

    /// Gradient of a scalar loss with respect to every weight, given
    /// `dL/dθ_i` for each head output. Returned in the model's own layout.
    pub fn backward(&self, cache: &ForwardCache, d_theta: &[f64]) -> Result<RegressorModel> {
        let k = self.k();
        if d_theta.len() != k || cache.outputs.len() != k {
            return Err(domain!("{} output gradients for {k} heads", d_theta.len()));
        }
        let mut grad = Self::zeros(self.mode, k, self.shape);
        let mut g_theta = d_theta.to_vec();
        let d = self.shape.feature_dim;
        let e = self.shape.embed_dim;
        for i in (0..k).rev() {
            let head = &self.heads[i];
            let gh = &mut grad.heads[i];
            let (x, h, theta) = (&cache.inputs[i], &cache.hidden[i], cache.outputs[i]);
            let g_pre = g_theta[i] * (1.0 - theta * theta);
            if g_pre == 0.0 {
                continue;
            }
            gh.b2 = g_pre;
            let mut gx = vec![0.0; head.input_dim];
            for j in 0..head.hidden() {
                gh.w2[j] = g_pre * h[j];
                let gz = g_pre * head.w2[j] * (1.0 - h[j] * h[j]);
                gh.b1[j] = gz;
                let row = j * head.input_dim;
                for (t, (gw, &xv)) in gh.w1[row..row + head.input_dim].iter_mut().zip(x).enumerate()
                {
                    *gw = gz * xv;
                    gx[t] += gz * head.w1[row + t];
                }
            }
            if self.mode == RegressorMode::Cascade {
                for jj in 0..i {
                    let slice = &gx[d + e * jj..d + e * (jj + 1)];
                    let theta_j = cache.outputs[jj];
                    for (ge, &g) in grad.embeddings[jj].iter_mut().zip(slice) {
                        *ge += g * theta_j;
                    }
                    g_theta[jj] += dot(slice, &self.embeddings[jj]);
                }
            }
        }
        Ok(grad)
    }

    /// All weights in a fixed order: per head `w1, b1, w2, b2`, then the
    /// embeddings.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.heads
            .iter()
            .flat_map(|h| {
                h.w1.iter()
                    .chain(&h.b1)
                    .chain(&h.w2)
                    .chain(std::iter::once(&h.b2))
            })
            .chain(self.embeddings.iter().flatten())
            .copied()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.heads
            .iter_mut()
            .flat_map(|h| {
                h.w1.iter_mut()
                    .chain(h.b1.iter_mut())
                    .chain(h.w2.iter_mut())
                    .chain(std::iter::once(&mut h.b2))
            })
            .chain(self.embeddings.iter_mut().flatten())
    }

    pub fn param_count(&self) -> usize {
        self.params().count()
    }

    /// `self += scale · other`, where `other` has the same layout.
    pub fn add_scaled(&mut self, scale: f64, other: &RegressorModel) {
        for (w, g) in self.params_mut().zip(other.params()) {
            *w += scale * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(seed: u64) -> FeatureVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureVector((0..FEATURE_DIM).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    #[test]
    fn zero_model_predicts_identity() {
        for mode in [RegressorMode::Cascade, RegressorMode::Multihead] {
            let m = RegressorModel::zeros(mode, 6, ModelShape::default());
            assert_eq!(m.predict(&features(0)).unwrap(), ArgVector::zeros(6));
        }
    }

    #[test]
    fn head_widths_follow_mode() {
        let s = ModelShape::default();
        let c = RegressorModel::zeros(RegressorMode::Cascade, 6, s);
        let widths: Vec<_> = c.heads.iter().map(|h| h.input_dim).collect();
        assert_eq!(widths, vec![44, 52, 60, 68, 76, 84]);
        assert_eq!(c.embeddings.len(), 5);
        let m = RegressorModel::zeros(RegressorMode::Multihead, 6, s);
        assert!(m.heads.iter().all(|h| h.input_dim == 44));
        assert!(m.embeddings.is_empty());
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let c = RegressorModel::init(RegressorMode::Cascade, 3, ModelShape::default(), 1);
        assert!(c.predict_multihead(&features(1)).is_err());
        assert!(c.predict_cascade(&features(1)).is_ok());
    }

    #[test]
    fn multihead_heads_are_independent() {
        let m = RegressorModel::init(RegressorMode::Multihead, 4, ModelShape::default(), 5);
        let z = features(2);
        let theta = m.predict_multihead(&z).unwrap();
        let mut swapped = m.clone();
        swapped.heads.swap(0, 3);
        let t2 = swapped.predict_multihead(&z).unwrap();
        assert_eq!(t2.values()[0], theta.values()[3]);
        assert_eq!(t2.values()[3], theta.values()[0]);
        assert_eq!(t2.values()[1], theta.values()[1]);
    }

    #[test]
    fn zeroed_embeddings_reduce_cascade_to_multihead() {
        let shape = ModelShape::default();
        let mut c = RegressorModel::init(RegressorMode::Cascade, 6, shape, 7);
        c.embeddings.iter_mut().flatten().for_each(|e| *e = 0.0);
        let mut m = RegressorModel::zeros(RegressorMode::Multihead, 6, shape);
        for (mh, ch) in m.heads.iter_mut().zip(&c.heads) {
            for j in 0..shape.hidden {
                let src = &ch.w1[j * ch.input_dim..j * ch.input_dim + shape.feature_dim];
                mh.w1[j * shape.feature_dim..(j + 1) * shape.feature_dim].copy_from_slice(src);
            }
            mh.b1.clone_from(&ch.b1);
            mh.w2.clone_from(&ch.w2);
            mh.b2 = ch.b2;
        }
        let z = features(3);
        assert_eq!(c.predict_cascade(&z).unwrap(), m.predict_multihead(&z).unwrap());
    }

    #[test]
    fn cascade_dataflow() {
        let c = RegressorModel::init(RegressorMode::Cascade, 4, ModelShape::default(), 9);
        let z = features(4);
        let base = c.predict(&z).unwrap();
        let mut last = c.clone();
        last.heads[3].b2 += 0.3;
        let t = last.predict(&z).unwrap();
        assert_eq!(&t.values()[..3], &base.values()[..3]);
        assert_ne!(t.values()[3], base.values()[3]);

        let mut z2 = z.clone();
        z2.0[0] += 0.5;
        let t = c.predict(&z2).unwrap();
        assert!(t.values().iter().zip(base.values()).all(|(a, b)| a != b));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let c = RegressorModel::init(RegressorMode::Cascade, 3, ModelShape::default(), 2);
        let back = RegressorModel::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let mut broken = c.clone();
        broken.heads[1].w1.pop();
        assert!(RegressorModel::from_json(&serde_json::to_string(&broken).unwrap()).is_err());
        let mut old = c;
        old.schema_version = 0;
        assert!(RegressorModel::from_json(&serde_json::to_string(&old).unwrap()).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let shape = ModelShape { feature_dim: FEATURE_DIM, hidden: 5, embed_dim: 3 };
        for mode in [RegressorMode::Cascade, RegressorMode::Multihead] {
            let m = RegressorModel::init(mode, 3, shape, 21);
            let z = features(6);
            let weights = [0.7, -1.3, 0.4];
            let loss = |m: &RegressorModel| -> f64 {
                m.predict(&z).unwrap().values().iter().zip(weights).map(|(t, w)| t * w).sum()
            };
            let cache = m.forward(&z).unwrap();
            let grad = m.backward(&cache, &weights).unwrap();
            let analytic: Vec<f64> = grad.params().collect();
            let h = 1e-6;
            for idx in (0..m.param_count()).step_by(7) {
                let mut p = m.clone();
                *p.params_mut().nth(idx).unwrap() += h;
                let mut q = m.clone();
                *q.params_mut().nth(idx).unwrap() -= h;
                let fd = (loss(&p) - loss(&q)) / (2.0 * h);
                assert!((fd - analytic[idx]).abs() < 1e-8, "{mode:?} param {idx}");
            }
        }
    }
}
