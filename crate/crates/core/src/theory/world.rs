//! Synthetic linear worlds: `x = G* z + xi` with orthonormal maps.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Random stream that holds the ground-truth maps; samples use other streams.
const MAP_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    /// Diagonal `D` in `z^l = normalize(D w + eta u)`.
    pub sigma_spec: Vec<f64>,
    /// Per-coordinate scale of `w`; ones give isotropic latents.
    pub latent_scale: Vec<f64>,
    pub noise_v: f64,
    pub noise_l: f64,
    pub eta: f64,
    pub seed: u64,
}

impl WorldConfig {
    /// `D = I`, isotropic latents, noise `1/sqrt(d)` on both sides, `eta = 0`.
    pub fn new(d: usize, r: usize, n: usize, seed: u64) -> Self {
        let noise = 1.0 / (d as f64).sqrt();
        WorldConfig { d, r, n, sigma_spec: vec![1.0; r], latent_scale: vec![1.0; r], noise_v: noise, noise_l: noise, eta: 0.0, seed }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_v = sigma;
        self.noise_l = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.r < 1 || self.r > self.d {
            return bad(format!("need 1 <= r <= d, got r={} d={}", self.r, self.d));
        }
        if self.n < 2 {
            return bad(format!("need n >= 2, got {}", self.n));
        }
        if self.sigma_spec.len() != self.r || self.latent_scale.len() != self.r {
            return bad(format!("sigma_spec and latent_scale must have length r={}", self.r));
        }
        if self.sigma_spec.iter().chain(&self.latent_scale).any(|s| !s.is_finite() || *s < 0.0) {
            return bad("sigma_spec and latent_scale entries must be finite and nonnegative".into());
        }
        if !(self.noise_v >= 0.0 && self.noise_l >= 0.0 && self.eta >= 0.0)
            || !(self.noise_v.is_finite() && self.noise_l.is_finite() && self.eta.is_finite())
        {
            return bad("noise scales and eta must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Latents, noise and observations for `n` pairs; rows are samples.
#[derive(Debug, Clone)]
pub struct Sample {
    pub z_v: DMatrix<f64>,
    pub z_l: DMatrix<f64>,
    pub xi_v: DMatrix<f64>,
    pub xi_l: DMatrix<f64>,
    pub x_v: DMatrix<f64>,
    pub x_l: DMatrix<f64>,
}

impl Sample {
    pub fn n(&self) -> usize {
        self.z_v.nrows()
    }

    pub fn pairs(&self) -> Pairs {
        Pairs { v: self.x_v.clone(), l: self.x_l.clone() }
    }

    pub fn latent_pairs(&self) -> Pairs {
        Pairs { v: self.z_v.clone(), l: self.z_l.clone() }
    }

    pub fn subset(&self, idx: &[usize]) -> Sample {
        Sample {
            z_v: self.z_v.select_rows(idx),
            z_l: self.z_l.select_rows(idx),
            xi_v: self.xi_v.select_rows(idx),
            xi_l: self.xi_l.select_rows(idx),
            x_v: self.x_v.select_rows(idx),
            x_l: self.x_l.select_rows(idx),
        }
    }
}

/// Row-aligned vision/language observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairs {
    pub v: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl Pairs {
    pub fn new(v: DMatrix<f64>, l: DMatrix<f64>) -> Result<Self> {
        if v.shape() != l.shape() {
            return Err(Error::ShapeMismatch(format!("vision {:?} vs language {:?}", v.shape(), l.shape())));
        }
        Ok(Pairs { v, l })
    }

    pub fn len(&self) -> usize {
        self.v.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.v.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn subset(&self, idx: &[usize]) -> Pairs {
        Pairs { v: self.v.select_rows(idx), l: self.l.select_rows(idx) }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub g_v: DMatrix<f64>,
    pub g_l: DMatrix<f64>,
    /// Realized empirical latent cross-covariance diagonal of the training sample.
    pub sigma_train: Vec<f64>,
    pub train: Sample,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn orthonormal_map(rng: &mut ChaCha8Rng, d: usize, r: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, r, |_, _| gaussian(rng));
    let qr = a.qr();
    let (mut q, rr) = (qr.q(), qr.r());
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v[0] = 1.0;
    }
}

pub fn generate_world(config: &WorldConfig) -> Result<SyntheticWorld> {
    config.validate()?;
    let mut rng = rng_for(config.seed, MAP_STREAM);
    let g_v = orthonormal_map(&mut rng, config.d, config.r);
    let g_l = orthonormal_map(&mut rng, config.d, config.r);
    let mut world = SyntheticWorld {
        config: config.clone(),
        train: Sample {
            z_v: DMatrix::zeros(0, config.r),
            z_l: DMatrix::zeros(0, config.r),
            xi_v: DMatrix::zeros(0, config.d),
            xi_l: DMatrix::zeros(0, config.d),
            x_v: DMatrix::zeros(0, config.d),
            x_l: DMatrix::zeros(0, config.d),
        },
        g_v,
        g_l,
        sigma_train: Vec::new(),
    };
    world.train = world.draw(config, config.n, TRAIN_STREAM);
    let cross = world.train.z_v.transpose() * &world.train.z_l / config.n as f64;
    world.sigma_train = cross.diagonal().iter().copied().collect();
    Ok(world)
}

impl SyntheticWorld {
    /// Fresh pairs from this world's maps under a possibly different latent
    /// law (`config.d`, `config.r` must match). Distinct `stream`s give
    /// independent samples; stream 1 reproduces the training sample.
    pub fn sample_with(&self, config: &WorldConfig, n: usize, stream: u64) -> Result<Sample> {
        config.validate()?;
        if config.d != self.config.d || config.r != self.config.r {
            return Err(Error::ShapeMismatch("sampling config must share d and r with the world".into()));
        }
        if stream == MAP_STREAM {
            return Err(Error::InvalidParameter("stream 0 is reserved for the maps".into()));
        }
        Ok(self.draw(config, n, stream))
    }

    pub fn sample(&self, n: usize, stream: u64) -> Result<Sample> {
        self.sample_with(&self.config, n, stream)
    }

    fn draw(&self, c: &WorldConfig, n: usize, stream: u64) -> Sample {
        let (d, r) = (c.d, c.r);
        let mut rng = rng_for(c.seed, stream);
        let mut z_v = DMatrix::zeros(n, r);
        let mut z_l = DMatrix::zeros(n, r);
        let mut xi_v = DMatrix::zeros(n, d);
        let mut xi_l = DMatrix::zeros(n, d);
        let mut w = vec![0.0; r];
        let mut zl = vec![0.0; r];
        for i in 0..n {
            for k in 0..r {
                w[k] = c.latent_scale[k] * gaussian(&mut rng);
            }
            for k in 0..r {
                zl[k] = c.sigma_spec[k] * w[k] + c.eta * gaussian(&mut rng);
            }
            normalize(&mut w);
            normalize(&mut zl);
            for k in 0..r {
                z_v[(i, k)] = w[k];
                z_l[(i, k)] = zl[k];
            }
            for k in 0..d {
                xi_v[(i, k)] = c.noise_v * gaussian(&mut rng);
            }
            for k in 0..d {
                xi_l[(i, k)] = c.noise_l * gaussian(&mut rng);
            }
        }
        let x_v = &z_v * self.g_v.transpose() + &xi_v;
        let x_l = &z_l * self.g_l.transpose() + &xi_l;
        Sample { z_v, z_l, xi_v, xi_l, x_v, x_l }
    }
}
