//! Seeded Gaussian return samples and their moment estimates.
//!
//! Every trial owns an independent ChaCha8 stream keyed by a hash of
//! `(master_seed, stream, trial_index)`, so a sample depends only on its
//! seed and never on scheduling. Uniforms are turned into normal deviates
//! pairwise with the Box–Muller transform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{cholesky, dot, CholeskyFactor, CovMatrix};
use crate::risk::{MomentParams, Origin};

/// Identifies one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    /// Grid cell (or other sub-experiment) index.
    pub stream: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            stream: 0,
            trial_index,
        }
    }

    pub fn with_stream(master_seed: u64, stream: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            stream,
            trial_index,
        }
    }

    /// ChaCha8 key derived by chained SplitMix64 finalization.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = splitmix64(self.master_seed);
        state = splitmix64(state ^ self.stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
        state = splitmix64(state ^ self.trial_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on the open interval (0, 1) with 53 random bits.
#[inline]
fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with standard normal deviates.
pub fn fill_standard_normal(rng: &mut impl RngCore, out: &mut [f64]) {
    let mut pairs = out.chunks_exact_mut(2);
    for pair in &mut pairs {
        let (a, b) = box_muller(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = pairs.into_remainder() {
        *last = box_muller(rng).0;
    }
}

#[inline]
fn box_muller(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = open_uniform(rng);
    let u2 = open_uniform(rng);
    let radius = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (radius * c, radius * s)
}

/// An `N × T` matrix of returns, stored asset-major: row `i` holds the `T`
/// observations of asset `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSample {
    n_assets: usize,
    n_obs: usize,
    data: Vec<f64>,
    seed: SeedSpec,
}

impl ReturnSample {
    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Observations of asset `i`.
    pub fn asset(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_obs..(i + 1) * self.n_obs]
    }

    /// Adds `shift[i]` to every observation of asset `i`.
    pub fn shift_means(&mut self, shift: &[f64]) {
        assert_eq!(shift.len(), self.n_assets);
        for (row, &s) in self.data.chunks_exact_mut(self.n_obs).zip(shift) {
            if s != 0.0 {
                row.iter_mut().for_each(|x| *x += s);
            }
        }
    }

    /// Builds a sample from explicit data (asset-major).
    pub fn from_data(n_assets: usize, n_obs: usize, data: Vec<f64>) -> Result<Self> {
        if n_assets == 0 || data.len() != n_assets * n_obs {
            return Err(domain(format!(
                "sample data of length {} does not match {n_assets}×{n_obs}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(domain("sample contains non-finite values"));
        }
        Ok(Self {
            n_assets,
            n_obs,
            data,
            seed: SeedSpec::new(0, 0),
        })
    }
}

fn check_dims(n_assets: usize, n_obs: usize) -> Result<()> {
    if n_assets == 0 {
        return Err(domain("need at least one asset"));
    }
    if n_obs < 2 {
        return Err(domain(format!(
            "need at least two observations, got {n_obs}"
        )));
    }
    Ok(())
}

/// iid standard normal returns.
pub fn gen_iid_sample(n_assets: usize, n_obs: usize, seed: SeedSpec) -> Result<ReturnSample> {
    check_dims(n_assets, n_obs)?;
    let mut data = vec![0.0; n_assets * n_obs];
    fill_standard_normal(&mut seed.rng(), &mut data);
    Ok(ReturnSample {
        n_assets,
        n_obs,
        data,
        seed,
    })
}

/// Zero-mean returns with covariance `sigma`: each observation vector is
/// `D x` for the Cholesky factor `D` and iid standard normal `x`.
pub fn gen_correlated_sample(
    n_assets: usize,
    n_obs: usize,
    sigma: &CovMatrix,
    seed: SeedSpec,
) -> Result<ReturnSample> {
    check_dims(n_assets, n_obs)?;
    if sigma.dim() != n_assets {
        return Err(crate::Error::Shape {
            expected: n_assets,
            actual: sigma.dim(),
        });
    }
    let factor = cholesky(sigma)?;
    gen_with_factor(&factor, n_obs, seed)
}

/// Like [`gen_correlated_sample`] with a precomputed factor.
pub fn gen_with_factor(
    factor: &CholeskyFactor,
    n_obs: usize,
    seed: SeedSpec,
) -> Result<ReturnSample> {
    let mut sample = gen_iid_sample(factor.dim(), n_obs, seed)?;
    let n = factor.dim();
    let x = &sample.data;
    let mut y = vec![0.0; n * n_obs];
    // Row i of Y is Σ_j D_ij · (row j of X).
    for i in 0..n {
        let target = &mut y[i * n_obs..(i + 1) * n_obs];
        for (j, &d) in factor.row(i).iter().enumerate() {
            let src = &x[j * n_obs..(j + 1) * n_obs];
            for (t, s) in target.iter_mut().zip(src) {
                *t += d * s;
            }
        }
    }
    sample.data = y;
    Ok(sample)
}

/// Sample means and the unbiased (`1/(T−1)`) sample covariance.
pub fn estimate_moments(s: &ReturnSample) -> Result<MomentParams> {
    check_dims(s.n_assets, s.n_obs)?;
    let (n, t) = (s.n_assets, s.n_obs);
    let mut mu = Vec::with_capacity(n);
    let mut centered = Vec::with_capacity(n * t);
    for row in s.data.chunks_exact(t) {
        let mean = row.iter().sum::<f64>() / t as f64;
        mu.push(mean);
        centered.extend(row.iter().map(|x| x - mean));
    }
    let scale = 1.0 / (t - 1) as f64;
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        let ri = &centered[i * t..(i + 1) * t];
        for j in 0..=i {
            let v = dot(ri, &centered[j * t..(j + 1) * t]) * scale;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    MomentParams::new(
        mu,
        CovMatrix::from_symmetric_unchecked(n, cov),
        Origin::Estimated { n_obs: t },
    )
}
