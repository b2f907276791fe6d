#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use phasefolio::sampling::fill_standard_normal;
use phasefolio::{CovMatrix, MomentParams, Origin, SeedSpec};
use rand_chacha::ChaCha8Rng;

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_standard_normal(rng, &mut v);
    v
}

/// `G Gᵀ/n + ridge·I` with a standard normal `G`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> CovMatrix {
    let g = DMatrix::from_row_slice(n, n, &normals(rng, n * n));
    let s = &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * ridge;
    let s = (&s + s.transpose()) * 0.5;
    CovMatrix::from_row_major(n, s.transpose().as_slice().to_vec()).unwrap()
}

pub fn random_moments(seed: SeedSpec, n: usize, mu_scale: f64) -> MomentParams {
    let mut rng = seed.rng();
    let sigma = random_spd(&mut rng, n, 0.2);
    let mu = normals(&mut rng, n).iter().map(|m| m * mu_scale).collect();
    MomentParams::new(mu, sigma, Origin::True).unwrap()
}

fn to_na(m: &MomentParams) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.dim();
    (
        DVector::from_column_slice(m.mu()),
        DMatrix::from_row_slice(n, n, m.sigma().as_slice()),
    )
}

/// `C − B²/A`, computed with an LU solve.
pub fn residual_na(m: &MomentParams) -> f64 {
    let (mu, s) = to_na(m);
    let lu = s.lu();
    let ones = DVector::from_element(m.dim(), 1.0);
    let y1 = lu.solve(&ones).unwrap();
    let ym = lu.solve(&mu).unwrap();
    let (a, b, c) = (ones.dot(&y1), ones.dot(&ym), mu.dot(&ym));
    c - b * b / a
}

pub fn risk_na(mu: &DVector<f64>, s: &DMatrix<f64>, phi: f64, w: &DVector<f64>) -> f64 {
    phi * (w.dot(&(s * w))).sqrt() - mu.dot(w)
}

/// Minimizes `φ√(wᵀΣw) − μᵀw` over `Σw = budget` by damped Newton in the
/// coordinates `w = (budget/N)·1 + Z x`, `Z = [eᵢ − e_N]`.
pub fn numeric_min_risk(m: &MomentParams, phi: f64, budget: f64) -> (f64, Vec<f64>) {
    let n = m.dim();
    let (mu, s) = to_na(m);
    let mut z = DMatrix::zeros(n, n - 1);
    for i in 0..n - 1 {
        z[(i, i)] = 1.0;
        z[(n - 1, i)] = -1.0;
    }
    let w0 = DVector::from_element(n, budget / n as f64);
    let mut x = DVector::zeros(n - 1);
    let w_of = |x: &DVector<f64>| &w0 + &z * x;
    let mut f = risk_na(&mu, &s, phi, &w_of(&x));
    for _ in 0..500 {
        let w = w_of(&x);
        let sw = &s * &w;
        let sd = w.dot(&sw).sqrt();
        let gw = &sw * (phi / sd) - &mu;
        let hw = (&s / sd - &sw * sw.transpose() / (sd * sd * sd)) * phi;
        let g = z.transpose() * gw;
        let h = z.transpose() * hw * &z;
        let step = match h.clone().cholesky() {
            Some(c) => -c.solve(&g),
            None => -&g,
        };
        let decrement = -g.dot(&step);
        if decrement <= 1e-30 * (1.0 + f.abs()) {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-16 {
            let xt = &x + &step * t;
            let ft = risk_na(&mu, &s, phi, &w_of(&xt));
            if ft <= f - 1e-4 * t * decrement {
                x = xt;
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (f, w_of(&x).as_slice().to_vec())
}
