use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Additive perturbation: every entry gets independent `N(0, σ²)` noise.
pub fn adp_transform<R: Rng + ?Sized>(points: &[Vec<f64>], sigma: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma must be positive"));
    }
    let noise = Normal::new(0.0, sigma).map_err(|_| Error::param("invalid sigma"))?;
    Ok(points
        .iter()
        .map(|p| p.iter().map(|x| x + noise.sample(rng)).collect())
        .collect())
}

/// Random projection `p' = pR / (sqrt(q)·σ_R)` onto `q` dimensions, where `R`
/// is a `d×q` matrix of `N(0, σ_R²)` entries. Squared norms are preserved in
/// expectation.
pub fn rsp_transform<R: Rng + ?Sized>(points: &[Vec<f64>], q: usize, sigma_r: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let d = points.first().map_or(0, |p| p.len());
    if q == 0 || q > d {
        return Err(Error::param(alloc::format!("q must lie in [1, {d}]")));
    }
    if !(sigma_r.is_finite() && sigma_r > 0.0) {
        return Err(Error::param("sigma_r must be positive"));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::param("points have differing dimensions"));
    }
    let normal = Normal::new(0.0, sigma_r).map_err(|_| Error::param("invalid sigma_r"))?;
    let r: Vec<f64> = (0..d * q).map(|_| normal.sample(rng)).collect();
    let scale = 1.0 / (libm::sqrt(q as f64) * sigma_r);
    Ok(points
        .iter()
        .map(|p| {
            (0..q)
                .map(|c| p.iter().enumerate().map(|(i, x)| x * r[i * q + c]).sum::<f64>() * scale)
                .collect()
        })
        .collect())
}
