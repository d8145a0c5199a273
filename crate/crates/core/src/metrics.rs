//! Reconstruction error and additive-noise helpers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::num::{variance, Real};

/// Relative error `‖est − ref‖₂ / ‖ref‖₂`.
pub fn rmse<T: Real>(reference: &[T], estimate: &[T]) -> Result<T> {
    if reference.len() != estimate.len() {
        return Err(Error::UndefinedMetric(format!(
            "length mismatch {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let den: T = reference.iter().map(|&r| r * r).sum();
    if !(den > T::zero()) {
        return Err(Error::UndefinedMetric("reference signal is zero".into()));
    }
    let num: T = reference.iter().zip(estimate).map(|(&r, &e)| (e - r) * (e - r)).sum();
    Ok((num / den).sqrt())
}

/// `10·log10(Var(clean)/noise_var)`.
pub fn snr_in<T: Real>(clean: &[T], noise_var: T) -> Result<T> {
    let v = variance(clean);
    if !(v > T::zero()) || !(noise_var > T::zero()) {
        return Err(Error::UndefinedMetric("SNR needs positive signal and noise variance".into()));
    }
    Ok(T::lit(10.0) * (v / noise_var).log10())
}

/// Noise variance giving `snr_db` for `clean`.
pub fn noise_variance_for<T: Real>(clean: &[T], snr_db: T) -> Result<T> {
    let v = variance(clean);
    if !(v > T::zero()) {
        return Err(Error::UndefinedMetric("SNR undefined for a constant signal".into()));
    }
    Ok(v / T::lit(10.0).powf(snr_db / T::lit(10.0)))
}

/// White Gaussian noise draws appended to `clean` at the requested SNR.
pub fn add_noise_with<T: Real>(clean: &[T], snr_db: T, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
    let sd = noise_variance_for(clean, snr_db)?.sqrt();
    Ok(clean
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(rng);
            x + sd * T::lit(e)
        })
        .collect())
}

/// Seeded variant of [`add_noise_with`].
pub fn add_noise<T: Real>(clean: &[T], snr_db: T, seed: u64) -> Result<Vec<T>> {
    add_noise_with(clean, snr_db, &mut ChaCha8Rng::seed_from_u64(seed))
}
