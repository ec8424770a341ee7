//! Circularly-symmetric Gaussian observation noise at an exact SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spikedec_core::model::Observation;
use spikedec_core::Complex64;

use crate::HarnessError;

/// Noise request: a linear SNR (`f64::INFINITY` for noiseless) and a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// `||clean||^2 / ||noise||^2`, enforced exactly by rescaling the draw.
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { snr: f64::INFINITY, seed: 0 }
    }

    pub fn from_db(snr_db: f64, seed: u64) -> Self {
        Self { snr: 10f64.powf(snr_db / 10.0), seed }
    }
}

/// Add white complex Gaussian noise rescaled so the realized SNR equals the
/// request exactly. An infinite SNR returns the observation unchanged.
pub fn add_noise(obs: &Observation, spec: &NoiseSpec) -> Result<Observation, HarnessError> {
    if !(spec.snr > 0.0) {
        return Err(HarnessError::InvalidSnr(spec.snr));
    }
    if spec.snr.is_infinite() {
        return Ok(obs.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw: Vec<Complex64> = (0..obs.samples().len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let clean_energy = obs.energy();
    let draw_energy: f64 = draw.iter().map(|z| z.norm_sqr()).sum();
    // ||scale * draw||^2 = clean_energy / snr.
    let scale = (clean_energy / (spec.snr * draw_energy)).sqrt();
    let samples = obs
        .samples()
        .iter()
        .zip(&draw)
        .map(|(x, w)| x + scale * w)
        .collect();
    Ok(Observation::new(samples, obs.psf().clone())?)
}
