//! Randomized ground-truth generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikedec_core::model::SpikeParams;
use spikedec_core::torus;
use spikedec_core::Complex64;

use crate::HarnessError;

/// Parameters of one randomized problem instance.
///
/// Locations are drawn uniformly on the torus and rejected until the scaled
/// separation `(n+1) Delta` reaches `min_sep_scaled`; amplitude moduli are
/// uniform on `[1, kappa]` with uniform phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    /// Half-bandwidth; the observation has `N = 2n + 1` samples.
    pub n: usize,
    /// Number of spikes.
    pub r: usize,
    /// Dynamic range (largest over smallest amplitude modulus), `>= 1`.
    pub kappa: f64,
    /// Required floor on `(n+1) Delta(tau)`.
    pub min_sep_scaled: f64,
    pub seed: u64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self { n: 32, r: 6, kappa: 1.0, min_sep_scaled: 2.0, seed: 0 }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n < 2 {
            return Err(HarnessError::InvalidSpec(format!("n = {} (need n >= 2)", self.n)));
        }
        if self.r == 0 {
            return Err(HarnessError::InvalidSpec("r = 0".into()));
        }
        if !(self.kappa >= 1.0) {
            return Err(HarnessError::InvalidSpec(format!(
                "kappa = {} (need kappa >= 1)",
                self.kappa
            )));
        }
        if !(self.min_sep_scaled > 0.0) {
            return Err(HarnessError::InvalidSpec(format!(
                "min_sep_scaled = {} (need > 0)",
                self.min_sep_scaled
            )));
        }
        // Placement feasibility: r spikes at pairwise distance
        // min_sep_scaled/(n+1) must fit on the unit torus.
        if self.min_sep_scaled * self.r as f64 > (self.n + 1) as f64 {
            return Err(HarnessError::InvalidSpec(format!(
                "cannot place {} spikes at scaled separation {} with n = {}",
                self.r, self.min_sep_scaled, self.n
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Draw a ground truth matching the spec; deterministic in the seed.
///
/// Location attempts are rejected wholesale until the separation floor is
/// met; the amplitudes are drawn only after acceptance so the stream layout
/// is stable.
pub fn gen_instance(spec: &InstanceSpec) -> Result<SpikeParams, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let floor = spec.min_sep_scaled / (spec.n + 1) as f64;
    let mut locations: Option<Vec<f64>> = None;
    for _ in 0..MAX_REJECTIONS {
        let draw: Vec<f64> = (0..spec.r).map(|_| rng.random_range(-0.5..0.5)).collect();
        let ok = spec.r == 1
            || torus::min_separation(&draw).expect("r >= 2 checked above") >= floor;
        if ok {
            locations = Some(draw);
            break;
        }
    }
    let locations = locations.ok_or(HarnessError::Infeasible {
        r: spec.r,
        min_sep_scaled: spec.min_sep_scaled,
        attempts: MAX_REJECTIONS,
    })?;
    let amplitudes: Vec<Complex64> = (0..spec.r)
        .map(|_| {
            // Uniform over the annulus 1 <= |a| <= kappa as a planar region,
            // so the modulus density is proportional to the modulus.
            let u: f64 = rng.random();
            let modulus = (1.0 + (spec.kappa * spec.kappa - 1.0) * u).sqrt();
            let phase = std::f64::consts::TAU * rng.random::<f64>();
            Complex64::from_polar(modulus, phase)
        })
        .collect();
    Ok(SpikeParams::new(amplitudes, locations).expect("generated parameters are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = InstanceSpec { seed: 1234, ..Default::default() };
        assert_eq!(gen_instance(&spec).unwrap(), gen_instance(&spec).unwrap());
        let other = gen_instance(&spec.with_seed(1235)).unwrap();
        assert_ne!(gen_instance(&spec).unwrap(), other);
    }

    #[test]
    fn generated_instances_satisfy_their_invariants() {
        for seed in 0..50 {
            let spec = InstanceSpec { kappa: 4.0, seed, ..Default::default() };
            let truth = gen_instance(&spec).unwrap();
            let delta = torus::min_separation(truth.locations()).unwrap();
            assert!((spec.n + 1) as f64 * delta >= spec.min_sep_scaled);
            for a in truth.amplitudes() {
                let m = a.norm();
                assert!((1.0..=4.0 + 1e-12).contains(&m), "modulus {m}");
            }
        }
    }

    #[test]
    fn unit_dynamic_range_pins_moduli() {
        let spec = InstanceSpec { kappa: 1.0, seed: 7, ..Default::default() };
        let truth = gen_instance(&spec).unwrap();
        for a in truth.amplitudes() {
            assert_eq!(a.norm(), 1.0);
        }
    }

    #[test]
    fn infeasible_specs_are_rejected_upfront() {
        let spec = InstanceSpec { n: 4, r: 6, min_sep_scaled: 2.0, ..Default::default() };
        assert!(matches!(gen_instance(&spec), Err(HarnessError::InvalidSpec(_))));
        let spec = InstanceSpec { kappa: 0.5, ..Default::default() };
        assert!(matches!(gen_instance(&spec), Err(HarnessError::InvalidSpec(_))));
    }
}
