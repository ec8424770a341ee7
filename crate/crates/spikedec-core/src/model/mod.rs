//! Parameter representation, the sampling operator, and the least-squares
//! loss with its analytic gradient.
//!
//! A signal is a weighted sum of Dirac impulses `mu = sum_l a_l delta_{tau_l}`
//! with complex amplitudes `a_l` and locations `tau_l` on the unit torus
//! `[-1/2, 1/2)`. The observation operator samples the Fourier transform of
//! `mu` at the `N = 2n+1` integer frequencies `k = -n..n` and weights each
//! sample by the spectral point-spread profile `g_k`:
//!
//! ```text
//! x_k = g_k * sum_l a_l e^{-i 2 pi k tau_l},
//! g_k = sqrt((1/(n+1)) (1 - |k|/(n+1))),    ||g||_2 = 1.
//! ```
//!
//! With this normalization the Gramian of the operator acts on measures as
//! convolution with the Fejér kernel of [`crate::kernel`], which is what
//! every expression downstream relies on.

pub mod hessian;

use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::kernel;
use crate::torus;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("amplitudes and locations must have equal nonzero length (got {amplitudes} and {locations})")]
    ShapeMismatch { amplitudes: usize, locations: usize },
    #[error("half-bandwidth n = {0} is too small (need n >= 2)")]
    BandwidthTooSmall(usize),
    #[error("sample vector has length {got}, expected {expected}")]
    SampleLength { got: usize, expected: usize },
    #[error("separation is undefined for fewer than two spikes")]
    SeparationUndefined,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("truth amplitude {index} is zero; the weighted metric is undefined")]
    ZeroTruthAmplitude { index: usize },
    #[error("spike count mismatch: {left} vs {right}")]
    SpikeCountMismatch { left: usize, right: usize },
}

/// The parameter vector of `r` spikes: complex amplitudes plus canonical
/// torus locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeParams {
    amplitudes: Vec<Complex64>,
    locations: Vec<f64>,
}

impl SpikeParams {
    /// Build a parameter vector, wrapping every location into `[-1/2, 1/2)`.
    pub fn new(amplitudes: Vec<Complex64>, locations: Vec<f64>) -> Result<Self, ModelError> {
        if amplitudes.is_empty() || amplitudes.len() != locations.len() {
            return Err(ModelError::ShapeMismatch {
                amplitudes: amplitudes.len(),
                locations: locations.len(),
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(ModelError::NonFinite("amplitudes"));
        }
        if locations.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::NonFinite("locations"));
        }
        let locations = locations.into_iter().map(torus::wrap).collect();
        Ok(Self { amplitudes, locations })
    }

    pub fn single(amplitude: Complex64, location: f64) -> Self {
        Self { amplitudes: vec![amplitude], locations: vec![torus::wrap(location)] }
    }

    pub fn r(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// Reorder spikes by ascending location (canonical presentation).
    pub fn sorted_by_location(&self) -> Self {
        let mut order: Vec<usize> = (0..self.r()).collect();
        order.sort_by(|&a, &b| self.locations[a].total_cmp(&self.locations[b]));
        self.reordered(&order)
    }

    /// Rebuild with spike `order[i]` placed at slot `i`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            amplitudes: order.iter().map(|&i| self.amplitudes[i]).collect(),
            locations: order.iter().map(|&i| self.locations[i]).collect(),
        }
    }

    pub(crate) fn from_wrapped_parts(amplitudes: Vec<Complex64>, locations: Vec<f64>) -> Self {
        debug_assert!(locations.iter().all(|t| (-0.5..0.5).contains(t)));
        Self { amplitudes, locations }
    }
}

/// Spectral weights of the point-spread profile, indexed `k = -n..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfWeights {
    n: usize,
    g: Vec<f64>,
}

impl PsfWeights {
    pub fn new(n: usize) -> Result<Self, ModelError> {
        if n < kernel::MIN_HALF_BANDWIDTH {
            return Err(ModelError::BandwidthTooSmall(n));
        }
        let m = (n + 1) as f64;
        let g = (-(n as i64)..=n as i64)
            .map(|k| ((1.0 / m) * (1.0 - k.unsigned_abs() as f64 / m)).sqrt())
            .collect();
        Ok(Self { n, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of Fourier samples, `N = 2n + 1`.
    pub fn len(&self) -> usize {
        2 * self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Weight at signed frequency `k`, `|k| <= n`.
    pub fn weight(&self, k: i64) -> f64 {
        self.g[(k + self.n as i64) as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.g
    }

    /// Iterate `(k, g_k)` over the sampled band.
    pub fn enumerate(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (-(self.n as i64)..=self.n as i64).map(|k| (k, self.weight(k)))
    }
}

/// A vector of `N` weighted Fourier samples together with its profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    samples: Vec<Complex64>,
    psf: PsfWeights,
}

impl Observation {
    pub fn new(samples: Vec<Complex64>, psf: PsfWeights) -> Result<Self, ModelError> {
        if samples.len() != psf.len() {
            return Err(ModelError::SampleLength { got: samples.len(), expected: psf.len() });
        }
        Ok(Self { samples, psf })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn psf(&self) -> &PsfWeights {
        &self.psf
    }

    pub fn n(&self) -> usize {
        self.psf.n()
    }

    /// Squared Euclidean norm of the sample vector.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Minimal wrap-around distance of a location set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub delta: f64,
}

/// Minimal pairwise wrap-around distance; requires at least two spikes.
pub fn wraparound_separation(locations: &[f64]) -> Result<Separation, ModelError> {
    torus::min_separation(locations)
        .map(|delta| Separation { delta })
        .ok_or(ModelError::SeparationUndefined)
}

/// Apply the sampling operator: `x_k = g_k sum_l a_l e^{-i 2 pi k tau_l}`.
pub fn observe(params: &SpikeParams, psf: &PsfWeights) -> Observation {
    let samples = psf
        .enumerate()
        .map(|(k, g)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, &tau) in params.amplitudes.iter().zip(&params.locations) {
                acc += a * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 * tau);
            }
            acc * g
        })
        .collect();
    Observation { samples, psf: psf.clone() }
}

/// Residual `Phi(mu(theta)) - x` in the sample domain.
pub fn residual(params: &SpikeParams, obs: &Observation) -> Vec<Complex64> {
    let model = observe(params, &obs.psf);
    model
        .samples
        .iter()
        .zip(&obs.samples)
        .map(|(m, x)| m - x)
        .collect()
}

/// Half squared norm of the residual.
pub fn loss(params: &SpikeParams, obs: &Observation) -> f64 {
    0.5 * residual(params, obs).iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// The analytic gradient of [`loss`]: one complex component per amplitude
/// and one real component per location.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub amplitude: Vec<Complex64>,
    pub location: Vec<f64>,
}

impl Gradient {
    /// Infinity norm over all components (amplitude moduli and |location|).
    pub fn inf_norm(&self) -> f64 {
        let a = self.amplitude.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let t = self.location.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        a.max(t)
    }
}

/// Residual projections against the sampled impulse derivatives:
/// `proj[j][s] = sum_k (i 2 pi k)^s conj(g_k e^{-i 2 pi k tau_j}) res_k`
/// for `s = 0, 1, 2`. Order 0 is the amplitude gradient; order `s` equals
/// the `s`-th derivative of the kernel-convolved residual measure at
/// `tau_j`, which keeps every formula valid for arbitrary (noisy) samples.
pub(crate) fn residual_projections(
    params: &SpikeParams,
    obs: &Observation,
    res: &[Complex64],
) -> Vec<[Complex64; 3]> {
    let mut out = vec![[Complex64::new(0.0, 0.0); 3]; params.r()];
    for (j, &tau) in params.locations.iter().enumerate() {
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for ((k, g), r) in obs.psf.enumerate().zip(res) {
            let phase = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * tau);
            let base = g * phase * r;
            let ik = Complex64::new(0.0, 2.0 * std::f64::consts::PI * k as f64);
            acc[0] += base;
            acc[1] += ik * base;
            acc[2] += ik * ik * base;
        }
        out[j] = acc;
    }
    out
}

/// Analytic gradient of the loss at `params`.
///
/// `d/da_j = <Phi(delta_{tau_j}), residual>` and
/// `d/dtau_j = Re(conj(a_j) <Phi(delta'_{tau_j}), residual>)`, both evaluated
/// in the sample domain so they hold for noisy observations as well.
pub fn gradient(params: &SpikeParams, obs: &Observation) -> Gradient {
    let res = residual(params, obs);
    let proj = residual_projections(params, obs, &res);
    let amplitude = proj.iter().map(|p| p[0]).collect();
    let location = params
        .amplitudes
        .iter()
        .zip(&proj)
        .map(|(a, p)| (a.conj() * p[1]).re)
        .collect();
    Gradient { amplitude, location }
}

/// One serialized instance: the half-bandwidth, a seed tag, and the spikes.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub n: usize,
    pub seed: u64,
    pub params: SpikeParams,
}

impl InstanceRecord {
    /// Plain-text serialization: a `key = value` header with `n`, `r` and
    /// `seed`, then one line per spike holding `re_amplitude im_amplitude
    /// location`, whitespace-separated. Lines starting with `#` are
    /// comments. Floats print with enough digits to round-trip exactly.
    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# point-source instance")?;
        writeln!(w, "n = {}", self.n)?;
        writeln!(w, "r = {}", self.params.r())?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "# re_amplitude im_amplitude location")?;
        for (a, t) in self.params.amplitudes().iter().zip(self.params.locations()) {
            writeln!(w, "{} {} {}", a.re, a.im, t)?;
        }
        Ok(())
    }

    pub fn to_string_record(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("record is ASCII")
    }

    pub fn read(r: &mut impl BufRead) -> io::Result<Self> {
        let mut n: Option<usize> = None;
        let mut count: Option<usize> = None;
        let mut seed: Option<u64> = None;
        let mut amplitudes = Vec::new();
        let mut locations = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                let parsed = |what: &str| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("bad {what} in instance header: {value:?}"),
                    )
                };
                match key {
                    "n" => n = Some(value.parse().map_err(|_| parsed("n"))?),
                    "r" => count = Some(value.parse().map_err(|_| parsed("r"))?),
                    "seed" => seed = Some(value.parse().map_err(|_| parsed("seed"))?),
                    other => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("unknown instance header key {other:?}"),
                        ))
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("expected 3 fields per spike line, got {}", fields.len()),
                ));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("bad float {s:?}"))
                })
            };
            amplitudes.push(Complex64::new(parse(fields[0])?, parse(fields[1])?));
            locations.push(parse(fields[2])?);
        }
        let n = n.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing n"))?;
        if let Some(c) = count {
            if c != amplitudes.len() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("header says r = {c} but found {} spikes", amplitudes.len()),
                ));
            }
        }
        let params = SpikeParams::new(amplitudes, locations)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        Ok(Self { n, seed: seed.unwrap_or(0), params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn psf_has_unit_norm_and_symmetry() {
        for n in [2, 5, 32, 64] {
            let psf = PsfWeights::new(n).unwrap();
            let norm_sq: f64 = psf.weights().iter().map(|g| g * g).sum();
            assert!((norm_sq - 1.0).abs() < 1e-12, "n = {n}: ||g||^2 = {norm_sq}");
            for k in 0..=n as i64 {
                assert_eq!(psf.weight(k), psf.weight(-k));
            }
        }
    }

    #[test]
    fn single_centered_spike_reproduces_profile() {
        let psf = PsfWeights::new(8).unwrap();
        let obs = observe(&SpikeParams::single(c(1.0, 0.0), 0.0), &psf);
        for ((_, g), s) in psf.enumerate().zip(obs.samples()) {
            assert!((s - c(g, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn observation_is_linear_in_the_measure() {
        let psf = PsfWeights::new(6).unwrap();
        let p1 = SpikeParams::new(vec![c(1.0, 0.5)], vec![0.21]).unwrap();
        let p2 = SpikeParams::new(vec![c(-0.3, 2.0)], vec![-0.4]).unwrap();
        let combined = SpikeParams::new(vec![c(1.0, 0.5), c(-0.3, 2.0)], vec![0.21, -0.4]).unwrap();
        let o1 = observe(&p1, &psf);
        let o2 = observe(&p2, &psf);
        let oc = observe(&combined, &psf);
        for i in 0..psf.len() {
            let sum = o1.samples()[i] + o2.samples()[i];
            assert!((oc.samples()[i] - sum).norm() < 1e-14);
        }
    }

    #[test]
    fn cancelling_spikes_observe_to_zero() {
        let psf = PsfWeights::new(5).unwrap();
        let p = SpikeParams::new(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![0.3, 0.3]).unwrap();
        let obs = observe(&p, &psf);
        assert!(obs.samples().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn loss_vanishes_at_truth() {
        let psf = PsfWeights::new(12).unwrap();
        let truth = SpikeParams::new(vec![c(1.0, -0.4), c(0.2, 0.9)], vec![-0.1, 0.27]).unwrap();
        let obs = observe(&truth, &psf);
        assert!(loss(&truth, &obs) < 1e-20);
    }

    #[test]
    fn single_spike_amplitude_mismatch_loss() {
        // ||g||_2 = 1, so the loss is (1/2)|2 - 1|^2.
        let psf = PsfWeights::new(9).unwrap();
        let obs = observe(&SpikeParams::single(c(1.0, 0.0), 0.0), &psf);
        let l = loss(&SpikeParams::single(c(2.0, 0.0), 0.0), &obs);
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_truth() {
        let psf = PsfWeights::new(16).unwrap();
        let truth =
            SpikeParams::new(vec![c(1.3, 0.2), c(-0.5, 0.8), c(0.1, -1.1)], vec![-0.31, 0.02, 0.4])
                .unwrap();
        let obs = observe(&truth, &psf);
        let g = gradient(&truth, &obs);
        assert!(g.inf_norm() < 1e-12, "gradient norm {}", g.inf_norm());
    }

    #[test]
    fn single_spike_amplitude_gradient_is_mismatch() {
        // grad_a = (a - a_true) F_N(0) = a - a_true for a lone spike at the
        // true location.
        let psf = PsfWeights::new(10).unwrap();
        let obs = observe(&SpikeParams::single(c(1.0, 0.0), 0.1), &psf);
        let g = gradient(&SpikeParams::single(c(2.5, 0.0), 0.1), &obs);
        assert!((g.amplitude[0] - c(1.5, 0.0)).norm() < 1e-12);
        assert!(g.location[0].abs() < 1e-10);
    }

    #[test]
    fn separation_examples() {
        let s = wraparound_separation(&[0.0, -0.5]).unwrap();
        assert!((s.delta - 0.5).abs() < 1e-15);
        let s = wraparound_separation(&[-0.45, 0.45]).unwrap();
        assert!((s.delta - 0.1).abs() < 1e-15);
        assert_eq!(wraparound_separation(&[0.2]), Err(ModelError::SeparationUndefined));
    }

    #[test]
    fn instance_record_round_trips() {
        let params = SpikeParams::new(
            vec![c(1.0 / 3.0, -0.123456789012345), c(2.5, 1e-14)],
            vec![-0.25, 0.4999999],
        )
        .unwrap();
        let rec = InstanceRecord { n: 32, seed: 42, params };
        let text = rec.to_string_record();
        let back = InstanceRecord::read(&mut text.as_bytes()).unwrap();
        assert_eq!(rec, back);
    }

    #[test]
    fn instance_record_rejects_unknown_keys() {
        let text = "n = 4\nbogus = 1\n1 0 0.1\n";
        assert!(InstanceRecord::read(&mut text.as_bytes()).is_err());
    }
}
