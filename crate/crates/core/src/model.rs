//! Problem generation: constellations, Rayleigh channels and noisy observations.
//!
//! Conventions used throughout the crate:
//!
//! * constellations have unit mean symbol energy;
//! * channel entries are i.i.d. `CN(0, 1)`;
//! * the noise on each receive antenna is `CN(0, σ²)` with
//!   `σ² = 10^(-snr_db / 10)`, so `snr_db = +∞` is the noise-free limit.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Supported modulation alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
    Qam16,
    Qam64,
}

impl ConstellationKind {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ConstellationKind::Bpsk => 1,
            ConstellationKind::Qpsk => 2,
            ConstellationKind::Qam16 => 4,
            ConstellationKind::Qam64 => 6,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstellationKind::Bpsk => "bpsk",
            ConstellationKind::Qpsk => "qpsk",
            ConstellationKind::Qam16 => "qam16",
            ConstellationKind::Qam64 => "qam64",
        }
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationKind::Bpsk),
            "qpsk" | "qam4" | "4qam" => Ok(ConstellationKind::Qpsk),
            "qam16" | "16qam" => Ok(ConstellationKind::Qam16),
            "qam64" | "64qam" => Ok(ConstellationKind::Qam64),
            other => Err(Error::InvalidParameter(format!(
                "unknown modulation `{other}` (expected bpsk, qpsk, qam16 or qam64)"
            ))),
        }
    }
}

/// A finite, unit-energy, Gray-labelled symbol alphabet.
///
/// Symbols are addressed by their index into [`Constellation::points`]; the
/// tree decoders branch over indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
    labels: Vec<u32>,
}

/// Builds the normalized alphabet for `kind`.
///
/// QAM points are laid out on a square grid, index `i * side + j` holding
/// in-phase level `i` and quadrature level `j`; the label is the Gray code of
/// `i` concatenated with the Gray code of `j`.
pub fn make_constellation(kind: ConstellationKind) -> Constellation {
    if kind == ConstellationKind::Bpsk {
        return Constellation {
            kind,
            points: vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)],
            labels: vec![0, 1],
        };
    }
    let half_bits = kind.bits_per_symbol() / 2;
    let side = 1usize << half_bits;
    // Mean energy of the odd-integer grid {±1, ±3, ...}² is 2(side² - 1)/3.
    let scale = (2.0 * ((side * side - 1) as f64) / 3.0).sqrt().recip();
    let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) * scale;
    let gray = |i: usize| (i ^ (i >> 1)) as u32;

    let mut points = Vec::with_capacity(side * side);
    let mut labels = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            points.push(Complex64::new(level(i), level(j)));
            labels.push((gray(i) << half_bits) | gray(j));
        }
    }
    Constellation { kind, points, labels }
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        make_constellation(kind)
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Gray label of each point, `bits_per_symbol` bits wide.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Index of the point closest to `x`; ties go to the lower index.
    pub fn nearest(&self, x: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (x - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Number of differing label bits between two symbol indices.
    pub fn bit_errors(&self, a: usize, b: usize) -> u32 {
        (self.labels[a] ^ self.labels[b]).count_ones()
    }
}

/// Per-antenna complex noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    /// `σ² = 10^(-snr_db/10)`; `+∞` dB gives the noise-free model.
    pub fn from_snr_db(snr_db: f64) -> Self {
        NoiseModel {
            variance: 10f64.powf(-snr_db / 10.0),
        }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Draws one `CN(0, σ²)` sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        complex_gaussian(rng) * self.variance.sqrt()
    }
}

/// Draws a `CN(0, 1)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One detection problem `y = H s + n`.
#[derive(Debug, Clone)]
pub struct MimoInstance {
    pub n_tx: usize,
    pub n_rx: usize,
    pub h: CMatrix,
    pub s_true: Vec<usize>,
    pub y: Vec<Complex64>,
    pub snr_db: f64,
    pub constellation: Constellation,
}

impl MimoInstance {
    /// Builds an instance from explicit parts, computing `y = H s + noise`.
    pub fn from_parts(
        h: CMatrix,
        s_true: Vec<usize>,
        noise: &[Complex64],
        snr_db: f64,
        constellation: Constellation,
    ) -> Result<Self> {
        let (n_rx, n_tx) = (h.rows(), h.cols());
        check_dims(n_tx, n_rx)?;
        if s_true.len() != n_tx || noise.len() != n_rx {
            return Err(Error::ShapeMismatch(format!(
                "expected {n_tx} symbols and {n_rx} noise samples, got {} and {}",
                s_true.len(),
                noise.len()
            )));
        }
        if let Some(&bad) = s_true.iter().find(|&&s| s >= constellation.len()) {
            return Err(Error::InvalidParameter(format!(
                "symbol index {bad} outside a constellation of {} points",
                constellation.len()
            )));
        }
        let s: Vec<Complex64> = s_true.iter().map(|&i| constellation.point(i)).collect();
        let mut y = h.mul_vec(&s);
        for (yi, ni) in y.iter_mut().zip(noise) {
            *yi += ni;
        }
        Ok(MimoInstance {
            n_tx,
            n_rx,
            h,
            s_true,
            y,
            snr_db,
            constellation,
        })
    }

    /// Transmitted vector as complex symbols.
    pub fn transmitted(&self) -> Vec<Complex64> {
        self.s_true.iter().map(|&i| self.constellation.point(i)).collect()
    }

    /// `‖y − H s‖²` for a candidate vector of symbol indices.
    pub fn ml_metric(&self, symbols: &[usize]) -> f64 {
        let s: Vec<Complex64> = symbols.iter().map(|&i| self.constellation.point(i)).collect();
        let hs = self.h.mul_vec(&s);
        self.y.iter().zip(&hs).map(|(y, h)| (y - h).norm_sqr()).sum()
    }
}

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Dimension("at least one transmit antenna is required".into()));
    }
    if m > n {
        return Err(Error::Dimension(format!(
            "{m} transmit antennas exceed {n} receive antennas"
        )));
    }
    Ok(())
}

/// Draws an instance: `CN(0,1)` channel, uniform symbols, `CN(0, σ²)` noise.
pub fn generate_instance<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    constellation: &Constellation,
    snr_db: f64,
    rng: &mut R,
) -> Result<MimoInstance> {
    check_dims(m, n)?;
    let h = CMatrix::from_fn(n, m, |_, _| complex_gaussian(rng));
    let s_true: Vec<usize> = (0..m).map(|_| rng.random_range(0..constellation.len())).collect();
    let noise_model = NoiseModel::from_snr_db(snr_db);
    let noise: Vec<Complex64> = (0..n).map(|_| noise_model.sample(rng)).collect();
    MimoInstance::from_parts(h, s_true, &noise, snr_db, constellation.clone())
}

/// Initial squared sphere radius `N · M · 10^(-snr_db/10)`.
pub fn initial_radius_sq(m: usize, n: usize, snr_db: f64) -> f64 {
    (n * m) as f64 * 10f64.powf(-snr_db / 10.0)
}

/// Linear SNR `10^(snr_db/10)`.
pub fn snr_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for one trial of a campaign.
///
/// Depends only on `(campaign_seed, snr_index, trial_index)`, so adding SNR
/// points or running trials in a different order never changes a trial.
pub fn trial_seed(campaign_seed: u64, snr_index: u64, trial_index: u64) -> u64 {
    let a = splitmix64(campaign_seed);
    let b = splitmix64(a ^ snr_index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ trial_index.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Deterministic generator for one trial.
pub fn trial_rng(campaign_seed: u64, snr_index: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(campaign_seed, snr_index, trial_index))
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [ConstellationKind; 4] = [
        ConstellationKind::Bpsk,
        ConstellationKind::Qpsk,
        ConstellationKind::Qam16,
        ConstellationKind::Qam64,
    ];

    #[test]
    fn constellation_sizes_and_energy() {
        for (kind, size) in KINDS.into_iter().zip([2, 4, 16, 64]) {
            let c = make_constellation(kind);
            assert_eq!(c.len(), size);
            assert!((c.mean_energy() - 1.0).abs() <= 1e-12, "{kind}: {}", c.mean_energy());
        }
    }

    #[test]
    fn bpsk_points() {
        let c = make_constellation(ConstellationKind::Bpsk);
        assert_eq!(c.points(), &[Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn qpsk_and_qam16_grids() {
        let q = make_constellation(ConstellationKind::Qpsk);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        for p in q.points() {
            assert!((p.re.abs() - a).abs() < 1e-15 && (p.im.abs() - a).abs() < 1e-15);
        }
        let q16 = make_constellation(ConstellationKind::Qam16);
        let s = 10f64.sqrt();
        for p in q16.points() {
            for v in [p.re * s, p.im * s] {
                let r = v.round();
                assert!((v - r).abs() < 1e-12 && [-3.0, -1.0, 1.0, 3.0].contains(&r));
            }
        }
    }

    #[test]
    fn labels_are_distinct_and_gray() {
        for kind in KINDS {
            let c = make_constellation(kind);
            let mut labels = c.labels().to_vec();
            labels.sort_unstable();
            labels.dedup();
            assert_eq!(labels.len(), c.len());
            // grid neighbours: nearest distinct distance
            let step = if kind == ConstellationKind::Bpsk {
                2.0
            } else {
                (c.point(0) - c.point(1)).norm()
            };
            for i in 0..c.len() {
                for j in 0..c.len() {
                    let d = (c.point(i) - c.point(j)).norm();
                    if (d - step).abs() < 1e-9 {
                        assert_eq!(c.bit_errors(i, j), 1, "{kind}: {i} vs {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn quantizer_is_idempotent_on_points() {
        for kind in KINDS {
            let c = make_constellation(kind);
            for i in 0..c.len() {
                assert_eq!(c.nearest(c.point(i)), i);
            }
        }
        // exact midpoint between the two BPSK points goes to index 0
        let b = make_constellation(ConstellationKind::Bpsk);
        assert_eq!(b.nearest(Complex64::new(0.0, 0.0)), 0);
    }

    #[test]
    fn noise_free_instance() {
        let c = make_constellation(ConstellationKind::Bpsk);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inst = generate_instance(2, 2, &c, f64::INFINITY, &mut rng).unwrap();
        let hs = inst.h.mul_vec(&inst.transmitted());
        assert_eq!(inst.y, hs);
    }

    #[test]
    fn identical_seeds_identical_instances() {
        let c = make_constellation(ConstellationKind::Qam16);
        let a = generate_instance(4, 4, &c, 12.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = generate_instance(4, 4, &c, 12.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.s_true, b.s_true);
        assert_eq!(
            a.y.iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect::<Vec<_>>(),
            b.y.iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect::<Vec<_>>()
        );
    }

    #[test]
    fn channel_entries_have_unit_power() {
        let c = make_constellation(ConstellationKind::Bpsk);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 10_000 {
            let inst = generate_instance(8, 8, &c, 0.0, &mut rng).unwrap();
            for v in inst.h.data() {
                acc += v.norm_sqr();
                count += 1;
            }
        }
        let mean = acc / count as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean |h|² = {mean}");
    }

    #[test]
    fn noise_variance_matches_snr() {
        for snr in [0.0, 7.0, 20.0] {
            let model = NoiseModel::from_snr_db(snr);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let n = 100_000;
            let var = (0..n).map(|_| model.sample(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
            assert!((var / model.variance() - 1.0).abs() < 0.03, "snr {snr}: {var}");
        }
    }

    #[test]
    fn dimension_error() {
        let c = make_constellation(ConstellationKind::Bpsk);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_instance(3, 2, &c, 0.0, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn radius_formula() {
        assert!((initial_radius_sq(18, 18, 0.0) - 324.0).abs() < 1e-12);
        assert!((initial_radius_sq(10, 10, 10.0) - 10.0).abs() < 1e-12);
        assert!((initial_radius_sq(16, 16, 20.0) - 2.56).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for snr in 0..30 {
            let r = initial_radius_sq(4, 6, snr as f64);
            assert!(r > 0.0 && r < prev);
            prev = r;
        }
        assert!((initial_radius_sq(4, 6, 3.0) * 2.0 - initial_radius_sq(8, 6, 3.0)).abs() < 1e-12);
    }

    #[test]
    fn trial_seeds_are_independent_of_grid_shape() {
        assert_eq!(trial_seed(5, 2, 9), trial_seed(5, 2, 9));
        assert_ne!(trial_seed(5, 2, 9), trial_seed(5, 3, 9));
        assert_ne!(trial_seed(5, 2, 9), trial_seed(5, 2, 10));
        assert_ne!(trial_seed(5, 2, 9), trial_seed(6, 2, 9));
    }
}
