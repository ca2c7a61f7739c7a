//! Deterministic numerical kernel shared by every other module: binary
//! entropy, Gaussian densities and masses, adaptive quadrature, and seeded
//! random streams.
//!
//! All routines are pure functions of their inputs. Random streams are
//! counter-addressed ([`RngStream`]): the pair `(seed, stream_id)` fully
//! determines the sample sequence, and distinct stream ids are independent,
//! so parallel workers each derive their own stream instead of sharing one.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};


/// Binary Shannon entropy in bits, with the continuous extension
/// `binary_entropy(0) = binary_entropy(1) = 0`.
pub fn binary_entropy(lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(
            "binary_entropy",
            format!("probability {lambda} outside [0, 1]"),
        ));
    }
    Ok(binary_entropy_unchecked(lambda))
}

/// [`binary_entropy`] without the domain check; out-of-range inputs are
/// clamped. Used in inner loops where the argument is a probability by
/// construction and only float round-off can push it outside `[0, 1]`.
pub fn binary_entropy_unchecked(lambda: f64) -> f64 {
    if lambda <= 0.0 || lambda >= 1.0 {
        return 0.0;
    }
    -(lambda * lambda.log2() + (1.0 - lambda) * (1.0 - lambda).log2())
}

/// Normal probability density with the given mean and variance.
pub fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    check_variance("gaussian_pdf", variance)?;
    Ok(gaussian_pdf_unchecked(x, mean, variance))
}

pub(crate) fn gaussian_pdf_unchecked(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    (-z * z / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Normal cumulative distribution with the given mean and variance.
pub fn gaussian_cdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    check_variance("gaussian_cdf", variance)?;
    Ok(gaussian_cdf_unchecked(x, mean, variance))
}

pub(crate) fn gaussian_cdf_unchecked(x: f64, mean: f64, variance: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let z = (x - mean) / (2.0 * variance).sqrt();
    0.5 * libm::erfc(-z)
}

/// Probability mass of a normal distribution on the interval `[lo, hi)`.
///
/// Computed from the tail that keeps the erfc arguments positive, so far-tail
/// intervals do not cancel to zero.
pub fn gaussian_interval_mass(lo: f64, hi: f64, mean: f64, variance: f64) -> Result<f64> {
    check_variance("gaussian_interval_mass", variance)?;
    if hi <= lo {
        return Ok(0.0);
    }
    let s = (2.0 * variance).sqrt();
    let zl = (lo - mean) / s;
    let zh = (hi - mean) / s;
    // erfc is accurate for positive arguments; pick the side that yields them.
    let mass = if zl >= 0.0 {
        0.5 * (libm::erfc(zl) - libm::erfc(zh))
    } else if zh <= 0.0 {
        0.5 * (libm::erfc(-zh) - libm::erfc(-zl))
    } else {
        1.0 - 0.5 * (libm::erfc(-zl) + libm::erfc(zh))
    };
    Ok(mass.max(0.0))
}

fn check_variance(op: &'static str, variance: f64) -> Result<()> {
    if variance <= 0.0 || !variance.is_finite() {
        return Err(Error::domain(op, format!("variance {variance} must be > 0")));
    }
    Ok(())
}

/// Tolerances and subdivision cap for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub absolute_tolerance: f64,
    pub relative_tolerance: f64,
    pub max_subdivisions: usize,
}

impl QuadratureSpec {
    pub fn new(absolute_tolerance: f64, relative_tolerance: f64, max_subdivisions: usize) -> Result<Self> {
        if absolute_tolerance <= 0.0 || relative_tolerance <= 0.0 {
            return Err(Error::domain(
                "QuadratureSpec",
                "tolerances must be > 0".to_string(),
            ));
        }
        if max_subdivisions == 0 {
            return Err(Error::domain(
                "QuadratureSpec",
                "max_subdivisions must be >= 1".to_string(),
            ));
        }
        Ok(Self {
            absolute_tolerance,
            relative_tolerance,
            max_subdivisions,
        })
    }
}

impl Default for QuadratureSpec {
    /// Key-rate differences at long distance are of order 1e-5 bits per
    /// pulse; the defaults keep two extra digits of headroom.
    fn default() -> Self {
        Self {
            absolute_tolerance: 1e-9,
            relative_tolerance: 1e-8,
            max_subdivisions: 200,
        }
    }
}

/// Result of an adaptive quadrature run.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub subdivisions: usize,
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1],
// kept at the canonical published precision.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// One G7-K15 panel: returns (kronrod value, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut gauss = WG[3] * fc;
    let mut kron = WGK[7] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    let value = kron * half;
    let err = ((kron - gauss) * half).abs();
    (value, err)
}

/// Adaptive Gauss-Kronrod integration of `f` over `[lower, upper]`.
///
/// Infinite bounds are handled by a rational variable transform; integrands
/// here are Gaussian-dominated, so the transformed integrand stays smooth.
/// Reports [`Error::NonConvergence`] when the subdivision cap is reached
/// before the requested tolerance.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureEstimate> {
    if lower >= upper {
        return Err(Error::domain(
            "integrate_adaptive",
            format!("requires lower < upper, got [{lower}, {upper}]"),
        ));
    }
    match (lower.is_infinite(), upper.is_infinite()) {
        (false, false) => integrate_finite(&f, lower, upper, spec),
        (true, true) => {
            // x = t/(1-t^2) maps (-1, 1) onto the real line.
            let g = |t: f64| {
                let d = 1.0 - t * t;
                f(t / d) * (1.0 + t * t) / (d * d)
            };
            integrate_finite(&g, -1.0 + 1e-12, 1.0 - 1e-12, spec)
        }
        (false, true) => {
            // x = a + t/(1-t) maps [0, 1) onto [a, inf).
            let g = |t: f64| {
                let d = 1.0 - t;
                f(lower + t / d) / (d * d)
            };
            integrate_finite(&g, 0.0, 1.0 - 1e-12, spec)
        }
        (true, false) => {
            let g = |t: f64| {
                let d = 1.0 - t;
                f(upper - t / d) / (d * d)
            };
            integrate_finite(&g, 0.0, 1.0 - 1e-12, spec)
        }
    }
}

fn integrate_finite<F: Fn(f64) -> f64>(
    f: &F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureEstimate> {
    struct Panel {
        a: f64,
        b: f64,
        value: f64,
        err: f64,
    }
    // seed with several panels so features much narrower than the interval
    // cannot slip between the nodes of a single rule application
    const SEED_PANELS: usize = 8;
    let mut panels = Vec::with_capacity(SEED_PANELS);
    let step = (upper - lower) / SEED_PANELS as f64;
    for k in 0..SEED_PANELS {
        let a = lower + k as f64 * step;
        let b = if k + 1 == SEED_PANELS { upper } else { a + step };
        let (value, err) = gk15(f, a, b);
        panels.push(Panel { a, b, value, err });
    }
    let mut subdivisions = 0usize;
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        let tol = spec
            .absolute_tolerance
            .max(spec.relative_tolerance * total.abs());
        if total_err <= tol {
            return Ok(QuadratureEstimate {
                value: total,
                error_bound: total_err,
                subdivisions,
            });
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                estimate: total,
                error_bound: total_err,
                subdivisions,
            });
        }
        // Split the worst panel.
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.err.total_cmp(&b.1.err))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        panels.push(Panel {
            a,
            b: m,
            value: v1,
            err: e1,
        });
        panels.push(Panel {
            a: m,
            b,
            value: v2,
            err: e2,
        });
        subdivisions += 1;
    }
}

/// A seeded, counter-addressed random stream.
///
/// Identical `(seed, stream_id)` pairs reproduce identical draw sequences;
/// distinct stream ids give statistically independent streams, which is what
/// parallel sweep cells and per-phase protocol draws rely on.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// A fresh stream with the same seed and a different stream id.
    pub fn derive(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One draw from N(0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One draw from U[0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn bernoulli(&mut self) -> bool {
        self.rng.random::<bool>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMMA_011: f64 = 0.499_915_958_164_528; // closed form at high precision
    const PDF_1_0_2: f64 = 0.219_695_644_733_861_2;
    const CDF_1_0_1: f64 = 0.841_344_746_068_542_9;

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.5).abs() < 1e-3);
        assert!((binary_entropy(0.11).unwrap() - GAMMA_011).abs() < 1e-14);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn binary_entropy_symmetry() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..1000 {
            let l = rng.uniform();
            let a = binary_entropy(l).unwrap();
            let b = binary_entropy(1.0 - l).unwrap();
            assert!((a - b).abs() < 1e-12, "asymmetry at {l}: {a} vs {b}");
        }
    }

    #[test]
    fn gaussian_pdf_examples() {
        assert!((gaussian_pdf(0.0, 0.0, 1.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((gaussian_pdf(1.0, 0.0, 2.0).unwrap() - PDF_1_0_2).abs() < 1e-15);
        // translation invariance of the peak
        for &(mu, v) in &[(3.0, 0.5), (-7.0, 4.0), (0.25, 11.0)] {
            let peak = gaussian_pdf(mu, mu, v).unwrap();
            assert!((peak - 1.0 / (2.0 * std::f64::consts::PI * v).sqrt()).abs() < 1e-15);
        }
        assert!(gaussian_pdf(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_pdf(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_cdf_examples() {
        assert_eq!(gaussian_cdf(f64::INFINITY, 3.0, 2.0).unwrap(), 1.0);
        assert_eq!(gaussian_cdf(f64::NEG_INFINITY, 3.0, 2.0).unwrap(), 0.0);
        assert!((gaussian_cdf(0.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((gaussian_cdf(1.0, 0.0, 1.0).unwrap() - CDF_1_0_1).abs() < 1e-12);
        assert!(gaussian_cdf(0.0, 0.0, -2.0).is_err());
    }

    #[test]
    fn cdf_differentiates_to_pdf() {
        // central differences on a 100-point grid
        let h = 1e-5;
        for i in 0..100 {
            let x = -5.0 + 10.0 * (i as f64) / 99.0;
            let num = (gaussian_cdf_unchecked(x + h, 0.3, 1.7)
                - gaussian_cdf_unchecked(x - h, 0.3, 1.7))
                / (2.0 * h);
            let exact = gaussian_pdf_unchecked(x, 0.3, 1.7);
            assert!((num - exact).abs() < 1e-6, "at x={x}: {num} vs {exact}");
        }
    }

    #[test]
    fn interval_mass_matches_cdf_difference_and_tails() {
        let m = gaussian_interval_mass(-1.0, 1.0, 0.0, 1.0).unwrap();
        assert!((m - (2.0 * CDF_1_0_1 - 1.0)).abs() < 1e-14);
        // far tail stays positive and finite
        let tail = gaussian_interval_mass(37.0, 37.5, 0.0, 1.0).unwrap();
        assert!(tail > 0.0 && tail < 1e-290);
        assert_eq!(gaussian_interval_mass(2.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_polynomial_and_normalization() {
        let spec = QuadratureSpec::default();
        let half = integrate_adaptive(|x| x, 0.0, 1.0, &spec).unwrap();
        assert!((half.value - 0.5).abs() < 1e-12);

        let one = integrate_adaptive(
            |x| gaussian_pdf_unchecked(x, 1.5, 3.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &spec,
        )
        .unwrap();
        assert!((one.value - 1.0).abs() < 1e-9, "got {}", one.value);

        let half_line = integrate_adaptive(
            |x| gaussian_pdf_unchecked(x, 0.0, 1.0),
            0.0,
            f64::INFINITY,
            &spec,
        )
        .unwrap();
        assert!((half_line.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn quadrature_gaussian_product_closed_form() {
        // int phi(x; m1, v1) phi(x; m2, v2) dx = phi(m1; m2, v1 + v2)
        let spec = QuadratureSpec::default();
        for &(m1, v1, m2, v2) in &[(0.0, 1.0, 0.5, 2.0), (-2.0, 0.3, 1.0, 0.7), (4.0, 5.0, 4.0, 5.0)] {
            let got = integrate_adaptive(
                |x| gaussian_pdf_unchecked(x, m1, v1) * gaussian_pdf_unchecked(x, m2, v2),
                f64::NEG_INFINITY,
                f64::INFINITY,
                &spec,
            )
            .unwrap();
            let exact = gaussian_pdf_unchecked(m1, m2, v1 + v2);
            assert!(
                (got.value - exact).abs() < 1e-8,
                "({m1},{v1})x({m2},{v2}): {} vs {exact}",
                got.value
            );
        }
    }

    #[test]
    fn quadrature_reports_nonconvergence() {
        let spec = QuadratureSpec::new(1e-14, 1e-14, 2).unwrap();
        let res = integrate_adaptive(|x| (50.0 * x).sin().abs(), 0.0, 10.0, &spec);
        assert!(matches!(res, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn quadrature_rejects_bad_bounds_and_specs() {
        let spec = QuadratureSpec::default();
        assert!(integrate_adaptive(|x| x, 1.0, 0.0, &spec).is_err());
        assert!(QuadratureSpec::new(0.0, 1e-8, 10).is_err());
        assert!(QuadratureSpec::new(1e-9, 1e-8, 0).is_err());
    }

    #[test]
    fn rng_stream_determinism() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.standard_normal(), b.standard_normal());
            assert_eq!(a.uniform(), b.uniform());
        }
        let mut c = RngStream::new(42, 8);
        let first: Vec<f64> = (0..10).map(|_| RngStream::new(42, 7).uniform()).collect();
        assert!(first.iter().all(|&x| x == first[0]));
        assert_ne!(RngStream::new(42, 7).uniform(), c.uniform());
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut a = RngStream::new(6, 0);
        let mut b = RngStream::new(6, 1);
        let n = 200_000usize;
        let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.standard_normal();
            let y = b.standard_normal();
            sx += x;
            sy += y;
            sxy += x * y;
        }
        let nf = n as f64;
        let corr = (sxy / nf - sx / nf * (sy / nf)).abs();
        assert!(corr < 4.0 / nf.sqrt(), "cross-stream correlation {corr}");
    }

    #[test]
    fn rng_normal_moments() {
        let n = 1_000_000usize;
        let mut rng = RngStream::new(123, 1);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = rng.standard_normal();
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
    }
}
