//! Physical model of Alice's Gaussian modulation, the lossy/noisy channel,
//! and Bob's homodyne statistics.
//!
//! All variances are expressed in shot-noise units: `N_0 = 1` internally and
//! is carried in [`ChannelParams`] so outputs can be rescaled. The channel
//! attenuates amplitudes by `sqrt(G)` and adds input-referred excess noise
//! `xi`, so Bob's conditional variance is `(1 + G*xi) * N_0`.

use crate::error::{Error, Result};
use crate::numerics::{gaussian_pdf_unchecked, RngStream};

/// Which quadrature a pulse was modulated/measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Basis {
    X,
    P,
}

/// Channel and modulation parameters.
///
/// `transmission` is the power transmissivity `G`; when built from a fiber
/// length it is `10^(-attenuation_db_per_km * distance / 10)`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub attenuation_db_per_km: f64,
    pub transmission: f64,
    pub excess_noise: f64,
    pub modulation_variance: f64,
    pub shot_noise: f64,
}

pub const DEFAULT_ATTENUATION_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_MODULATION_VARIANCE: f64 = 500.0;

impl ChannelParams {
    /// Parameters for a fiber of the given length.
    pub fn from_distance(
        distance_km: f64,
        attenuation_db_per_km: f64,
        excess_noise: f64,
        modulation_variance: f64,
    ) -> Result<Self> {
        let transmission = transmission_from_distance(distance_km, attenuation_db_per_km)?;
        Self::validate(Self {
            distance_km,
            attenuation_db_per_km,
            transmission,
            excess_noise,
            modulation_variance,
            shot_noise: 1.0,
        })
    }

    /// Parameters with an explicitly chosen transmission.
    pub fn from_transmission(
        transmission: f64,
        excess_noise: f64,
        modulation_variance: f64,
    ) -> Result<Self> {
        if !(transmission > 0.0 && transmission <= 1.0) {
            return Err(Error::domain(
                "ChannelParams",
                format!("transmission {transmission} outside (0, 1]"),
            ));
        }
        let attenuation = DEFAULT_ATTENUATION_DB_PER_KM;
        let distance_km = -10.0 * transmission.log10() / attenuation;
        Self::validate(Self {
            distance_km,
            attenuation_db_per_km: attenuation,
            transmission,
            excess_noise,
            modulation_variance,
            shot_noise: 1.0,
        })
    }

    fn validate(p: Self) -> Result<Self> {
        if p.excess_noise < 0.0 {
            return Err(Error::domain(
                "ChannelParams",
                format!("excess noise {} must be >= 0", p.excess_noise),
            ));
        }
        if p.modulation_variance <= 0.0 {
            return Err(Error::domain(
                "ChannelParams",
                format!("modulation variance {} must be > 0", p.modulation_variance),
            ));
        }
        if p.shot_noise <= 0.0 {
            return Err(Error::domain(
                "ChannelParams",
                format!("shot noise {} must be > 0", p.shot_noise),
            ));
        }
        Ok(p)
    }

    /// Channel loss in dB.
    pub fn loss_db(&self) -> f64 {
        -10.0 * self.transmission.log10()
    }

    /// Bob's conditional variance `V_{B|A} = (1 + G*xi) * N_0`.
    pub fn bob_conditional_variance(&self) -> f64 {
        (1.0 + self.transmission * self.excess_noise) * self.shot_noise
    }

    /// Variance of Bob's marginal: `(G*V_A + 1 + G*xi) * N_0`.
    pub fn bob_marginal_variance(&self) -> f64 {
        (self.transmission * self.modulation_variance + 1.0
            + self.transmission * self.excess_noise)
            * self.shot_noise
    }

    /// Mean and variance of the posterior `P(a | b)` under the Gaussian
    /// prior/likelihood pair: mean `sqrt(G) V_A b / (G V_A + 1 + G xi)`,
    /// variance `V_A (1 + G xi) / (G V_A + 1 + G xi) * N_0`.
    pub fn posterior_a_given_b(&self, b: f64) -> (f64, f64) {
        let g = self.transmission;
        let va = self.modulation_variance;
        let denom = g * va + 1.0 + g * self.excess_noise;
        let mean = g.sqrt() * va * b / denom;
        let var = va * (1.0 + g * self.excess_noise) / denom * self.shot_noise;
        (mean, var)
    }
}

/// One pulse's raw key elements: Alice's modulation `a`, Bob's measurement
/// `b`, Eve's measurement `c` (filled in by the eavesdropper model), and the
/// quadrature basis.
#[derive(Debug, Clone, Copy)]
pub struct RawKeySample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub basis: Basis,
}

/// Power transmissivity of a fiber: `G = 10^(-attenuation * L / 10)`.
pub fn transmission_from_distance(distance_km: f64, attenuation_db_per_km: f64) -> Result<f64> {
    if distance_km < 0.0 {
        return Err(Error::domain(
            "transmission_from_distance",
            format!("distance {distance_km} km must be >= 0"),
        ));
    }
    if attenuation_db_per_km <= 0.0 {
        return Err(Error::domain(
            "transmission_from_distance",
            format!("attenuation {attenuation_db_per_km} dB/km must be > 0"),
        ));
    }
    Ok(10f64.powf(-attenuation_db_per_km * distance_km / 10.0))
}

/// Draw Alice's key element: `a ~ N(0, V_A * N_0)`.
pub fn sample_alice(params: &ChannelParams, rng: &mut RngStream) -> f64 {
    (params.modulation_variance * params.shot_noise).sqrt() * rng.standard_normal()
}

/// Propagate `a` through the channel: `b ~ N(sqrt(G) a, (1 + G xi) N_0)`.
pub fn transmit(a: f64, params: &ChannelParams, rng: &mut RngStream) -> f64 {
    params.transmission.sqrt() * a
        + params.bob_conditional_variance().sqrt() * rng.standard_normal()
}

/// Conditional density of Bob's measurement given Alice's element.
pub fn likelihood_b_given_a(b: f64, a: f64, params: &ChannelParams) -> f64 {
    gaussian_pdf_unchecked(
        b,
        params.transmission.sqrt() * a,
        params.bob_conditional_variance(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmission_examples() {
        assert_eq!(transmission_from_distance(0.0, 0.2).unwrap(), 1.0);
        let g100 = transmission_from_distance(100.0, 0.2).unwrap();
        assert!((g100 - 0.01).abs() < 1e-15);
        let g150 = transmission_from_distance(150.0, 0.2).unwrap();
        assert!((g150 - 0.001).abs() < 1e-15);
        assert!(transmission_from_distance(-1.0, 0.2).is_err());
        assert!(transmission_from_distance(10.0, 0.0).is_err());
    }

    #[test]
    fn alice_sampling_moments() {
        let params = ChannelParams::from_distance(100.0, 0.2, 0.0, 500.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let a = sample_alice(&params, &mut rng);
            sum += a;
            sum2 += a * a;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((495.0..=505.0).contains(&var), "variance {var}");
        assert!(mean.abs() < 4.0 * (500.0 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn transmit_scaling_and_noise() {
        let mut rng = RngStream::new(9, 0);
        // lossless, noiseless channel
        let p = ChannelParams::from_transmission(1.0, 0.0, 500.0).unwrap();
        let n = 1_000_000usize;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let b = transmit(5.0, &p, &mut rng);
            sum += b;
            sum2 += b * b;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean - 5.0).abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.01);

        // sqrt(G) scaling of the conditional mean
        let p = ChannelParams::from_transmission(0.01, 0.0, 500.0).unwrap();
        let (mut sum, _n2) = (0.0, 0);
        for _ in 0..n {
            sum += transmit(10.0, &p, &mut rng);
        }
        assert!((sum / n as f64 - 1.0).abs() < 4.0 / (n as f64).sqrt());

        // V_{B|A} = (1 + G xi) N_0
        let p = ChannelParams::from_transmission(0.5, 1.0, 500.0).unwrap();
        assert!((p.bob_conditional_variance() - 1.5).abs() < 1e-15);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let b = transmit(2.0, &p, &mut rng);
            sum += b;
            sum2 += b * b;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((var - 1.5).abs() < 0.015, "conditional variance {var}");
    }

    #[test]
    fn noiseless_channel_has_exactly_shot_noise() {
        // xi = 0 recovers the coherent-state conditional variance bit-exactly
        for &g in &[1.0, 0.5, 0.01, 1e-3] {
            let p = ChannelParams::from_transmission(g, 0.0, 500.0).unwrap();
            assert_eq!(p.bob_conditional_variance(), 1.0);
        }
    }

    #[test]
    fn likelihood_peak_at_mode() {
        let p = ChannelParams::from_transmission(0.25, 0.5, 500.0).unwrap();
        let a = 3.0;
        let peak = likelihood_b_given_a(p.transmission.sqrt() * a, a, &p);
        let expect = 1.0 / (2.0 * std::f64::consts::PI * p.bob_conditional_variance()).sqrt();
        assert!((peak - expect).abs() < 1e-15);
    }

    #[test]
    fn marginal_variance_of_b() {
        let p = ChannelParams::from_distance(50.0, 0.2, 0.0, 500.0).unwrap();
        let mut rng = RngStream::new(31, 2);
        let n = 1_000_000usize;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let a = sample_alice(&p, &mut rng);
            let b = transmit(a, &p, &mut rng);
            sum += b;
            sum2 += b * b;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let expect = p.bob_marginal_variance();
        // var estimator sd ~ expect * sqrt(2/n)
        assert!(
            (var - expect).abs() < 4.0 * expect * (2.0 / n as f64).sqrt(),
            "{var} vs {expect}"
        );
    }

    #[test]
    fn posterior_closed_form() {
        let p = ChannelParams::from_transmission(0.1, 0.3, 400.0).unwrap();
        let (mean, var) = p.posterior_a_given_b(2.0);
        let g = 0.1f64;
        let denom = g * 400.0 + 1.0 + g * 0.3;
        assert!((mean - g.sqrt() * 400.0 * 2.0 / denom).abs() < 1e-12);
        assert!((var - 400.0 * (1.0 + g * 0.3) / denom).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ChannelParams::from_transmission(0.0, 0.0, 500.0).is_err());
        assert!(ChannelParams::from_transmission(1.5, 0.0, 500.0).is_err());
        assert!(ChannelParams::from_transmission(0.5, -0.1, 500.0).is_err());
        assert!(ChannelParams::from_transmission(0.5, 0.0, 0.0).is_err());
    }
}
