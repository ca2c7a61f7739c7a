//! Slicing of Alice's key-element space into regions, pairing of regions at
//! separation `delta_a`, and the left/right bit assignment.
//!
//! Region `i` is the half-open interval `[i*w, (i+1)*w)`. A pairing scheme
//! is any perfect matching of regions in which the two members of a pair are
//! exactly `delta_a = multiple * w` apart; announcing the pair reveals that
//! Alice's element lies in one of two width-`w` regions without revealing
//! which. The default [`BlockPairing`] matches region `i` with `i + 7`
//! inside blocks of 14, and alternative schemes can be plugged in through
//! [`PairingScheme`].

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::numerics::gaussian_interval_mass;
use std::fmt;
use std::sync::Arc;

/// Which member of a pair a region is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Alice's bit for a side: left is 0, right is 1.
pub fn alice_bit(side: Side) -> u8 {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

/// Canonical label of a pair: the region indices of its two members.
/// Serialized as `"L:R"` in session transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairLabel {
    pub left: i64,
    pub right: i64,
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.left, self.right)
    }
}

/// A perfect matching of region indices at fixed separation.
pub trait PairingScheme: Send + Sync + fmt::Debug {
    /// Pair membership of region `i`.
    fn pair_of(&self, i: i64) -> (PairLabel, Side);

    /// Separation between pair members, in region widths.
    fn multiple(&self) -> i64;
}

/// Block matching: within each block of `2m` consecutive regions the first
/// `m` are left members and are matched with the region `m` slots to their
/// right, so e.g. with `m = 7` region 2 pairs with region 9.
#[derive(Debug, Clone, Copy)]
pub struct BlockPairing {
    half_period: i64,
}

impl BlockPairing {
    pub fn new(half_period: i64) -> Result<Self> {
        if half_period < 1 {
            return Err(Error::domain(
                "BlockPairing",
                format!("half period {half_period} must be >= 1"),
            ));
        }
        Ok(Self { half_period })
    }
}

impl PairingScheme for BlockPairing {
    fn pair_of(&self, i: i64) -> (PairLabel, Side) {
        let m = self.half_period;
        let r = i.rem_euclid(2 * m);
        if r < m {
            (
                PairLabel {
                    left: i,
                    right: i + m,
                },
                Side::Left,
            )
        } else {
            (
                PairLabel {
                    left: i - m,
                    right: i,
                },
                Side::Right,
            )
        }
    }

    fn multiple(&self) -> i64 {
        self.half_period
    }
}

/// Rule for choosing the pair separation from channel parameters:
/// `delta_a = (base + per_km * L) * sqrt(N_E)`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DeltaRule {
    pub base: f64,
    pub per_km: f64,
}

impl Default for DeltaRule {
    fn default() -> Self {
        Self {
            base: 1.0,
            per_km: 0.02,
        }
    }
}

impl DeltaRule {
    pub fn delta_a(&self, distance_km: f64, eve_noise_variance: f64) -> f64 {
        (self.base + self.per_km * distance_km) * eve_noise_variance.sqrt()
    }
}

/// The slicing/pairing grid for one channel configuration.
#[derive(Debug, Clone)]
pub struct PairingGrid {
    pub delta_a: f64,
    pub width: f64,
    /// `delta_a / width`, an integer by construction.
    pub multiple: i64,
    /// Set when the region width exceeds a third of the smaller of
    /// `sqrt(N_E)` and `sqrt(V_B|A)`; the small-width approximations are
    /// then only moderately accurate.
    pub smallness_warning: bool,
    scheme: Arc<dyn PairingScheme>,
}

impl PairingGrid {
    /// Build a grid with the default `delta_a` rule and width `delta_a / 7`.
    pub fn build(params: &ChannelParams, eve_noise_variance: f64, rule: &DeltaRule) -> Result<Self> {
        Self::build_with_multiple(params, eve_noise_variance, rule, 7)
    }

    pub fn build_with_multiple(
        params: &ChannelParams,
        eve_noise_variance: f64,
        rule: &DeltaRule,
        multiple: i64,
    ) -> Result<Self> {
        if eve_noise_variance <= 0.0 || !eve_noise_variance.is_finite() {
            return Err(Error::GridInvariant(format!(
                "eavesdropper noise variance {eve_noise_variance} must be finite and > 0"
            )));
        }
        let delta_a = rule.delta_a(params.distance_km, eve_noise_variance);
        if delta_a <= 0.0 {
            return Err(Error::GridInvariant(format!(
                "pair separation {delta_a} must be > 0"
            )));
        }
        let width = delta_a / multiple as f64;
        let bound = eve_noise_variance
            .sqrt()
            .min(params.bob_conditional_variance().sqrt());
        if width >= bound {
            return Err(Error::GridInvariant(format!(
                "region width {width} is not small against the noise scale {bound}"
            )));
        }
        Ok(Self {
            delta_a,
            width,
            multiple,
            smallness_warning: width > bound / 3.0,
            scheme: Arc::new(BlockPairing::new(multiple)?),
        })
    }

    /// Replace the pairing scheme; the scheme's separation must match the grid.
    pub fn with_scheme(mut self, scheme: Arc<dyn PairingScheme>) -> Result<Self> {
        if scheme.multiple() != self.multiple {
            return Err(Error::GridInvariant(format!(
                "scheme separation {} differs from grid multiple {}",
                scheme.multiple(),
                self.multiple
            )));
        }
        self.scheme = scheme;
        Ok(self)
    }

    /// Region index containing `a`: `floor(a / w)`.
    pub fn region_of(&self, a: f64) -> i64 {
        (a / self.width).floor() as i64
    }

    /// Pair membership of region `i`.
    pub fn pair_of(&self, i: i64) -> (PairLabel, Side) {
        self.scheme.pair_of(i)
    }

    /// `[lo, hi)` bounds of region `i`.
    pub fn region_bounds(&self, i: i64) -> (f64, f64) {
        (i as f64 * self.width, (i + 1) as f64 * self.width)
    }

    /// Midpoint of region `i`.
    pub fn region_center(&self, i: i64) -> f64 {
        (i as f64 + 0.5) * self.width
    }

    /// Midpoints of a pair's two regions; they differ by exactly `delta_a`.
    pub fn pair_centers(&self, pair: PairLabel) -> (f64, f64) {
        let left = self.region_center(pair.left);
        (left, left + self.delta_a)
    }

    /// Exact Gaussian prior mass of region `i` under Alice's modulation.
    pub fn region_mass(&self, i: i64, params: &ChannelParams) -> f64 {
        let (lo, hi) = self.region_bounds(i);
        gaussian_interval_mass(lo, hi, 0.0, params.modulation_variance * params.shot_noise)
            .expect("modulation variance validated at construction")
    }

    /// Prior masses `(m_left, m_right)` of a pair's regions.
    pub fn pair_masses(&self, pair: PairLabel, params: &ChannelParams) -> (f64, f64) {
        (
            self.region_mass(pair.left, params),
            self.region_mass(pair.right, params),
        )
    }
}
