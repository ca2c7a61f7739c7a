//! Bob's side of the reconciliation: Bayesian posteriors over the announced
//! pair, hard decisions, bit error rates, post-selection, and grouping.
//!
//! For an announced pair with region prior masses `(m_L, m_R)` the log odds
//! of Alice being on the right side given Bob's measurement `b` is, in the
//! center-point model,
//!
//! ```text
//! logit(b) = ln(m_R/m_L) + sqrt(G) * delta_a * (b - sqrt(G) * mid) / V_B|A
//! ```
//!
//! which is affine in `b`; the exact-mass model integrates the prior and
//! likelihood over the full region instead of its midpoint. The two agree to
//! well under 1e-4 at the default region width. The induced binary channel
//! is asymmetric in general because the Gaussian prior weighs the two sides
//! of a pair unequally.

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::numerics::{binary_entropy_unchecked, gaussian_interval_mass};
use crate::pairing::{PairLabel, PairingGrid};
use std::fmt;

/// Which posterior evaluation the decoder uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum PosteriorMethod {
    /// Region mass times the likelihood at the region center.
    #[default]
    CenterPoint,
    /// Prior and likelihood integrated over the full region.
    ExactMass,
}

/// Post-selection threshold and grouping resolution.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GroupingPolicy {
    /// Bits with `ber > ber_cut` are discarded.
    pub ber_cut: f64,
    /// Width of the BER bins that define groups.
    pub ber_bin_width: f64,
    /// Number of pair-asymmetry buckets in the group key.
    pub asym_buckets: u8,
    /// Width of one asymmetry bucket in |ln(m_L/m_R)|.
    pub asym_bucket_width: f64,
}

impl Default for GroupingPolicy {
    fn default() -> Self {
        Self {
            ber_cut: 0.40,
            ber_bin_width: 0.01,
            asym_buckets: 4,
            asym_bucket_width: 0.125,
        }
    }
}

impl GroupingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.ber_cut > 0.0 && self.ber_cut <= 0.5) {
            return Err(Error::domain(
                "GroupingPolicy",
                format!("ber_cut {} outside (0, 0.5]", self.ber_cut),
            ));
        }
        let bins = self.ber_cut / self.ber_bin_width;
        if self.ber_bin_width <= 0.0 || (bins - bins.round()).abs() > 1e-9 || bins < 1.0 {
            return Err(Error::domain(
                "GroupingPolicy",
                format!(
                    "bin width {} does not divide (0, {}] into whole bins",
                    self.ber_bin_width, self.ber_cut
                ),
            ));
        }
        if self.asym_buckets == 0 || self.asym_bucket_width <= 0.0 {
            return Err(Error::domain(
                "GroupingPolicy",
                "need at least one asymmetry bucket of positive width".to_string(),
            ));
        }
        Ok(())
    }

    /// Number of BER bins covering `(0, ber_cut]`.
    pub fn bin_count(&self) -> u16 {
        (self.ber_cut / self.ber_bin_width).round() as u16
    }

    /// BER bin of a kept bit; an exact-threshold BER joins the top bin.
    pub fn ber_bin(&self, ber: f64) -> u16 {
        ((ber / self.ber_bin_width) as u16).min(self.bin_count() - 1)
    }

    /// Asymmetry bucket from the pair's prior log odds.
    pub fn asym_bucket(&self, log_prior_odds: f64) -> u8 {
        ((log_prior_odds.abs() / self.asym_bucket_width) as u8).min(self.asym_buckets - 1)
    }
}

/// Group key: bits of a pair with approximately identical BER and
/// approximately identical prior asymmetry are processed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct GroupId {
    pub ber_bin: u16,
    pub asym_bucket: u8,
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}a{}", self.ber_bin, self.asym_bucket)
    }
}

/// One decoded pulse.
#[derive(Debug, Clone, Copy)]
pub struct SoftBit {
    pub pair: PairLabel,
    pub b: f64,
    pub p0: f64,
    pub p1: f64,
    pub decision: u8,
    pub ber: f64,
    pub kept: bool,
    pub group: Option<GroupId>,
}

/// Coefficients of the affine center-point logit `A + B * b`.
pub fn logit_coefficients(
    pair: PairLabel,
    params: &ChannelParams,
    grid: &PairingGrid,
) -> (f64, f64) {
    let (m_l, m_r) = grid.pair_masses(pair, params);
    let (a_l, a_r) = grid.pair_centers(pair);
    let s = params.bob_conditional_variance();
    let rg = params.transmission.sqrt();
    let slope = rg * grid.delta_a / s;
    let intercept = (m_r / m_l).ln() - slope * rg * 0.5 * (a_l + a_r);
    (intercept, slope)
}

/// Log odds `ln(P(right|b) / P(left|b))` for an announced pair.
pub fn pair_logit(
    b: f64,
    pair: PairLabel,
    params: &ChannelParams,
    grid: &PairingGrid,
    method: PosteriorMethod,
) -> f64 {
    match method {
        PosteriorMethod::CenterPoint => {
            let (a, slope) = logit_coefficients(pair, params, grid);
            a + slope * b
        }
        PosteriorMethod::ExactMass => {
            let (mean, var) = params.posterior_a_given_b(b);
            let (l_lo, l_hi) = grid.region_bounds(pair.left);
            let (r_lo, r_hi) = grid.region_bounds(pair.right);
            let mass_l = gaussian_interval_mass(l_lo, l_hi, mean, var)
                .expect("posterior variance is positive");
            let mass_r = gaussian_interval_mass(r_lo, r_hi, mean, var)
                .expect("posterior variance is positive");
            if mass_l > 0.0 && mass_r > 0.0 {
                mass_r.ln() - mass_l.ln()
            } else if mass_l == 0.0 && mass_r == 0.0 {
                // both region masses underflowed; the affine model is exact
                // enough this far out
                let (a, slope) = logit_coefficients(pair, params, grid);
                a + slope * b
            } else if mass_r == 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Bob's posteriors `(P(0|b), P(1|b))` for an announced pair.
pub fn posterior_bits(
    b: f64,
    pair: PairLabel,
    params: &ChannelParams,
    grid: &PairingGrid,
    method: PosteriorMethod,
) -> (f64, f64) {
    let logit = pair_logit(b, pair, params, grid, method);
    split_logit(logit)
}

/// `(p0, p1)` from the log odds of bit 1, numerically stable in the tails.
pub fn split_logit(logit: f64) -> (f64, f64) {
    if logit >= 0.0 {
        let e = (-logit).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = logit.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    }
}

/// Hard decision and BER: the decision is the larger posterior (ties go to
/// 0), the BER is the smaller one.
pub fn decide(p0: f64, p1: f64) -> (u8, f64) {
    if p1 > p0 {
        (1, p0)
    } else {
        (0, p1)
    }
}

/// Post-selection: keep a bit iff its BER does not exceed the cut.
pub fn post_select(ber: f64, policy: &GroupingPolicy) -> bool {
    ber <= policy.ber_cut
}

/// Group assignment for a kept bit. Calling this on a discarded bit is an
/// error.
pub fn assign_group(soft: &SoftBit, log_prior_odds: f64, policy: &GroupingPolicy) -> Result<GroupId> {
    if !soft.kept {
        return Err(Error::domain(
            "assign_group",
            format!("bit with ber {} was discarded", soft.ber),
        ));
    }
    Ok(GroupId {
        ber_bin: policy.ber_bin(soft.ber),
        asym_bucket: policy.asym_bucket(log_prior_odds),
    })
}

/// Decode one pulse end to end: posterior, decision, post-selection, group.
pub fn decode_sample(
    b: f64,
    pair: PairLabel,
    params: &ChannelParams,
    grid: &PairingGrid,
    policy: &GroupingPolicy,
    method: PosteriorMethod,
) -> SoftBit {
    let (p0, p1) = posterior_bits(b, pair, params, grid, method);
    let (decision, ber) = decide(p0, p1);
    let kept = post_select(ber, policy);
    let mut soft = SoftBit {
        pair,
        b,
        p0,
        p1,
        decision,
        ber,
        kept,
        group: None,
    };
    if kept {
        let (m_l, m_r) = grid.pair_masses(pair, params);
        soft.group = Some(GroupId {
            ber_bin: policy.ber_bin(ber),
            asym_bucket: policy.asym_bucket((m_l / m_r).ln()),
        });
    }
    soft
}

/// The `b`-intervals of one BER bin for one pair, under the center-point
/// logit. `dec1` collects the measurements decided as 1 (positive logit),
/// `dec0` the mirror interval. Bounds may be infinite for the lowest bin.
#[derive(Debug, Clone, Copy)]
pub struct BinIntervals {
    pub dec0: (f64, f64),
    pub dec1: (f64, f64),
}

impl BinIntervals {
    pub fn as_array(&self) -> [(f64, f64, u8); 2] {
        [
            (self.dec0.0, self.dec0.1, 0u8),
            (self.dec1.0, self.dec1.1, 1u8),
        ]
    }
}

/// Log odds magnitude at a given BER: `t = ln((1-e)/e)`.
fn logit_at_ber(e: f64) -> f64 {
    if e <= 0.0 {
        f64::INFINITY
    } else {
        ((1.0 - e) / e).ln()
    }
}

/// The measurement intervals that land pair `pair` in BER bin `bin`.
pub fn ber_bin_intervals(
    pair: PairLabel,
    bin: u16,
    policy: &GroupingPolicy,
    params: &ChannelParams,
    grid: &PairingGrid,
) -> BinIntervals {
    let (intercept, slope) = logit_coefficients(pair, params, grid);
    let e_lo = bin as f64 * policy.ber_bin_width;
    let e_hi = ((bin + 1) as f64 * policy.ber_bin_width).min(policy.ber_cut);
    let t_outer = logit_at_ber(e_lo); // larger magnitude (smaller ber)
    let t_inner = logit_at_ber(e_hi);
    let to_b = |t: f64| (t - intercept) / slope;
    BinIntervals {
        dec1: (to_b(t_inner), to_b(t_outer)),
        dec0: (to_b(-t_outer), to_b(-t_inner)),
    }
}

/// `(P(b in dec0 | side), P(b in dec1 | side))` for one side of a pair.
pub fn side_bin_probs(
    intervals: &BinIntervals,
    side_center: f64,
    params: &ChannelParams,
) -> (f64, f64) {
    let mean = params.transmission.sqrt() * side_center;
    let var = params.bob_conditional_variance();
    let p0 = gaussian_interval_mass(intervals.dec0.0, intervals.dec0.1, mean, var)
        .expect("positive channel variance");
    let p1 = gaussian_interval_mass(intervals.dec1.0, intervals.dec1.1, mean, var)
        .expect("positive channel variance");
    (p0, p1)
}

/// Unconditioned probability that Bob decides 1 given Alice's side.
pub fn decision_one_prob(
    pair: PairLabel,
    side_center: f64,
    params: &ChannelParams,
    grid: &PairingGrid,
) -> f64 {
    let (intercept, slope) = logit_coefficients(pair, params, grid);
    let boundary = -intercept / slope;
    let mean = params.transmission.sqrt() * side_center;
    gaussian_interval_mass(boundary, f64::INFINITY, mean, params.bob_conditional_variance())
        .expect("positive channel variance")
}

/// Mean of `binary_entropy(ber)` over a bin's b-set for one pair, together
/// with the mass of the set: used for group-conditional information terms.
pub(crate) fn gamma_ber_mass_integral(
    pair: PairLabel,
    intervals: &BinIntervals,
    params: &ChannelParams,
    grid: &PairingGrid,
    quad: &crate::numerics::QuadratureSpec,
) -> Result<f64> {
    let (m_l, m_r) = grid.pair_masses(pair, params);
    let (a_l, a_r) = grid.pair_centers(pair);
    let rg = params.transmission.sqrt();
    let var = params.bob_conditional_variance();
    let sd = var.sqrt();
    let (intercept, slope) = logit_coefficients(pair, params, grid);
    let density = |b: f64| {
        m_l * crate::numerics::gaussian_pdf_unchecked(b, rg * a_l, var)
            + m_r * crate::numerics::gaussian_pdf_unchecked(b, rg * a_r, var)
    };
    let lo_support = rg * a_l.min(a_r) - 12.0 * sd;
    let hi_support = rg * a_l.max(a_r) + 12.0 * sd;
    let mut total = 0.0;
    for (lo, hi, _) in intervals.as_array() {
        let lo = lo.max(lo_support);
        let hi = hi.min(hi_support);
        if hi <= lo {
            continue;
        }
        let est = crate::numerics::integrate_adaptive(
            |b| {
                let (_, ber) = decide_from_logit(intercept + slope * b);
                density(b) * binary_entropy_unchecked(ber)
            },
            lo,
            hi,
            quad,
        )?;
        total += est.value;
    }
    Ok(total)
}

/// Decision and BER straight from a logit value.
pub fn decide_from_logit(logit: f64) -> (u8, f64) {
    let (p0, p1) = split_logit(logit);
    decide(p0, p1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eve::eve_noise_variance;
    use crate::numerics::{integrate_adaptive, QuadratureSpec, RngStream};
    use crate::pairing::DeltaRule;

    fn setup_100km() -> (ChannelParams, PairingGrid) {
        let params = ChannelParams::from_distance(100.0, 0.2, 0.0, 500.0).unwrap();
        let ne = eve_noise_variance(&params).unwrap();
        let grid = PairingGrid::build(&params, ne, &DeltaRule::default()).unwrap();
        (params, grid)
    }

    // frozen from an independent high-precision quadrature of the full
    // prior x likelihood joint over the two regions
    const P1_PAIR_2_9_AT_B: f64 = 0.507_465_592_262_206_8;

    #[test]
    fn posterior_matches_joint_quadrature_oracle() {
        let (params, grid) = setup_100km();
        let pair = PairLabel { left: 2, right: 9 };
        let b = params.transmission.sqrt() * grid.region_center(9);
        let (_, p1_exact) = posterior_bits(b, pair, &params, &grid, PosteriorMethod::ExactMass);
        assert!(
            (p1_exact - P1_PAIR_2_9_AT_B).abs() < 1e-9,
            "exact-mass {p1_exact} vs oracle {P1_PAIR_2_9_AT_B}"
        );
        let (_, p1_center) = posterior_bits(b, pair, &params, &grid, PosteriorMethod::CenterPoint);
        assert!((p1_center - P1_PAIR_2_9_AT_B).abs() < 1e-4);
    }

    #[test]
    fn posterior_symmetry_and_limits() {
        let (params, grid) = setup_100km();
        // a symmetric central pair: equal priors, centers +- delta_a/2.
        // pair (-4, 3) has centers -3.5w and +3.5w with equal masses.
        let pair = PairLabel { left: -4, right: 3 };
        let (m_l, m_r) = grid.pair_masses(pair, &params);
        assert!((m_l - m_r).abs() < 1e-18);
        let (p0, p1) = posterior_bits(0.0, pair, &params, &grid, PosteriorMethod::CenterPoint);
        assert!((p0 - 0.5).abs() < 1e-12 && (p1 - 0.5).abs() < 1e-12);
        // limits
        let (_, p1) = posterior_bits(60.0, pair, &params, &grid, PosteriorMethod::CenterPoint);
        assert!(p1 > 0.999999);
        let (p0, _) = posterior_bits(-60.0, pair, &params, &grid, PosteriorMethod::ExactMass);
        assert!(p0 > 0.999999);
    }

    #[test]
    fn posterior_normalization_and_monotonicity() {
        let (params, grid) = setup_100km();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100_000 {
            let pair = grid.pair_of((rng.uniform() * 200.0 - 100.0) as i64).0;
            let b = 8.0 * rng.standard_normal();
            for method in [PosteriorMethod::CenterPoint, PosteriorMethod::ExactMass] {
                let (p0, p1) = posterior_bits(b, pair, &params, &grid, method);
                assert!((p0 + p1 - 1.0).abs() < 1e-12);
            }
        }
        let pair = PairLabel { left: -4, right: 3 };
        let mut prev = -1.0;
        for i in 0..1000 {
            let b = -10.0 + 20.0 * i as f64 / 999.0;
            let (_, p1) = posterior_bits(b, pair, &params, &grid, PosteriorMethod::CenterPoint);
            assert!(p1 >= prev, "p1 not monotone at b={b}");
            prev = p1;
        }
    }

    #[test]
    fn center_and_exact_agree_at_default_width() {
        let (params, grid) = setup_100km();
        let mut rng = RngStream::new(8, 1);
        let mut worst = 0.0f64;
        for _ in 0..20_000 {
            let region = (rng.standard_normal() * 500f64.sqrt() / grid.width) as i64;
            let pair = grid.pair_of(region).0;
            let b = rng.standard_normal() * params.bob_marginal_variance().sqrt();
            let (_, p1c) = posterior_bits(b, pair, &params, &grid, PosteriorMethod::CenterPoint);
            let (_, p1e) = posterior_bits(b, pair, &params, &grid, PosteriorMethod::ExactMass);
            worst = worst.max((p1c - p1e).abs());
        }
        assert!(worst < 1e-4, "worst disagreement {worst}");
    }

    #[test]
    fn decide_examples() {
        assert_eq!(decide(0.7, 0.3), (0, 0.3));
        assert_eq!(decide(0.5, 0.5), (0, 0.5));
        assert_eq!(decide(0.1, 0.9), (1, 0.1));
    }

    #[test]
    fn post_selection_threshold() {
        let policy = GroupingPolicy::default();
        assert!(!post_select(0.45, &policy));
        assert!(post_select(0.0, &policy));
        assert!(post_select(0.40, &policy));
        assert!(!post_select(0.400001, &policy));
    }

    #[test]
    fn group_assignment() {
        let policy = GroupingPolicy::default();
        policy.validate().unwrap();
        assert_eq!(policy.ber_bin(0.124), 12);
        assert_eq!(policy.ber_bin(0.121), 12);
        assert_eq!(policy.ber_bin(0.128), 12);
        assert_eq!(policy.ber_bin(0.40), 39); // threshold joins top bin
        let soft = SoftBit {
            pair: PairLabel { left: 0, right: 7 },
            b: 0.0,
            p0: 0.876,
            p1: 0.124,
            decision: 0,
            ber: 0.124,
            kept: true,
            group: None,
        };
        let g = assign_group(&soft, 0.0, &policy).unwrap();
        assert_eq!(g, GroupId { ber_bin: 12, asym_bucket: 0 });
        let discarded = SoftBit {
            kept: false,
            ber: 0.45,
            ..soft
        };
        assert!(assign_group(&discarded, 0.0, &policy).is_err());
    }

    #[test]
    fn policy_validation() {
        let p = GroupingPolicy {
            ber_bin_width: 0.013,
            ..GroupingPolicy::default()
        };
        assert!(p.validate().is_err());
        let p = GroupingPolicy {
            ber_cut: 0.6,
            ..GroupingPolicy::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn bin_intervals_partition_the_kept_set() {
        let (params, grid) = setup_100km();
        let policy = GroupingPolicy::default();
        let pair = PairLabel { left: 2, right: 9 };
        // total mass over all bins equals P(kept | pair announced)
        let (m_l, m_r) = grid.pair_masses(pair, &params);
        let mut mass = 0.0;
        for bin in 0..policy.bin_count() {
            let iv = ber_bin_intervals(pair, bin, &policy, &params, &grid);
            let (l0, l1) = side_bin_probs(&iv, grid.region_center(pair.left), &params);
            let (r0, r1) = side_bin_probs(&iv, grid.region_center(pair.right), &params);
            mass += m_l * (l0 + l1) + m_r * (r0 + r1);
        }
        // Monte-Carlo estimate of the same mass
        let mut rng = RngStream::new(77, 0);
        let n = 400_000usize;
        let mut hits = 0usize;
        let mut announced = 0usize;
        for _ in 0..n {
            let a = crate::channel::sample_alice(&params, &mut rng);
            let region = grid.region_of(a);
            let (p, _) = grid.pair_of(region);
            if p != pair {
                continue;
            }
            announced += 1;
            let b = crate::channel::transmit(a, &params, &mut rng);
            let soft = decode_sample(b, pair, &params, &grid, &policy, PosteriorMethod::CenterPoint);
            if soft.kept {
                hits += 1;
            }
        }
        let frac_mc = hits as f64 / n as f64;
        let pair_mass = m_l + m_r;
        assert!(announced > 0);
        let se = (mass * (1.0 - mass) / n as f64).sqrt().max(1e-9);
        assert!(
            (frac_mc - mass).abs() < 4.0 * se + 0.3 * pair_mass / (n as f64).sqrt(),
            "MC kept mass {frac_mc} vs analytic {mass}"
        );
    }

    #[test]
    fn decision_boundary_consistency() {
        // empirical error rate of `decide` in a narrow |b| band matches the
        // predicted ber for that band
        let (params, grid) = setup_100km();
        let policy = GroupingPolicy::default();
        let mut rng = RngStream::new(15, 0);
        let n = 1_000_000usize;
        let mut in_band = 0usize;
        let mut errors = 0usize;
        let mut ber_sum = 0.0;
        for _ in 0..n {
            let a = crate::channel::sample_alice(&params, &mut rng);
            let region = grid.region_of(a);
            let (pair, side) = grid.pair_of(region);
            let b = crate::channel::transmit(a, &params, &mut rng);
            let soft = decode_sample(b, pair, &params, &grid, &policy, PosteriorMethod::CenterPoint);
            if (0.20..0.25).contains(&soft.ber) {
                in_band += 1;
                ber_sum += soft.ber;
                if soft.decision != crate::pairing::alice_bit(side) {
                    errors += 1;
                }
            }
        }
        let observed = errors as f64 / in_band as f64;
        let predicted = ber_sum / in_band as f64;
        let se = (predicted * (1.0 - predicted) / in_band as f64).sqrt();
        assert!(
            (observed - predicted).abs() < 3.0 * se,
            "observed {observed} predicted {predicted} n {in_band}"
        );
    }

    #[test]
    fn gamma_integral_consistent_with_bin_value() {
        // over a narrow bin the averaged entropy must sit inside the bin's
        // entropy range
        let (params, grid) = setup_100km();
        let policy = GroupingPolicy::default();
        let quad = QuadratureSpec::default();
        let pair = PairLabel { left: 2, right: 9 };
        let bin = 30u16;
        let iv = ber_bin_intervals(pair, bin, &policy, &params, &grid);
        let (l0, l1) = side_bin_probs(&iv, grid.region_center(pair.left), &params);
        let (r0, r1) = side_bin_probs(&iv, grid.region_center(pair.right), &params);
        let (m_l, m_r) = grid.pair_masses(pair, &params);
        let omega = m_l * (l0 + l1) + m_r * (r0 + r1);
        let integral = gamma_ber_mass_integral(pair, &iv, &params, &grid, &quad).unwrap();
        let mean_gamma = integral / omega;
        let lo = binary_entropy_unchecked(0.30);
        let hi = binary_entropy_unchecked(0.31);
        assert!(mean_gamma >= lo && mean_gamma <= hi, "{mean_gamma} not in [{lo}, {hi}]");
        // cross-check omega against direct quadrature of the mixture density
        let (a_l, a_r) = grid.pair_centers(pair);
        let rg = params.transmission.sqrt();
        let var = params.bob_conditional_variance();
        let mut direct = 0.0;
        for (lo_b, hi_b, _) in iv.as_array() {
            direct += integrate_adaptive(
                |b| {
                    m_l * crate::numerics::gaussian_pdf_unchecked(b, rg * a_l, var)
                        + m_r * crate::numerics::gaussian_pdf_unchecked(b, rg * a_r, var)
                },
                lo_b,
                hi_b,
                &quad,
            )
            .unwrap()
            .value;
        }
        assert!((direct - omega).abs() < 1e-10);
    }
}
