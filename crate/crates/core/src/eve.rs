//! The optimal Gaussian eavesdropper under the Markov-chain constraint: her
//! effective measurement noise, her posterior over which side of a pair
//! Alice sent, her prediction of Bob's assigned bit, and per-group
//! Eve-to-Bob information.
//!
//! With no excess noise every attack on the reverse-reconciled key is
//! equivalent to estimating Alice's quadrature through an effective Gaussian
//! channel `c ~ N(sqrt(alpha) a, alpha N_E)`; the scale `alpha` drops out of
//! every posterior and information quantity, so it is fixed to 1 and covered
//! by an invariance test rather than exposed as a knob.

use crate::channel::ChannelParams;
use crate::decoder::GroupId;
use crate::error::{Error, Result};
use crate::numerics::{
    binary_entropy_unchecked, gaussian_pdf_unchecked, integrate_adaptive, QuadratureSpec,
    RngStream,
};
use crate::pairing::PairLabel;

/// Effective noise of the eavesdropper's estimate of Alice's quadrature.
#[derive(Debug, Clone, Copy)]
pub struct EveParams {
    /// Noise variance `N_E` in shot-noise units.
    pub noise_variance: f64,
    /// Channel scale `alpha`; immaterial to all outputs, fixed to 1.
    pub scale: f64,
}

impl EveParams {
    pub fn for_channel(params: &ChannelParams) -> Result<Self> {
        Ok(Self {
            noise_variance: eve_noise_variance(params)?,
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// Minimum noise of Eve's estimate of Alice's quadrature.
///
/// Without excess noise this is `N_0 / (1 - G)`, which diverges on a lossless
/// line; with excess noise it becomes `N_0 + N_0 / ((1-G)/G + xi)`.
pub fn eve_noise_variance(params: &ChannelParams) -> Result<f64> {
    let g = params.transmission;
    let xi = params.excess_noise;
    let n0 = params.shot_noise;
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::domain(
            "eve_noise_variance",
            format!("transmission {g} outside (0, 1]"),
        ));
    }
    if g == 1.0 && xi == 0.0 {
        return Err(Error::domain(
            "eve_noise_variance",
            "undefined on a lossless, noiseless channel".to_string(),
        ));
    }
    Ok(n0 + n0 / ((1.0 - g) / g + xi))
}

/// Draw Eve's measurement: `c ~ N(sqrt(alpha) a, alpha N_E)`.
pub fn sample_eve(a: f64, eve: &EveParams, rng: &mut RngStream) -> f64 {
    eve.scale.sqrt() * a + (eve.scale * eve.noise_variance).sqrt() * rng.standard_normal()
}

/// Eve's likelihood of observing `c` given Alice's element `a`.
pub fn likelihood_c_given_a(c: f64, a: f64, eve: &EveParams) -> f64 {
    gaussian_pdf_unchecked(c, eve.scale.sqrt() * a, eve.scale * eve.noise_variance)
}

/// Eve's posterior `(P(left | c), P(right | c))` over which member of the
/// announced pair Alice sent, from her measurement and the region priors.
pub fn posterior_pair_side(
    centers: (f64, f64),
    priors: (f64, f64),
    c: f64,
    eve: &EveParams,
) -> (f64, f64) {
    let wl = priors.0 * likelihood_c_given_a(c, centers.0, eve);
    let wr = priors.1 * likelihood_c_given_a(c, centers.1, eve);
    let total = wl + wr;
    if total > 0.0 {
        (wl / total, wr / total)
    } else {
        // both likelihoods underflowed: decide by distance
        let sa = eve.scale.sqrt();
        if (c - sa * centers.0).abs() <= (c - sa * centers.1).abs() {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    }
}

/// Eve's prediction of Bob's assignment: the side-posterior mixture of the
/// per-side probabilities that Bob assigns 1. Returns `(P(b->1 | c),
/// eve_ber)` where `eve_ber = min(P(b->1|c), P(b->0|c))`.
pub fn p_bob1_given_c(
    centers: (f64, f64),
    side_priors: (f64, f64),
    bob1_given_side: (f64, f64),
    c: f64,
    eve: &EveParams,
) -> (f64, f64) {
    let (pl, pr) = posterior_pair_side(centers, side_priors, c, eve);
    let p1 = pl * bob1_given_side.0 + pr * bob1_given_side.1;
    (p1, p1.min(1.0 - p1))
}

/// Everything Eve knows about one (pair, BER-bin) cell after the public
/// announcements: the pair geometry and priors, plus Bob's conditional
/// statistics for the cell.
#[derive(Debug, Clone, Copy)]
pub struct GroupCell {
    pub pair: PairLabel,
    pub group: GroupId,
    /// Region centers `(a_left, a_right)`; they differ by `delta_a`.
    pub centers: (f64, f64),
    /// Prior region masses `(m_left, m_right)`.
    pub masses: (f64, f64),
    /// `(P(b in dec0 set | side), P(b in dec1 set | side))` for left, right.
    pub in_bin: ((f64, f64), (f64, f64)),
    /// Unconditioned `P(Bob decides 1 | side)` for left, right.
    pub dec1_marginal: (f64, f64),
}

impl GroupCell {
    /// Joint probability that a raw pulse announces this pair and Bob's bit
    /// lands in this BER bin.
    pub fn omega(&self) -> f64 {
        let (l, r) = self.in_bin;
        self.masses.0 * (l.0 + l.1) + self.masses.1 * (r.0 + r.1)
    }

    /// `(P(left | cell), P(right | cell))`.
    pub fn side_weights(&self) -> (f64, f64) {
        let (l, r) = self.in_bin;
        let wl = self.masses.0 * (l.0 + l.1);
        let wr = self.masses.1 * (r.0 + r.1);
        let total = wl + wr;
        (wl / total, wr / total)
    }

    /// Group-conditional `(P(b->1 | left, cell), P(b->1 | right, cell))`.
    pub fn bob1_given_side(&self) -> (f64, f64) {
        let (l, r) = self.in_bin;
        (l.1 / (l.0 + l.1), r.1 / (r.0 + r.1))
    }

    /// `P(Bob's bit = 1 | cell)`.
    pub fn p_bob1(&self) -> f64 {
        let (ql, qr) = self.side_weights();
        let (bl, br) = self.bob1_given_side();
        ql * bl + qr * br
    }

    /// Probability that Eve's maximum-posterior guess of Alice's side is
    /// wrong, conditioned on the cell.
    pub fn eve_side_error(&self, eve: &EveParams) -> f64 {
        let (ql, qr) = self.side_weights();
        let sa = eve.scale.sqrt();
        let ne = eve.scale * eve.noise_variance;
        let delta = self.centers.1 - self.centers.0;
        // decision threshold where the side posteriors cross
        let mid = sa * 0.5 * (self.centers.0 + self.centers.1);
        let c_star = mid + ne * (self.masses.0 / self.masses.1).ln() / (sa * delta);
        let wrong_left = crate::numerics::gaussian_interval_mass(
            c_star,
            f64::INFINITY,
            sa * self.centers.0,
            ne,
        )
        .expect("positive noise");
        let wrong_right = crate::numerics::gaussian_interval_mass(
            f64::NEG_INFINITY,
            c_star,
            sa * self.centers.1,
            ne,
        )
        .expect("positive noise");
        ql * wrong_left + qr * wrong_right
    }
}

/// Eve-to-Bob information for a cell, both estimator variants.
#[derive(Debug, Clone, Copy)]
pub struct EveGroupInfo {
    /// Bob-assignment probabilities conditioned on the group's b-set.
    pub grouped: f64,
    /// Bob-assignment probabilities unconditioned on the group.
    pub unconditioned: f64,
    /// Entropy of Bob's bit within the cell.
    pub h_b: f64,
}

/// Mutual information between Eve's measurement and Bob's assigned bit
/// within one cell: `H(B) - integral P(c) * entropy(P(b->1 | c)) dc`, the
/// density being the two-component Gaussian mixture over the pair's sides.
pub fn eve_group_info(
    cell: &GroupCell,
    eve: &EveParams,
    quad: &QuadratureSpec,
) -> Result<EveGroupInfo> {
    let (ql, qr) = cell.side_weights();
    let h_b = binary_entropy_unchecked(cell.p_bob1());
    let grouped = h_b - eve_entropy_integral(cell, (ql, qr), cell.bob1_given_side(), eve, quad)?;
    let unconditioned =
        h_b - eve_entropy_integral(cell, (ql, qr), cell.dec1_marginal, eve, quad)?;
    Ok(EveGroupInfo {
        grouped,
        unconditioned,
        h_b,
    })
}

fn eve_entropy_integral(
    cell: &GroupCell,
    side_weights: (f64, f64),
    bob1: (f64, f64),
    eve: &EveParams,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let sa = eve.scale.sqrt();
    let ne = eve.scale * eve.noise_variance;
    let sd = ne.sqrt();
    let (cl, cr) = (sa * cell.centers.0, sa * cell.centers.1);
    let lo = cl.min(cr) - 10.0 * sd;
    let hi = cl.max(cr) + 10.0 * sd;
    let est = integrate_adaptive(
        |c| {
            let dl = side_weights.0 * gaussian_pdf_unchecked(c, cl, ne);
            let dr = side_weights.1 * gaussian_pdf_unchecked(c, cr, ne);
            let total = dl + dr;
            if total <= 0.0 {
                return 0.0;
            }
            let mix = (dl * bob1.0 + dr * bob1.1) / total;
            total * binary_entropy_unchecked(mix)
        },
        lo,
        hi,
        quad,
    )?;
    Ok(est.value)
}
