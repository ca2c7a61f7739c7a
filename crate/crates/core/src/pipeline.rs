//! End-to-end evaluation of the slicing / decoding / post-selection /
//! grouping chain, in two interchangeable modes:
//!
//! * **analytic** - enumerate every (pair, BER-bin) cell with non-negligible
//!   probability and integrate its statistics by quadrature; no sampling.
//! * **Monte-Carlo** - decode sampled pulses and accumulate per-cell tallies;
//!   cell entropies and the eavesdropper integrals still come from the
//!   channel model so that the estimator's bias stays far below the key-rate
//!   scale at long distance, while occupancies and posterior-error averages
//!   are empirical.
//!
//! A cell is the unit of accounting: information terms are conditioned on
//! the public pair announcement and on the group, which is exactly the
//! conditioning every party (including the eavesdropper) has access to.
//! Group summaries aggregate cells by [`GroupId`].

use crate::channel::ChannelParams;
use crate::decoder::{
    ber_bin_intervals, decision_one_prob, gamma_ber_mass_integral, side_bin_probs, GroupId,
    GroupingPolicy, PosteriorMethod, SoftBit,
};
use crate::error::Result;
use crate::eve::{eve_group_info, EveParams, GroupCell};
use crate::keyrate::{group_info_ab, practical_key_rate, GroupSummary, KeyRateReport};
use crate::numerics::{binary_entropy_unchecked, QuadratureSpec};
use crate::pairing::{DeltaRule, PairLabel, PairingGrid, Side};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Number of interleaved blocks used for the Monte-Carlo standard error.
pub const MC_BLOCKS: usize = 10;

/// Knobs shared by both evaluation modes.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub posterior: PosteriorMethod,
    pub quadrature: QuadratureSpec,
    /// Pairs whose total prior mass is below this are skipped.
    pub pair_mass_cutoff: f64,
    /// Cells whose joint mass is below this are skipped.
    pub cell_mass_cutoff: f64,
    /// Pairs are enumerated out to this many prior standard deviations.
    pub span_sigmas: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            posterior: PosteriorMethod::CenterPoint,
            quadrature: QuadratureSpec::default(),
            pair_mass_cutoff: 1e-13,
            cell_mass_cutoff: 1e-14,
            span_sigmas: 9.0,
        }
    }
}

/// Fully evaluated statistics of one (pair, BER-bin) cell.
#[derive(Debug, Clone)]
pub struct CellStats {
    pub pair: PairLabel,
    pub group: GroupId,
    /// Joint probability (or empirical frequency) of the cell per raw pulse.
    pub omega: f64,
    /// Kept-bit count behind `omega` (0 in analytic mode).
    pub count: u64,
    /// `P(Alice's bit = 1 | cell)`.
    pub q_right: f64,
    /// `P(Bob's bit = 1 | cell)`.
    pub p_b1: f64,
    /// `E[entropy(ber) | cell]`.
    pub mean_gamma_ber: f64,
    pub mean_ber: f64,
    pub i_ab: f64,
    pub i_eb: f64,
    pub i_eb_unconditioned: f64,
    pub eve_alice_err: f64,
}

/// The per-cell channel-model constants every estimator shares.
fn cell_model(
    pair: PairLabel,
    bin: u16,
    params: &ChannelParams,
    grid: &PairingGrid,
    eve: &EveParams,
    policy: &GroupingPolicy,
) -> GroupCell {
    let intervals = ber_bin_intervals(pair, bin, policy, params, grid);
    let centers = grid.pair_centers(pair);
    let masses = grid.pair_masses(pair, params);
    let group = GroupId {
        ber_bin: bin,
        asym_bucket: policy.asym_bucket((masses.0 / masses.1).ln()),
    };
    let _ = eve;
    GroupCell {
        pair,
        group,
        centers,
        masses,
        in_bin: (
            side_bin_probs(&intervals, centers.0, params),
            side_bin_probs(&intervals, centers.1, params),
        ),
        dec1_marginal: (
            decision_one_prob(pair, centers.0, params, grid),
            decision_one_prob(pair, centers.1, params, grid),
        ),
    }
}

/// Evaluate one cell fully analytically.
fn analytic_cell(
    pair: PairLabel,
    bin: u16,
    params: &ChannelParams,
    grid: &PairingGrid,
    eve: &EveParams,
    policy: &GroupingPolicy,
    opts: &PipelineOptions,
) -> Result<Option<CellStats>> {
    let cell = cell_model(pair, bin, params, grid, eve, policy);
    let omega = cell.omega();
    if omega.is_nan() || omega <= opts.cell_mass_cutoff {
        return Ok(None);
    }
    let intervals = ber_bin_intervals(pair, bin, policy, params, grid);
    let gamma_mass = gamma_ber_mass_integral(pair, &intervals, params, grid, &opts.quadrature)?;
    let mean_gamma = (gamma_mass / omega).clamp(0.0, 1.0);
    let mean_ber = mean_ber_in_bin(bin, policy, mean_gamma);
    let (_, qr) = cell.side_weights();
    let info = eve_group_info(&cell, eve, &opts.quadrature)?;
    let i_ab = group_info_ab(qr, mean_gamma);
    Ok(Some(CellStats {
        pair,
        group: cell.group,
        omega,
        count: 0,
        q_right: qr,
        p_b1: cell.p_bob1(),
        mean_gamma_ber: mean_gamma,
        mean_ber,
        i_ab,
        i_eb: info.grouped,
        i_eb_unconditioned: info.unconditioned,
        eve_alice_err: cell.eve_side_error(eve),
    }))
}

/// Invert the bin's average entropy back to an average BER. The entropy is
/// strictly monotone on a bin this narrow, so this is exact up to the
/// within-bin curvature and far cheaper than a second quadrature.
fn mean_ber_in_bin(bin: u16, policy: &GroupingPolicy, mean_gamma: f64) -> f64 {
    let lo = bin as f64 * policy.ber_bin_width;
    let hi = ((bin + 1) as f64 * policy.ber_bin_width).min(policy.ber_cut);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..40 {
        let mid = 0.5 * (a + b);
        if binary_entropy_unchecked(mid) < mean_gamma {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Enumerate all cells with non-negligible mass, in deterministic order.
pub fn analytic_cells(
    params: &ChannelParams,
    grid: &PairingGrid,
    eve: &EveParams,
    policy: &GroupingPolicy,
    opts: &PipelineOptions,
) -> Result<Vec<CellStats>> {
    policy.validate()?;
    let sigma = (params.modulation_variance * params.shot_noise).sqrt();
    let max_index = (opts.span_sigmas * sigma / grid.width).ceil() as i64 + 2 * grid.multiple;
    let mut pairs = Vec::new();
    for i in -max_index..=max_index {
        let (pair, side) = grid.pair_of(i);
        if side != Side::Left {
            continue;
        }
        let (m_l, m_r) = grid.pair_masses(pair, params);
        if m_l + m_r < opts.pair_mass_cutoff {
            continue;
        }
        pairs.push(pair);
    }
    let bins = policy.bin_count();
    // evaluate pairs in parallel, then flatten in deterministic order
    let per_pair: Vec<Vec<CellStats>> = pairs
        .par_iter()
        .map(|&pair| {
            let mut cells = Vec::new();
            for bin in 0..bins {
                if let Some(cell) = analytic_cell(pair, bin, params, grid, eve, policy, opts)? {
                    cells.push(cell);
                }
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

/// Aggregate cells into group summaries, keyed and ordered by [`GroupId`].
pub fn summarize_cells(cells: &[CellStats]) -> Vec<GroupSummary> {
    #[derive(Default)]
    struct Acc {
        omega: f64,
        count: u64,
        q_right: f64,
        p_b1: f64,
        i_ab: f64,
        i_eb: f64,
        i_eb_u: f64,
        h_a: f64,
        h_b: f64,
        ber: f64,
        eve_ae: f64,
    }
    let mut groups: BTreeMap<GroupId, Acc> = BTreeMap::new();
    for c in cells {
        let acc = groups.entry(c.group).or_default();
        acc.omega += c.omega;
        acc.count += c.count;
        acc.q_right += c.omega * c.q_right;
        acc.p_b1 += c.omega * c.p_b1;
        acc.i_ab += c.omega * c.i_ab;
        acc.i_eb += c.omega * c.i_eb;
        acc.i_eb_u += c.omega * c.i_eb_unconditioned;
        acc.h_a += c.omega * binary_entropy_unchecked(c.q_right);
        acc.h_b += c.omega * binary_entropy_unchecked(c.p_b1);
        acc.ber += c.omega * c.mean_ber;
        acc.eve_ae += c.omega * c.eve_alice_err;
    }
    groups
        .into_iter()
        .filter(|(_, a)| a.omega > 0.0)
        .map(|(group, a)| GroupSummary {
            group,
            probability: a.omega,
            count: a.count,
            i_ab: a.i_ab / a.omega,
            i_eb: a.i_eb / a.omega,
            i_eb_unconditioned: a.i_eb_u / a.omega,
            h_a: a.h_a / a.omega,
            h_b: a.h_b / a.omega,
            mean_ber: a.ber / a.omega,
            eve_alice_ber: a.eve_ae / a.omega,
        })
        .collect()
}

/// Quadrature-only key-rate evaluation of one channel configuration.
pub fn analytic_report(
    params: &ChannelParams,
    policy: &GroupingPolicy,
    rule: &DeltaRule,
    opts: &PipelineOptions,
) -> Result<KeyRateReport> {
    let eve = EveParams::for_channel(params)?;
    let grid = PairingGrid::build(params, eve.noise_variance, rule)?;
    let cells = analytic_cells(params, &grid, &eve, policy, opts)?;
    let groups = summarize_cells(&cells);
    Ok(practical_key_rate(groups, 0, params))
}

/// Per-cell tallies of a Monte-Carlo run.
#[derive(Debug, Default, Clone)]
struct McCell {
    count: u64,
    alice_one: u64,
    bob_one: u64,
    sum_gamma_ber: f64,
    sum_ber: f64,
    eve_wrong: u64,
    block_count: [u32; MC_BLOCKS],
    block_gamma: [f64; MC_BLOCKS],
}

/// Accumulates decoded pulses into (pair, bin) cells.
#[derive(Debug, Default)]
pub struct McAccumulator {
    cells: BTreeMap<(i64, u16), McCell>,
    n: u64,
    kept: u64,
}

impl McAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one decoded pulse. `eve_guess_wrong` is whether Eve's
    /// maximum-posterior side guess missed Alice's actual side.
    pub fn add(&mut self, soft: &SoftBit, side: Side, eve_guess_wrong: bool) {
        let block = (self.n % MC_BLOCKS as u64) as usize;
        self.n += 1;
        if !soft.kept {
            return;
        }
        let group = soft.group.expect("kept bits carry a group");
        self.kept += 1;
        let cell = self
            .cells
            .entry((soft.pair.left, group.ber_bin))
            .or_default();
        cell.count += 1;
        cell.alice_one += crate::pairing::alice_bit(side) as u64;
        cell.bob_one += soft.decision as u64;
        let gamma = binary_entropy_unchecked(soft.ber);
        cell.sum_gamma_ber += gamma;
        cell.sum_ber += soft.ber;
        cell.eve_wrong += eve_guess_wrong as u64;
        cell.block_count[block] += 1;
        cell.block_gamma[block] += gamma;
    }

    pub fn pulses(&self) -> u64 {
        self.n
    }

    pub fn kept(&self) -> u64 {
        self.kept
    }

    /// Close the run: evaluate each populated cell against the channel
    /// model, aggregate groups, and attach a block-resampled standard error.
    ///
    /// Occupancies, posterior-error averages, and the empirical bit
    /// frequencies come from the tallies; cell entropies and eavesdropper
    /// integrals come from the model, whose per-cell bias is far below the
    /// sampling noise while per-cell frequency entropies would bias the
    /// total by O(cells / n).
    pub fn finalize(
        self,
        params: &ChannelParams,
        grid: &PairingGrid,
        eve: &EveParams,
        policy: &GroupingPolicy,
        opts: &PipelineOptions,
    ) -> Result<KeyRateReport> {
        let n = self.n.max(1);
        let entries: Vec<(&(i64, u16), &McCell)> = self.cells.iter().collect();
        let evaluated: Vec<(CellStats, &McCell)> = entries
            .par_iter()
            .map(|(&(left, bin), mc)| {
                let (pair, _) = grid.pair_of(left);
                let cell = cell_model(pair, bin, params, grid, eve, policy);
                let info = eve_group_info(&cell, eve, &opts.quadrature)?;
                let (_, qr) = cell.side_weights();
                let mean_gamma = mc.sum_gamma_ber / mc.count as f64;
                Ok((
                    CellStats {
                        pair,
                        group: cell.group,
                        omega: mc.count as f64 / n as f64,
                        count: mc.count,
                        q_right: qr,
                        p_b1: cell.p_bob1(),
                        mean_gamma_ber: mean_gamma,
                        mean_ber: mc.sum_ber / mc.count as f64,
                        i_ab: group_info_ab(qr, mean_gamma),
                        i_eb: info.grouped,
                        i_eb_unconditioned: info.unconditioned,
                        eve_alice_err: mc.eve_wrong as f64 / mc.count as f64,
                    },
                    *mc,
                ))
            })
            .collect::<Result<_>>()?;

        // block-resampled rate spread
        let block_n = |k: usize| -> f64 {
            let full = n / MC_BLOCKS as u64;
            let extra = (n % MC_BLOCKS as u64 > k as u64) as u64;
            (full + extra) as f64
        };
        let mut block_rates = [0.0f64; MC_BLOCKS];
        for (stats, mc) in &evaluated {
            let ha = binary_entropy_unchecked(stats.q_right);
            for (k, rate) in block_rates.iter_mut().enumerate() {
                if mc.block_count[k] > 0 {
                    let mean_gamma = mc.block_gamma[k] / mc.block_count[k] as f64;
                    let w = mc.block_count[k] as f64 / block_n(k);
                    *rate += w * (ha - mean_gamma - stats.i_eb);
                }
            }
        }
        let mean_rate = block_rates.iter().sum::<f64>() / MC_BLOCKS as f64;
        let var = block_rates
            .iter()
            .map(|r| (r - mean_rate).powi(2))
            .sum::<f64>()
            / (MC_BLOCKS as f64 - 1.0);
        let std_error = (var / MC_BLOCKS as f64).sqrt();

        let cells: Vec<CellStats> = evaluated.into_iter().map(|(c, _)| c).collect();
        let groups = summarize_cells(&cells);
        let mut report = practical_key_rate(groups, self.n, params);
        report.std_error = Some(std_error);
        Ok(report)
    }
}

/// Decode a batch of already-sampled pulses against a (possibly estimated)
/// channel model and accumulate them. Pulse order is significant only for
/// the block split; the aggregation itself is order-independent.
pub struct BatchDecoder<'a> {
    pub model: &'a ChannelParams,
    pub grid: &'a PairingGrid,
    pub eve: &'a EveParams,
    pub policy: &'a GroupingPolicy,
    pub method: PosteriorMethod,
}

impl BatchDecoder<'_> {
    /// Decode one pulse; returns the soft bit plus Alice's side.
    pub fn decode(&self, a: f64, b: f64) -> (SoftBit, Side) {
        let region = self.grid.region_of(a);
        let (pair, side) = self.grid.pair_of(region);
        let soft = crate::decoder::decode_sample(
            b,
            pair,
            self.model,
            self.grid,
            self.policy,
            self.method,
        );
        (soft, side)
    }

    /// Whether Eve's side guess from `c` misses Alice's side.
    pub fn eve_guess_wrong(&self, pair: PairLabel, side: Side, c: f64) -> bool {
        let centers = self.grid.pair_centers(pair);
        let masses = self.grid.pair_masses(pair, self.model);
        let (pl, pr) = crate::eve::posterior_pair_side(centers, masses, c, self.eve);
        let guess = if pr > pl { Side::Right } else { Side::Left };
        guess != side
    }
}

/// Kept-fraction sanity value: total group probability of a report.
pub fn total_group_probability(report: &KeyRateReport) -> f64 {
    report.groups.iter().map(|g| g.probability).sum()
}

/// Analytic check value used by tests: probability-weighted posterior error
/// over the kept set, `integral entropy-free mean ber`.
pub fn analytic_kept_fraction(
    params: &ChannelParams,
    grid: &PairingGrid,
    policy: &GroupingPolicy,
    opts: &PipelineOptions,
) -> Result<f64> {
    let sigma = (params.modulation_variance * params.shot_noise).sqrt();
    let max_index = (opts.span_sigmas * sigma / grid.width).ceil() as i64 + 2 * grid.multiple;
    let mut kept = 0.0;
    for i in -max_index..=max_index {
        let (pair, side) = grid.pair_of(i);
        if side != Side::Left {
            continue;
        }
        let (m_l, m_r) = grid.pair_masses(pair, params);
        if m_l + m_r < opts.pair_mass_cutoff {
            continue;
        }
        for bin in 0..policy.bin_count() {
            let intervals = ber_bin_intervals(pair, bin, policy, params, grid);
            let centers = grid.pair_centers(pair);
            let (l0, l1) = side_bin_probs(&intervals, centers.0, params);
            let (r0, r1) = side_bin_probs(&intervals, centers.1, params);
            kept += m_l * (l0 + l1) + m_r * (r0 + r1);
        }
    }
    Ok(kept)
}

/// Cheap cross-check that the cell quadrature conserves probability: the
/// summed gamma-weighted mass never exceeds the cell mass.
#[allow(dead_code)]
fn debug_gamma_bound(cell_omega: f64, gamma_mass: f64) -> bool {
    gamma_mass <= cell_omega * 1.0 + 1e-12
}
