//! One full two-party key-distillation session: channel estimation and
//! normality screening on disclosed calibration pulses, pairing and group
//! announcements over the transcript, error-correction leakage accounting
//! with digest verification, and privacy amplification.
//!
//! Error correction is modeled as information-accounted leakage plus a
//! digest comparison rather than a concrete code: the corrector hook
//! ([`Corrector`]) receives everything a syndrome decoder would and the
//! default implementation adopts Bob's bits at the accounted cost, so a real
//! syndrome-based corrector can be plugged in without touching the session
//! flow. Reverse reconciliation means Bob's bits define the key and Alice
//! corrects toward them.

use crate::channel::{sample_alice, transmit, Basis, ChannelParams, RawKeySample};
use crate::decoder::{GroupId, GroupingPolicy, PosteriorMethod};
use crate::error::{Error, Result};
use crate::eve::{sample_eve, EveParams};
use crate::keyrate::{GroupSummary, KeyRateReport};
use crate::numerics::RngStream;
use crate::pairing::{alice_bit, DeltaRule, PairingGrid};
use crate::pipeline::{BatchDecoder, McAccumulator, PipelineOptions};
use crate::transcript::{Message, Sender, Transcript};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Session configuration. The channel parameters describe the true channel;
/// the parties work from their own estimate of it.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub params: ChannelParams,
    /// Total pulses, calibration included.
    pub n_pulses: u64,
    /// Fraction of pulses disclosed for channel estimation.
    pub calibration_fraction: f64,
    pub policy: GroupingPolicy,
    pub delta_rule: DeltaRule,
    pub posterior: PosteriorMethod,
    /// Error-correction inefficiency; 1.0 is the information-theoretic floor.
    pub f_ec: f64,
    /// Multiplier on the final key length.
    pub safety_factor: f64,
    pub seed: u64,
    pub record_transcript: bool,
    pub options: PipelineOptions,
}

impl SessionConfig {
    pub fn new(params: ChannelParams, n_pulses: u64, seed: u64) -> Self {
        Self {
            params,
            n_pulses,
            calibration_fraction: 0.1,
            policy: GroupingPolicy::default(),
            delta_rule: DeltaRule::default(),
            posterior: PosteriorMethod::default(),
            f_ec: 1.0,
            safety_factor: 1.0,
            seed,
            record_transcript: true,
            options: PipelineOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "calibration fraction {} outside (0, 1)",
                self.calibration_fraction
            )));
        }
        if self.f_ec < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "error-correction inefficiency {} below 1",
                self.f_ec
            )));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "safety factor {} outside (0, 1]",
                self.safety_factor
            )));
        }
        self.policy.validate()
    }
}

/// Channel estimate from disclosed pulses: `sqrt(G) = cov(a,b)/var(a)` and
/// `xi = (residual variance / N_0 - 1) / G`. Requires at least 10^4 pairs.
pub fn estimate_channel(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    const MIN: usize = 10_000;
    if samples.len() < MIN {
        return Err(Error::InsufficientSamples {
            op: "estimate_channel",
            got: samples.len(),
            need: MIN,
        });
    }
    let n = samples.len() as f64;
    let mean_a = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_b = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut cov = 0.0;
    for (a, b) in samples {
        var_a += (a - mean_a) * (a - mean_a);
        cov += (a - mean_a) * (b - mean_b);
    }
    var_a /= n - 1.0;
    cov /= n - 1.0;
    if var_a <= 0.0 {
        return Err(Error::domain(
            "estimate_channel",
            "Alice's disclosed samples have zero variance".to_string(),
        ));
    }
    let sqrt_g = cov / var_a;
    let g = sqrt_g * sqrt_g;
    let mut var_res = 0.0;
    let mean_res = mean_b - sqrt_g * mean_a;
    for (a, b) in samples {
        let r = b - sqrt_g * a - mean_res;
        var_res += r * r;
    }
    var_res /= n - 1.0;
    let xi = (var_res - 1.0) / g;
    Ok((g, xi))
}

/// Gaussianity screen on calibration residuals: skewness and excess
/// kurtosis, each required to sit within four standard errors of zero.
#[derive(Debug, Clone, Copy)]
pub struct NormalityReport {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skew_z: f64,
    pub kurtosis_z: f64,
    pub pass: bool,
}

pub fn normality_check(residuals: &[f64]) -> Result<NormalityReport> {
    const MIN: usize = 1_000;
    if residuals.len() < MIN {
        return Err(Error::InsufficientSamples {
            op: "normality_check",
            got: residuals.len(),
            need: MIN,
        });
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for r in residuals {
        let d = r - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let skew_z = skewness / (6.0 / n).sqrt();
    let kurtosis_z = excess_kurtosis / (24.0 / n).sqrt();
    Ok(NormalityReport {
        skewness,
        excess_kurtosis,
        skew_z,
        kurtosis_z,
        pass: skew_z.abs() <= 4.0 && kurtosis_z.abs() <= 4.0,
    })
}

/// Bits a group's error correction discloses:
/// `f_ec * n_G * [H_G(A) - I_G(A:B)]`, which at `f_ec = 1` is exactly the
/// conditional-entropy term the grouped key-rate sum subtracts.
pub fn ec_leakage(group: &GroupSummary, f_ec: f64) -> f64 {
    f_ec * group.count as f64 * (group.h_a - group.i_ab)
}

/// Privacy amplification: a binary Toeplitz-matrix hash of the input bits,
/// generated deterministically from the seed (a 2-universal family).
pub fn privacy_amplify(bits: &[bool], out_len: usize, seed: u64) -> Result<Vec<bool>> {
    if out_len > bits.len() {
        return Err(Error::domain(
            "privacy_amplify",
            format!("output length {out_len} exceeds input length {}", bits.len()),
        ));
    }
    if out_len == 0 {
        return Ok(Vec::new());
    }
    let n = bits.len();
    let input = pack_bits(bits);
    // Toeplitz diagonals: out_len + n - 1 random bits
    let mut rng = RngStream::new(seed, 0x70_65_70_6c);
    let diag_words = (out_len + n - 1).div_ceil(64);
    let diag: Vec<u64> = (0..diag_words).map(|_| rng.next_u64()).collect();
    let mut out = Vec::with_capacity(out_len);
    for row in 0..out_len {
        // row j of the Toeplitz matrix is diag[j .. j + n]
        let mut acc = 0u64;
        let shift = row % 64;
        let base = row / 64;
        for (w, &input_word) in input.iter().enumerate() {
            let lo = diag[base + w] >> shift;
            let window = if shift == 0 {
                lo
            } else {
                lo | diag
                    .get(base + w + 1)
                    .map_or(0, |&next| next << (64 - shift))
            };
            acc ^= window & input_word;
        }
        out.push(acc.count_ones() % 2 == 1);
    }
    Ok(out)
}

/// LSB-first bit packing.
pub fn pack_bits(bits: &[bool]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// LSB-first byte packing, for key files.
pub fn pack_bits_bytes(bits: &[bool]) -> Vec<u8> {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    bytes
}

/// 64-bit universal hash of a bit string: polynomial evaluation over the
/// Mersenne prime 2^61 - 1 at a session-wide random point, with the length
/// folded in.
pub fn group_digest(bits: &[bool], point: u64) -> u64 {
    const P: u128 = (1 << 61) - 1;
    let x = (point as u128 % (P - 2)) + 2;
    let mut h: u128 = 0;
    for &bit in bits {
        h = (h * x + bit as u128 + 1) % P;
    }
    h = (h * x + bits.len() as u128) % P;
    h as u64
}

/// Corrector hook: given Alice's hard bits for one group and the group's
/// syndrome information, produce Alice's corrected bits. The accounting
/// model adopts Bob's bits at the leakage cost already charged; a concrete
/// syndrome decoder can replace it.
pub trait Corrector {
    fn correct(
        &self,
        group: GroupId,
        alice_bits: &[bool],
        bob_bits: &[bool],
        leaked_bits: f64,
    ) -> Vec<bool>;
}

/// Perfect correction at the accounted information cost.
#[derive(Debug, Default, Clone, Copy)]
pub struct AccountingCorrector;

impl Corrector for AccountingCorrector {
    fn correct(&self, _: GroupId, _: &[bool], bob_bits: &[bool], _: f64) -> Vec<bool> {
        bob_bits.to_vec()
    }
}

/// Outcome of a completed session.
#[derive(Debug, Clone)]
pub struct SessionResult {
    /// Key-phase pulses (calibration excluded).
    pub n: u64,
    pub calibration_pulses: u64,
    pub kept: u64,
    pub estimated_transmission: f64,
    pub estimated_excess_noise: f64,
    pub normality: NormalityReport,
    pub report: KeyRateReport,
    pub leaked_bits: f64,
    pub final_key: Vec<bool>,
    pub final_key_rate: f64,
    pub key_digest_hex: String,
    pub transcript: Transcript,
}

/// Everything a session produces before the error-correction and
/// privacy-amplification phase: the estimate, the screen, the decoded and
/// grouped bits, and the key-rate accounting. The sweep driver consumes
/// this directly so that non-positive rates are still measurable.
pub struct SessionAccounting {
    pub n_key: u64,
    pub n_cal: u64,
    pub kept: u64,
    pub estimated_transmission: f64,
    pub estimated_excess_noise: f64,
    pub normality: NormalityReport,
    pub report: KeyRateReport,
    per_group_alice: BTreeMap<GroupId, Vec<bool>>,
    per_group_bob: BTreeMap<GroupId, Vec<bool>>,
    transcript: Transcript,
    rng_protocol: RngStream,
}

/// Run a full session with the default corrector.
pub fn run_session(config: &SessionConfig) -> Result<SessionResult> {
    run_session_with(config, &AccountingCorrector)
}

/// Run the quantum, estimation, announcement, and accounting phases.
pub fn session_accounting(config: &SessionConfig) -> Result<SessionAccounting> {
    config.validate()?;
    let params = &config.params;
    let n_cal = ((config.n_pulses as f64) * config.calibration_fraction).floor() as u64;
    let n_key = config.n_pulses - n_cal;
    if n_cal == 0 || n_key == 0 {
        return Err(Error::InvalidConfig(
            "session needs both calibration and key pulses".to_string(),
        ));
    }

    let mut rng_basis = RngStream::new(config.seed, 0);
    let mut rng_alice = RngStream::new(config.seed, 1);
    let mut rng_channel = RngStream::new(config.seed, 2);
    let mut rng_eve = RngStream::new(config.seed, 3);
    let rng_protocol = RngStream::new(config.seed, 4);

    let true_eve = EveParams::for_channel(params)?;

    // Quantum phase: n pulses of (a, b, c) in Bob's measured quadrature.
    let n_total = config.n_pulses as usize;
    let mut pulses: Vec<RawKeySample> = Vec::with_capacity(n_total);
    for _ in 0..n_total {
        let basis = if rng_basis.bernoulli() { Basis::P } else { Basis::X };
        let a = sample_alice(params, &mut rng_alice);
        let b = transmit(a, params, &mut rng_channel);
        let c = sample_eve(a, &true_eve, &mut rng_eve);
        pulses.push(RawKeySample { a, b, c, basis });
    }

    // Calibration: the first n_cal pulses are disclosed and excluded from
    // key material.
    let calibration: Vec<(f64, f64)> = pulses[..n_cal as usize]
        .iter()
        .map(|p| (p.a, p.b))
        .collect();
    let (g_hat, xi_hat) = estimate_channel(&calibration)?;
    let residuals: Vec<f64> = calibration
        .iter()
        .map(|(a, b)| b - g_hat.sqrt() * a)
        .collect();
    let normality = normality_check(&residuals)?;
    if !normality.pass {
        return Err(Error::SessionAbort(format!(
            "normality screen failed: skew z {:.2}, kurtosis z {:.2}",
            normality.skew_z, normality.kurtosis_z
        )));
    }

    // Estimation validates the calibrated channel model; the parties then
    // work from the calibrated parameters. Re-deriving the working
    // parameters from one session's estimate would let the estimator noise
    // in xi_hat (standard error ~ (1/G) sqrt(2/n_cal)) dominate the
    // key-rate accounting, so a surprising estimate aborts instead.
    let expected_se_g = 2.0 * params.transmission.sqrt()
        * (params.bob_conditional_variance() / (n_cal as f64 * params.modulation_variance)).sqrt();
    if (g_hat - params.transmission).abs() > 6.0 * expected_se_g {
        return Err(Error::SessionAbort(format!(
            "estimated transmission {g_hat:.6e} is inconsistent with the calibrated value {:.6e}",
            params.transmission
        )));
    }
    let expected_se_xi = (2.0 / n_cal as f64).sqrt() * params.bob_conditional_variance()
        / (params.transmission * params.shot_noise);
    if (xi_hat - params.excess_noise).abs() > 6.0 * expected_se_xi {
        return Err(Error::SessionAbort(format!(
            "estimated excess noise {xi_hat:.4e} is inconsistent with the calibrated value {}",
            params.excess_noise
        )));
    }
    let model_eve = EveParams::for_channel(params)?;
    let grid = PairingGrid::build(params, model_eve.noise_variance, &config.delta_rule)?;

    let mut transcript = Transcript::new();
    let push = |t: &mut Transcript, sender, message| {
        if config.record_transcript {
            t.push(sender, message);
        }
    };

    push(
        &mut transcript,
        Sender::Bob,
        Message::BasisAnnounce {
            bases: pulses[n_cal as usize..].iter().map(|p| p.basis).collect(),
        },
    );

    // Alice slices, pairs, and announces.
    let decoder = BatchDecoder {
        model: params,
        grid: &grid,
        eve: &model_eve,
        policy: &config.policy,
        method: config.posterior,
    };
    let key_range = n_cal as usize..n_total;
    let mut pairs = Vec::with_capacity(n_key as usize);
    for i in key_range.clone() {
        let (pair, _) = grid.pair_of(grid.region_of(pulses[i].a));
        pairs.push(pair);
    }
    push(
        &mut transcript,
        Sender::Alice,
        Message::PairAnnounce { pairs: pairs.clone() },
    );

    // Bob decodes, post-selects, groups, and announces the groups.
    let mut acc = McAccumulator::new();
    let mut assignments = Vec::new();
    let mut per_group_alice: BTreeMap<GroupId, Vec<bool>> = BTreeMap::new();
    let mut per_group_bob: BTreeMap<GroupId, Vec<bool>> = BTreeMap::new();
    for (offset, i) in key_range.clone().enumerate() {
        let (soft, side) = decoder.decode(pulses[i].a, pulses[i].b);
        let eve_wrong =
            soft.kept && decoder.eve_guess_wrong(soft.pair, side, pulses[i].c);
        acc.add(&soft, side, eve_wrong);
        if let Some(group) = soft.group {
            assignments.push((offset as u32, group));
            per_group_alice
                .entry(group)
                .or_default()
                .push(alice_bit(side) == 1);
            per_group_bob
                .entry(group)
                .or_default()
                .push(soft.decision == 1);
        }
    }
    let kept = acc.kept();
    push(
        &mut transcript,
        Sender::Bob,
        Message::GroupAnnounce {
            assignments: assignments.clone(),
        },
    );

    let report = acc.finalize(params, &grid, &model_eve, &config.policy, &config.options)?;
    Ok(SessionAccounting {
        n_key,
        n_cal,
        kept,
        estimated_transmission: g_hat,
        estimated_excess_noise: xi_hat,
        normality,
        report,
        per_group_alice,
        per_group_bob,
        transcript,
        rng_protocol,
    })
}

/// Run a full session with a caller-supplied corrector.
pub fn run_session_with(config: &SessionConfig, corrector: &dyn Corrector) -> Result<SessionResult> {
    let SessionAccounting {
        n_key,
        n_cal,
        kept,
        estimated_transmission,
        estimated_excess_noise,
        normality,
        report,
        per_group_alice,
        per_group_bob,
        mut transcript,
        mut rng_protocol,
    } = session_accounting(config)?;
    let push = |t: &mut Transcript, sender, message| {
        if config.record_transcript {
            t.push(sender, message);
        }
    };

    // Abort on a non-positive practical rate: no key can be distilled.
    if report.practical_rate <= 0.0 {
        return Err(Error::SessionAbort(format!(
            "non-positive practical key rate {:.6e} bits/pulse",
            report.practical_rate
        )));
    }

    // Error correction: per group, Bob sends the leakage accounting and a
    // verification digest; Alice corrects and verifies.
    let digest_point = rng_protocol.next_u64();
    let mut leaked_total = 0.0;
    let mut leaked_floor_total = 0.0;
    let mut corrected: BTreeMap<GroupId, Vec<bool>> = BTreeMap::new();
    for summary in &report.groups {
        let group = summary.group;
        let bob_bits = per_group_bob.get(&group).expect("group observed");
        let alice_bits = per_group_alice.get(&group).expect("group observed");
        let leaked = ec_leakage(summary, config.f_ec);
        leaked_total += leaked;
        leaked_floor_total += ec_leakage(summary, 1.0);
        let digest = group_digest(bob_bits, digest_point);
        push(
            &mut transcript,
            Sender::Bob,
            Message::SyndromeInfo {
                group,
                leaked_bits: leaked,
                digest,
            },
        );
        let fixed = corrector.correct(group, alice_bits, bob_bits, leaked);
        if group_digest(&fixed, digest_point) != digest {
            return Err(Error::DigestMismatch {
                group: group.to_string(),
            });
        }
        corrected.insert(group, fixed);
    }

    // Privacy amplification sized by the grouped rate minus the extra
    // (above-floor) error-correction spend.
    let secret_bits =
        (n_key as f64) * report.practical_rate - (leaked_total - leaked_floor_total);
    let final_len = (config.safety_factor * secret_bits).floor().max(0.0) as usize;

    let alice_stream: Vec<bool> = corrected.values().flatten().copied().collect();
    let bob_stream: Vec<bool> = per_group_bob.values().flatten().copied().collect();
    let pa_seed = rng_protocol.next_u64();
    push(
        &mut transcript,
        Sender::Bob,
        Message::PaSeed {
            seed: pa_seed,
            output_length: final_len as u64,
        },
    );
    let final_len = final_len.min(bob_stream.len());
    let alice_key = privacy_amplify(&alice_stream, final_len, pa_seed)?;
    let bob_key = privacy_amplify(&bob_stream, final_len, pa_seed)?;
    if alice_key != bob_key {
        return Err(Error::SessionAbort(
            "final keys disagree after verified correction".to_string(),
        ));
    }

    let key_digest_hex = hex::encode(Sha256::digest(pack_bits_bytes(&bob_key)));
    Ok(SessionResult {
        n: n_key,
        calibration_pulses: n_cal,
        kept,
        estimated_transmission,
        estimated_excess_noise,
        normality,
        report,
        leaked_bits: leaked_total,
        final_key: bob_key,
        final_key_rate: final_len as f64 / n_key as f64,
        key_digest_hex,
        transcript,
    })
}

/// Re-run a session from its configuration and check that it reproduces the
/// recorded transcript byte for byte; returns the replayed result.
pub fn replay_session(config: &SessionConfig, transcript: &Transcript) -> Result<SessionResult> {
    let result = run_session(config)?;
    if result.transcript.encode() != transcript.encode() {
        return Err(Error::SessionAbort(
            "replay diverged from the recorded transcript".to_string(),
        ));
    }
    Ok(result)
}
