//! Distance / excess-noise sweeps: configuration (TOML file plus
//! programmatic overrides), parallel evaluation, and CSV / SVG / metadata
//! emission.
//!
//! Cells are independent; each Monte-Carlo cell derives its own seed from
//! the sweep seed and its cell index, and output rows are ordered by
//! (distance, excess noise, mode) regardless of completion order, so a
//! fixed seed reproduces the CSV byte for byte.

use crate::channel::ChannelParams;
use crate::decoder::GroupingPolicy;
use crate::error::{Error, Result};
use crate::keyrate::KeyRateReport;
use crate::numerics::RngStream;
use crate::pairing::DeltaRule;
use crate::pipeline::{analytic_report, PipelineOptions};
use crate::session::{session_accounting, SessionConfig};
use crate::svg::{render_sweep, SweepCurves};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// How each sweep cell is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Analytic,
    MonteCarlo,
    Both,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(SweepMode::Analytic),
            "monte-carlo" => Ok(SweepMode::MonteCarlo),
            "both" => Ok(SweepMode::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode {other:?}; expected analytic, monte-carlo, or both"
            ))),
        }
    }
}

/// Full sweep configuration; every knob lands in the emitted metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub distances_km: Vec<f64>,
    pub xi_values: Vec<f64>,
    pub modulation_variance: f64,
    pub attenuation_db_per_km: f64,
    /// Pulses per Monte-Carlo cell.
    pub samples: u64,
    pub ber_cut: f64,
    pub ber_bin_width: f64,
    pub asym_buckets: u8,
    pub asym_bucket_width: f64,
    pub f_ec: f64,
    pub calibration_fraction: f64,
    pub delta_a_base: f64,
    pub delta_a_per_km: f64,
    pub seed: u64,
    pub mode: SweepMode,
    /// Output path prefix; `<prefix>.csv`, `<prefix>.svg`,
    /// `<prefix>.meta.json`.
    pub out: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distances_km: (1..=15).map(|k| 10.0 * k as f64).collect(),
            xi_values: vec![0.0],
            modulation_variance: crate::channel::DEFAULT_MODULATION_VARIANCE,
            attenuation_db_per_km: crate::channel::DEFAULT_ATTENUATION_DB_PER_KM,
            samples: 1_000_000,
            ber_cut: 0.40,
            ber_bin_width: 0.01,
            asym_buckets: 4,
            asym_bucket_width: 0.125,
            f_ec: 1.0,
            calibration_fraction: 0.1,
            delta_a_base: 1.0,
            delta_a_per_km: 0.02,
            seed: 1,
            mode: SweepMode::Analytic,
            out: None,
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances_km.is_empty() {
            return Err(Error::InvalidConfig("empty distance list".to_string()));
        }
        if self.xi_values.is_empty() {
            return Err(Error::InvalidConfig("empty excess-noise list".to_string()));
        }
        if self.mode != SweepMode::Analytic && self.samples < 10_000 {
            return Err(Error::InvalidConfig(format!(
                "monte-carlo mode needs at least 1e4 pulses per cell, got {}",
                self.samples
            )));
        }
        self.policy().validate()
    }

    pub fn policy(&self) -> GroupingPolicy {
        GroupingPolicy {
            ber_cut: self.ber_cut,
            ber_bin_width: self.ber_bin_width,
            asym_buckets: self.asym_buckets,
            asym_bucket_width: self.asym_bucket_width,
        }
    }

    pub fn delta_rule(&self) -> DeltaRule {
        DeltaRule {
            base: self.delta_a_base,
            per_km: self.delta_a_per_km,
        }
    }

    fn channel(&self, distance_km: f64, xi: f64) -> Result<ChannelParams> {
        ChannelParams::from_distance(
            distance_km,
            self.attenuation_db_per_km,
            xi,
            self.modulation_variance,
        )
    }
}

/// One output row of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub transmission: f64,
    pub xi: f64,
    pub mode: SweepMode,
    pub report: Option<KeyRateReport>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn all_computed(&self) -> bool {
        self.rows.iter().all(|r| r.report.is_some())
    }
}

/// Evaluate every (distance, xi, mode) cell. Cells run in parallel; failed
/// cells are recorded and the sweep continues.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let modes: &[SweepMode] = match config.mode {
        SweepMode::Analytic => &[SweepMode::Analytic],
        SweepMode::MonteCarlo => &[SweepMode::MonteCarlo],
        SweepMode::Both => &[SweepMode::Analytic, SweepMode::MonteCarlo],
    };
    let mut cells = Vec::new();
    for &distance in &config.distances_km {
        for &xi in &config.xi_values {
            for &mode in modes {
                cells.push((cells.len() as u64, distance, xi, mode));
            }
        }
    }
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(index, distance, xi, mode)| evaluate_cell(config, index, distance, xi, mode))
        .collect();
    Ok(SweepTable { rows })
}

fn evaluate_cell(
    config: &SweepConfig,
    index: u64,
    distance_km: f64,
    xi: f64,
    mode: SweepMode,
) -> SweepRow {
    let outcome = (|| -> Result<(f64, KeyRateReport)> {
        let params = config.channel(distance_km, xi)?;
        let report = match mode {
            SweepMode::MonteCarlo => {
                // a fresh seed per cell, derived from the sweep seed
                let cell_seed = RngStream::new(config.seed, 0x5eed_0000 + index).next_u64();
                let mut session = SessionConfig::new(params, config.samples, cell_seed);
                session.calibration_fraction = config.calibration_fraction;
                session.policy = config.policy();
                session.delta_rule = config.delta_rule();
                session.f_ec = config.f_ec;
                session.record_transcript = false;
                session_accounting(&session)?.report
            }
            _ => analytic_report(
                &params,
                &config.policy(),
                &config.delta_rule(),
                &PipelineOptions::default(),
            )?,
        };
        Ok((params.transmission, report))
    })();
    match outcome {
        Ok((transmission, report)) => SweepRow {
            distance_km,
            transmission,
            xi,
            mode,
            report: Some(report),
            error: None,
        },
        Err(e) => SweepRow {
            distance_km,
            transmission: crate::channel::transmission_from_distance(
                distance_km,
                config.attenuation_db_per_km,
            )
            .unwrap_or(f64::NAN),
            xi,
            mode,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

pub const CSV_HEADER: &str = "distance_km,G,xi,theoretical_bits_per_pulse,practical_bits_per_pulse,efficiency,penalty_2hprime,kept_fraction,mean_ber_ab,mean_ber_ae,n,seed";

/// Render the sweep table as CSV, one row per cell, header pinned.
pub fn to_csv(table: &SweepTable, config: &SweepConfig) -> String {
    let mut out = String::with_capacity(table.rows.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        let (theo, prac, eff, pen, kept, ab, ae, n) = match &row.report {
            Some(r) => (
                r.theoretical_rate,
                r.practical_rate,
                r.efficiency.unwrap_or(f64::NAN),
                r.penalty_2hprime,
                r.kept_fraction,
                r.mean_ber_ab,
                r.mean_ber_ae,
                r.n,
            ),
            None => (
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                0,
            ),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.distance_km,
            row.transmission,
            row.xi,
            theo,
            prac,
            eff,
            pen,
            kept,
            ab,
            ae,
            n,
            config.seed
        ));
    }
    out
}

/// Files written by [`emit_outputs`].
#[derive(Debug, Clone, Serialize)]
pub struct EmittedPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub metadata: PathBuf,
}

/// Write CSV, SVG, and metadata next to the configured output prefix.
pub fn emit_outputs(table: &SweepTable, config: &SweepConfig) -> Result<EmittedPaths> {
    if table.rows.is_empty() {
        return Err(Error::InvalidConfig("empty sweep table".to_string()));
    }
    let prefix = config
        .out
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no output prefix configured".to_string()))?;
    let paths = EmittedPaths {
        csv: PathBuf::from(format!("{prefix}.csv")),
        svg: PathBuf::from(format!("{prefix}.svg")),
        metadata: PathBuf::from(format!("{prefix}.meta.json")),
    };
    write_file(&paths.csv, to_csv(table, config).as_bytes())?;
    write_file(&paths.svg, render_svg(table).as_bytes())?;
    write_file(&paths.metadata, metadata_json(table, config)?.as_bytes())?;
    Ok(paths)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(bytes).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Plot the first excess-noise slice (analytic rows preferred).
pub fn render_svg(table: &SweepTable) -> String {
    let xi0 = table.rows.first().map(|r| r.xi).unwrap_or(0.0);
    let mut picked: Vec<&SweepRow> = Vec::new();
    for row in &table.rows {
        if row.xi != xi0 || row.report.is_none() {
            continue;
        }
        match picked.last() {
            Some(last) if last.distance_km == row.distance_km => {}
            _ => picked.push(row),
        }
    }
    let curves = SweepCurves {
        distances_km: picked.iter().map(|r| r.distance_km).collect(),
        theoretical: picked
            .iter()
            .map(|r| r.report.as_ref().unwrap().theoretical_rate)
            .collect(),
        practical: picked
            .iter()
            // non-positive rates are clamped to zero for display; the CSV
            // keeps them signed
            .map(|r| r.report.as_ref().unwrap().practical_rate.max(0.0))
            .collect(),
        efficiency: picked
            .iter()
            .map(|r| r.report.as_ref().unwrap().efficiency.unwrap_or(0.0))
            .collect(),
    };
    render_sweep(
        &curves,
        &format!("secret key rate vs distance (xi = {xi0})"),
    )
}

fn metadata_json(table: &SweepTable, config: &SweepConfig) -> Result<String> {
    #[derive(Serialize)]
    struct CellMeta {
        distance_km: f64,
        transmission_linear: f64,
        loss_db: f64,
        xi: f64,
        mode: SweepMode,
        std_error: Option<f64>,
        error: Option<String>,
    }
    #[derive(Serialize)]
    struct Meta<'a> {
        tool: &'static str,
        version: &'static str,
        config: &'a SweepConfig,
        cells: Vec<CellMeta>,
    }
    let meta = Meta {
        tool: "cvqkd",
        version: env!("CARGO_PKG_VERSION"),
        config,
        cells: table
            .rows
            .iter()
            .map(|r| CellMeta {
                distance_km: r.distance_km,
                transmission_linear: r.transmission,
                loss_db: -10.0 * r.transmission.log10(),
                xi: r.xi,
                mode: r.mode,
                std_error: r.report.as_ref().and_then(|rep| rep.std_error),
                error: r.error.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::InvalidConfig(format!("metadata serialization: {e}")))
}
