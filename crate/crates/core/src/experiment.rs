//! Monte-Carlo sweeps over network instances, one CSV row per
//! (scheme, sweep value, trial).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc_finite::{
    decentralized_finite, direct_equal_power, direct_only, lbbb_finite, lbsb_finite_with, ubbb_finite, ubsb_finite, HeuristicOptions,
};
use crate::alloc_ideal::{
    block_decentralized_ideal_with, block_exhaustive_ideal, lbsb_ideal_with, ubsb_ideal, DecentralizedMetric,
    MAX_ASSIGNMENTS,
};
use crate::error::{Error, Result};
use crate::netmodel::{
    gen_geometric_instance, gen_iid_channels, gen_instance_for_layout, ChannelSet, Cost231Params,
    NetworkDims, NodeLayout, SnrConfig,
};
use crate::scheme::{Diagnostics, Scheme, SolveResult};
use crate::solver::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Iid,
    Cost231,
    TwoRelayGeometry,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Iid => "iid",
            Scenario::Cost231 => "cost231",
            Scenario::TwoRelayGeometry => "two_relay_geometry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrRdDb,
    TxPowerDbm,
    RelayPosition,
}

fn d_snr_sd() -> f64 {
    5.0
}
fn d_snr_sr() -> f64 {
    10.0
}
fn d_snr_rd() -> f64 {
    10.0
}
fn d_tx() -> f64 {
    30.0
}
fn d_position() -> f64 {
    0.5
}
fn d_offset() -> f64 {
    25.0
}
fn d_bandwidth() -> f64 {
    crate::netmodel::DEFAULT_SUBCARRIER_BANDWIDTH_HZ
}
fn d_trials() -> usize {
    50
}
fn d_seed() -> u64 {
    1
}
fn d_name() -> String {
    "custom".into()
}

/// One sweep. Values not on the sweep axis stay fixed; the SNR fields only
/// apply to the i.i.d. scenario, the geometric scenarios derive their SNRs
/// from transmit power and path loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_name")]
    pub name: String,
    pub scenario: Scenario,
    pub sources: usize,
    pub relays: usize,
    pub subcarriers: usize,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    #[serde(default = "d_snr_sd")]
    pub snr_sd_db: f64,
    #[serde(default = "d_snr_sr")]
    pub snr_sr_db: f64,
    #[serde(default = "d_snr_rd")]
    pub snr_rd_db: f64,
    #[serde(default = "d_tx")]
    pub tx_power_dbm: f64,
    /// Fraction of the source-destination path at which the two relays sit.
    #[serde(default = "d_position")]
    pub relay_position: f64,
    /// Distance of each relay from the source-destination path.
    #[serde(default = "d_offset")]
    pub relay_offset_m: f64,
    #[serde(default = "d_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_seed")]
    pub base_seed: u64,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub decentralized_metric: DecentralizedMetric,
    /// Second waterfilling round in the subcarrier lower bounds.
    #[serde(default)]
    pub rewaterfill: bool,
    #[serde(default)]
    pub cost231: Cost231Params,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dims(&self) -> Result<NetworkDims> {
        NetworkDims::new(self.sources, self.relays, self.subcarriers)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep_values.is_empty() {
            return bad("sweep_values is empty".into());
        }
        if self.schemes.is_empty() {
            return bad("schemes is empty".into());
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        let allowed = match self.scenario {
            Scenario::Iid => vec![SweepAxis::SnrRdDb],
            Scenario::Cost231 => vec![SweepAxis::TxPowerDbm],
            Scenario::TwoRelayGeometry => vec![SweepAxis::TxPowerDbm, SweepAxis::RelayPosition],
        };
        if !allowed.contains(&self.sweep_axis) {
            return bad(format!(
                "sweep axis {:?} does not apply to the {} scenario",
                self.sweep_axis,
                self.scenario.name()
            ));
        }
        if self.scenario == Scenario::TwoRelayGeometry {
            if dims.sources != 1 || dims.relays != 2 {
                return bad("the two-relay geometry has one source and two relays".into());
            }
            let positions: Vec<f64> = if self.sweep_axis == SweepAxis::RelayPosition {
                self.sweep_values.clone()
            } else {
                vec![self.relay_position]
            };
            if positions.iter().any(|p| !(0.0 < *p && *p < 1.0)) {
                return bad("relay positions must lie strictly between 0 and 1".into());
            }
        }
        for v in [self.snr_sd_db, self.snr_sr_db, self.snr_rd_db, self.tx_power_dbm, self.relay_offset_m] {
            if !v.is_finite() {
                return bad("SNRs, power and offsets must be finite".into());
            }
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive".into());
        }
        if self.scenario != Scenario::Iid {
            self.cost231.validate()?;
        }
        if self.schemes.contains(&Scheme::BlockExhaustiveIdeal) {
            let count = (self.relays as f64).powi(self.sources as i32);
            if count > MAX_ASSIGNMENTS {
                return Err(Error::GuardExceeded {
                    what: "block assignments for block_exhaustive_ideal",
                    count,
                    limit: MAX_ASSIGNMENTS,
                });
            }
        }
        Ok(())
    }

    /// Network instance for one sweep value and seed.
    pub fn instance(&self, sweep_value: f64, seed: u64) -> Result<(ChannelSet, SnrConfig)> {
        let dims = self.dims()?;
        match self.scenario {
            Scenario::Iid => {
                let rd = if self.sweep_axis == SweepAxis::SnrRdDb { sweep_value } else { self.snr_rd_db };
                Ok((gen_iid_channels(dims, seed)?, SnrConfig::uniform_db(dims, self.snr_sd_db, self.snr_sr_db, rd)))
            }
            Scenario::Cost231 => {
                let g = gen_geometric_instance(dims, &self.cost231, sweep_value, self.bandwidth_hz, seed)?;
                Ok((g.channels, g.snrs))
            }
            Scenario::TwoRelayGeometry => {
                let (tx, pos) = match self.sweep_axis {
                    SweepAxis::RelayPosition => (self.tx_power_dbm, sweep_value),
                    _ => (sweep_value, self.relay_position),
                };
                let layout = NodeLayout::two_relay(self.cost231.area_side_m, pos, self.relay_offset_m);
                let g = gen_instance_for_layout(dims, layout, &self.cost231, tx, self.bandwidth_hz, seed)?;
                Ok((g.channels, g.snrs))
            }
        }
    }
}

pub const PRESETS: [(&str, &str); 6] = [
    ("fig2", "i.i.d. channels, error-free S-R links, K=3 J=2 N=32, R-D SNR sweep"),
    ("fig3", "COST-231 geometry, error-free S-R links, K=3 J=2 N=16, transmit power sweep"),
    ("fig4", "one source-destination pair, two relays, J=2 N=16, relay position sweep"),
    ("fig5", "i.i.d. channels, finite S-R links, K=3 J=2 N=8, R-D SNR sweep"),
    ("fig6", "i.i.d. channels, finite S-R links, K=4 J=2 N=8, R-D SNR sweep"),
    ("fig7", "COST-231 geometry, finite S-R links, K=3 J=2 N=8, transmit power sweep"),
];

const IDEAL_SCHEMES: [Scheme; 6] = [
    Scheme::UbsbIdeal,
    Scheme::LbsbIdeal,
    Scheme::BlockExhaustiveIdeal,
    Scheme::BlockDecentralizedIdeal,
    Scheme::DirectEqualPower,
    Scheme::Direct,
];

const FINITE_SCHEMES: [Scheme; 6] = [
    Scheme::UbsbFinite,
    Scheme::LbsbFinite,
    Scheme::Ubbb,
    Scheme::Lbbb,
    Scheme::Decentralized,
    Scheme::Direct,
];

/// Built-in configuration for one of the figures.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = |scenario, k, n, axis, values: Vec<f64>, schemes: &[Scheme]| ExperimentConfig {
        name: name.to_string(),
        scenario,
        sources: k,
        relays: 2,
        subcarriers: n,
        sweep_axis: axis,
        sweep_values: values,
        snr_sd_db: d_snr_sd(),
        snr_sr_db: d_snr_sr(),
        snr_rd_db: d_snr_rd(),
        tx_power_dbm: d_tx(),
        relay_position: d_position(),
        relay_offset_m: d_offset(),
        bandwidth_hz: d_bandwidth(),
        trials: d_trials(),
        base_seed: d_seed(),
        schemes: schemes.to_vec(),
        decentralized_metric: DecentralizedMetric::default(),
        rewaterfill: false,
        cost231: Cost231Params::default(),
        output: None,
    };
    let rd_sweep = vec![0.0, 5.0, 10.0, 15.0, 20.0];
    let tx_sweep = vec![20.0, 25.0, 30.0, 35.0, 40.0];
    let cfg = match name {
        "fig2" => base(Scenario::Iid, 3, 32, SweepAxis::SnrRdDb, rd_sweep, &IDEAL_SCHEMES),
        "fig3" => base(Scenario::Cost231, 3, 16, SweepAxis::TxPowerDbm, tx_sweep, &IDEAL_SCHEMES),
        "fig4" => base(
            Scenario::TwoRelayGeometry,
            1,
            16,
            SweepAxis::RelayPosition,
            (1..10).map(|i| i as f64 / 10.0).collect(),
            &IDEAL_SCHEMES,
        ),
        "fig5" => base(Scenario::Iid, 3, 8, SweepAxis::SnrRdDb, rd_sweep, &FINITE_SCHEMES),
        "fig6" => base(Scenario::Iid, 4, 8, SweepAxis::SnrRdDb, rd_sweep, &FINITE_SCHEMES),
        "fig7" => base(Scenario::Cost231, 3, 8, SweepAxis::TxPowerDbm, tx_sweep, &FINITE_SCHEMES),
        _ => {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            return Err(Error::Config(format!("unknown preset `{name}` (known: {})", known.join(", "))));
        }
    };
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub min_rate: f64,
    pub per_source_rates: Vec<f64>,
    pub solver_status: Status,
    /// Only recorded when timing is requested, so that reruns stay
    /// byte-identical by default.
    pub solve_time_ms: Option<f64>,
    pub violation_count: Option<Vec<usize>>,
    #[serde(skip)]
    pub diagnostics: Diagnostics,
}

pub const CSV_HEADER: [&str; 10] = [
    "scenario",
    "scheme",
    "sweep_value",
    "trial",
    "seed",
    "min_rate",
    "per_source_rates",
    "solver_status",
    "solve_time_ms",
    "violation_count",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub timing: bool,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxIters => "max_iters",
        Status::Infeasible => "infeasible",
    }
}

/// Runs the requested schemes on one instance. Lower bounds that need a
/// relaxation reuse it, solving it if it was not requested itself.
pub fn run_schemes(
    ch: &ChannelSet,
    snrs: &SnrConfig,
    schemes: &[Scheme],
    metric: DecentralizedMetric,
    rewaterfill: bool,
) -> Result<Vec<(SolveResult, f64)>> {
    let mut out: Vec<(SolveResult, f64)> = Vec::with_capacity(schemes.len());
    let mut cache: BTreeMap<Scheme, (SolveResult, f64)> = BTreeMap::new();
    let heur = HeuristicOptions { rewaterfill };
    let mut relaxed = |s: Scheme| -> Result<(SolveResult, f64)> {
        if let Some(hit) = cache.get(&s) {
            return Ok(hit.clone());
        }
        let t0 = Instant::now();
        let r = match s {
            Scheme::UbsbIdeal => ubsb_ideal(ch, snrs)?,
            Scheme::UbsbFinite => ubsb_finite(ch, snrs)?,
            Scheme::Ubbb => ubbb_finite(ch, snrs)?,
            _ => unreachable!(),
        };
        let entry = (r, t0.elapsed().as_secs_f64() * 1e3);
        cache.insert(s, entry.clone());
        Ok(entry)
    };
    for &s in schemes {
        let entry = match s {
            Scheme::UbsbIdeal | Scheme::UbsbFinite | Scheme::Ubbb => relaxed(s)?,
            Scheme::LbsbIdeal | Scheme::LbsbFinite | Scheme::Lbbb => {
                let ub_scheme = match s {
                    Scheme::LbsbIdeal => Scheme::UbsbIdeal,
                    Scheme::LbsbFinite => Scheme::UbsbFinite,
                    _ => Scheme::Ubbb,
                };
                let (ub, _) = relaxed(ub_scheme)?;
                let t0 = Instant::now();
                let r = match s {
                    Scheme::LbsbIdeal => lbsb_ideal_with(&ub, ch, snrs, rewaterfill)?,
                    Scheme::LbsbFinite => lbsb_finite_with(&ub, ch, snrs, heur)?,
                    _ => lbbb_finite(&ub, ch, snrs)?,
                };
                (r, t0.elapsed().as_secs_f64() * 1e3)
            }
            _ => {
                let t0 = Instant::now();
                let r = match s {
                    Scheme::BlockExhaustiveIdeal => block_exhaustive_ideal(ch, snrs)?,
                    Scheme::BlockDecentralizedIdeal => block_decentralized_ideal_with(ch, snrs, metric)?,
                    Scheme::Decentralized => decentralized_finite(ch, snrs)?,
                    Scheme::DirectEqualPower => direct_equal_power(ch, snrs)?,
                    _ => direct_only(ch, snrs)?,
                };
                (r, t0.elapsed().as_secs_f64() * 1e3)
            }
        };
        out.push(entry);
    }
    Ok(out)
}

/// Every scheme on every (sweep value, trial) instance; trial `t` uses seed
/// `base_seed + t` at every sweep value. Rows come back sorted by scheme,
/// sweep value and trial.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut schemes = cfg.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let tasks: Vec<(f64, usize)> = cfg
        .sweep_values
        .iter()
        .flat_map(|&v| (0..cfg.trials).map(move |t| (v, t)))
        .collect();
    let per_task: Vec<Vec<ResultRow>> = tasks
        .par_iter()
        .map(|&(value, trial)| -> Result<Vec<ResultRow>> {
            let seed = cfg.base_seed.wrapping_add(trial as u64);
            let (ch, snrs) = cfg.instance(value, seed)?;
            let results = run_schemes(&ch, &snrs, &schemes, cfg.decentralized_metric, cfg.rewaterfill)?;
            Ok(results
                .into_iter()
                .map(|(r, ms)| ResultRow {
                    scenario: cfg.scenario,
                    scheme: r.scheme,
                    sweep_value: value,
                    trial,
                    seed,
                    min_rate: r.min_rate,
                    per_source_rates: r.per_source.clone(),
                    solver_status: r.diagnostics.status,
                    solve_time_ms: opts.timing.then_some(ms),
                    violation_count: r.diagnostics.violation_count.clone(),
                    diagnostics: r.diagnostics,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = per_task.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.scheme
            .cmp(&b.scheme)
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

/// `%.9g`-style formatting.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        trim(&format!("{:.*}", (8 - exp).max(0) as usize, x))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.name().to_string(),
            r.scheme.name().to_string(),
            format_sig(r.sweep_value),
            r.trial.to_string(),
            r.seed.to_string(),
            format_sig(r.min_rate),
            join(&r.per_source_rates, |v| format_sig(*v)),
            status_name(r.solver_status).to_string(),
            r.solve_time_ms.map(format_sig).unwrap_or_default(),
            r.violation_count.as_ref().map(|v| join(v, usize::to_string)).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
}

/// One JSON object per row with the solver diagnostics.
pub fn write_diagnostics<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    for r in rows {
        let line = serde_json::json!({
            "scheme": r.scheme,
            "sweep_value": r.sweep_value,
            "trial": r.trial,
            "seed": r.seed,
            "diagnostics": r.diagnostics,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub mean_min_rate: f64,
    pub trials: usize,
    pub not_converged: usize,
}

/// Mean min-rate per (scheme, sweep value).
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Scheme, u64), (f64, f64, usize, usize)> = BTreeMap::new();
    for r in rows {
        // order-preserving key for finite floats
        let bits = r.sweep_value.to_bits();
        let key = if r.sweep_value.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let e = groups.entry((r.scheme, key)).or_insert((r.sweep_value, 0.0, 0, 0));
        e.1 += r.min_rate;
        e.2 += 1;
        if r.solver_status != Status::Converged {
            e.3 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((scheme, _), (v, sum, n, bad))| SummaryRow {
            scheme,
            sweep_value: v,
            mean_min_rate: sum / n as f64,
            trials: n,
            not_converged: bad,
        })
        .collect()
}

/// Average link SNRs in dB of an instance, for sanity printing.
pub fn mean_snr_db(snrs: &SnrConfig) -> (f64, f64, f64) {
    let mean = |v: Vec<f64>| 10.0 * (v.iter().sum::<f64>() / v.len() as f64).log10();
    (
        mean(snrs.sd.clone()),
        mean(snrs.sr.iter().flatten().copied().collect()),
        mean(snrs.rd.iter().flatten().copied().collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = preset("fig5").unwrap();
        cfg.sources = 2;
        cfg.subcarriers = 2;
        cfg.trials = 2;
        cfg.sweep_values = vec![0.0, 10.0, 20.0];
        cfg.schemes = vec![Scheme::Decentralized, Scheme::Direct];
        cfg
    }

    #[test]
    fn row_count() {
        let rows = run_experiment(&small(), RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 12);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let cfg = small();
        let a = csv_string(&run_experiment(&cfg, RunOptions::default()).unwrap()).unwrap();
        let b = csv_string(&run_experiment(&cfg, RunOptions::default()).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("scenario,scheme,sweep_value,trial,seed,min_rate,per_source_rates,"));
    }

    #[test]
    fn schemes_share_the_instance() {
        let mut cfg = small();
        cfg.schemes = vec![Scheme::Direct, Scheme::Lbbb, Scheme::Ubbb];
        let rows = run_experiment(&cfg, RunOptions::default()).unwrap();
        for r in rows.iter().filter(|r| r.scheme == Scheme::Direct) {
            let (ch, snrs) = cfg.instance(r.sweep_value, r.seed).unwrap();
            assert_eq!(direct_only(&ch, &snrs).unwrap().min_rate, r.min_rate);
        }
    }

    #[test]
    fn presets_match_figures() {
        assert_eq!(preset("fig5").unwrap().subcarriers, 8);
        assert_eq!(preset("fig2").unwrap().snr_sd_db, 5.0);
        let f4 = preset("fig4").unwrap();
        assert_eq!(f4.scenario, Scenario::TwoRelayGeometry);
        assert_eq!(f4.sweep_axis, SweepAxis::RelayPosition);
        let layout = NodeLayout::two_relay(f4.cost231.area_side_m, 0.5, f4.relay_offset_m);
        let d = layout.sources[0].distance(&layout.destinations[0]);
        assert!((d - 200.0 * 2f64.sqrt()).abs() < 1e-9);
        for (name, _) in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("fig9").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small();
        cfg.trials = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.sweep_values.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.sweep_axis = SweepAxis::RelayPosition;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.sources = 20;
        cfg.schemes = vec![Scheme::BlockExhaustiveIdeal];
        assert!(matches!(cfg.validate(), Err(Error::GuardExceeded { .. })));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = preset("fig7").unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let text = r#"
            scenario = "iid"
            sources = 2
            relays = 2
            subcarriers = 4
            sweep_axis = "snr_rd_db"
            sweep_values = [0.0, 10.0]
            schemes = ["direct", "decentralized"]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.trials, 50);
        assert!(ExperimentConfig::from_toml_str(&format!("{text}\nbogus = 1")).is_err());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(5.630590892639879), "5.63059089");
        assert_eq!(format_sig(0.000123456789012), "0.000123456789");
        assert_eq!(format_sig(1234567890123.0), "1.23456789e+12");
        assert_eq!(format_sig(20.0), "20");
        assert_eq!(format_sig(-0.5), "-0.5");
        assert_eq!(format_sig(0.0), "0");
    }

    #[test]
    fn geometric_snrs_are_sensible() {
        let cfg = preset("fig7").unwrap();
        let (_, snrs) = cfg.instance(30.0, 1).unwrap();
        let (sd, sr, rd) = mean_snr_db(&snrs);
        assert!(sd > -40.0 && sd < 60.0 && sr > -40.0 && rd > -40.0, "{sd} {sr} {rd}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nine_significant_digits(m in 1.0f64..10.0, e in -12i32..14, neg in any::<bool>()) {
                let x = if neg { -m } else { m } * 10f64.powi(e);
                let back: f64 = format_sig(x).parse().unwrap();
                prop_assert!(((back - x) / x).abs() <= 5e-9, "{} -> {}", x, format_sig(x));
            }
        }
    }
}
