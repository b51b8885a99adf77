//! Network instances: dimensions, per-link SNRs and per-subcarrier channel gains.
//!
//! Two generators are provided. [`gen_iid_channels`] draws every gain as
//! `|h|^2` with `h ~ CN(0, 1)`, i.e. an `Exponential(1)` variate, and leaves
//! the SNRs to the caller. [`gen_geometric_instance`] places nodes in a square
//! area, derives each link's average SNR from COST-231 Walfisch-Ikegami path
//! loss plus log-normal shadowing, and multiplies in i.i.d. Rayleigh fading per
//! subcarrier.
//!
//! Every generator is a pure function of its inputs and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default subcarrier spacing when the caller does not supply one.
pub const DEFAULT_SUBCARRIER_BANDWIDTH_HZ: f64 = 312_500.0;

/// Shortest distance for which the path-loss model is evaluated.
pub const MIN_PATH_LOSS_DISTANCE_M: f64 = 10.0;

/// `K` sources, `J` relays and `N` subcarriers per source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    pub sources: usize,
    pub relays: usize,
    pub subcarriers: usize,
}

impl NetworkDims {
    pub fn new(sources: usize, relays: usize, subcarriers: usize) -> Result<Self> {
        let dims = Self {
            sources,
            relays,
            subcarriers,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources == 0 || self.relays == 0 || self.subcarriers == 0 {
            return Err(Error::InvalidDims(format!(
                "K={}, J={}, N={} (all must be at least 1)",
                self.sources, self.relays, self.subcarriers
            )));
        }
        Ok(())
    }

    /// Orthogonal subcarriers in the whole network, `K * N`.
    pub fn total_subcarriers(&self) -> usize {
        self.sources * self.subcarriers
    }
}

/// Nominal link SNRs (total transmit power over noise power), linear scale.
///
/// The transmit power never appears on its own: every rate expression scales a
/// power fraction by one of these ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrConfig {
    /// `sd[k]`: source `k` to its destination.
    pub sd: Vec<f64>,
    /// `sr[k][j]`: source `k` to relay `j`.
    pub sr: Vec<Vec<f64>>,
    /// `rd[j][k]`: relay `j` to destination `k`.
    pub rd: Vec<Vec<f64>>,
}

impl SnrConfig {
    /// Same SNR on every link of a class, given in dB.
    pub fn uniform_db(dims: NetworkDims, sd_db: f64, sr_db: f64, rd_db: f64) -> Self {
        let (k, j) = (dims.sources, dims.relays);
        Self {
            sd: vec![db_to_linear(sd_db); k],
            sr: vec![vec![db_to_linear(sr_db); j]; k],
            rd: vec![vec![db_to_linear(rd_db); k]; j],
        }
    }

    pub fn validate(&self, dims: NetworkDims) -> Result<()> {
        let (k, j) = (dims.sources, dims.relays);
        if self.sd.len() != k
            || self.sr.len() != k
            || self.sr.iter().any(|row| row.len() != j)
            || self.rd.len() != j
            || self.rd.iter().any(|row| row.len() != k)
        {
            return Err(Error::InvalidSnr(format!("shape does not match K={k}, J={j}")));
        }
        let all = self
            .sd
            .iter()
            .chain(self.sr.iter().flatten())
            .chain(self.rd.iter().flatten());
        for &v in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSnr(format!("entry {v} is not a positive finite ratio")));
            }
        }
        Ok(())
    }
}

/// Squared channel magnitudes per subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub dims: NetworkDims,
    /// `sd[k][n] = |h_0k^(n)|^2`
    pub sd: Vec<Vec<f64>>,
    /// `sr[k][j][n] = |h_kj^(n)|^2`
    pub sr: Vec<Vec<Vec<f64>>>,
    /// `rd[j][k][n] = |h_jk^(n)|^2`
    pub rd: Vec<Vec<Vec<f64>>>,
}

impl ChannelSet {
    /// All gains equal to `g`.
    pub fn constant(dims: NetworkDims, g: f64) -> Self {
        let (k, j, n) = (dims.sources, dims.relays, dims.subcarriers);
        Self {
            dims,
            sd: vec![vec![g; n]; k],
            sr: vec![vec![vec![g; n]; j]; k],
            rd: vec![vec![vec![g; n]; k]; j],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let (k, j, n) = (self.dims.sources, self.dims.relays, self.dims.subcarriers);
        let shape_ok = self.sd.len() == k
            && self.sd.iter().all(|v| v.len() == n)
            && self.sr.len() == k
            && self
                .sr
                .iter()
                .all(|per_relay| per_relay.len() == j && per_relay.iter().all(|v| v.len() == n))
            && self.rd.len() == j
            && self
                .rd
                .iter()
                .all(|per_src| per_src.len() == k && per_src.iter().all(|v| v.len() == n));
        if !shape_ok {
            return Err(Error::ShapeMismatch(format!("expected K={k}, J={j}, N={n}")));
        }
        let gains = self
            .sd
            .iter()
            .flatten()
            .chain(self.sr.iter().flatten().flatten())
            .chain(self.rd.iter().flatten().flatten());
        for &g in gains {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::ShapeMismatch(format!("gain {g} is not finite and nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cost231Params {
    pub ap_height_m: f64,
    pub frequency_ghz: f64,
    pub building_spacing_m: f64,
    pub rooftop_height_m: f64,
    pub dest_height_m: f64,
    pub road_orientation_deg: f64,
    pub street_width_m: f64,
    pub noise_psd_dbm_hz: f64,
    pub shadowing_sigma_db: f64,
    pub area_side_m: f64,
    /// Use the metropolitan-centre frequency correction instead of the
    /// medium-city one.
    pub metropolitan: bool,
}

impl Default for Cost231Params {
    fn default() -> Self {
        Self {
            ap_height_m: 15.0,
            frequency_ghz: 3.5,
            building_spacing_m: 50.0,
            rooftop_height_m: 30.0,
            dest_height_m: 15.0,
            road_orientation_deg: 90.0,
            street_width_m: 12.0,
            noise_psd_dbm_hz: -174.0,
            shadowing_sigma_db: 10.6,
            area_side_m: 200.0,
            metropolitan: false,
        }
    }
}

impl Cost231Params {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ap_height_m", self.ap_height_m),
            ("frequency_ghz", self.frequency_ghz),
            ("building_spacing_m", self.building_spacing_m),
            ("rooftop_height_m", self.rooftop_height_m),
            ("dest_height_m", self.dest_height_m),
            ("street_width_m", self.street_width_m),
            ("area_side_m", self.area_side_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("cost231.{name} must be positive, got {v}")));
            }
        }
        if self.rooftop_height_m <= self.dest_height_m {
            return Err(Error::Config(
                "cost231 rooftop height must exceed the receiver height".into(),
            ));
        }
        if !(0.0..=90.0).contains(&self.road_orientation_deg) {
            return Err(Error::Config("cost231 road orientation must lie in [0, 90] deg".into()));
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(Error::Config("shadowing sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Path loss in dB; `clamped` is set when the distance was raised to the
/// model's validity floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub db: f64,
    pub clamped: bool,
}

/// COST-231 Walfisch-Ikegami non-line-of-sight path loss.
///
/// Distances below [`MIN_PATH_LOSS_DISTANCE_M`] are clamped and flagged.
pub fn cost231_path_loss_db(distance_m: f64, p: &Cost231Params) -> Result<PathLoss> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    let clamped = distance_m < MIN_PATH_LOSS_DISTANCE_M;
    let d_km = distance_m.max(MIN_PATH_LOSS_DISTANCE_M) / 1000.0;
    let f_mhz = p.frequency_ghz * 1000.0;

    let free_space = 32.45 + 20.0 * d_km.log10() + 20.0 * f_mhz.log10();

    let phi = p.road_orientation_deg;
    let orientation = if phi < 35.0 {
        -10.0 + 0.354 * phi
    } else if phi < 55.0 {
        2.5 + 0.075 * (phi - 35.0)
    } else {
        4.0 - 0.114 * (phi - 55.0)
    };
    let rooftop_to_street = -16.9 - 10.0 * p.street_width_m.log10()
        + 10.0 * f_mhz.log10()
        + 20.0 * (p.rooftop_height_m - p.dest_height_m).log10()
        + orientation;

    let dh_base = p.ap_height_m - p.rooftop_height_m;
    let (l_bsh, k_a, k_d) = if dh_base > 0.0 {
        (-18.0 * (1.0 + dh_base).log10(), 54.0, 18.0)
    } else {
        let k_a = if d_km >= 0.5 {
            54.0 - 0.8 * dh_base
        } else {
            54.0 - 0.8 * dh_base * d_km / 0.5
        };
        (0.0, k_a, 18.0 - 15.0 * dh_base / p.rooftop_height_m)
    };
    let city = if p.metropolitan { 1.5 } else { 0.7 };
    let k_f = -4.0 + city * (f_mhz / 925.0 - 1.0);
    let multi_screen = l_bsh + k_a + k_d * d_km.log10() + k_f * f_mhz.log10()
        - 9.0 * p.building_spacing_m.log10();

    let excess = rooftop_to_street + multi_screen;
    let db = if excess > 0.0 {
        free_space + excess
    } else {
        free_space
    };
    Ok(PathLoss { db, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    pub sources: Vec<Point2>,
    pub destinations: Vec<Point2>,
    pub relays: Vec<Point2>,
}

impl NodeLayout {
    /// Sources uniform on the left edge, destinations uniform on the right
    /// edge, relays uniform strictly inside the square.
    pub fn random<R: Rng + ?Sized>(dims: NetworkDims, side: f64, rng: &mut R) -> Self {
        let sources = (0..dims.sources)
            .map(|_| Point2::new(0.0, side * rng.random::<f64>()))
            .collect();
        let destinations = (0..dims.sources)
            .map(|_| Point2::new(side, side * rng.random::<f64>()))
            .collect();
        let relays = (0..dims.relays)
            .map(|_| Point2::new(side * open_unit(rng), side * open_unit(rng)))
            .collect();
        Self {
            sources,
            destinations,
            relays,
        }
    }

    /// Single source-destination pair on the diagonal of the square with the
    /// two relays at fraction `position` along the path, offset by
    /// `offset_m` to either side of it.
    pub fn two_relay(side: f64, position: f64, offset_m: f64) -> Self {
        let src = Point2::new(0.0, 0.0);
        let dst = Point2::new(side, side);
        let (ux, uy) = (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        let along = Point2::new(src.x + position * side, src.y + position * side);
        let relay = |sign: f64| Point2::new(along.x - sign * uy * offset_m, along.y + sign * ux * offset_m);
        Self {
            sources: vec![src],
            destinations: vec![dst],
            relays: vec![relay(1.0), relay(-1.0)],
        }
    }

    pub fn dims_match(&self, dims: NetworkDims) -> bool {
        self.sources.len() == dims.sources
            && self.destinations.len() == dims.sources
            && self.relays.len() == dims.relays
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Channels, average SNRs and node positions for one geometric draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricInstance {
    pub channels: ChannelSet,
    pub snrs: SnrConfig,
    pub layout: NodeLayout,
    /// Links whose distance fell below the path-loss validity floor.
    pub clamped_links: usize,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. Rayleigh gains: every entry is an independent `Exponential(1)` draw.
pub fn gen_iid_channels(dims: NetworkDims, seed: u64) -> Result<ChannelSet> {
    dims.validate()?;
    let mut rng = seeded_rng(seed);
    Ok(draw_fading(dims, &mut rng))
}

fn draw_fading<R: Rng + ?Sized>(dims: NetworkDims, rng: &mut R) -> ChannelSet {
    let (k, j, n) = (dims.sources, dims.relays, dims.subcarriers);
    let mut exp = || -> f64 { Exp1.sample(&mut *rng) };
    let sd = (0..k).map(|_| (0..n).map(|_| exp()).collect()).collect();
    let sr = (0..k)
        .map(|_| (0..j).map(|_| (0..n).map(|_| exp()).collect()).collect())
        .collect();
    let rd = (0..j)
        .map(|_| (0..k).map(|_| (0..n).map(|_| exp()).collect()).collect())
        .collect();
    ChannelSet { dims, sd, sr, rd }
}

/// Random node placement, COST-231 path loss, log-normal shadowing and
/// per-subcarrier Rayleigh fading.
pub fn gen_geometric_instance(
    dims: NetworkDims,
    p: &Cost231Params,
    tx_power_dbm: f64,
    bandwidth_hz_per_subcarrier: f64,
    seed: u64,
) -> Result<GeometricInstance> {
    dims.validate()?;
    p.validate()?;
    let mut rng = seeded_rng(seed);
    let layout = NodeLayout::random(dims, p.area_side_m, &mut rng);
    instance_with_rng(dims, layout, p, tx_power_dbm, bandwidth_hz_per_subcarrier, &mut rng)
}

/// Same link model as [`gen_geometric_instance`] on a caller-supplied layout.
pub fn gen_instance_for_layout(
    dims: NetworkDims,
    layout: NodeLayout,
    p: &Cost231Params,
    tx_power_dbm: f64,
    bandwidth_hz_per_subcarrier: f64,
    seed: u64,
) -> Result<GeometricInstance> {
    dims.validate()?;
    p.validate()?;
    if !layout.dims_match(dims) {
        return Err(Error::ShapeMismatch("layout does not match network dimensions".into()));
    }
    let mut rng = seeded_rng(seed);
    instance_with_rng(dims, layout, p, tx_power_dbm, bandwidth_hz_per_subcarrier, &mut rng)
}

fn instance_with_rng<R: Rng + ?Sized>(
    dims: NetworkDims,
    layout: NodeLayout,
    p: &Cost231Params,
    tx_power_dbm: f64,
    bandwidth_hz_per_subcarrier: f64,
    rng: &mut R,
) -> Result<GeometricInstance> {
    if !(bandwidth_hz_per_subcarrier.is_finite() && bandwidth_hz_per_subcarrier > 0.0) {
        return Err(Error::Config("subcarrier bandwidth must be positive".into()));
    }
    let (k, j) = (dims.sources, dims.relays);
    let noise_dbm =
        p.noise_psd_dbm_hz + linear_to_db(dims.subcarriers as f64 * bandwidth_hz_per_subcarrier);
    let shadow = Normal::new(0.0, p.shadowing_sigma_db)
        .map_err(|e| Error::Config(format!("shadowing distribution: {e}")))?;

    let mut clamped_links = 0;
    let mut link_snr = |a: &Point2, b: &Point2, rng: &mut R| -> Result<f64> {
        let pl = cost231_path_loss_db(a.distance(b), p)?;
        if pl.clamped {
            clamped_links += 1;
        }
        let shadowing_db = shadow.sample(rng);
        Ok(db_to_linear(tx_power_dbm - pl.db - shadowing_db - noise_dbm))
    };

    let mut sd = Vec::with_capacity(k);
    for kk in 0..k {
        sd.push(link_snr(&layout.sources[kk], &layout.destinations[kk], rng)?);
    }
    let mut sr = vec![Vec::with_capacity(j); k];
    for (kk, row) in sr.iter_mut().enumerate() {
        for jj in 0..j {
            row.push(link_snr(&layout.sources[kk], &layout.relays[jj], rng)?);
        }
    }
    let mut rd = vec![Vec::with_capacity(k); j];
    for (jj, row) in rd.iter_mut().enumerate() {
        for kk in 0..k {
            row.push(link_snr(&layout.relays[jj], &layout.destinations[kk], rng)?);
        }
    }
    let snrs = SnrConfig { sd, sr, rd };
    let channels = draw_fading(dims, rng);
    Ok(GeometricInstance {
        channels,
        snrs,
        layout,
        clamped_links,
    })
}

/// Raw shadowing draws in dB, exposed for statistical checks of the generator.
pub fn shadowing_samples_db(p: &Cost231Params, count: usize, seed: u64) -> Result<Vec<f64>> {
    let shadow = Normal::new(0.0, p.shadowing_sigma_db)
        .map_err(|e| Error::Config(format!("shadowing distribution: {e}")))?;
    let mut rng = seeded_rng(seed);
    Ok((0..count).map(|_| shadow.sample(&mut rng)).collect())
}
