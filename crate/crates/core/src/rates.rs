//! Information-rate arithmetic in bits/s/Hz per OFDM use.
//!
//! Cooperative expressions carry the half-duplex factor `1/2`; direct
//! transmission occupies both phases and carries none. Per-source rates are
//! plain sums over the source's subcarriers.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{ChannelSet, NetworkDims, SnrConfig};

/// Transmission strategy of a subcarrier or block: direct, or through one
/// relay (0-based relay index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Direct,
    Relay(usize),
}

impl Node {
    /// Position in the extended node set `{0 = direct, 1..=J}`.
    pub fn index(self) -> usize {
        match self {
            Node::Direct => 0,
            Node::Relay(j) => j + 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Node::Direct
        } else {
            Node::Relay(i - 1)
        }
    }
}

/// Power fractions and time shares for every source, relay and subcarrier.
///
/// `rho`, `r_lift` and `p_lift` describe the time-sharing relaxation; for a
/// selection-respecting allocation `rho` is one-hot over the extended node
/// set and `r_lift = rho * alpha_src`, `p_lift = rho * alpha_relay`. Block
/// allocations keep `rho[j][k][n]` constant over `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// `alpha_src[k][n]`
    pub alpha_src: Vec<Vec<f64>>,
    /// `alpha_relay[j][k][n]`
    pub alpha_relay: Vec<Vec<Vec<f64>>>,
    /// `rho[j][k][n]`, `j = 0` is direct transmission.
    pub rho: Vec<Vec<Vec<f64>>>,
    /// `r_lift[j][k][n]`, `j = 0` is direct transmission.
    pub r_lift: Vec<Vec<Vec<f64>>>,
    /// `p_lift[j][k][n]`
    pub p_lift: Vec<Vec<Vec<f64>>>,
}

fn cube(a: usize, b: usize, c: usize, v: f64) -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![v; c]; b]; a]
}

impl Allocation {
    pub fn zeros(dims: NetworkDims) -> Self {
        let (k, j, n) = (dims.sources, dims.relays, dims.subcarriers);
        Self {
            alpha_src: vec![vec![0.0; n]; k],
            alpha_relay: cube(j, k, n, 0.0),
            rho: cube(j + 1, k, n, 0.0),
            r_lift: cube(j + 1, k, n, 0.0),
            p_lift: cube(j, k, n, 0.0),
        }
    }

    /// The strictly feasible starting point of the relaxations:
    /// `alpha = 1/N`, `rho = 1/(J+1)`, `r = rho/N`, `p = rho/(KN)`.
    pub fn uniform(dims: NetworkDims) -> Self {
        let (k, j, n) = (dims.sources, dims.relays, dims.subcarriers);
        let rho = 1.0 / (j as f64 + 1.0);
        let nf = n as f64;
        Self {
            alpha_src: vec![vec![1.0 / nf; n]; k],
            alpha_relay: cube(j, k, n, 1.0 / (k as f64 * nf)),
            rho: cube(j + 1, k, n, rho),
            r_lift: cube(j + 1, k, n, rho / nf),
            p_lift: cube(j, k, n, rho / (k as f64 * nf)),
        }
    }

    /// Selection-respecting allocation: subcarrier `(k, n)` is served only by
    /// `choice[k][n]`, with the lifted variables filled in consistently.
    pub fn from_selection(
        alpha_src: Vec<Vec<f64>>,
        alpha_relay: Vec<Vec<Vec<f64>>>,
        choice: &[Vec<Node>],
    ) -> Self {
        let k = alpha_src.len();
        let n = alpha_src.first().map_or(0, Vec::len);
        let j = alpha_relay.len();
        let mut rho = cube(j + 1, k, n, 0.0);
        let mut r_lift = cube(j + 1, k, n, 0.0);
        let mut p_lift = cube(j, k, n, 0.0);
        for kk in 0..k {
            for nn in 0..n {
                let node = choice[kk][nn];
                let idx = node.index();
                rho[idx][kk][nn] = 1.0;
                r_lift[idx][kk][nn] = alpha_src[kk][nn];
                if let Node::Relay(jj) = node {
                    p_lift[jj][kk][nn] = alpha_relay[jj][kk][nn];
                }
            }
        }
        Self {
            alpha_src,
            alpha_relay,
            rho,
            r_lift,
            p_lift,
        }
    }

    pub fn dims(&self) -> NetworkDims {
        NetworkDims {
            sources: self.alpha_src.len(),
            relays: self.alpha_relay.len(),
            subcarriers: self.alpha_src.first().map_or(0, Vec::len),
        }
    }

    /// `sum_n alpha_src[k][n]` per source.
    pub fn source_power(&self) -> Vec<f64> {
        self.alpha_src.iter().map(|v| v.iter().sum()).collect()
    }

    /// `sum_{k,n} alpha_relay[j][k][n]` per relay.
    pub fn relay_power(&self) -> Vec<f64> {
        self.alpha_relay
            .iter()
            .map(|per_src| per_src.iter().flatten().sum())
            .collect()
    }

    /// Largest violation of the power budgets: source budgets with equality,
    /// relay budgets as `<= 1`.
    pub fn budget_violation(&self) -> f64 {
        let src = self
            .source_power()
            .into_iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        let relay = self
            .relay_power()
            .into_iter()
            .map(|s| (s - 1.0).max(0.0))
            .fold(0.0, f64::max);
        let negative = self
            .alpha_src
            .iter()
            .flatten()
            .chain(self.alpha_relay.iter().flatten().flatten())
            .map(|&a| (-a).max(0.0))
            .fold(0.0, f64::max);
        src.max(relay).max(negative)
    }

    /// Largest violation of the time-share simplex `sum_j rho[j][k][n] = 1`
    /// and of `0 <= r, p <= rho`.
    pub fn lifted_violation(&self) -> f64 {
        let dims = self.dims();
        let mut worst: f64 = 0.0;
        for k in 0..dims.sources {
            for n in 0..dims.subcarriers {
                let s: f64 = self.rho.iter().map(|r| r[k][n]).sum();
                worst = worst.max((s - 1.0).abs());
                for j in 0..=dims.relays {
                    let rho = self.rho[j][k][n];
                    let r = self.r_lift[j][k][n];
                    worst = worst.max((-r).max(r - rho).max(0.0));
                    if j > 0 {
                        let p = self.p_lift[j - 1][k][n];
                        worst = worst.max((-p).max(p - rho).max(0.0));
                    }
                }
            }
        }
        worst
    }

    /// Subcarriers (per source) on which more than one relay spends power
    /// above `threshold`.
    pub fn multi_relay_subcarriers(&self, threshold: f64) -> Vec<usize> {
        let dims = self.dims();
        (0..dims.sources)
            .map(|k| {
                (0..dims.subcarriers)
                    .filter(|&n| {
                        self.alpha_relay
                            .iter()
                            .filter(|per_src| per_src[k][n] > threshold)
                            .count()
                            >= 2
                    })
                    .count()
            })
            .collect()
    }
}

/// Which node carries each subcarrier, or each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    /// `[k][n]`
    Subcarrier(Vec<Vec<Node>>),
    /// `[k]`
    Block(Vec<Node>),
    /// Relaxed solution: no single node per subcarrier.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `per_subcarrier[k][n]`; for block evaluations the split of the block
    /// rate is not meaningful and this holds the per-subcarrier terms of the
    /// chosen strategy's binding sum.
    pub per_subcarrier: Vec<Vec<f64>>,
    pub per_source: Vec<f64>,
    pub min_rate: f64,
    pub chosen: Selection,
}

impl RateReport {
    pub fn from_per_source(per_subcarrier: Vec<Vec<f64>>, per_source: Vec<f64>, chosen: Selection) -> Self {
        let min_rate = per_source.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            per_subcarrier,
            per_source,
            min_rate,
            chosen,
        }
    }
}

/// `log2(1 + x)`
pub fn shannon(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Source-to-relay rate, `1/2 log2(1 + SNR_kj alpha_0k g_kj)`.
pub fn rate_sr(snr: f64, alpha_src: f64, gain: f64) -> f64 {
    0.5 * shannon(snr * alpha_src * gain)
}

/// Combined source-relay-destination rate with the destination combining
/// both phases.
pub fn rate_srd(snr_sd: f64, alpha_src: f64, g_sd: f64, snr_rd: f64, alpha_relay: f64, g_rd: f64) -> f64 {
    0.5 * shannon(snr_sd * alpha_src * g_sd + snr_rd * alpha_relay * g_rd)
}

/// Direct rate over the whole slot.
pub fn rate_sd(snr_sd: f64, alpha_src: f64, g_sd: f64) -> f64 {
    shannon(snr_sd * alpha_src * g_sd)
}

/// Rate of the best strategy on subcarrier `(k, n)` at the given powers,
/// with ties resolved toward direct transmission, then the lowest relay.
pub fn subcarrier_rate_finite(
    k: usize,
    n: usize,
    ch: &ChannelSet,
    snrs: &SnrConfig,
    alloc: &Allocation,
) -> (f64, Node) {
    let a0 = alloc.alpha_src[k][n];
    let mut best = (rate_sd(snrs.sd[k], a0, ch.sd[k][n]), Node::Direct);
    for j in 0..ch.dims.relays {
        let coop = rate_sr(snrs.sr[k][j], a0, ch.sr[k][j][n]).min(rate_srd(
            snrs.sd[k],
            a0,
            ch.sd[k][n],
            snrs.rd[j][k],
            alloc.alpha_relay[j][k][n],
            ch.rd[j][k][n],
        ));
        if coop > best.0 {
            best = (coop, Node::Relay(j));
        }
    }
    best
}

/// Block rate of one strategy for source `k`: the direct sum, or the smaller
/// of the summed S-R and S-R-D rates through one relay.
pub fn block_strategy_rate(
    k: usize,
    node: Node,
    ch: &ChannelSet,
    snrs: &SnrConfig,
    alpha_src: &[f64],
    alpha_relay: &[f64],
) -> f64 {
    let n = ch.dims.subcarriers;
    match node {
        Node::Direct => (0..n).map(|i| rate_sd(snrs.sd[k], alpha_src[i], ch.sd[k][i])).sum(),
        Node::Relay(j) => {
            let sr: f64 = (0..n)
                .map(|i| rate_sr(snrs.sr[k][j], alpha_src[i], ch.sr[k][j][i]))
                .sum();
            let srd: f64 = (0..n)
                .map(|i| {
                    rate_srd(
                        snrs.sd[k],
                        alpha_src[i],
                        ch.sd[k][i],
                        snrs.rd[j][k],
                        alpha_relay[i],
                        ch.rd[j][k][i],
                    )
                })
                .sum();
            sr.min(srd)
        }
    }
}

/// Best block strategy for source `k` at the given powers; one node serves
/// every subcarrier of the block.
pub fn block_rate_finite(k: usize, ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation) -> (f64, Node) {
    let a0 = &alloc.alpha_src[k];
    let mut best = (block_strategy_rate(k, Node::Direct, ch, snrs, a0, &[]), Node::Direct);
    for j in 0..ch.dims.relays {
        let r = block_strategy_rate(k, Node::Relay(j), ch, snrs, a0, &alloc.alpha_relay[j][k]);
        if r > best.0 {
            best = (r, Node::Relay(j));
        }
    }
    best
}

/// Rate of subcarrier `(k, n)` when every S-R link decodes: all relays
/// combine at the destination.
pub fn subcarrier_rate_ideal(k: usize, n: usize, ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation) -> f64 {
    let relay: f64 = (0..ch.dims.relays)
        .map(|j| snrs.rd[j][k] * alloc.alpha_relay[j][k][n] * ch.rd[j][k][n])
        .sum();
    0.5 * shannon(snrs.sd[k] * alloc.alpha_src[k][n] * ch.sd[k][n] + relay)
}

/// `x * log2(1 + y / x)`, continuously extended by `0` at `x = 0`.
pub fn perspective(x: f64, y: f64) -> f64 {
    if x > 0.0 {
        x * shannon(y / x)
    } else {
        0.0
    }
}

/// Time-sharing relaxed rate of source `k` with per-subcarrier shares.
pub fn lifted_objective(k: usize, ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation) -> f64 {
    let dims = ch.dims;
    let mut total = 0.0;
    for n in 0..dims.subcarriers {
        let rho0 = alloc.rho[0][k][n];
        total += perspective(rho0, snrs.sd[k] * ch.sd[k][n] * alloc.r_lift[0][k][n]);
        for j in 0..dims.relays {
            let rho = alloc.rho[j + 1][k][n];
            let r = alloc.r_lift[j + 1][k][n];
            let p = alloc.p_lift[j][k][n];
            let sr = 0.5 * perspective(rho, snrs.sr[k][j] * ch.sr[k][j][n] * r);
            let srd = 0.5 * perspective(rho, snrs.sd[k] * ch.sd[k][n] * r + snrs.rd[j][k] * ch.rd[j][k][n] * p);
            total += sr.min(srd);
        }
    }
    total
}

/// Time-sharing relaxed block rate of source `k`; uses `rho[j][k][0]` as the
/// block share of strategy `j`.
pub fn lifted_block_objective(k: usize, ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation) -> f64 {
    let dims = ch.dims;
    let n = dims.subcarriers;
    let rho0 = alloc.rho[0][k][0];
    let mut total: f64 = (0..n)
        .map(|i| perspective(rho0, snrs.sd[k] * ch.sd[k][i] * alloc.r_lift[0][k][i]))
        .sum();
    for j in 0..dims.relays {
        let rho = alloc.rho[j + 1][k][0];
        let r = &alloc.r_lift[j + 1][k];
        let p = &alloc.p_lift[j][k];
        let sr: f64 = (0..n)
            .map(|i| 0.5 * perspective(rho, snrs.sr[k][j] * ch.sr[k][j][i] * r[i]))
            .sum();
        let srd: f64 = (0..n)
            .map(|i| 0.5 * perspective(rho, snrs.sd[k] * ch.sd[k][i] * r[i] + snrs.rd[j][k] * ch.rd[j][k][i] * p[i]))
            .sum();
        total += sr.min(srd);
    }
    total
}

/// Per-subcarrier evaluation with the best strategy picked on every
/// subcarrier.
pub fn finite_subcarrier_report(ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation) -> RateReport {
    let dims = ch.dims;
    let mut per_sub = vec![vec![0.0; dims.subcarriers]; dims.sources];
    let mut chosen = vec![vec![Node::Direct; dims.subcarriers]; dims.sources];
    for k in 0..dims.sources {
        for n in 0..dims.subcarriers {
            let (r, node) = subcarrier_rate_finite(k, n, ch, snrs, alloc);
            per_sub[k][n] = r;
            chosen[k][n] = node;
        }
    }
    let per_source = per_sub.iter().map(|v| v.iter().sum()).collect();
    RateReport::from_per_source(per_sub, per_source, Selection::Subcarrier(chosen))
}

/// Block evaluation with the best strategy picked per source.
pub fn finite_block_report(ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation) -> RateReport {
    let dims = ch.dims;
    let mut per_source = Vec::with_capacity(dims.sources);
    let mut chosen = Vec::with_capacity(dims.sources);
    let mut per_sub = Vec::with_capacity(dims.sources);
    for k in 0..dims.sources {
        let (r, node) = block_rate_finite(k, ch, snrs, alloc);
        per_source.push(r);
        chosen.push(node);
        let a0 = alloc.alpha_src[k][0..].to_vec();
        per_sub.push(
            (0..dims.subcarriers)
                .map(|n| match node {
                    Node::Direct => rate_sd(snrs.sd[k], a0[n], ch.sd[k][n]),
                    Node::Relay(j) => rate_sr(snrs.sr[k][j], a0[n], ch.sr[k][j][n]).min(rate_srd(
                        snrs.sd[k],
                        a0[n],
                        ch.sd[k][n],
                        snrs.rd[j][k],
                        alloc.alpha_relay[j][k][n],
                        ch.rd[j][k][n],
                    )),
                })
                .collect(),
        );
    }
    RateReport::from_per_source(per_sub, per_source, Selection::Block(chosen))
}

/// Evaluation under ideal S-R channels.
pub fn ideal_report(ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation, chosen: Selection) -> RateReport {
    let dims = ch.dims;
    let per_sub: Vec<Vec<f64>> = (0..dims.sources)
        .map(|k| (0..dims.subcarriers).map(|n| subcarrier_rate_ideal(k, n, ch, snrs, alloc)).collect())
        .collect();
    let per_source = per_sub.iter().map(|v| v.iter().sum()).collect();
    RateReport::from_per_source(per_sub, per_source, chosen)
}

/// Hessian of a perspective-type rate term and its spectrum.
#[derive(Debug, Clone)]
pub struct HessianCheck {
    pub hessian: DMatrix<f64>,
    pub max_eigenvalue: f64,
    pub determinant: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
}

impl HessianCheck {
    fn from_matrix(hessian: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(hessian.clone());
        let max_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let determinant = hessian.determinant();
        let mut singular_values: Vec<f64> = hessian.singular_values().iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        Self {
            hessian,
            max_eigenvalue,
            determinant,
            singular_values,
        }
    }

    /// Singular values relative to the largest one; the number of entries
    /// above `rel_tol` is the numerical rank.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > rel_tol * top).count()
    }
}

/// Entries of the Hessian of `x ln(1 + s/x)` in `(x, s)`.
fn perspective_hessian(x: f64, s: f64) -> (f64, f64, f64) {
    let d = (x + s) * (x + s);
    (-s * s / (x * d), s / d, -x / d)
}

/// Hessian of `f(x, y) = x ln(1 + y/x)`.
pub fn hessian_check_f(x: f64, y: f64) -> Result<HessianCheck> {
    if !(x > 0.0) || y < 0.0 {
        return Err(Error::Domain(format!("need x > 0 and y >= 0, got ({x}, {y})")));
    }
    let (xx, xy, yy) = perspective_hessian(x, y);
    Ok(HessianCheck::from_matrix(DMatrix::from_row_slice(2, 2, &[xx, xy, xy, yy])))
}

/// Hessian of `g(x, y, z) = x ln(1 + y/x + z/x)`.
pub fn hessian_check_g(x: f64, y: f64, z: f64) -> Result<HessianCheck> {
    if !(x > 0.0) || y < 0.0 || z < 0.0 {
        return Err(Error::Domain(format!("need x > 0 and y, z >= 0, got ({x}, {y}, {z})")));
    }
    let (xx, xs, ss) = perspective_hessian(x, y + z);
    Ok(HessianCheck::from_matrix(DMatrix::from_row_slice(
        3,
        3,
        &[xx, xs, xs, xs, ss, ss, xs, ss, ss],
    )))
}
