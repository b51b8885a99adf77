//! Brute-force verifiers for tiny instances.
//!
//! The grid oracles enumerate every strategy pattern and quantize every
//! power simplex with uniform barycentric levels. For a fixed pattern the
//! remaining power problem is a concave max-min over a product of simplices,
//! so each pattern is also pushed to its exact optimum with a central-cut
//! ellipsoid method started from the whole domain. Every value reported is
//! attained by a feasible allocation, so the oracles never exceed the true
//! optimum.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netmodel::{ChannelSet, SnrConfig};
use crate::rates::{rate_sd, rate_sr, rate_srd, Node};

/// Guard on enumerated block assignments.
pub const MAX_BLOCK_ASSIGNMENTS: f64 = 1e6;

/// Odometer over all block assignments.
#[derive(Debug, Clone)]
pub struct BlockAssignments {
    digits: Vec<usize>,
    base: usize,
    allow_direct: bool,
    total: usize,
    done: bool,
}

impl BlockAssignments {
    /// Number of assignments, `J^K` or `(J+1)^K`.
    pub fn total(&self) -> usize {
        self.total
    }
}

impl Iterator for BlockAssignments {
    type Item = Vec<Node>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self
            .digits
            .iter()
            .map(|&d| if self.allow_direct { Node::from_index(d) } else { Node::Relay(d) })
            .collect();
        let mut i = self.digits.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.base {
                break;
            }
            self.digits[i] = 0;
        }
        Some(item)
    }
}

/// Every choice of one relay (or, with `allow_direct`, direct transmission)
/// per source, in lexicographic order.
pub fn enumerate_block_assignments(sources: usize, relays: usize, allow_direct: bool) -> Result<BlockAssignments> {
    if sources == 0 || relays == 0 {
        return Err(Error::InvalidDims("need at least one source and one relay".into()));
    }
    let base = relays + usize::from(allow_direct);
    let count = (base as f64).powi(sources as i32);
    if count > MAX_BLOCK_ASSIGNMENTS {
        return Err(Error::GuardExceeded {
            what: "block assignments (use a scheme that does not enumerate)",
            count,
            limit: MAX_BLOCK_ASSIGNMENTS,
        });
    }
    Ok(BlockAssignments {
        digits: vec![0; sources],
        base,
        allow_direct,
        total: count as usize,
        done: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best min-rate over grid and refinement.
    pub value: f64,
    /// Best min-rate over grid points only.
    pub grid_value: f64,
    /// Strategy patterns visited.
    pub patterns: usize,
}

fn check_levels(levels: usize) -> Result<()> {
    if !(2..=51).contains(&levels) {
        return Err(Error::Domain(format!("grid levels must be in 2..=51, got {levels}")));
    }
    Ok(())
}

/// Integer compositions of `total` into `parts` nonnegative parts.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; parts];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
    }
    if parts > 0 {
        rec(0, total, &mut cur, &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A group of variables on the simplex `{x >= 0, sum x = budget}`.
#[derive(Debug, Clone)]
struct Group {
    vars: Vec<usize>,
    budget: f64,
}

/// Concave max-min over a product of simplices: `objective` returns the value
/// and a supergradient in full coordinates.
fn ellipsoid_maximize<F>(groups: &[Group], dim: usize, objective: F) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    // reduced coordinates: every group drops its last variable
    let free: Vec<(usize, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| grp.vars[..grp.vars.len() - 1].iter().map(move |&v| (g, v)))
        .collect();
    let d = free.len();
    let expand = |z: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for grp in groups {
            let m = grp.vars.len();
            let mut used = 0.0;
            for &v in &grp.vars[..m - 1] {
                let zi = z[free.iter().position(|&(_, fv)| fv == v).unwrap()];
                x[v] = zi;
                used += zi;
            }
            x[grp.vars[m - 1]] = grp.budget - used;
        }
        x
    };
    let reduce_grad = |g: &[f64]| -> Vec<f64> {
        free.iter()
            .map(|&(gi, v)| g[v] - g[*groups[gi].vars.last().unwrap()])
            .collect()
    };
    // feasibility cut for a reduced point, as a vector a with a.z > b violated
    let violated = |z: &[f64]| -> Option<Vec<f64>> {
        for (i, &zi) in z.iter().enumerate() {
            if zi < 0.0 {
                let mut a = vec![0.0; d];
                a[i] = -1.0;
                return Some(a);
            }
        }
        for (g, grp) in groups.iter().enumerate() {
            let idx: Vec<usize> = (0..d).filter(|&i| free[i].0 == g).collect();
            if idx.iter().map(|&i| z[i]).sum::<f64>() > grp.budget {
                let mut a = vec![0.0; d];
                for i in idx {
                    a[i] = 1.0;
                }
                return Some(a);
            }
        }
        None
    };

    let mut z: Vec<f64> = free
        .iter()
        .map(|&(g, _)| groups[g].budget / groups[g].vars.len() as f64)
        .collect();
    let (mut best, _) = objective(&expand(&z));
    if d == 0 {
        return best;
    }
    let radius: f64 = groups.iter().map(|g| g.budget * g.budget * g.vars.len() as f64).sum::<f64>().sqrt();
    if d == 1 {
        let b = groups[free[0].0].budget;
        let (mut lo, mut hi) = (0.0, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (v, g) = objective(&expand(&[mid]));
            best = best.max(v);
            let slope = reduce_grad(&g)[0];
            if slope > 0.0 {
                lo = mid;
            } else if slope < 0.0 {
                hi = mid;
            } else {
                break;
            }
        }
        return best;
    }
    let df = d as f64;
    let mut p = vec![vec![0.0; d]; d];
    for (i, row) in p.iter_mut().enumerate() {
        row[i] = radius * radius;
    }
    for _ in 0..40_000 {
        // ascent direction to keep: a.z' >= a.z, expressed as cut vector c
        let cut: Vec<f64> = match violated(&z) {
            Some(a) => a.iter().map(|v| -v).collect(),
            None => {
                let (v, g) = objective(&expand(&z));
                best = best.max(v);
                let gr = reduce_grad(&g);
                if gr.iter().all(|&x| x == 0.0) {
                    break;
                }
                gr
            }
        };
        let pc: Vec<f64> = (0..d).map(|i| (0..d).map(|j| p[i][j] * cut[j]).sum()).collect();
        let cpc: f64 = cut.iter().zip(&pc).map(|(a, b)| a * b).sum();
        if !(cpc > 0.0) || cpc.sqrt() < 1e-15 {
            break;
        }
        let s = cpc.sqrt();
        for i in 0..d {
            z[i] += pc[i] / (s * (df + 1.0));
        }
        let f = df * df / (df * df - 1.0);
        let w = 2.0 / ((df + 1.0) * cpc);
        for i in 0..d {
            for j in 0..d {
                p[i][j] = f * (p[i][j] - w * pc[i] * pc[j]);
            }
        }
        for i in 0..d {
            for j in 0..i {
                let m = 0.5 * (p[i][j] + p[j][i]);
                p[i][j] = m;
                p[j][i] = m;
            }
        }
    }
    best
}

/// Strategy and power bookkeeping for one fixed pattern.
struct Pattern<'a> {
    ch: &'a ChannelSet,
    snrs: &'a SnrConfig,
    /// `node[k][n]`
    node: Vec<Vec<Node>>,
    /// Block family: relay rates are `min(sum sr, sum srd)`.
    block: bool,
    /// Relay power variable of `(k, n)`.
    relay_var: Vec<Vec<Option<usize>>>,
    groups: Vec<Group>,
    dim: usize,
}

impl<'a> Pattern<'a> {
    fn new(ch: &'a ChannelSet, snrs: &'a SnrConfig, node: Vec<Vec<Node>>, block: bool) -> Self {
        let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
        let mut groups: Vec<Group> = (0..kk)
            .map(|k| Group {
                vars: (0..nn).map(|n| k * nn + n).collect(),
                budget: 1.0,
            })
            .collect();
        let mut dim = kk * nn;
        let mut relay_var = vec![vec![None; nn]; kk];
        for j in 0..jj {
            let mut vars = Vec::new();
            for k in 0..kk {
                for n in 0..nn {
                    if node[k][n] == Node::Relay(j) {
                        relay_var[k][n] = Some(dim);
                        vars.push(dim);
                        dim += 1;
                    }
                }
            }
            if !vars.is_empty() {
                groups.push(Group { vars, budget: 1.0 });
            }
        }
        Self {
            ch,
            snrs,
            node,
            block,
            relay_var,
            groups,
            dim,
        }
    }

    /// Rate of source `k`, with its gradient added into `grad` when given.
    fn source_rate(&self, k: usize, x: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
        let (ch, snrs) = (self.ch, self.snrs);
        let nn = ch.dims.subcarriers;
        let a = |n: usize| x[k * nn + n].max(0.0);
        let b = |n: usize| self.relay_var[k][n].map_or(0.0, |v| x[v].max(0.0));
        let sd_gain = |n: usize| snrs.sd[k] * ch.sd[k][n];
        // (value, d/d alpha, d/d beta) of one link expression
        let sd = |n: usize| {
            let s = sd_gain(n);
            (rate_sd(snrs.sd[k], a(n), ch.sd[k][n]), s / ((1.0 + s * a(n)) * LN_2), 0.0)
        };
        let sr = |n: usize, j: usize| {
            let s = snrs.sr[k][j] * ch.sr[k][j][n];
            (rate_sr(snrs.sr[k][j], a(n), ch.sr[k][j][n]), 0.5 * s / ((1.0 + s * a(n)) * LN_2), 0.0)
        };
        let srd = |n: usize, j: usize| {
            let s0 = sd_gain(n);
            let s1 = snrs.rd[j][k] * ch.rd[j][k][n];
            let den = (1.0 + s0 * a(n) + s1 * b(n)) * LN_2;
            (
                rate_srd(snrs.sd[k], a(n), ch.sd[k][n], snrs.rd[j][k], b(n), ch.rd[j][k][n]),
                0.5 * s0 / den,
                0.5 * s1 / den,
            )
        };
        let mut parts: Vec<(usize, (f64, f64, f64))> = Vec::new();
        let value = if self.block {
            match self.node[k][0] {
                Node::Direct => {
                    parts.extend((0..nn).map(|n| (n, sd(n))));
                    parts.iter().map(|p| p.1 .0).sum()
                }
                Node::Relay(j) => {
                    let s1: Vec<_> = (0..nn).map(|n| (n, sr(n, j))).collect();
                    let s2: Vec<_> = (0..nn).map(|n| (n, srd(n, j))).collect();
                    let v1: f64 = s1.iter().map(|p| p.1 .0).sum();
                    let v2: f64 = s2.iter().map(|p| p.1 .0).sum();
                    parts = if v1 <= v2 { s1 } else { s2 };
                    v1.min(v2)
                }
            }
        } else {
            let mut total = 0.0;
            for n in 0..nn {
                let piece = match self.node[k][n] {
                    Node::Direct => sd(n),
                    Node::Relay(j) => {
                        let (p1, p2) = (sr(n, j), srd(n, j));
                        if p1.0 <= p2.0 {
                            p1
                        } else {
                            p2
                        }
                    }
                };
                total += piece.0;
                parts.push((n, piece));
            }
            total
        };
        if let Some(g) = grad {
            for (n, (_, da, db)) in parts {
                g[k * nn + n] += da;
                if let Some(v) = self.relay_var[k][n] {
                    g[v] += db;
                }
            }
        }
        value
    }

    fn min_rate_with_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let kk = self.ch.dims.sources;
        let rates: Vec<f64> = (0..kk).map(|k| self.source_rate(k, x, None)).collect();
        let k = (0..kk).min_by(|&a, &b| rates[a].total_cmp(&rates[b])).unwrap();
        let mut g = vec![0.0; self.dim];
        self.source_rate(k, x, Some(&mut g));
        (rates[k], g)
    }

    /// Grid search: relays over their joint grid, then every source takes
    /// the best point of its own grid independently.
    fn grid(&self, levels: usize) -> f64 {
        let kk = self.ch.dims.sources;
        let nn = self.ch.dims.subcarriers;
        let steps = levels - 1;
        let relay_groups = &self.groups[kk..];
        let relay_grids: Vec<Vec<Vec<usize>>> =
            relay_groups.iter().map(|g| compositions(steps, g.vars.len())).collect();
        let source_grid = compositions(steps, nn);
        let mut x = vec![0.0; self.dim];
        let mut counter = vec![0usize; relay_grids.len()];
        let mut best = f64::NEG_INFINITY;
        loop {
            for (g, grp) in relay_groups.iter().enumerate() {
                for (&v, &c) in grp.vars.iter().zip(&relay_grids[g][counter[g]]) {
                    x[v] = grp.budget * c as f64 / steps as f64;
                }
            }
            let mut worst = f64::INFINITY;
            for k in 0..kk {
                let mut bk = f64::NEG_INFINITY;
                for comp in &source_grid {
                    for n in 0..nn {
                        x[k * nn + n] = comp[n] as f64 / steps as f64;
                    }
                    bk = bk.max(self.source_rate(k, &x, None));
                }
                worst = worst.min(bk);
            }
            best = best.max(worst);
            let mut i = 0;
            loop {
                if i == counter.len() {
                    return best;
                }
                counter[i] += 1;
                if counter[i] < relay_grids[i].len() {
                    break;
                }
                counter[i] = 0;
                i += 1;
            }
        }
    }

    fn grid_cells(&self, levels: usize) -> f64 {
        let kk = self.ch.dims.sources;
        let nn = self.ch.dims.subcarriers;
        let steps = levels - 1;
        let relay: f64 = self.groups[kk..]
            .iter()
            .map(|g| binomial(steps + g.vars.len() - 1, g.vars.len() - 1))
            .product();
        relay * kk as f64 * binomial(steps + nn - 1, nn - 1)
    }

    fn refine(&self) -> f64 {
        ellipsoid_maximize(&self.groups, self.dim, |x| self.min_rate_with_grad(x))
    }
}

const MAX_GRID_CELLS: f64 = 2e8;

fn run_patterns(ch: &ChannelSet, snrs: &SnrConfig, patterns: Vec<Vec<Vec<Node>>>, block: bool, levels: usize) -> Result<OracleResult> {
    let built: Vec<Pattern> = patterns.into_iter().map(|p| Pattern::new(ch, snrs, p, block)).collect();
    let cells: f64 = built.iter().map(|p| p.grid_cells(levels)).sum();
    if cells > MAX_GRID_CELLS {
        return Err(Error::GuardExceeded {
            what: "oracle grid cells",
            count: cells,
            limit: MAX_GRID_CELLS,
        });
    }
    let values: Vec<(f64, f64)> = built.par_iter().map(|p| (p.grid(levels), p.refine())).collect();
    let grid_value = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let value = values.iter().map(|v| v.0.max(v.1)).fold(f64::NEG_INFINITY, f64::max);
    Ok(OracleResult {
        value,
        grid_value,
        patterns: built.len(),
    })
}

/// Best min-rate over every per-subcarrier strategy choice and quantized
/// source and relay power simplices. Requires `K*N <= 4` and `J <= 2`.
pub fn grid_oracle_subcarrier(ch: &ChannelSet, snrs: &SnrConfig, levels: usize) -> Result<OracleResult> {
    ch.validate()?;
    snrs.validate(ch.dims)?;
    check_levels(levels)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    if kk * nn > 4 || jj > 2 {
        return Err(Error::GuardExceeded {
            what: "subcarrier oracle size (K*N <= 4, J <= 2)",
            count: (kk * nn) as f64,
            limit: 4.0,
        });
    }
    let patterns = enumerate_block_assignments(kk * nn, jj, true)?
        .map(|flat| flat.chunks(nn).map(<[Node]>::to_vec).collect())
        .collect();
    run_patterns(ch, snrs, patterns, false, levels)
}

/// Best min-rate over every block strategy choice and quantized power
/// simplices. Requires `(J+1)^K <= 10^4` and `K*N <= 8`.
pub fn grid_oracle_block(ch: &ChannelSet, snrs: &SnrConfig, levels: usize) -> Result<OracleResult> {
    ch.validate()?;
    snrs.validate(ch.dims)?;
    check_levels(levels)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let count = ((jj + 1) as f64).powi(kk as i32);
    if count > 1e4 || kk * nn > 8 {
        return Err(Error::GuardExceeded {
            what: "block oracle size ((J+1)^K <= 1e4, K*N <= 8)",
            count,
            limit: 1e4,
        });
    }
    let patterns = enumerate_block_assignments(kk, jj, true)?
        .map(|a| a.into_iter().map(|node| vec![node; nn]).collect())
        .collect();
    run_patterns(ch, snrs, patterns, true, levels)
}

/// Best min-rate of the relaxed error-free-relaying program (sources at
/// equal power, relays free to split power over any subcarriers), over
/// quantized relay simplices plus refinement. Requires `K*N <= 4`, `J <= 2`.
pub fn grid_oracle_ideal(ch: &ChannelSet, snrs: &SnrConfig, levels: usize) -> Result<OracleResult> {
    ch.validate()?;
    snrs.validate(ch.dims)?;
    check_levels(levels)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let m = kk * nn;
    if m > 4 || jj > 2 {
        return Err(Error::GuardExceeded {
            what: "ideal oracle size (K*N <= 4, J <= 2)",
            count: m as f64,
            limit: 4.0,
        });
    }
    let offset = |k: usize, n: usize| snrs.sd[k] * ch.sd[k][n] / nn as f64;
    let gain = |j: usize, k: usize, n: usize| snrs.rd[j][k] * ch.rd[j][k][n];
    let eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let mut rates = vec![0.0; kk];
        let mut grads = vec![vec![0.0; jj * m]; kk];
        for k in 0..kk {
            for n in 0..nn {
                let s: f64 = 1.0 + offset(k, n) + (0..jj).map(|j| gain(j, k, n) * x[j * m + k * nn + n].max(0.0)).sum::<f64>();
                rates[k] += 0.5 * s.log2();
                for j in 0..jj {
                    grads[k][j * m + k * nn + n] = 0.5 * gain(j, k, n) / (s * LN_2);
                }
            }
        }
        let k = (0..kk).min_by(|&a, &b| rates[a].total_cmp(&rates[b])).unwrap();
        (rates[k], grads.swap_remove(k))
    };
    let groups: Vec<Group> = (0..jj)
        .map(|j| Group {
            vars: (j * m..(j + 1) * m).collect(),
            budget: 1.0,
        })
        .collect();
    let grid = compositions(levels - 1, m);
    let steps = (levels - 1) as f64;
    let grid_value = (0..grid.len().pow(jj as u32))
        .into_par_iter()
        .map(|mut idx| {
            let mut x = vec![0.0; jj * m];
            for j in 0..jj {
                let comp = &grid[idx % grid.len()];
                idx /= grid.len();
                for i in 0..m {
                    x[j * m + i] = comp[i] as f64 / steps;
                }
            }
            eval(&x).0
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let refined = ellipsoid_maximize(&groups, jj * m, eval);
    Ok(OracleResult {
        value: grid_value.max(refined),
        grid_value,
        patterns: 1,
    })
}
