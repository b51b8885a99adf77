//! Schemes for finite-power source-relay links: a relay only helps if it
//! decodes, and each subcarrier (or block) picks direct transmission or one
//! relay.
//!
//! The relaxations replace the strategy indicators by time shares `rho` and
//! work in the lifted variables `r = rho * alpha_src`, `p = rho * alpha_relay`,
//! where every rate term becomes a jointly concave perspective.

use serde::{Deserialize, Serialize};

use crate::alloc_ideal::{waterfill, waterfill_offsets};
use crate::error::{Error, Result};
use crate::netmodel::{ChannelSet, SnrConfig};
use crate::rates::{
    block_strategy_rate, lifted_block_objective, lifted_objective, rate_sd, rate_sr, rate_srd, shannon, Allocation, Node,
    RateReport, Selection,
};
use crate::scheme::{Diagnostics, DualInfo, Scheme, SolveResult};
use crate::solver::{
    solve_maxmin_with, ConcaveFn, Duals, LinearEq, MaxMinProblem, Solution, SolverOptions, Status, Term,
};

/// Time shares below this carry no implied power.
pub const RHO_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct FiniteOptions {
    pub solver: SolverOptions,
    /// Fix every source at equal power, `r = rho / N`.
    pub pin_source_power: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicOptions {
    /// Pour relay power left unused after selection back onto the
    /// subcarriers each relay still serves.
    pub rewaterfill: bool,
}

fn check(ch: &ChannelSet, snrs: &SnrConfig) -> Result<()> {
    ch.validate()?;
    snrs.validate(ch.dims)
}

fn diagnostics(sol: &Solution) -> Diagnostics {
    Diagnostics {
        status: sol.status,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        gap: sol.gap,
        fallback_used: sol.fallback_used,
        waterfillings: 0,
        violation_count: None,
    }
}

fn solve(problem: &MaxMinProblem, opts: &SolverOptions) -> Result<(Solution, Duals)> {
    let (sol, duals) = solve_maxmin_with(problem, opts)?;
    if sol.status == Status::Infeasible {
        return Err(Error::Domain("starting point of the relaxation is not strictly feasible".into()));
    }
    Ok((sol, duals))
}

/// Variable layout of the lifted programs. `unit` is a subcarrier `(k, n)`
/// for the subcarrier program and a source `k` for the block program.
struct Layout {
    relays: usize,
    subcarriers: usize,
    pinned: bool,
    block: bool,
    width: usize,
}

impl Layout {
    fn new(ch: &ChannelSet, pinned: bool, block: bool) -> Self {
        let (jj, nn) = (ch.dims.relays, ch.dims.subcarriers);
        // per unit: rho (J+1), r ((J+1) * m), p (J * m), zeta (J)
        let m = if block { nn } else { 1 };
        let r = if pinned { 0 } else { (jj + 1) * m };
        Self {
            relays: jj,
            subcarriers: nn,
            pinned,
            block,
            width: (jj + 1) + r + jj * m + jj,
        }
    }

    fn per_unit(&self) -> usize {
        if self.block {
            self.subcarriers
        } else {
            1
        }
    }

    fn rho(&self, unit: usize, j: usize) -> usize {
        unit * self.width + j
    }

    /// `r` as sparse coefficients: its own variable, or `rho / N` when pinned.
    fn r(&self, unit: usize, j: usize, i: usize) -> (usize, f64) {
        if self.pinned {
            (self.rho(unit, j), 1.0 / self.subcarriers as f64)
        } else {
            (unit * self.width + (self.relays + 1) + j * self.per_unit() + i, 1.0)
        }
    }

    fn p(&self, unit: usize, j: usize, i: usize) -> usize {
        let r = if self.pinned { 0 } else { (self.relays + 1) * self.per_unit() };
        unit * self.width + (self.relays + 1) + r + j * self.per_unit() + i
    }

    fn zeta(&self, unit: usize, j: usize) -> usize {
        unit * self.width + self.width - self.relays + j
    }

    fn value_r(&self, y: &[f64], unit: usize, j: usize, i: usize) -> f64 {
        let (v, c) = self.r(unit, j, i);
        c * y[v]
    }
}

/// Builds the subcarrier (`block = false`) or block relaxation.
fn lifted_problem(ch: &ChannelSet, snrs: &SnrConfig, lay: &Layout) -> MaxMinProblem {
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let units = if lay.block { kk } else { kk * nn };
    let m = lay.per_unit();
    let dim = units * lay.width;
    let source_of = |u: usize| if lay.block { u } else { u / nn };
    let sub_of = |u: usize, i: usize| if lay.block { i } else { u % nn };

    let mut start = vec![0.0; dim];
    let mut utilities = vec![ConcaveFn::default(); kk];
    let mut constraints = Vec::new();
    let rho0 = 1.0 / (jj as f64 + 1.0);
    for u in 0..units {
        let k = source_of(u);
        for j in 0..=jj {
            start[lay.rho(u, j)] = rho0;
            for i in 0..m {
                if !lay.pinned {
                    start[lay.r(u, j, i).0] = rho0 / nn as f64;
                }
            }
        }
        for j in 0..jj {
            for i in 0..m {
                start[lay.p(u, j, i)] = rho0 / (kk * nn) as f64;
            }
        }
        // direct terms go straight into the utility
        let u_k = &mut utilities[k];
        for i in 0..m {
            let n = sub_of(u, i);
            let (rv, rc) = lay.r(u, 0, i);
            u_k.terms.push(Term::Perspective {
                scale: 1.0,
                den: lay.rho(u, 0),
                coeffs: vec![(rv, rc * snrs.sd[k] * ch.sd[k][n])],
            });
        }
        for j in 0..jj {
            let z = lay.zeta(u, j);
            u_k.linear.push((z, 1.0));
            let den = lay.rho(u, j + 1);
            let sr: Vec<Term> = (0..m)
                .map(|i| {
                    let n = sub_of(u, i);
                    let (rv, rc) = lay.r(u, j + 1, i);
                    Term::Perspective {
                        scale: 0.5,
                        den,
                        coeffs: vec![(rv, rc * snrs.sr[k][j] * ch.sr[k][j][n])],
                    }
                })
                .collect();
            let srd: Vec<Term> = (0..m)
                .map(|i| {
                    let n = sub_of(u, i);
                    let (rv, rc) = lay.r(u, j + 1, i);
                    Term::Perspective {
                        scale: 0.5,
                        den,
                        coeffs: vec![
                            (rv, rc * snrs.sd[k] * ch.sd[k][n]),
                            (lay.p(u, j, i), snrs.rd[j][k] * ch.rd[j][k][n]),
                        ],
                    }
                })
                .collect();
            let cap = |terms: Vec<Term>| ConcaveFn {
                constant: 0.0,
                linear: vec![(z, -1.0)],
                terms,
            };
            let (c_sr, c_srd) = (cap(sr), cap(srd));
            start[z] = 0.0;
            let v = c_sr.value(&start).unwrap().min(c_srd.value(&start).unwrap());
            start[z] = v - 0.1 * v.abs() - 1e-3;
            constraints.push(c_sr);
            constraints.push(c_srd);
        }
        for j in 0..=jj {
            if lay.pinned {
                constraints.push(ConcaveFn::lower_bound(lay.rho(u, j), 0.0));
            } else {
                for i in 0..m {
                    let rv = lay.r(u, j, i).0;
                    constraints.push(ConcaveFn::lower_bound(rv, 0.0));
                    constraints.push(ConcaveFn::affine(vec![(lay.rho(u, j), 1.0), (rv, -1.0)], 0.0));
                }
            }
        }
        for j in 0..jj {
            for i in 0..m {
                let pv = lay.p(u, j, i);
                constraints.push(ConcaveFn::lower_bound(pv, 0.0));
                constraints.push(ConcaveFn::affine(vec![(lay.rho(u, j + 1), 1.0), (pv, -1.0)], 0.0));
            }
        }
    }
    let n_local = constraints.len();
    for j in 0..jj {
        let coeffs = (0..units).flat_map(|u| (0..m).map(move |i| (u, i))).map(|(u, i)| (lay.p(u, j, i), -1.0));
        constraints.push(ConcaveFn::affine(coeffs.collect(), 1.0));
    }
    debug_assert_eq!(constraints.len(), n_local + jj);

    let mut equalities: Vec<LinearEq> = (0..units)
        .map(|u| LinearEq {
            coeffs: (0..=jj).map(|j| (lay.rho(u, j), 1.0)).collect(),
            rhs: 1.0,
        })
        .collect();
    if !lay.pinned {
        for k in 0..kk {
            let units_k: Vec<usize> = if lay.block { vec![k] } else { (k * nn..(k + 1) * nn).collect() };
            let coeffs = units_k
                .iter()
                .flat_map(|&u| (0..=jj).flat_map(move |j| (0..m).map(move |i| (u, j, i))))
                .map(|(u, j, i)| (lay.r(u, j, i).0, 1.0))
                .collect();
            equalities.push(LinearEq { coeffs, rhs: 1.0 });
        }
    }
    MaxMinProblem {
        dim,
        block_of: (0..dim).map(|i| i / lay.width).collect(),
        utilities,
        constraints,
        equalities,
        start,
        simplex_groups: Vec::new(),
    }
}

/// Copies the lifted solution into an [`Allocation`]: `alpha_src` and
/// `alpha_relay` hold the power actually spent, `sum_j r` and `p`.
fn lifted_allocation(ch: &ChannelSet, lay: &Layout, y: &[f64]) -> Allocation {
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let mut a = Allocation::zeros(ch.dims);
    for k in 0..kk {
        for n in 0..nn {
            let (u, i) = if lay.block { (k, n) } else { (k * nn + n, 0) };
            for j in 0..=jj {
                let rho = y[lay.rho(u, j)].max(0.0);
                let r = lay.value_r(y, u, j, i).clamp(0.0, rho);
                a.rho[j][k][n] = rho;
                a.r_lift[j][k][n] = r;
                a.alpha_src[k][n] += r;
                if j > 0 {
                    let p = y[lay.p(u, j - 1, i)].clamp(0.0, rho);
                    a.p_lift[j - 1][k][n] = p;
                    a.alpha_relay[j - 1][k][n] = p;
                }
            }
        }
    }
    a
}

fn lifted_duals(ch: &ChannelSet, lay: &Layout, problem: &MaxMinProblem, duals: &Duals) -> Option<DualInfo> {
    if duals.utility.is_empty() {
        return None;
    }
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let n_cons = problem.constraints.len();
    let mut owner = std::collections::HashMap::new();
    for k in 0..kk {
        for n in 0..nn {
            let (u, i) = if lay.block { (k, n) } else { (k * nn + n, 0) };
            for j in 0..jj {
                owner.insert(lay.p(u, j, i), (j, k, n));
            }
        }
    }
    let mut lambda = vec![vec![vec![0.0; nn]; kk]; jj];
    for (ci, c) in problem.constraints.iter().enumerate() {
        if let [(v, 1.0)] = c.linear[..] {
            if c.is_affine() && c.constant == 0.0 {
                if let Some(&(j, k, n)) = owner.get(&v) {
                    lambda[j][k][n] = duals.constraints[ci];
                }
            }
        }
    }
    Some(DualInfo {
        gamma: duals.utility.clone(),
        mu: duals.constraints[n_cons - jj..].to_vec(),
        lambda,
    })
}

fn relaxed_result(
    scheme: Scheme,
    ch: &ChannelSet,
    snrs: &SnrConfig,
    lay: &Layout,
    problem: &MaxMinProblem,
    sol: &Solution,
    duals: &Duals,
) -> SolveResult {
    let alloc = lifted_allocation(ch, lay, &sol.x);
    let kk = ch.dims.sources;
    let per_source: Vec<f64> = (0..kk)
        .map(|k| {
            if lay.block {
                lifted_block_objective(k, ch, snrs, &alloc)
            } else {
                lifted_objective(k, ch, snrs, &alloc)
            }
        })
        .collect();
    let per_sub = vec![Vec::new(); kk];
    let report = RateReport::from_per_source(per_sub, per_source, Selection::Relaxed);
    let mut result = SolveResult::from_report(scheme, alloc, report, diagnostics(sol));
    result.duals = lifted_duals(ch, lay, problem, duals);
    result
}

/// Time-sharing relaxation of per-subcarrier selection; an upper bound on
/// every selection-respecting allocation.
pub fn ubsb_finite(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    ubsb_finite_with(ch, snrs, &FiniteOptions::default())
}

pub fn ubsb_finite_with(ch: &ChannelSet, snrs: &SnrConfig, opts: &FiniteOptions) -> Result<SolveResult> {
    check(ch, snrs)?;
    // with one subcarrier r = rho is forced and the feasible set has no interior
    let lay = Layout::new(ch, opts.pin_source_power || ch.dims.subcarriers == 1, false);
    let problem = lifted_problem(ch, snrs, &lay);
    let (sol, duals) = solve(&problem, &opts.solver)?;
    Ok(relaxed_result(Scheme::UbsbFinite, ch, snrs, &lay, &problem, &sol, &duals))
}

/// Block relaxation with one time share per (strategy, source).
pub fn ubbb_finite(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    ubbb_finite_with(ch, snrs, &FiniteOptions::default())
}

pub fn ubbb_finite_with(ch: &ChannelSet, snrs: &SnrConfig, opts: &FiniteOptions) -> Result<SolveResult> {
    check(ch, snrs)?;
    let lay = Layout::new(ch, opts.pin_source_power || ch.dims.subcarriers == 1, true);
    let problem = lifted_problem(ch, snrs, &lay);
    let (sol, duals) = solve(&problem, &opts.solver)?;
    Ok(relaxed_result(Scheme::Ubbb, ch, snrs, &lay, &problem, &sol, &duals))
}

fn implied(num: f64, rho: f64) -> f64 {
    if rho > RHO_THRESHOLD {
        (num / rho).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Rescales every relay whose powers sum above its budget.
fn cap_relays(relay: &mut [Vec<Vec<f64>>]) {
    for per_relay in relay {
        let used: f64 = per_relay.iter().flatten().sum();
        if used > 1.0 {
            per_relay.iter_mut().flatten().for_each(|v| *v /= used);
        }
    }
}

/// Scales a source's powers to sum to one; equal power if nothing is left.
fn normalize_source(alpha: &mut [f64]) {
    let s: f64 = alpha.iter().sum();
    if s > 0.0 {
        alpha.iter_mut().for_each(|v| *v /= s);
    } else {
        let n = alpha.len() as f64;
        alpha.iter_mut().for_each(|v| *v = 1.0 / n);
    }
}

/// Relay rate on one subcarrier at the given powers.
fn coop_rate(ch: &ChannelSet, snrs: &SnrConfig, k: usize, j: usize, n: usize, a0: f64, aj: f64) -> f64 {
    rate_sr(snrs.sr[k][j], a0, ch.sr[k][j][n]).min(rate_srd(
        snrs.sd[k],
        a0,
        ch.sd[k][n],
        snrs.rd[j][k],
        aj,
        ch.rd[j][k][n],
    ))
}

/// Rates of a selection-respecting subcarrier allocation.
pub fn subcarrier_selection_report(ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation, choice: &[Vec<Node>]) -> RateReport {
    let (kk, nn) = (ch.dims.sources, ch.dims.subcarriers);
    let per_sub: Vec<Vec<f64>> = (0..kk)
        .map(|k| {
            (0..nn)
                .map(|n| {
                    let a0 = alloc.alpha_src[k][n];
                    match choice[k][n] {
                        Node::Direct => rate_sd(snrs.sd[k], a0, ch.sd[k][n]),
                        Node::Relay(j) => coop_rate(ch, snrs, k, j, n, a0, alloc.alpha_relay[j][k][n]),
                    }
                })
                .collect()
        })
        .collect();
    let per_source = per_sub.iter().map(|v| v.iter().sum()).collect();
    RateReport::from_per_source(per_sub, per_source, Selection::Subcarrier(choice.to_vec()))
}

/// Rates of a selection-respecting block allocation.
pub fn block_selection_report(ch: &ChannelSet, snrs: &SnrConfig, alloc: &Allocation, choice: &[Node]) -> RateReport {
    let (kk, nn) = (ch.dims.sources, ch.dims.subcarriers);
    let zeros = vec![0.0; nn];
    let mut per_sub = Vec::with_capacity(kk);
    let mut per_source = Vec::with_capacity(kk);
    for (k, &node) in choice.iter().enumerate() {
        let a0 = &alloc.alpha_src[k];
        let relay = match node {
            Node::Direct => &zeros,
            Node::Relay(j) => &alloc.alpha_relay[j][k],
        };
        per_source.push(block_strategy_rate(k, node, ch, snrs, a0, relay));
        per_sub.push(
            (0..nn)
                .map(|n| match node {
                    Node::Direct => rate_sd(snrs.sd[k], a0[n], ch.sd[k][n]),
                    Node::Relay(j) => coop_rate(ch, snrs, k, j, n, a0[n], relay[n]),
                })
                .collect(),
        );
    }
    RateReport::from_per_source(per_sub, per_source, Selection::Block(choice.to_vec()))
}

/// Pours each relay's unused budget onto the subcarriers it serves.
fn rewaterfill_relays(ch: &ChannelSet, snrs: &SnrConfig, alpha_src: &[Vec<f64>], relay: &mut [Vec<Vec<f64>>], choice: &[Vec<Node>]) -> usize {
    let (kk, nn) = (ch.dims.sources, ch.dims.subcarriers);
    let mut count = 0;
    for (j, per_relay) in relay.iter_mut().enumerate() {
        let freed = 1.0 - per_relay.iter().flatten().sum::<f64>();
        let served: Vec<(usize, usize)> = (0..kk)
            .flat_map(|k| (0..nn).map(move |n| (k, n)))
            .filter(|&(k, n)| choice[k][n] == Node::Relay(j))
            .collect();
        if freed <= 1e-12 || served.is_empty() {
            continue;
        }
        let offsets: Vec<f64> = served
            .iter()
            .map(|&(k, n)| snrs.sd[k] * alpha_src[k][n] * ch.sd[k][n] + snrs.rd[j][k] * per_relay[k][n] * ch.rd[j][k][n])
            .collect();
        let gains: Vec<f64> = served.iter().map(|&(k, n)| snrs.rd[j][k] * ch.rd[j][k][n]).collect();
        if let Ok(extra) = waterfill_offsets(&offsets, &gains, freed) {
            count += 1;
            for (&(k, n), e) in served.iter().zip(extra) {
                per_relay[k][n] += e;
            }
        }
    }
    count
}

/// Keeps, on every subcarrier, the single strategy with the highest rate at
/// the powers the relaxation implies, then restores the budgets.
pub fn lbsb_finite(ub: &SolveResult, ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    lbsb_finite_with(ub, ch, snrs, HeuristicOptions::default())
}

pub fn lbsb_finite_with(ub: &SolveResult, ch: &ChannelSet, snrs: &SnrConfig, opts: HeuristicOptions) -> Result<SolveResult> {
    check(ch, snrs)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let a = &ub.allocation;
    if a.dims() != ch.dims {
        return Err(Error::ShapeMismatch("relaxed allocation does not match the channels".into()));
    }
    let mut choice = vec![vec![Node::Direct; nn]; kk];
    let mut alpha_src = vec![vec![0.0; nn]; kk];
    let mut relay = vec![vec![vec![0.0; nn]; kk]; jj];
    for k in 0..kk {
        for n in 0..nn {
            let rho0 = a.rho[0][k][n];
            let mut best: Option<(f64, Node, f64, f64)> = None;
            if rho0 > RHO_THRESHOLD {
                let a0 = implied(a.r_lift[0][k][n], rho0);
                best = Some((rate_sd(snrs.sd[k], a0, ch.sd[k][n]), Node::Direct, a0, 0.0));
            }
            for j in 0..jj {
                let rho = a.rho[j + 1][k][n];
                if rho <= RHO_THRESHOLD {
                    continue;
                }
                let a0 = implied(a.r_lift[j + 1][k][n], rho);
                let aj = implied(a.p_lift[j][k][n], rho);
                let v = coop_rate(ch, snrs, k, j, n, a0, aj);
                if best.is_none_or(|b| v > b.0) {
                    best = Some((v, Node::Relay(j), a0, aj));
                }
            }
            let (_, node, a0, aj) = best.unwrap_or((0.0, Node::Direct, 1.0 / nn as f64, 0.0));
            choice[k][n] = node;
            alpha_src[k][n] = a0;
            if let Node::Relay(j) = node {
                relay[j][k][n] = aj;
            }
        }
        normalize_source(&mut alpha_src[k]);
    }
    cap_relays(&mut relay);
    let waterfillings = if opts.rewaterfill {
        rewaterfill_relays(ch, snrs, &alpha_src, &mut relay, &choice)
    } else {
        0
    };
    let alloc = Allocation::from_selection(alpha_src, relay, &choice);
    let report = subcarrier_selection_report(ch, snrs, &alloc, &choice);
    let mut diag = ub.diagnostics.clone();
    diag.waterfillings = waterfillings;
    Ok(SolveResult::from_report(Scheme::LbsbFinite, alloc, report, diag))
}

/// Keeps, for every source, the block strategy with the highest block rate
/// at the powers the relaxation implies, then restores the budgets.
pub fn lbbb_finite(ub: &SolveResult, ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    check(ch, snrs)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let a = &ub.allocation;
    if a.dims() != ch.dims {
        return Err(Error::ShapeMismatch("relaxed allocation does not match the channels".into()));
    }
    let mut nodes = vec![Node::Direct; kk];
    let mut alpha_src = vec![vec![0.0; nn]; kk];
    let mut relay = vec![vec![vec![0.0; nn]; kk]; jj];
    for k in 0..kk {
        let mut best: Option<(f64, Node, Vec<f64>, Vec<f64>)> = None;
        for idx in 0..=jj {
            let rho = a.rho[idx][k][0];
            if rho <= RHO_THRESHOLD {
                continue;
            }
            let node = Node::from_index(idx);
            let a0: Vec<f64> = (0..nn).map(|n| implied(a.r_lift[idx][k][n], rho)).collect();
            let aj: Vec<f64> = match node {
                Node::Direct => vec![0.0; nn],
                Node::Relay(j) => (0..nn).map(|n| implied(a.p_lift[j][k][n], rho)).collect(),
            };
            let v = block_strategy_rate(k, node, ch, snrs, &a0, &aj);
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, node, a0, aj));
            }
        }
        let (_, node, a0, aj) = best.unwrap_or((0.0, Node::Direct, vec![1.0 / nn as f64; nn], vec![0.0; nn]));
        nodes[k] = node;
        alpha_src[k] = a0;
        normalize_source(&mut alpha_src[k]);
        if let Node::Relay(j) = node {
            relay[j][k] = aj;
        }
    }
    cap_relays(&mut relay);
    let choice: Vec<Vec<Node>> = nodes.iter().map(|&node| vec![node; nn]).collect();
    let alloc = Allocation::from_selection(alpha_src, relay, &choice);
    let report = block_selection_report(ch, snrs, &alloc, &nodes);
    Ok(SolveResult::from_report(Scheme::Lbbb, alloc, report, ub.diagnostics.clone()))
}

/// Waterfilled S-D powers of source `k` and the resulting rate.
fn direct_waterfill(ch: &ChannelSet, snrs: &SnrConfig, k: usize) -> (Vec<f64>, f64) {
    let nn = ch.dims.subcarriers;
    let gains: Vec<f64> = ch.sd[k].iter().map(|g| snrs.sd[k] * g).collect();
    let p = waterfill(&gains, 1.0).unwrap_or_else(|_| vec![1.0 / nn as f64; nn]);
    let rate = (0..nn).map(|n| rate_sd(snrs.sd[k], p[n], ch.sd[k][n])).sum();
    (p, rate)
}

/// Every source waterfills its power over its own S-D subcarriers.
pub fn direct_only(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    check(ch, snrs)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let alpha_src: Vec<Vec<f64>> = (0..kk).map(|k| direct_waterfill(ch, snrs, k).0).collect();
    let nodes = vec![Node::Direct; kk];
    let choice = vec![vec![Node::Direct; nn]; kk];
    let alloc = Allocation::from_selection(alpha_src, vec![vec![vec![0.0; nn]; kk]; jj], &choice);
    let report = block_selection_report(ch, snrs, &alloc, &nodes);
    Ok(SolveResult::from_report(Scheme::Direct, alloc, report, Diagnostics::closed_form(kk)))
}

/// Direct transmission with every source spreading its power equally, the
/// source-power assumption of the error-free S-R schemes.
pub fn direct_equal_power(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    check(ch, snrs)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let alpha_src = vec![vec![1.0 / nn as f64; nn]; kk];
    let choice = vec![vec![Node::Direct; nn]; kk];
    let alloc = Allocation::from_selection(alpha_src, vec![vec![vec![0.0; nn]; kk]; jj], &choice);
    let report = block_selection_report(ch, snrs, &alloc, &vec![Node::Direct; kk]);
    Ok(SolveResult::from_report(Scheme::DirectEqualPower, alloc, report, Diagnostics::closed_form(0)))
}

/// Least relay power lifting `sum_n 1/2 log2(1 + a_n + b_n p_n)` to `target`,
/// spread by waterfilling. `None` if no subcarrier has a live R-D link.
fn min_power_for_rate(offsets: &[f64], gains: &[f64], target: f64) -> Option<Vec<f64>> {
    let rate = |level: f64| -> f64 {
        offsets
            .iter()
            .zip(gains)
            .map(|(&a, &b)| 0.5 * shannon(a + (b * level - 1.0 - a).max(0.0)))
            .sum()
    };
    let powers = |level: f64| -> Vec<f64> {
        offsets
            .iter()
            .zip(gains)
            .map(|(&a, &b)| if b > 0.0 { (level - (1.0 + a) / b).max(0.0) } else { 0.0 })
            .collect()
    };
    if rate(0.0) >= target {
        return Some(vec![0.0; gains.len()]);
    }
    if gains.iter().all(|&b| b <= 0.0) {
        return None;
    }
    let mut hi = 1.0;
    while rate(hi) < target {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(powers(hi))
}

/// Relay `j` splits its budget so that the weakest of `sources` is as fast
/// as possible, each source spreading its own power equally. Every source
/// gets the least power reaching the common target, found by bisection; the
/// target never exceeds the smallest S-R rate, so power can be left over.
fn relay_maxmin(ch: &ChannelSet, snrs: &SnrConfig, j: usize, sources: &[usize]) -> Option<Vec<(usize, usize, f64)>> {
    let nn = ch.dims.subcarriers;
    let eq = 1.0 / nn as f64;
    let links: Vec<(Vec<f64>, Vec<f64>)> = sources
        .iter()
        .map(|&k| {
            let a = (0..nn).map(|n| snrs.sd[k] * ch.sd[k][n] * eq).collect();
            let b = (0..nn).map(|n| snrs.rd[j][k] * ch.rd[j][k][n]).collect();
            (a, b)
        })
        .collect();
    let cap = sources
        .iter()
        .map(|&k| (0..nn).map(|n| rate_sr(snrs.sr[k][j], eq, ch.sr[k][j][n])).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let need = |t: f64| -> Option<(f64, Vec<Vec<f64>>)> {
        let mut total = 0.0;
        let mut all = Vec::with_capacity(links.len());
        for (a, b) in &links {
            let p = min_power_for_rate(a, b, t)?;
            total += p.iter().sum::<f64>();
            all.push(p);
        }
        Some((total, all))
    };
    let fits = |t: f64| need(t).filter(|(total, _)| *total <= 1.0);
    let best = match fits(cap) {
        Some(hit) => hit.1,
        None => {
            let (mut lo, mut hi) = (0.0, cap);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if fits(mid).is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            fits(lo)?.1
        }
    };
    Some(
        sources
            .iter()
            .zip(best)
            .flat_map(|(&k, p)| p.into_iter().enumerate().map(move |(n, v)| (k, n, v)))
            .collect(),
    )
}

/// Each source picks its relay and strategy on its own; every relay then
/// splits its power max-min fairly over the sources that chose it. A source whose cooperative
/// rate ends up below its direct rate switches back to direct transmission
/// and the relays are refilled.
pub fn decentralized_finite(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    check(ch, snrs)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let eq = vec![1.0 / nn as f64; nn];
    let direct: Vec<(Vec<f64>, f64)> = (0..kk).map(|k| direct_waterfill(ch, snrs, k)).collect();
    let mut nodes = vec![Node::Direct; kk];
    for k in 0..kk {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..jj {
            let v = block_strategy_rate(k, Node::Relay(j), ch, snrs, &eq, &eq);
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, j));
            }
        }
        if let Some((v, j)) = best {
            if v > direct[k].1 {
                nodes[k] = Node::Relay(j);
            }
        }
    }
    let mut waterfillings;
    let mut relay;
    loop {
        waterfillings = 0;
        relay = vec![vec![vec![0.0; nn]; kk]; jj];
        for (j, per_relay) in relay.iter_mut().enumerate() {
            let sources: Vec<usize> = (0..kk).filter(|&k| nodes[k] == Node::Relay(j)).collect();
            if sources.is_empty() {
                continue;
            }
            if let Some(p) = relay_maxmin(ch, snrs, j, &sources) {
                waterfillings += 1;
                for (k, n, v) in p {
                    per_relay[k][n] = v;
                }
            }
        }
        let mut changed = false;
        for k in 0..kk {
            if let Node::Relay(j) = nodes[k] {
                if block_strategy_rate(k, nodes[k], ch, snrs, &eq, &relay[j][k]) < direct[k].1 {
                    nodes[k] = Node::Direct;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let alpha_src: Vec<Vec<f64>> = (0..kk)
        .map(|k| if nodes[k] == Node::Direct { direct[k].0.clone() } else { eq.clone() })
        .collect();
    let choice: Vec<Vec<Node>> = nodes.iter().map(|&node| vec![node; nn]).collect();
    let alloc = Allocation::from_selection(alpha_src, relay, &choice);
    let report = block_selection_report(ch, snrs, &alloc, &nodes);
    Ok(SolveResult::from_report(
        Scheme::Decentralized,
        alloc,
        report,
        Diagnostics::closed_form(waterfillings),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc_ideal::ubsb_ideal;
    use crate::netmodel::{gen_iid_channels, NetworkDims};
    use crate::oracle::{grid_oracle_block, grid_oracle_subcarrier};

    fn instance(k: usize, j: usize, n: usize, seed: u64) -> (ChannelSet, SnrConfig) {
        let dims = NetworkDims::new(k, j, n).unwrap();
        (gen_iid_channels(dims, seed).unwrap(), SnrConfig::uniform_db(dims, 5.0, 10.0, 10.0))
    }

    #[test]
    fn dead_relays_reduce_to_direct() {
        let (mut ch, snrs) = instance(2, 2, 4, 3);
        for v in ch.sr.iter_mut().flatten().flatten() {
            *v = 0.0;
        }
        let d = direct_only(&ch, &snrs).unwrap();
        let ub = ubsb_finite(&ch, &snrs).unwrap();
        assert!((ub.min_rate - d.min_rate).abs() < 1e-4, "{} vs {}", ub.min_rate, d.min_rate);
        let lb = lbsb_finite(&ub, &ch, &snrs).unwrap();
        assert!(lb.allocation.relay_power().iter().all(|&p| p == 0.0));
        let dec = decentralized_finite(&ch, &snrs).unwrap();
        assert_eq!(dec.min_rate, d.min_rate);
        assert_eq!(dec.per_source, d.per_source);
    }

    #[test]
    fn direct_only_equal_gains() {
        let dims = NetworkDims::new(1, 1, 4).unwrap();
        let ch = ChannelSet::constant(dims, 1.0);
        let snrs = SnrConfig::uniform_db(dims, 5.0, 10.0, 10.0);
        let d = direct_only(&ch, &snrs).unwrap();
        let expect = 4.0 * (1.0 + snrs.sd[0] / 4.0).log2();
        assert!((d.min_rate - expect).abs() < 1e-12);
        assert!((direct_equal_power(&ch, &snrs).unwrap().min_rate - expect).abs() < 1e-12);
    }

    #[test]
    fn waterfilled_direct_beats_equal_power() {
        for seed in 0..20 {
            let (ch, snrs) = instance(3, 2, 8, seed);
            let wf = direct_only(&ch, &snrs).unwrap();
            let eq = direct_equal_power(&ch, &snrs).unwrap();
            for k in 0..3 {
                assert!(eq.per_source[k] <= wf.per_source[k] + 1e-12);
            }
        }
    }

    #[test]
    fn direct_only_one_live_subcarrier() {
        let (mut ch, snrs) = instance(1, 1, 4, 1);
        for n in 1..4 {
            ch.sd[0][n] = 0.0;
        }
        let d = direct_only(&ch, &snrs).unwrap();
        assert_eq!(d.allocation.alpha_src[0], vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn relaxed_bounds_dominate_heuristics() {
        for seed in 0..4 {
            let (ch, snrs) = instance(2, 2, 4, seed);
            let ub = ubsb_finite(&ch, &snrs).unwrap();
            assert_eq!(ub.diagnostics.status, Status::Converged);
            let lb = lbsb_finite(&ub, &ch, &snrs).unwrap();
            assert!(lb.min_rate <= ub.min_rate + 1e-6);
            let ubb = ubbb_finite(&ch, &snrs).unwrap();
            assert_eq!(ubb.diagnostics.status, Status::Converged);
            let lbb = lbbb_finite(&ubb, &ch, &snrs).unwrap();
            assert!(lbb.min_rate <= ubb.min_rate + 1e-6);
            let dec = decentralized_finite(&ch, &snrs).unwrap();
            let d = direct_only(&ch, &snrs).unwrap();
            assert!(d.min_rate <= dec.min_rate + 1e-12);
            assert!(dec.min_rate <= ubb.min_rate + 1e-5);
            for r in [&lb, &lbb, &dec] {
                assert!(r.allocation.budget_violation() < 1e-9);
            }
        }
    }

    #[test]
    fn one_subcarrier_block_equals_subcarrier() {
        let (ch, snrs) = instance(2, 2, 1, 7);
        let a = ubsb_finite(&ch, &snrs).unwrap();
        let b = ubbb_finite(&ch, &snrs).unwrap();
        assert!((a.min_rate - b.min_rate).abs() < 1e-5, "{} vs {}", a.min_rate, b.min_rate);
    }

    #[test]
    fn strong_source_relay_links_approach_ideal() {
        let dims = NetworkDims::new(2, 1, 4).unwrap();
        let mut ch = gen_iid_channels(dims, 11).unwrap();
        for v in ch.sr.iter_mut().flatten().flatten() {
            *v *= 1e9;
        }
        // weak S-D links so direct transmission never pays off
        let snrs = SnrConfig::uniform_db(dims, -30.0, 10.0, 30.0);
        let ideal = ubsb_ideal(&ch, &snrs).unwrap();
        let opts = FiniteOptions {
            pin_source_power: true,
            ..FiniteOptions::default()
        };
        let fin = ubsb_finite_with(&ch, &snrs, &opts).unwrap();
        assert!((fin.min_rate - ideal.min_rate).abs() < 1e-3, "{} vs {}", fin.min_rate, ideal.min_rate);
    }

    fn max_diff(a: &Allocation, b: &Allocation) -> f64 {
        let flat = |x: &Allocation| -> Vec<f64> {
            x.alpha_src
                .iter()
                .flatten()
                .chain(x.alpha_relay.iter().flatten().flatten())
                .chain(x.rho.iter().flatten().flatten())
                .copied()
                .collect()
        };
        flat(a).iter().zip(flat(b)).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn one_hot_relaxation_is_kept() {
        let (ch, snrs) = instance(2, 2, 3, 5);
        let ub = ubsb_finite(&ch, &snrs).unwrap();
        let lb = lbsb_finite(&ub, &ch, &snrs).unwrap();
        let again = lbsb_finite(&lb, &ch, &snrs).unwrap();
        assert!(max_diff(&again.allocation, &lb.allocation) < 1e-15);
        assert_eq!(again.report.chosen, lb.report.chosen);
        let ubb = ubbb_finite(&ch, &snrs).unwrap();
        let lbb = lbbb_finite(&ubb, &ch, &snrs).unwrap();
        let again = lbbb_finite(&lbb, &ch, &snrs).unwrap();
        assert!(max_diff(&again.allocation, &lbb.allocation) < 1e-15);
        assert_eq!(again.report.chosen, lbb.report.chosen);
    }

    #[test]
    fn oracle_sandwich_small() {
        for seed in 0..3 {
            let (ch, snrs) = instance(2, 1, 2, seed);
            let ub = ubsb_finite(&ch, &snrs).unwrap();
            let lb = lbsb_finite(&ub, &ch, &snrs).unwrap();
            let o = grid_oracle_subcarrier(&ch, &snrs, 21).unwrap();
            assert!(lb.min_rate - 1e-9 <= o.value && o.value <= ub.min_rate + 1e-9, "{} {} {}", lb.min_rate, o.value, ub.min_rate);
            let ubb = ubbb_finite(&ch, &snrs).unwrap();
            let lbb = lbbb_finite(&ubb, &ch, &snrs).unwrap();
            let ob = grid_oracle_block(&ch, &snrs, 21).unwrap();
            assert!(lbb.min_rate - 1e-9 <= ob.value && ob.value <= ubb.min_rate + 1e-9, "{} {} {}", lbb.min_rate, ob.value, ubb.min_rate);
        }
    }

    #[test]
    fn dominant_relay_single_waterfilling() {
        let (mut ch, snrs) = instance(3, 1, 4, 2);
        for v in ch.sr.iter_mut().chain(ch.rd.iter_mut()).flatten().flatten() {
            *v *= 100.0;
        }
        let dec = decentralized_finite(&ch, &snrs).unwrap();
        assert_eq!(dec.report.chosen, Selection::Block(vec![Node::Relay(0); 3]));
        assert_eq!(dec.diagnostics.waterfillings, 1);
    }

    #[test]
    fn relay_split_equalizes_its_sources() {
        let (mut ch, snrs) = instance(3, 1, 4, 5);
        for v in ch.sr.iter_mut().flatten().flatten() {
            *v *= 1e6;
        }
        let split = relay_maxmin(&ch, &snrs, 0, &[0, 1, 2]).unwrap();
        let used: f64 = split.iter().map(|t| t.2).sum();
        assert!((used - 1.0).abs() < 1e-9, "{used}");
        let mut relay = vec![vec![0.0; 4]; 3];
        for (k, n, v) in split {
            relay[k][n] = v;
        }
        let eq = vec![0.25; 4];
        let rates: Vec<f64> = (0..3)
            .map(|k| block_strategy_rate(k, Node::Relay(0), &ch, &snrs, &eq, &relay[k]))
            .collect();
        for r in &rates {
            assert!((r - rates[0]).abs() < 1e-8, "{rates:?}");
        }
    }

    #[test]
    fn least_power_hits_the_target() {
        let (a, b) = (vec![0.1, 0.5, 0.0], vec![2.0, 0.3, 4.0]);
        let p = min_power_for_rate(&a, &b, 2.0).unwrap();
        let r: f64 = (0..3).map(|i| 0.5 * shannon(a[i] + b[i] * p[i])).sum();
        assert!((r - 2.0).abs() < 1e-9);
        assert!(min_power_for_rate(&a, &[0.0; 3], 2.0).is_none());
        assert_eq!(min_power_for_rate(&a, &b, 0.1).unwrap(), vec![0.0; 3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn heuristics_are_feasible_and_ordered(
                seed in 0u64..10_000,
                sd in -5.0f64..15.0,
                sr in -5.0f64..25.0,
                rd in -5.0f64..25.0,
            ) {
                let dims = NetworkDims::new(2, 2, 3).unwrap();
                let ch = gen_iid_channels(dims, seed).unwrap();
                let snrs = SnrConfig::uniform_db(dims, sd, sr, rd);
                let ub = ubsb_finite(&ch, &snrs).unwrap();
                let ubb = ubbb_finite(&ch, &snrs).unwrap();
                let dir = direct_only(&ch, &snrs).unwrap();
                let dec = decentralized_finite(&ch, &snrs).unwrap();
                for r in [
                    lbsb_finite(&ub, &ch, &snrs).unwrap(),
                    lbbb_finite(&ubb, &ch, &snrs).unwrap(),
                    dec.clone(),
                    dir.clone(),
                ] {
                    for s in r.allocation.source_power() {
                        prop_assert!((s - 1.0).abs() <= 1e-9);
                    }
                    for p in r.allocation.relay_power() {
                        prop_assert!(p <= 1.0 + 1e-9);
                    }
                }
                prop_assert!(dir.min_rate <= dec.min_rate + 1e-5);
                prop_assert!(dec.min_rate <= ubb.min_rate + 1e-5);
            }
        }
    }
}
