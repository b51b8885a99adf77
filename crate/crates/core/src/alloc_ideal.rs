//! Schemes for error-free source-relay links: every relay decodes, so only
//! the relay-to-destination power matters. Sources spread their power
//! equally over their subcarriers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{ChannelSet, SnrConfig};
use crate::oracle::enumerate_block_assignments;
use crate::rates::{ideal_report, subcarrier_rate_ideal, Allocation, Node, Selection};
use crate::scheme::{Diagnostics, DualInfo, Scheme, SolveResult};
use crate::solver::{solve_maxmin_with, ConcaveFn, LinearEq, MaxMinProblem, SimplexGroup, SolverOptions, Term};

/// Relay power above this fraction of the budget counts as helping.
pub const DEFAULT_VIOLATION_THRESHOLD: f64 = 1e-6;

/// Guard on the number of block assignments the exhaustive scheme visits.
pub const MAX_ASSIGNMENTS: f64 = 1e6;

fn equal_source_power(ch: &ChannelSet) -> Vec<Vec<f64>> {
    let n = ch.dims.subcarriers;
    vec![vec![1.0 / n as f64; n]; ch.dims.sources]
}

/// S-D contribution to the received SNR at equal source power.
fn direct_snr(ch: &ChannelSet, snrs: &SnrConfig, k: usize, n: usize) -> f64 {
    snrs.sd[k] * ch.sd[k][n] / ch.dims.subcarriers as f64
}

/// Relaxed program without the selection constraint: relays may split power
/// over any subcarriers and several relays may help the same subcarrier.
pub fn ubsb_ideal(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    ubsb_ideal_with(ch, snrs, &SolverOptions::default())
}

pub fn ubsb_ideal_with(ch: &ChannelSet, snrs: &SnrConfig, opts: &SolverOptions) -> Result<SolveResult> {
    ch.validate()?;
    snrs.validate(ch.dims)?;
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let idx = |j: usize, k: usize, n: usize| (k * nn + n) * jj + j;
    let dim = kk * nn * jj;

    let utilities = (0..kk)
        .map(|k| ConcaveFn {
            terms: (0..nn)
                .map(|n| Term::Log {
                    scale: 0.5,
                    offset: 1.0 + direct_snr(ch, snrs, k, n),
                    coeffs: (0..jj).map(|j| (idx(j, k, n), snrs.rd[j][k] * ch.rd[j][k][n])).collect(),
                })
                .collect(),
            ..ConcaveFn::default()
        })
        .collect();
    let constraints = (0..dim).map(|i| ConcaveFn::lower_bound(i, 0.0)).collect();
    let relay_vars = |j: usize| -> Vec<usize> {
        (0..kk)
            .flat_map(|k| (0..nn).map(move |n| (k, n)))
            .map(|(k, n)| idx(j, k, n))
            .collect()
    };
    let problem = MaxMinProblem {
        dim,
        block_of: (0..dim).map(|i| i / jj).collect(),
        utilities,
        constraints,
        equalities: (0..jj)
            .map(|j| LinearEq {
                coeffs: relay_vars(j).into_iter().map(|i| (i, 1.0)).collect(),
                rhs: 1.0,
            })
            .collect(),
        start: vec![1.0 / (kk * nn) as f64; dim],
        simplex_groups: (0..jj)
            .map(|j| SimplexGroup {
                vars: relay_vars(j),
                budget: 1.0,
            })
            .collect(),
    };
    let (sol, duals) = solve_maxmin_with(&problem, opts)?;
    if sol.status == crate::solver::Status::Infeasible {
        return Err(Error::Domain("uniform starting point is not strictly feasible".into()));
    }

    let mut alloc = Allocation::zeros(ch.dims);
    alloc.alpha_src = equal_source_power(ch);
    for j in 0..jj {
        for k in 0..kk {
            for n in 0..nn {
                alloc.alpha_relay[j][k][n] = sol.x[idx(j, k, n)].max(0.0);
            }
        }
    }
    let report = ideal_report(ch, snrs, &alloc, Selection::Relaxed);
    let dual_info = (!duals.utility.is_empty()).then(|| DualInfo {
        gamma: duals.utility.clone(),
        mu: duals.equalities.clone(),
        lambda: (0..jj)
            .map(|j| (0..kk).map(|k| (0..nn).map(|n| duals.constraints[idx(j, k, n)]).collect()).collect())
            .collect(),
    });
    let diagnostics = Diagnostics {
        status: sol.status,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        gap: sol.gap,
        fallback_used: sol.fallback_used,
        waterfillings: 0,
        violation_count: Some(violation_count(&alloc, DEFAULT_VIOLATION_THRESHOLD)),
    };
    let mut result = SolveResult::from_report(Scheme::UbsbIdeal, alloc, report, diagnostics);
    result.duals = dual_info;
    Ok(result)
}

/// Number of subcarriers per source on which two or more relays spend more
/// than `threshold` of their budget.
pub fn violation_count(alloc: &Allocation, threshold: f64) -> Vec<usize> {
    alloc.multi_relay_subcarriers(threshold)
}

/// Enforces selection on the relaxed solution: every subcarrier keeps only
/// the relay that alone gives it the highest rate.
pub fn lbsb_ideal(ub: &SolveResult, ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    lbsb_ideal_with(ub, ch, snrs, false)
}

/// As [`lbsb_ideal`]; with `rewaterfill` every relay pours the power it
/// freed back onto the subcarriers it still serves.
pub fn lbsb_ideal_with(ub: &SolveResult, ch: &ChannelSet, snrs: &SnrConfig, rewaterfill: bool) -> Result<SolveResult> {
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    let mut relay = ub.allocation.alpha_relay.clone();
    let mut choice = vec![vec![Node::Direct; nn]; kk];
    for k in 0..kk {
        for n in 0..nn {
            let base = direct_snr(ch, snrs, k, n);
            let mut best: Option<(f64, usize)> = None;
            for j in 0..jj {
                let a = relay[j][k][n];
                if a > 0.0 {
                    let r = 0.5 * crate::rates::shannon(base + snrs.rd[j][k] * a * ch.rd[j][k][n]);
                    if best.is_none_or(|(b, _)| r > b) {
                        best = Some((r, j));
                    }
                }
            }
            if let Some((_, keep)) = best {
                choice[k][n] = Node::Relay(keep);
                for (j, per_relay) in relay.iter_mut().enumerate() {
                    if j != keep {
                        per_relay[k][n] = 0.0;
                    }
                }
            }
        }
    }
    let mut waterfillings = 0;
    if rewaterfill {
        for j in 0..jj {
            let used: f64 = relay[j].iter().flatten().sum();
            let freed = 1.0 - used;
            let served: Vec<(usize, usize)> = (0..kk)
                .flat_map(|k| (0..nn).map(move |n| (k, n)))
                .filter(|&(k, n)| choice[k][n] == Node::Relay(j))
                .collect();
            if freed <= 0.0 || served.is_empty() {
                continue;
            }
            let offsets: Vec<f64> = served
                .iter()
                .map(|&(k, n)| direct_snr(ch, snrs, k, n) + snrs.rd[j][k] * relay[j][k][n] * ch.rd[j][k][n])
                .collect();
            let gains: Vec<f64> = served.iter().map(|&(k, n)| snrs.rd[j][k] * ch.rd[j][k][n]).collect();
            if let Ok(extra) = waterfill_offsets(&offsets, &gains, freed) {
                waterfillings += 1;
                for (&(k, n), e) in served.iter().zip(extra) {
                    relay[j][k][n] += e;
                }
            }
        }
    }
    let alloc = Allocation::from_selection(equal_source_power(ch), relay, &choice);
    let report = ideal_report(ch, snrs, &alloc, Selection::Subcarrier(choice));
    let mut diagnostics = ub.diagnostics.clone();
    diagnostics.waterfillings = waterfillings;
    diagnostics.violation_count = Some(violation_count(&alloc, 0.0));
    Ok(SolveResult::from_report(Scheme::LbsbIdeal, alloc, report, diagnostics))
}

/// Power split maximizing `sum log2(1 + g_i p_i)` subject to
/// `sum p_i = budget`.
pub fn waterfill(gains: &[f64], budget: f64) -> Result<Vec<f64>> {
    waterfill_offsets(&vec![0.0; gains.len()], gains, budget)
}

/// Power split maximizing `sum log2(1 + a_i + b_i p_i)` subject to
/// `sum p_i = budget`, i.e. waterfilling on the gains `b_i / (1 + a_i)`.
pub fn waterfill_offsets(offsets: &[f64], gains: &[f64], budget: f64) -> Result<Vec<f64>> {
    if offsets.len() != gains.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} offsets for {} gains",
            offsets.len(),
            gains.len()
        )));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::Domain(format!("budget must be positive, got {budget}")));
    }
    if gains.iter().chain(offsets).any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::Domain("gains and offsets must be finite and nonnegative".into()));
    }
    let inv: Vec<f64> = gains
        .iter()
        .zip(offsets)
        .map(|(&b, &a)| if b > 0.0 { (1.0 + a) / b } else { f64::INFINITY })
        .collect();
    let mut order: Vec<usize> = (0..inv.len()).filter(|&i| inv[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::DeadChannels);
    }
    order.sort_by(|&a, &b| inv[a].total_cmp(&inv[b]).then(a.cmp(&b)));
    let mut sum_inv = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (m, &i) in order.iter().enumerate() {
        let candidate = (budget + sum_inv + inv[i]) / (m as f64 + 1.0);
        if m > 0 && candidate <= inv[i] {
            break;
        }
        sum_inv += inv[i];
        level = candidate;
        active = m + 1;
    }
    let mut p = vec![0.0; gains.len()];
    for &i in &order[..active] {
        p[i] = (level - inv[i]).max(0.0);
    }
    Ok(p)
}

/// Block evaluation of an assignment of one relay per source: every relay
/// waterfills its budget over all subcarriers of its sources. Returns the
/// allocation, the per-source rates and the number of waterfillings.
pub fn evaluate_block_assignment_ideal(
    ch: &ChannelSet,
    snrs: &SnrConfig,
    assignment: &[usize],
) -> Result<(Allocation, Vec<f64>, usize)> {
    let (kk, jj, nn) = (ch.dims.sources, ch.dims.relays, ch.dims.subcarriers);
    if assignment.len() != kk || assignment.iter().any(|&j| j >= jj) {
        return Err(Error::ShapeMismatch(format!("bad assignment {assignment:?}")));
    }
    let mut relay = vec![vec![vec![0.0; nn]; kk]; jj];
    let mut waterfillings = 0;
    for j in 0..jj {
        let served: Vec<(usize, usize)> = (0..kk)
            .filter(|&k| assignment[k] == j)
            .flat_map(|k| (0..nn).map(move |n| (k, n)))
            .collect();
        if served.is_empty() {
            continue;
        }
        let offsets: Vec<f64> = served.iter().map(|&(k, n)| direct_snr(ch, snrs, k, n)).collect();
        let gains: Vec<f64> = served.iter().map(|&(k, n)| snrs.rd[j][k] * ch.rd[j][k][n]).collect();
        match waterfill_offsets(&offsets, &gains, 1.0) {
            Ok(p) => {
                waterfillings += 1;
                for (&(k, n), v) in served.iter().zip(p) {
                    relay[j][k][n] = v;
                }
            }
            Err(Error::DeadChannels) => {}
            Err(e) => return Err(e),
        }
    }
    let choice: Vec<Vec<Node>> = assignment.iter().map(|&j| vec![Node::Relay(j); nn]).collect();
    let alloc = Allocation::from_selection(equal_source_power(ch), relay, &choice);
    let rates = (0..kk)
        .map(|k| (0..nn).map(|n| subcarrier_rate_ideal(k, n, ch, snrs, &alloc)).sum())
        .collect();
    Ok((alloc, rates, waterfillings))
}

fn block_result(
    scheme: Scheme,
    ch: &ChannelSet,
    snrs: &SnrConfig,
    assignment: &[usize],
) -> Result<SolveResult> {
    let (alloc, _, waterfillings) = evaluate_block_assignment_ideal(ch, snrs, assignment)?;
    let chosen = Selection::Block(assignment.iter().map(|&j| Node::Relay(j)).collect());
    let report = ideal_report(ch, snrs, &alloc, chosen);
    Ok(SolveResult::from_report(
        scheme,
        alloc,
        report,
        Diagnostics::closed_form(waterfillings),
    ))
}

/// Best block assignment over all `J^K` choices of one relay per source.
pub fn block_exhaustive_ideal(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    ch.validate()?;
    snrs.validate(ch.dims)?;
    let all: Vec<Vec<usize>> = enumerate_block_assignments(ch.dims.sources, ch.dims.relays, false)?
        .map(|a| a.into_iter().map(|node| node.index() - 1).collect())
        .collect();
    let values: Vec<f64> = all
        .par_iter()
        .map(|a| {
            evaluate_block_assignment_ideal(ch, snrs, a)
                .map(|(_, rates, _)| rates.into_iter().fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    block_result(Scheme::BlockExhaustiveIdeal, ch, snrs, &all[best])
}

/// Relay-choice metric of the decentralized block scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecentralizedMetric {
    /// `sum_n log2(1 + SNR_jk / N * |h|)` with `|h| = sqrt(gain)`.
    #[default]
    Printed,
    /// The rate each source would get if its relay spread power equally over
    /// that source's subcarriers: `sum_n 1/2 log2(1 + SNR_0k g_sd / N + SNR_jk g_rd / N)`.
    Corrected,
}

/// Relay choice of one source under the given metric; ties go to the
/// lowest relay index.
pub fn decentralized_choice(ch: &ChannelSet, snrs: &SnrConfig, k: usize, metric: DecentralizedMetric) -> usize {
    let nn = ch.dims.subcarriers as f64;
    let score = |j: usize| -> f64 {
        (0..ch.dims.subcarriers)
            .map(|n| match metric {
                DecentralizedMetric::Printed => crate::rates::shannon(snrs.rd[j][k] / nn * ch.rd[j][k][n].sqrt()),
                DecentralizedMetric::Corrected => {
                    0.5 * crate::rates::shannon(direct_snr(ch, snrs, k, n) + snrs.rd[j][k] * ch.rd[j][k][n] / nn)
                }
            })
            .sum()
    };
    let mut best = (score(0), 0);
    for j in 1..ch.dims.relays {
        let s = score(j);
        if s > best.0 {
            best = (s, j);
        }
    }
    best.1
}

/// Every source picks its relay on its own; relays then waterfill over the
/// sources that picked them.
pub fn block_decentralized_ideal(ch: &ChannelSet, snrs: &SnrConfig) -> Result<SolveResult> {
    block_decentralized_ideal_with(ch, snrs, DecentralizedMetric::Printed)
}

pub fn block_decentralized_ideal_with(
    ch: &ChannelSet,
    snrs: &SnrConfig,
    metric: DecentralizedMetric,
) -> Result<SolveResult> {
    ch.validate()?;
    snrs.validate(ch.dims)?;
    let assignment: Vec<usize> = (0..ch.dims.sources)
        .map(|k| decentralized_choice(ch, snrs, k, metric))
        .collect();
    block_result(Scheme::BlockDecentralizedIdeal, ch, snrs, &assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{gen_iid_channels, NetworkDims};
    use crate::rates::shannon;

    fn setup(k: usize, j: usize, n: usize, seed: u64, rd_db: f64) -> (ChannelSet, SnrConfig) {
        let dims = NetworkDims::new(k, j, n).unwrap();
        (gen_iid_channels(dims, seed).unwrap(), SnrConfig::uniform_db(dims, 5.0, 10.0, rd_db))
    }

    #[test]
    fn waterfill_examples() {
        assert_eq!(waterfill(&[1.0, 1.0], 1.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(waterfill(&[1.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        let p = waterfill(&[2.0, 1.0], 1.0).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        assert!(matches!(waterfill(&[0.0, 0.0], 1.0), Err(Error::DeadChannels)));
        assert!(waterfill(&[1.0], 0.0).is_err());
    }

    #[test]
    fn waterfill_two_channel_grid() {
        let obj = |p: f64| (1.0 + 2.0 * p).log2() + (1.0 + (1.0 - p)).log2();
        let best = (0..=10_000).map(|i| obj(i as f64 / 10_000.0)).fold(f64::MIN, f64::max);
        let p = waterfill(&[2.0, 1.0], 1.0).unwrap();
        assert!(obj(p[0]) >= best - 1e-12);
    }

    #[test]
    fn waterfill_offsets_matches_effective_gains() {
        let a = waterfill_offsets(&[1.0, 0.0, 3.0], &[4.0, 1.0, 2.0], 2.0).unwrap();
        let b = waterfill(&[2.0, 1.0, 0.5], 2.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn single_subcarrier_corner() {
        let (ch, snrs) = setup(1, 2, 1, 4, 10.0);
        let ub = ubsb_ideal(&ch, &snrs).unwrap();
        let expected = 0.5
            * shannon(snrs.sd[0] * ch.sd[0][0] + snrs.rd[0][0] * ch.rd[0][0][0] + snrs.rd[1][0] * ch.rd[1][0][0]);
        assert!((ub.min_rate - expected).abs() < 1e-7, "{} vs {expected}", ub.min_rate);
        for j in 0..2 {
            assert!((ub.allocation.alpha_relay[j][0][0] - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn relay_budgets_are_spent() {
        let (ch, snrs) = setup(3, 2, 8, 11, 10.0);
        let ub = ubsb_ideal(&ch, &snrs).unwrap();
        for s in ub.allocation.relay_power() {
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert_eq!(ub.diagnostics.status, crate::solver::Status::Converged);
    }

    #[test]
    fn symmetric_sources_get_equal_rates() {
        let dims = NetworkDims::new(2, 2, 3).unwrap();
        let mut ch = gen_iid_channels(dims, 1).unwrap();
        ch.sd[1] = ch.sd[0].clone();
        ch.sr[1] = ch.sr[0].clone();
        for j in 0..2 {
            ch.rd[j][1] = ch.rd[j][0].clone();
        }
        let snrs = SnrConfig::uniform_db(dims, 5.0, 10.0, 10.0);
        let ub = ubsb_ideal(&ch, &snrs).unwrap();
        assert!((ub.per_source[0] - ub.per_source[1]).abs() < 1e-5);
    }

    #[test]
    fn lbsb_is_selection_feasible_and_below_ub() {
        for seed in 0..10 {
            let (ch, snrs) = setup(3, 2, 6, seed, 10.0);
            let ub = ubsb_ideal(&ch, &snrs).unwrap();
            let lb = lbsb_ideal(&ub, &ch, &snrs).unwrap();
            assert!(lb.min_rate <= ub.min_rate + 1e-9);
            assert!(violation_count(&lb.allocation, 0.0).iter().all(|&c| c == 0));
            let again = lbsb_ideal(&lb, &ch, &snrs).unwrap();
            assert_eq!(again.allocation, lb.allocation);
            let rw = lbsb_ideal_with(&ub, &ch, &snrs, true).unwrap();
            assert!(rw.min_rate >= lb.min_rate - 1e-12);
            assert!(rw.allocation.relay_power().iter().all(|&s| s <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn violation_count_of_one_hot_is_zero() {
        let dims = NetworkDims::new(2, 2, 2).unwrap();
        let choice = vec![vec![Node::Relay(0), Node::Relay(1)]; 2];
        let mut relay = vec![vec![vec![0.0; 2]; 2]; 2];
        relay[0][0][0] = 0.5;
        relay[0][1][0] = 0.5;
        relay[1][0][1] = 0.5;
        relay[1][1][1] = 0.5;
        let alloc = Allocation::from_selection(vec![vec![0.5; 2]; 2], relay, &choice);
        assert_eq!(alloc.dims(), dims);
        assert_eq!(violation_count(&alloc, 1e-6), vec![0, 0]);
    }

    #[test]
    fn exhaustive_visits_all_assignments_and_dominates() {
        for seed in 0..5 {
            let (ch, snrs) = setup(2, 2, 4, seed, 10.0);
            let ex = block_exhaustive_ideal(&ch, &snrs).unwrap();
            let de = block_decentralized_ideal(&ch, &snrs).unwrap();
            assert!(de.min_rate <= ex.min_rate + 1e-9);
            let mut best = f64::MIN;
            for a in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                let (_, r, _) = evaluate_block_assignment_ideal(&ch, &snrs, &a).unwrap();
                best = best.max(r.into_iter().fold(f64::INFINITY, f64::min));
            }
            assert_eq!(best, ex.min_rate);
        }
    }

    #[test]
    fn single_relay_block_schemes_agree() {
        let (ch, snrs) = setup(3, 1, 4, 2, 10.0);
        let ex = block_exhaustive_ideal(&ch, &snrs).unwrap();
        let de = block_decentralized_ideal(&ch, &snrs).unwrap();
        assert_eq!(ex.min_rate, de.min_rate);
        assert_eq!(de.report.chosen, Selection::Block(vec![Node::Relay(0); 3]));
    }

    #[test]
    fn dominant_relay_is_picked_by_everyone() {
        let (mut ch, snrs) = setup(3, 2, 4, 6, 10.0);
        for k in 0..3 {
            for n in 0..4 {
                ch.rd[1][k][n] = 10.0 + ch.rd[0][k][n];
            }
        }
        let de = block_decentralized_ideal(&ch, &snrs).unwrap();
        assert_eq!(de.report.chosen, Selection::Block(vec![Node::Relay(1); 3]));
        assert_eq!(de.diagnostics.waterfillings, 1);
        assert!((de.allocation.relay_power()[1] - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn waterfill_budget_and_levels(
                gains in proptest::collection::vec(0.01f64..100.0, 1..24),
                budget in 0.01f64..50.0,
            ) {
                let p = waterfill(&gains, budget).unwrap();
                prop_assert!((p.iter().sum::<f64>() - budget).abs() <= 1e-9 * budget.max(1.0));
                let level = (0..p.len()).filter(|&i| p[i] > 0.0).map(|i| p[i] + 1.0 / gains[i]).fold(0.0, f64::max);
                for i in 0..p.len() {
                    prop_assert!(p[i] >= 0.0);
                    if p[i] > 0.0 {
                        prop_assert!((p[i] + 1.0 / gains[i] - level).abs() <= 1e-8 * level.max(1.0));
                    } else {
                        prop_assert!(1.0 / gains[i] >= level - 1e-8 * level.max(1.0));
                    }
                }
            }

            #[test]
            fn waterfill_beats_equal_split(
                gains in proptest::collection::vec(0.01f64..100.0, 1..16),
                budget in 0.01f64..10.0,
            ) {
                let p = waterfill(&gains, budget).unwrap();
                let rate = |q: &[f64]| q.iter().zip(&gains).map(|(q, g)| shannon(g * q)).sum::<f64>();
                let eq = vec![budget / gains.len() as f64; gains.len()];
                prop_assert!(rate(&p) >= rate(&eq) - 1e-12);
            }

            #[test]
            fn violation_count_never_exceeds_j_minus_one(seed in 0u64..1000, rd in -5.0f64..25.0) {
                let (ch, snrs) = setup(2, 3, 6, seed, rd);
                let ub = ubsb_ideal(&ch, &snrs).unwrap();
                if let Some(v) = &ub.diagnostics.violation_count {
                    prop_assert!(v.iter().all(|&c| c <= 2));
                }
            }
        }
    }
}
