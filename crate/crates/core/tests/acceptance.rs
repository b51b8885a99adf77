use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coop_ofdm::alloc_finite::{lbbb_finite, lbsb_finite, ubbb_finite, ubsb_finite};
use coop_ofdm::alloc_ideal::waterfill;
use coop_ofdm::experiment::{csv_string, preset, run_experiment, ExperimentConfig, ResultRow, RunOptions, PRESETS};
use coop_ofdm::netmodel::{gen_iid_channels, NetworkDims, SnrConfig};
use coop_ofdm::oracle::{grid_oracle_block, grid_oracle_subcarrier};
use coop_ofdm::rates::{hessian_check_f, hessian_check_g};
use coop_ofdm::scheme::Scheme;
use coop_ofdm::solver::Status;

type Key = (u64, usize);

struct Table {
    rows: Vec<ResultRow>,
}

impl Table {
    fn new(rows: Vec<ResultRow>) -> Self {
        Self { rows }
    }

    fn extend(&mut self, rows: Vec<ResultRow>) {
        self.rows.extend(rows);
    }

    fn by_instance(&self, s: Scheme) -> HashMap<Key, f64> {
        self.rows
            .iter()
            .filter(|r| r.scheme == s)
            .map(|r| ((r.sweep_value.to_bits(), r.trial), r.min_rate))
            .collect()
    }

    fn instances(&self) -> Vec<Key> {
        let mut keys: Vec<Key> = self.rows.iter().map(|r| (r.sweep_value.to_bits(), r.trial)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// Mean min-rate per sweep value, in sweep order.
    fn means(&self, s: Scheme) -> Vec<(f64, f64)> {
        let mut acc: Vec<(f64, f64, usize)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.scheme == s) {
            match acc.iter_mut().find(|a| a.0 == r.sweep_value) {
                Some(a) => {
                    a.1 += r.min_rate;
                    a.2 += 1;
                }
                None => acc.push((r.sweep_value, r.min_rate, 1)),
            }
        }
        acc.sort_by(|a, b| a.0.total_cmp(&b.0));
        acc.into_iter().map(|(v, s, n)| (v, s / n as f64)).collect()
    }
}

fn run(cfg: &ExperimentConfig, timing: bool) -> Vec<ResultRow> {
    run_experiment(cfg, RunOptions { timing }).expect("experiment run")
}

fn with_schemes(name: &str, schemes: &[Scheme]) -> ExperimentConfig {
    let mut cfg = preset(name).unwrap();
    cfg.schemes = schemes.to_vec();
    cfg
}

const IDEAL: [Scheme; 4] = [
    Scheme::UbsbIdeal,
    Scheme::LbsbIdeal,
    Scheme::BlockExhaustiveIdeal,
    Scheme::BlockDecentralizedIdeal,
];

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, id: usize, title: &str, pass: bool, detail: String) {
        println!("{} C{id:<2} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

/// Count of (a, b) instance pairs with `a > b + tol`, and the worst excess.
fn count_above(a: &HashMap<Key, f64>, b: &HashMap<Key, f64>, tol: f64) -> (usize, usize, f64) {
    let mut n = 0;
    let mut bad = 0;
    let mut worst = f64::NEG_INFINITY;
    for (k, va) in a {
        if let Some(vb) = b.get(k) {
            n += 1;
            worst = worst.max(va - vb);
            if *va > vb + tol {
                bad += 1;
            }
        }
    }
    (n, bad, worst)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report { failed: Vec::new() };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();

    // fig5 exactly as shipped, timed on one thread; fig6 timed per solve.
    let t0 = Instant::now();
    let fig5_rows = single.install(|| run(&preset("fig5").unwrap(), false));
    let fig5_secs = t0.elapsed().as_secs_f64();
    let fig6_rows = single.install(|| run(&preset("fig6").unwrap(), true));
    let mut fig5 = Table::new(fig5_rows);
    fig5.extend(run(&with_schemes("fig5", &IDEAL), false));
    let mut fig6 = Table::new(fig6_rows.clone());
    fig6.extend(run(&with_schemes("fig6", &IDEAL), false));
    let fig2_rows = run(&preset("fig2").unwrap(), false);
    let fig2 = Table::new(fig2_rows.clone());
    let mut j3 = preset("fig2").unwrap();
    j3.name = "fig2-j3".into();
    j3.relays = 3;
    j3.trials = 20;
    j3.schemes = vec![Scheme::UbsbIdeal];
    let j3 = Table::new(run(&j3, false));

    // C1
    {
        let mut total = 0;
        let mut bad = 0;
        let mut worst = f64::NEG_INFINITY;
        let mut instances = 0;
        for t in [&fig5, &fig6] {
            instances += t.instances().len();
            for (lb, ub) in [
                (Scheme::LbsbIdeal, Scheme::UbsbIdeal),
                (Scheme::LbsbFinite, Scheme::UbsbFinite),
                (Scheme::Lbbb, Scheme::Ubbb),
            ] {
                let (n, b, w) = count_above(&t.by_instance(lb), &t.by_instance(ub), 1e-6);
                total += n;
                bad += b;
                worst = worst.max(w);
            }
        }
        rep.line(
            1,
            "relaxation sandwich",
            instances >= 500 && bad == 0,
            format!("{instances} i.i.d. instances (fig5, fig6), {total} lb/ub pairs, {bad} with lb > ub + 1e-6, worst lb - ub = {worst:.3e}"),
        );
    }

    // C2
    {
        let mut solved = 0;
        let mut bad = 0;
        let mut positive = 0;
        let mut worst = 0;
        for (t, relays) in [(&fig5, 2), (&fig6, 2), (&fig2, 2), (&j3, 3)] {
            for r in t.rows.iter().filter(|r| r.scheme == Scheme::UbsbIdeal && r.solver_status == Status::Converged) {
                solved += 1;
                let counts = r.violation_count.as_ref().expect("ubsb_ideal reports violations");
                let m = counts.iter().copied().max().unwrap_or(0);
                worst = worst.max(m);
                if m > relays - 1 {
                    bad += 1;
                }
                if m > 0 {
                    positive += 1;
                }
            }
        }
        rep.line(
            2,
            "at most J-1 multi-relay subcarriers per source",
            solved >= 500 && bad == 0 && positive > 0,
            format!("{solved} converged ubsb_ideal solves (J=2 and J=3), {bad} above J-1, {positive} with a positive count, largest count {worst}"),
        );
    }

    // C3
    {
        let mut bad = 0;
        let mut worst_ub = f64::INFINITY;
        for i in 0..50u64 {
            let relays = if i % 2 == 0 { 1 } else { 2 };
            let dims = NetworkDims::new(2, relays, 2).unwrap();
            let ch = gen_iid_channels(dims, 7000 + i).unwrap();
            let snrs = SnrConfig::uniform_db(dims, 5.0, 10.0, 10.0);
            let ub = ubsb_finite(&ch, &snrs).unwrap();
            let lb = lbsb_finite(&ub, &ch, &snrs).unwrap();
            let ubb = ubbb_finite(&ch, &snrs).unwrap();
            let lbb = lbbb_finite(&ubb, &ch, &snrs).unwrap();
            let o = grid_oracle_subcarrier(&ch, &snrs, 21).unwrap().value;
            let ob = grid_oracle_block(&ch, &snrs, 21).unwrap().value;
            worst_ub = worst_ub.min(ub.min_rate - o).min(ubb.min_rate - ob);
            let ok = lb.min_rate - 1e-9 <= o
                && o <= ub.min_rate + 1e-9
                && lbb.min_rate - 1e-9 <= ob
                && ob <= ubb.min_rate + 1e-9;
            if !ok {
                bad += 1;
            }
        }
        rep.line(
            3,
            "oracle certification",
            bad == 0 && worst_ub >= -1e-9,
            format!("50 instances K=2 N=2 J in {{1,2}}, 21 levels: {bad} out of order, smallest ub - oracle = {worst_ub:.3e}"),
        );
    }

    // C4
    {
        let mut checked = 0;
        let mut bad = 0;
        let mut msgs = Vec::new();
        let chains: [(&[Scheme], f64); 2] = [
            (&[Scheme::Direct, Scheme::Decentralized, Scheme::Ubbb, Scheme::UbsbFinite], 1e-5),
            (&[Scheme::BlockDecentralizedIdeal, Scheme::BlockExhaustiveIdeal, Scheme::UbsbIdeal], 1e-6),
        ];
        for (name, t) in [("fig5", &fig5), ("fig6", &fig6), ("fig2", &fig2)] {
            for (chain, tol) in chains {
                if !chain.iter().all(|s| t.rows.iter().any(|r| r.scheme == *s)) {
                    continue;
                }
                for w in chain.windows(2) {
                    let (n, b, worst) = count_above(&t.by_instance(w[0]), &t.by_instance(w[1]), tol);
                    checked += n;
                    bad += b;
                    if b > 0 {
                        msgs.push(format!("{name}: {} > {} on {b}/{n} (worst {worst:.3e})", w[0], w[1]));
                    }
                }
            }
        }
        let detail = if msgs.is_empty() {
            format!("{checked} adjacent comparisons on fig5, fig6 and fig2 instances, none out of order")
        } else {
            format!("{checked} comparisons; {}", msgs.join("; "))
        };
        rep.line(4, "scheme ordering", bad == 0, detail);
    }

    // C5
    {
        let schemes: Vec<Scheme> = preset("fig2").unwrap().schemes;
        let mut flat = Vec::new();
        for &s in &schemes {
            let m = fig2.means(s);
            if !m.windows(2).all(|w| w[1].1 > w[0].1) {
                flat.push(s.name());
            }
        }
        let ub = fig2.means(Scheme::UbsbIdeal);
        let lb = fig2.means(Scheme::LbsbIdeal);
        let gap = ub.iter().zip(&lb).map(|(u, l)| (u.1 - l.1) / u.1).fold(0.0, f64::max);
        let lowest = |base: Scheme| -> Vec<f64> {
            let d = fig2.means(base);
            d.iter()
                .enumerate()
                .filter(|(i, (v, dv))| {
                    *v > 5.0
                        && !IDEAL.iter().all(|s| fig2.means(*s)[*i].1 > *dv)
                })
                .map(|(_, (v, _))| *v)
                .collect()
        };
        let eq_fail = lowest(Scheme::DirectEqualPower);
        let wf_fail = lowest(Scheme::Direct);
        rep.line(
            5,
            "fig2 shape",
            flat.is_empty() && gap <= 0.03 && eq_fail.is_empty(),
            format!(
                "not strictly increasing: [{}]; largest ub/lb gap {:.3}%; equal-power direct not lowest at {:?} dB; waterfilled direct not lowest at {:?} dB",
                flat.join(", "),
                100.0 * gap,
                eq_fail,
                wf_fail
            ),
        );
    }

    // C6
    {
        let fig3 = Table::new(run(
            &with_schemes("fig3", &[Scheme::BlockExhaustiveIdeal, Scheme::BlockDecentralizedIdeal]),
            false,
        ));
        let fig7 = Table::new(run(&with_schemes("fig7", &[Scheme::Ubbb, Scheme::Decentralized]), false));
        let mut pass = true;
        let mut parts = Vec::new();
        for (name, t, dec, cen) in [
            ("fig3", &fig3, Scheme::BlockDecentralizedIdeal, Scheme::BlockExhaustiveIdeal),
            ("fig7", &fig7, Scheme::Decentralized, Scheme::Ubbb),
        ] {
            let d = t.means(dec);
            let c = t.means(cen);
            let pooled = d.iter().map(|x| x.1).sum::<f64>() / c.iter().map(|x| x.1).sum::<f64>();
            pass &= pooled >= 0.9;
            let per: Vec<String> = d.iter().zip(&c).map(|(a, b)| format!("{:.3}", a.1 / b.1)).collect();
            parts.push(format!("{name} mean ratio {pooled:.3} (per point {})", per.join(" ")));
        }
        rep.line(6, "decentralized tracks centralized", pass, parts.join("; "));
    }

    // C7
    {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut logu = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        let mut max_eig = f64::NEG_INFINITY;
        let mut max_rank = 0;
        for _ in 0..1000 {
            let f = hessian_check_f(logu(-3.0, 1.0), logu(-3.0, 2.0)).unwrap();
            max_eig = max_eig.max(f.max_eigenvalue);
            let g = hessian_check_g(logu(-3.0, 1.0), logu(-3.0, 2.0), logu(-3.0, 2.0)).unwrap();
            max_eig = max_eig.max(g.max_eigenvalue);
            max_rank = max_rank.max(g.numerical_rank(1e-8));
        }
        rep.line(
            7,
            "perspective Hessians",
            max_eig <= 1e-8 && max_rank <= 1,
            format!("1000 points each for f and g: largest eigenvalue {max_eig:.3e}, largest numerical rank of g {max_rank}"),
        );
    }

    // C8
    {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let mut worst_budget: f64 = 0.0;
        let mut worst_spread: f64 = 0.0;
        let mut worst_obj: f64 = 0.0;
        for case in 0..1000 {
            let n = 2 + case % 3;
            let gains: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..1.5))).collect();
            let budget = 10f64.powf(rng.random_range(-1.0..1.0));
            let p = waterfill(&gains, budget).unwrap();
            worst_budget = worst_budget.max((p.iter().sum::<f64>() - budget).abs());
            let levels: Vec<f64> = (0..n).filter(|&i| p[i] > 0.0).map(|i| p[i] + 1.0 / gains[i]).collect();
            let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
            let idle = (0..n).filter(|&i| p[i] == 0.0).map(|i| (hi - 1.0 / gains[i]).max(0.0)).fold(0.0, f64::max);
            worst_spread = worst_spread.max(hi - lo).max(idle);
            let obj = |q: &[f64]| q.iter().zip(&gains).map(|(q, g)| (1.0 + g * q).log2()).sum::<f64>();
            worst_obj = worst_obj.max((obj(&p) - grid_scan(&obj, n, budget)).abs());
        }
        rep.line(
            8,
            "waterfilling",
            worst_budget <= 1e-9 && worst_spread <= 1e-8 && worst_obj <= 1e-6,
            format!("1000 cases, 2 to 4 channels: budget error {worst_budget:.2e}, water-level spread {worst_spread:.2e}, objective vs 10^4-point scan {worst_obj:.2e}"),
        );
    }

    // C9
    {
        let mut same = 0;
        let mut differ = Vec::new();
        let mut check = |label: String, cfg: &ExperimentConfig, first: Option<Vec<ResultRow>>| {
            let a = csv_string(&first.unwrap_or_else(|| run(cfg, false))).unwrap();
            let b = csv_string(&run(cfg, false)).unwrap();
            if a == b {
                same += 1;
            } else {
                differ.push(label);
            }
        };
        check("fig2".into(), &preset("fig2").unwrap(), Some(fig2_rows));
        for (name, _) in PRESETS {
            let mut cfg = preset(name).unwrap();
            if matches!(name, "fig5" | "fig6" | "fig7") {
                cfg.trials = 2;
                check(format!("{name} (2 trials)"), &cfg, None);
            } else if name != "fig2" {
                check(name.to_string(), &cfg, None);
            }
        }
        rep.line(
            9,
            "determinism",
            differ.is_empty(),
            format!("{same} preset reruns byte-identical (fig2, fig3, fig4 in full; fig5-fig7 at 2 trials), differing: {differ:?}"),
        );
    }

    // C10
    {
        let worst = fig6_rows
            .iter()
            .filter(|r| r.scheme == Scheme::UbsbFinite)
            .filter_map(|r| r.solve_time_ms)
            .fold(0.0, f64::max);
        rep.line(
            10,
            "performance",
            worst <= 10_000.0 && fig5_secs <= 1200.0,
            format!("slowest ubsb_finite solve at K=4 J=2 N=8: {:.2} s over 250 solves; full fig5 preset on one thread: {fig5_secs:.1} s", worst / 1e3),
        );
    }

    println!("acceptance suite finished in {:.1} s", start.elapsed().as_secs_f64());
    if rep.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {:?}", rep.failed);
        ExitCode::FAILURE
    }
}

/// Maximum of `obj` over the simplex `sum p = budget` in `n` coordinates,
/// by a grid over the first `n - 1` that zooms in around the best point;
/// 10^4 evaluations in total.
fn grid_scan(obj: &dyn Fn(&[f64]) -> f64, n: usize, budget: f64) -> f64 {
    let d = n - 1;
    let (rounds, m): (usize, usize) = match d {
        1 => (10, 1000),
        2 => (4, 50),
        _ => (10, 10),
    };
    let mut lo = vec![0.0; d];
    let mut hi = vec![budget; d];
    let mut best = f64::NEG_INFINITY;
    let mut best_at = vec![0.0; d];
    let mut q = vec![0.0; n];
    for _ in 0..rounds {
        let step: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / (m - 1) as f64).collect();
        for idx in 0..m.pow(d as u32) {
            let mut rest = idx;
            let mut used = 0.0;
            for i in 0..d {
                q[i] = lo[i] + step[i] * (rest % m) as f64;
                rest /= m;
                used += q[i];
            }
            if used > budget {
                // project onto the face where the last coordinate is zero
                for v in &mut q[..d] {
                    *v *= budget / used;
                }
                q[d] = 0.0;
            } else {
                q[d] = budget - used;
            }
            let v = obj(&q);
            if v > best {
                best = v;
                best_at.copy_from_slice(&q[..d]);
            }
        }
        for i in 0..d {
            lo[i] = (best_at[i] - 2.0 * step[i]).max(0.0);
            hi[i] = (best_at[i] + 2.0 * step[i]).min(budget);
        }
    }
    best
}
