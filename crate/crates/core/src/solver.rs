//! Max-min concave programs in epigraph form:
//!
//! ```text
//! maximize t  subject to  U_k(y) >= t,  c_i(y) >= 0,  A y = b
//! ```
//!
//! with every `U_k`, `c_i` a constant plus a linear part plus a sum of
//! concave log and perspective terms. The main method is a primal log-barrier
//! method with Newton centering steps. Each Newton step solves the augmented
//! system in `(dy, dt)`, one extra unknown per constraint that spans blocks or
//! involves `t`, and one multiplier per equality; the system is equilibrated
//! before a dense LU factorization.

use std::f64::consts::LN_2;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),
    #[error("singular Newton system")]
    Singular,
}

type SolverResult<T> = std::result::Result<T, SolverError>;

/// A concave building block.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `scale * log2(offset + a.y)`
    Log {
        scale: f64,
        offset: f64,
        coeffs: Vec<(usize, f64)>,
    },
    /// `scale * x * log2(1 + s / x)` with `x = y[den]` and `s = a.y`
    /// (`a` may itself involve `den`). Zero at `x = s = 0`.
    Perspective {
        scale: f64,
        den: usize,
        coeffs: Vec<(usize, f64)>,
    },
}

fn sparse_dot(coeffs: &[(usize, f64)], y: &[f64]) -> f64 {
    coeffs.iter().map(|&(i, a)| a * y[i]).sum()
}

impl Term {
    pub fn value(&self, y: &[f64]) -> Option<f64> {
        match self {
            Term::Log { scale, offset, coeffs } => {
                let s = offset + sparse_dot(coeffs, y);
                (s > 0.0).then(|| scale * s.ln() / LN_2)
            }
            Term::Perspective { scale, den, coeffs } => {
                let x = y[*den];
                let s = sparse_dot(coeffs, y);
                if x > 0.0 && x + s > 0.0 {
                    Some(scale * x * (s / x).ln_1p() / LN_2)
                } else if x == 0.0 && s == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// Pushes `w * grad` as sparse entries (indices may repeat).
    fn gradient(&self, y: &[f64], w: f64, out: &mut Vec<(usize, f64)>) {
        match self {
            Term::Log { scale, offset, coeffs } => {
                let s = offset + sparse_dot(coeffs, y);
                let c = w * scale / (LN_2 * s);
                out.extend(coeffs.iter().map(|&(i, a)| (i, c * a)));
            }
            Term::Perspective { scale, den, coeffs } => {
                let x = y[*den];
                let s = sparse_dot(coeffs, y);
                let k = w * scale / LN_2;
                out.push((*den, k * ((s / x).ln_1p() - s / (x + s))));
                let fs = k * x / (x + s);
                out.extend(coeffs.iter().map(|&(i, a)| (i, fs * a)));
            }
        }
    }

    /// Calls `add(i, j, v)` for every entry of `w * hessian`.
    fn hessian(&self, y: &[f64], w: f64, add: &mut impl FnMut(usize, usize, f64)) {
        match self {
            Term::Log { scale, offset, coeffs } => {
                let s = offset + sparse_dot(coeffs, y);
                let c = -w * scale / (LN_2 * s * s);
                for &(i, a) in coeffs {
                    for &(j, b) in coeffs {
                        add(i, j, c * a * b);
                    }
                }
            }
            Term::Perspective { scale, den, coeffs } => {
                let x = y[*den];
                let s = sparse_dot(coeffs, y);
                let d = (x + s) * (x + s);
                let k = w * scale / LN_2;
                let hxx = -k * s * s / (x * d);
                let hxs = k * s / d;
                let hss = -k * x / d;
                add(*den, *den, hxx);
                for &(i, a) in coeffs {
                    add(*den, i, hxs * a);
                    add(i, *den, hxs * a);
                    for &(j, b) in coeffs {
                        add(i, j, hss * a * b);
                    }
                }
            }
        }
    }

    fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        let (den, coeffs) = match self {
            Term::Log { coeffs, .. } => (None, coeffs),
            Term::Perspective { den, coeffs, .. } => (Some(*den), coeffs),
        };
        den.into_iter().chain(coeffs.iter().map(|&(i, _)| i))
    }
}

/// `constant + linear.y + sum(terms)`
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcaveFn {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub terms: Vec<Term>,
}

impl ConcaveFn {
    pub fn affine(linear: Vec<(usize, f64)>, constant: f64) -> Self {
        Self {
            constant,
            linear,
            terms: Vec::new(),
        }
    }

    /// `y[i] - lower >= 0`
    pub fn lower_bound(i: usize, lower: f64) -> Self {
        Self::affine(vec![(i, 1.0)], -lower)
    }

    pub fn is_affine(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn value(&self, y: &[f64]) -> Option<f64> {
        let mut v = self.constant + sparse_dot(&self.linear, y);
        for term in &self.terms {
            v += term.value(y)?;
        }
        Some(v)
    }

    /// Sparse gradient; indices may repeat.
    pub fn gradient(&self, y: &[f64]) -> Vec<(usize, f64)> {
        let mut out = self.linear.clone();
        for term in &self.terms {
            term.gradient(y, 1.0, &mut out);
        }
        out
    }

    fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.linear
            .iter()
            .map(|&(i, _)| i)
            .chain(self.terms.iter().flat_map(Term::vars))
    }
}

/// `coeffs.y = rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEq {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Variables constrained to `{y >= 0, sum y = budget}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGroup {
    pub vars: Vec<usize>,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinProblem {
    pub dim: usize,
    /// Block label of every variable. Each term, and each constraint that
    /// should enter the block-diagonal part, must stay inside one block.
    pub block_of: Vec<usize>,
    pub utilities: Vec<ConcaveFn>,
    /// `c_i(y) >= 0`
    pub constraints: Vec<ConcaveFn>,
    pub equalities: Vec<LinearEq>,
    /// Strictly feasible starting point.
    pub start: Vec<f64>,
    /// Set only when the feasible set is exactly the product of these
    /// simplices; enables the supergradient fallback.
    pub simplex_groups: Vec<SimplexGroup>,
}

impl MaxMinProblem {
    pub fn validate(&self) -> SolverResult<()> {
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        if self.dim == 0 {
            return bad("dimension must be positive".into());
        }
        if self.utilities.is_empty() {
            return bad("no utilities".into());
        }
        if self.block_of.len() != self.dim || self.start.len() != self.dim {
            return bad(format!(
                "block_of has {} entries and start has {}, expected {}",
                self.block_of.len(),
                self.start.len(),
                self.dim
            ));
        }
        if self.start.iter().any(|v| !v.is_finite()) {
            return bad("start is not finite".into());
        }
        let fns = self.utilities.iter().chain(&self.constraints);
        for f in fns {
            if let Some(i) = f.vars().find(|&i| i >= self.dim) {
                return bad(format!("variable index {i} out of range"));
            }
            for term in &f.terms {
                let mut vars = term.vars();
                if let Some(first) = vars.next() {
                    let b = self.block_of[first];
                    if vars.any(|i| self.block_of[i] != b) {
                        return bad("a term spans more than one block".into());
                    }
                }
            }
        }
        for eq in &self.equalities {
            if eq.coeffs.iter().any(|&(i, _)| i >= self.dim) {
                return bad("equality index out of range".into());
            }
        }
        for g in &self.simplex_groups {
            if g.vars.iter().any(|&i| i >= self.dim) || !(g.budget > 0.0) {
                return bad("malformed simplex group".into());
            }
        }
        Ok(())
    }

    pub fn utility_values(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.utilities.iter().map(|u| u.value(y)).collect()
    }

    pub fn min_utility(&self, y: &[f64]) -> Option<f64> {
        Some(self.utility_values(y)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Largest violation of the constraints and equalities at `y`.
    pub fn infeasibility(&self, y: &[f64]) -> f64 {
        let ineq = self
            .constraints
            .iter()
            .map(|c| c.value(y).map_or(f64::INFINITY, |v| (-v).max(0.0)))
            .fold(0.0, f64::max);
        let eq = self
            .equalities
            .iter()
            .map(|e| (sparse_dot(&e.coeffs, y) - e.rhs).abs())
            .fold(0.0, f64::max);
        ineq.max(eq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `min_k U_k(x)`
    pub t: f64,
    /// Newton (or supergradient) iterations.
    pub iterations: usize,
    pub stages: usize,
    pub kkt_residual: f64,
    /// Barrier duality-gap bound `m * mu` at termination.
    pub gap: f64,
    pub status: Status,
    pub fallback_used: bool,
    /// Best `min_k U_k` seen, after every stage.
    pub t_trace: Vec<f64>,
}

/// Multipliers of the epigraph program.
#[derive(Debug, Clone, Default)]
pub struct Duals {
    /// One per utility constraint `U_k >= t`.
    pub utility: Vec<f64>,
    /// One per entry of `constraints`.
    pub constraints: Vec<f64>,
    /// One per equality.
    pub equalities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    /// Stop once `m * mu` drops below this.
    pub gap_tol: f64,
    pub max_iters: usize,
    pub mu0: f64,
    pub mu_factor: f64,
    pub fallback_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            gap_tol: 1e-10,
            max_iters: 50_000,
            mu0: 1.0,
            mu_factor: 0.2,
            fallback_iters: 20_000,
        }
    }
}

/// Solve with default options apart from `tol` and `max_iters`.
pub fn solve_maxmin(p: &MaxMinProblem, tol: f64, max_iters: usize) -> SolverResult<(Solution, Duals)> {
    solve_maxmin_with(
        p,
        &SolverOptions {
            tol,
            max_iters,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_maxmin_with(p: &MaxMinProblem, opts: &SolverOptions) -> SolverResult<(Solution, Duals)> {
    p.validate()?;
    match Barrier::new(p).run(opts) {
        Ok(out) if out.0.status != Status::MaxIters || p.simplex_groups.is_empty() => Ok(out),
        Ok(out) => fallback_or(p, opts, Ok(out)),
        Err(e) if !p.simplex_groups.is_empty() => fallback_or(p, opts, Err(e)),
        Err(e) => Err(e),
    }
}

fn fallback_or(
    p: &MaxMinProblem,
    opts: &SolverOptions,
    barrier: SolverResult<(Solution, Duals)>,
) -> SolverResult<(Solution, Duals)> {
    let sg = solve_supergradient(p, opts.fallback_iters)?;
    match barrier {
        Ok((sol, duals)) if sol.t >= sg.t => Ok((sol, duals)),
        _ => Ok((sg, Duals::default())),
    }
}

struct Cons<'a> {
    f: &'a ConcaveFn,
    t_coef: f64,
    /// Block of a constraint whose gradient outer product stays in one block.
    local: Option<usize>,
}

struct Barrier<'a> {
    p: &'a MaxMinProblem,
    cons: Vec<Cons<'a>>,
    blocks: Vec<Vec<usize>>,
    block_idx: Vec<usize>,
    local_pos: Vec<usize>,
    coupling: Vec<usize>,
}

struct Direction {
    dy: Vec<f64>,
    dt: f64,
    nu: Vec<f64>,
    decrement: f64,
}

impl<'a> Barrier<'a> {
    fn new(p: &'a MaxMinProblem) -> Self {
        let mut labels: Vec<usize> = p.block_of.clone();
        labels.sort_unstable();
        labels.dedup();
        let mut blocks = vec![Vec::new(); labels.len()];
        let mut block_idx = vec![0; p.dim];
        let mut local_pos = vec![0; p.dim];
        for i in 0..p.dim {
            let b = labels.binary_search(&p.block_of[i]).unwrap();
            block_idx[i] = b;
            local_pos[i] = blocks[b].len();
            blocks[b].push(i);
        }
        let mut cons = Vec::with_capacity(p.utilities.len() + p.constraints.len());
        for u in &p.utilities {
            cons.push(Cons {
                f: u,
                t_coef: 1.0,
                local: None,
            });
        }
        for c in &p.constraints {
            let mut vars = c.vars();
            let local = vars.next().and_then(|first| {
                let b = block_idx[first];
                vars.all(|i| block_idx[i] == b).then_some(b)
            });
            cons.push(Cons { f: c, t_coef: 0.0, local });
        }
        let coupling = (0..cons.len()).filter(|&i| cons[i].local.is_none()).collect();
        Self {
            p,
            cons,
            blocks,
            block_idx,
            local_pos,
            coupling,
        }
    }

    fn values(&self, y: &[f64], t: f64) -> Option<Vec<f64>> {
        self.cons
            .iter()
            .map(|c| c.f.value(y).map(|v| v - c.t_coef * t))
            .collect()
    }

    fn run(&self, opts: &SolverOptions) -> SolverResult<(Solution, Duals)> {
        let p = self.p;
        let mut y = p.start.clone();
        let t_start = match p.min_utility(&y) {
            Some(v) if v.is_finite() => v,
            _ => return Ok(infeasible(p)),
        };
        let mut t = t_start - t_start.abs().max(1.0);
        let mut c = match self.values(&y, t) {
            Some(c) if c.iter().all(|&v| v > 0.0) => c,
            _ => return Ok(infeasible(p)),
        };
        if p.equalities.iter().any(|e| (sparse_dot(&e.coeffs, &y) - e.rhs).abs() > 1e-9) {
            return Ok(infeasible(p));
        }
        let m = self.cons.len() as f64;
        let mut mu = opts.mu0;
        let mut iterations = 0;
        let mut stages = 0;
        let mut best = t_start;
        let mut t_trace = Vec::new();
        let mut hit_cap = false;
        loop {
            stages += 1;
            let tau = 1.0 / mu;
            let mut inner = 0;
            loop {
                if iterations >= opts.max_iters {
                    hit_cap = true;
                    break;
                }
                let dir = self.direction(&y, tau, &c)?;
                if dir.decrement <= 1e-12 || inner >= 200 {
                    break;
                }
                iterations += 1;
                inner += 1;
                match self.line_search(&y, t, tau, &c, &dir) {
                    Some((ny, nt, nc)) => {
                        y = ny;
                        t = nt;
                        c = nc;
                    }
                    None => break,
                }
            }
            if let Some(v) = p.min_utility(&y) {
                best = best.max(v);
            }
            t_trace.push(best);
            if hit_cap || m * mu <= opts.gap_tol {
                break;
            }
            mu *= opts.mu_factor;
        }
        let tau = 1.0 / mu;
        let dir = self.direction(&y, tau, &c)?;
        // mu / c linearized along the last Newton step
        let lambda: Vec<f64> = self
            .cons
            .iter()
            .zip(&c)
            .map(|(con, &ci)| {
                let slope = sparse_dot(&con.f.gradient(&y), &dir.dy) - con.t_coef * dir.dt;
                mu * (1.0 / ci - slope / (ci * ci))
            })
            .collect();
        let duals = Duals {
            utility: lambda[..p.utilities.len()].to_vec(),
            constraints: lambda[p.utilities.len()..].to_vec(),
            equalities: dir.nu.clone(),
        };
        let t_final = p.min_utility(&y).ok_or(SolverError::NonFinite("utilities"))?;
        let kkt = kkt_residual(p, &y, t, &duals);
        let status = if !hit_cap && kkt <= opts.tol {
            Status::Converged
        } else {
            Status::MaxIters
        };
        Ok((
            Solution {
                x: y,
                t: t_final,
                iterations,
                stages,
                kkt_residual: kkt,
                gap: m * mu,
                status,
                fallback_used: false,
                t_trace,
            },
            duals,
        ))
    }

    /// Newton step of the barrier problem at `tau = 1 / mu`, in the
    /// mu-scaled form `(mu H) d + A' nu = e_t + sum lambda_i grad c_i` with
    /// `lambda_i = mu / c_i`. Coupling constraints stay as explicit rows
    /// `v_i' d - zeta_i c_i^2 / mu = 0` so every quantity stays of moderate
    /// size as `mu` shrinks.
    fn direction(&self, y: &[f64], tau: f64, c: &[f64]) -> SolverResult<Direction> {
        let mu = 1.0 / tau;
        let n = self.p.dim;
        let l = self.coupling.len();
        let e = self.p.equalities.len();
        let mut r_y = vec![0.0; n];
        let mut r_t = 1.0;
        let mut d: Vec<DMatrix<f64>> = self.blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect();
        let mut v = DMatrix::<f64>::zeros(n, l);
        let mut v_t = vec![0.0; l];
        let mut w_inv = vec![0.0; l];
        let mut col = 0;
        let mut grad = Vec::new();
        for (ci, con) in self.cons.iter().enumerate() {
            let lambda = mu / c[ci];
            let weight = lambda / c[ci];
            grad.clear();
            grad.extend_from_slice(&con.f.linear);
            for term in &con.f.terms {
                term.gradient(y, 1.0, &mut grad);
                let mut add = |i: usize, j: usize, h: f64| {
                    d[self.block_idx[i]][(self.local_pos[i], self.local_pos[j])] += h;
                };
                term.hessian(y, -lambda, &mut add);
            }
            for &(i, g) in &grad {
                r_y[i] += lambda * g;
            }
            r_t -= con.t_coef * lambda;
            match con.local {
                Some(b) => {
                    let blk = &mut d[b];
                    for &(i, gi) in &grad {
                        for &(j, gj) in &grad {
                            blk[(self.local_pos[i], self.local_pos[j])] += weight * gi * gj;
                        }
                    }
                }
                None => {
                    for &(i, g) in &grad {
                        v[(i, col)] += g;
                    }
                    v_t[col] = -con.t_coef;
                    w_inv[col] = c[ci] * c[ci] / mu;
                    col += 1;
                }
            }
        }
        if r_y.iter().any(|x| !x.is_finite()) || !r_t.is_finite() {
            return Err(SolverError::NonFinite("barrier gradient"));
        }
        // unknowns: dy (n), dt, zeta (l), nu (e)
        let size = n + 1 + l + e;
        let (it, iz, ie) = (n, n + 1, n + 1 + l);
        let mut k = DMatrix::<f64>::zeros(size, size);
        for (blk, vars) in d.iter().zip(&self.blocks) {
            for (a_, &i) in vars.iter().enumerate() {
                for (b_, &j) in vars.iter().enumerate() {
                    k[(i, j)] = blk[(a_, b_)];
                }
            }
        }
        for c_ in 0..l {
            for i in 0..n {
                let g = v[(i, c_)];
                if g != 0.0 {
                    k[(i, iz + c_)] = g;
                    k[(iz + c_, i)] = g;
                }
            }
            k[(it, iz + c_)] = v_t[c_];
            k[(iz + c_, it)] = v_t[c_];
            k[(iz + c_, iz + c_)] = -w_inv[c_];
        }
        for (row, eq) in self.p.equalities.iter().enumerate() {
            for &(i, coef) in &eq.coeffs {
                k[(i, ie + row)] += coef;
                k[(ie + row, i)] += coef;
            }
        }
        let mut rhs = DVector::<f64>::zeros(size);
        rhs.rows_mut(0, n).copy_from_slice(&r_y);
        rhs[it] = r_t;
        for (row, eq) in self.p.equalities.iter().enumerate() {
            rhs[ie + row] = eq.rhs - sparse_dot(&eq.coeffs, y);
        }
        let sol = solve_equilibrated(k, &rhs).ok_or(SolverError::Singular)?;
        let dy = sol.rows(0, n).into_owned();
        let dt = sol[it];
        let nu = sol.rows(ie, e).into_owned();
        let r_vec = DVector::from_vec(r_y);
        let decrement = ((r_vec.dot(&dy) + r_t * dt) * tau).max(0.0);
        if !decrement.is_finite() || dy.iter().any(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite("Newton step"));
        }
        Ok(Direction {
            dy: dy.as_slice().to_vec(),
            dt,
            nu: nu.as_slice().to_vec(),
            decrement,
        })
    }

    fn line_search(&self, y: &[f64], t: f64, tau: f64, c: &[f64], dir: &Direction) -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let mut step: f64 = 1.0;
        for (ci, con) in self.cons.iter().enumerate() {
            if con.f.is_affine() {
                let slope = sparse_dot(&con.f.linear, &dir.dy) - con.t_coef * dir.dt;
                if slope < 0.0 {
                    step = step.min(-0.99 * c[ci] / slope);
                }
            }
        }
        let slope = -dir.decrement;
        // inside the quadratic region the Armijo test drowns in rounding
        let pure = dir.decrement < 0.25;
        for _ in 0..60 {
            let ny: Vec<f64> = y.iter().zip(&dir.dy).map(|(a, b)| a + step * b).collect();
            let nt = t + step * dir.dt;
            if let Some(nc) = self.values(&ny, nt) {
                if nc.iter().all(|&v| v > 0.0) {
                    if pure {
                        return Some((ny, nt, nc));
                    }
                    let change = -tau * step * dir.dt - nc.iter().zip(c).map(|(a, b)| (a / b).ln()).sum::<f64>();
                    if change <= 0.01 * step * slope {
                        return Some((ny, nt, nc));
                    }
                }
            }
            step *= 0.5;
        }
        None
    }
}

/// LU solve after Ruiz row/column scaling, with one refinement pass.
fn solve_equilibrated(s: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = s.nrows();
    let mut row = vec![1.0; n];
    let mut col = vec![1.0; n];
    let mut m = s.as_slice().to_vec();
    let mut rmax = vec![0.0f64; n];
    for _ in 0..8 {
        rmax.iter_mut().for_each(|v| *v = 0.0);
        for column in m.chunks_exact(n) {
            for (r, v) in rmax.iter_mut().zip(column) {
                *r = r.max(v.abs());
            }
        }
        let f: Vec<f64> = rmax.iter().map(|&r| if r > 0.0 { 1.0 / r.sqrt() } else { 1.0 }).collect();
        for (j, column) in m.chunks_exact_mut(n).enumerate() {
            let mut cmax = 0.0f64;
            for (v, fi) in column.iter_mut().zip(&f) {
                *v *= fi;
                cmax = cmax.max(v.abs());
            }
            if cmax > 0.0 {
                let g = 1.0 / cmax.sqrt();
                column.iter_mut().for_each(|v| *v *= g);
                col[j] *= g;
            }
        }
        row.iter_mut().zip(&f).for_each(|(r, fi)| *r *= fi);
    }
    let lu = MatRef::from_column_major_slice(&m, n, n).partial_piv_lu();
    let solve = |b: &DVector<f64>| -> DVector<f64> {
        let scaled = Mat::<f64>::from_fn(n, 1, |i, _| b[i] * row[i]);
        let z = lu.solve(&scaled);
        DVector::from_fn(n, |i, _| z[(i, 0)] * col[i])
    };
    let mut x = solve(rhs);
    let r = rhs - &s * &x;
    x += solve(&r);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn infeasible(p: &MaxMinProblem) -> (Solution, Duals) {
    (
        Solution {
            x: p.start.clone(),
            t: f64::NEG_INFINITY,
            iterations: 0,
            stages: 0,
            kkt_residual: f64::INFINITY,
            gap: f64::INFINITY,
            status: Status::Infeasible,
            fallback_used: false,
            t_trace: Vec::new(),
        },
        Duals::default(),
    )
}

/// Largest violation among stationarity of `t + sum lambda c - nu.(Ay - b)`,
/// complementary slackness, dual sign and primal feasibility at `(x, t)`.
pub fn kkt_residual(p: &MaxMinProblem, x: &[f64], t: f64, duals: &Duals) -> f64 {
    let ku = p.utilities.len();
    if duals.utility.len() != ku
        || duals.constraints.len() != p.constraints.len()
        || duals.equalities.len() != p.equalities.len()
    {
        return f64::INFINITY;
    }
    let mut stat = vec![0.0; p.dim];
    let mut worst: f64 = (1.0 - duals.utility.iter().sum::<f64>()).abs();
    let fns = p.utilities.iter().map(|u| (u, 1.0)).chain(p.constraints.iter().map(|c| (c, 0.0)));
    let lambdas = duals.utility.iter().chain(&duals.constraints);
    for ((f, t_coef), &lam) in fns.zip(lambdas) {
        let Some(v) = f.value(x) else {
            return f64::INFINITY;
        };
        let c = v - t_coef * t;
        worst = worst.max((lam * c).abs()).max(-lam).max(-c);
        for (i, g) in f.gradient(x) {
            stat[i] += lam * g;
        }
    }
    for (eq, &nu) in p.equalities.iter().zip(&duals.equalities) {
        worst = worst.max((sparse_dot(&eq.coeffs, x) - eq.rhs).abs());
        for &(i, a) in &eq.coeffs {
            stat[i] -= nu * a;
        }
    }
    stat.into_iter().fold(worst, |w, s| w.max(s.abs()))
}

/// Euclidean projection onto `{w >= 0, sum w = budget}`.
pub fn project_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let th = (cum - budget) / (i as f64 + 1.0);
        if ui - th > 0.0 {
            theta = th;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{w >= 0, sum w <= budget}`.
pub fn project_simplex_le(v: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        clipped
    } else {
        project_simplex(v, budget)
    }
}

/// Projected supergradient ascent on `min_k U_k` over the product of the
/// problem's simplex groups; variables outside every group stay at `start`.
pub fn solve_supergradient(p: &MaxMinProblem, iters: usize) -> SolverResult<Solution> {
    p.validate()?;
    if p.simplex_groups.is_empty() {
        return Err(SolverError::InvalidProblem("no simplex groups".into()));
    }
    let project = |x: &mut Vec<f64>| {
        for g in &p.simplex_groups {
            let v: Vec<f64> = g.vars.iter().map(|&i| x[i]).collect();
            for (&i, w) in g.vars.iter().zip(project_simplex(&v, g.budget)) {
                x[i] = w;
            }
        }
    };
    let mut x = p.start.clone();
    project(&mut x);
    let eval = |x: &[f64]| -> SolverResult<(f64, usize)> {
        let vals = p.utility_values(x).ok_or(SolverError::NonFinite("utilities"))?;
        let k = (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        Ok((vals[k], k))
    };
    let (mut best_t, _) = eval(&x)?;
    let mut best_x = x.clone();
    let scale = p.simplex_groups.iter().map(|g| g.budget).fold(0.0, f64::max);
    let mut t_trace = Vec::new();
    for it in 0..iters {
        let (_, k) = eval(&x)?;
        let mut g = vec![0.0; p.dim];
        for (i, v) in p.utilities[k].gradient(&x) {
            g[i] += v;
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let step = 0.1 * scale / ((it as f64 + 1.0).sqrt() * norm);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi += step * gi;
        }
        project(&mut x);
        let (t, _) = eval(&x)?;
        if t > best_t {
            best_t = t;
            best_x.clone_from(&x);
        }
        if it % 1000 == 999 {
            t_trace.push(best_t);
        }
    }
    Ok(Solution {
        x: best_x,
        t: best_t,
        iterations: iters,
        stages: 0,
        kkt_residual: f64::INFINITY,
        gap: f64::INFINITY,
        status: Status::MaxIters,
        fallback_used: true,
        t_trace,
    })
}
