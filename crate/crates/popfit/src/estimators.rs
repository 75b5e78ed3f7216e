//! Fitting procedures for the popularity mixing distribution.
//!
//! * naive: one atom per observed count value;
//! * non-parametric ML on a geometric popularity grid (the main method);
//! * penalized variant with a log-smoothness penalty;
//! * peak-refit: re-run ML on the local maxima of a fitted grid;
//! * parametric Pareto ML;
//! * log-log rank-frequency baseline.
//!
//! The NP solver maximizes
//! L(θ) = Σ_j m_j ln Σ_i θ_i p_i(j) - ln Σ_i θ_i (1 - e^{-x_i})
//! over the simplex. It runs three monotone-ascent phases: a zero-truncated
//! EM warm start (multiplicative, keeps every atom interior), projected
//! gradient with Armijo backtracking, and an active-set sequential
//! least-squares polish on the equivalent concave program
//! max Σ_j m_j ln(p_jᵀφ) s.t. qᵀφ = 1, φ >= 0 (with θ = φ/Σφ), which is
//! what actually reaches tight first-order (KKT) tolerances on flat
//! mixture ridges.

use serde::{Deserialize, Serialize};

use crate::mixture::{
    catalog_size_estimate, censored_log_likelihood, Atom, MixingDistribution,
};
use crate::numerics::{brent_min, ln_factorial, log_sum_exp, lstsq};
use crate::trace::{CountHistogram, DocumentCounts};
use crate::{Error, Result};

/// Geometric popularity grid specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Smallest grid popularity.
    pub lower: f64,
    /// Upper bound as a multiple of the maximum observed count.
    pub upper_factor: f64,
    /// Number of grid points.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lower: 0.01,
            upper_factor: 1.2,
            points: 128,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0) {
            return Err(Error::InvalidParameter("grid lower bound must be > 0".into()));
        }
        if !(self.upper_factor > 1.0) {
            return Err(Error::InvalidParameter("grid upper factor must be > 1".into()));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
        }
        Ok(())
    }
}

/// Weight initialization for the NP solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Initialization {
    Uniform,
    Custom(Vec<f64>),
}

/// NP / Pareto solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative objective-change tolerance used for phase hand-off.
    pub relative_tolerance: f64,
    /// First-order (KKT) residual required to report convergence.
    pub kkt_tolerance: f64,
    pub initialization: Initialization,
    /// Reserved for randomized restarts; the default pipeline is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 2000,
            relative_tolerance: 1e-10,
            kkt_tolerance: 1e-8,
            initialization: Initialization::Uniform,
            seed: 0,
        }
    }
}

/// Smoothness penalty weight for the penalized NP estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub rho: f64,
}

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "np")]
    Np,
    #[serde(rename = "np-penalized")]
    NpPenalized,
    #[serde(rename = "np-peak-refit")]
    NpPeakRefit,
    #[serde(rename = "pareto")]
    Pareto,
    #[serde(rename = "zipf")]
    Zipf,
}

/// A fitted mixing plus catalog estimate and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub method: Method,
    pub mixing: MixingDistribution,
    pub catalog_estimate: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimation result serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EstimationResult = serde_json::from_str(text)?;
        r.mixing.validate()?;
        Ok(r)
    }
}

/// One atom per distinct observed count j, located at x = j with weight
/// m_j; the catalog estimate is the observed document count.
pub fn naive_estimate(h: &CountHistogram) -> Result<EstimationResult> {
    if h.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    let atoms: Vec<Atom> = h
        .proportions()
        .into_iter()
        .map(|(j, m)| Atom { x: j as f64, w: m })
        .collect();
    let mixing = MixingDistribution::discrete(atoms)?;
    let log_likelihood = censored_log_likelihood(&mixing, h)?;
    Ok(EstimationResult {
        method: Method::Naive,
        mixing,
        catalog_estimate: h.observed_docs() as f64,
        log_likelihood,
        iterations: 0,
        converged: true,
    })
}

/// Geometric grid from `lower` to `upper_factor * max_count`.
pub fn build_grid(h: &CountHistogram, g: &GridSpec) -> Result<Vec<f64>> {
    g.validate()?;
    if h.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    let upper = g.upper_factor * h.max_count() as f64;
    if upper <= g.lower {
        return Err(Error::InvalidParameter(format!(
            "grid upper bound {upper} must exceed lower bound {}",
            g.lower
        )));
    }
    let ratio = (upper / g.lower).powf(1.0 / (g.points - 1) as f64);
    let mut grid = Vec::with_capacity(g.points);
    for i in 0..g.points {
        grid.push(g.lower * ratio.powi(i as i32));
    }
    // endpoints exactly as specified
    grid[0] = g.lower;
    *grid.last_mut().unwrap() = upper;
    Ok(grid)
}

// --- NP solver core ---------------------------------------------------------

const LN_RATIO_CAP: f64 = 700.0;

struct NpProblem {
    grid: Vec<f64>,
    /// observation weight per atom: 1 - e^{-x_i}
    q: Vec<f64>,
    /// zero-count mass per atom: e^{-x_i}
    p0: Vec<f64>,
    /// proportions m_j, aligned with `ln_p` rows
    m: Vec<f64>,
    /// ln p_i(j), row-major per distinct count: ln_p[j_idx * n + i]
    ln_p: Vec<f64>,
    n_atoms: usize,
    n_counts: usize,
    /// penalty weight; 0 disables the penalty path
    rho: f64,
}

impl NpProblem {
    fn build(h: &CountHistogram, grid: &[f64], rho: f64) -> Self {
        let props = h.proportions();
        let n = grid.len();
        let mut ln_p = vec![0.0; props.len() * n];
        let ln_x: Vec<f64> = grid.iter().map(|x| x.ln()).collect();
        for (row, (j, _)) in props.iter().enumerate() {
            let lf = ln_factorial(*j);
            for i in 0..n {
                ln_p[row * n + i] = -grid[i] + *j as f64 * ln_x[i] - lf;
            }
        }
        NpProblem {
            q: grid.iter().map(|x| -((-x).exp_m1())).collect(),
            p0: grid.iter().map(|x| (-x).exp()).collect(),
            m: props.iter().map(|(_, m)| *m).collect(),
            grid: grid.to_vec(),
            ln_p,
            n_atoms: n,
            n_counts: props.len(),
            rho,
        }
    }

    /// ln P(j) per distinct count, or None if some observed count has zero
    /// model mass (or the observation probability vanished).
    fn ln_mix(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let ln_theta: Vec<f64> = theta
            .iter()
            .map(|&t| if t > 0.0 { t.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut out = Vec::with_capacity(self.n_counts);
        let mut terms = vec![0.0; self.n_atoms];
        for row in 0..self.n_counts {
            let base = row * self.n_atoms;
            for i in 0..self.n_atoms {
                terms[i] = ln_theta[i] + self.ln_p[base + i];
            }
            let v = log_sum_exp(&terms);
            if v == f64::NEG_INFINITY || v.is_nan() {
                return None;
            }
            out.push(v);
        }
        Some(out)
    }

    fn q_dot(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.q).map(|(t, q)| t * q).sum()
    }

    /// Penalized objective value; NEG_INFINITY outside the domain.
    fn objective(&self, theta: &[f64]) -> (f64, Option<Vec<f64>>) {
        let qd = self.q_dot(theta);
        if qd <= 0.0 {
            return (f64::NEG_INFINITY, None);
        }
        match self.ln_mix(theta) {
            None => (f64::NEG_INFINITY, None),
            Some(ln_mix) => {
                let mut l = -qd.ln();
                for (m, lp) in self.m.iter().zip(&ln_mix) {
                    l += m * lp;
                }
                if self.rho > 0.0 {
                    l -= self.rho * self.roughness(theta);
                }
                (l, Some(ln_mix))
            }
        }
    }

    /// R(θ) = Σ_i (θ_{i+1} - θ_i)(ln θ_{i+1} - ln θ_i) / (x_{i+1} - x_i),
    /// with weights floored at 1e-300 inside the logs. Nonnegative.
    fn roughness(&self, theta: &[f64]) -> f64 {
        let mut r = 0.0;
        for i in 0..self.n_atoms - 1 {
            let a = theta[i].max(1e-300);
            let b = theta[i + 1].max(1e-300);
            r += (b - a) * (b.ln() - a.ln()) / (self.grid[i + 1] - self.grid[i]);
        }
        r
    }

    fn roughness_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_atoms];
        for i in 0..self.n_atoms - 1 {
            let a = theta[i].max(1e-300);
            let b = theta[i + 1].max(1e-300);
            let dx = self.grid[i + 1] - self.grid[i];
            let dlog = b.ln() - a.ln();
            let diff = b - a;
            g[i + 1] += (dlog + diff / b) / dx;
            g[i] -= (dlog + diff / a) / dx;
        }
        g
    }

    /// Gradient of the (penalized) objective. Ratios p_i(j)/P(j) are
    /// saturated at e^700 so starved atoms report a finite, huge pull.
    fn gradient(&self, theta: &[f64], ln_mix: &[f64]) -> Vec<f64> {
        let qd = self.q_dot(theta);
        let mut g = vec![0.0; self.n_atoms];
        for row in 0..self.n_counts {
            let base = row * self.n_atoms;
            let m = self.m[row];
            let lp = ln_mix[row];
            for i in 0..self.n_atoms {
                g[i] += m * (self.ln_p[base + i] - lp).min(LN_RATIO_CAP).exp();
            }
        }
        for i in 0..self.n_atoms {
            g[i] -= self.q[i] / qd;
        }
        if self.rho > 0.0 {
            let rg = self.roughness_gradient(theta);
            for i in 0..self.n_atoms {
                g[i] -= self.rho * rg[i];
            }
        }
        g
    }

    fn kkt_residual(&self, theta: &[f64], grad: &[f64]) -> f64 {
        let nu: f64 = theta.iter().zip(grad).map(|(t, g)| t * g).sum();
        let mut worst = 0.0f64;
        for (t, g) in theta.iter().zip(grad) {
            if *t > 0.0 {
                worst = worst.max((g - nu).abs());
            } else {
                worst = worst.max(g - nu);
            }
        }
        worst
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0usize;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            rho = i + 1;
            tau = t;
        }
    }
    if rho == 0 {
        // all entries equal and huge-negative; fall back to uniform
        return vec![1.0 / v.len() as f64; v.len()];
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Per-iterate diagnostics of one NP solve: the accepted objective values
/// in order, and the worst simplex violation seen across iterates.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub objectives: Vec<f64>,
    pub max_simplex_violation: f64,
}

impl SolverTrace {
    fn record(&mut self, value: f64, theta: &[f64]) {
        self.objectives.push(value);
        let sum: f64 = theta.iter().sum();
        let neg = theta.iter().fold(0.0f64, |a, &t| a.max(-t));
        self.max_simplex_violation = self
            .max_simplex_violation
            .max((sum - 1.0).abs())
            .max(neg);
    }
}

struct SolveOutcome {
    theta: Vec<f64>,
    log_likelihood: f64,
    iterations: usize,
    kkt: f64,
    trace: SolverTrace,
}

fn np_solve(problem: &NpProblem, theta0: Vec<f64>, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let budget = cfg.max_iterations.max(1);
    let mut theta = theta0;
    let (mut value, mut ln_mix) = problem.objective(&theta);
    if ln_mix.is_none() {
        return Err(Error::InvalidParameter(
            "initial weights give an observed count zero mass".into(),
        ));
    }
    let mut iterations = 0usize;
    let mut trace = SolverTrace::default();
    trace.record(value, &theta);

    // Phase 1: zero-truncated EM (unpenalized only). Multiplicative, keeps
    // every atom interior, very fast global progress from uniform.
    if problem.rho == 0.0 {
        let em_budget = (budget / 4).clamp(1, 150);
        for _ in 0..em_budget {
            let lm = ln_mix.as_ref().unwrap();
            let p0_mix: f64 = theta.iter().zip(&problem.p0).map(|(t, p)| t * p).sum();
            let aug = p0_mix / (1.0 - p0_mix).max(1e-300);
            let mut new = vec![0.0; problem.n_atoms];
            for row in 0..problem.n_counts {
                let base = row * problem.n_atoms;
                let m = problem.m[row];
                let lp = lm[row];
                for i in 0..problem.n_atoms {
                    if theta[i] > 0.0 {
                        new[i] += m
                            * (theta[i].ln() + problem.ln_p[base + i] - lp)
                                .min(LN_RATIO_CAP)
                                .exp();
                    }
                }
            }
            for i in 0..problem.n_atoms {
                new[i] += aug * theta[i] * problem.p0[i] / p0_mix.max(1e-300);
                new[i] /= 1.0 + aug;
            }
            let total: f64 = new.iter().sum();
            for t in &mut new {
                *t /= total;
            }
            let (v_new, lm_new) = problem.objective(&new);
            if lm_new.is_none() || v_new < value - 1e-12 * (1.0 + value.abs()) {
                break;
            }
            let gain = v_new - value;
            theta = new;
            value = v_new.max(value);
            ln_mix = lm_new;
            iterations += 1;
            trace.record(value, &theta);
            if gain.abs() <= cfg.relative_tolerance * (1.0 + value.abs()) {
                break;
            }
        }
    }

    // Phase 2: first-order ascent with Armijo backtracking. Unpenalized:
    // projected gradient. Penalized: exponentiated gradient — the log
    // penalty produces 1/θ gradient components that stall additive steps,
    // while multiplicative steps absorb them (and keep θ interior, where
    // the penalty is differentiable).
    let mut grad = problem.gradient(&theta, ln_mix.as_ref().unwrap());
    let mut kkt = problem.kkt_residual(&theta, &grad);
    let pg_budget = if problem.rho > 0.0 {
        budget
    } else {
        (budget / 4).clamp(1, 300).min(budget - iterations.min(budget))
    };
    let multiplicative = problem.rho > 0.0;
    let mut step = 1.0f64;
    for _ in 0..pg_budget {
        if kkt <= cfg.kkt_tolerance || iterations >= budget {
            break;
        }
        let g_inf = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        let mut s = if multiplicative {
            step.min(100.0 / g_inf.max(1e-12))
        } else {
            step.min(10.0 / g_inf.max(1e-12))
        };
        let mut accepted = false;
        for _ in 0..70 {
            let cand: Vec<f64> = if multiplicative {
                // θ'_i ∝ θ_i e^{s g_i}, computed softmax-style
                let logs: Vec<f64> = theta
                    .iter()
                    .zip(&grad)
                    .map(|(t, g)| t.max(1e-300).ln() + s * g)
                    .collect();
                let hi = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let raw: Vec<f64> = logs.iter().map(|l| (l - hi).exp()).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|r| r / z).collect()
            } else {
                let shifted: Vec<f64> = theta
                    .iter()
                    .zip(&grad)
                    .map(|(t, g)| t + s * g)
                    .collect();
                project_simplex(&shifted)
            };
            let (v_cand, lm_cand) = problem.objective(&cand);
            if lm_cand.is_some() {
                let dir_gain: f64 = cand
                    .iter()
                    .zip(&theta)
                    .zip(&grad)
                    .map(|((c, t), g)| (c - t) * g)
                    .sum();
                if v_cand >= value + 1e-4 * dir_gain.max(0.0) && v_cand > value {
                    theta = cand;
                    value = v_cand;
                    ln_mix = lm_cand;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        step = s * 2.0;
        iterations += 1;
        trace.record(value, &theta);
        grad = problem.gradient(&theta, ln_mix.as_ref().unwrap());
        kkt = problem.kkt_residual(&theta, &grad);
    }

    // Phase 3 (unpenalized): active-set sequential least squares on the
    // concave reformulation, which resolves the flat ridges that stall
    // first-order steps.
    if problem.rho == 0.0 && kkt > cfg.kkt_tolerance {
        let outcome = cnm_polish(
            problem,
            &theta,
            value,
            cfg,
            budget.saturating_sub(iterations),
            &mut trace,
        )?;
        theta = outcome.0;
        value = outcome.1;
        iterations += outcome.2;
        let (v, lm) = problem.objective(&theta);
        debug_assert!((v - value).abs() <= 1e-9 * (1.0 + value.abs()));
        value = v;
        ln_mix = lm;
        grad = problem.gradient(&theta, ln_mix.as_ref().unwrap());
        kkt = problem.kkt_residual(&theta, &grad);
    }

    let log_likelihood = if problem.rho > 0.0 {
        // report the unpenalized likelihood component
        let qd = problem.q_dot(&theta);
        let lm = ln_mix.as_ref().unwrap();
        problem.m.iter().zip(lm).map(|(m, lp)| m * lp).sum::<f64>() - qd.ln()
    } else {
        value
    };
    Ok(SolveOutcome {
        theta,
        log_likelihood,
        iterations,
        kkt,
        trace,
    })
}

// One pass of the constrained sequential quadratic method: linearize the
// concave objective G(φ) = Σ m_j ln(p_jᵀφ) at the current φ, solve the
// resulting nonnegative least-squares model with the constraint row qᵀφ = 1
// appended, and line-search toward the model optimum.
fn cnm_polish(
    problem: &NpProblem,
    theta: &[f64],
    _value: f64,
    cfg: &SolverConfig,
    budget: usize,
    trace: &mut SolverTrace,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = problem.n_atoms;
    let rows = problem.n_counts;
    let qd = problem.q_dot(theta);
    let mut phi: Vec<f64> = theta.iter().map(|t| t / qd).collect();

    let g_of = |phi: &[f64]| -> (f64, Option<Vec<f64>>) {
        let ln_theta: Vec<f64> = phi
            .iter()
            .map(|&t| if t > 0.0 { t.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(rows);
        let mut terms = vec![0.0; n];
        for row in 0..rows {
            let base = row * n;
            for i in 0..n {
                terms[i] = ln_theta[i] + problem.ln_p[base + i];
            }
            let v = log_sum_exp(&terms);
            if v == f64::NEG_INFINITY || v.is_nan() {
                return (f64::NEG_INFINITY, None);
            }
            acc += problem.m[row] * v;
            out.push(v);
        }
        (acc, Some(out))
    };

    let (mut g_val, mut ln_mix) = g_of(&phi);
    if ln_mix.is_none() {
        return Ok((theta.to_vec(), _value, 0));
    }
    let sqm: Vec<f64> = problem.m.iter().map(|m| m.sqrt()).collect();
    let mut used = 0usize;
    // Steps whose objective gain rounds to zero are still accepted (they
    // move mass along numerically flat directions and shrink the KKT
    // residual), but only a bounded run of them, to rule out cycling.
    let mut neutral_run = 0usize;

    for _ in 0..budget.max(1) {
        let lm = ln_mix.as_ref().unwrap();
        // gradient D_i = Σ_j m_j p_ij / P_j(φ) and violations D - q
        let mut d = vec![0.0; n];
        for row in 0..rows {
            let base = row * n;
            let m = problem.m[row];
            let lp = lm[row];
            for i in 0..n {
                d[i] += m * (problem.ln_p[base + i] - lp).min(LN_RATIO_CAP).exp();
            }
        }
        let phi_sum: f64 = phi.iter().sum();
        let mut kkt = 0.0f64;
        for i in 0..n {
            let viol = d[i] - problem.q[i];
            if phi[i] > 0.0 {
                kkt = kkt.max(viol.abs());
            } else {
                kkt = kkt.max(viol);
            }
        }
        kkt *= phi_sum;
        if kkt <= cfg.kkt_tolerance {
            break;
        }

        // active set: current support plus entering violators
        let active: Vec<usize> = (0..n)
            .filter(|&i| phi[i] > 0.0 || d[i] - problem.q[i] > 0.0)
            .collect();
        let k = active.len();
        if k == 0 {
            break;
        }
        // Least-squares model: rows √m_j (w_jᵀ φ') with target √m_j (w_jᵀφ + 1),
        // plus the constraint row qᵀφ' = 1. Solved as NNLS on the Gram system.
        let mut a = vec![0.0; (rows + 1) * k];
        let mut target = vec![0.0; rows + 1];
        for row in 0..rows {
            let base = row * n;
            let lp = lm[row];
            let mut dot = 0.0;
            for (col, &i) in active.iter().enumerate() {
                let w = (problem.ln_p[base + i] - lp).min(LN_RATIO_CAP).exp();
                a[row * k + col] = sqm[row] * w;
                dot += w * phi[i];
            }
            target[row] = sqm[row] * (dot + 1.0);
        }
        for (col, &i) in active.iter().enumerate() {
            a[rows * k + col] = problem.q[i];
        }
        target[rows] = 1.0;

        let sol = match nnls_qr(&a, rows + 1, k, &target) {
            Some(s) => s,
            None => break,
        };

        // backtracking line search from the model optimum toward phi;
        // exactly-neutral moves count as progress a bounded number of times
        let mut improved = false;
        let mut s = 1.0;
        for _ in 0..60 {
            let mut cand = vec![0.0; n];
            for (col, &i) in active.iter().enumerate() {
                let v = phi[i] + s * (sol[col] - phi[i]);
                cand[i] = v.max(0.0);
            }
            let qc: f64 = cand.iter().zip(&problem.q).map(|(p, q)| p * q).sum();
            if qc > 0.0 {
                for v in &mut cand {
                    *v /= qc;
                }
                let (g_cand, lm_cand) = g_of(&cand);
                let acceptable = lm_cand.is_some()
                    && (g_cand > g_val || (g_cand == g_val && neutral_run < 50 && cand != phi));
                if acceptable {
                    neutral_run = if g_cand > g_val { 0 } else { neutral_run + 1 };
                    phi = cand;
                    g_val = g_cand;
                    ln_mix = lm_cand;
                    improved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
        used += 1;
        let phi_sum: f64 = phi.iter().sum();
        let theta_now: Vec<f64> = phi.iter().map(|p| p / phi_sum).collect();
        trace.record(g_val, &theta_now);
    }

    // Endgame: Gauss-Newton on the settled support with the constraint
    // eliminated exactly through a Householder null-space basis. The NNLS
    // pass balances weights only to the precision its soft constraint row
    // allows; this step equalizes the support gradients to QR precision.
    neutral_run = 0;
    for _ in 0..60 {
        let lm = ln_mix.as_ref().unwrap();
        let support: Vec<usize> = (0..n).filter(|&i| phi[i] > 0.0).collect();
        let s_len = support.len();
        if s_len < 2 || s_len > rows {
            break;
        }
        // violations for the stopping check
        let mut d = vec![0.0; n];
        for row in 0..rows {
            let base = row * n;
            let m = problem.m[row];
            let lp = lm[row];
            for i in 0..n {
                d[i] += m * (problem.ln_p[base + i] - lp).min(LN_RATIO_CAP).exp();
            }
        }
        let phi_sum: f64 = phi.iter().sum();
        let mut kkt = 0.0f64;
        for i in 0..n {
            let viol = d[i] - problem.q[i];
            if phi[i] > 0.0 {
                kkt = kkt.max(viol.abs());
            } else {
                kkt = kkt.max(viol);
            }
        }
        if kkt * phi_sum <= cfg.kkt_tolerance {
            break;
        }
        // A restricted to the support, no constraint row
        let mut a_s = vec![0.0; rows * s_len];
        for row in 0..rows {
            let base = row * n;
            let lp = lm[row];
            for (c, &i) in support.iter().enumerate() {
                a_s[row * s_len + c] =
                    sqm[row] * (problem.ln_p[base + i] - lp).min(LN_RATIO_CAP).exp();
            }
        }
        // Householder vector sending q_S to a multiple of e_1
        let q_s: Vec<f64> = support.iter().map(|&i| problem.q[i]).collect();
        let qnorm = q_s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = q_s.clone();
        v[0] += q_s[0].signum() * qnorm;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            break;
        }
        for x in &mut v {
            *x /= vnorm;
        }
        // AZ = (A - 2(Av)vᵀ) without its first column
        let mut av = vec![0.0; rows];
        for row in 0..rows {
            let arow = &a_s[row * s_len..(row + 1) * s_len];
            av[row] = arow.iter().zip(&v).map(|(a, v)| a * v).sum();
        }
        let cols = s_len - 1;
        let mut az = vec![0.0; rows * cols];
        for row in 0..rows {
            for c in 0..cols {
                az[row * cols + c] =
                    a_s[row * s_len + c + 1] - 2.0 * av[row] * v[c + 1];
            }
        }
        let y = match lstsq(&az, rows, cols, &sqm) {
            Some(y) => y,
            None => break,
        };
        // d_S = H [0; y]
        let vy: f64 = v[1..].iter().zip(&y).map(|(v, y)| v * y).sum();
        let mut dir = vec![0.0; s_len];
        for c in 0..s_len {
            let base = if c == 0 { 0.0 } else { y[c - 1] };
            dir[c] = base - 2.0 * v[c] * vy;
        }
        let mut s = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let mut cand = phi.clone();
            for (c, &i) in support.iter().enumerate() {
                cand[i] = (phi[i] + s * dir[c]).max(0.0);
            }
            let qc: f64 = cand.iter().zip(&problem.q).map(|(p, q)| p * q).sum();
            if qc > 0.0 {
                for x in &mut cand {
                    *x /= qc;
                }
                let (g_cand, lm_cand) = g_of(&cand);
                // the true gain of these steps can sit below one ulp of G;
                // accept measured-neutral moves (within evaluation noise)
                // a bounded number of times, trusting the model's ascent
                let neutral_ok = g_cand >= g_val - 1e-14 * (1.0 + g_val.abs())
                    && neutral_run < 50
                    && cand != phi;
                if lm_cand.is_some() && (g_cand > g_val || neutral_ok) {
                    neutral_run = if g_cand > g_val { 0 } else { neutral_run + 1 };
                    phi = cand;
                    g_val = g_cand.max(g_val);
                    ln_mix = lm_cand;
                    improved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
        used += 1;
        let phi_sum: f64 = phi.iter().sum();
        let theta_now: Vec<f64> = phi.iter().map(|p| p / phi_sum).collect();
        trace.record(g_val, &theta_now);
    }

    let phi_sum: f64 = phi.iter().sum();
    let theta_out: Vec<f64> = phi.iter().map(|p| p / phi_sum).collect();
    // G(φ) equals L(θ(φ)) on the constraint manifold
    Ok((theta_out, g_val, used))
}

// NNLS by Lawson–Hanson: minimize ||A x - b||² over x >= 0. Passive-set
// subproblems are solved by Householder QR on the true matrix (the Gram
// route squares an already harsh condition number). The passive set grows
// from empty, one column per add, so it never exceeds the row count.
// `a` is row-major rows×k.
fn nnls_qr(a: &[f64], rows: usize, k: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut passive = vec![false; k];
    let mut x = vec![0.0f64; k];

    let solve_passive = |passive: &[bool]| -> Option<(Vec<usize>, Vec<f64>)> {
        let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
        let kk = idx.len();
        if kk == 0 || kk > rows {
            return None;
        }
        let mut sub = vec![0.0; rows * kk];
        for r in 0..rows {
            for (c, &ic) in idx.iter().enumerate() {
                sub[r * kk + c] = a[r * k + ic];
            }
        }
        let mut z = lstsq(&sub, rows, kk, b)?;
        // one step of iterative refinement recovers digits the QR loses to
        // the wide column-scale spread
        let mut residual = b.to_vec();
        for r in 0..rows {
            let mut dot = 0.0;
            for c in 0..kk {
                dot += sub[r * kk + c] * z[c];
            }
            residual[r] -= dot;
        }
        if let Some(correction) = lstsq(&sub, rows, kk, &residual) {
            for (zc, dc) in z.iter_mut().zip(&correction) {
                *zc += dc;
            }
        }
        Some((idx, z))
    };

    // first entering column: most correlated with b
    {
        let mut best = 0.0f64;
        let mut best_i = None;
        for i in 0..k {
            let mut w = 0.0;
            for r in 0..rows {
                w += a[r * k + i] * b[r];
            }
            if w > best {
                best = w;
                best_i = Some(i);
            }
        }
        match best_i {
            Some(i) => passive[i] = true,
            None => return Some(x), // b non-positive against every column
        }
    }

    for _outer in 0..6 * k + 20 {
        let (idx, z_sub) = match solve_passive(&passive) {
            Some(v) => v,
            // singular or over-full subproblem: return the best point so far
            None => return Some(x),
        };
        let mut z = vec![0.0f64; k];
        for (pos, &i) in idx.iter().enumerate() {
            z[i] = z_sub[pos];
        }

        if idx.iter().all(|&i| z[i] > 0.0) {
            x = z;
            // dual check on the active set: w = Aᵀ(b - A x)
            let mut residual = b.to_vec();
            for r in 0..rows {
                let arow = &a[r * k..(r + 1) * k];
                let mut dot = 0.0;
                for &i in &idx {
                    dot += arow[i] * x[i];
                }
                residual[r] -= dot;
            }
            let rnorm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut best = 0.0f64;
            let mut best_i = None;
            for i in 0..k {
                if !passive[i] {
                    let mut w = 0.0;
                    let mut col_norm2 = 0.0;
                    for r in 0..rows {
                        let v = a[r * k + i];
                        w += v * residual[r];
                        col_norm2 += v * v;
                    }
                    let tol_i = 1e-11 * col_norm2.sqrt() * rnorm + 1e-300;
                    if w > tol_i && w > best {
                        best = w;
                        best_i = Some(i);
                    }
                }
            }
            match best_i {
                Some(i) => passive[i] = true,
                None => return Some(x),
            }
        } else {
            // shrink toward the feasible boundary and drop blockers
            let mut alpha = 1.0f64;
            let mut blocker = None;
            for &i in &idx {
                if z[i] <= 0.0 {
                    let denom = x[i] - z[i];
                    if denom > 0.0 && x[i] / denom <= alpha {
                        alpha = x[i] / denom;
                        blocker = Some(i);
                    }
                }
            }
            for &i in &idx {
                x[i] = (x[i] + alpha * (z[i] - x[i])).max(0.0);
            }
            let max_x = idx.iter().map(|&i| x[i]).fold(0.0f64, f64::max);
            for &i in &idx {
                if z[i] <= 0.0 && x[i] <= 1e-12 * max_x.max(1e-300) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if let Some(i) = blocker {
                x[i] = 0.0;
                passive[i] = false;
            }
            if !passive.iter().any(|&p| p) {
                return Some(x);
            }
        }
    }
    Some(x)
}

fn np_fit_on_grid(
    h: &CountHistogram,
    grid: Vec<f64>,
    cfg: &SolverConfig,
    rho: f64,
    method: Method,
) -> Result<(EstimationResult, SolverTrace)> {
    if h.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    let problem = NpProblem::build(h, &grid, rho);
    let theta0 = match &cfg.initialization {
        Initialization::Uniform => vec![1.0 / grid.len() as f64; grid.len()],
        Initialization::Custom(w) => {
            if w.len() != grid.len() {
                return Err(Error::InvalidParameter(format!(
                    "custom initialization has {} weights for {} grid points",
                    w.len(),
                    grid.len()
                )));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || w.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidParameter(
                    "custom initialization must be nonnegative with positive mass".into(),
                ));
            }
            w.iter().map(|x| x / total).collect()
        }
    };
    let outcome = np_solve(&problem, theta0, cfg)?;

    let qd = problem.q_dot(&outcome.theta);
    if qd < 1e-12 {
        return Err(Error::Domain(
            "all fitted mass escaped below observability".into(),
        ));
    }
    let atoms: Vec<Atom> = grid
        .iter()
        .zip(&outcome.theta)
        .map(|(&x, &w)| Atom { x, w })
        .collect();
    let mixing = MixingDistribution::discrete(atoms)?;
    let catalog_estimate = catalog_size_estimate(h.observed_docs(), &mixing)?;
    Ok((
        EstimationResult {
            method,
            mixing,
            catalog_estimate,
            log_likelihood: outcome.log_likelihood,
            iterations: outcome.iterations,
            converged: outcome.kkt <= cfg.kkt_tolerance,
        },
        outcome.trace,
    ))
}

/// Non-parametric maximum likelihood over a geometric grid.
pub fn np_ml_estimate(
    h: &CountHistogram,
    g: &GridSpec,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    let grid = build_grid(h, g)?;
    np_fit_on_grid(h, grid, cfg, 0.0, Method::Np).map(|(r, _)| r)
}

/// NP estimate plus the per-iterate solver diagnostics (objective sequence
/// and worst simplex violation).
pub fn np_ml_estimate_traced(
    h: &CountHistogram,
    g: &GridSpec,
    cfg: &SolverConfig,
) -> Result<(EstimationResult, SolverTrace)> {
    let grid = build_grid(h, g)?;
    np_fit_on_grid(h, grid, cfg, 0.0, Method::Np)
}

/// Penalized NP estimate: maximizes L(θ) - ρ R(θ). With ρ = 0 this is the
/// plain NP path.
pub fn penalized_np_estimate(
    h: &CountHistogram,
    g: &GridSpec,
    p: &PenaltyConfig,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    if !(p.rho >= 0.0) {
        return Err(Error::InvalidParameter("rho must be >= 0".into()));
    }
    let grid = build_grid(h, g)?;
    if p.rho == 0.0 {
        return np_fit_on_grid(h, grid, cfg, 0.0, Method::NpPenalized).map(|(r, _)| r);
    }
    np_fit_on_grid(h, grid, cfg, p.rho, Method::NpPenalized).map(|(r, _)| r)
}

/// Analytic gradient of the NP log-likelihood at interior weights.
pub fn np_loglik_gradient(theta: &[f64], grid: &[f64], h: &CountHistogram) -> Result<Vec<f64>> {
    if theta.len() != grid.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} grid points",
            theta.len(),
            grid.len()
        )));
    }
    if h.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    let problem = NpProblem::build(h, grid, 0.0);
    if problem.q_dot(theta) <= 0.0 {
        return Err(Error::Domain("observation probability is zero".into()));
    }
    match problem.ln_mix(theta) {
        None => Err(Error::Domain(
            "an observed count has zero model mass".into(),
        )),
        Some(lm) => Ok(problem.gradient(theta, &lm)),
    }
}

/// Extract atoms whose weight is a strict local maximum over the grid and
/// re-run the simplex ML on that reduced support. Plateau ties are not
/// peaks; a boundary atom compares to its single neighbor. If no peaks
/// exist the base result is returned unchanged.
pub fn peak_refit(
    base: &EstimationResult,
    h: &CountHistogram,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    let atoms = match &base.mixing {
        MixingDistribution::Discrete(d) => &d.atoms,
        MixingDistribution::Pareto(_) => {
            return Err(Error::InvalidParameter(
                "peak refit requires a discrete mixing".into(),
            ))
        }
    };
    let n = atoms.len();
    let mut peaks = Vec::new();
    for i in 0..n {
        let w = atoms[i].w;
        let up = i + 1 < n;
        let down = i > 0;
        let is_peak = match (down, up) {
            (false, false) => true,
            (false, true) => w > atoms[i + 1].w,
            (true, false) => w > atoms[i - 1].w,
            (true, true) => w > atoms[i - 1].w && w > atoms[i + 1].w,
        };
        if is_peak {
            peaks.push(atoms[i].x);
        }
    }
    if peaks.is_empty() {
        log::warn!("peak refit: no local maxima in base weights; returning base unchanged");
        return Ok(base.clone());
    }
    np_fit_on_grid(h, peaks, cfg, 0.0, Method::NpPeakRefit).map(|(r, _)| r)
}

// --- Pareto ML ---------------------------------------------------------------

const ALPHA_BOX: (f64, f64) = (0.5, 5.0);
const XM_BOX: (f64, f64) = (1e-4, 10.0);

/// Censored Pareto log-likelihood of a histogram, evaluated from the
/// mixed-Poisson form: Σ_j m_j ln(α xm^α Γ(j-α, xm) / j!)
/// - ln(1 - α xm^α Γ(-α, xm)).
pub fn pareto_censored_loglik(alpha: f64, xm: f64, h: &CountHistogram) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    let f = MixingDistribution::pareto(alpha, xm)?;
    censored_log_likelihood(&f, h)
}

fn pareto_loglik_fast(alpha: f64, xm: f64, props: &[(u64, f64)], max_j: u64) -> f64 {
    let pref = alpha.ln() + alpha * xm.ln();
    let mut walk = match crate::gamma::LnUpperGammaWalk::start(-alpha, xm) {
        Ok(w) => w,
        Err(_) => return f64::NEG_INFINITY,
    };
    let p0 = (pref + walk.current()).exp();
    if !(p0 < 1.0) {
        return f64::NEG_INFINITY;
    }
    let mut acc = -(1.0 - p0).ln();
    let mut iter = props.iter();
    let mut next = iter.next();
    for j in 1..=max_j {
        walk.advance();
        if let Some(&(jj, m)) = next {
            if jj == j {
                acc += m * (pref + walk.current() - ln_factorial(j));
                next = iter.next();
            }
        }
    }
    acc
}

/// Parametric Pareto fit by coordinate-wise search (Brent in each
/// coordinate, xm on a log scale) from a 3x3 multi-start over the box
/// α ∈ [0.5, 5], xm ∈ [1e-4, 10]. An optimum pinned at a box edge is
/// reported with `converged = false`.
pub fn pareto_ml_estimate(h: &CountHistogram, _cfg: &SolverConfig) -> Result<EstimationResult> {
    if h.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    let props = h.proportions();
    let max_j = h.max_count();
    let obj = |alpha: f64, ln_xm: f64| -> f64 {
        -pareto_loglik_fast(alpha, ln_xm.exp(), &props, max_j)
    };

    let (ln_lo, ln_hi) = (XM_BOX.0.ln(), XM_BOX.1.ln());
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for ai in 0..3 {
        for xi in 0..3 {
            let a = ALPHA_BOX.0 + (ALPHA_BOX.1 - ALPHA_BOX.0) * (ai as f64 + 1.0) / 4.0;
            let lx = ln_lo + (ln_hi - ln_lo) * (xi as f64 + 1.0) / 4.0;
            let v = obj(a, lx);
            if v < best.0 {
                best = (v, a, lx);
            }
        }
    }

    let (mut alpha, mut ln_xm) = (best.1, best.2);
    let mut sweeps = 0usize;
    for _ in 0..200 {
        let (a_new, _) = brent_min(|a| obj(a, ln_xm), ALPHA_BOX.0, ALPHA_BOX.1, 1e-11);
        let (x_new, _) = brent_min(|lx| obj(a_new, lx), ln_lo, ln_hi, 1e-11);
        sweeps += 1;
        let moved = (a_new - alpha).abs() + (x_new - ln_xm).abs();
        alpha = a_new;
        ln_xm = x_new;
        if moved < 1e-9 {
            break;
        }
    }
    let xm = ln_xm.exp();
    let on_edge = (alpha - ALPHA_BOX.0).abs() < 1e-6 * (ALPHA_BOX.1 - ALPHA_BOX.0)
        || (ALPHA_BOX.1 - alpha).abs() < 1e-6 * (ALPHA_BOX.1 - ALPHA_BOX.0)
        || (ln_xm - ln_lo).abs() < 1e-6 * (ln_hi - ln_lo)
        || (ln_hi - ln_xm).abs() < 1e-6 * (ln_hi - ln_lo);

    let mixing = MixingDistribution::pareto(alpha, xm)?;
    let catalog_estimate = catalog_size_estimate(h.observed_docs(), &mixing)?;
    let log_likelihood = pareto_loglik_fast(alpha, xm, &props, max_j);
    Ok(EstimationResult {
        method: Method::Pareto,
        mixing,
        catalog_estimate,
        log_likelihood,
        iterations: sweeps,
        converged: !on_edge,
    })
}

// --- rank-frequency baseline --------------------------------------------------

/// Least-squares slope/intercept of ln(frequency) on ln(rank) for
/// descending frequencies (rank 1 first); the tail exponent is reported as
/// 1/|slope|. Errors when the frequencies are constant.
pub fn zipf_exponent_from_frequencies(freqs: &[f64]) -> Result<(f64, f64, f64)> {
    if freqs.len() < 2 {
        return Err(Error::InvalidParameter(
            "rank-frequency fit needs at least 2 points".into(),
        ));
    }
    let n = freqs.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (idx, &f) in freqs.iter().enumerate() {
        if !(f > 0.0) {
            return Err(Error::InvalidParameter("frequencies must be positive".into()));
        }
        let x = ((idx + 1) as f64).ln();
        let y = f.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = sxx - sx * sx / n;
    if denom <= 0.0 {
        return Err(Error::InvalidParameter("degenerate rank axis".into()));
    }
    let slope = (sxy - sx * sy / n) / denom;
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::Domain("zero slope, exponent undefined".into()));
    }
    let intercept = (sy - slope * sx) / n;
    Ok((1.0 / slope.abs(), slope, intercept))
}

/// Rank-frequency baseline on the top `top_n` observed counts. The slope of
/// the log-log regression gives the tail exponent; the intercept implies a
/// scale for the reported Pareto, taking the observed catalog at face value.
pub fn zipf_loglog_fit(dc: &DocumentCounts, top_n: usize) -> Result<EstimationResult> {
    if dc.observed_docs() < 2 {
        return Err(Error::InvalidParameter(
            "rank-frequency fit needs at least 2 documents".into(),
        ));
    }
    let h = crate::trace::histogram_from_counts(dc);
    zipf_fit_from_histogram(&h, top_n)
}

/// Same baseline computed from the histogram (the ranked count sequence is
/// a function of the tallies alone).
pub fn zipf_fit_from_histogram(h: &CountHistogram, top_n: usize) -> Result<EstimationResult> {
    let k0 = h.observed_docs();
    if k0 < 2 {
        return Err(Error::InvalidParameter(
            "rank-frequency fit needs at least 2 documents".into(),
        ));
    }
    let take = top_n.min(k0 as usize);
    let mut freqs = Vec::with_capacity(take);
    'outer: for (&j, &c) in h.tally.iter().rev() {
        for _ in 0..c {
            freqs.push(j as f64);
            if freqs.len() == take {
                break 'outer;
            }
        }
    }
    if freqs.iter().all(|&f| f == freqs[0]) {
        return Err(Error::Domain("zero slope, exponent undefined".into()));
    }
    let (alpha, slope, intercept) = zipf_exponent_from_frequencies(&freqs)?;
    // implied scale: the fitted line's frequency at the last observed rank
    let xm = (intercept + slope * (k0 as f64).ln()).exp().max(1e-12);
    let mixing = MixingDistribution::pareto(alpha, xm)?;
    let log_likelihood = censored_log_likelihood(&mixing, h)?;
    Ok(EstimationResult {
        method: Method::Zipf,
        mixing,
        catalog_estimate: k0 as f64,
        log_likelihood,
        iterations: 0,
        converged: true,
    })
}
