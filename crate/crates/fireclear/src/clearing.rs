//! Liquidation demand and the fire-sale clearing fixed point.
//!
//! Two solver routes cover the clearing system `s^i = x^i + sum_k (1 -
//! e^{-Q_k}) M_k p_ki` with exposures `Q_k = beta * sum_i x^i pi_ik`:
//!
//! * the general multi-industry route iterates the exposure map
//!   `Q = beta*Pi_s - beta*C M (1 - e^{-Q})` (a contraction below the
//!   Lipschitz threshold, and a monotone scalar equation when there is a
//!   single industry);
//! * the aggregate route applies when every bank shares one devaluation
//!   factor (one industry, or identical disposal rows) and solves the scalar
//!   sum equation `sum_j A_j L^j = X + (1 - e^{-beta X}) * A^P` by bisection,
//!   then distributes per-bank volumes through cross-bank dependence.

use crate::model::{build_matrices, Bank, IndustryPanel, MarketEnv, Modularity, ModelError};
use crate::roots::{bisect, bisect_growing, RootError};
use serde::Serialize;
use thiserror::Error;

/// Numerical knobs; defaults satisfy the library-wide tolerances.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub residual_tol: f64,
    pub x_tol: f64,
    pub max_iter: usize,
    /// Optional starting iterate for the exposure map (testing hook).
    pub q_init: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            residual_tol: 1e-10,
            x_tol: 1e-12,
            max_iter: 100_000,
            q_init: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    /// beta = 0 decouples the system; x = s exactly.
    BetaZero,
    /// Exposure-map iteration under a certified contraction.
    QContraction,
    /// Damped exposure-map iteration outside the certified region.
    QDamped,
    /// Single-industry exposure equation solved by monotone bisection.
    QBisect1D,
    /// Scalar aggregate equation, single-exponent regime.
    Aggregate,
    /// Aggregate equation with the supermodular demand variant.
    AggregateSupermodular,
}

/// Contraction diagnostics for the exposure map.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    /// A-priori Lipschitz estimate beta * max_{k,l} M_l C_kl.
    pub bound: f64,
    /// Admissibility threshold beta_bar(eps) = min(self-mapping, Lipschitz).
    pub beta_bar: f64,
    /// Lipschitz-side threshold 1 / max_{k,l} M_l C_kl.
    pub beta_bar_lipschitz: f64,
    /// Self-mapping-side threshold evaluated numerically.
    pub beta_bar_self_mapping: f64,
    pub contraction: bool,
}

/// Solved clearing system for one cluster.
#[derive(Debug, Clone, Serialize)]
pub struct ClearingSolution {
    pub bank_ids: Vec<String>,
    /// Demanded liquidation s^i.
    pub demanded: Vec<f64>,
    /// Realized liquidation x^i (negative = credit creation).
    pub realized: Vec<f64>,
    /// Q_k per industry, in panel industry order.
    pub aggregate_exposure: Vec<f64>,
    /// kappa_k = e^{-Q_k}.
    pub devaluation_factor: Vec<f64>,
    pub iterations: usize,
    /// Max-norm residual of the defining equations.
    pub residual: f64,
    /// True when convergence is certified (contraction or monotonicity).
    pub certified: bool,
    pub method: SolveMethod,
    /// Industries where the no-expansion constraint Q_k >= 0 is violated;
    /// reported, never clipped.
    pub q_negative_industries: Vec<String>,
    /// Flag set when the supermodular equation admits a second root on the
    /// decreasing branch.
    pub supermodular_second_root: bool,
}

impl ClearingSolution {
    pub fn realized_of(&self, id: &str) -> Option<f64> {
        self.bank_ids
            .iter()
            .position(|b| b == id)
            .map(|i| self.realized[i])
    }

    pub fn total_realized(&self) -> f64 {
        self.realized.iter().sum()
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("root finding failed: {0}")]
    Root(#[from] RootError),
    #[error(
        "exposure map diverged after {iterations} iterations (residual {residual:.3e}, \
         Lipschitz estimate {bound:.3e})"
    )]
    Diverged {
        iterations: usize,
        residual: f64,
        bound: f64,
    },
    #[error("reduced disposal matrix numerically rank-deficient")]
    SingularStructure,
    #[error("supermodular demand equation has no root on the increasing branch (target {target:.6e} below minimum {minimum:.6e})")]
    NoSupermodularRoot { target: f64, minimum: f64 },
    #[error("{0}")]
    UnsupportedRegime(String),
}

/// L^i = (theta_bar - theta^i + (1 - theta_bar) * eps) / theta_bar, the
/// per-asset-unit risk mitigation requirement; s^i = A_i * L^i.
pub fn l_coefficient(theta: f64, env: &MarketEnv) -> f64 {
    (env.theta_bar - theta + (1.0 - env.theta_bar) * env.epsilon) / env.theta_bar
}

/// Demanded liquidation s^i = (1/tb) * [tb*A - E + (1 - tb)*eps*A].
/// Independent of beta.
pub fn liquidation_demand(bank: &Bank, env: &MarketEnv) -> f64 {
    (env.theta_bar * bank.assets - bank.equity
        + (1.0 - env.theta_bar) * env.epsilon * bank.assets)
        / env.theta_bar
}

pub fn demand_vector(banks: &[Bank], env: &MarketEnv) -> Vec<f64> {
    banks.iter().map(|b| liquidation_demand(b, env)).collect()
}

/// Shock size at which s^i crosses zero: (theta - theta_bar) / (1 - theta_bar).
pub fn epsilon_s_zero(theta: f64, theta_bar: f64) -> f64 {
    (theta - theta_bar) / (1.0 - theta_bar)
}

/// Intercept and slope of the cross-bank dependence line
/// x^i = A_i (theta^j - theta^i) / theta_bar + (A_i / A_j) x^j.
pub fn dependence_line(bank_i: &Bank, bank_j: &Bank, env: &MarketEnv) -> (f64, f64) {
    (
        bank_i.assets * (bank_j.leverage() - bank_i.leverage()) / env.theta_bar,
        bank_i.assets / bank_j.assets,
    )
}

/// True when every bank in the panel shares a single devaluation exponent:
/// one industry, or all disposal rows identical.
pub fn single_exponent_regime(panel: &IndustryPanel) -> bool {
    if panel.industries.len() == 1 {
        return true;
    }
    let first = &panel.disposal[0];
    panel
        .disposal
        .iter()
        .all(|row| row.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-12))
}

/// Solve the bank's parallel-space equation Phi(x~) = s~. Phi is strictly
/// increasing, so the root exists and is unique for every beta and carries
/// the sign of the demand.
pub fn cms_solve(bank: &Bank, env: &MarketEnv, demand: f64) -> Result<f64, SolveError> {
    cms_solve_with(bank, env, demand, &SolverConfig::default())
}

pub fn cms_solve_with(
    bank: &Bank,
    env: &MarketEnv,
    demand: f64,
    config: &SolverConfig,
) -> Result<f64, SolveError> {
    if env.beta == 0.0 {
        return Ok(demand);
    }
    match env.modularity {
        Modularity::Submodular => {
            let pis: Vec<f64> = bank
                .investments
                .values()
                .map(|v| v / bank.assets)
                .collect();
            let amounts: Vec<f64> = bank.investments.values().copied().collect();
            let f = |x: f64| {
                let mut v = x - demand;
                for (pi, a) in pis.iter().zip(&amounts) {
                    if *a > 0.0 {
                        v += (1.0 - (-env.beta * pi * x).exp()) * a;
                    }
                }
                v
            };
            let width = demand.abs() + bank.assets / env.theta_bar;
            Ok(bisect_growing(width, f, config.x_tol)?)
        }
        Modularity::Supermodular => {
            supermodular_scalar_root(demand, bank.assets, env.beta, config.x_tol).map(|r| r.0)
        }
    }
}

/// Root of x + (e^{-beta x} - 1) * a = target on the increasing branch
/// x >= ln(beta a) / beta. Returns (root, second_root_exists).
fn supermodular_scalar_root(
    target: f64,
    a: f64,
    beta: f64,
    x_tol: f64,
) -> Result<(f64, bool), SolveError> {
    if beta == 0.0 {
        return Ok((target, false));
    }
    let g = |x: f64| x + ((-beta * x).exp() - 1.0) * a - target;
    let x0 = (beta * a).ln() / beta;
    let g_min = g(x0);
    if g_min > 0.0 {
        return Err(SolveError::NoSupermodularRoot {
            target,
            minimum: g_min + target,
        });
    }
    let mut hi = x0.abs().max(target.abs()).max(1.0);
    for _ in 0..200 {
        if g(hi) > 0.0 {
            break;
        }
        hi *= 2.0;
    }
    let root = bisect(x0, hi, g, x_tol)?;
    Ok((root, g_min < 0.0))
}

/// Solve the aggregate single-exponent system: the scalar sum equation for
/// `X = sum_j x^j`, then per-bank volumes via cross-bank dependence.
pub fn solve_aggregate(banks: &[Bank], env: &MarketEnv) -> Result<ClearingSolution, SolveError> {
    solve_aggregate_with(banks, env, &SolverConfig::default())
}

pub fn solve_aggregate_with(
    banks: &[Bank],
    env: &MarketEnv,
    config: &SolverConfig,
) -> Result<ClearingSolution, SolveError> {
    let panel = build_matrices(banks)?;
    if !single_exponent_regime(&panel) {
        return Err(SolveError::UnsupportedRegime(
            "aggregate solver requires one industry or identical disposal rows".into(),
        ));
    }
    let s = demand_vector(banks, env);
    let total_demand: f64 = s.iter().sum();
    let total_assets: f64 = banks.iter().map(|b| b.assets).sum();
    let supermodular = env.modularity == Modularity::Supermodular;

    let (x_total, second_root) = if env.beta == 0.0 {
        (total_demand, false)
    } else if supermodular {
        supermodular_scalar_root(total_demand, total_assets, env.beta, config.x_tol)?
    } else {
        let g = |x: f64| x + (1.0 - (-env.beta * x).exp()) * total_assets - total_demand;
        let width = total_assets / env.theta_bar;
        (bisect_growing(width, g, config.x_tol)?, false)
    };

    let deval_frac = if supermodular {
        (-env.beta * x_total).exp() - 1.0
    } else {
        1.0 - (-env.beta * x_total).exp()
    };
    let x: Vec<f64> = s.iter().zip(banks).map(|(si, b)| si - deval_frac * b.assets).collect();
    let method = if env.beta == 0.0 {
        SolveMethod::BetaZero
    } else if supermodular {
        SolveMethod::AggregateSupermodular
    } else {
        SolveMethod::Aggregate
    };
    Ok(finish_solution(
        &panel, banks, env, s, x, 0, method, true, second_root,
    ))
}

/// Exposure vector Q_k = beta * sum_i x^i pi_ik implied by a volume vector.
fn exposures(panel: &IndustryPanel, beta: f64, x: &[f64]) -> Vec<f64> {
    let k = panel.industries.len();
    let mut q = vec![0.0; k];
    for (i, xi) in x.iter().enumerate() {
        for l in 0..k {
            q[l] += beta * xi * panel.disposal[i][l];
        }
    }
    q
}

/// Max-norm residual of the defining equations evaluated directly from x.
pub fn eq3_residual(
    panel: &IndustryPanel,
    env: &MarketEnv,
    s: &[f64],
    x: &[f64],
) -> f64 {
    let q = exposures(panel, env.beta, x);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut dev = 0.0;
        for (l, ql) in q.iter().enumerate() {
            if panel.amounts[i][l] > 0.0 {
                let frac = match env.modularity {
                    Modularity::Submodular => 1.0 - (-ql).exp(),
                    Modularity::Supermodular => (-ql).exp() - 1.0,
                };
                dev += frac * panel.amounts[i][l];
            }
        }
        worst = worst.max((s[i] - x[i] - dev).abs());
    }
    worst
}

fn finish_solution(
    panel: &IndustryPanel,
    banks: &[Bank],
    env: &MarketEnv,
    s: Vec<f64>,
    x: Vec<f64>,
    iterations: usize,
    method: SolveMethod,
    certified: bool,
    supermodular_second_root: bool,
) -> ClearingSolution {
    let q = exposures(panel, env.beta, &x);
    let residual = eq3_residual(panel, env, &s, &x);
    let q_negative_industries = panel
        .industries
        .iter()
        .zip(&q)
        .filter(|(_, &ql)| ql < -1e-12)
        .map(|(name, _)| name.clone())
        .collect();
    ClearingSolution {
        bank_ids: banks.iter().map(|b| b.id.clone()).collect(),
        demanded: s,
        realized: x,
        devaluation_factor: q.iter().map(|ql| (-ql).exp()).collect(),
        aggregate_exposure: q,
        iterations,
        residual,
        certified,
        method,
        q_negative_industries,
        supermodular_second_root,
    }
}

struct QSystem {
    /// Pi_s vector: sum_i s^i pi_ik per industry.
    pi_s: Vec<f64>,
    /// C_kl = sum_i p_li pi_ik.
    c: Vec<Vec<f64>>,
    /// Industry values M_l.
    m: Vec<f64>,
}

impl QSystem {
    fn build(panel: &IndustryPanel, s: &[f64]) -> Self {
        let n = panel.bank_ids.len();
        let k = panel.industries.len();
        let mut pi_s = vec![0.0; k];
        for i in 0..n {
            for l in 0..k {
                pi_s[l] += s[i] * panel.disposal[i][l];
            }
        }
        let mut c = vec![vec![0.0; k]; k];
        for kk in 0..k {
            for ll in 0..k {
                c[kk][ll] = (0..n)
                    .map(|i| panel.contagion[ll][i] * panel.disposal[i][kk])
                    .sum();
            }
        }
        QSystem {
            pi_s,
            c,
            m: panel.values.clone(),
        }
    }

    fn map(&self, beta: f64, q: &[f64]) -> Vec<f64> {
        let k = self.m.len();
        let mut out = vec![0.0; k];
        for kk in 0..k {
            let mut v = beta * self.pi_s[kk];
            for ll in 0..k {
                v -= beta * self.c[kk][ll] * self.m[ll] * (1.0 - (-q[ll]).exp());
            }
            out[kk] = v;
        }
        out
    }

    fn max_mc(&self) -> f64 {
        let k = self.m.len();
        let mut worst: f64 = 0.0;
        for kk in 0..k {
            for ll in 0..k {
                worst = worst.max(self.m[ll] * self.c[kk][ll]);
            }
        }
        worst
    }
}

fn recover_x(panel: &IndustryPanel, s: &[f64], q: &[f64]) -> Vec<f64> {
    let n = panel.bank_ids.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut dev = 0.0;
        for (l, ql) in q.iter().enumerate() {
            if panel.amounts[i][l] > 0.0 {
                dev += (1.0 - (-ql).exp()) * panel.amounts[i][l];
            }
        }
        x[i] = s[i] - dev;
    }
    x
}

/// Solve the multi-industry clearing system through the exposure map.
///
/// Below the Lipschitz threshold the plain iteration is a certified
/// contraction with a unique fixed point. With a single industry the
/// exposure equation is monotone and solved by certified bisection for any
/// beta. Otherwise a damped iteration is attempted and the result is marked
/// non-certified.
pub fn solve_q_fixed_point(
    banks: &[Bank],
    env: &MarketEnv,
) -> Result<ClearingSolution, SolveError> {
    solve_q_fixed_point_with(banks, env, &SolverConfig::default())
}

pub fn solve_q_fixed_point_with(
    banks: &[Bank],
    env: &MarketEnv,
    config: &SolverConfig,
) -> Result<ClearingSolution, SolveError> {
    if env.modularity == Modularity::Supermodular {
        return solve_aggregate_with(banks, env, config);
    }
    let panel = build_matrices(banks)?;
    let s = demand_vector(banks, env);
    if env.beta == 0.0 {
        let x = s.clone();
        return Ok(finish_solution(
            &panel,
            banks,
            env,
            s,
            x,
            0,
            SolveMethod::BetaZero,
            true,
            false,
        ));
    }
    let sys = QSystem::build(&panel, &s);
    let k = panel.industries.len();
    let bound = env.beta * sys.max_mc();

    if k == 1 {
        // Monotone in Q: R(Q) = Q - F(Q), R' = 1 + beta*M*C*e^{-Q} > 1.
        let f = |q: f64| q - sys.map(env.beta, &[q])[0];
        let width = (env.beta * sys.pi_s[0]).abs() + 1.0;
        let q_root = bisect_growing(width, f, config.x_tol * env.beta.max(1e-6))?;
        let x = recover_x(&panel, &s, &[q_root]);
        return Ok(finish_solution(
            &panel,
            banks,
            env,
            s,
            x,
            0,
            SolveMethod::QBisect1D,
            true,
            false,
        ));
    }

    let contraction = bound < 1.0;
    let mut q = config.q_init.clone().unwrap_or_else(|| vec![0.0; k]);
    assert_eq!(q.len(), k, "q_init dimension mismatch");
    let mut damping = 1.0;
    let mut last_residual = f64::INFINITY;
    let mut stall = 0usize;
    for iter in 1..=config.max_iter {
        let fq = sys.map(env.beta, &q);
        for l in 0..k {
            q[l] = (1.0 - damping) * q[l] + damping * fq[l];
        }
        let x = recover_x(&panel, &s, &q);
        let residual = eq3_residual(&panel, env, &s, &x);
        if residual < config.residual_tol {
            let method = if contraction && damping == 1.0 {
                SolveMethod::QContraction
            } else {
                SolveMethod::QDamped
            };
            return Ok(finish_solution(
                &panel,
                banks,
                env,
                s,
                x,
                iter,
                method,
                contraction && damping == 1.0,
                false,
            ));
        }
        if residual >= last_residual {
            stall += 1;
            if stall >= 8 {
                if damping <= 1.0 / 1024.0 {
                    return Err(SolveError::Diverged {
                        iterations: iter,
                        residual,
                        bound,
                    });
                }
                damping *= 0.5;
                stall = 0;
            }
        } else {
            stall = 0;
        }
        last_residual = residual;
    }
    Err(SolveError::Diverged {
        iterations: config.max_iter,
        residual: last_residual,
        bound,
    })
}

/// Route a cluster to the appropriate solver: the aggregate path in the
/// single-exponent regime, otherwise the exposure map.
pub fn solve(banks: &[Bank], env: &MarketEnv) -> Result<ClearingSolution, SolveError> {
    solve_with(banks, env, &SolverConfig::default())
}

pub fn solve_with(
    banks: &[Bank],
    env: &MarketEnv,
    config: &SolverConfig,
) -> Result<ClearingSolution, SolveError> {
    let panel = build_matrices(banks)?;
    if single_exponent_regime(&panel) {
        solve_aggregate_with(banks, env, config)
    } else if env.modularity == Modularity::Supermodular {
        Err(SolveError::UnsupportedRegime(
            "supermodular demand is only solved in the single-exponent regime".into(),
        ))
    } else {
        solve_q_fixed_point_with(banks, env, config)
    }
}

/// Admissibility thresholds for the exposure map on a given panel.
pub fn liquidity_threshold(env: &MarketEnv, panel: &IndustryPanel, s: &[f64]) -> LipschitzReport {
    let sys = QSystem::build(panel, s);
    let max_mc = sys.max_mc();
    let beta_bar_lipschitz = if max_mc > 0.0 { 1.0 / max_mc } else { f64::INFINITY };
    let beta_bar_self_mapping = self_mapping_threshold(&sys);
    let beta_bar = beta_bar_lipschitz.min(beta_bar_self_mapping);
    let bound = env.beta * max_mc;
    LipschitzReport {
        bound,
        beta_bar,
        beta_bar_lipschitz,
        beta_bar_self_mapping,
        contraction: bound < 1.0,
    }
}

/// Largest beta for which the self-mapping condition
/// `beta*S + beta*W*sqrt(m)*(e^R - 1) <= R` admits a radius R, evaluated
/// with the 2-norm of Pi_s and the Frobenius norm of C*M.
fn self_mapping_threshold(sys: &QSystem) -> f64 {
    let k = sys.m.len();
    let s_norm: f64 = sys.pi_s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut w_norm = 0.0;
    for kk in 0..k {
        for ll in 0..k {
            let e = sys.c[kk][ll] * sys.m[ll];
            w_norm += e * e;
        }
    }
    let w_norm = f64::sqrt(w_norm);
    if w_norm == 0.0 {
        return f64::INFINITY;
    }
    let sqrt_m = (k as f64).sqrt();
    // mu(beta) = beta*S + 1 - beta*W*sqrt(m) + ln(beta*W*sqrt(m)), increasing;
    // the condition holds while mu <= 0, on beta < 1/(W*sqrt(m)).
    let upper = 1.0 / (w_norm * sqrt_m);
    let mu = |beta: f64| {
        beta * s_norm + 1.0 - beta * w_norm * sqrt_m + (beta * w_norm * sqrt_m).ln()
    };
    if mu(upper * (1.0 - 1e-12)) <= 0.0 {
        return upper;
    }
    bisect(upper * 1e-16, upper * (1.0 - 1e-12), mu, upper * 1e-15).unwrap_or(0.0)
}

/// Shock thresholds for a cluster: the smallest s-root across banks and the
/// exit threshold above which some bank's sale exceeds its assets.
pub fn shock_thresholds(banks: &[Bank], env: &MarketEnv) -> Result<(f64, f64), SolveError> {
    let eps_bar = banks
        .iter()
        .map(|b| epsilon_s_zero(b.leverage(), env.theta_bar))
        .fold(f64::INFINITY, f64::min);
    let sol = solve(banks, env)?;
    let eps_tilde = banks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let d = sol.realized[i] - sol.demanded[i]; // negative devaluation term
            (b.equity / (env.theta_bar - d)) * (env.theta_bar / (1.0 - env.theta_bar))
                / b.assets
        })
        .fold(f64::INFINITY, f64::min);
    Ok((eps_bar, eps_tilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bank;

    fn demo_banks() -> Vec<Bank> {
        vec![
            Bank::specialized("i", 100.0, 8.0, "k").unwrap(),
            Bank::specialized("j", 50.0, 2.5, "k").unwrap(),
        ]
    }

    fn demo_env() -> MarketEnv {
        MarketEnv::new(0.02, 0.04, 0.0)
    }

    #[test]
    fn demand_matches_closed_form() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let env = MarketEnv::new(0.0, 0.05, 0.0);
        assert!((liquidation_demand(&b, &env) - (-60.0)).abs() < 1e-12);
    }

    #[test]
    fn demand_at_full_erosion_equals_post_shock_assets() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let mut env = MarketEnv::new(0.0, 0.08, 0.08);
        env.epsilon = 0.08;
        assert!((liquidation_demand(&b, &env) - 92.0).abs() < 1e-12);
    }

    #[test]
    fn demand_root_is_closed_form_epsilon() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let tb = 0.04;
        let eps = epsilon_s_zero(b.leverage(), tb);
        let env = MarketEnv::new(0.0, tb, eps);
        assert!(liquidation_demand(&b, &env).abs() < 1e-12);
        assert!((eps - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn beta_zero_realizes_demand_exactly() {
        let env = MarketEnv::new(0.0, 0.04, 0.01);
        let sol = solve(&demo_banks(), &env).unwrap();
        assert_eq!(sol.demanded, sol.realized);
        assert_eq!(sol.method, SolveMethod::BetaZero);
    }

    #[test]
    fn cms_zero_demand_zero_volume() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        assert_eq!(cms_solve(&b, &demo_env(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cms_beta_zero_is_identity() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let env = MarketEnv::new(0.0, 0.04, 0.0);
        assert_eq!(cms_solve(&b, &env, -37.5).unwrap(), -37.5);
    }

    #[test]
    fn cms_sign_law() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let env = demo_env();
        for demand in [-80.0, -1.0, -1e-6, 1e-6, 5.0, 60.0] {
            let x = cms_solve(&b, &env, demand).unwrap();
            assert_eq!(x.signum(), demand.signum(), "demand {demand}");
        }
    }

    #[test]
    fn cms_solves_phi_equation() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let env = demo_env();
        let x = cms_solve(&b, &env, -60.0).unwrap();
        let phi = x + (1.0 - (-0.02 * x).exp()) * 100.0;
        assert!((phi + 60.0).abs() < 1e-9);
        assert!(x < 0.0);
    }

    #[test]
    fn aggregate_zero_total_demand_zero_total_volume() {
        // two banks with opposite-sign demands summing to zero
        let tb = 0.04;
        let i = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        // choose eps so A_i L_i + A_j L_j = 0
        let j = Bank::specialized("j", 100.0, 2.0, "k").unwrap();
        let li = |eps: f64| (tb - 0.08 + (1.0 - tb) * eps) / tb;
        let lj = |eps: f64| (tb - 0.02 + (1.0 - tb) * eps) / tb;
        let eps = bisect_growing(0.1, |e| li(e) * 100.0 + lj(e) * 100.0, 1e-14).unwrap();
        let env = MarketEnv::new(0.02, tb, eps);
        let sol = solve_aggregate(&[i, j], &env).unwrap();
        assert!(sol.total_realized().abs() < 1e-8);
        // x^i = A_i * L^i when X = 0
        assert!((sol.realized[0] - sol.demanded[0]).abs() < 1e-8);
    }

    #[test]
    fn demo_dependence_line_matches_figure() {
        let banks = demo_banks();
        let (intercept, slope) = dependence_line(&banks[0], &banks[1], &demo_env());
        assert!((intercept + 75.0).abs() < 1e-9);
        assert!((slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn demo_signs_at_zero_shock() {
        let sol = solve(&demo_banks(), &demo_env()).unwrap();
        let xi = sol.realized_of("i").unwrap();
        let xj = sol.realized_of("j").unwrap();
        assert!(xi < 0.0, "x_i = {xi}");
        assert!(xj > 0.0, "x_j = {xj}");
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn aggregate_agrees_with_q_solver_in_regime() {
        // identical disposal rows, two industries
        let mk = |id: &str, a: f64, e: f64| {
            let mut inv = std::collections::BTreeMap::new();
            inv.insert("1".to_string(), 0.5 * a);
            inv.insert("2".to_string(), 0.5 * a);
            Bank::new(id, a, e, inv).unwrap()
        };
        let banks = vec![mk("a", 100.0, 9.0), mk("b", 80.0, 5.0), mk("c", 60.0, 3.0)];
        let env = MarketEnv::new(0.002, 0.04, 0.02);
        let agg = solve_aggregate(&banks, &env).unwrap();
        let q = solve_q_fixed_point(&banks, &env).unwrap();
        for i in 0..3 {
            assert!(
                (agg.realized[i] - q.realized[i]).abs() < 1e-8,
                "component {i}: {} vs {}",
                agg.realized[i],
                q.realized[i]
            );
        }
    }

    #[test]
    fn lipschitz_single_industry_value() {
        let banks = demo_banks();
        let panel = build_matrices(&banks).unwrap();
        let env = demo_env();
        let s = demand_vector(&banks, &env);
        let rep = liquidity_threshold(&env, &panel, &s);
        assert!((rep.beta_bar_lipschitz - 1.0 / 150.0).abs() < 1e-15);
        assert!(!rep.contraction, "beta = 0.02 exceeds 1/150");
        let env2 = env.with_beta(0.0066);
        let rep2 = liquidity_threshold(&env2, &panel, &s);
        assert!(rep2.contraction);
    }

    #[test]
    fn lipschitz_no_contagion_limit() {
        // shrink industry values via tiny assets: M -> 0 makes the bound infinite
        let tiny = Bank::specialized("t", 1e-9, 1e-10, "k").unwrap();
        let panel = build_matrices(&[tiny.clone()]).unwrap();
        let env = demo_env();
        let s = demand_vector(&[tiny], &env);
        let rep = liquidity_threshold(&env, &panel, &s);
        assert!(rep.beta_bar_lipschitz > 1e8);
    }

    #[test]
    fn shock_threshold_closed_forms() {
        let banks = demo_banks();
        let env = demo_env();
        let (eps_bar, _) = shock_thresholds(&banks, &env).unwrap();
        assert!((eps_bar - 0.01 / 0.96).abs() < 1e-12);
        // theta = theta_bar root is zero
        assert_eq!(epsilon_s_zero(0.04, 0.04), 0.0);
    }

    #[test]
    fn supermodular_negative_pair_exists_below_beta_m_one() {
        // beta * M < 1 admits (x, s) < 0 pairs
        let a = 100.0;
        let beta = 0.005; // beta * M = 0.5
        let (x, _) = supermodular_scalar_root(-5.0, a, beta, 1e-12).unwrap();
        assert!(x < 0.0);
        let s = x + ((-beta * x).exp() - 1.0) * a;
        assert!(s < 0.0);
    }

    #[test]
    fn supermodular_positive_root_always() {
        let a = 100.0;
        let beta = 0.05; // beta * M = 5 > 1
        let (x, _) = supermodular_scalar_root(2.0 * a, a, beta, 1e-12).unwrap();
        assert!(x > 0.0);
    }

    #[test]
    fn supermodular_rejects_unreachable_target() {
        let a = 100.0;
        let beta = 0.05;
        // minimum of g sits above very negative targets
        let err = supermodular_scalar_root(-1e6, a, beta, 1e-12);
        assert!(matches!(err, Err(SolveError::NoSupermodularRoot { .. })));
    }
}
