//! Threshold finders, regime classification for bank pairs, the
//! compression-equivalence sweep, and the isomorphism maps among assets,
//! leverage and the shock size.

use crate::clearing::{self, SolveError};
use crate::counterfactual::neutral_tol;
use crate::model::{Bank, MarketEnv};
use crate::partition::{self, chain_order};
use crate::roots::{bisect, bisect_growing};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransitionsError {
    #[error("solver failure: {0}")]
    Solve(#[from] SolveError),
    #[error("regime precondition violated: {0}")]
    RegimePrecondition(String),
    #[error("infeasible: {binding}")]
    Infeasible { binding: String },
    #[error("non-monotone exit order: {bank} left before a lower-leverage member")]
    NonMonotoneExit { bank: String },
}

/// Per-bank threshold data.
#[derive(Debug, Clone, Serialize)]
pub struct BankThresholds {
    pub bank_id: String,
    /// Closed form (theta - theta_bar) / (1 - theta_bar).
    pub eps_s_zero: f64,
    /// Root of the bank's component in the joint cluster solution as eps
    /// varies; absent when the bank never transitions on the scanned range.
    pub eps_x_zero: Option<f64>,
    /// Root in beta of the component at the environment's eps; absent when
    /// the sign never flips (crowd-out never ignites for this bank).
    pub beta_x_zero: Option<f64>,
}

/// Both ignition predicate variants: the single-bank counterfactual form
/// and the cluster-sum form.
#[derive(Debug, Clone, Serialize)]
pub struct IgnitionReport {
    /// e^{-beta * x~_top(0)} >= theta_j / theta_bar for the top bank vs the
    /// lowest-leverage one.
    pub cms_variant: bool,
    /// e^{-beta * sum x~_B} >= theta_j / theta_bar + (1 - 1/theta_bar)*eps.
    pub cluster_variant: bool,
    pub cms_lhs: f64,
    pub cluster_lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSet {
    pub per_bank: Vec<BankThresholds>,
    pub ignition: Option<IgnitionReport>,
    /// beta_x_zero of the probe bank recomputed at a bumped leverage:
    /// (base, bumped); non-decreasing expected.
    pub beta_vs_theta: Option<(f64, f64)>,
    /// beta_x_zero recomputed at bumped assets; non-increasing expected.
    pub beta_vs_assets: Option<(f64, f64)>,
    /// beta_x_zero recomputed at a bumped shock; non-increasing expected.
    pub beta_vs_eps: Option<(f64, f64)>,
}

/// Root of the bank's joint-solution component over eps in [0, hi], by
/// grid scan plus bisection.
pub fn eps_x_zero_of(
    banks: &[Bank],
    env: &MarketEnv,
    bank_id: &str,
    hi: f64,
) -> Result<Option<f64>, SolveError> {
    let component = |eps: f64| -> Result<f64, SolveError> {
        let e = env.with_epsilon(eps);
        Ok(clearing::solve(banks, &e)?.realized_of(bank_id).unwrap())
    };
    scan_root(0.0, hi, 200, component)
}

/// Root of the component over beta at fixed eps.
pub fn beta_x_zero_of(
    banks: &[Bank],
    env: &MarketEnv,
    bank_id: &str,
    hi: f64,
) -> Result<Option<f64>, SolveError> {
    let component = |beta: f64| -> Result<f64, SolveError> {
        let e = env.with_beta(beta);
        Ok(clearing::solve(banks, &e)?.realized_of(bank_id).unwrap())
    };
    scan_root(0.0, hi, 200, component)
}

fn scan_root<F>(lo: f64, hi: f64, steps: usize, mut f: F) -> Result<Option<f64>, SolveError>
where
    F: FnMut(f64) -> Result<f64, SolveError>,
{
    let mut prev_t = lo;
    let mut prev_v = f(lo)?;
    if prev_v == 0.0 {
        return Ok(Some(lo));
    }
    for step in 1..=steps {
        let t = lo + (hi - lo) * step as f64 / steps as f64;
        let v = f(t)?;
        if v == 0.0 {
            return Ok(Some(t));
        }
        if v.signum() != prev_v.signum() {
            // bisection refinement; the closure's error cannot escape the
            // bracket already evaluated, so unwrap on re-evaluation
            let mut cache_err = None;
            let root = bisect(
                prev_t,
                t,
                |u| match f(u) {
                    Ok(val) => val,
                    Err(e) => {
                        cache_err = Some(e);
                        0.0
                    }
                },
                1e-12,
            );
            if let Some(e) = cache_err {
                return Err(e);
            }
            return Ok(Some(root.expect("bracketed")));
        }
        prev_t = t;
        prev_v = v;
    }
    Ok(None)
}

/// Thresholds for a cluster: closed-form demand roots, crossing points of
/// the solved components in eps and beta, the ignition predicates and
/// comparative-statics spot checks.
pub fn thresholds(banks: &[Bank], env: &MarketEnv) -> Result<ThresholdSet, TransitionsError> {
    let max_s_root = banks
        .iter()
        .map(|b| clearing::epsilon_s_zero(b.leverage(), env.theta_bar))
        .fold(0.0_f64, f64::max);
    let eps_hi = (max_s_root * 2.0).max(0.1).min(0.99);
    let beta_hi = (env.beta * 10.0).max(0.1);
    let mut per_bank = Vec::new();
    for b in banks {
        per_bank.push(BankThresholds {
            bank_id: b.id.clone(),
            eps_s_zero: clearing::epsilon_s_zero(b.leverage(), env.theta_bar),
            eps_x_zero: eps_x_zero_of(banks, env, &b.id, eps_hi)?,
            beta_x_zero: beta_x_zero_of(banks, env, &b.id, beta_hi)?,
        });
    }

    // ignition predicates for the top vs bottom of the leverage chain
    let order = chain_order(banks);
    let ignition = if order.len() >= 2 {
        let top = &banks[order[0]];
        let bottom = &banks[*order.last().unwrap()];
        let env0 = env.with_epsilon(0.0);
        let s_top = clearing::liquidation_demand(top, &env0);
        let x_cms = clearing::cms_solve(top, &env0, s_top)?;
        let cms_lhs = (-env.beta * x_cms).exp();
        let head: Vec<Bank> = order[..order.len() - 1]
            .iter()
            .map(|&i| banks[i].clone())
            .collect();
        let head_sol = clearing::solve(&head, env)?;
        let cluster_lhs = (-env.beta * head_sol.total_realized()).exp();
        let rhs_cms = bottom.leverage() / env.theta_bar;
        let rhs = bottom.leverage() / env.theta_bar + (1.0 - 1.0 / env.theta_bar) * env.epsilon;
        Some(IgnitionReport {
            cms_variant: cms_lhs >= rhs_cms,
            cluster_variant: cluster_lhs >= rhs,
            cms_lhs,
            cluster_lhs,
            rhs,
        })
    } else {
        None
    };

    // comparative-statics spot checks on the lowest-leverage bank
    let mut beta_vs_theta = None;
    let mut beta_vs_assets = None;
    let mut beta_vs_eps = None;
    if order.len() >= 2 {
        let probe = *order.last().unwrap();
        let base = beta_x_zero_of(banks, env, &banks[probe].id, beta_hi)?;
        if let Some(base) = base {
            let mut bumped_theta = banks.to_vec();
            let b = &mut bumped_theta[probe];
            let new_theta = (b.leverage() * 1.02).min(0.99);
            b.equity = new_theta * b.assets;
            if let Some(v) = beta_x_zero_of(&bumped_theta, env, &banks[probe].id, beta_hi)? {
                beta_vs_theta = Some((base, v));
            }
            let mut bumped_assets = banks.to_vec();
            let theta = bumped_assets[probe].leverage();
            bumped_assets[probe].assets *= 1.05;
            bumped_assets[probe].equity = theta * bumped_assets[probe].assets;
            bumped_assets[probe]
                .investments
                .values_mut()
                .for_each(|v| *v *= 1.05);
            if let Some(v) = beta_x_zero_of(&bumped_assets, env, &banks[probe].id, beta_hi)? {
                beta_vs_assets = Some((base, v));
            }
            let env_up = env.with_epsilon(env.epsilon + 0.002);
            if let Some(v) = beta_x_zero_of(banks, &env_up, &banks[probe].id, beta_hi)? {
                beta_vs_eps = Some((base, v));
            }
        }
    }
    Ok(ThresholdSet {
        per_bank,
        ignition,
        beta_vs_theta,
        beta_vs_assets,
        beta_vs_eps,
    })
}

/// Attribute pattern of a bank pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairType {
    /// Dominant leverage and dominant assets.
    Type1,
    /// Near-identical attributes.
    Type2,
    /// Dominant leverage, dominated assets.
    Type3,
}

/// Sign of one solved quantity, zero resolved by the neutrality tolerance
/// to the nonnegative side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sgn {
    Neg,
    Pos,
}

fn sgn(x: f64, assets: f64) -> Sgn {
    if x < -neutral_tol(assets) {
        Sgn::Neg
    } else {
        Sgn::Pos
    }
}

/// One constant-sign interval of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeSegment {
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// (x_i, x~_i, x_j, x~_j).
    pub pattern: [Sgn; 4],
    /// Componentwise ordering checks of the matched case held throughout.
    pub ordering_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeTimeline {
    pub pair_type: PairType,
    pub segments: Vec<RegimeSegment>,
    pub matches_expected: bool,
    /// Grid point of the first mismatch, if any.
    pub mismatch_at: Option<f64>,
}

pub const DOMINANCE_FACTOR: f64 = 1.5;

/// Detect the attribute pattern of an ordered pair (higher-leverage bank
/// first).
pub fn detect_pair_type(bank_i: &Bank, bank_j: &Bank, factor: f64) -> PairType {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    if rel(bank_i.leverage(), bank_j.leverage()) < 1e-6 && rel(bank_i.assets, bank_j.assets) < 1e-6
    {
        return PairType::Type2;
    }
    if bank_i.leverage() >= bank_j.leverage() && bank_i.assets >= factor * bank_j.assets {
        PairType::Type1
    } else if bank_i.leverage() >= factor * bank_j.leverage()
        && bank_j.assets >= factor * bank_i.assets
    {
        PairType::Type3
    } else {
        // dominance is qualitative; fall back on the leverage ordering
        PairType::Type1
    }
}

fn expected_patterns(pair_type: PairType, beta_below_ignition: bool) -> Vec<[Sgn; 4]> {
    use Sgn::*;
    match pair_type {
        PairType::Type1 => vec![
            [Neg, Neg, Pos, Neg],
            [Neg, Neg, Pos, Pos],
            [Neg, Pos, Pos, Pos],
            [Pos, Pos, Pos, Pos],
        ],
        PairType::Type2 => vec![[Neg, Neg, Neg, Neg], [Pos, Pos, Pos, Pos]],
        PairType::Type3 => {
            if beta_below_ignition {
                vec![
                    [Neg, Neg, Neg, Neg],
                    [Neg, Neg, Pos, Neg],
                    [Neg, Neg, Pos, Pos],
                    [Neg, Pos, Pos, Pos],
                    [Pos, Pos, Pos, Pos],
                ]
            } else {
                expected_patterns(PairType::Type1, false)
            }
        }
    }
}

fn ordering_holds(pattern: [Sgn; 4], values: [f64; 4], pair_type: PairType, tol: f64) -> bool {
    use Sgn::*;
    let [xi, cxi, xj, cxj] = values;
    match (pair_type, pattern) {
        (PairType::Type2, [Neg, Neg, Neg, Neg]) => cxi <= xi + tol && cxj <= xj + tol,
        (PairType::Type2, [Pos, Pos, Pos, Pos]) => xi <= cxi + tol && xj <= cxj + tol,
        (_, [Neg, Neg, Pos, Neg]) => xi <= cxi + tol && cxj <= xj + tol,
        (_, [Neg, Neg, Pos, Pos]) => xi <= cxi + tol && cxj <= xj + tol,
        (_, [Neg, Pos, Pos, Pos]) => xi <= cxi + tol && cxj <= xj + tol,
        (_, [Pos, Pos, Pos, Pos]) => xi <= cxi + tol && xj <= cxj + tol,
        (_, [Neg, Neg, Neg, Neg]) => cxi <= xi + tol && cxj <= xj + tol,
        _ => true,
    }
}

/// Sweep the pair over the shock grid, segment the sign patterns of
/// (x_i, x~_i, x_j, x~_j), and match the observed sequence against the
/// pattern the pair type predicts.
pub fn regime_classify(
    bank_i: &Bank,
    bank_j: &Bank,
    env: &MarketEnv,
    eps_lo: f64,
    eps_hi: f64,
    grid: usize,
) -> Result<RegimeTimeline, TransitionsError> {
    let pair_type = detect_pair_type(bank_i, bank_j, DOMINANCE_FACTOR);
    let pair = vec![bank_i.clone(), bank_j.clone()];
    let beta_below = if pair_type == PairType::Type3 {
        let beta_zero = beta_x_zero_of(&pair, &env.with_epsilon(0.0), &bank_j.id, env.beta * 50.0)?;
        match beta_zero {
            Some(b) => env.beta < b,
            None => true,
        }
    } else {
        false
    };
    let expected = expected_patterns(pair_type, beta_below);

    let eval = |eps: f64| -> Result<([Sgn; 4], [f64; 4]), TransitionsError> {
        let e = env.with_epsilon(eps);
        let sol = clearing::solve(&pair, &e)?;
        let xi = sol.realized_of(&bank_i.id).unwrap();
        let xj = sol.realized_of(&bank_j.id).unwrap();
        let cxi = clearing::cms_solve(bank_i, &e, clearing::liquidation_demand(bank_i, &e))?;
        let cxj = clearing::cms_solve(bank_j, &e, clearing::liquidation_demand(bank_j, &e))?;
        let values = [xi, cxi, xj, cxj];
        Ok((
            [
                sgn(xi, bank_i.assets),
                sgn(cxi, bank_i.assets),
                sgn(xj, bank_j.assets),
                sgn(cxj, bank_j.assets),
            ],
            values,
        ))
    };

    let mut segments: Vec<RegimeSegment> = Vec::new();
    let mut mismatch_at = None;
    for step in 0..=grid {
        let eps = eps_lo + (eps_hi - eps_lo) * step as f64 / grid as f64;
        let (pattern, values) = eval(eps)?;
        let tol = neutral_tol(bank_i.assets.max(bank_j.assets));
        let ord = ordering_holds(pattern, values, pair_type, tol);
        match segments.last_mut() {
            Some(last) if last.pattern == pattern => {
                last.eps_hi = eps;
                last.ordering_ok &= ord;
            }
            _ => segments.push(RegimeSegment {
                eps_lo: eps,
                eps_hi: eps,
                pattern,
                ordering_ok: ord,
            }),
        }
    }
    let observed: Vec<[Sgn; 4]> = segments.iter().map(|s| s.pattern).collect();
    let matches_expected = observed == expected;
    if !matches_expected {
        // first grid pattern not in the expected sequence order
        let mut exp_iter = expected.iter();
        let mut current = exp_iter.next();
        'outer: for seg in &segments {
            loop {
                match current {
                    Some(p) if *p == seg.pattern => break,
                    Some(_) => current = exp_iter.next(),
                    None => {
                        mismatch_at = Some(seg.eps_lo);
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(RegimeTimeline {
        pair_type,
        segments,
        matches_expected,
        mismatch_at,
    })
}

/// Exit schedule of the maximal bailout cluster along a rising shock.
#[derive(Debug, Clone, Serialize)]
pub struct ExitSchedule {
    pub ignition: Option<IgnitionReport>,
    /// (eps threshold, departing bank id) in sweep order.
    pub exits: Vec<(f64, String)>,
    pub ascending_leverage_order: bool,
    pub one_member_per_threshold: bool,
}

/// Sweep eps upward from `eps_lo`, tracking B(eps); record each threshold
/// at which the minimal-leverage member crosses zero and leaves. A
/// departure that is not the current minimal-leverage member is a hard
/// failure.
pub fn compression_sweep(
    banks: &[Bank],
    env: &MarketEnv,
    eps_lo: f64,
    eps_hi: f64,
    grid: usize,
) -> Result<ExitSchedule, TransitionsError> {
    let ignition = thresholds_ignition_only(banks, env)?;
    let mut exits: Vec<(f64, String)> = Vec::new();
    let mut ascending = true;
    let mut one_by_one = true;
    let mut current = partition::maximal_bailout(banks, &env.with_epsilon(eps_lo))?;
    let mut prev_eps = eps_lo;
    for step in 1..=grid {
        let eps = eps_lo + (eps_hi - eps_lo) * step as f64 / grid as f64;
        let next = partition::maximal_bailout(banks, &env.with_epsilon(eps))?;
        if next.len() < current.len() {
            let gone: Vec<usize> = current
                .iter()
                .copied()
                .filter(|i| !next.contains(i))
                .collect();
            if gone.len() != current.len() - next.len() || gone.is_empty() {
                one_by_one = false;
            }
            // refine each departure; members leave lowest leverage first
            let mut lo = prev_eps;
            for &g in gone.iter().rev() {
                // g should be the chain tail of the current cluster
                let tail = *current.last().unwrap();
                if g != tail {
                    return Err(TransitionsError::NonMonotoneExit {
                        bank: banks[g].id.clone(),
                    });
                }
                let members: Vec<Bank> = current.iter().map(|&i| banks[i].clone()).collect();
                let id = banks[g].id.clone();
                let threshold = refine_exit(&members, env, &id, lo, eps)?;
                exits.push((threshold, id));
                lo = threshold;
                current.pop();
            }
            if gone.len() > 1 {
                one_by_one = false;
            }
        } else if next.len() > current.len() {
            // the bailout cluster cannot grow along a rising shock
            ascending = false;
        }
        current = next;
        prev_eps = eps;
        if current.is_empty() {
            break;
        }
    }
    Ok(ExitSchedule {
        ignition,
        exits,
        ascending_leverage_order: ascending,
        one_member_per_threshold: one_by_one,
    })
}

fn refine_exit(
    members: &[Bank],
    env: &MarketEnv,
    bank_id: &str,
    lo: f64,
    hi: f64,
) -> Result<f64, TransitionsError> {
    let f = |eps: f64| -> f64 {
        let e = env.with_epsilon(eps);
        clearing::solve(members, &e)
            .map(|sol| sol.realized_of(bank_id).unwrap())
            .unwrap_or(f64::NAN)
    };
    let (flo, fhi) = (f(lo), f(hi));
    if flo.is_nan() || fhi.is_nan() {
        return Err(TransitionsError::RegimePrecondition(
            "solver failed inside the refinement bracket".into(),
        ));
    }
    if flo.signum() == fhi.signum() {
        // the crossing happened at the cluster-membership level only;
        // report the midpoint of the bracketing grid cell
        return Ok(0.5 * (lo + hi));
    }
    Ok(bisect(lo, hi, f, 1e-12).map_err(SolveError::from)?)
}

fn thresholds_ignition_only(
    banks: &[Bank],
    env: &MarketEnv,
) -> Result<Option<IgnitionReport>, TransitionsError> {
    if banks.len() < 2 {
        return Ok(None);
    }
    let t = thresholds(banks, env)?;
    Ok(t.ignition)
}

/// Anchored isomorphism maps for one chain position: the defining equation
/// links the position's counterfactual volume to the next position's
/// leverage and the shock.
#[derive(Debug, Clone)]
pub struct ChainMaps {
    pub assets_w: f64,
    pub theta_w: f64,
    pub theta_next: f64,
    pub env: MarketEnv,
}

impl ChainMaps {
    /// Maps anchored at chain position `w` (descending-leverage order).
    pub fn at_position(banks: &[Bank], w: usize, env: &MarketEnv) -> Result<Self, TransitionsError> {
        let order = chain_order(banks);
        if w + 1 >= order.len() {
            return Err(TransitionsError::RegimePrecondition(
                "position needs a successor in the chain".into(),
            ));
        }
        let maps = ChainMaps {
            assets_w: banks[order[w]].assets,
            theta_w: banks[order[w]].leverage(),
            theta_next: banks[order[w + 1]].leverage(),
            env: env.clone(),
        };
        maps.check_regime(banks)?;
        Ok(maps)
    }

    fn check_regime(&self, banks: &[Bank]) -> Result<(), TransitionsError> {
        let min_root = banks
            .iter()
            .map(|b| clearing::epsilon_s_zero(b.leverage(), self.env.theta_bar))
            .fold(f64::INFINITY, f64::min);
        if self.env.epsilon >= min_root {
            return Err(TransitionsError::RegimePrecondition(format!(
                "epsilon {} not below every demand root (min {})",
                self.env.epsilon, min_root
            )));
        }
        // the strict admissibility inequality at the working shock
        let x = self
            .cms_x(self.assets_w, self.env.epsilon)
            .map_err(TransitionsError::Solve)?;
        let lhs = (-self.env.beta * x).exp();
        let rhs = self.theta_next / self.env.theta_bar
            + (1.0 - 1.0 / self.env.theta_bar) * self.env.epsilon;
        if lhs >= rhs {
            return Err(TransitionsError::RegimePrecondition(format!(
                "e^(-beta x~) = {lhs} not below the successor threshold {rhs}"
            )));
        }
        Ok(())
    }

    /// Counterfactual volume of the anchor bank at given assets and shock.
    fn cms_x(&self, assets: f64, eps: f64) -> Result<f64, SolveError> {
        let env = self.env.with_epsilon(eps);
        let demand = assets * clearing::l_coefficient(self.theta_w, &env);
        let beta = env.beta;
        let f = |x: f64| x + (1.0 - (-beta * x).exp()) * assets - demand;
        Ok(bisect_growing(demand.abs() + assets, f, 1e-13)?)
    }

    fn equation(&self, assets: f64, theta_next: f64, eps: f64) -> Result<f64, SolveError> {
        let x = self.cms_x(assets, eps)?;
        Ok((-self.env.beta * x).exp()
            - theta_next / self.env.theta_bar
            - (1.0 - 1.0 / self.env.theta_bar) * eps)
    }

    /// X_{A->eps}: the shock at which the successor position crosses zero,
    /// given the anchor's assets.
    pub fn a_to_eps(&self, assets: f64) -> Result<f64, TransitionsError> {
        let hi = clearing::epsilon_s_zero(self.theta_next, self.env.theta_bar);
        let mut err = None;
        let root = bisect(
            0.0,
            hi * (1.0 - 1e-9),
            |eps| match self.equation(assets, self.theta_next, eps) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            },
            1e-13,
        );
        if let Some(e) = err {
            return Err(e.into());
        }
        root.map_err(|e| TransitionsError::RegimePrecondition(e.to_string()))
    }

    /// X_{eps->A}: the anchor asset level that puts the successor's
    /// crossing exactly at the given shock.
    pub fn eps_to_a(&self, eps: f64) -> Result<f64, TransitionsError> {
        let mut err = None;
        let mut f = |a: f64| match self.equation(a, self.theta_next, eps) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        };
        let mut lo = 1e-9;
        let mut hi = self.assets_w.max(1.0);
        for _ in 0..200 {
            if f(hi) > 0.0 {
                break;
            }
            hi *= 2.0;
        }
        for _ in 0..200 {
            if f(lo) < 0.0 {
                break;
            }
            lo *= 0.5;
        }
        let root = bisect(lo, hi, &mut f, 1e-13 * hi);
        if let Some(e) = err {
            return Err(e.into());
        }
        root.map_err(|e| TransitionsError::RegimePrecondition(e.to_string()))
    }

    /// Y_{theta->eps}: the crossing shock for a given successor leverage,
    /// at the anchor's assets.
    pub fn theta_to_eps(&self, theta_next: f64) -> Result<f64, TransitionsError> {
        let hi = clearing::epsilon_s_zero(theta_next, self.env.theta_bar);
        let mut err = None;
        let root = bisect(
            0.0,
            hi * (1.0 - 1e-9),
            |eps| match self.equation(self.assets_w, theta_next, eps) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            },
            1e-13,
        );
        if let Some(e) = err {
            return Err(e.into());
        }
        root.map_err(|e| TransitionsError::RegimePrecondition(e.to_string()))
    }

    /// Y_{eps->theta}: closed form for the successor leverage whose
    /// crossing sits at the given shock.
    pub fn eps_to_theta(&self, eps: f64) -> Result<f64, TransitionsError> {
        let x = self
            .cms_x(self.assets_w, eps)
            .map_err(TransitionsError::Solve)?;
        Ok(((-self.env.beta * x).exp() - (1.0 - 1.0 / self.env.theta_bar) * eps)
            * self.env.theta_bar)
    }
}

/// Maximum absolute error across the four round trips at one position.
pub fn isomorphism_roundtrip_error(maps: &ChainMaps) -> Result<f64, TransitionsError> {
    let eps0 = maps.env.epsilon;
    let mut worst = 0.0_f64;
    // X_{A->eps} . X_{eps->A} <- eps
    let a = maps.eps_to_a(eps0)?;
    worst = worst.max((maps.a_to_eps(a)? - eps0).abs());
    // X_{eps->A} . X_{A->eps} <- A
    let e1 = maps.a_to_eps(maps.assets_w)?;
    worst = worst.max((maps.eps_to_a(e1)? - maps.assets_w).abs() / maps.assets_w.max(1.0));
    // Y_{theta->eps} . Y_{eps->theta} <- eps
    let th = maps.eps_to_theta(eps0)?;
    worst = worst.max((maps.theta_to_eps(th)? - eps0).abs());
    // Y_{eps->theta} . Y_{theta->eps} <- theta
    let e2 = maps.theta_to_eps(maps.theta_next)?;
    worst = worst.max((maps.eps_to_theta(e2)? - maps.theta_next).abs());
    // four-map cycle on A
    let ea = maps.a_to_eps(maps.assets_w)?;
    let tha = maps.eps_to_theta(ea)?;
    let ea2 = maps.theta_to_eps(tha)?;
    worst = worst.max((maps.eps_to_a(ea2)? - maps.assets_w).abs() / maps.assets_w.max(1.0));
    // four-map cycle on eps
    let thb = maps.eps_to_theta(eps0)?;
    let eb = maps.theta_to_eps(thb)?;
    let ab = maps.eps_to_a(eb)?;
    worst = worst.max((maps.a_to_eps(ab)? - eps0).abs());
    Ok(worst)
}

/// Outcome of the head-cardinality construction.
#[derive(Debug, Clone, Serialize)]
pub struct AdjustedScenario {
    pub banks: Vec<Bank>,
    pub achieved_head: Vec<String>,
    pub attempts: usize,
    /// True when the adjustment touched leverage ratios rather than assets
    /// (only the zero-cardinality case requires it).
    pub adjusted_leverage: bool,
}

/// Perturb the chain so that its maximal bailout cluster has exactly `k`
/// members, holding the shock fixed. Asset scaling reaches every k >= 1; an
/// empty head additionally requires flattening leverage to the regulatory
/// floor so that no demand stays negative.
pub fn layer_count_control(
    banks: &[Bank],
    env: &MarketEnv,
    k: usize,
) -> Result<AdjustedScenario, TransitionsError> {
    let m = banks.len();
    if k > m {
        return Err(TransitionsError::Infeasible {
            binding: format!("requested head {k} exceeds population {m}"),
        });
    }
    let order = chain_order(banks);
    if k == 0 {
        // a negative pre-regular chain always has a non-empty maximal
        // bailout cluster; the only route to an empty head is removing
        // every negative demand via the leverage floor
        let cap = env.theta_bar + (1.0 - env.theta_bar) * env.epsilon;
        let banks2: Vec<Bank> = banks
            .iter()
            .map(|b| {
                let mut nb = b.clone();
                nb.equity = (env.theta_bar + 0.5 * (cap - env.theta_bar)) * nb.assets;
                nb
            })
            .collect();
        let head = partition::maximal_bailout(&banks2, env)?;
        if !head.is_empty() {
            return Err(TransitionsError::Infeasible {
                binding: "a bank with negative demand survived the leverage flattening".into(),
            });
        }
        return Ok(AdjustedScenario {
            banks: banks2,
            achieved_head: vec![],
            attempts: 1,
            adjusted_leverage: true,
        });
    }
    // scale the target head's assets up and the tail's down until the
    // maximal bailout cluster is exactly the head
    let head_target: Vec<usize> = order[..k].to_vec();
    for attempt in 0..40 {
        let factor = (2.0_f64).powi(attempt);
        let banks2: Vec<Bank> = banks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut nb = b.clone();
                let scale = if head_target.contains(&i) {
                    factor
                } else {
                    1.0 / factor
                };
                nb.assets = b.assets * scale;
                nb.equity = b.leverage() * nb.assets;
                nb.investments.values_mut().for_each(|v| *v *= scale);
                nb
            })
            .collect();
        let head = partition::maximal_bailout(&banks2, env)?;
        let mut got: Vec<usize> = head.clone();
        got.sort_unstable();
        let mut want = head_target.clone();
        want.sort_unstable();
        if got == want {
            return Ok(AdjustedScenario {
                achieved_head: head.iter().map(|&i| banks2[i].id.clone()).collect(),
                banks: banks2,
                attempts: attempt as usize + 1,
                adjusted_leverage: false,
            });
        }
    }
    Err(TransitionsError::Infeasible {
        binding: "asset scaling did not isolate the requested head within the attempt budget"
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(id: &str, a: f64, theta: f64) -> Bank {
        Bank::specialized(id, a, theta * a, "k").unwrap()
    }

    fn demo() -> (Vec<Bank>, MarketEnv) {
        (
            vec![bank("i", 100.0, 0.08), bank("j", 50.0, 0.05)],
            MarketEnv::new(0.02, 0.04, 0.0),
        )
    }

    #[test]
    fn closed_form_thresholds() {
        let (banks, env) = demo();
        let t = thresholds(&banks, &env).unwrap();
        let ti = t.per_bank.iter().find(|b| b.bank_id == "i").unwrap();
        let tj = t.per_bank.iter().find(|b| b.bank_id == "j").unwrap();
        assert!((ti.eps_s_zero - 1.0 / 24.0).abs() < 1e-15);
        assert!((tj.eps_s_zero - 0.01 / 0.96).abs() < 1e-15);
    }

    #[test]
    fn theta_at_bar_gives_zero_root() {
        assert_eq!(clearing::epsilon_s_zero(0.04, 0.04), 0.0);
    }

    #[test]
    fn demo_pair_is_type1_with_four_regimes() {
        let (banks, env) = demo();
        let tl = regime_classify(&banks[0], &banks[1], &env, 0.0, 0.1, 200).unwrap();
        assert_eq!(tl.pair_type, PairType::Type1);
        assert_eq!(tl.segments.len(), 4, "{:?}", tl.segments);
        assert!(tl.matches_expected, "mismatch at {:?}", tl.mismatch_at);
    }

    #[test]
    fn symmetric_pair_is_type2_with_two_regimes() {
        let banks = vec![bank("a", 100.0, 0.06), bank("b", 100.0, 0.06)];
        let env = MarketEnv::new(0.003, 0.04, 0.0);
        let tl = regime_classify(&banks[0], &banks[1], &env, 0.0, 0.08, 160).unwrap();
        assert_eq!(tl.pair_type, PairType::Type2);
        assert_eq!(tl.segments.len(), 2, "{:?}", tl.segments);
        assert!(tl.matches_expected);
    }

    #[test]
    fn single_bank_sweep_threshold_equals_eps_x_zero() {
        let banks = vec![bank("solo", 100.0, 0.08)];
        let env = MarketEnv::new(0.01, 0.04, 0.0);
        let sched = compression_sweep(&banks, &env, 0.0, 0.1, 400).unwrap();
        assert_eq!(sched.exits.len(), 1);
        let expected = eps_x_zero_of(&banks, &env, "solo", 0.1).unwrap().unwrap();
        assert!((sched.exits[0].0 - expected).abs() < 1e-6);
    }

    #[test]
    fn isomorphism_round_trips_on_demo_chain() {
        let banks = vec![
            bank("a", 120.0, 0.10),
            bank("b", 100.0, 0.08),
            bank("c", 80.0, 0.06),
        ];
        let env = MarketEnv::new(0.002, 0.04, 0.005);
        let maps = ChainMaps::at_position(&banks, 0, &env).unwrap();
        let err = isomorphism_roundtrip_error(&maps).unwrap();
        assert!(err < 1e-8, "round trip error {err}");
    }

    #[test]
    fn layer_control_whole_chain() {
        let banks: Vec<Bank> = (0..4)
            .map(|i| bank(&format!("b{i}"), 100.0, 0.10 - 0.012 * i as f64))
            .collect();
        let env = MarketEnv::new(0.001, 0.04, 0.0);
        let adj = layer_count_control(&banks, &env, 4).unwrap();
        assert_eq!(adj.achieved_head.len(), 4);
    }

    #[test]
    fn layer_control_singleton_head() {
        let banks: Vec<Bank> = (0..4)
            .map(|i| bank(&format!("b{i}"), 100.0, 0.10 - 0.012 * i as f64))
            .collect();
        let env = MarketEnv::new(0.001, 0.04, 0.0);
        let adj = layer_count_control(&banks, &env, 1).unwrap();
        assert_eq!(adj.achieved_head.len(), 1);
        assert_eq!(adj.achieved_head[0], "b0");
    }

    #[test]
    fn layer_control_empty_head_flattens_leverage() {
        let banks: Vec<Bank> = (0..3)
            .map(|i| bank(&format!("b{i}"), 100.0, 0.10 - 0.02 * i as f64))
            .collect();
        let env = MarketEnv::new(0.001, 0.04, 0.01);
        let adj = layer_count_control(&banks, &env, 0).unwrap();
        assert!(adj.achieved_head.is_empty());
        assert!(adj.adjusted_leverage);
    }
}
