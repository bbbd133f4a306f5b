//! Maximal bailout/bail-in clusters, weak and strong decompositions,
//! leverage chains and the finite-risk mitigation predicate.
//!
//! Scaled volumes `x^i / A_i` increase along a descending-leverage chain
//! (cross-bank dependence), so in any joint solution the credit-creating
//! banks occupy a prefix of the chain and the sellers a suffix. Maximal
//! clusters are therefore computed greedily along the chain and then
//! verified against the extensional definition: every outside bank of the
//! matching demand sign must be crowded out when added, with incumbents
//! keeping their signs.

use crate::clearing::{self, SolveError};
use crate::counterfactual::neutral_tol;
use crate::model::{Bank, MarketEnv};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("solver failure: {0}")]
    Solve(#[from] SolveError),
    #[error("sigma {0} outside [0, 1]")]
    SigmaOutOfRange(f64),
}

/// One homophily subspace: a set of banks evolving jointly, identified by
/// its index in the generating space.
#[derive(Debug, Clone, Serialize)]
pub struct Subspace {
    pub index: usize,
    /// Positions into the scenario's bank list.
    pub members: Vec<usize>,
    pub birth_epoch: usize,
    /// Epochs at which membership changed (including birth).
    pub change_epochs: Vec<usize>,
}

impl Subspace {
    pub fn new(index: usize, members: Vec<usize>, birth_epoch: usize) -> Self {
        Subspace {
            index,
            members,
            birth_epoch,
            change_epochs: vec![birth_epoch],
        }
    }

    /// Cardinality of the purification operation sequence: epochs from
    /// birth through the last membership change, inclusive.
    pub fn operator_count(&self) -> usize {
        self.change_epochs.last().unwrap() - self.birth_epoch + 1
    }
}

/// Sort bank positions by descending leverage, ties broken by id.
pub fn chain_order(banks: &[Bank]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..banks.len()).collect();
    idx.sort_by(|&a, &b| {
        banks[b]
            .leverage()
            .partial_cmp(&banks[a].leverage())
            .unwrap()
            .then_with(|| banks[a].id.cmp(&banks[b].id))
    });
    idx
}

fn subset(banks: &[Bank], idx: &[usize]) -> Vec<Bank> {
    idx.iter().map(|&i| banks[i].clone()).collect()
}

fn is_negative(x: f64, bank: &Bank) -> bool {
    x < -neutral_tol(bank.assets)
}

fn is_nonnegative(x: f64, bank: &Bank) -> bool {
    !is_negative(x, bank)
}

/// Verify the extensional maximal-bailout condition for a candidate set
/// (positions into `banks`): members clear negative on their own, and every
/// outside bank with non-positive demand is crowded out when added alone
/// while incumbents stay negative.
pub fn verify_bailout(
    banks: &[Bank],
    candidate: &[usize],
    env: &MarketEnv,
) -> Result<bool, SolveError> {
    if candidate.is_empty() {
        // the empty set is maximal only when no strictly negative-demand
        // bank exists (a lone s < 0 bank clears negative by the sign law)
        return Ok(!banks
            .iter()
            .any(|b| clearing::liquidation_demand(b, env) < -neutral_tol(b.assets)));
    }
    let members = subset(banks, candidate);
    let sol = clearing::solve(&members, env)?;
    for (k, &i) in candidate.iter().enumerate() {
        let s = clearing::liquidation_demand(&banks[i], env);
        if !(s < -neutral_tol(banks[i].assets) && is_negative(sol.realized[k], &banks[i])) {
            return Ok(false);
        }
    }
    for (j, b) in banks.iter().enumerate() {
        if candidate.contains(&j) {
            continue;
        }
        let s = clearing::liquidation_demand(b, env);
        if s > neutral_tol(b.assets) {
            continue; // only outsiders with s <= 0 are tested
        }
        let mut extended = members.clone();
        extended.push(b.clone());
        let ext = clearing::solve(&extended, env)?;
        let xj = ext.realized_of(&b.id).unwrap();
        if !is_nonnegative(xj, b) {
            return Ok(false);
        }
        for &i in candidate {
            let xi = ext.realized_of(&banks[i].id).unwrap();
            if !is_negative(xi, &banks[i]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Mirror condition for a maximal bail-in candidate.
pub fn verify_bailin(
    banks: &[Bank],
    candidate: &[usize],
    env: &MarketEnv,
) -> Result<bool, SolveError> {
    if candidate.is_empty() {
        return Ok(!banks
            .iter()
            .any(|b| clearing::liquidation_demand(b, env) >= -neutral_tol(b.assets)));
    }
    let members = subset(banks, candidate);
    let sol = clearing::solve(&members, env)?;
    for (k, &i) in candidate.iter().enumerate() {
        let s = clearing::liquidation_demand(&banks[i], env);
        if !(s >= -neutral_tol(banks[i].assets) && is_nonnegative(sol.realized[k], &banks[i])) {
            return Ok(false);
        }
    }
    for (j, b) in banks.iter().enumerate() {
        if candidate.contains(&j) {
            continue;
        }
        let s = clearing::liquidation_demand(b, env);
        if s < -neutral_tol(b.assets) {
            continue; // only outsiders with s >= 0 are tested
        }
        let mut extended = members.clone();
        extended.push(b.clone());
        let ext = clearing::solve(&extended, env)?;
        let xj = ext.realized_of(&b.id).unwrap();
        if !is_negative(xj, b) {
            return Ok(false);
        }
        for &i in candidate {
            let xi = ext.realized_of(&banks[i].id).unwrap();
            if !is_nonnegative(xi, &banks[i]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Maximal bailout cluster: the longest all-negative prefix of the
/// descending-leverage chain among negative-demand banks, verified against
/// the extensional definition (with fallback to shorter prefixes).
/// Returns positions into `banks`.
pub fn maximal_bailout(banks: &[Bank], env: &MarketEnv) -> Result<Vec<usize>, SolveError> {
    let order = chain_order(banks);
    let negatives: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| clearing::liquidation_demand(&banks[i], env) < -neutral_tol(banks[i].assets))
        .collect();
    if negatives.is_empty() {
        return Ok(vec![]);
    }
    let mut best_len = 0;
    for len in 1..=negatives.len() {
        let prefix = &negatives[..len];
        let sol = clearing::solve(&subset(banks, prefix), env)?;
        let all_negative = prefix
            .iter()
            .enumerate()
            .all(|(k, &i)| is_negative(sol.realized[k], &banks[i]));
        if all_negative {
            best_len = len;
        } else {
            break;
        }
    }
    for len in (1..=best_len).rev() {
        if verify_bailout(banks, &negatives[..len], env)? {
            return Ok(negatives[..len].to_vec());
        }
    }
    Ok(vec![])
}

/// Maximal bail-in cluster: the longest all-nonnegative suffix of the
/// descending-leverage chain among nonnegative-demand banks, verified
/// extensionally.
pub fn maximal_bailin(banks: &[Bank], env: &MarketEnv) -> Result<Vec<usize>, SolveError> {
    let order = chain_order(banks);
    let positives: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| {
            clearing::liquidation_demand(&banks[i], env) >= -neutral_tol(banks[i].assets)
        })
        .collect();
    if positives.is_empty() {
        return Ok(vec![]);
    }
    let n = positives.len();
    let mut best_len = 0;
    for len in 1..=n {
        let suffix = &positives[n - len..];
        let sol = clearing::solve(&subset(banks, suffix), env)?;
        let all_nonneg = suffix
            .iter()
            .enumerate()
            .all(|(k, &i)| is_nonnegative(sol.realized[k], &banks[i]));
        if all_nonneg {
            best_len = len;
        } else {
            break;
        }
    }
    for len in (1..=best_len).rev() {
        if verify_bailin(banks, &positives[n - len..], env)? {
            return Ok(positives[n - len..].to_vec());
        }
    }
    Ok(vec![])
}

/// Weak or strong decomposition of a subspace.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    /// Maximal bailout cluster B(eps), positions into the input slice.
    pub bailout: Vec<usize>,
    /// Maximal bail-in cluster B^I(eps).
    pub bailin: Vec<usize>,
    /// Everything else.
    pub residual: Vec<usize>,
    pub strong: Option<StrongParts>,
}

/// The four strong-decomposition components.
#[derive(Debug, Clone, Serialize)]
pub struct StrongParts {
    /// B(eps) plus the sigma-sample of outside negative-demand banks.
    pub bailout_part: Vec<usize>,
    /// Unsampled outside negative-demand banks.
    pub negative_layer: Vec<usize>,
    /// Unsampled outside nonnegative-demand banks.
    pub positive_layer: Vec<usize>,
    /// B^I(eps) plus the sigma_I-sample.
    pub bailin_part: Vec<usize>,
}

/// Split a subspace into B(eps), B^I(eps) and the residual.
pub fn weak_decompose(banks: &[Bank], env: &MarketEnv) -> Result<Decomposition, SolveError> {
    let bailout = maximal_bailout(banks, env)?;
    let bailin = maximal_bailin(banks, env)?;
    let residual: Vec<usize> = (0..banks.len())
        .filter(|i| !bailout.contains(i) && !bailin.contains(i))
        .collect();
    Ok(Decomposition {
        bailout,
        bailin,
        residual,
        strong: None,
    })
}

/// Strong decomposition: weak parts plus seeded uniform sampling (without
/// replacement, floor of sigma times layer size) of the middle layers into
/// the boundary components. `sigma = sigma_i = 0` degenerates to the weak
/// decomposition.
pub fn strong_decompose<R: Rng>(
    banks: &[Bank],
    env: &MarketEnv,
    sigma: f64,
    sigma_i: f64,
    rng: &mut R,
) -> Result<Decomposition, PartitionError> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(PartitionError::SigmaOutOfRange(sigma));
    }
    if !(0.0..=1.0).contains(&sigma_i) {
        return Err(PartitionError::SigmaOutOfRange(sigma_i));
    }
    let mut d = weak_decompose(banks, env)?;
    let negatives: Vec<usize> = d
        .residual
        .iter()
        .copied()
        .filter(|&i| clearing::liquidation_demand(&banks[i], env) < -neutral_tol(banks[i].assets))
        .collect();
    let positives: Vec<usize> = d
        .residual
        .iter()
        .copied()
        .filter(|&i| !negatives.contains(&i))
        .collect();
    let sample = |pool: &[usize], frac: f64, rng: &mut R| -> (Vec<usize>, Vec<usize>) {
        let count = (frac * pool.len() as f64).floor() as usize;
        let mut remaining: Vec<usize> = pool.to_vec();
        let mut taken = Vec::with_capacity(count);
        for _ in 0..count {
            let pick = rng.gen_range(0..remaining.len());
            taken.push(remaining.remove(pick));
        }
        taken.sort_unstable();
        (taken, remaining)
    };
    let (neg_take, neg_rest) = sample(&negatives, sigma, rng);
    let (pos_take, pos_rest) = sample(&positives, sigma_i, rng);
    let mut bailout_part = d.bailout.clone();
    bailout_part.extend(&neg_take);
    let mut bailin_part = d.bailin.clone();
    bailin_part.extend(&pos_take);
    d.strong = Some(StrongParts {
        bailout_part,
        negative_layer: neg_rest,
        positive_layer: pos_rest,
        bailin_part,
    });
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainClass {
    NegativeRegular,
    PositiveRegular,
    NegativePreRegular,
    PositivePreRegular,
    Unclassified,
}

/// A subspace reordered by descending leverage with its joint solution.
#[derive(Debug, Clone, Serialize)]
pub struct Chain {
    /// Bank ids in chain order (descending leverage, ties by id).
    pub bank_ids: Vec<String>,
    /// Positions into the input slice, same order.
    pub positions: Vec<usize>,
    pub demanded: Vec<f64>,
    pub realized: Vec<f64>,
    pub class: ChainClass,
}

fn classify_chain(banks: &[Bank], positions: &[usize], s: &[f64], x: &[f64]) -> ChainClass {
    let neg = |v: f64, i: usize| v < -neutral_tol(banks[positions[i]].assets);
    let all_x_neg = (0..positions.len()).all(|i| neg(x[i], i));
    let all_x_nonneg = (0..positions.len()).all(|i| !neg(x[i], i));
    let all_s_neg = (0..positions.len()).all(|i| neg(s[i], i));
    let all_s_nonneg = (0..positions.len()).all(|i| !neg(s[i], i));
    if all_x_neg && all_s_neg {
        ChainClass::NegativeRegular
    } else if all_x_nonneg && all_s_nonneg {
        ChainClass::PositiveRegular
    } else if all_s_neg {
        ChainClass::NegativePreRegular
    } else if all_s_nonneg {
        ChainClass::PositivePreRegular
    } else {
        ChainClass::Unclassified
    }
}

/// Order the banks by descending leverage and solve them jointly.
pub fn chain_of(banks: &[Bank], env: &MarketEnv) -> Result<Chain, SolveError> {
    let positions = chain_order(banks);
    let members = subset(banks, &positions);
    let sol = clearing::solve(&members, env)?;
    let class = classify_chain(banks, &positions, &sol.demanded, &sol.realized);
    Ok(Chain {
        bank_ids: members.iter().map(|b| b.id.clone()).collect(),
        positions,
        demanded: sol.demanded,
        realized: sol.realized,
        class,
    })
}

/// Split a pre-regular chain into its regular head (the maximal cluster of
/// the matching sign) and the remaining pre-regular tail. Regular chains
/// return themselves with an empty tail; mixed chains return an empty head.
pub fn chain_decompose(
    banks: &[Bank],
    env: &MarketEnv,
) -> Result<(Chain, Chain), SolveError> {
    let full = chain_of(banks, env)?;
    let head_positions: Vec<usize> = match full.class {
        ChainClass::NegativeRegular | ChainClass::PositiveRegular => full.positions.clone(),
        ChainClass::NegativePreRegular => maximal_bailout(banks, env)?,
        ChainClass::PositivePreRegular => maximal_bailin(banks, env)?,
        ChainClass::Unclassified => vec![],
    };
    let tail_positions: Vec<usize> = full
        .positions
        .iter()
        .copied()
        .filter(|p| !head_positions.contains(p))
        .collect();
    let build = |positions: Vec<usize>| -> Result<Chain, SolveError> {
        if positions.is_empty() {
            return Ok(Chain {
                bank_ids: vec![],
                positions,
                demanded: vec![],
                realized: vec![],
                class: ChainClass::Unclassified,
            });
        }
        let members = subset(banks, &positions);
        let sol = clearing::solve(&members, env)?;
        let class = classify_chain(banks, &positions, &sol.demanded, &sol.realized);
        Ok(Chain {
            bank_ids: members.iter().map(|b| b.id.clone()).collect(),
            positions,
            demanded: sol.demanded,
            realized: sol.realized,
            class,
        })
    };
    Ok((build(head_positions)?, build(tail_positions)?))
}

/// Finite-risk mitigation predicate: the devaluation fraction (supply) must
/// not exceed the summed per-asset requirements (demand); equality marks a
/// perfect subspace.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteRiskReport {
    /// 1 - e^{-beta * sum x}.
    pub supply: f64,
    /// sum_j L^j.
    pub demand: f64,
    pub slack: f64,
    pub holds: bool,
    pub perfect: bool,
}

pub fn finite_risk_check(banks: &[Bank], env: &MarketEnv) -> Result<FiniteRiskReport, SolveError> {
    let sol = clearing::solve(banks, env)?;
    let total = sol.total_realized();
    let supply = 1.0 - (-env.beta * total).exp();
    let demand: f64 = banks
        .iter()
        .map(|b| clearing::l_coefficient(b.leverage(), env))
        .sum();
    let slack = demand - supply;
    Ok(FiniteRiskReport {
        supply,
        demand,
        slack,
        holds: slack >= -1e-9,
        perfect: slack.abs() <= 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bank(id: &str, a: f64, theta: f64) -> Bank {
        Bank::specialized(id, a, theta * a, "k").unwrap()
    }

    fn env(beta: f64, eps: f64) -> MarketEnv {
        MarketEnv::new(beta, 0.04, eps)
    }

    #[test]
    fn bailout_empty_when_all_demands_positive() {
        // eps above every s-root
        let banks = vec![bank("a", 100.0, 0.05), bank("b", 80.0, 0.06)];
        let e = env(0.01, 0.05);
        assert!(maximal_bailout(&banks, &e).unwrap().is_empty());
        assert!(!maximal_bailin(&banks, &e).unwrap().is_empty());
    }

    #[test]
    fn bailout_nonempty_when_all_demands_negative() {
        let banks = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        let e = env(0.01, 0.0);
        let b = maximal_bailout(&banks, &e).unwrap();
        assert!(!b.is_empty());
        assert!(maximal_bailin(&banks, &e).unwrap().is_empty());
    }

    #[test]
    fn singleton_zero_demand_is_the_bailin_cluster() {
        // eps exactly at bank b's s-root
        let banks = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.05)];
        let eps = clearing::epsilon_s_zero(0.05, 0.04);
        let e = env(0.01, eps);
        let bi = maximal_bailin(&banks, &e).unwrap();
        assert_eq!(bi, vec![1]);
    }

    #[test]
    fn weak_parts_partition_the_subspace() {
        let banks = vec![
            bank("a", 100.0, 0.09),
            bank("b", 80.0, 0.07),
            bank("c", 60.0, 0.05),
            bank("d", 50.0, 0.045),
        ];
        let e = env(0.005, 0.02);
        let d = weak_decompose(&banks, &e).unwrap();
        let mut all: Vec<usize> = d
            .bailout
            .iter()
            .chain(&d.bailin)
            .chain(&d.residual)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn iterated_residual_decomposition_terminates() {
        let banks = vec![
            bank("a", 100.0, 0.09),
            bank("b", 80.0, 0.07),
            bank("c", 60.0, 0.05),
            bank("d", 50.0, 0.045),
            bank("e", 40.0, 0.044),
        ];
        let e = env(0.004, 0.02);
        let mut current: Vec<Bank> = banks.clone();
        let mut rounds = 0;
        loop {
            let d = weak_decompose(&current, &e).unwrap();
            if d.bailout.is_empty() && d.bailin.is_empty() {
                break;
            }
            let next: Vec<Bank> = d.residual.iter().map(|&i| current[i].clone()).collect();
            if next.len() == current.len() {
                break;
            }
            current = next;
            rounds += 1;
            assert!(rounds <= banks.len(), "did not terminate");
            if current.is_empty() {
                break;
            }
        }
    }

    #[test]
    fn sigma_zero_degenerates_to_weak() {
        let banks = vec![
            bank("a", 100.0, 0.09),
            bank("b", 80.0, 0.07),
            bank("c", 60.0, 0.05),
            bank("d", 50.0, 0.045),
        ];
        let e = env(0.005, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = strong_decompose(&banks, &e, 0.0, 0.0, &mut rng).unwrap();
        let strong = d.strong.as_ref().unwrap();
        assert_eq!(strong.bailout_part, d.bailout);
        assert_eq!(strong.bailin_part, d.bailin);
        let mut mid: Vec<usize> = strong
            .negative_layer
            .iter()
            .chain(&strong.positive_layer)
            .copied()
            .collect();
        mid.sort_unstable();
        let mut residual = d.residual.clone();
        residual.sort_unstable();
        assert_eq!(mid, residual);
    }

    #[test]
    fn sigma_one_empties_the_negative_layer() {
        let banks = vec![
            bank("a", 100.0, 0.09),
            bank("b", 80.0, 0.07),
            bank("c", 60.0, 0.05),
            bank("d", 50.0, 0.045),
        ];
        let e = env(0.005, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = strong_decompose(&banks, &e, 1.0, 1.0, &mut rng).unwrap();
        let strong = d.strong.as_ref().unwrap();
        assert!(strong.negative_layer.is_empty());
        assert!(strong.positive_layer.is_empty());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let banks: Vec<Bank> = (0..6)
            .map(|i| bank(&format!("b{i}"), 100.0 - 5.0 * i as f64, 0.09 - 0.008 * i as f64))
            .collect();
        let e = env(0.003, 0.02);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = strong_decompose(&banks, &e, 0.5, 0.5, &mut rng).unwrap();
            d.strong.unwrap().bailout_part
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn all_negative_chain_is_regular_with_empty_tail() {
        let banks = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        let e = env(0.001, 0.0);
        let (head, tail) = chain_decompose(&banks, &e).unwrap();
        assert_eq!(head.class, ChainClass::NegativeRegular);
        assert!(tail.bank_ids.is_empty());
    }

    #[test]
    fn chain_order_is_descending_leverage() {
        let banks = vec![bank("lo", 100.0, 0.05), bank("hi", 80.0, 0.09)];
        let e = env(0.001, 0.0);
        let chain = chain_of(&banks, &e).unwrap();
        assert_eq!(chain.bank_ids, vec!["hi".to_string(), "lo".to_string()]);
    }

    #[test]
    fn chain_class_invariant_under_input_permutation() {
        let banks = vec![
            bank("a", 100.0, 0.09),
            bank("b", 80.0, 0.07),
            bank("c", 60.0, 0.05),
        ];
        let e = env(0.004, 0.02);
        let c1 = chain_of(&banks, &e).unwrap();
        let permuted = vec![banks[2].clone(), banks[0].clone(), banks[1].clone()];
        let c2 = chain_of(&permuted, &e).unwrap();
        assert_eq!(c1.class, c2.class);
        assert_eq!(c1.bank_ids, c2.bank_ids);
    }

    #[test]
    fn finite_risk_beta_zero_is_trivial() {
        let banks = vec![bank("a", 100.0, 0.05), bank("b", 80.0, 0.06)];
        let e = env(0.0, 0.05);
        let rep = finite_risk_check(&banks, &e).unwrap();
        assert_eq!(rep.supply, 0.0);
        assert!(rep.holds);
    }
}
