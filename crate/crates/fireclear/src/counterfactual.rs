//! Counterfactual spaces and crowding-out classification.
//!
//! Every bank's baseline is its parallel monopoly system (the map `Phi`);
//! clusters clear jointly. Comparing the two solution systems componentwise
//! yields the crowding-out effect: a negative difference favors the joint
//! cluster, a positive one the reference system.

use crate::clearing::{self, SolveError};
use crate::model::{Bank, MarketEnv, Modularity};
use serde::Serialize;

/// Sign classification tolerance, scale-free near zero crossings.
pub fn neutral_tol(assets: f64) -> f64 {
    1e-9 * assets.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoeClass {
    /// delta < 0: the bank is better off inside the joint cluster.
    FavorsCluster,
    /// delta > 0: the bank is better off in the reference system.
    FavorsReference,
    Neutral,
}

fn classify(delta: f64, assets: f64) -> CoeClass {
    let tol = neutral_tol(assets);
    if delta < -tol {
        CoeClass::FavorsCluster
    } else if delta > tol {
        CoeClass::FavorsReference
    } else {
        CoeClass::Neutral
    }
}

/// Reference system for a crowding-out comparison.
#[derive(Debug, Clone)]
pub enum Reference {
    /// Per-bank counterfactual monopoly solution Phi^{-1}(s~).
    Cms,
    /// Joint solution of a sub-cluster, identified by bank ids.
    SubCluster(Vec<String>),
}

/// Componentwise crowding-out difference for one cluster against a
/// reference system.
#[derive(Debug, Clone, Serialize)]
pub struct CoeDelta {
    /// Banks the comparison covers (the whole cluster for a CMS reference,
    /// the sub-cluster members otherwise).
    pub bank_ids: Vec<String>,
    /// x in the joint cluster, restricted to `bank_ids`.
    pub cluster: Vec<f64>,
    /// x in the reference system.
    pub reference: Vec<f64>,
    /// cluster - reference.
    pub delta: Vec<f64>,
    pub classification: Vec<CoeClass>,
}

/// Solve the cluster and the reference, and difference the covered
/// components.
pub fn coe_delta(
    cluster: &[Bank],
    reference: &Reference,
    env: &MarketEnv,
) -> Result<CoeDelta, SolveError> {
    let joint = clearing::solve(cluster, env)?;
    match reference {
        Reference::Cms => {
            let mut reference_x = Vec::with_capacity(cluster.len());
            for b in cluster {
                let s = clearing::liquidation_demand(b, env);
                reference_x.push(clearing::cms_solve(b, env, s)?);
            }
            let delta: Vec<f64> = joint
                .realized
                .iter()
                .zip(&reference_x)
                .map(|(c, r)| c - r)
                .collect();
            let classification = delta
                .iter()
                .zip(cluster)
                .map(|(d, b)| classify(*d, b.assets))
                .collect();
            Ok(CoeDelta {
                bank_ids: joint.bank_ids.clone(),
                cluster: joint.realized.clone(),
                reference: reference_x,
                delta,
                classification,
            })
        }
        Reference::SubCluster(ids) => {
            let sub: Vec<Bank> = cluster
                .iter()
                .filter(|b| ids.contains(&b.id))
                .cloned()
                .collect();
            assert_eq!(sub.len(), ids.len(), "sub-cluster must be a subset");
            let sub_sol = clearing::solve(&sub, env)?;
            let mut cluster_x = Vec::new();
            let mut assets = Vec::new();
            for id in &sub_sol.bank_ids {
                let idx = joint.bank_ids.iter().position(|b| b == id).unwrap();
                cluster_x.push(joint.realized[idx]);
                assets.push(cluster[idx].assets);
            }
            let delta: Vec<f64> = cluster_x
                .iter()
                .zip(&sub_sol.realized)
                .map(|(c, r)| c - r)
                .collect();
            let classification = delta
                .iter()
                .zip(&assets)
                .map(|(d, a)| classify(*d, *a))
                .collect();
            Ok(CoeDelta {
                bank_ids: sub_sol.bank_ids.clone(),
                cluster: cluster_x,
                reference: sub_sol.realized.clone(),
                delta,
                classification,
            })
        }
    }
}

/// Per-bank verdict of the opposite-incentive inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct OppositeIncentiveCheck {
    pub bank_id: String,
    /// Sub-cluster solution minus the bank's component in the full cluster.
    pub difference: f64,
    pub holds: bool,
}

/// Split of a cluster into its selling and credit-creating sides, with the
/// opposite-incentive inequalities verified against the sub-cluster
/// systems.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionClassification {
    /// Banks with x >= 0 in the joint solution (ties at zero land here).
    pub p_plus: Vec<String>,
    /// Banks with x < 0.
    pub p_minus: Vec<String>,
    pub checks: Vec<OppositeIncentiveCheck>,
    pub all_hold: bool,
    /// Policy constant that pins the credit-creating side in place.
    pub schelling_point_p_switch: Option<f64>,
    /// Exit best-response constant for the selling side.
    pub knightian_point_p_delta: Option<f64>,
}

/// Partition the cluster by solution sign and verify the sub-cluster
/// inequalities: the selling side solves strictly lower alone, the
/// credit-creating side strictly higher.
pub fn classify_partition(
    cluster: &[Bank],
    env: &MarketEnv,
) -> Result<PartitionClassification, SolveError> {
    let joint = clearing::solve(cluster, env)?;
    let mut p_plus = Vec::new();
    let mut p_minus = Vec::new();
    for (b, &x) in cluster.iter().zip(&joint.realized) {
        if x >= -neutral_tol(b.assets) {
            p_plus.push(b.id.clone());
        } else {
            p_minus.push(b.id.clone());
        }
    }
    let mut checks = Vec::new();
    for (ids, want_negative) in [(&p_plus, true), (&p_minus, false)] {
        if ids.is_empty() {
            continue;
        }
        let sub: Vec<Bank> = cluster
            .iter()
            .filter(|b| ids.contains(&b.id))
            .cloned()
            .collect();
        let sub_sol = clearing::solve(&sub, env)?;
        for (k, id) in sub_sol.bank_ids.iter().enumerate() {
            let idx = joint.bank_ids.iter().position(|b| b == id).unwrap();
            let difference = sub_sol.realized[k] - joint.realized[idx];
            // equality allowed when one side is the whole cluster
            let whole = ids.len() == cluster.len();
            let tol = neutral_tol(cluster[idx].assets);
            let holds = if whole {
                difference.abs() <= tol
            } else if want_negative {
                difference < tol
            } else {
                difference > -tol
            };
            checks.push(OppositeIncentiveCheck {
                bank_id: id.clone(),
                difference,
                holds,
            });
        }
    }
    let all_hold = checks.iter().all(|c| c.holds);
    Ok(PartitionClassification {
        schelling_point_p_switch: if p_minus.is_empty() { None } else { Some(1.0) },
        knightian_point_p_delta: if p_plus.is_empty() { None } else { Some(1.0) },
        p_plus,
        p_minus,
        checks,
        all_hold,
    })
}

/// Base-cluster composition for an entrant probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BaseKind {
    PureBailIn,
    PureBailOut,
    Mixed,
}

/// Qualitative response of incumbents to an entrant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IncentiveResponse {
    /// Entrants preserving the cluster's sign lower every incumbent's
    /// liquidation (submodular bail-in entry).
    Complementarity,
    /// Entrants preserving the sign shrink every incumbent's credit
    /// creation (submodular bail-out entry).
    Substitution,
    /// Entrant signs violate the preconditions; directions reported
    /// descriptively.
    MixedCase,
}

/// Marginal effect of adding entrants to a base cluster.
#[derive(Debug, Clone, Serialize)]
pub struct EntrantProbe {
    pub entrant_ids: Vec<String>,
    pub base_kind: BaseKind,
    /// Sign of the entrants' solutions inside the augmented system: true
    /// when all are >= 0, false when all < 0, None when mixed.
    pub entrants_nonnegative: Option<bool>,
    /// Per-incumbent x in the base system.
    pub incumbent_base: Vec<f64>,
    /// Per-incumbent x in the augmented system.
    pub incumbent_augmented: Vec<f64>,
    /// augmented - base per incumbent.
    pub marginal: Vec<f64>,
    pub response: IncentiveResponse,
    /// True when every incumbent moved in the direction the response
    /// predicts (weakly, at the neutrality tolerance).
    pub direction_holds: bool,
}

/// Solve base and base-plus-entrants; classify the direction of every
/// incumbent's change. Under the supermodular demand variant the expected
/// directions reverse.
pub fn entrant_effect(
    base: &[Bank],
    entrants: &[Bank],
    env: &MarketEnv,
) -> Result<EntrantProbe, SolveError> {
    let base_sol = clearing::solve(base, env)?;
    if entrants.is_empty() {
        return Ok(EntrantProbe {
            entrant_ids: vec![],
            base_kind: base_kind_of(base, &base_sol.realized),
            entrants_nonnegative: None,
            incumbent_base: base_sol.realized.clone(),
            incumbent_augmented: base_sol.realized.clone(),
            marginal: vec![0.0; base.len()],
            response: IncentiveResponse::MixedCase,
            direction_holds: true,
        });
    }
    let mut combined: Vec<Bank> = base.to_vec();
    combined.extend(entrants.iter().cloned());
    let aug_sol = clearing::solve(&combined, env)?;

    let base_kind = base_kind_of(base, &base_sol.realized);
    let mut nonneg = 0usize;
    let mut neg = 0usize;
    for e in entrants {
        let x = aug_sol.realized_of(&e.id).unwrap();
        if x >= -neutral_tol(e.assets) {
            nonneg += 1;
        } else {
            neg += 1;
        }
    }
    let entrants_nonnegative = if neg == 0 {
        Some(true)
    } else if nonneg == 0 {
        Some(false)
    } else {
        None
    };

    let incumbent_base = base_sol.realized.clone();
    let incumbent_augmented: Vec<f64> = base
        .iter()
        .map(|b| aug_sol.realized_of(&b.id).unwrap())
        .collect();
    let marginal: Vec<f64> = incumbent_augmented
        .iter()
        .zip(&incumbent_base)
        .map(|(a, b)| a - b)
        .collect();

    let supermodular = env.modularity == Modularity::Supermodular;
    // expected incumbent direction: Some(true) = rises, Some(false) = falls
    let (response, expected_rise) = match (base_kind, entrants_nonnegative) {
        (BaseKind::PureBailIn, Some(true)) => {
            if supermodular {
                (IncentiveResponse::Substitution, Some(true))
            } else {
                (IncentiveResponse::Complementarity, Some(false))
            }
        }
        (BaseKind::PureBailOut, Some(false)) => {
            if supermodular {
                (IncentiveResponse::Complementarity, Some(false))
            } else {
                (IncentiveResponse::Substitution, Some(true))
            }
        }
        (BaseKind::PureBailIn, Some(false)) => (IncentiveResponse::MixedCase, Some(true)),
        (BaseKind::PureBailOut, Some(true)) => (IncentiveResponse::MixedCase, Some(false)),
        _ => (IncentiveResponse::MixedCase, None),
    };
    let direction_holds = match expected_rise {
        None => true,
        Some(rise) => marginal.iter().zip(base).all(|(m, b)| {
            let tol = neutral_tol(b.assets);
            if rise {
                *m >= -tol
            } else {
                *m <= tol
            }
        }),
    };
    Ok(EntrantProbe {
        entrant_ids: entrants.iter().map(|e| e.id.clone()).collect(),
        base_kind,
        entrants_nonnegative,
        incumbent_base,
        incumbent_augmented,
        marginal,
        response,
        direction_holds,
    })
}

fn base_kind_of(base: &[Bank], realized: &[f64]) -> BaseKind {
    let mut any_neg = false;
    let mut any_nonneg = false;
    for (b, &x) in base.iter().zip(realized) {
        if x >= -neutral_tol(b.assets) {
            any_nonneg = true;
        } else {
            any_neg = true;
        }
    }
    match (any_neg, any_nonneg) {
        (true, false) => BaseKind::PureBailOut,
        (false, true) => BaseKind::PureBailIn,
        _ => BaseKind::Mixed,
    }
}

/// Verdict of the aggregate monotonicity implications: when total
/// liquidation rises after entry every selling-demand-negative incumbent's
/// volume falls, and when it falls every positive-demand incumbent's volume
/// rises.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateMonotonicityReport {
    pub total_base: f64,
    pub total_augmented: f64,
    /// +1 total rose, -1 total fell, 0 unchanged within tolerance.
    pub total_direction: i8,
    pub checked_banks: Vec<String>,
    pub holds: bool,
}

pub fn aggregate_monotonicity_check(
    base: &[Bank],
    entrants: &[Bank],
    env: &MarketEnv,
) -> Result<AggregateMonotonicityReport, SolveError> {
    let base_sol = clearing::solve(base, env)?;
    let mut combined: Vec<Bank> = base.to_vec();
    combined.extend(entrants.iter().cloned());
    let aug_sol = clearing::solve(&combined, env)?;
    let total_base = base_sol.total_realized();
    let total_augmented = aug_sol.total_realized();
    let scale = base.iter().map(|b| b.assets).sum::<f64>();
    let tol = neutral_tol(scale);
    let total_direction = if total_augmented > total_base + tol {
        1
    } else if total_augmented < total_base - tol {
        -1
    } else {
        0
    };
    let mut checked_banks = Vec::new();
    let mut holds = true;
    for (i, b) in base.iter().enumerate() {
        let s = base_sol.demanded[i];
        let x0 = base_sol.realized[i];
        let x1 = aug_sol.realized_of(&b.id).unwrap();
        let t = neutral_tol(b.assets);
        match total_direction {
            1 if s < 0.0 => {
                checked_banks.push(b.id.clone());
                if x1 > x0 + t {
                    holds = false;
                }
            }
            -1 if s > 0.0 => {
                checked_banks.push(b.id.clone());
                if x1 < x0 - t {
                    holds = false;
                }
            }
            _ => {}
        }
    }
    Ok(AggregateMonotonicityReport {
        total_base,
        total_augmented,
        total_direction,
        checked_banks,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bank;

    fn env() -> MarketEnv {
        MarketEnv::new(0.02, 0.04, 0.0)
    }

    fn bank(id: &str, a: f64, theta: f64) -> Bank {
        Bank::specialized(id, a, theta * a, "k").unwrap()
    }

    #[test]
    fn singleton_cluster_delta_is_zero() {
        let b = bank("solo", 100.0, 0.08);
        let d = coe_delta(&[b], &Reference::Cms, &env()).unwrap();
        assert!(d.delta[0].abs() < 1e-9);
        assert_eq!(d.classification[0], CoeClass::Neutral);
    }

    #[test]
    fn pure_bailout_cluster_favors_reference() {
        // all demands negative at eps = 0
        let banks = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        let d = coe_delta(&banks, &Reference::Cms, &env()).unwrap();
        for (c, dl) in d.classification.iter().zip(&d.delta) {
            assert!(*dl > 0.0, "delta {dl}");
            assert_eq!(*c, CoeClass::FavorsReference);
        }
    }

    #[test]
    fn pure_bailin_cluster_favors_cluster() {
        // high shock: all demands positive
        let e = MarketEnv::new(0.02, 0.04, 0.08);
        let banks = vec![bank("a", 100.0, 0.05), bank("b", 80.0, 0.06)];
        let d = coe_delta(&banks, &Reference::Cms, &e).unwrap();
        for (c, dl) in d.classification.iter().zip(&d.delta) {
            assert!(*dl < 0.0, "delta {dl}");
            assert_eq!(*c, CoeClass::FavorsCluster);
        }
    }

    #[test]
    fn demo_partition_splits_by_sign() {
        let banks = vec![bank("i", 100.0, 0.08), bank("j", 50.0, 0.05)];
        let rep = classify_partition(&banks, &env()).unwrap();
        assert_eq!(rep.p_plus, vec!["j".to_string()]);
        assert_eq!(rep.p_minus, vec!["i".to_string()]);
        assert!(rep.all_hold, "{:?}", rep.checks);
        assert_eq!(rep.schelling_point_p_switch, Some(1.0));
        assert_eq!(rep.knightian_point_p_delta, Some(1.0));
    }

    #[test]
    fn all_negative_cluster_degenerates() {
        let banks = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        let rep = classify_partition(&banks, &env()).unwrap();
        assert!(rep.p_plus.is_empty());
        assert_eq!(rep.p_minus.len(), 2);
        assert!(rep.all_hold);
    }

    #[test]
    fn empty_entrant_set_is_identity() {
        let banks = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        let probe = entrant_effect(&banks, &[], &env()).unwrap();
        assert!(probe.marginal.iter().all(|m| *m == 0.0));
        assert!(probe.direction_holds);
    }

    #[test]
    fn bailin_base_with_bailin_entrant_shows_complementarity() {
        let e = MarketEnv::new(0.02, 0.04, 0.08);
        let base = vec![bank("a", 100.0, 0.05), bank("b", 80.0, 0.06)];
        let entrant = vec![bank("n", 60.0, 0.05)];
        let probe = entrant_effect(&base, &entrant, &e).unwrap();
        assert_eq!(probe.base_kind, BaseKind::PureBailIn);
        assert_eq!(probe.response, IncentiveResponse::Complementarity);
        assert!(probe.direction_holds, "marginal = {:?}", probe.marginal);
    }

    #[test]
    fn bailout_base_with_bailout_entrant_shows_substitution() {
        let base = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        let entrant = vec![bank("n", 60.0, 0.10)];
        let probe = entrant_effect(&base, &entrant, &env()).unwrap();
        assert_eq!(probe.base_kind, BaseKind::PureBailOut);
        assert_eq!(probe.response, IncentiveResponse::Substitution);
        assert!(probe.direction_holds, "marginal = {:?}", probe.marginal);
    }

    #[test]
    fn zero_demand_entrant_leaves_totals_unchanged() {
        let tb = 0.04;
        let base = vec![bank("a", 100.0, 0.09), bank("b", 80.0, 0.08)];
        // theta = theta_bar at eps = 0 gives s = 0; negligible assets keep
        // the devaluation term from moving the total
        let neutral = bank("z", 1e-10, tb);
        let rep = aggregate_monotonicity_check(&base, &[neutral], &env()).unwrap();
        assert_eq!(rep.total_direction, 0, "{rep:?}");
        assert!(rep.holds);
    }
}
