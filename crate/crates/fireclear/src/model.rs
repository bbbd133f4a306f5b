//! Balance-sheet data model, investment-network matrices, and structural
//! reductions (monopoly/specialization elimination).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// One bank's balance sheet and its allocation across industries.
///
/// Invariants enforced at construction: assets strictly positive, full
/// allocation of assets across industries, leverage `E/A` inside `(0, 1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bank {
    pub id: String,
    pub assets: f64,
    pub equity: f64,
    /// industry id -> invested amount; keys sorted for determinism.
    pub investments: BTreeMap<String, f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("bank {id}: assets must be strictly positive (got {assets})")]
    NonPositiveAssets { id: String, assets: f64 },
    #[error("bank {id}: leverage {leverage} outside (0, 1)")]
    LeverageOutOfRange { id: String, leverage: f64 },
    #[error("bank {id}: liabilities A - E = {liabilities} negative")]
    NegativeLiabilities { id: String, liabilities: f64 },
    #[error("bank {id}: investments sum to {total}, assets are {assets}")]
    IncompleteAllocation { id: String, total: f64, assets: f64 },
    #[error("bank {id}: negative investment {amount} in industry {industry}")]
    NegativeInvestment {
        id: String,
        industry: String,
        amount: f64,
    },
    #[error("duplicate bank id {0}")]
    DuplicateBank(String),
    #[error("no banks")]
    Empty,
    #[error("no industries")]
    NoIndustries,
    #[error("industry {0} has zero total value")]
    EmptyIndustry(String),
}

const ALLOC_TOL: f64 = 1e-9;

impl Bank {
    pub fn new(
        id: impl Into<String>,
        assets: f64,
        equity: f64,
        investments: BTreeMap<String, f64>,
    ) -> Result<Self, ModelError> {
        let bank = Bank {
            id: id.into(),
            assets,
            equity,
            investments,
        };
        bank.validate()?;
        Ok(bank)
    }

    /// Single-industry convenience constructor.
    pub fn specialized(
        id: impl Into<String>,
        assets: f64,
        equity: f64,
        industry: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let mut inv = BTreeMap::new();
        inv.insert(industry.into(), assets);
        Bank::new(id, assets, equity, inv)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.assets > 0.0) {
            return Err(ModelError::NonPositiveAssets {
                id: self.id.clone(),
                assets: self.assets,
            });
        }
        let lev = self.leverage();
        if !(lev > 0.0 && lev < 1.0) {
            return Err(ModelError::LeverageOutOfRange {
                id: self.id.clone(),
                leverage: lev,
            });
        }
        if self.liabilities() < 0.0 {
            return Err(ModelError::NegativeLiabilities {
                id: self.id.clone(),
                liabilities: self.liabilities(),
            });
        }
        for (k, &v) in &self.investments {
            if v < 0.0 {
                return Err(ModelError::NegativeInvestment {
                    id: self.id.clone(),
                    industry: k.clone(),
                    amount: v,
                });
            }
        }
        let total: f64 = self.investments.values().sum();
        if (total - self.assets).abs() > ALLOC_TOL * self.assets.max(1.0) {
            return Err(ModelError::IncompleteAllocation {
                id: self.id.clone(),
                total,
                assets: self.assets,
            });
        }
        Ok(())
    }

    /// Leverage ratio theta = E / A.
    pub fn leverage(&self) -> f64 {
        self.equity / self.assets
    }

    /// L = A - E.
    pub fn liabilities(&self) -> f64 {
        self.assets - self.equity
    }
}

/// Outcome of applying an exogenous shock to one balance sheet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockedLeverage {
    pub leverage: f64,
    /// Shock at or above the pre-shock leverage ratio wipes out equity.
    pub equity_wipeout: bool,
}

/// Post-shock leverage ratio (E - eps*A) / ((1 - eps) * A).
///
/// Strictly below the pre-shock ratio whenever A > E and eps > 0.
pub fn leverage_after_shock(bank: &Bank, epsilon: f64) -> ShockedLeverage {
    assert!((0.0..1.0).contains(&epsilon), "shock outside [0, 1)");
    let lev = (bank.equity - epsilon * bank.assets) / ((1.0 - epsilon) * bank.assets);
    ShockedLeverage {
        leverage: lev,
        equity_wipeout: lev <= 0.0,
    }
}

/// Market environment shared by every solve: devaluation parameter,
/// regulatory leverage, shock size, switch probability and the demand
/// modularity variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketEnv {
    pub beta: f64,
    pub theta_bar: f64,
    pub epsilon: f64,
    #[serde(default = "default_p_switch")]
    pub p_switch: f64,
    #[serde(default)]
    pub modularity: Modularity,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_p_switch() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modularity {
    #[default]
    Submodular,
    Supermodular,
}

impl MarketEnv {
    pub fn new(beta: f64, theta_bar: f64, epsilon: f64) -> Self {
        MarketEnv {
            beta,
            theta_bar,
            epsilon,
            p_switch: 1.0,
            modularity: Modularity::Submodular,
            rng_seed: 0,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut e = self.clone();
        e.epsilon = epsilon;
        e
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        let mut e = self.clone();
        e.beta = beta;
        e
    }
}

/// A full problem instance: bank population plus market environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub banks: Vec<Bank>,
    pub market: MarketEnv,
}

/// Per-industry values together with the disposal matrix Pi (n x k) and the
/// contagion matrix P (k x n).
#[derive(Debug, Clone)]
pub struct IndustryPanel {
    /// Industry ids, sorted; column order of `disposal`, row order of `contagion`.
    pub industries: Vec<String>,
    /// Bank ids in input order; row order of `disposal`.
    pub bank_ids: Vec<String>,
    /// M_k = sum_i V_ik.
    pub values: Vec<f64>,
    /// pi_ik = V_ik / A_i; rows sum to 1.
    pub disposal: Vec<Vec<f64>>,
    /// p_ki = V_ik / M_k; each industry row sums to 1.
    pub contagion: Vec<Vec<f64>>,
    /// Raw investment amounts V_ik in the same index layout.
    pub amounts: Vec<Vec<f64>>,
}

/// Build M, Pi and P from a bank population.
pub fn build_matrices(banks: &[Bank]) -> Result<IndustryPanel, ModelError> {
    if banks.is_empty() {
        return Err(ModelError::Empty);
    }
    let mut seen = std::collections::BTreeSet::new();
    for b in banks {
        b.validate()?;
        if !seen.insert(b.id.clone()) {
            return Err(ModelError::DuplicateBank(b.id.clone()));
        }
    }
    let mut industries: Vec<String> = banks
        .iter()
        .flat_map(|b| b.investments.keys().cloned())
        .collect();
    industries.sort();
    industries.dedup();
    if industries.is_empty() {
        return Err(ModelError::NoIndustries);
    }
    let n = banks.len();
    let k = industries.len();
    let mut amounts = vec![vec![0.0; k]; n];
    for (i, b) in banks.iter().enumerate() {
        for (l, ind) in industries.iter().enumerate() {
            amounts[i][l] = b.investments.get(ind).copied().unwrap_or(0.0);
        }
    }
    let mut values = vec![0.0; k];
    for l in 0..k {
        values[l] = (0..n).map(|i| amounts[i][l]).sum();
        if values[l] <= 0.0 {
            return Err(ModelError::EmptyIndustry(industries[l].clone()));
        }
    }
    let mut disposal = vec![vec![0.0; k]; n];
    let mut contagion = vec![vec![0.0; n]; k];
    for i in 0..n {
        for l in 0..k {
            if amounts[i][l] > 0.0 {
                disposal[i][l] = amounts[i][l] / banks[i].assets;
                contagion[l][i] = amounts[i][l] / values[l];
            }
        }
    }
    Ok(IndustryPanel {
        industries,
        bank_ids: banks.iter().map(|b| b.id.clone()).collect(),
        values,
        disposal,
        contagion,
        amounts,
    })
}

/// Monopoly and specialization positions found in a panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PositionReport {
    /// (bank id, industry ids) with p_ki = 1; a bank's multiple monopolies
    /// are merged into one entry.
    pub monopolies: Vec<(String, Vec<String>)>,
    /// (bank id, industry id) with pi_ik = 1.
    pub specializations: Vec<(String, String)>,
}

const UNITY_TOL: f64 = 1e-12;

/// Scan the panel for monopoly (p_ki = 1) and specialization (pi_ik = 1)
/// positions.
pub fn detect_positions(panel: &IndustryPanel) -> PositionReport {
    let n = panel.bank_ids.len();
    let k = panel.industries.len();
    let mut monopolies: Vec<(String, Vec<String>)> = Vec::new();
    for i in 0..n {
        let mut inds = Vec::new();
        for l in 0..k {
            if (panel.contagion[l][i] - 1.0).abs() <= UNITY_TOL {
                inds.push(panel.industries[l].clone());
            }
        }
        if !inds.is_empty() {
            monopolies.push((panel.bank_ids[i].clone(), inds));
        }
    }
    let mut specializations = Vec::new();
    for i in 0..n {
        for l in 0..k {
            if (panel.disposal[i][l] - 1.0).abs() <= UNITY_TOL {
                specializations.push((panel.bank_ids[i].clone(), panel.industries[l].clone()));
            }
        }
    }
    PositionReport {
        monopolies,
        specializations,
    }
}

/// Result of the monopoly/specialization elimination procedure.
#[derive(Debug, Clone)]
pub struct ReducedPanel {
    /// Surviving bank ids (row order of `reduced`).
    pub bank_ids: Vec<String>,
    /// Surviving industry labels; merged monopoly columns carry a joined label.
    pub industries: Vec<String>,
    /// The reduced disposal matrix, a submatrix of Pi with monopoly columns
    /// of one bank merged by summation before deletion.
    pub reduced: Vec<Vec<f64>>,
    /// Sign comparison of det(Pi) vs det(reduced), when both are square.
    pub determinant_check: DeterminantCheck,
    /// Rounds of elimination applied.
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeterminantCheck {
    /// Both matrices square: signs of the two determinants.
    Compared { sign_full: i8, sign_reduced: i8 },
    /// Original matrix not square.
    FullNotSquare,
    /// Reduced matrix not square (or empty) so the check is inapplicable.
    ReducedNotSquare,
}

fn det_sign(m: &[Vec<f64>]) -> i8 {
    let d = determinant(m);
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// Plain LU determinant with partial pivoting; fine for the small matrices
/// handled here. Exact-arithmetic cross-checks live in the tests.
pub fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// Eliminate monopolized columns plus monopolist rows, then specialist rows
/// plus their columns, iterating until no position survives. A bank's
/// multiple monopoly columns are summed into one entry before deletion.
pub fn reduce_matrix(panel: &IndustryPanel) -> ReducedPanel {
    let full_square = panel.bank_ids.len() == panel.industries.len();
    let sign_full = if full_square {
        det_sign(&panel.disposal)
    } else {
        0
    };

    let mut rows: Vec<usize> = (0..panel.bank_ids.len()).collect();
    let mut cols: Vec<Vec<usize>> = (0..panel.industries.len()).map(|l| vec![l]).collect();
    // matrix entries tracked as raw amounts so merged columns stay exact
    let mut rounds = 0;
    loop {
        let mut changed = false;
        // monopolies: a column group entirely owned by one surviving bank
        let mut mono_of_bank: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (cg_idx, cg) in cols.iter().enumerate() {
            let mut owner: Option<usize> = None;
            let mut sole = true;
            for &r in &rows {
                let v: f64 = cg.iter().map(|&l| panel.amounts[r][l]).sum();
                if v > 0.0 {
                    if owner.is_none() {
                        owner = Some(r);
                    } else if owner != Some(r) {
                        sole = false;
                        break;
                    }
                }
            }
            if sole {
                if let Some(r) = owner {
                    mono_of_bank.entry(r).or_default().push(cg_idx);
                }
            }
        }
        if !mono_of_bank.is_empty() {
            let dead_rows: Vec<usize> = mono_of_bank.keys().copied().collect();
            let dead_cols: Vec<usize> = mono_of_bank.values().flatten().copied().collect();
            rows.retain(|r| !dead_rows.contains(r));
            let mut kept = Vec::new();
            for (idx, cg) in cols.into_iter().enumerate() {
                if !dead_cols.contains(&idx) {
                    kept.push(cg);
                }
            }
            cols = kept;
            changed = true;
        }
        // specializations: a surviving bank fully invested in one column group
        let mut dead_rows = Vec::new();
        let mut dead_cols = Vec::new();
        for &r in &rows {
            let mut nonzero_groups = Vec::new();
            for (cg_idx, cg) in cols.iter().enumerate() {
                let v: f64 = cg.iter().map(|&l| panel.amounts[r][l]).sum();
                if v > 0.0 {
                    nonzero_groups.push(cg_idx);
                }
            }
            if nonzero_groups.len() == 1 && !dead_cols.contains(&nonzero_groups[0]) {
                dead_rows.push(r);
                dead_cols.push(nonzero_groups[0]);
            }
        }
        if !dead_rows.is_empty() {
            rows.retain(|r| !dead_rows.contains(r));
            let mut kept = Vec::new();
            for (idx, cg) in cols.into_iter().enumerate() {
                if !dead_cols.contains(&idx) {
                    kept.push(cg);
                }
            }
            cols = kept;
            changed = true;
        }
        if changed {
            rounds += 1;
        } else {
            break;
        }
    }

    let reduced: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            cols.iter()
                .map(|cg| cg.iter().map(|&l| panel.disposal[r][l]).sum())
                .collect()
        })
        .collect();
    let determinant_check = if !full_square {
        DeterminantCheck::FullNotSquare
    } else if rows.len() != cols.len() || rows.is_empty() {
        DeterminantCheck::ReducedNotSquare
    } else {
        DeterminantCheck::Compared {
            sign_full,
            sign_reduced: det_sign(&reduced),
        }
    };
    ReducedPanel {
        bank_ids: rows.iter().map(|&r| panel.bank_ids[r].clone()).collect(),
        industries: cols
            .iter()
            .map(|cg| {
                cg.iter()
                    .map(|&l| panel.industries[l].clone())
                    .collect::<Vec<_>>()
                    .join("+")
            })
            .collect(),
        reduced,
        determinant_check,
        rounds,
    }
}

/// Report-only scenario validation: structural invariants plus the shock
/// range required by the perfection dynamics.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub dynamics_warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the scenario invariants; with `for_dynamics`, additionally check
/// the shock range (E[theta] - tb)/(1 - tb) <= eps <= max (theta_i - tb)/(1 - tb)
/// under which at least one but not every bank fails.
pub fn validate_scenario(scenario: &Scenario, for_dynamics: bool) -> ValidationReport {
    let mut violations = Vec::new();
    let mut dynamics_warnings = Vec::new();
    let m = &scenario.market;
    if !(m.theta_bar > 0.0 && m.theta_bar < 1.0) {
        violations.push(format!("theta_bar {} outside (0, 1)", m.theta_bar));
    }
    if !(0.0..1.0).contains(&m.epsilon) {
        violations.push(format!("epsilon {} outside [0, 1)", m.epsilon));
    }
    if m.beta < 0.0 {
        violations.push(format!("beta {} negative", m.beta));
    }
    if !(0.0..=1.0).contains(&m.p_switch) {
        violations.push(format!("p_switch {} outside [0, 1]", m.p_switch));
    }
    if scenario.banks.is_empty() {
        violations.push("no banks".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for b in &scenario.banks {
        if let Err(e) = b.validate() {
            violations.push(e.to_string());
        }
        if !seen.insert(b.id.clone()) {
            violations.push(format!("duplicate bank id {}", b.id));
        }
        if b.validate().is_ok() && b.leverage() < m.theta_bar {
            violations.push(format!(
                "bank {}: leverage {} below regulatory theta_bar {}",
                b.id,
                b.leverage(),
                m.theta_bar
            ));
        }
    }
    if violations.is_empty() && for_dynamics && !scenario.banks.is_empty() {
        let thetas: Vec<f64> = scenario.banks.iter().map(|b| b.leverage()).collect();
        let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
        let lo = (mean - m.theta_bar) / (1.0 - m.theta_bar);
        let hi = thetas
            .iter()
            .map(|t| (t - m.theta_bar) / (1.0 - m.theta_bar))
            .fold(f64::NEG_INFINITY, f64::max);
        if m.epsilon < lo || m.epsilon > hi {
            dynamics_warnings.push(format!(
                "epsilon {} outside dynamics range [{}, {}]",
                m.epsilon, lo, hi
            ));
        }
    }
    ValidationReport {
        violations,
        dynamics_warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_banks() -> Vec<Bank> {
        let mut a_inv = BTreeMap::new();
        a_inv.insert("1".to_string(), 15.0);
        a_inv.insert("2".to_string(), 10.0);
        let a = Bank::new("A", 25.0, 2.0, a_inv).unwrap();
        let b = Bank::specialized("B", 20.0, 1.5, "2").unwrap();
        vec![a, b]
    }

    #[test]
    fn shock_identity_at_zero() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let r = leverage_after_shock(&b, 0.0);
        assert_eq!(r.leverage, 0.08);
        assert!(!r.equity_wipeout);
    }

    #[test]
    fn shock_small() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let r = leverage_after_shock(&b, 0.02);
        assert!((r.leverage - 6.0 / 98.0).abs() < 1e-15);
        assert!(r.leverage < b.leverage());
    }

    #[test]
    fn shock_wipeout_boundary() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let r = leverage_after_shock(&b, 0.08);
        assert_eq!(r.leverage, 0.0);
        assert!(r.equity_wipeout);
    }

    #[test]
    fn shock_strictly_decreasing_in_eps() {
        let b = Bank::specialized("i", 100.0, 8.0, "k").unwrap();
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let eps = step as f64 * 0.001;
            let lev = leverage_after_shock(&b, eps).leverage;
            assert!(lev < prev);
            prev = lev;
        }
    }

    #[test]
    fn fig1_matrices() {
        let panel = build_matrices(&fig1_banks()).unwrap();
        assert_eq!(panel.industries, vec!["1", "2"]);
        assert!((panel.disposal[0][0] - 0.6).abs() < 1e-15);
        assert!((panel.disposal[0][1] - 0.4).abs() < 1e-15);
        // industry 2 split 10 / 30 and 20 / 30
        assert!((panel.contagion[1][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((panel.contagion[1][1] - 2.0 / 3.0).abs() < 1e-15);
        // sum_k M_k p_ki = A_i
        for (i, b) in fig1_banks().iter().enumerate() {
            let a: f64 = (0..2).map(|l| panel.values[l] * panel.contagion[l][i]).sum();
            assert!((a - b.assets).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_single_bank_panel() {
        let b = Bank::specialized("solo", 10.0, 1.0, "only").unwrap();
        let panel = build_matrices(&[b]).unwrap();
        assert_eq!(panel.disposal, vec![vec![1.0]]);
        assert_eq!(panel.contagion, vec![vec![1.0]]);
    }

    #[test]
    fn fig1_positions() {
        let panel = build_matrices(&fig1_banks()).unwrap();
        let rep = detect_positions(&panel);
        assert_eq!(rep.monopolies, vec![("A".to_string(), vec!["1".to_string()])]);
        assert_eq!(
            rep.specializations,
            vec![("B".to_string(), "2".to_string())]
        );
    }

    #[test]
    fn identity_matrix_positions() {
        let a = Bank::specialized("a", 5.0, 0.5, "ia").unwrap();
        let b = Bank::specialized("b", 7.0, 0.5, "ib").unwrap();
        let panel = build_matrices(&[a, b]).unwrap();
        let rep = detect_positions(&panel);
        assert_eq!(rep.monopolies.len(), 2);
        assert_eq!(rep.specializations.len(), 2);
    }

    #[test]
    fn dense_positive_matrix_has_no_positions() {
        let mk = |id: &str, v1: f64, v2: f64, e: f64| {
            let mut inv = BTreeMap::new();
            inv.insert("1".to_string(), v1);
            inv.insert("2".to_string(), v2);
            Bank::new(id, v1 + v2, e, inv).unwrap()
        };
        let banks = vec![mk("a", 3.0, 4.0, 0.5), mk("b", 5.0, 2.0, 0.4)];
        let panel = build_matrices(&banks).unwrap();
        let rep = detect_positions(&panel);
        assert!(rep.monopolies.is_empty());
        assert!(rep.specializations.is_empty());
    }

    #[test]
    fn fig1_reduction_is_empty() {
        let panel = build_matrices(&fig1_banks()).unwrap();
        let red = reduce_matrix(&panel);
        assert!(red.bank_ids.is_empty());
        assert!(red.industries.is_empty());
    }

    #[test]
    fn reduction_noop_without_positions() {
        let mk = |id: &str, v1: f64, v2: f64| {
            let mut inv = BTreeMap::new();
            inv.insert("1".to_string(), v1);
            inv.insert("2".to_string(), v2);
            Bank::new(id, v1 + v2, 0.1 * (v1 + v2), inv).unwrap()
        };
        let banks = vec![mk("a", 3.0, 4.0), mk("b", 5.0, 2.0)];
        let panel = build_matrices(&banks).unwrap();
        let red = reduce_matrix(&panel);
        assert_eq!(red.bank_ids.len(), 2);
        assert_eq!(red.reduced, panel.disposal);
        match red.determinant_check {
            DeterminantCheck::Compared {
                sign_full,
                sign_reduced,
            } => assert_eq!(sign_full, sign_reduced),
            ref other => panic!("expected compared, got {:?}", other),
        }
    }

    #[test]
    fn zero_asset_bank_rejected() {
        let r = Bank::specialized("z", 0.0, 0.0, "k");
        assert!(matches!(r, Err(ModelError::NonPositiveAssets { .. })));
    }

    #[test]
    fn validate_demo_scenario() {
        let banks = vec![
            Bank::specialized("i", 100.0, 8.0, "k").unwrap(),
            Bank::specialized("j", 50.0, 2.5, "k").unwrap(),
        ];
        let sc = Scenario {
            banks,
            market: MarketEnv::new(0.02, 0.04, 0.0),
        };
        let rep = validate_scenario(&sc, false);
        assert!(rep.is_valid(), "{:?}", rep.violations);
    }

    #[test]
    fn validate_regulatory_ordering_violation() {
        let banks = vec![Bank::specialized("j", 100.0, 5.0, "k").unwrap()];
        let sc = Scenario {
            banks,
            market: MarketEnv::new(0.0, 0.10, 0.0),
        };
        let rep = validate_scenario(&sc, false);
        assert!(!rep.is_valid());
        assert!(rep.violations.iter().any(|v| v.contains("below regulatory")));
    }

    #[test]
    fn validate_dynamics_range_warning() {
        let banks = vec![Bank::specialized("i", 100.0, 8.0, "k").unwrap()];
        let mut market = MarketEnv::new(0.0, 0.04, 0.9);
        market.epsilon = 0.9;
        let sc = Scenario { banks, market };
        let rep = validate_scenario(&sc, true);
        assert!(rep.is_valid());
        assert_eq!(rep.dynamics_warnings.len(), 1);
    }
}
