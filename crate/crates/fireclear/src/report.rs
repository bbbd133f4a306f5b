//! Structured run reports with deterministic human, JSON and CSV
//! rendering. The CLI is a thin adapter over these types, so command output
//! equals what direct library calls produce.

use crate::clearing::ClearingSolution;
use crate::counterfactual::{CoeClass, CoeDelta, PartitionClassification};
use crate::dynamics::{BoundsReport, PurityReport, TraceEvent};
use crate::model::Bank;
use crate::partition::{Chain, Decomposition, FiniteRiskReport};
use crate::transitions::{ExitSchedule, RegimeTimeline, ThresholdSet};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Format::Human),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other}; use human|json|csv")),
        }
    }
}

/// Header common to every command.
#[derive(Debug, Clone, Serialize)]
pub struct RunHeader {
    pub command: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub epsilon: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BankRow {
    pub id: String,
    pub assets: f64,
    pub equity: f64,
    pub leverage: f64,
    pub demanded: f64,
    pub realized: f64,
    pub state: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClearReport {
    pub header: RunHeader,
    pub rows: Vec<BankRow>,
    pub iterations: usize,
    pub residual: f64,
    pub certified: bool,
    pub method: String,
    pub q_negative_industries: Vec<String>,
}

pub fn bank_rows(banks: &[Bank], sol: &ClearingSolution) -> Vec<BankRow> {
    banks
        .iter()
        .map(|b| {
            let idx = sol.bank_ids.iter().position(|i| i == &b.id).unwrap();
            let x = sol.realized[idx];
            let s = sol.demanded[idx];
            let state = if x < 0.0 { "credit-creation" } else { "sale" };
            BankRow {
                id: b.id.clone(),
                assets: b.assets,
                equity: b.equity,
                leverage: b.leverage(),
                demanded: s,
                realized: x,
                state: state.to_string(),
            }
        })
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v:.9}")
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ClearReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("id,assets,equity,leverage,s,x,state\n");
                for r in &self.rows {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        csv_field(&r.id),
                        fmt(r.assets),
                        fmt(r.equity),
                        fmt(r.leverage),
                        fmt(r.demanded),
                        fmt(r.realized),
                        r.state
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!(
                    "{:<12} {:>14} {:>10} {:>10} {:>16} {:>16}  state\n",
                    "bank", "assets", "equity", "theta", "s", "x"
                ));
                for r in &self.rows {
                    out.push_str(&format!(
                        "{:<12} {:>14} {:>10} {:>10.6} {:>16} {:>16}  {}\n",
                        r.id,
                        fmt(r.assets),
                        fmt(r.equity),
                        r.leverage,
                        fmt(r.demanded),
                        fmt(r.realized),
                        r.state
                    ));
                }
                out.push_str(&format!(
                    "method {} iterations {} residual {:.3e} certified {}\n",
                    self.method, self.iterations, self.residual, self.certified
                ));
                if !self.q_negative_industries.is_empty() {
                    out.push_str(&format!(
                        "no-expansion violations: {}\n",
                        self.q_negative_industries.join(", ")
                    ));
                }
                out
            }
        }
    }
}

fn header_lines(h: &RunHeader) -> String {
    format!(
        "# command {} scenario {} seed {} epsilon {} beta {}\n",
        h.command, h.scenario_digest, h.seed, h.epsilon, h.beta
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CmsRow {
    pub id: String,
    pub demanded: f64,
    pub cms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CmsReport {
    pub header: RunHeader,
    pub rows: Vec<CmsRow>,
}

impl CmsReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("id,s,x_cms\n");
                for r in &self.rows {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        csv_field(&r.id),
                        fmt(r.demanded),
                        fmt(r.cms)
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!("{:<12} {:>16} {:>16}\n", "bank", "s", "x~"));
                for r in &self.rows {
                    out.push_str(&format!(
                        "{:<12} {:>16} {:>16}\n",
                        r.id,
                        fmt(r.demanded),
                        fmt(r.cms)
                    ));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoeReport {
    pub header: RunHeader,
    pub delta: CoeDelta,
    pub partition: PartitionClassification,
}

impl CoeReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("id,x_cluster,x_reference,delta,classification\n");
                for (i, id) in self.delta.bank_ids.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{:?}\n",
                        csv_field(id),
                        fmt(self.delta.cluster[i]),
                        fmt(self.delta.reference[i]),
                        fmt(self.delta.delta[i]),
                        self.delta.classification[i]
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!(
                    "{:<12} {:>16} {:>16} {:>16}  verdict\n",
                    "bank", "x cluster", "x reference", "delta"
                ));
                for (i, id) in self.delta.bank_ids.iter().enumerate() {
                    let verdict = match self.delta.classification[i] {
                        CoeClass::FavorsCluster => "favors-cluster",
                        CoeClass::FavorsReference => "favors-reference",
                        CoeClass::Neutral => "neutral",
                    };
                    out.push_str(&format!(
                        "{:<12} {:>16} {:>16} {:>16}  {}\n",
                        id,
                        fmt(self.delta.cluster[i]),
                        fmt(self.delta.reference[i]),
                        fmt(self.delta.delta[i]),
                        verdict
                    ));
                }
                out.push_str(&format!(
                    "P+ {{{}}}  P- {{{}}}  opposite-incentive checks {}\n",
                    self.partition.p_plus.join(", "),
                    self.partition.p_minus.join(", "),
                    if self.partition.all_hold { "pass" } else { "FAIL" }
                ));
                if let Some(p) = self.partition.schelling_point_p_switch {
                    out.push_str(&format!("schelling point p_switch = {p}\n"));
                }
                if let Some(p) = self.partition.knightian_point_p_delta {
                    out.push_str(&format!("knightian point p_delta = {p}\n"));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeReport {
    pub header: RunHeader,
    pub bailout: Vec<String>,
    pub bailin: Vec<String>,
    pub residual: Vec<String>,
    pub strong: Option<StrongReport>,
    pub finite_risk: FiniteRiskReport,
    pub rows: Vec<BankRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongReport {
    pub bailout_part: Vec<String>,
    pub negative_layer: Vec<String>,
    pub positive_layer: Vec<String>,
    pub bailin_part: Vec<String>,
}

pub fn name_parts(banks: &[Bank], d: &Decomposition) -> (Vec<String>, Vec<String>, Vec<String>) {
    let names = |v: &[usize]| v.iter().map(|&i| banks[i].id.clone()).collect::<Vec<_>>();
    (names(&d.bailout), names(&d.bailin), names(&d.residual))
}

impl DecomposeReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("id,part,s,x,theta,assets\n");
                let part_of = |id: &str| -> &str {
                    if self.bailout.iter().any(|b| b == id) {
                        "bailout"
                    } else if self.bailin.iter().any(|b| b == id) {
                        "bailin"
                    } else {
                        "residual"
                    }
                };
                for r in &self.rows {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        csv_field(&r.id),
                        part_of(&r.id),
                        fmt(r.demanded),
                        fmt(r.realized),
                        fmt(r.leverage),
                        fmt(r.assets)
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!("B(eps)   {{{}}}\n", self.bailout.join(", ")));
                out.push_str(&format!("B^I(eps) {{{}}}\n", self.bailin.join(", ")));
                out.push_str(&format!("residual {{{}}}\n", self.residual.join(", ")));
                if let Some(s) = &self.strong {
                    out.push_str(&format!(
                        "strong: bailout+ {{{}}} | neg layer {{{}}} | pos layer {{{}}} | bailin+ {{{}}}\n",
                        s.bailout_part.join(", "),
                        s.negative_layer.join(", "),
                        s.positive_layer.join(", "),
                        s.bailin_part.join(", ")
                    ));
                }
                out.push_str(&format!(
                    "finite-risk: supply {} demand {} slack {} holds {} perfect {}\n",
                    fmt(self.finite_risk.supply),
                    fmt(self.finite_risk.demand),
                    fmt(self.finite_risk.slack),
                    self.finite_risk.holds,
                    self.finite_risk.perfect
                ));
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub header: RunHeader,
    pub chain: Chain,
    pub head: Chain,
    pub tail: Chain,
}

impl ChainReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("position,id,s,x,class\n");
                for (i, id) in self.chain.bank_ids.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{:?}\n",
                        i,
                        csv_field(id),
                        fmt(self.chain.demanded[i]),
                        fmt(self.chain.realized[i]),
                        self.chain.class
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!("chain class {:?}\n", self.chain.class));
                for (i, id) in self.chain.bank_ids.iter().enumerate() {
                    out.push_str(&format!(
                        "{:>3} {:<12} s {:>16} x {:>16}\n",
                        i,
                        id,
                        fmt(self.chain.demanded[i]),
                        fmt(self.chain.realized[i])
                    ));
                }
                out.push_str(&format!(
                    "head {{{}}} ({:?})  tail {{{}}} ({:?})\n",
                    self.head.bank_ids.join(", "),
                    self.head.class,
                    self.tail.bank_ids.join(", "),
                    self.tail.class
                ));
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerfectReport {
    pub header: RunHeader,
    pub epochs: usize,
    pub subspaces: Vec<Vec<String>>,
    pub purity: PurityReport,
    pub bounds: BoundsReport,
    pub events: Vec<TraceEvent>,
}

impl PerfectReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("epoch,bank,from,to,rule\n");
                for e in &self.events {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        e.epoch,
                        csv_field(&e.bank),
                        e.from,
                        e.to,
                        match e.rule {
                            crate::dynamics::MoveRule::PartitionExit => "partition-exit",
                            crate::dynamics::MoveRule::IndividualExit => "individual-exit",
                            crate::dynamics::MoveRule::SwitchHold => "switch-hold",
                            crate::dynamics::MoveRule::StochasticTransfer =>
                                "stochastic-transfer",
                        }
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!("stabilized after {} epochs\n", self.epochs));
                for (i, members) in self.subspaces.iter().enumerate() {
                    out.push_str(&format!(
                        "P_{i} {{{}}} {:?}\n",
                        members.join(", "),
                        self.purity.classes[i]
                    ));
                }
                out.push_str(&format!(
                    "purity: all_pure {} sign_law {} fixpoint {} equivalence {}\n",
                    self.purity.all_pure,
                    self.purity.sign_law_holds,
                    self.purity.fixpoint,
                    self.purity.equivalence_holds
                ));
                out.push_str(&format!(
                    "bounds: observed {} <= {} within {}; first solo bail-in {:?} <= {}\n",
                    self.bounds.observed,
                    self.bounds.upper,
                    self.bounds.within_bounds,
                    self.bounds.first_solo_bailin,
                    self.bounds.first_solo_upper
                ));
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub bank: String,
    pub demanded: f64,
    pub realized: f64,
    pub cms: f64,
    pub regime: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub header: RunHeader,
    pub rows: Vec<SweepRow>,
    pub timeline: Option<RegimeTimeline>,
    pub exits: Option<ExitSchedule>,
}

impl SweepReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("epsilon,bank,s,x,x_cms,regime\n");
                for r in &self.rows {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        fmt(r.epsilon),
                        csv_field(&r.bank),
                        fmt(r.demanded),
                        fmt(r.realized),
                        fmt(r.cms),
                        r.regime
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                if let Some(tl) = &self.timeline {
                    out.push_str(&format!(
                        "pair type {:?}; {} regimes; matches expected {}\n",
                        tl.pair_type,
                        tl.segments.len(),
                        tl.matches_expected
                    ));
                    for (i, seg) in tl.segments.iter().enumerate() {
                        out.push_str(&format!(
                            "regime {}: eps in [{}, {}] pattern {:?} ordering {}\n",
                            i + 1,
                            fmt(seg.eps_lo),
                            fmt(seg.eps_hi),
                            seg.pattern,
                            seg.ordering_ok
                        ));
                    }
                }
                if let Some(ex) = &self.exits {
                    out.push_str(&format!(
                        "exit schedule (ascending-leverage {} one-per-threshold {}):\n",
                        ex.ascending_leverage_order, ex.one_member_per_threshold
                    ));
                    for (eps, id) in &ex.exits {
                        out.push_str(&format!("  eps = {} -> {} exits\n", fmt(*eps), id));
                    }
                }
                out.push_str(&format!("{} sweep rows (csv/json carry the table)\n", self.rows.len()));
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdsReport {
    pub header: RunHeader,
    pub set: ThresholdSet,
}

impl ThresholdsReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("id,eps_s_zero,eps_x_zero,beta_x_zero\n");
                for b in &self.set.per_bank {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        csv_field(&b.bank_id),
                        fmt(b.eps_s_zero),
                        b.eps_x_zero.map(fmt).unwrap_or_else(|| "absent".into()),
                        b.beta_x_zero.map(fmt).unwrap_or_else(|| "absent".into())
                    ));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                out.push_str(&format!(
                    "{:<12} {:>14} {:>14} {:>14}\n",
                    "bank", "eps(s=0)", "eps(x=0)", "beta(x=0)"
                ));
                for b in &self.set.per_bank {
                    out.push_str(&format!(
                        "{:<12} {:>14} {:>14} {:>14}\n",
                        b.bank_id,
                        fmt(b.eps_s_zero),
                        b.eps_x_zero.map(fmt).unwrap_or_else(|| "absent".into()),
                        b.beta_x_zero.map(fmt).unwrap_or_else(|| "absent".into())
                    ));
                }
                if let Some(ig) = &self.set.ignition {
                    out.push_str(&format!(
                        "ignition: cms-variant {} (lhs {}) cluster-variant {} (lhs {}, rhs {})\n",
                        ig.cms_variant,
                        fmt(ig.cms_lhs),
                        ig.cluster_variant,
                        fmt(ig.cluster_lhs),
                        fmt(ig.rhs)
                    ));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoCheckRow {
    pub position: usize,
    pub roundtrip_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoCheckReport {
    pub header: RunHeader,
    pub rows: Vec<IsoCheckRow>,
    pub max_error: f64,
}

impl IsoCheckReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).unwrap(),
            Format::Csv => {
                let mut out = String::from("position,roundtrip_error\n");
                for r in &self.rows {
                    out.push_str(&format!("{},{:e}\n", r.position, r.roundtrip_error));
                }
                out
            }
            Format::Human => {
                let mut out = header_lines(&self.header);
                for r in &self.rows {
                    out.push_str(&format!(
                        "position {}: round-trip error {:.3e}\n",
                        r.position, r.roundtrip_error
                    ));
                }
                out.push_str(&format!("max error {:.3e}\n", self.max_error));
                out
            }
        }
    }
}
