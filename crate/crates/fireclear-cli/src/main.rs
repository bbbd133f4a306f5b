//! Command-line front end: scenario ingestion, command dispatch, report
//! emission. Exit codes: 0 success, 1 validation, 2 solver, 3 internal.

use clap::{Args, Parser, Subcommand};
use fireclear::clearing;
use fireclear::counterfactual::{self, Reference};
use fireclear::dynamics;
use fireclear::model::{validate_scenario, MarketEnv, Scenario};
use fireclear::partition;
use fireclear::report::*;
use fireclear::scenario;
use fireclear::transitions;
use rand_support::seeded_rng;
use std::path::PathBuf;
use std::process::ExitCode;

mod rand_support {
    use rand::SeedableRng;
    pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }
}

#[derive(Parser)]
#[command(name = "fireclear", about = "Fire-sale clearing and homophily dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML)
    scenario: PathBuf,
    /// Override the scenario's shock size
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the devaluation parameter
    #[arg(long)]
    beta: Option<f64>,
    /// Output format
    #[arg(long, default_value = "human", value_parser = parse_format)]
    format: Format,
    /// Override the scenario's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Solve the clearing system and print the s/x table
    Clear(Common),
    /// Per-bank counterfactual monopoly solutions
    Cms(Common),
    /// Crowding-out deltas against the counterfactual monopoly baseline
    Coe(Common),
    /// Weak (and optionally strong) decomposition of the population
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Sample fraction of outside negative-demand banks into B(eps)
        #[arg(long)]
        sigma: Option<f64>,
        /// Sample fraction of outside nonnegative-demand banks into B^I(eps)
        #[arg(long)]
        sigma_i: Option<f64>,
    },
    /// Leverage chain with regular-head/pre-regular-tail split
    Chain(Common),
    /// Run perfection dynamics to stability and export the trace
    Perfect {
        #[command(flatten)]
        common: Common,
        /// Stop after this many epochs (0 echoes the initial state)
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Shock or liquidity sweeps: regime timelines and exit schedules
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Shock range lo:hi:steps
        #[arg(long, value_parser = parse_range)]
        epsilon_range: Option<(f64, f64, usize)>,
        /// Liquidity range lo:hi:steps
        #[arg(long, value_parser = parse_range)]
        beta_range: Option<(f64, f64, usize)>,
    },
    /// Per-bank threshold set and ignition predicates
    Thresholds(Common),
    /// Isomorphism round-trip checks along the chain
    Isocheck(Common),
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:steps".into());
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("hi: {e}"))?;
    let steps: usize = parts[2].parse().map_err(|e| format!("steps: {e}"))?;
    Ok((lo, hi, steps))
}

enum CliError {
    Validation(String),
    Solver(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<scenario::ScenarioError> for CliError {
    fn from(e: scenario::ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<clearing::SolveError> for CliError {
    fn from(e: clearing::SolveError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<partition::PartitionError> for CliError {
    fn from(e: partition::PartitionError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<dynamics::DynamicsError> for CliError {
    fn from(e: dynamics::DynamicsError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<transitions::TransitionsError> for CliError {
    fn from(e: transitions::TransitionsError) -> Self {
        CliError::Solver(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load(common: &Common) -> Result<(Scenario, MarketEnv, RunHeader), CliError> {
    let mut sc = scenario::load(&common.scenario)?;
    if let Some(eps) = common.epsilon {
        sc.market.epsilon = eps;
    }
    if let Some(beta) = common.beta {
        sc.market.beta = beta;
    }
    if let Some(seed) = common.seed {
        sc.market.rng_seed = seed;
    }
    let report = validate_scenario(&sc, false);
    if !report.is_valid() {
        return Err(CliError::Validation(report.violations.join("; ")));
    }
    let env = sc.market.clone();
    let header = RunHeader {
        command: String::new(),
        scenario_digest: scenario::digest(&sc),
        seed: env.rng_seed,
        epsilon: env.epsilon,
        beta: env.beta,
    };
    Ok((sc, env, header))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Clear(common) => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "clear".into();
            let sol = clearing::solve(&sc.banks, &env)?;
            let rows = bank_rows(&sc.banks, &sol);
            let rep = ClearReport {
                header,
                rows,
                iterations: sol.iterations,
                residual: sol.residual,
                certified: sol.certified,
                method: format!("{:?}", sol.method),
                q_negative_industries: sol.q_negative_industries.clone(),
            };
            Ok(rep.render(common.format))
        }
        Command::Cms(common) => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "cms".into();
            let mut rows = Vec::new();
            for b in &sc.banks {
                let s = clearing::liquidation_demand(b, &env);
                let x = clearing::cms_solve(b, &env, s)?;
                rows.push(CmsRow {
                    id: b.id.clone(),
                    demanded: s,
                    cms: x,
                });
            }
            let rep = CmsReport { header, rows };
            Ok(rep.render(common.format))
        }
        Command::Coe(common) => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "coe".into();
            let delta = counterfactual::coe_delta(&sc.banks, &Reference::Cms, &env)?;
            let partition = counterfactual::classify_partition(&sc.banks, &env)?;
            let rep = CoeReport {
                header,
                delta,
                partition,
            };
            Ok(rep.render(common.format))
        }
        Command::Decompose {
            common,
            sigma,
            sigma_i,
        } => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "decompose".into();
            let d = if sigma.is_some() || sigma_i.is_some() {
                let mut rng = seeded_rng(env.rng_seed);
                partition::strong_decompose(
                    &sc.banks,
                    &env,
                    sigma.unwrap_or(0.0),
                    sigma_i.unwrap_or(0.0),
                    &mut rng,
                )?
            } else {
                partition::weak_decompose(&sc.banks, &env)?
            };
            let (bailout, bailin, residual) = name_parts(&sc.banks, &d);
            let strong = d.strong.as_ref().map(|s| {
                let names =
                    |v: &[usize]| v.iter().map(|&i| sc.banks[i].id.clone()).collect::<Vec<_>>();
                StrongReport {
                    bailout_part: names(&s.bailout_part),
                    negative_layer: names(&s.negative_layer),
                    positive_layer: names(&s.positive_layer),
                    bailin_part: names(&s.bailin_part),
                }
            });
            let finite_risk = partition::finite_risk_check(&sc.banks, &env)?;
            let sol = clearing::solve(&sc.banks, &env)?;
            let rows = bank_rows(&sc.banks, &sol);
            let rep = DecomposeReport {
                header,
                bailout,
                bailin,
                residual,
                strong,
                finite_risk,
                rows,
            };
            Ok(rep.render(common.format))
        }
        Command::Chain(common) => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "chain".into();
            let chain = partition::chain_of(&sc.banks, &env)?;
            let (head, tail) = partition::chain_decompose(&sc.banks, &env)?;
            let rep = ChainReport {
                header,
                chain,
                head,
                tail,
            };
            Ok(rep.render(common.format))
        }
        Command::Perfect { common, max_epochs } => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "perfect".into();
            if let Some(0) = max_epochs {
                let state = dynamics::initial_state(&sc.banks, &env)?;
                let names: Vec<Vec<String>> = state
                    .subspaces
                    .iter()
                    .map(|s| s.members.iter().map(|&i| sc.banks[i].id.clone()).collect())
                    .collect();
                let purity = dynamics::purity_check(&state, &sc.banks, &env)?;
                let trace = dynamics::Trace {
                    snapshots: vec![state.memberships()],
                    events: vec![],
                    stabilized_at: 0,
                };
                let bounds = dynamics::iteration_bounds(&sc, &state, &trace)?;
                let rep = PerfectReport {
                    header,
                    epochs: 0,
                    subspaces: names,
                    purity,
                    bounds,
                    events: vec![],
                };
                return Ok(rep.render(common.format));
            }
            let (state, trace) = dynamics::run_to_stability(&sc)?;
            let names: Vec<Vec<String>> = state
                .subspaces
                .iter()
                .map(|s| s.members.iter().map(|&i| sc.banks[i].id.clone()).collect())
                .collect();
            let purity = dynamics::purity_check(&state, &sc.banks, &env)?;
            let bounds = dynamics::iteration_bounds(&sc, &state, &trace)?;
            let rep = PerfectReport {
                header,
                epochs: trace.stabilized_at,
                subspaces: names,
                purity,
                bounds,
                events: trace.events,
            };
            Ok(rep.render(common.format))
        }
        Command::Sweep {
            common,
            epsilon_range,
            beta_range,
        } => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "sweep".into();
            let mut rows = Vec::new();
            let mut timeline = None;
            let mut exits = None;
            if let Some((lo, hi, steps)) = epsilon_range {
                if steps > 0 {
                    rows = sweep_rows(&sc, &env, lo, hi, steps, common.threads)?;
                    if sc.banks.len() == 2 {
                        let order = partition::chain_order(&sc.banks);
                        timeline = Some(transitions::regime_classify(
                            &sc.banks[order[0]],
                            &sc.banks[order[1]],
                            &env,
                            lo,
                            hi,
                            steps,
                        )?);
                    }
                    exits = Some(transitions::compression_sweep(
                        &sc.banks, &env, lo, hi, steps,
                    )?);
                }
            } else if let Some((lo, hi, steps)) = beta_range {
                for step in 0..=steps {
                    if steps == 0 {
                        break;
                    }
                    let beta = lo + (hi - lo) * step as f64 / steps as f64;
                    let e = env.with_beta(beta);
                    let sol = clearing::solve(&sc.banks, &e)?;
                    for b in &sc.banks {
                        let s = clearing::liquidation_demand(b, &e);
                        let cms = clearing::cms_solve(b, &e, s)?;
                        rows.push(SweepRow {
                            epsilon: beta, // the varied parameter
                            bank: b.id.clone(),
                            demanded: s,
                            realized: sol.realized_of(&b.id).unwrap(),
                            cms,
                            regime: String::new(),
                        });
                    }
                }
            }
            let rep = SweepReport {
                header,
                rows,
                timeline,
                exits,
            };
            Ok(rep.render(common.format))
        }
        Command::Thresholds(common) => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "thresholds".into();
            let set = transitions::thresholds(&sc.banks, &env)?;
            let rep = ThresholdsReport { header, set };
            Ok(rep.render(common.format))
        }
        Command::Isocheck(common) => {
            let (sc, env, mut header) = load(&common)?;
            header.command = "isocheck".into();
            let mut rows = Vec::new();
            let mut max_error: f64 = 0.0;
            for w in 0..sc.banks.len().saturating_sub(1) {
                let maps = transitions::ChainMaps::at_position(&sc.banks, w, &env)?;
                let err = transitions::isomorphism_roundtrip_error(&maps)?;
                max_error = max_error.max(err);
                rows.push(IsoCheckRow {
                    position: w,
                    roundtrip_error: err,
                });
            }
            let rep = IsoCheckReport {
                header,
                rows,
                max_error,
            };
            Ok(rep.render(common.format))
        }
    }
}

fn sweep_rows(
    sc: &Scenario,
    env: &MarketEnv,
    lo: f64,
    hi: f64,
    steps: usize,
    threads: usize,
) -> Result<Vec<SweepRow>, CliError> {
    let grid: Vec<f64> = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect();
    let solve_at = |eps: f64| -> Result<Vec<SweepRow>, CliError> {
        let e = env.with_epsilon(eps);
        let sol = clearing::solve(&sc.banks, &e)?;
        let mut out = Vec::with_capacity(sc.banks.len());
        for b in &sc.banks {
            let s = clearing::liquidation_demand(b, &e);
            let cms = clearing::cms_solve(b, &e, s)?;
            let x = sol.realized_of(&b.id).unwrap();
            let regime = match (x < 0.0, cms < 0.0) {
                (true, true) => "both-credit",
                (true, false) => "cluster-credit",
                (false, true) => "crowded-out",
                (false, false) => "both-sale",
            };
            out.push(SweepRow {
                epsilon: eps,
                bank: b.id.clone(),
                demanded: s,
                realized: x,
                cms,
                regime: regime.to_string(),
            });
        }
        Ok(out)
    };
    if threads <= 1 {
        let mut rows = Vec::new();
        for &eps in &grid {
            rows.extend(solve_at(eps)?);
        }
        return Ok(rows);
    }
    let chunks: Vec<Vec<f64>> = grid
        .chunks(grid.len().div_ceil(threads))
        .map(|c| c.to_vec())
        .collect();
    let results: Vec<Result<Vec<SweepRow>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                scope.spawn(move || {
                    let mut rows = Vec::new();
                    for &eps in chunk {
                        rows.extend(solve_at(eps)?);
                    }
                    Ok(rows)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}
