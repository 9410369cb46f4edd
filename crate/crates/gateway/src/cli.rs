//! The `arwac` command line. Flags override `--config` keys, which
//! override built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arwac_core::explain::{explain, ContrastiveQuery, FoilResult};
use arwac_core::field::{load_weed_map, save_weed_map, select_targets, FieldModel, MapFormat, Threshold};
use arwac_core::pddl::{
    ground, parse_domain, parse_problem, validate_plan, GroundedTask, InvalidReason, Plan, ValidationReport,
};
use arwac_core::planner::{compile_problem, plan, SearchConfig, WeedingProblemConfig};
use arwac_core::rational::{format_rational, parse_rational};
use arwac_core::sim::{run_mission, trace_to_jsonl, MissionMetrics, RobotConfig};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::hub::{Hub, HubConfig, TickMode};

#[derive(Debug, Parser)]
#[command(name = "arwac", version, about = "Weed-map planning, explanation, simulation and the session gateway")]
pub struct Cli {
    /// Random seed for simulation
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// tracing filter, e.g. `info` or `arwac_core=debug`
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// TOML file with the same keys as the flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a weed map, select targets and write the planning problem.
    Ingest {
        #[arg(long)]
        map: PathBuf,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        domain_out: Option<PathBuf>,
        #[arg(long)]
        problem_out: Option<PathBuf>,
        /// Re-save the map in the format implied by this path's extension.
        #[arg(long)]
        convert: Option<PathBuf>,
    },
    /// Plan for a weed map or a PDDL domain/problem pair.
    Plan {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a plan file against a task.
    Validate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Compare a plan with the best plan under one or more foils.
    Explain {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        plan: PathBuf,
        /// e.g. 'forbid (move c1 c2)'; repeat to combine
        #[arg(long = "foil", required = true)]
        foils: Vec<String>,
    },
    /// Execute a plan on the field simulator.
    Simulate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Run K missions with seeds seed, seed+1, ...
        #[arg(long)]
        trials: Option<u64>,
        /// Write the event trace of the first mission as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the WebSocket gateway.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        /// Execution ticks per second; 0 runs missions to completion at once.
        #[arg(long)]
        tick_rate: Option<f64>,
        /// Directory for session event logs.
        #[arg(long)]
        store: Option<PathBuf>,
        /// TOML file with the trust-level descriptions.
        #[arg(long)]
        trust_text: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub return_home: bool,
}

#[derive(Debug, Args)]
pub struct Source {
    #[arg(long, conflicts_with_all = ["domain", "problem"])]
    pub map: Option<PathBuf>,
    #[command(flatten)]
    pub problem_args: ProblemArgs,
    #[arg(long, requires = "problem")]
    pub domain: Option<PathBuf>,
    #[arg(long, requires = "domain")]
    pub problem: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Cost-optimal A* instead of greedy best-first
    #[arg(long)]
    pub optimal: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub threshold: Option<f64>,
    pub return_home: Option<bool>,
    pub optimal: Option<bool>,
    pub weed_cost: Option<String>,
    pub move_cost: Option<String>,
    pub node_limit: Option<u64>,
    pub time_limit_ms: Option<u64>,
    pub trials: Option<u64>,
    pub bind: Option<String>,
    pub tick_rate: Option<f64>,
    pub store: Option<PathBuf>,
    pub trust_text: Option<PathBuf>,
    pub robot: Option<RobotConfig>,
}

type Failure = String;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &[u8]) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    match path {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(FileConfig::default()),
    }
}

fn load_field(path: &Path) -> Result<FieldModel, Failure> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let map = load_weed_map(std::io::BufReader::new(file), MapFormat::from_path(path))
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(FieldModel::open(map))
}

struct Ctx {
    cfg: FileConfig,
    seed: u64,
}

impl Ctx {
    fn threshold(&self, args: &ProblemArgs) -> Result<Threshold, Failure> {
        match args.threshold.or(self.cfg.threshold) {
            Some(t) => Threshold::new(t).map_err(|e| e.to_string()),
            None => Ok(Threshold::default()),
        }
    }

    fn problem(&self, args: &ProblemArgs) -> Result<WeedingProblemConfig, Failure> {
        let mut p = WeedingProblemConfig {
            require_return_home: args.return_home || self.cfg.return_home.unwrap_or(false),
            ..Default::default()
        };
        if let Some(c) = &self.cfg.weed_cost {
            p.weed_cost = parse_rational(c).map_err(|e| format!("weed_cost {c:?}: {e}"))?;
        }
        if let Some(c) = &self.cfg.move_cost {
            p.move_cost_per_cell = parse_rational(c).map_err(|e| format!("move_cost {c:?}: {e}"))?;
        }
        Ok(p)
    }

    fn search(&self, args: &SearchArgs) -> SearchConfig {
        let mut s = if args.optimal || self.cfg.optimal.unwrap_or(false) {
            SearchConfig::optimal()
        } else {
            SearchConfig::satisficing()
        };
        if let Some(n) = self.cfg.node_limit {
            s.node_limit = n;
        }
        if let Some(ms) = self.cfg.time_limit_ms {
            s.time_limit = std::time::Duration::from_millis(ms);
        }
        s
    }

    fn robot(&self) -> RobotConfig {
        self.cfg.robot.clone().unwrap_or_default()
    }

    fn task(&self, source: &Source) -> Result<GroundedTask, Failure> {
        match (&source.map, &source.domain, &source.problem) {
            (Some(map), None, None) => {
                let field = load_field(map)?;
                let targets = select_targets(&field, self.threshold(&source.problem_args)?);
                let (d, p) = compile_problem(&field, &targets, &self.problem(&source.problem_args)?)
                    .map_err(|e| e.to_string())?;
                ground(&d, &p).map_err(|e| e.to_string())
            }
            (None, Some(d), Some(p)) => {
                let domain = parse_domain(&read(d)?).map_err(|e| format!("{}: {e}", d.display()))?;
                let problem = parse_problem(&read(p)?, &domain).map_err(|e| format!("{}: {e}", p.display()))?;
                ground(&domain, &problem).map_err(|e| e.to_string())
            }
            _ => Err("give either --map or both --domain and --problem".into()),
        }
    }
}

fn read_plan(task: &GroundedTask, path: &Path) -> Result<Plan, Failure> {
    Plan::parse(task, &read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_metrics(m: &MissionMetrics) {
    println!("{:<26} {}", "weeds_present_initially", m.weeds_present_initially);
    println!("{:<26} {}", "weeds_removed", m.weeds_removed);
    println!("{:<26} {}", "crops_damaged", m.crops_damaged);
    println!("{:<26} {}", "distance_cells", m.distance_cells);
    println!("{:<26} {:.3}", "energy_used", m.energy_used);
    println!("{:<26} {}", "max_passes_per_cell", m.max_passes_per_cell);
    println!("{:<26} {}", "ticks_elapsed", m.ticks_elapsed);
}

pub fn init_tracing(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(level).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Exit codes: 0 success, 1 a negative answer (invalid plan, no plan,
/// infeasible foil), 2 bad input.
pub fn run(cli: Cli) -> ExitCode {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    init_tracing(cli.log_level.as_deref().or(cfg.log_level.as_deref()).unwrap_or("warn"));
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        cfg,
    };
    match cli.command {
        Command::Ingest {
            map,
            problem,
            domain_out,
            problem_out,
            convert,
        } => {
            let field = load_field(&map)?;
            let threshold = ctx.threshold(&problem)?;
            let targets = select_targets(&field, threshold);
            let m = field.map();
            println!(
                "{}x{} cells of {} m, {} targets at threshold {}",
                m.width(),
                m.height(),
                m.cell_size(),
                targets.len(),
                threshold.value()
            );
            let cells: Vec<String> = targets.targets.iter().map(|c| format!("c{c}")).collect();
            println!("targets: {}", cells.join(" "));
            let (d, p) = compile_problem(&field, &targets, &ctx.problem(&problem)?).map_err(|e| e.to_string())?;
            if let Some(path) = domain_out {
                write(&path, d.to_string().as_bytes())?;
            }
            if let Some(path) = problem_out {
                write(&path, p.to_string().as_bytes())?;
            }
            if let Some(path) = convert {
                write(&path, &save_weed_map(m, MapFormat::from_path(&path)))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { source, search, out } => {
            let task = ctx.task(&source)?;
            match plan(&task, &ctx.search(&search)) {
                Ok(p) => {
                    let text = p.to_text(&task);
                    match out {
                        Some(path) => {
                            write(&path, text.as_bytes())?;
                            println!("{} steps, cost {}", p.len(), format_rational(&p.total_cost()));
                        }
                        None => print!("{text}"),
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("no plan: {e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Validate { source, plan } => {
            let task = ctx.task(&source)?;
            let p = read_plan(&task, &plan)?;
            match validate_plan(&task, &p).map_err(|e| e.to_string())? {
                ValidationReport::Valid { total_cost, .. } => {
                    println!("valid: {} steps, cost {}", p.len(), format_rational(&total_cost));
                    Ok(ExitCode::SUCCESS)
                }
                ValidationReport::Invalid { failing_step, reason } => {
                    match reason {
                        InvalidReason::UnsatisfiedPreconditions(lits) => {
                            let lits: Vec<String> = lits.iter().map(|&l| task.render_literal(l)).collect();
                            println!(
                                "invalid: step {} {} needs {}",
                                failing_step + 1,
                                p.labels(&task)[failing_step],
                                lits.join(" ")
                            );
                        }
                        InvalidReason::MissingGoals(goals) => {
                            let goals: Vec<String> = goals.iter().map(|&g| task.fact(g).to_string()).collect();
                            println!("invalid: goals not reached: {}", goals.join(" "));
                        }
                    }
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Explain {
            source,
            search,
            plan,
            foils,
        } => {
            let task = ctx.task(&source)?;
            let original = read_plan(&task, &plan)?;
            let queries = foils
                .iter()
                .map(|f| ContrastiveQuery::parse(f).map_err(|e| format!("foil {f:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            let e = explain(&task, &original, &queries, &ctx.search(&search)).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&e).expect("explanations serialize"));
            Ok(match e.foil {
                FoilResult::ContrastivePlan { .. } => ExitCode::SUCCESS,
                FoilResult::FoilInfeasible { .. } => ExitCode::from(1),
            })
        }
        Command::Simulate {
            map,
            plan,
            trials,
            trace,
            json,
        } => {
            let field = load_field(&map)?;
            let labels: Vec<String> = read(&plan)?
                .lines()
                .map(|l| l.split(';').next().unwrap_or("").trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            let robot = ctx.robot();
            let trials = trials.or(ctx.cfg.trials).unwrap_or(1).max(1);
            let mut rows = Vec::new();
            for k in 0..trials {
                let seed = ctx.seed.wrapping_add(k);
                let outcome = run_mission(&field, &robot, seed, &labels).map_err(|e| e.to_string())?;
                if k == 0 {
                    if let Some(path) = &trace {
                        write(path, trace_to_jsonl(&outcome.trace).as_bytes())?;
                    }
                }
                rows.push((seed, outcome));
            }
            if json {
                let out: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|(seed, o)| serde_json::json!({"seed": seed, "status": o.state.status, "metrics": o.metrics}))
                    .collect();
                let doc = if out.len() == 1 { out[0].clone() } else { serde_json::Value::Array(out) };
                println!("{}", serde_json::to_string_pretty(&doc).expect("metrics serialize"));
            } else if rows.len() == 1 {
                let (_, o) = &rows[0];
                println!("{:<26} {:?}", "status", o.state.status);
                print_metrics(&o.metrics);
            } else {
                println!("{:>8} {:>8} {:>8} {:>8} {:>10}  status", "seed", "present", "removed", "damaged", "energy");
                for (seed, o) in &rows {
                    let m = &o.metrics;
                    println!(
                        "{seed:>8} {:>8} {:>8} {:>8} {:>10.3}  {:?}",
                        m.weeds_present_initially, m.weeds_removed, m.crops_damaged, m.energy_used, o.state.status
                    );
                }
                let n = rows.len() as f64;
                let mean = |f: fn(&MissionMetrics) -> f64| rows.iter().map(|(_, o)| f(&o.metrics)).sum::<f64>() / n;
                println!("mean weeds_present_initially {:.3}", mean(|m| m.weeds_present_initially as f64));
                println!("mean weeds_removed           {:.3}", mean(|m| m.weeds_removed as f64));
                println!("mean crops_damaged           {:.3}", mean(|m| m.crops_damaged as f64));
                println!("mean energy_used             {:.3}", mean(|m| m.energy_used));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            bind,
            tick_rate,
            store,
            trust_text,
        } => {
            let rate = tick_rate.or(ctx.cfg.tick_rate).unwrap_or(10.0);
            let hub_cfg = HubConfig {
                tick: if rate > 0.0 {
                    TickMode::Paced { ticks_per_second: rate }
                } else {
                    TickMode::Immediate
                },
                store: store.or(ctx.cfg.store.clone()),
                trust_text: trust_text.or(ctx.cfg.trust_text.clone()),
                ..Default::default()
            };
            let bind = bind.or(ctx.cfg.bind.clone()).unwrap_or_else(|| "127.0.0.1:9090".into());
            let hub = Hub::new(hub_cfg).map_err(|e| e.to_string())?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime.block_on(async move {
                let (addr, server) = crate::server::bind(hub, &bind).await.map_err(|e| e.to_string())?;
                println!("listening on ws://{addr}/ws");
                tokio::select! {
                    r = server => r.map_err(|e| e.to_string()),
                    _ = tokio::signal::ctrl_c() => Ok(()),
                }
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use arwac_core::planner::SearchMode;
    use clap::CommandFactory;

    #[test]
    fn cli_shape() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["arwac", "plan", "--map", "m.csv", "--optimal", "--seed", "4"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert!(Cli::try_parse_from(["arwac", "plan", "--map", "m.csv", "--domain", "d.pddl"]).is_err());
    }

    #[test]
    fn config_keys() {
        let cfg: FileConfig = toml::from_str("seed = 3\noptimal = true\nmove_cost = \"1/2\"\n[robot]\np_kill = 1.0\n").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.robot.unwrap().p_kill, 1.0);
        assert!(toml::from_str::<FileConfig>("sed = 3").is_err());
        let ctx = Ctx { cfg: toml::from_str("move_cost = \"1/2\"").unwrap(), seed: 0 };
        let p = ctx.problem(&ProblemArgs { threshold: None, return_home: false }).unwrap();
        assert_eq!(p.move_cost_per_cell, arwac_core::rational::Cost::new(1, 2));
        assert_eq!(ctx.search(&SearchArgs { optimal: false }).mode, SearchMode::Satisficing);
    }
}
