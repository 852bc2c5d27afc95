use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dhlab::control::BaselineFile;
use dhlab::dqn::read_training_log;
use dhlab::harness::{emit_plots, format_table, run_comparison, ExperimentConfig, Lab, ModelChoice, PolicyKind};
use dhlab::surrogate::{load_dataset, save_dataset, RecurrentModel};
use dhlab::trajectory::Trajectory;
use dhlab::weather::write_weather;

/// District-heating control lab: plant simulation, surrogate training,
/// baselines, DQN agents and policy comparison.
#[derive(Parser)]
#[command(name = "dhlab", version)]
struct Cli {
    /// Experiment config (TOML, or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a season of hourly weather per city.
    GenWeather {
        /// Cities to generate; defaults to the training and test cities.
        #[arg(long)]
        city: Vec<String>,
    },
    /// Simulate the surrogate training series and cache them.
    GenDataset,
    /// Train the recurrent surrogate.
    TrainSurrogate {
        /// Dataset cache from gen-dataset; generated on the fly if absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Fit the water curve by particle swarm on the ground-truth plant.
    FitBaseline,
    /// Grid-search PID gains around the fitted water curve.
    TunePid {
        /// Baseline file with the fitted curve; defaults to <out>/baseline.json.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Train one DQN agent.
    TrainAgent {
        /// 1: increments on the previous supply temperature; 2: offsets from the water curve.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        kind: u8,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Surrogate checkpoint for the training environment.
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Run the full comparison on the test city and write all artifacts.
    Compare,
    /// Re-render plots from trajectory_*.csv and training_*.csv files.
    Plots {
        /// Directory holding the CSV files; defaults to <out>.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out_dir.clone_from(o);
    }
    c.validate()?;
    Ok(c)
}

fn baseline_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join("baseline.json"))
}

fn load_baseline(lab: &Lab, path: &Path) -> Result<BaselineFile> {
    if path.exists() {
        return Ok(BaselineFile::load(path)?);
    }
    eprintln!("{} not found, fitting the water curve first", path.display());
    let (curve, _) = lab.fit_baseline()?;
    Ok(BaselineFile { curve, pid: None })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = load_config(&cli)?;
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let lab = Lab::new(config.clone())?;

    match &cli.command {
        Command::GenWeather { city } => {
            let cities: Vec<String> = if city.is_empty() {
                config.training_cities.iter().chain([&config.test_city]).cloned().collect()
            } else {
                city.clone()
            };
            for c in &cities {
                let w = lab.weather(c)?;
                let p = out.join(format!("weather_{c}.csv"));
                write_weather(&w, &p)?;
                println!("{}", p.display());
            }
        }
        Command::GenDataset => {
            let ds = lab.generate_dataset()?;
            let dir = out.join("dataset");
            save_dataset(&ds, &dir)?;
            println!("{} series ({} failed) in {}", ds.series.len(), ds.failures.len(), dir.display());
            for f in &ds.failures {
                eprintln!("series {} ({}): {}", f.index, f.city, f.message);
            }
        }
        Command::TrainSurrogate { dataset } => {
            let ds = match dataset {
                Some(d) => load_dataset(d)?,
                None => lab.generate_dataset()?,
            };
            let (model, fit) = lab.train_surrogate(&ds)?;
            let p = out.join("surrogate.ckpt.json");
            model.save(&p)?;
            write_json(&out.join("surrogate_fit.json"), &fit)?;
            println!(
                "test MAE {:.3} degC (std {:.3}), val {:.3}, best epoch {}; saved {}",
                fit.test_mae,
                fit.test_std,
                fit.val_mae,
                fit.best_epoch,
                p.display()
            );
        }
        Command::FitBaseline => {
            let (curve, pso) = lab.fit_baseline()?;
            let p = out.join("baseline.json");
            BaselineFile { curve, pid: None }.save(&p)?;
            println!(
                "Ts = {:.3} + {:.4} To (cost {:.2}, {} evaluations); saved {}",
                curve.alpha,
                curve.beta,
                pso.value,
                pso.evaluations,
                p.display()
            );
        }
        Command::TunePid { baseline } => {
            let path = baseline_path(baseline, &out);
            let mut file = load_baseline(&lab, &path)?;
            let t = lab.tune_pid(file.curve)?;
            file.pid = Some(t.gains);
            let p = out.join("baseline.json");
            file.save(&p)?;
            println!(
                "kp {} ki {} kd {} (cost {:.2}, {} candidates); saved {}",
                t.gains.kp,
                t.gains.ki,
                t.gains.kd,
                t.cost,
                t.evaluated,
                p.display()
            );
        }
        Command::TrainAgent { kind, baseline, surrogate } => {
            let kind = if *kind == 1 { PolicyKind::Agent1 } else { PolicyKind::Agent2 };
            let file = load_baseline(&lab, &baseline_path(baseline, &out))?;
            let model = match (config.model, surrogate) {
                (ModelChoice::GroundTruth, _) => None,
                (ModelChoice::Surrogate, Some(p)) => Some(Arc::new(RecurrentModel::load(p)?)),
                (ModelChoice::Surrogate, None) => Some(Arc::new(lab.surrogate()?.0)),
            };
            let agent = lab.train_agent(kind, file.curve, model.as_ref())?;
            let name = kind.name();
            let ckpt = out.join(format!("{name}.ckpt.json"));
            std::fs::write(&ckpt, agent.net.to_checkpoint(agent.kind).to_json())
                .with_context(|| format!("writing {}", ckpt.display()))?;
            agent.write_log(out.join(format!("training_{name}.csv")))?;
            let last = agent.history.last().map_or(f64::NAN, |h| h.total_reward);
            println!("{} episodes, final reward {last:.1}; saved {}", agent.history.len(), ckpt.display());
        }
        Command::Compare => {
            let cmp = run_comparison(&config)?;
            let files = cmp.write_artifacts(&out, &config.test_city)?;
            print!("{}", format_table(&cmp.reports));
            for f in &cmp.failures {
                eprintln!("{} failed: {}", f.policy, f.message);
            }
            println!("{} files in {}", files.len(), out.display());
        }
        Command::Plots { from } => {
            let dir = from.clone().unwrap_or_else(|| out.clone());
            let occupied = lab.building.occupied().to_vec();
            let mut trajectories = Vec::new();
            let mut training = Vec::new();
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            for p in entries {
                let Some(stem) = p.file_stem().and_then(|s| s.to_str()) else { continue };
                if p.extension().is_none_or(|e| e != "csv") {
                    continue;
                }
                if let Some(name) = stem.strip_prefix("trajectory_") {
                    trajectories.push((name.to_string(), Trajectory::read_csv(&p, occupied.clone())?));
                } else if let Some(name) = stem.strip_prefix("training_") {
                    training.push((name.to_string(), read_training_log(&p)?));
                }
            }
            if trajectories.is_empty() && training.is_empty() {
                bail!("no trajectory_*.csv or training_*.csv in {}", dir.display());
            }
            let s = emit_plots(&trajectories, &training, out.join("plots"))?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} plot files in {}", s.files.len(), out.join("plots").display());
        }
    }
    Ok(())
}
