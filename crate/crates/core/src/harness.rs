//! Experiment orchestration: comfort/energy/CO2 metrics, the config-driven
//! pipeline behind the CLI, tabular comparison reports and plot data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{self, BaselineFile, PidGains, PidGrid, PidPolicy, PidTuning, PsoConfig, PsoResult, WaterCurve, WaterCurvePolicy};
use crate::dqn::{self, DqnConfig, DqnPolicy, EpisodeLog, QNetwork, TrainedAgent};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mdp::{self, ActionKind, EpisodeSetup, GroundTruth, ModelOutput, Policy, SurrogateEnv, TargetSchedule, ThermalModel};
use crate::rng;
use crate::surrogate::{self, DatasetConfig, FitReport, RecurrentModel, TrainConfig};
use crate::thermal::{self, Building, SubstationCommand};
use crate::trajectory::Trajectory;
use crate::weather::{CityTable, WeatherRecord, WeatherSeries, SEASON_HOURS, TEST_CITY};

/// Carbon intensity of the district network, g/kWh.
const CO2_NETWORK: f64 = 930.0;
/// Relative intensity gap between network heat and the alternative.
const CO2_RATIO: f64 = (350.0 - 234.0) / 382.0;
/// Seasonal heat demand per square metre, kWh/m².
const DEMAND_KWH_M2: f64 = 80.0;

/// Grams of CO2 saved per m² and season for an energy-gain fraction `p`.
pub fn co2_saved(p: f64) -> f64 {
    CO2_NETWORK * CO2_RATIO * DEMAND_KWH_M2 * p
}

/// Heat delivered over the trajectory, kWh.
pub fn seasonal_energy(trajectory: &Trajectory) -> f64 {
    trajectory
        .rows
        .iter()
        .map(|r| thermal::heat_duty(&SubstationCommand { t_supply: r.t_supply, m_dot: r.m_dot }, r.t_return))
        .sum::<f64>()
        / 1000.0
}

/// MAE of occupied air temperatures from their targets and the pooled std of
/// those temperatures, both over apartments and hours.
pub fn comfort_metrics(trajectory: &Trajectory, schedule: &TargetSchedule) -> Result<(f64, f64)> {
    if trajectory.is_empty() || trajectory.occupied.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let (mut abs, mut sum, mut n) = (0.0, 0.0, 0usize);
    for row in &trajectory.rows {
        let target = schedule.at_end_of(row.hour_of_day);
        for t in trajectory.occupied_t_air(row) {
            abs += (t - target).abs();
            sum += t;
            n += 1;
        }
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = trajectory
        .rows
        .iter()
        .flat_map(|row| trajectory.occupied_t_air(row))
        .map(|t| (t - mean) * (t - mean))
        .sum::<f64>()
        / nf;
    Ok((abs / nf, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy_name: String,
    pub mae_t_in: f64,
    pub std_t_in: f64,
    pub seasonal_energy: f64,
    pub energy_gain_pct: f64,
    pub co2_saved: f64,
    pub total_reward: f64,
}

impl PolicyReport {
    /// Score `trajectory` against the baseline's seasonal energy.
    pub fn new(name: &str, trajectory: &Trajectory, energy: f64, baseline_energy: f64, schedule: &TargetSchedule) -> Result<Self> {
        let (mae, std) = comfort_metrics(trajectory, schedule)?;
        let p = if baseline_energy > 0.0 {
            (baseline_energy - energy) / baseline_energy
        } else {
            0.0
        };
        Ok(PolicyReport {
            policy_name: name.into(),
            mae_t_in: mae,
            std_t_in: std,
            seasonal_energy: energy,
            energy_gain_pct: 100.0 * p,
            co2_saved: co2_saved(p),
            total_reward: trajectory.rows.iter().map(|r| r.reward).sum(),
        })
    }
}

/// Aligned text table with the report columns.
pub fn format_table(reports: &[PolicyReport]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:>9} {:>9} {:>12} {:>9} {:>10}",
        "policy", "MAE Tin", "std Tin", "energy kWh", "gain %", "CO2 g/m2"
    )
    .unwrap();
    for r in reports {
        writeln!(
            s,
            "{:<10} {:>9.3} {:>9.3} {:>12.1} {:>9.2} {:>10.1}",
            r.policy_name, r.mae_t_in, r.std_t_in, r.seasonal_energy, r.energy_gain_pct, r.co2_saved
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildingKind {
    /// The 18-apartment building.
    Default,
    /// One nominal south-facing apartment.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    GroundTruth,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Baseline,
    Pid,
    Agent1,
    Agent2,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::Pid => "pid",
            PolicyKind::Agent1 => "agent1",
            PolicyKind::Agent2 => "agent2",
        }
    }

    pub fn action_kind(self) -> Option<ActionKind> {
        match self {
            PolicyKind::Agent1 => Some(ActionKind::Increment),
            PolicyKind::Agent2 => Some(ActionKind::BaselineDelta),
            _ => None,
        }
    }
}

/// PSO settings without the box (fixed per use) or seed (derived).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoSettings {
    pub swarm_size: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub iterations: usize,
}

impl Default for PsoSettings {
    fn default() -> Self {
        let d = PsoConfig::new(vec![], 0);
        PsoSettings {
            swarm_size: d.swarm_size,
            inertia: d.inertia,
            c1: d.c1,
            c2: d.c2,
            iterations: d.iterations,
        }
    }
}

impl PsoSettings {
    pub fn config(&self, seed: u64) -> PsoConfig {
        PsoConfig {
            swarm_size: self.swarm_size,
            inertia: self.inertia,
            c1: self.c1,
            c2: self.c2,
            iterations: self.iterations,
            bounds: vec![control::ALPHA_BOUNDS, control::BETA_BOUNDS],
            seed,
        }
    }
}

/// Everything one experiment needs. Seeds inside the nested sections are
/// ignored: every stream is derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub building: BuildingKind,
    /// Jitter seed for the default building; `seed` when absent.
    pub building_seed: Option<u64>,
    /// Environment the agents train against.
    pub model: ModelChoice,
    pub policies: Vec<PolicyKind>,
    pub schedule: TargetSchedule,
    pub test_city: String,
    pub training_cities: Vec<String>,
    /// Number of training cities (taken in order) in the water-curve fit;
    /// all of them when absent.
    pub fit_cities: Option<usize>,
    pub season_hours: usize,
    pub pso: PsoSettings,
    pub pid_grid: PidGrid,
    pub dqn: DqnConfig,
    pub dataset: DatasetConfig,
    pub surrogate: TrainConfig,
    /// Reuse a trained surrogate instead of generating and training one.
    pub surrogate_checkpoint: Option<PathBuf>,
    /// Score energy with the surrogate's predicted return temperature.
    pub surrogate_return_energy: bool,
    pub exec: Exec,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            building: BuildingKind::Default,
            building_seed: None,
            model: ModelChoice::Surrogate,
            policies: vec![PolicyKind::Baseline, PolicyKind::Pid, PolicyKind::Agent1, PolicyKind::Agent2],
            schedule: TargetSchedule::constant(18.0),
            test_city: TEST_CITY.into(),
            training_cities: CityTable::default().training_cities(),
            fit_cities: None,
            season_hours: SEASON_HOURS,
            pso: PsoSettings::default(),
            pid_grid: PidGrid::default(),
            dqn: DqnConfig::default(),
            dataset: DatasetConfig::default(),
            surrogate: TrainConfig::default(),
            surrogate_checkpoint: None,
            surrogate_return_energy: false,
            exec: Exec::Parallel,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let c: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_cities.iter().any(|c| c == &self.test_city) {
            return Err(Error::Config(format!("test city {} is also a training city", self.test_city)));
        }
        if self.training_cities.is_empty() {
            return Err(Error::Config("no training cities".into()));
        }
        if self.fit_cities.is_some_and(|n| n == 0 || n > self.training_cities.len()) {
            return Err(Error::Config(format!(
                "fit_cities must lie in 1..={}",
                self.training_cities.len()
            )));
        }
        if self.season_hours <= mdp::WARMUP_HOURS + 1 {
            return Err(Error::Config("season too short for the warm-up".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(p) = self.policies.iter().find(|p| !seen.insert(**p)) {
            return Err(Error::Config(format!("policy {} listed twice", p.name())));
        }
        self.schedule.validate()?;
        self.dqn.validate()
    }
}

/// Shared state of one experiment: resolved config, city table, building.
pub struct Lab {
    pub config: ExperimentConfig,
    pub cities: CityTable,
    pub building: Arc<Building>,
}

impl Lab {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let cities = CityTable::default();
        for c in config.training_cities.iter().chain(std::iter::once(&config.test_city)) {
            cities.get(c)?;
        }
        let building = match config.building {
            BuildingKind::Default => thermal::default_building(config.building_seed.unwrap_or(config.seed)),
            BuildingKind::Single => thermal::single_apartment(),
        };
        Ok(Lab {
            config,
            cities,
            building: Arc::new(building),
        })
    }

    pub fn seed(&self, tag: &str) -> u64 {
        rng::derive_seed(self.config.seed, tag)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth::shared(self.building.clone())
    }

    pub fn weather(&self, city: &str) -> Result<WeatherSeries> {
        self.cities.synthesize(city, self.config.season_hours, self.seed("weather"))
    }

    pub fn training_weather(&self) -> Result<Vec<WeatherSeries>> {
        self.config.training_cities.iter().map(|c| self.weather(c)).collect()
    }

    pub fn test_weather(&self) -> Result<WeatherSeries> {
        self.weather(&self.config.test_city)
    }

    pub fn fit_baseline(&self) -> Result<(WaterCurve, PsoResult)> {
        let n = self.config.fit_cities.unwrap_or(self.config.training_cities.len());
        let w: Vec<WeatherSeries> = self.config.training_cities[..n]
            .iter()
            .map(|c| self.weather(c))
            .collect::<Result<_>>()?;
        control::fit_water_curve(
            &self.ground_truth(),
            &w,
            &self.config.schedule,
            &self.config.pso.config(self.seed("pso")),
            self.config.exec,
        )
    }

    pub fn tune_pid(&self, curve: WaterCurve) -> Result<PidTuning> {
        let w = self.weather(&self.config.training_cities[0])?;
        control::tune_pid(
            &self.ground_truth(),
            &w,
            &self.config.schedule,
            curve,
            &self.config.pid_grid,
            self.config.exec,
        )
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        self.config.dataset.clone()
    }

    pub fn generate_dataset(&self) -> Result<surrogate::Dataset> {
        surrogate::generate_dataset(&self.building, &self.cities, &self.config.dataset, self.seed("dataset"), self.config.exec)
    }

    pub fn train_surrogate(&self, dataset: &surrogate::Dataset) -> Result<(RecurrentModel, FitReport)> {
        let cfg = TrainConfig {
            seed: self.seed("surrogate"),
            ..self.config.surrogate.clone()
        };
        surrogate::train(dataset, &cfg, self.config.exec)
    }

    /// The configured checkpoint, or a freshly generated and trained model.
    pub fn surrogate(&self) -> Result<(RecurrentModel, Option<FitReport>)> {
        if let Some(p) = &self.config.surrogate_checkpoint {
            let m = RecurrentModel::load(p)?;
            if m.n_occupied() != self.building.occupied().len() {
                return Err(Error::Checkpoint(format!(
                    "surrogate predicts {} apartments, building has {} occupied",
                    m.n_occupied(),
                    self.building.occupied().len()
                )));
            }
            return Ok((m, None));
        }
        let ds = self.generate_dataset()?;
        let (m, r) = self.train_surrogate(&ds)?;
        Ok((m, Some(r)))
    }

    pub fn dqn_config(&self, kind: PolicyKind) -> DqnConfig {
        DqnConfig {
            seed: self.seed(kind.name()),
            ..self.config.dqn.clone()
        }
    }

    /// Train one agent on the configured environment model.
    pub fn train_agent(&self, kind: PolicyKind, curve: WaterCurve, surrogate: Option<&Arc<RecurrentModel>>) -> Result<TrainedAgent> {
        let action = kind
            .action_kind()
            .ok_or_else(|| Error::InvalidInput(format!("{} is not a learning agent", kind.name())))?;
        let pool = self.training_weather()?;
        let cfg = self.dqn_config(kind);
        match (self.config.model, surrogate) {
            (ModelChoice::GroundTruth, _) => dqn::train_agent(action, &self.ground_truth(), curve, &pool, &self.config.schedule, &cfg),
            (ModelChoice::Surrogate, Some(s)) => {
                dqn::train_agent(action, &SurrogateEnv::new(s.clone()), curve, &pool, &self.config.schedule, &cfg)
            }
            (ModelChoice::Surrogate, None) => Err(Error::InvalidInput("surrogate environment requested but none given".into())),
        }
    }

    /// Run `policy` on the test season against the ground truth. Returns the
    /// trajectory and its seasonal energy (from the surrogate's return
    /// temperature when configured and available).
    pub fn evaluate(
        &self,
        policy: &mut dyn Policy,
        curve: WaterCurve,
        weather: &WeatherSeries,
        surrogate: Option<&Arc<RecurrentModel>>,
    ) -> Result<(Trajectory, f64)> {
        let setup = EpisodeSetup::new(self.config.schedule, curve);
        match (self.config.surrogate_return_energy, surrogate) {
            (true, Some(s)) => {
                let mut paired = Paired {
                    truth: self.ground_truth(),
                    shadow: SurrogateEnv::new(s.clone()),
                    shadow_return: Vec::new(),
                };
                let traj = mdp::rollout(&mut paired, policy, weather, &setup)?;
                let skip = paired.shadow_return.len() - traj.len();
                let mut shadow = traj.clone();
                for (row, tr) in shadow.rows.iter_mut().zip(&paired.shadow_return[skip..]) {
                    row.t_return = *tr;
                }
                let e = seasonal_energy(&shadow);
                Ok((traj, e))
            }
            _ => {
                let traj = mdp::rollout(&mut self.ground_truth(), policy, weather, &setup)?;
                let e = seasonal_energy(&traj);
                Ok((traj, e))
            }
        }
    }
}

/// Ground truth driving the episode, surrogate shadowing it for its return
/// temperature.
struct Paired {
    truth: GroundTruth,
    shadow: SurrogateEnv,
    shadow_return: Vec<f64>,
}

impl ThermalModel for Paired {
    fn n_occupied(&self) -> usize {
        self.truth.n_occupied()
    }

    fn occupied_indices(&self) -> Vec<usize> {
        self.truth.occupied_indices()
    }

    fn reset(&mut self, first: &WeatherRecord, t_supply: f64) -> Result<ModelOutput> {
        self.shadow_return.clear();
        self.shadow.reset(first, t_supply)?;
        self.truth.reset(first, t_supply)
    }

    fn step(&mut self, record: &WeatherRecord, cmd: &SubstationCommand) -> Result<ModelOutput> {
        self.shadow_return.push(self.shadow.step(record, cmd)?.t_return);
        self.truth.step(record, cmd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFailure {
    pub policy: String,
    pub message: String,
}

/// Result of [`run_comparison`]. Only `reports` and `failures` go into
/// `reports.json`.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<PolicyReport>,
    pub failures: Vec<PolicyFailure>,
    pub baseline: BaselineFile,
    pub pso: PsoResult,
    pub surrogate_fit: Option<FitReport>,
    pub trajectories: Vec<(String, Trajectory)>,
    pub training: Vec<(String, Vec<EpisodeLog>)>,
    pub agents: Vec<(String, QNetwork, ActionKind)>,
}

#[derive(Serialize)]
struct ReportsFile<'a> {
    test_city: &'a str,
    reports: &'a [PolicyReport],
    failures: &'a [PolicyFailure],
}

impl Comparison {
    pub fn reports_json(&self, test_city: &str) -> String {
        serde_json::to_string_pretty(&ReportsFile {
            test_city,
            reports: &self.reports,
            failures: &self.failures,
        })
        .expect("serialisable")
    }

    /// Write reports, tables, trajectories, fitted baselines, checkpoints,
    /// training logs and plots into `dir`.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>, test_city: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        let mut put = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            files.push(p);
            Ok(())
        };
        put("reports.json", self.reports_json(test_city))?;
        put("reports.txt", format_table(&self.reports))?;
        put("baseline.json", serde_json::to_string_pretty(&self.baseline).expect("serialisable"))?;
        if let Some(f) = &self.surrogate_fit {
            put("surrogate_fit.json", serde_json::to_string_pretty(f).expect("serialisable"))?;
        }
        for (name, net, kind) in &self.agents {
            put(&format!("{name}.ckpt.json"), net.to_checkpoint(*kind).to_json())?;
        }
        for (name, traj) in &self.trajectories {
            let p = dir.join(format!("trajectory_{name}.csv"));
            traj.write_csv(&p, true)?;
            files.push(p);
        }
        let plots = emit_plots(&self.trajectories, &self.training, dir.join("plots"))?;
        files.extend(plots.files);
        Ok(files)
    }
}

/// Fit the baseline, tune PID, train agents as the policy list requires,
/// then score every policy on the test city against the ground truth.
pub fn run_comparison(config: &ExperimentConfig) -> Result<Comparison> {
    let lab = Lab::new(config.clone())?;
    let test = lab.test_weather()?;
    let (curve, pso) = lab.fit_baseline()?;
    let mut failures = Vec::new();
    let fail = |failures: &mut Vec<PolicyFailure>, kind: PolicyKind, e: &dyn std::fmt::Display| {
        failures.push(PolicyFailure {
            policy: kind.name().into(),
            message: e.to_string(),
        })
    };

    let wants = |k: PolicyKind| config.policies.contains(&k);
    let pid: Option<PidGains> = if wants(PolicyKind::Pid) {
        match lab.tune_pid(curve) {
            Ok(t) => Some(t.gains),
            Err(e) => {
                fail(&mut failures, PolicyKind::Pid, &e);
                None
            }
        }
    } else {
        None
    };

    let needs_surrogate = (config.model == ModelChoice::Surrogate
        && config.policies.iter().any(|p| p.action_kind().is_some()))
        || config.surrogate_return_energy;
    let (surrogate, surrogate_fit) = if needs_surrogate {
        let (m, r) = lab.surrogate()?;
        (Some(Arc::new(m)), r)
    } else {
        (None, None)
    };

    let mut agents = Vec::new();
    let mut training = Vec::new();
    for &k in &config.policies {
        if k.action_kind().is_none() {
            continue;
        }
        match lab.train_agent(k, curve, surrogate.as_ref()) {
            Ok(a) => {
                training.push((k.name().to_string(), a.history.clone()));
                agents.push((k, Arc::new(a.net), a.kind));
            }
            Err(e) => fail(&mut failures, k, &e),
        }
    }

    // policies that are ready to evaluate, baseline always first
    let mut ready: Vec<PolicyKind> = vec![PolicyKind::Baseline];
    for &k in &config.policies {
        let ok = match k {
            PolicyKind::Baseline => false,
            PolicyKind::Pid => pid.is_some(),
            _ => agents.iter().any(|(a, _, _)| *a == k),
        };
        if ok {
            ready.push(k);
        }
    }
    let make = |k: PolicyKind| -> Box<dyn Policy> {
        match k {
            PolicyKind::Baseline => Box::new(WaterCurvePolicy::new(curve)),
            PolicyKind::Pid => Box::new(PidPolicy::new(pid.expect("tuned"), curve)),
            _ => {
                let (_, net, kind) = agents.iter().find(|(a, _, _)| *a == k).expect("trained");
                Box::new(DqnPolicy::new(net.clone(), *kind))
            }
        }
    };
    let results = config.exec.map(&ready, |&k| lab.evaluate(make(k).as_mut(), curve, &test, surrogate.as_ref()));

    let mut outcomes: Vec<(PolicyKind, Trajectory, f64)> = Vec::new();
    for (k, r) in ready.iter().zip(results) {
        match r {
            Ok((t, e)) => outcomes.push((*k, t, e)),
            Err(e) if *k == PolicyKind::Baseline => return Err(e),
            Err(e) => fail(&mut failures, *k, &e),
        }
    }
    let baseline_energy = outcomes[0].2;
    let mut reports = Vec::new();
    let mut trajectories = Vec::new();
    for &k in &config.policies {
        if let Some((_, t, e)) = outcomes.iter().find(|(o, _, _)| *o == k) {
            reports.push(PolicyReport::new(k.name(), t, *e, baseline_energy, &config.schedule)?);
            trajectories.push((k.name().to_string(), t.clone()));
        }
    }
    // failures in policy-list order
    failures.sort_by_key(|f| config.policies.iter().position(|p| p.name() == f.policy));

    Ok(Comparison {
        reports,
        failures,
        baseline: BaselineFile { curve, pid },
        pso,
        surrogate_fit,
        trajectories,
        training,
        agents: agents
            .into_iter()
            .map(|(k, n, a)| (k.name().to_string(), Arc::unwrap_or_clone(n), a))
            .collect(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSummary {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
}

#[derive(Debug, Clone)]
pub struct SvgSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

/// Minimal self-contained SVG chart: axes with min/max tick labels, one
/// colour per series and a legend.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[SvgSeries]) -> String {
    let (w, h, m) = (720.0, 420.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, xml_escape(title)).unwrap();
    writeln!(
        s,
        r#"<path d="M{m} {} L{} {} M{m} {} L{m} {m}" stroke="black" fill="none"/>"#,
        h - m,
        w - m,
        h - m,
        h - m
    )
    .unwrap();
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-size="11">{}</text>"#, xml_escape(text)).unwrap();
    };
    label(&mut s, m, h - m + 16.0, "start", &format!("{x0:.3}"));
    label(&mut s, w - m, h - m + 16.0, "end", &format!("{x1:.3}"));
    label(&mut s, m - 6.0, h - m, "end", &format!("{y0:.2}"));
    label(&mut s, m - 6.0, m + 4.0, "end", &format!("{y1:.2}"));
    label(&mut s, w / 2.0, h - 16.0, "middle", x_label);
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        xml_escape(y_label)
    )
    .unwrap();

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let finite = ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite());
        match ser.mark {
            Mark::Line => {
                let mut d = String::new();
                for (k, &(x, y)) in finite.enumerate() {
                    write!(d, "{}{:.1} {:.1} ", if k == 0 { "M" } else { "L" }, sx(x), sy(y)).unwrap();
                }
                if !d.is_empty() {
                    writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="1" fill="none"/>"#, d.trim_end()).unwrap();
                }
            }
            Mark::Dots => {
                writeln!(s, r#"<g fill="{color}" fill-opacity="0.5">"#).unwrap();
                for &(x, y) in finite {
                    writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5"/>"#, sx(x), sy(y)).unwrap();
                }
                writeln!(s, "</g>").unwrap();
            }
        }
        let ly = m + 14.0 * i as f64;
        writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, w - m + 4.0, ly - 9.0).unwrap();
        label(&mut s, w - m + 18.0, ly, "start", &ser.name);
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Write Ts-vs-To scatter data, per-apartment Tin series and training-reward
/// curves as CSV plus an SVG rendering of each.
pub fn emit_plots(
    trajectories: &[(String, Trajectory)],
    training: &[(String, Vec<EpisodeLog>)],
    outdir: impl AsRef<Path>,
) -> Result<PlotSummary> {
    let dir = outdir.as_ref();
    let mut summary = PlotSummary::default();
    if trajectories.is_empty() && training.is_empty() {
        summary.warnings.push("nothing to plot".into());
        return Ok(summary);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        summary.files.push(p);
        Ok(())
    };

    let mut scatter = Vec::new();
    for (name, t) in trajectories {
        let mut csv = String::from("t_out,t_supply\n");
        for r in &t.rows {
            writeln!(csv, "{},{}", r.t_out, r.t_supply).unwrap();
        }
        put(format!("ts_vs_to_{name}.csv"), csv)?;
        scatter.push(SvgSeries {
            name: name.clone(),
            points: t.rows.iter().map(|r| (r.t_out, r.t_supply)).collect(),
            mark: Mark::Dots,
        });

        let mut csv = String::from("hour");
        for &j in &t.occupied {
            write!(csv, ",t_air_{j}").unwrap();
        }
        csv.push('\n');
        for r in &t.rows {
            write!(csv, "{}", r.hour).unwrap();
            for v in t.occupied_t_air(r) {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
        put(format!("tin_{name}.csv"), csv)?;
        let lines: Vec<SvgSeries> = t
            .occupied
            .iter()
            .map(|&j| SvgSeries {
                name: format!("apt {j}"),
                points: t.rows.iter().map(|r| (r.hour as f64, r.t_air[j])).collect(),
                mark: Mark::Line,
            })
            .collect();
        put(
            format!("tin_{name}.svg"),
            render_svg(&format!("Indoor temperature, {name}"), "hour", "T_in (degC)", &lines),
        )?;
    }
    if !scatter.is_empty() {
        put(
            "ts_vs_to.svg".into(),
            render_svg("Supply vs outdoor temperature", "T_o (degC)", "T_s (degC)", &scatter),
        )?;
    }

    let mut curves = Vec::new();
    for (name, log) in training {
        put(format!("training_{name}.csv"), dqn::training_log_csv(log))?;
        curves.push(SvgSeries {
            name: name.clone(),
            points: log.iter().map(|h| (h.episode as f64, h.total_reward)).collect(),
            mark: Mark::Line,
        });
    }
    if !curves.is_empty() {
        put(
            "training_rewards.svg".into(),
            render_svg("Rewards during training", "episode", "total reward", &curves),
        )?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryRow;

    fn traj(rows: &[(f64, f64, f64)], t_air: f64) -> Trajectory {
        let mut t = Trajectory::new((0..11).collect());
        for (h, &(ts, tr, m)) in rows.iter().enumerate() {
            t.rows.push(TrajectoryRow {
                hour: h,
                hour_of_day: 12,
                t_supply: ts,
                m_dot: m,
                t_out: 0.0,
                ghi: 0.0,
                t_return: tr,
                t_air: vec![t_air; 11],
                reward: 0.0,
                action_index: None,
                baseline_ts: 0.0,
            });
        }
        t
    }

    #[test]
    fn co2_examples() {
        assert_eq!(co2_saved(0.0), 0.0);
        assert!((485.0..=487.0).contains(&co2_saved(0.0215)));
        assert!((494.0..=496.0).contains(&co2_saved(0.0219)));
        assert_eq!(co2_saved(-0.01), -co2_saved(0.01));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(seasonal_energy(&traj(&[(40.0, 40.0, 5.0); 3], 18.0)), 0.0);
        let one = seasonal_energy(&traj(&[(45.0, 35.0, 1.0)], 18.0));
        assert!((one - 41.8).abs() < 1e-9);
        let two = seasonal_energy(&traj(&[(45.0, 35.0, 1.0); 2], 18.0));
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn comfort_examples() {
        let s = TargetSchedule::constant(18.0);
        assert_eq!(comfort_metrics(&traj(&[(40.0, 35.0, 5.0); 4], 18.0), &s).unwrap(), (0.0, 0.0));
        let (mae, std) = comfort_metrics(&traj(&[(40.0, 35.0, 5.0); 4], 18.5), &s).unwrap();
        assert!((mae - 0.5).abs() < 1e-12 && std.abs() < 1e-12);
        assert!(comfort_metrics(&Trajectory::new(vec![0]), &s).is_err());
    }

    #[test]
    fn config_rejects_test_city_in_training() {
        let mut c = ExperimentConfig::default();
        c.training_cities.push(TEST_CITY.into());
        assert!(c.validate().is_err());
        let text = toml::to_string(&ExperimentConfig::default()).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default());
        let bad = text.replace("test_city = \"Yuncheng\"", "test_city = \"Harbin\"");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn baseline_report_is_neutral() {
        let t = traj(&[(40.0, 35.0, 5.0); 4], 18.2);
        let e = seasonal_energy(&t);
        let r = PolicyReport::new("baseline", &t, e, e, &TargetSchedule::constant(18.0)).unwrap();
        assert_eq!(r.energy_gain_pct, 0.0);
        assert_eq!(r.co2_saved, 0.0);
    }
}
