//! Any thermal model (ground truth or surrogate) seen as a Markov decision
//! process.
//!
//! An episode over an `L`-hour season warms the model up for 119 hours under
//! a water curve, then takes `L - 119` decisions. Decision `t` observes the
//! last 24 hourly frames, picks the supply temperature for hour `t`, steps the
//! model one hour and is rewarded on the temperatures at the end of the hour.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::WaterCurve;
use crate::error::{Error, Result};
use crate::surrogate::{input_features, RecurrentModel, N_INPUTS, WINDOW};
use crate::thermal::{self, Building, BuildingState, SubstationCommand, HOUR, T_SUPPLY_MAX, T_SUPPLY_MIN};
use crate::trajectory::{Trajectory, TrajectoryRow};
use crate::weather::{WeatherRecord, WeatherSeries};

pub const HISTORY_HOURS: usize = 24;
pub const WARMUP_HOURS: usize = 119;
/// Frame layout: t_out, pre-action t_supply, sin hour, cos hour, then t_air
/// of every occupied apartment.
pub const FRAME_FIXED: usize = 4;
pub const GAMMA: f64 = 0.9;

/// Supply-temperature offsets, index 0 is "no change".
pub const ACTION_DELTAS: [f64; 13] = [0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0, 2.5, -2.5, 3.0, -3.0];
pub const N_ACTIONS: usize = ACTION_DELTAS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    /// Offset from the previous supply temperature (Agent 1).
    Increment,
    /// Offset from the water-curve baseline (Agent 2).
    BaselineDelta,
}

pub fn apply_action(kind: ActionKind, prev_t_supply: f64, baseline_t_supply: f64, action_index: usize) -> Result<f64> {
    let delta = ACTION_DELTAS
        .get(action_index)
        .ok_or_else(|| Error::InvalidInput(format!("action index {action_index} >= {N_ACTIONS}")))?;
    let base = match kind {
        ActionKind::Increment => prev_t_supply,
        ActionKind::BaselineDelta => baseline_t_supply,
    };
    Ok((base + delta).clamp(T_SUPPLY_MIN, T_SUPPLY_MAX))
}

/// Negative L1 distance of the apartments from their targets.
pub fn reward(t_air: &[f64], targets: &[f64]) -> Result<f64> {
    if t_air.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} temperatures for {} targets",
            t_air.len(),
            targets.len()
        )));
    }
    Ok(-t_air.iter().zip(targets).map(|(t, g)| (t - g).abs()).sum::<f64>())
}

pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&gamma));
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Two-level comfort target. Day runs from `day_start` (inclusive) to
/// `night_start` (exclusive), wrapping midnight if needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSchedule {
    pub day_c: f64,
    pub night_c: f64,
    pub day_start: u32,
    pub night_start: u32,
}

/// Two-level day/night schedule. Experiments default to a constant 18 degC
/// instead; see `ExperimentConfig`.
impl Default for TargetSchedule {
    fn default() -> Self {
        TargetSchedule {
            day_c: 18.0,
            night_c: 17.0,
            day_start: 7,
            night_start: 22,
        }
    }
}

impl TargetSchedule {
    pub fn constant(t: f64) -> Self {
        TargetSchedule {
            day_c: t,
            night_c: t,
            day_start: 0,
            night_start: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in [self.day_c, self.night_c] {
            if !(10.0..=30.0).contains(&t) {
                return Err(Error::Config(format!("target {t} degC outside [10, 30]")));
            }
        }
        if self.day_start >= 24 || self.night_start >= 24 || self.day_start == self.night_start {
            return Err(Error::Config(format!(
                "schedule switch hours {} / {} invalid",
                self.day_start, self.night_start
            )));
        }
        Ok(())
    }

    /// Target in force at clock hour `hour_of_day`.
    pub fn at(&self, hour_of_day: u32) -> f64 {
        let h = hour_of_day % 24;
        let day = if self.day_start < self.night_start {
            (self.day_start..self.night_start).contains(&h)
        } else {
            h >= self.day_start || h < self.night_start
        };
        if day {
            self.day_c
        } else {
            self.night_c
        }
    }

    /// Target for temperatures measured at the end of the hour that starts at
    /// `hour_of_day`.
    pub fn at_end_of(&self, hour_of_day: u32) -> f64 {
        self.at(hour_of_day + 1)
    }
}

/// The last 24 hourly frames, flattened oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    pub n_apartments: usize,
    pub data: Arc<[f32]>,
}

impl ObservationWindow {
    pub fn frame_len(n_apartments: usize) -> usize {
        FRAME_FIXED + n_apartments
    }

    pub fn dim(n_apartments: usize) -> usize {
        HISTORY_HOURS * Self::frame_len(n_apartments)
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let f = Self::frame_len(self.n_apartments);
        &self.data[k * f..(k + 1) * f]
    }

    pub fn latest(&self) -> &[f32] {
        self.frame(HISTORY_HOURS - 1)
    }
}

/// What a model reports after one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub t_air_occupied: Vec<f64>,
    pub t_return: f64,
    /// Every apartment the model tracks (trajectory export).
    pub t_air_all: Vec<f64>,
}

pub trait ThermalModel: Send {
    fn n_occupied(&self) -> usize;
    /// Positions of the occupied apartments within `ModelOutput::t_air_all`.
    fn occupied_indices(&self) -> Vec<usize>;
    /// Start a season at `first` with supply temperature `t_supply`.
    fn reset(&mut self, first: &WeatherRecord, t_supply: f64) -> Result<ModelOutput>;
    fn step(&mut self, record: &WeatherRecord, cmd: &SubstationCommand) -> Result<ModelOutput>;
}

/// The RC simulator. `reset` holds the first hour's inputs constant for
/// `spin_up_hours` so a season starts from a settled state.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub building: Arc<Building>,
    pub spin_up_hours: usize,
    state: BuildingState,
}

pub const DEFAULT_SPIN_UP_HOURS: usize = 240;

impl GroundTruth {
    pub fn new(building: Building) -> Self {
        Self::shared(Arc::new(building))
    }

    pub fn shared(building: Arc<Building>) -> Self {
        let n = building.len();
        GroundTruth {
            building,
            spin_up_hours: DEFAULT_SPIN_UP_HOURS,
            state: BuildingState::uniform(n, 18.0, 25.0),
        }
    }

    pub fn state(&self) -> &BuildingState {
        &self.state
    }

    fn output(&self) -> ModelOutput {
        ModelOutput {
            t_air_occupied: self.building.occupied().iter().map(|&j| self.state.t_air[j]).collect(),
            t_return: self.state.t_return,
            t_air_all: self.state.t_air.clone(),
        }
    }
}

impl ThermalModel for GroundTruth {
    fn n_occupied(&self) -> usize {
        self.building.occupied().len()
    }

    fn occupied_indices(&self) -> Vec<usize> {
        self.building.occupied().to_vec()
    }

    fn reset(&mut self, first: &WeatherRecord, t_supply: f64) -> Result<ModelOutput> {
        self.state = BuildingState::uniform(self.building.len(), 18.0, 25.0);
        let cmd = SubstationCommand::new(t_supply, thermal::NOMINAL_M_DOT)?;
        for _ in 0..self.spin_up_hours {
            self.state = thermal::step(&self.building, &self.state, &cmd, first, HOUR)?;
        }
        Ok(self.output())
    }

    fn step(&mut self, record: &WeatherRecord, cmd: &SubstationCommand) -> Result<ModelOutput> {
        self.state = thermal::step(&self.building, &self.state, cmd, record, HOUR)?;
        Ok(self.output())
    }
}

/// The LSTM surrogate fed from a rolling 120-hour input window. `reset`
/// fills the window with the first hour's inputs.
#[derive(Debug, Clone)]
pub struct SurrogateEnv {
    pub model: Arc<RecurrentModel>,
    window: VecDeque<[f64; N_INPUTS]>,
    flat: Vec<f64>,
}

impl SurrogateEnv {
    pub fn new(model: Arc<RecurrentModel>) -> Self {
        SurrogateEnv {
            model,
            window: VecDeque::with_capacity(WINDOW + 1),
            flat: Vec::with_capacity(WINDOW * N_INPUTS),
        }
    }

    fn predict(&mut self) -> Result<ModelOutput> {
        self.flat.clear();
        for row in &self.window {
            self.flat.extend_from_slice(row);
        }
        let p = self.model.predict(&self.flat)?;
        Ok(ModelOutput {
            t_air_all: p.t_air.clone(),
            t_air_occupied: p.t_air,
            t_return: p.t_return,
        })
    }
}

impl ThermalModel for SurrogateEnv {
    fn n_occupied(&self) -> usize {
        self.model.n_occupied()
    }

    fn occupied_indices(&self) -> Vec<usize> {
        (0..self.model.n_occupied()).collect()
    }

    fn reset(&mut self, first: &WeatherRecord, t_supply: f64) -> Result<ModelOutput> {
        let row = input_features(first, &SubstationCommand::new(t_supply, thermal::NOMINAL_M_DOT)?);
        self.window.clear();
        self.window.extend(std::iter::repeat_n(row, WINDOW));
        self.predict()
    }

    fn step(&mut self, record: &WeatherRecord, cmd: &SubstationCommand) -> Result<ModelOutput> {
        cmd.validate()?;
        self.window.pop_front();
        self.window.push_back(input_features(record, cmd));
        self.predict()
    }
}

/// How a policy answers: either a supply temperature directly or an index
/// into [`ACTION_DELTAS`] interpreted under `kind`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Supply(f64),
    Action { kind: ActionKind, index: usize },
}

/// Everything a policy may look at when deciding hour `step`.
#[derive(Debug, Clone)]
pub struct DecisionContext {
    pub step: usize,
    pub obs: ObservationWindow,
    pub record: WeatherRecord,
    pub prev_t_supply: f64,
    pub baseline_t_supply: f64,
    pub mean_t_air: f64,
    pub mean_target: f64,
}

pub trait Policy {
    fn name(&self) -> &str;
    fn decide(&mut self, ctx: &DecisionContext) -> Decision;
}

/// Holds the supply temperature fixed at its warm-up value.
#[derive(Debug, Clone, Default)]
pub struct HoldPolicy;

impl Policy for HoldPolicy {
    fn name(&self) -> &str {
        "hold"
    }

    fn decide(&mut self, _ctx: &DecisionContext) -> Decision {
        Decision::Action {
            kind: ActionKind::Increment,
            index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    pub schedule: TargetSchedule,
    /// Water curve feeding Agent 2's offsets and the context.
    pub baseline: WaterCurve,
    /// Curve driving the warm-up hours; `None` uses `baseline`.
    pub warmup: Option<WaterCurve>,
}

impl EpisodeSetup {
    pub fn new(schedule: TargetSchedule, baseline: WaterCurve) -> Self {
        EpisodeSetup {
            schedule,
            baseline,
            warmup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: ObservationWindow,
    /// `None` when the policy chose a supply temperature directly.
    pub action_index: Option<usize>,
    pub reward: f64,
    pub next_state: ObservationWindow,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub t_supply: f64,
    pub action_index: Option<usize>,
    pub reward: f64,
    pub next_obs: ObservationWindow,
    pub done: bool,
}

/// Stepwise episode runner. Created already warmed up and positioned at the
/// first decision.
pub struct Env<'a, M: ThermalModel + ?Sized> {
    model: &'a mut M,
    weather: &'a WeatherSeries,
    setup: EpisodeSetup,
    n_occ: usize,
    frames: VecDeque<Vec<f32>>,
    hour: usize,
    prev_t_supply: f64,
    last: ModelOutput,
    trajectory: Trajectory,
}

impl<'a, M: ThermalModel + ?Sized> Env<'a, M> {
    pub fn start(model: &'a mut M, weather: &'a WeatherSeries, setup: &EpisodeSetup) -> Result<Self> {
        setup.schedule.validate()?;
        if weather.len() <= WARMUP_HOURS + 1 {
            return Err(Error::InvalidInput(format!(
                "season of {} hours is too short for a {WARMUP_HOURS}-hour warm-up",
                weather.len()
            )));
        }
        let warmup = setup.warmup.unwrap_or(setup.baseline);
        let first = &weather.records[0];
        let t0 = warmup.eval(first.t_out);
        let last = model.reset(first, t0)?;
        let n_occ = model.n_occupied();
        let occupied = model.occupied_indices();
        let mut env = Env {
            model,
            weather,
            setup: *setup,
            n_occ,
            frames: VecDeque::with_capacity(HISTORY_HOURS + 1),
            hour: 0,
            prev_t_supply: t0,
            last,
            trajectory: Trajectory::new(occupied),
        };
        env.push_frame(first);
        for h in 0..WARMUP_HOURS {
            let rec = &weather.records[h];
            let ts = warmup.eval(rec.t_out);
            let out = env.model.step(rec, &SubstationCommand::nominal(ts))?;
            env.prev_t_supply = ts;
            env.last = out;
            env.hour = h + 1;
            env.push_frame(&weather.records[h + 1]);
        }
        Ok(env)
    }

    fn push_frame(&mut self, rec: &WeatherRecord) {
        let angle = 2.0 * std::f64::consts::PI * f64::from(rec.hour_of_day) / 24.0;
        let mut f = Vec::with_capacity(FRAME_FIXED + self.n_occ);
        f.push(rec.t_out as f32);
        f.push(self.prev_t_supply as f32);
        f.push(angle.sin() as f32);
        f.push(angle.cos() as f32);
        f.extend(self.last.t_air_occupied.iter().map(|&t| t as f32));
        if self.frames.is_empty() {
            // nothing older yet: pad with the current frame
            self.frames.extend(std::iter::repeat_n(f.clone(), HISTORY_HOURS - 1));
        } else {
            self.frames.pop_front();
        }
        self.frames.push_back(f);
    }

    pub fn observation(&self) -> ObservationWindow {
        let mut data = Vec::with_capacity(ObservationWindow::dim(self.n_occ));
        for f in &self.frames {
            data.extend_from_slice(f);
        }
        ObservationWindow {
            n_apartments: self.n_occ,
            data: data.into(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.hour >= self.weather.len()
    }

    pub fn decisions_total(&self) -> usize {
        self.weather.len() - WARMUP_HOURS
    }

    pub fn decisions_taken(&self) -> usize {
        self.hour - WARMUP_HOURS
    }

    pub fn n_occupied(&self) -> usize {
        self.n_occ
    }

    pub fn context(&self) -> DecisionContext {
        let record = self.weather.records[self.hour.min(self.weather.len() - 1)];
        DecisionContext {
            step: self.decisions_taken(),
            obs: self.observation(),
            prev_t_supply: self.prev_t_supply,
            baseline_t_supply: self.setup.baseline.eval(record.t_out),
            mean_t_air: mean(&self.last.t_air_occupied),
            mean_target: self.setup.schedule.at_end_of(record.hour_of_day),
            record,
        }
    }

    pub fn resolve(&self, ctx: &DecisionContext, decision: Decision) -> Result<(f64, Option<usize>)> {
        match decision {
            Decision::Supply(ts) => {
                if !ts.is_finite() {
                    return Err(Error::InvalidInput("policy returned a non-finite supply temperature".into()));
                }
                Ok((ts.clamp(T_SUPPLY_MIN, T_SUPPLY_MAX), None))
            }
            Decision::Action { kind, index } => Ok((
                apply_action(kind, ctx.prev_t_supply, ctx.baseline_t_supply, index)?,
                Some(index),
            )),
        }
    }

    /// Apply `decision` for the current hour and advance.
    pub fn step(&mut self, decision: Decision) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::InvalidInput("episode already finished".into()));
        }
        let ctx = self.context();
        let (ts, action_index) = self.resolve(&ctx, decision)?;
        let rec = ctx.record;
        let out = self.model.step(&rec, &SubstationCommand::nominal(ts))?;
        let target = self.setup.schedule.at_end_of(rec.hour_of_day);
        let r = reward(&out.t_air_occupied, &vec![target; self.n_occ])?;
        self.trajectory.rows.push(TrajectoryRow {
            hour: self.hour,
            hour_of_day: rec.hour_of_day,
            t_supply: ts,
            m_dot: thermal::NOMINAL_M_DOT,
            t_out: rec.t_out,
            ghi: rec.ghi,
            t_return: out.t_return,
            t_air: out.t_air_all.clone(),
            reward: r,
            action_index,
            baseline_ts: ctx.baseline_t_supply,
        });
        self.prev_t_supply = ts;
        self.last = out;
        self.hour += 1;
        let done = self.is_done();
        let next_rec = if done {
            // terminal frame: clock advances, weather repeats the final hour
            let mut r = rec;
            r.hour_of_day = (r.hour_of_day + 1) % 24;
            r
        } else {
            self.weather.records[self.hour]
        };
        self.push_frame(&next_rec);
        Ok(StepOutcome {
            t_supply: ts,
            action_index,
            reward: r,
            next_obs: self.observation(),
            done,
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub trajectory: Trajectory,
}

impl Episode {
    pub fn rewards(&self) -> Vec<f64> {
        self.trajectory.rows.iter().map(|r| r.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.trajectory.rows.iter().map(|r| r.reward).sum()
    }
}

/// A model failure mid-episode, with everything recorded up to it.
#[derive(Debug)]
pub struct EpisodeFailure {
    pub error: Error,
    pub partial: Episode,
}

impl std::fmt::Display for EpisodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "episode aborted after {} decisions: {}",
            self.partial.trajectory.len(),
            self.error
        )
    }
}

impl std::error::Error for EpisodeFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Box<EpisodeFailure>> for Error {
    fn from(f: Box<EpisodeFailure>) -> Self {
        f.error
    }
}

/// Run `policy` over a full season, recording transitions.
pub fn run_episode<M, P>(
    model: &mut M,
    policy: &mut P,
    weather: &WeatherSeries,
    setup: &EpisodeSetup,
) -> std::result::Result<Episode, Box<EpisodeFailure>>
where
    M: ThermalModel + ?Sized,
    P: Policy + ?Sized,
{
    let fail = |error, transitions, trajectory| {
        Box::new(EpisodeFailure {
            error,
            partial: Episode {
                transitions,
                trajectory,
            },
        })
    };
    let mut env = match Env::start(model, weather, setup) {
        Ok(env) => env,
        Err(e) => return Err(fail(e, Vec::new(), Trajectory::default())),
    };
    let mut transitions = Vec::with_capacity(env.decisions_total());
    while !env.is_done() {
        let ctx = env.context();
        let decision = policy.decide(&ctx);
        match env.step(decision) {
            Ok(o) => transitions.push(Transition {
                state: ctx.obs,
                action_index: o.action_index,
                reward: o.reward,
                next_state: o.next_obs,
                done: o.done,
            }),
            Err(e) => return Err(fail(e, transitions, env.into_trajectory())),
        }
    }
    Ok(Episode {
        transitions,
        trajectory: env.into_trajectory(),
    })
}

/// Like [`run_episode`] but keeps only the trajectory.
pub fn rollout<M, P>(model: &mut M, policy: &mut P, weather: &WeatherSeries, setup: &EpisodeSetup) -> Result<Trajectory>
where
    M: ThermalModel + ?Sized,
    P: Policy + ?Sized,
{
    let mut env = Env::start(model, weather, setup)?;
    while !env.is_done() {
        let ctx = env.context();
        let decision = policy.decide(&ctx);
        env.step(decision)?;
    }
    Ok(env.into_trajectory())
}
