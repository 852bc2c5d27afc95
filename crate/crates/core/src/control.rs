//! Classical baselines: the linear water curve tuned by particle swarm, and
//! a PID loop on the mean occupied air temperature riding on top of it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mdp::{self, Decision, DecisionContext, EpisodeSetup, Policy, TargetSchedule, ThermalModel};
use crate::rng;
use crate::thermal::{T_SUPPLY_MAX, T_SUPPLY_MIN};
use crate::weather::WeatherSeries;

/// `t_supply = clamp(alpha + beta * t_out, 20, 50)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterCurve {
    pub alpha: f64,
    pub beta: f64,
}

impl WaterCurve {
    pub fn new(alpha: f64, beta: f64) -> Self {
        WaterCurve { alpha, beta }
    }

    pub fn eval(&self, t_out: f64) -> f64 {
        (self.alpha + self.beta * t_out).clamp(T_SUPPLY_MIN, T_SUPPLY_MAX)
    }
}

impl Default for WaterCurve {
    /// A reasonable hand-set curve used before any fit exists.
    fn default() -> Self {
        WaterCurve::new(35.0, -1.0)
    }
}

#[derive(Debug, Clone)]
pub struct WaterCurvePolicy {
    pub curve: WaterCurve,
    name: String,
}

impl WaterCurvePolicy {
    pub fn new(curve: WaterCurve) -> Self {
        WaterCurvePolicy {
            curve,
            name: "baseline".into(),
        }
    }
}

impl Policy for WaterCurvePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        Decision::Supply(self.curve.eval(ctx.record.t_out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub iterations: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl PsoConfig {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        PsoConfig {
            swarm_size: 30,
            inertia: 0.729,
            c1: 1.49445,
            c2: 1.49445,
            iterations: 100,
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Config("swarm_size must be >= 2".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("PSO needs at least one coordinate".into()));
        }
        if let Some((lo, hi)) = self.bounds.iter().find(|(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
            return Err(Error::Config(format!("PSO bounds [{lo}, {hi}] invalid")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    /// Global best after initialisation and after each iteration.
    pub best_history: Vec<f64>,
    pub evaluations: usize,
}

/// Global-best particle swarm minimisation over a box. Non-finite objective
/// values count as +inf. Evaluations within one iteration go through `exec`,
/// so `objective` must be re-entrant.
pub fn pso_minimize<F>(objective: F, config: &PsoConfig, exec: Exec) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    config.validate()?;
    let dim = config.bounds.len();
    let n = config.swarm_size;
    let mut rng = rng::rng_from(rng::derive_seed(config.seed, "pso"));
    let span: Vec<f64> = config.bounds.iter().map(|(lo, hi)| hi - lo).collect();

    let mut pos: Vec<Vec<f64>> = (0..n)
        .map(|_| config.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..n)
        .map(|_| span.iter().map(|&s| rng.random_range(-s..=s) * 0.1).collect())
        .collect();
    let eval = |ps: &[Vec<f64>]| -> Vec<f64> {
        exec.map(ps, |p| {
            let v = objective(p);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        })
    };

    let mut vals = eval(&pos);
    let mut evaluations = n;
    let mut pbest = pos.clone();
    let mut pbest_val = vals.clone();
    let mut g = argmin(&pbest_val);
    let mut gbest = pbest[g].clone();
    let mut gbest_val = pbest_val[g];
    let mut best_history = vec![gbest_val];

    for _ in 0..config.iterations {
        for i in 0..n {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = config.inertia * vel[i][d]
                    + config.c1 * r1 * (pbest[i][d] - pos[i][d])
                    + config.c2 * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-span[d], span[d]);
                let (lo, hi) = config.bounds[d];
                let x = pos[i][d] + vel[i][d];
                if x < lo || x > hi {
                    vel[i][d] = 0.0;
                }
                pos[i][d] = x.clamp(lo, hi);
            }
        }
        vals = eval(&pos);
        evaluations += n;
        for i in 0..n {
            if vals[i] < pbest_val[i] {
                pbest_val[i] = vals[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        g = argmin(&pbest_val);
        if pbest_val[g] < gbest_val {
            gbest_val = pbest_val[g];
            gbest.clone_from(&pbest[g]);
        }
        best_history.push(gbest_val);
    }
    Ok(PsoResult {
        argmin: gbest,
        value: gbest_val,
        best_history,
        evaluations,
    })
}

/// Lowest index among the minima.
fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

pub const ALPHA_BOUNDS: (f64, f64) = (20.0, 60.0);
pub const BETA_BOUNDS: (f64, f64) = (-3.0, 0.0);

/// Mean seasonal comfort cost `sum_t -r_t` of a water curve over `weathers`,
/// warming up under the same curve. Simulation failures cost +inf.
pub fn water_curve_cost<M>(model: &M, weathers: &[WeatherSeries], schedule: &TargetSchedule, curve: WaterCurve) -> f64
where
    M: ThermalModel + Clone,
{
    let setup = EpisodeSetup::new(*schedule, curve);
    let mut total = 0.0;
    for w in weathers {
        let mut m = model.clone();
        match mdp::rollout(&mut m, &mut WaterCurvePolicy::new(curve), w, &setup) {
            Ok(t) => total -= t.rows.iter().map(|r| r.reward).sum::<f64>(),
            Err(_) => return f64::INFINITY,
        }
    }
    total / weathers.len() as f64
}

/// Fit (alpha, beta) over [20, 60] x [-3, 0]. `pso.bounds` is overwritten.
pub fn fit_water_curve<M>(
    model: &M,
    weathers: &[WeatherSeries],
    schedule: &TargetSchedule,
    pso: &PsoConfig,
    exec: Exec,
) -> Result<(WaterCurve, PsoResult)>
where
    M: ThermalModel + Clone + Sync,
{
    if weathers.is_empty() {
        return Err(Error::InvalidInput("no training weather for the water-curve fit".into()));
    }
    schedule.validate()?;
    let config = PsoConfig {
        bounds: vec![ALPHA_BOUNDS, BETA_BOUNDS],
        ..pso.clone()
    };
    let res = pso_minimize(
        |x| water_curve_cost(model, weathers, schedule, WaterCurve::new(x[0], x[1])),
        &config,
        exec,
    )?;
    if !res.value.is_finite() {
        // surface the underlying simulator error
        let curve = WaterCurve::new(res.argmin[0], res.argmin[1]);
        let mut m = model.clone();
        mdp::rollout(&mut m, &mut WaterCurvePolicy::new(curve), &weathers[0], &EpisodeSetup::new(*schedule, curve))?;
        return Err(Error::InvalidInput("every water curve failed to simulate".into()));
    }
    Ok((WaterCurve::new(res.argmin[0], res.argmin[1]), res))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on |integral|, in degC·h.
    pub integral_limit: f64,
    pub setpoint: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.kp, self.ki, self.kd, self.integral_limit]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0);
        if !ok {
            return Err(Error::Config(format!("PID gains must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_measurement: Option<f64>,
}

/// One PID update. Derivative acts on the measurement; the integral is
/// clamped to `±integral_limit`.
pub fn pid_step(gains: &PidGains, mean_t_air: f64, state: &PidState, dt_hours: f64, feedforward: f64) -> (f64, PidState) {
    debug_assert!(dt_hours > 0.0);
    let e = gains.setpoint - mean_t_air;
    let integral = (state.integral + e * dt_hours).clamp(-gains.integral_limit, gains.integral_limit);
    let derivative = match state.prev_measurement {
        Some(prev) => -(mean_t_air - prev) / dt_hours,
        None => 0.0,
    };
    let out = feedforward + gains.kp * e + gains.ki * integral + gains.kd * derivative;
    (
        out.clamp(T_SUPPLY_MIN, T_SUPPLY_MAX),
        PidState {
            integral,
            prev_measurement: Some(mean_t_air),
        },
    )
}

/// PID with the water curve as feedforward. The setpoint follows the target
/// schedule; `gains.setpoint` is ignored here.
#[derive(Debug, Clone)]
pub struct PidPolicy {
    pub gains: PidGains,
    pub curve: WaterCurve,
    pub state: PidState,
}

impl PidPolicy {
    pub fn new(gains: PidGains, curve: WaterCurve) -> Self {
        PidPolicy {
            gains,
            curve,
            state: PidState::default(),
        }
    }
}

impl Policy for PidPolicy {
    fn name(&self) -> &str {
        "pid"
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        let gains = PidGains {
            setpoint: ctx.mean_target,
            ..self.gains
        };
        let (ts, s) = pid_step(&gains, ctx.mean_t_air, &self.state, 1.0, self.curve.eval(ctx.record.t_out));
        self.state = s;
        Decision::Supply(ts)
    }
}

/// Candidate gains for the tuning grid. The integral bound is chosen per
/// candidate so that `ki * integral_limit = max_integral_action`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidGrid {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
    pub max_integral_action: f64,
}

impl Default for PidGrid {
    fn default() -> Self {
        PidGrid {
            kp: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            ki: vec![0.02, 0.05, 0.1, 0.2, 0.5],
            kd: vec![0.0, 2.0, 5.0],
            max_integral_action: 10.0,
        }
    }
}

impl PidGrid {
    pub fn candidates(&self, setpoint: f64) -> Vec<PidGains> {
        let mut out = Vec::new();
        for &kp in &self.kp {
            for &ki in &self.ki {
                for &kd in &self.kd {
                    out.push(PidGains {
                        kp,
                        ki,
                        kd,
                        integral_limit: if ki > 0.0 { self.max_integral_action / ki } else { 0.0 },
                        setpoint,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidTuning {
    pub gains: PidGains,
    pub cost: f64,
    pub evaluated: usize,
}

/// Grid search minimising seasonal `sum_t -r_t` on one weather series. Ties
/// go to the earliest candidate.
pub fn tune_pid<M>(
    model: &M,
    weather: &WeatherSeries,
    schedule: &TargetSchedule,
    curve: WaterCurve,
    grid: &PidGrid,
    exec: Exec,
) -> Result<PidTuning>
where
    M: ThermalModel + Clone + Sync,
{
    schedule.validate()?;
    let cands = grid.candidates(schedule.day_c);
    if cands.is_empty() {
        return Err(Error::Config("empty PID grid".into()));
    }
    for c in &cands {
        c.validate()?;
    }
    let setup = EpisodeSetup::new(*schedule, curve);
    let costs = exec.map(&cands, |g| {
        let mut m = model.clone();
        match mdp::rollout(&mut m, &mut PidPolicy::new(*g, curve), weather, &setup) {
            Ok(t) => -t.rows.iter().map(|r| r.reward).sum::<f64>(),
            Err(_) => f64::INFINITY,
        }
    });
    let best = argmin(&costs);
    if !costs[best].is_finite() {
        return Err(Error::InvalidInput("every PID candidate failed to simulate".into()));
    }
    Ok(PidTuning {
        gains: cands[best],
        cost: costs[best],
        evaluated: cands.len(),
    })
}

/// Fitted baselines persisted between CLI stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFile {
    pub curve: WaterCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<PidGains>,
}

impl BaselineFile {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("serialisable");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
