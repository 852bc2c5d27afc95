//! System identification: simulate the plant under random supply commands,
//! then fit a stacked LSTM mapping 120 hours of inputs to the occupied air
//! temperatures and the return temperature at the end of the last hour.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mdp::{GroundTruth, ThermalModel, DEFAULT_SPIN_UP_HOURS};
use crate::nn::{Adam, LstmDims, LstmNet, Normalizer, SeqLoss};
use crate::rng;
use crate::thermal::{orient_flux, Building, Orientation, SubstationCommand, NOMINAL_M_DOT, T_SUPPLY_MAX, T_SUPPLY_MIN};
use crate::trajectory::{Trajectory, TrajectoryRow};
use crate::weather::{self, CityTable, WeatherRecord, WeatherSeries, SEASON_HOURS};

/// Hours of input per prediction.
pub const WINDOW: usize = 120;
/// sin hour, cos hour, t_out, ghi, East/South/West flux, t_supply, m_dot.
pub const N_INPUTS: usize = 9;

pub fn input_features(record: &WeatherRecord, cmd: &SubstationCommand) -> [f64; N_INPUTS] {
    let angle = 2.0 * std::f64::consts::PI * f64::from(record.hour_of_day) / 24.0;
    [
        angle.sin(),
        angle.cos(),
        record.t_out,
        record.ghi,
        orient_flux(record, Orientation::East),
        orient_flux(record, Orientation::South),
        orient_flux(record, Orientation::West),
        cmd.t_supply,
        cmd.m_dot,
    ]
}

/// One simulated season. Row `t` of `inputs` holds the weather and command
/// of hour `t`; row `t` of `targets` holds the occupied air temperatures and
/// the return temperature at the end of that hour.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSeries {
    pub city: String,
    pub weather: WeatherSeries,
    pub trajectory: Trajectory,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainingSeries {
    pub fn from_parts(weather: WeatherSeries, trajectory: Trajectory) -> Result<Self> {
        if weather.len() != trajectory.len() {
            return Err(Error::InvalidInput(format!(
                "{} weather hours for {} trajectory rows",
                weather.len(),
                trajectory.len()
            )));
        }
        let n_out = trajectory.occupied.len() + 1;
        let mut inputs = Vec::with_capacity(weather.len() * N_INPUTS);
        let mut targets = Vec::with_capacity(weather.len() * n_out);
        for (rec, row) in weather.records.iter().zip(&trajectory.rows) {
            let cmd = SubstationCommand::new(row.t_supply, row.m_dot)?;
            inputs.extend_from_slice(&input_features(rec, &cmd));
            targets.extend(trajectory.occupied_t_air(row));
            targets.push(row.t_return);
        }
        let s = TrainingSeries {
            city: weather.city.clone(),
            weather,
            trajectory,
            inputs,
            targets,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / N_INPUTS
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.len() / self.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.len() < WINDOW {
            return Err(Error::InvalidInput(format!("series of {} hours is shorter than {WINDOW}", self.len())));
        }
        if self.targets.len() != self.len() * self.n_outputs() {
            return Err(Error::InvalidInput("targets and inputs differ in length".into()));
        }
        if self.inputs.iter().chain(&self.targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in training series".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_series: usize,
    pub series_len: usize,
    pub spin_up_hours: usize,
    /// Standard deviation of the hourly supply-temperature random walk, degC.
    pub step_std: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_series: 100,
            series_len: SEASON_HOURS,
            spin_up_hours: DEFAULT_SPIN_UP_HOURS,
            step_std: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFailure {
    pub index: usize,
    pub city: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub series: Vec<TrainingSeries>,
    pub split: Split,
    pub failures: Vec<SeriesFailure>,
}

impl Dataset {
    pub fn n_outputs(&self) -> usize {
        self.series.first().map_or(0, |s| s.n_outputs())
    }

    pub fn occupied(&self) -> &[usize] {
        self.series.first().map_or(&[], |s| &s.trajectory.occupied)
    }
}

/// Simulate one season under a random-walk supply command.
fn simulate_series(
    building: &Arc<Building>,
    cities: &CityTable,
    config: &DatasetConfig,
    seed: u64,
    index: usize,
) -> std::result::Result<TrainingSeries, SeriesFailure> {
    let mut rng = rng::rng_from(rng::derive_seed_n(seed, "series", index as u64));
    let names = cities.training_cities();
    let city = names[rng.random_range(0..names.len())].clone();
    let fail = |e: Error| SeriesFailure {
        index,
        city: city.clone(),
        message: e.to_string(),
    };
    let weather = cities.synthesize(&city, config.series_len, rng.random()).map_err(fail)?;
    let walk = Normal::new(0.0, config.step_std).map_err(|e| fail(Error::Config(e.to_string())))?;
    let mut model = GroundTruth::shared(building.clone());
    model.spin_up_hours = config.spin_up_hours;
    let mut ts: f64 = rng.random_range(T_SUPPLY_MIN..=T_SUPPLY_MAX);
    model.reset(&weather.records[0], ts).map_err(fail)?;
    let mut traj = Trajectory::new(building.occupied().to_vec());
    for (h, rec) in weather.records.iter().enumerate() {
        if h > 0 {
            ts = (ts + walk.sample(&mut rng)).clamp(T_SUPPLY_MIN, T_SUPPLY_MAX);
        }
        let cmd = SubstationCommand::nominal(ts);
        let out = model.step(rec, &cmd).map_err(fail)?;
        traj.rows.push(TrajectoryRow {
            hour: rec.hour_index as usize,
            hour_of_day: rec.hour_of_day,
            t_supply: ts,
            m_dot: NOMINAL_M_DOT,
            t_out: rec.t_out,
            ghi: rec.ghi,
            t_return: out.t_return,
            t_air: out.t_air_all,
            reward: 0.0,
            action_index: None,
            baseline_ts: 0.0,
        });
    }
    TrainingSeries::from_parts(weather, traj).map_err(fail)
}

/// 80/10/10 split of `n` series, shuffled by `seed`.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng_from(rng::derive_seed(seed, "split")));
    let n_hold = n / 10;
    let test = idx[..n_hold].to_vec();
    let val = idx[n_hold..2 * n_hold].to_vec();
    let mut train = idx[2 * n_hold..].to_vec();
    train.sort_unstable();
    let (mut val, mut test) = (val, test);
    val.sort_unstable();
    test.sort_unstable();
    Split { train, val, test }
}

/// Simulate `config.n_series` seasons. Series whose simulation fails are
/// dropped and listed in `failures`; the split covers the survivors.
pub fn generate_dataset(
    building: &Building,
    cities: &CityTable,
    config: &DatasetConfig,
    seed: u64,
    exec: Exec,
) -> Result<Dataset> {
    if config.n_series < 10 {
        return Err(Error::Config(format!("need at least 10 series, got {}", config.n_series)));
    }
    if config.series_len < WINDOW {
        return Err(Error::Config(format!("series_len must be >= {WINDOW}")));
    }
    if cities.training_cities().is_empty() {
        return Err(Error::Config("no training cities".into()));
    }
    let building = Arc::new(building.clone());
    let results = exec.map_range(config.n_series, |i| simulate_series(&building, cities, config, seed, i));
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => series.push(s),
            Err(f) => failures.push(f),
        }
    }
    if series.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "only {} of {} series simulated successfully",
            series.len(),
            config.n_series
        )));
    }
    Ok(Dataset {
        seed,
        split: split_indices(series.len(), seed),
        series,
        failures,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    occupied: Vec<usize>,
    split: Split,
    failures: Vec<SeriesFailure>,
    series: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    city: String,
    trajectory: String,
    weather: String,
}

/// Write the dataset as a cache directory: `manifest.json`, and per series a
/// trajectory CSV plus the weather CSV that drove it.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (i, s) in dataset.series.iter().enumerate() {
        let traj = format!("series_{i:04}.csv");
        let wx = format!("weather_{i:04}.csv");
        s.trajectory.write_csv(dir.join(&traj), false)?;
        weather::write_weather(&s.weather, dir.join(&wx))?;
        entries.push(ManifestEntry {
            city: s.city.clone(),
            trajectory: traj,
            weather: wx,
        });
    }
    let m = Manifest {
        seed: dataset.seed,
        occupied: dataset.occupied().to_vec(),
        split: dataset.split.clone(),
        failures: dataset.failures.clone(),
        series: entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&m).expect("serialisable")).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut series = Vec::with_capacity(m.series.len());
    for e in &m.series {
        let mut w = weather::load_weather(dir.join(&e.weather))?;
        w.city.clone_from(&e.city);
        let t = Trajectory::read_csv(dir.join(&e.trajectory), m.occupied.clone())?;
        series.push(TrainingSeries::from_parts(w, t)?);
    }
    Ok(Dataset {
        seed: m.seed,
        series,
        split: m.split,
        failures: m.failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Cosine-decay the learning rate to this value at the final epoch;
    /// constant `lr` when absent.
    pub lr_min: Option<f64>,
    pub batch: usize,
    pub bptt_window: usize,
    /// Only the last `supervise_tail` steps of each window enter the loss.
    pub supervise_tail: usize,
    pub windows_per_epoch: usize,
    /// Stride between evaluation windows on val/test series, hours.
    pub eval_stride: usize,
    pub hidden: usize,
    pub layers: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 1e-3,
            lr_min: None,
            batch: 32,
            bptt_window: WINDOW,
            supervise_tail: 24,
            windows_per_epoch: 4096,
            eval_stride: 24,
            hidden: 32,
            layers: 2,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.bptt_window == 0 || self.supervise_tail == 0 || self.supervise_tail > self.bptt_window {
            return Err(Error::Config("need 0 < supervise_tail <= bptt_window".into()));
        }
        if self.batch == 0 || self.eval_stride == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("batch, eval_stride, hidden and layers must be > 0".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0 && self.lr_min.is_none_or(|m| (0.0..=self.lr).contains(&m))) {
            return Err(Error::Config("need lr > 0 and 0 <= lr_min <= lr".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_mae: f64,
    pub val_mae: f64,
    pub test_mae: f64,
    pub test_std: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Validation MAE after each epoch, degC.
    pub val_history: Vec<f64>,
    /// Mean training loss per epoch (normalised units).
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub t_air: Vec<f64>,
    pub t_return: f64,
}

/// A trained surrogate with its normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentModel {
    pub net: LstmNet,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub window: usize,
}

pub const CHECKPOINT_KIND: &str = "lstm-surrogate";

impl RecurrentModel {
    pub fn n_occupied(&self) -> usize {
        self.net.dims.output - 1
    }

    /// Predict the end-of-window temperatures from `window` rows of raw
    /// features, flattened row-major.
    pub fn predict(&self, window: &[f64]) -> Result<Prediction> {
        if window.len() != self.window * N_INPUTS {
            return Err(Error::InvalidInput(format!(
                "window holds {} values, expected {} x {N_INPUTS}",
                window.len(),
                self.window
            )));
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in window".into()));
        }
        let mut z = vec![0.0; window.len()];
        for (row, out) in window.chunks_exact(N_INPUTS).zip(z.chunks_exact_mut(N_INPUTS)) {
            self.input_norm.normalize_into(row, out);
        }
        Ok(self.predict_normalized(&z))
    }

    /// Same as [`predict`](Self::predict) on an already normalised window.
    pub fn predict_normalized(&self, window: &[f64]) -> Prediction {
        let y = self.target_norm.denormalize(&self.net.predict_last(window, self.window));
        let n = self.n_occupied();
        Prediction {
            t_air: y[..n].to_vec(),
            t_return: y[n],
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::json!({
                "input": self.net.dims.input,
                "hidden": self.net.dims.hidden,
                "layers": self.net.dims.layers,
                "output": self.net.dims.output,
                "window": self.window,
            }),
            self.net.params.clone(),
        );
        c.normalization.insert("input".into(), self.input_norm.clone());
        c.normalization.insert("target".into(), self.target_norm.clone());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(CHECKPOINT_KIND)?;
        let dims: LstmDims = serde_json::from_value(c.dims.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let window = c.dims.get("window").and_then(|w| w.as_u64()).unwrap_or(WINDOW as u64) as usize;
        if dims.n_params() != c.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters for dims needing {}",
                c.params.len(),
                dims.n_params()
            )));
        }
        let (input_norm, target_norm) = (c.norm("input")?.clone(), c.norm("target")?.clone());
        if input_norm.dim() != dims.input || target_norm.dim() != dims.output || dims.output < 2 {
            return Err(Error::Checkpoint("normaliser widths do not match dims".into()));
        }
        Ok(RecurrentModel {
            net: LstmNet {
                dims,
                params: c.params.clone(),
            },
            input_norm,
            target_norm,
            window,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Series with inputs and targets already normalised.
struct Prepared {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    len: usize,
}

fn prepare(series: &TrainingSeries, input_norm: &Normalizer, target_norm: &Normalizer) -> Prepared {
    let no = target_norm.dim();
    let mut inputs = vec![0.0; series.inputs.len()];
    for (r, o) in series.inputs.chunks_exact(N_INPUTS).zip(inputs.chunks_exact_mut(N_INPUTS)) {
        input_norm.normalize_into(r, o);
    }
    let mut targets = vec![0.0; series.targets.len()];
    for (r, o) in series.targets.chunks_exact(no).zip(targets.chunks_exact_mut(no)) {
        target_norm.normalize_into(r, o);
    }
    Prepared {
        inputs,
        targets,
        len: series.len(),
    }
}

/// Absolute errors (degC) of last-step predictions on windows ending every
/// `stride` hours.
fn abs_errors(model: &RecurrentModel, series: &[&TrainingSeries], prepared: &[&Prepared], stride: usize, exec: Exec) -> Vec<f64> {
    let w = model.window;
    let no = model.net.dims.output;
    let mut jobs = Vec::new();
    for (k, p) in prepared.iter().enumerate() {
        let mut end = w - 1;
        while end < p.len {
            jobs.push((k, end));
            end += stride;
        }
    }
    let per_window = exec.map(&jobs, |&(k, end)| {
        let start = end + 1 - w;
        let p = prepared[k];
        let pred = model.predict_normalized(&p.inputs[start * N_INPUTS..(end + 1) * N_INPUTS]);
        let truth = &series[k].targets[end * no..(end + 1) * no];
        pred.t_air
            .iter()
            .chain(std::iter::once(&pred.t_return))
            .zip(truth)
            .map(|(y, t)| (y - t).abs())
            .collect::<Vec<f64>>()
    });
    per_window.into_iter().flatten().collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn cosine_lr(config: &TrainConfig, epoch: usize) -> f64 {
    match config.lr_min {
        Some(min) if config.epochs > 1 => {
            let phase = epoch as f64 / (config.epochs - 1) as f64;
            min + 0.5 * (config.lr - min) * (1.0 + (std::f64::consts::PI * phase).cos())
        }
        _ => config.lr,
    }
}

/// Model with the given normalisation and freshly initialised weights.
pub fn init_model(dataset: &Dataset, config: &TrainConfig) -> Result<RecurrentModel> {
    config.validate()?;
    let no = dataset.n_outputs();
    if dataset.series.is_empty() || dataset.split.train.is_empty() || no < 2 {
        return Err(Error::InvalidInput("dataset has no training series".into()));
    }
    for s in &dataset.series {
        s.validate()?;
        if s.len() < config.bptt_window {
            return Err(Error::InvalidInput(format!("series shorter than the {}-hour window", config.bptt_window)));
        }
    }
    let train = &dataset.split.train;
    let input_norm = Normalizer::fit(N_INPUTS, train.iter().map(|&i| dataset.series[i].inputs.as_slice()));
    let target_norm = Normalizer::fit(no, train.iter().map(|&i| dataset.series[i].targets.as_slice()));
    let dims = LstmDims {
        input: N_INPUTS,
        hidden: config.hidden,
        layers: config.layers,
        output: no,
    };
    let net = LstmNet::new(dims, &mut rng::rng_from(rng::derive_seed(config.seed, "surrogate-init")));
    Ok(RecurrentModel {
        net,
        input_norm,
        target_norm,
        window: config.bptt_window,
    })
}

/// Fit the surrogate by minibatch Adam on MAE over random windows of the
/// training split; returns the epoch with the lowest validation MAE.
pub fn train(dataset: &Dataset, config: &TrainConfig, exec: Exec) -> Result<(RecurrentModel, FitReport)> {
    let mut model = init_model(dataset, config)?;
    let w = config.bptt_window;
    let prepared: Vec<Prepared> = dataset
        .series
        .iter()
        .map(|s| prepare(s, &model.input_norm, &model.target_norm))
        .collect();
    let pick = |ids: &[usize]| -> (Vec<&TrainingSeries>, Vec<&Prepared>) {
        (ids.iter().map(|&i| &dataset.series[i]).collect(), ids.iter().map(|&i| &prepared[i]).collect())
    };
    let (val_s, val_p) = pick(&dataset.split.val);
    let eval_val = |m: &RecurrentModel| -> f64 {
        if val_s.is_empty() {
            return 0.0;
        }
        mean_std(&abs_errors(m, &val_s, &val_p, config.eval_stride, exec)).0
    };

    let n_params = model.net.n_params();
    let mut adam = Adam::new(n_params, config.lr);
    if let Some(c) = config.clip_norm {
        adam = adam.with_clip_norm(c);
    }
    let supervise_from = w - config.supervise_tail;
    let no = model.net.dims.output;
    let train_ids = &dataset.split.train;

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut val_history = Vec::with_capacity(config.epochs);
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        adam.lr = cosine_lr(config, epoch);
        let mut rng = rng::rng_from(rng::derive_seed_n(config.seed, "surrogate-epoch", epoch as u64));
        let windows: Vec<(usize, usize)> = (0..config.windows_per_epoch)
            .map(|_| {
                let k = train_ids[rng.random_range(0..train_ids.len())];
                (k, rng.random_range(0..=prepared[k].len - w))
            })
            .collect();
        let mut epoch_loss = 0.0;
        for batch in windows.chunks(config.batch) {
            let net = &model.net;
            let parts = exec.map(batch, |&(k, start)| {
                let p = &prepared[k];
                let mut g = vec![0.0; n_params];
                let loss = net.loss_and_grad(
                    &p.inputs[start * N_INPUTS..(start + w) * N_INPUTS],
                    &p.targets[start * no..(start + w) * no],
                    w,
                    supervise_from,
                    SeqLoss::Mae,
                    &mut g,
                );
                (loss, g)
            });
            let mut grad = vec![0.0; n_params];
            let mut loss = 0.0;
            for (l, g) in &parts {
                loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            loss *= scale;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("training loss became {loss}"),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut model.net.params, &mut grad);
        }
        loss_history.push(epoch_loss / config.windows_per_epoch.max(1) as f64);
        let val = eval_val(&model);
        val_history.push(val);
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = model.clone();
        }
    }
    if config.epochs == 0 {
        best_val = eval_val(&best);
    }

    let (train_s, train_p) = pick(train_ids);
    let (test_s, test_p) = pick(&dataset.split.test);
    let train_mae = mean_std(&abs_errors(&best, &train_s, &train_p, config.eval_stride * 4, exec)).0;
    let (test_mae, test_std) = mean_std(&abs_errors(&best, &test_s, &test_p, config.eval_stride, exec));
    let report = FitReport {
        train_mae,
        val_mae: best_val,
        test_mae,
        test_std,
        epochs_run: config.epochs,
        best_epoch,
        val_history,
        loss_history,
    };
    Ok((best, report))
}

/// Per-window absolute errors of `model` on the test split, degC, pooled
/// over outputs.
pub fn test_errors(model: &RecurrentModel, dataset: &Dataset, stride: usize, exec: Exec) -> Vec<f64> {
    let series: Vec<&TrainingSeries> = dataset.split.test.iter().map(|&i| &dataset.series[i]).collect();
    let prepared: Vec<Prepared> = series
        .iter()
        .map(|s| prepare(s, &model.input_norm, &model.target_norm))
        .collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    abs_errors(model, &series, &refs, stride, exec)
}
