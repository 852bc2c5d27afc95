use dhlab::control::{WaterCurve, WaterCurvePolicy};
use dhlab::error::{Error, Result};
use dhlab::mdp::{
    apply_action, discounted_return, reward, run_episode, ActionKind, EpisodeSetup, GroundTruth, HoldPolicy,
    ModelOutput, ObservationWindow, TargetSchedule, ThermalModel, GAMMA, HISTORY_HOURS, N_ACTIONS,
};
use dhlab::thermal::{default_building, single_apartment, SubstationCommand};
use dhlab::weather::{CityTable, WeatherRecord, WeatherSeries, SEASON_HOURS};
use proptest::prelude::*;

fn season(city: &str, seed: u64) -> WeatherSeries {
    CityTable::default().synthesize(city, SEASON_HOURS, seed).unwrap()
}

fn setup() -> EpisodeSetup {
    EpisodeSetup::new(TargetSchedule::default(), WaterCurve::new(30.0, -0.8))
}

#[test]
fn season_gives_1883_transitions() {
    let w = season("Beijing", 1);
    let mut m = GroundTruth::new(default_building(3));
    let ep = run_episode(&mut m, &mut WaterCurvePolicy::new(WaterCurve::new(30.0, -0.8)), &w, &setup()).unwrap();
    assert_eq!(ep.transitions.len(), 1883);
    assert_eq!(ep.trajectory.len(), 1883);
    assert_eq!(ep.trajectory.rows[0].hour, 119);
    assert!(ep.transitions.last().unwrap().done);
    assert!(ep.transitions[..1882].iter().all(|t| !t.done));
    assert_eq!(ep.transitions[0].state.data.len(), ObservationWindow::dim(11));
    assert_eq!(ObservationWindow::dim(11), 360);
}

#[test]
fn hold_keeps_supply_constant() {
    let w = season("Harbin", 2);
    let mut m = GroundTruth::new(single_apartment());
    let ep = run_episode(&mut m, &mut HoldPolicy, &w, &setup()).unwrap();
    let ts0 = ep.trajectory.rows[0].t_supply;
    assert!(ep.trajectory.rows.iter().all(|r| r.t_supply == ts0));
    assert!(ep.transitions.iter().all(|t| t.action_index == Some(0)));
}

#[test]
fn discounted_return_matches_trajectory() {
    let w = season("Xian", 4);
    let mut m = GroundTruth::new(single_apartment());
    let ep = run_episode(&mut m, &mut WaterCurvePolicy::new(WaterCurve::new(32.0, -1.0)), &w, &setup()).unwrap();
    // recompute each reward from the recorded temperatures and targets
    let s = TargetSchedule::default();
    let mut independent = 0.0;
    for (t, row) in ep.trajectory.rows.iter().enumerate() {
        let target = s.at((row.hour_of_day + 1) % 24);
        let r: f64 = -row.t_air.iter().map(|x| (x - target).abs()).sum::<f64>();
        assert!((r - ep.transitions[t].reward).abs() < 1e-12);
        independent += 0.9f64.powi(t as i32) * r;
    }
    assert!((discounted_return(&ep.rewards(), GAMMA) - independent).abs() < 1e-9);
}

#[test]
fn window_slides_by_one_frame() {
    let w = season("Chengdu", 5);
    let mut m = GroundTruth::new(default_building(1));
    let ep = run_episode(&mut m, &mut WaterCurvePolicy::new(WaterCurve::new(30.0, -1.0)), &w, &setup()).unwrap();
    for t in [0, 1, 500, 1881] {
        let (a, b) = (&ep.transitions[t].state, &ep.transitions[t + 1].state);
        assert_eq!(&ep.transitions[t].next_state, b);
        for k in 0..HISTORY_HOURS - 1 {
            assert_eq!(b.frame(k), a.frame(k + 1));
        }
        // pre-action convention: the newest frame carries the previous command
        assert_eq!(b.latest()[1], ep.trajectory.rows[t].t_supply as f32);
    }
}

#[test]
fn episodes_are_deterministic() {
    let w = season("Shenyang", 6);
    let run = || {
        let mut m = GroundTruth::new(default_building(9));
        run_episode(&mut m, &mut WaterCurvePolicy::new(WaterCurve::new(34.0, -1.2)), &w, &setup())
            .unwrap()
            .trajectory
    };
    assert_eq!(run(), run());
}

/// Plant stand-in that fails at a chosen hour.
#[derive(Clone)]
struct Fragile {
    fail_at: u32,
}

impl ThermalModel for Fragile {
    fn n_occupied(&self) -> usize {
        1
    }
    fn occupied_indices(&self) -> Vec<usize> {
        vec![0]
    }
    fn reset(&mut self, _: &WeatherRecord, _: f64) -> Result<ModelOutput> {
        Ok(ModelOutput {
            t_air_occupied: vec![18.0],
            t_return: 30.0,
            t_air_all: vec![18.0],
        })
    }
    fn step(&mut self, r: &WeatherRecord, _: &SubstationCommand) -> Result<ModelOutput> {
        if r.hour_index == self.fail_at {
            return Err(Error::Stability {
                hour: r.hour_index as usize,
                message: "boom".into(),
            });
        }
        self.reset(r, 0.0)
    }
}

#[test]
fn failure_returns_partial_trajectory() {
    let w = season("Beijing", 7);
    let err = run_episode(&mut Fragile { fail_at: 119 + 40 }, &mut HoldPolicy, &w, &setup()).unwrap_err();
    assert_eq!(err.partial.trajectory.len(), 40);
    assert_eq!(err.partial.transitions.len(), 40);
    assert!(matches!(err.error, Error::Stability { hour: 159, .. }));
    // failure during warm-up: nothing recorded
    let err = run_episode(&mut Fragile { fail_at: 10 }, &mut HoldPolicy, &w, &setup()).unwrap_err();
    assert!(err.partial.trajectory.is_empty());
}

#[test]
fn short_season_rejected() {
    let w = CityTable::default().synthesize("Beijing", 100, 0).unwrap();
    assert!(run_episode(&mut GroundTruth::new(single_apartment()), &mut HoldPolicy, &w, &setup()).is_err());
}

proptest! {
    #[test]
    fn actions_stay_in_bounds(prev in 20.0..=50.0f64, base in 20.0..=50.0f64, a in 0..N_ACTIONS, inc in any::<bool>()) {
        let kind = if inc { ActionKind::Increment } else { ActionKind::BaselineDelta };
        let ts = apply_action(kind, prev, base, a).unwrap();
        prop_assert!((20.0..=50.0).contains(&ts));
    }

    #[test]
    fn reward_nonpositive_and_permutation_invariant(
        mut t in prop::collection::vec(5.0..30.0f64, 11), target in 15.0..20.0f64, rot in 0usize..11
    ) {
        let g = vec![target; 11];
        let r = reward(&t, &g).unwrap();
        prop_assert!(r <= 0.0);
        t.rotate_left(rot);
        let r2 = reward(&t, &g).unwrap();
        prop_assert!((r - r2).abs() < 1e-9);
    }
}
