//! Ground-truth plant: a substation feeding a six-storey, three-orientation
//! building through a radiant floor loop.
//!
//! Each apartment is a 2R2C node pair (air, radiant mass). Water exchanges
//! heat with the mass only, and only towards it (the loop cannot cool). Air
//! exchanges with the mass, the outdoors, the sun through its facade and the
//! neighbouring apartments through party walls. Integration is explicit Euler
//! with 60 sub-steps per hour.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::weather::WeatherRecord;

/// Specific heat of water, J/(kg·K).
pub const CP_WATER: f64 = 4180.0;
/// Secondary-loop flow rate used for every experiment, kg/s.
pub const NOMINAL_M_DOT: f64 = 5.0;
pub const T_SUPPLY_MIN: f64 = 20.0;
pub const T_SUPPLY_MAX: f64 = 50.0;
pub const HOUR: f64 = 3600.0;
pub const SUBSTEPS_PER_HOUR: usize = 60;
/// Largest temperature change tolerated within one sub-step.
pub const MAX_SUBSTEP_DELTA: f64 = 5.0;
pub const FLOORS: usize = 6;
/// Apartments left unoccupied: the four top/bottom corner units plus three
/// interior ones.
pub const EMPTY_APARTMENTS: [usize; 7] = [0, 2, 7, 9, 14, 15, 17];

const SANITY_BAND: (f64, f64) = (-30.0, 45.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    East,
    South,
    West,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::East, Orientation::South, Orientation::West];

    /// Facade azimuth from due south, positive west, radians.
    pub fn azimuth(self) -> f64 {
        match self {
            Orientation::East => -std::f64::consts::FRAC_PI_2,
            Orientation::South => 0.0,
            Orientation::West => std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Solar flux reaching a vertical facade, W/m2.
///
/// A diffuse share of 0.2·GHI plus a beam share weighted by the cosine of
/// the incidence angle on the facade, capped at 1.2·GHI.
pub fn orient_flux(record: &WeatherRecord, orientation: Orientation) -> f64 {
    if record.ghi <= 0.0 {
        return 0.0;
    }
    let sun = record.solar_position();
    if sun.elevation <= 0.0 {
        return 0.0;
    }
    let incidence = (sun.elevation.cos() * (sun.azimuth - orientation.azimuth()).cos()).max(0.0);
    record.ghi * (0.2 + incidence).min(1.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApartmentParams {
    /// Air and furniture capacitance, J/K.
    pub c_air: f64,
    /// Radiant floor capacitance, J/K.
    pub c_mass: f64,
    /// Envelope conductance to outdoors, W/K.
    pub ua_env: f64,
    /// Floor-to-air conductance, W/K.
    pub h_mass_air: f64,
    /// Loop-water-to-floor conductance, W/K.
    pub ua_water_mass: f64,
    /// Effective solar aperture, m2.
    pub solar_aperture: f64,
    pub orientation: Orientation,
    pub occupied: bool,
    pub neighbor_ids: Vec<usize>,
    /// Conductance per party wall, W/K.
    pub ua_party: f64,
}

impl ApartmentParams {
    pub fn nominal(orientation: Orientation) -> Self {
        ApartmentParams {
            c_air: 1.0e7,
            c_mass: 4.0e7,
            ua_env: 120.0,
            h_mass_air: 600.0,
            ua_water_mass: 350.0,
            solar_aperture: 3.0,
            orientation,
            occupied: true,
            neighbor_ids: Vec::new(),
            ua_party: 200.0,
        }
    }
}

/// A validated set of apartments plus the party-wall edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BuildingFile", into = "BuildingFile")]
pub struct Building {
    apartments: Vec<ApartmentParams>,
    edges: Vec<(usize, usize, f64)>,
    occupied: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct BuildingFile {
    apartment: Vec<ApartmentParams>,
}

impl TryFrom<BuildingFile> for Building {
    type Error = Error;
    fn try_from(f: BuildingFile) -> Result<Self> {
        Building::new(f.apartment)
    }
}

impl From<Building> for BuildingFile {
    fn from(b: Building) -> Self {
        BuildingFile {
            apartment: b.apartments,
        }
    }
}

impl Building {
    pub fn new(apartments: Vec<ApartmentParams>) -> Result<Self> {
        if apartments.is_empty() {
            return Err(Error::invariant("building needs at least one apartment"));
        }
        let n = apartments.len();
        for (j, a) in apartments.iter().enumerate() {
            let positive = [
                a.c_air,
                a.c_mass,
                a.ua_env,
                a.h_mass_air,
                a.ua_water_mass,
                a.ua_party,
            ];
            if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invariant(format!(
                    "apartment {j}: capacitances and conductances must be > 0"
                )));
            }
            if !(a.solar_aperture.is_finite() && a.solar_aperture >= 0.0) {
                return Err(Error::invariant(format!("apartment {j}: solar aperture must be >= 0")));
            }
            for &k in &a.neighbor_ids {
                if k >= n || k == j {
                    return Err(Error::invariant(format!("apartment {j}: bad neighbour id {k}")));
                }
                if !apartments[k].neighbor_ids.contains(&j) {
                    return Err(Error::invariant(format!(
                        "adjacency must be symmetric ({j} lists {k} but not vice versa)"
                    )));
                }
            }
        }
        let mut edges = Vec::new();
        for (j, a) in apartments.iter().enumerate() {
            for &k in &a.neighbor_ids {
                if j < k {
                    edges.push((j, k, 0.5 * (a.ua_party + apartments[k].ua_party)));
                }
            }
        }
        let occupied = (0..n).filter(|&j| apartments[j].occupied).collect();
        Ok(Building {
            apartments,
            edges,
            occupied,
        })
    }

    pub fn apartments(&self) -> &[ApartmentParams] {
        &self.apartments
    }

    pub fn len(&self) -> usize {
        self.apartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apartments.is_empty()
    }

    /// Indices of occupied apartments, ascending.
    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    /// Party-wall conductance between two apartments (0 if not adjacent).
    pub fn party_conductance(&self, j: usize, k: usize) -> f64 {
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        self.edges
            .iter()
            .find(|e| e.0 == a && e.1 == b)
            .map_or(0.0, |e| e.2)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// The 18-apartment reference building. Parameters are jittered ±20% per
/// apartment from `seed`; the empty-unit pattern is fixed.
pub fn default_building(seed: u64) -> Building {
    let mut rng = rng::rng_from(rng::derive_seed(seed, "building"));
    let mut jitter = move || rng.random_range(0.8..=1.2);
    let mut apartments = Vec::with_capacity(FLOORS * 3);
    for floor in 0..FLOORS {
        for (o, &orientation) in Orientation::ALL.iter().enumerate() {
            let id = 3 * floor + o;
            let mut a = ApartmentParams::nominal(orientation);
            a.c_air *= jitter();
            a.c_mass *= jitter();
            a.ua_env *= jitter();
            a.h_mass_air *= jitter();
            a.ua_water_mass *= jitter();
            a.ua_party *= jitter();
            a.solar_aperture *= jitter();
            a.occupied = !EMPTY_APARTMENTS.contains(&id);
            if o > 0 {
                a.neighbor_ids.push(id - 1);
            }
            if o < 2 {
                a.neighbor_ids.push(id + 1);
            }
            if floor > 0 {
                a.neighbor_ids.push(id - 3);
            }
            if floor + 1 < FLOORS {
                a.neighbor_ids.push(id + 3);
            }
            apartments.push(a);
        }
    }
    Building::new(apartments).expect("reference building is valid")
}

/// A lone, nominal, south-facing apartment with no neighbours.
pub fn single_apartment() -> Building {
    Building::new(vec![ApartmentParams::nominal(Orientation::South)]).expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingState {
    pub t_air: Vec<f64>,
    pub t_mass: Vec<f64>,
    pub t_return: f64,
}

impl BuildingState {
    pub fn uniform(n: usize, t_air: f64, t_mass: f64) -> Self {
        BuildingState {
            t_air: vec![t_air; n],
            t_mass: vec![t_mass; n],
            t_return: t_mass,
        }
    }

    fn check(&self, n: usize, hour: usize) -> Result<()> {
        if self.t_air.len() != n || self.t_mass.len() != n {
            return Err(Error::InvalidInput(format!(
                "state has {} air / {} mass temperatures for {n} apartments",
                self.t_air.len(),
                self.t_mass.len()
            )));
        }
        let all = self.t_air.iter().chain(&self.t_mass).chain(std::iter::once(&self.t_return));
        if all.clone().any(|t| !t.is_finite()) {
            return Err(Error::Stability {
                hour,
                message: "non-finite temperature".into(),
            });
        }
        if let Some(t) = self
            .t_air
            .iter()
            .find(|t| !(SANITY_BAND.0..=SANITY_BAND.1).contains(*t))
        {
            return Err(Error::Stability {
                hour,
                message: format!("air temperature {t:.2} degC outside the sanity band"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstationCommand {
    pub t_supply: f64,
    pub m_dot: f64,
}

impl SubstationCommand {
    pub fn new(t_supply: f64, m_dot: f64) -> Result<Self> {
        let cmd = SubstationCommand { t_supply, m_dot };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn nominal(t_supply: f64) -> Self {
        SubstationCommand {
            t_supply,
            m_dot: NOMINAL_M_DOT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(T_SUPPLY_MIN..=T_SUPPLY_MAX).contains(&self.t_supply) {
            return Err(Error::InvalidInput(format!(
                "supply temperature {} outside [{T_SUPPLY_MIN}, {T_SUPPLY_MAX}]",
                self.t_supply
            )));
        }
        if !(self.m_dot.is_finite() && self.m_dot > 0.0) {
            return Err(Error::InvalidInput("flow rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Heat transferred through the exchanger, W.
pub fn heat_duty(cmd: &SubstationCommand, t_return: f64) -> f64 {
    cmd.m_dot * CP_WATER * (cmd.t_supply - t_return)
}

/// New state plus the integrator's own heat ledger for the step, in joules.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: BuildingState,
    pub water_heat: f64,
    pub solar_heat: f64,
    pub envelope_loss: f64,
}

pub fn step(
    building: &Building,
    state: &BuildingState,
    cmd: &SubstationCommand,
    weather: &WeatherRecord,
    dt: f64,
) -> Result<BuildingState> {
    step_detailed(building, state, cmd, weather, dt).map(|r| r.state)
}

pub fn step_detailed(
    building: &Building,
    state: &BuildingState,
    cmd: &SubstationCommand,
    weather: &WeatherRecord,
    dt: f64,
) -> Result<StepReport> {
    let hour = weather.hour_index as usize;
    let n = building.len();
    state.check(n, hour)?;
    cmd.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be > 0, got {dt}")));
    }
    let substeps = ((dt / HOUR) * SUBSTEPS_PER_HOUR as f64).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;

    let aps = &building.apartments;
    let solar: Vec<f64> = aps
        .iter()
        .map(|a| a.solar_aperture * orient_flux(weather, a.orientation))
        .collect();
    let solar_power: f64 = solar.iter().sum();

    let mut t_air = state.t_air.clone();
    let mut t_mass = state.t_mass.clone();
    let mut party = vec![0.0; n];
    let (mut water_heat, mut envelope_loss) = (0.0, 0.0);

    for _ in 0..substeps {
        party.iter_mut().for_each(|p| *p = 0.0);
        for &(j, k, g) in &building.edges {
            let f = g * (t_air[k] - t_air[j]);
            party[j] += f;
            party[k] -= f;
        }
        let mut q_total = 0.0;
        for j in 0..n {
            let a = &aps[j];
            let q_w = if a.occupied {
                (a.ua_water_mass * (cmd.t_supply - t_mass[j])).max(0.0)
            } else {
                0.0
            };
            let q_ma = a.h_mass_air * (t_mass[j] - t_air[j]);
            let q_env = a.ua_env * (t_air[j] - weather.t_out);
            let d_mass = (q_w - q_ma) * h / a.c_mass;
            let d_air = (q_ma - q_env + solar[j] + party[j]) * h / a.c_air;
            if d_mass.abs() > MAX_SUBSTEP_DELTA || d_air.abs() > MAX_SUBSTEP_DELTA || !(d_mass + d_air).is_finite() {
                return Err(Error::Stability {
                    hour,
                    message: format!("apartment {j} moved more than {MAX_SUBSTEP_DELTA} K in one sub-step"),
                });
            }
            t_mass[j] += d_mass;
            t_air[j] += d_air;
            q_total += q_w;
            envelope_loss += q_env * h;
        }
        water_heat += q_total * h;
    }

    let mean_q = water_heat / dt;
    let next = BuildingState {
        t_air,
        t_mass,
        t_return: cmd.t_supply - mean_q / (cmd.m_dot * CP_WATER),
    };
    next.check(n, hour)?;
    Ok(StepReport {
        state: next,
        water_heat,
        solar_heat: solar_power * dt,
        envelope_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weather::WeatherRecord;

    fn record(t_out: f64, ghi: f64, hour_of_day: u32) -> WeatherRecord {
        WeatherRecord {
            hour_index: 0,
            hour_of_day,
            day_of_year: 360,
            t_out,
            ghi,
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let b = default_building(3);
        let s = BuildingState::uniform(b.len(), 25.0, 25.0);
        let next = step(&b, &s, &SubstationCommand::nominal(25.0), &record(25.0, 0.0, 0), HOUR).unwrap();
        for (a, m) in next.t_air.iter().zip(&next.t_mass) {
            assert_eq!(*a, 25.0);
            assert_eq!(*m, 25.0);
        }
        assert_eq!(next.t_return, 25.0);
    }

    #[test]
    fn heat_duty_examples() {
        assert_eq!(heat_duty(&SubstationCommand::new(45.0, 1.0).unwrap(), 35.0), 41_800.0);
        assert_eq!(heat_duty(&SubstationCommand::nominal(40.0), 40.0), 0.0);
        assert!((heat_duty(&SubstationCommand::new(40.0, 5.0).unwrap(), 36.5) - 73_150.0).abs() < 1e-9);
    }

    #[test]
    fn return_temperature_from_duty() {
        // sum q_w = 104500 W at 5 kg/s drops 5 K; drive that through one
        // apartment whose water conductance makes q_w exactly 104500 W.
        let mut a = ApartmentParams::nominal(Orientation::South);
        a.ua_water_mass = 104_500.0 / 20.0;
        a.c_mass = 1e15;
        let b = Building::new(vec![a]).unwrap();
        let s = BuildingState::uniform(1, 20.0, 20.0);
        let next = step(&b, &s, &SubstationCommand::nominal(40.0), &record(20.0, 0.0, 0), HOUR).unwrap();
        assert!((next.t_return - 35.0).abs() < 1e-6, "{}", next.t_return);
    }

    #[test]
    fn default_building_layout() {
        let b = default_building(11);
        assert_eq!(b.len(), 18);
        assert_eq!(b.occupied().len(), 11);
        assert_eq!(b.apartments().iter().filter(|a| !a.occupied).count(), 7);
        assert_eq!(default_building(11), b);
        assert_ne!(default_building(12), b);
        for a in b.apartments() {
            let nominal = ApartmentParams::nominal(a.orientation);
            assert!((0.8..=1.2).contains(&(a.c_air / nominal.c_air)));
            assert!((0.8..=1.2).contains(&(a.ua_env / nominal.ua_env)));
        }
    }

    #[test]
    fn asymmetric_adjacency_rejected() {
        let mut a = ApartmentParams::nominal(Orientation::East);
        a.neighbor_ids = vec![1];
        let b = ApartmentParams::nominal(Orientation::South);
        assert!(Building::new(vec![a, b]).is_err());
        let mut c = ApartmentParams::nominal(Orientation::East);
        c.ua_env = 0.0;
        assert!(Building::new(vec![c]).is_err());
    }

    #[test]
    fn party_conductance_symmetric() {
        let b = default_building(5);
        for j in 0..b.len() {
            for k in 0..b.len() {
                assert_eq!(b.party_conductance(j, k), b.party_conductance(k, j));
            }
        }
        assert!(b.party_conductance(0, 1) > 0.0);
        assert_eq!(b.party_conductance(0, 2), 0.0);
    }

    #[test]
    fn instability_detected() {
        let mut a = ApartmentParams::nominal(Orientation::South);
        a.c_air = 1.0;
        let b = Building::new(vec![a]).unwrap();
        let s = BuildingState::uniform(1, 20.0, 20.0);
        let err = step(&b, &s, &SubstationCommand::nominal(40.0), &record(0.0, 0.0, 0), HOUR).unwrap_err();
        assert!(matches!(err, Error::Stability { .. }));
    }

    #[test]
    fn supply_bounds_enforced() {
        assert!(SubstationCommand::new(19.9, 5.0).is_err());
        assert!(SubstationCommand::new(50.1, 5.0).is_err());
        assert!(SubstationCommand::new(30.0, 0.0).is_err());
    }

    #[test]
    fn no_flux_without_sun() {
        for o in Orientation::ALL {
            assert_eq!(orient_flux(&record(0.0, 0.0, 12), o), 0.0);
        }
    }

    #[test]
    fn south_peaks_at_noon() {
        let flux = |h: u32| orient_flux(&record(0.0, 500.0, h), Orientation::South);
        let noon = flux(12);
        for h in 0..24 {
            assert!(flux(h) <= noon);
        }
        let east = |h: u32| orient_flux(&record(0.0, 500.0, h), Orientation::East);
        let west = |h: u32| orient_flux(&record(0.0, 500.0, h), Orientation::West);
        assert!(east(9) > west(9));
        assert!(west(15) > east(15));
    }

    #[test]
    fn flux_bounded_by_ghi() {
        for h in 0..24 {
            for o in Orientation::ALL {
                let f = orient_flux(&record(0.0, 700.0, h), o);
                assert!((0.0..=700.0 * 1.2).contains(&f));
            }
        }
    }

    #[test]
    fn building_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("building.toml");
        let b = default_building(2);
        b.save(&path).unwrap();
        assert_eq!(Building::load(&path).unwrap(), b);
    }
}
