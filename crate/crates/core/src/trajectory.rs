//! Hour-by-hour records of a simulated season and their CSV form.
//!
//! Plain schema: `hour,t_supply,m_dot,t_out,ghi,t_return,t_air_0..t_air_{n-1}`.
//! Episode schema appends `reward,action_index,baseline_ts`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub hour: usize,
    pub hour_of_day: u32,
    pub t_supply: f64,
    pub m_dot: f64,
    pub t_out: f64,
    pub ghi: f64,
    pub t_return: f64,
    /// Air temperature of every apartment the model reports.
    pub t_air: Vec<f64>,
    pub reward: f64,
    pub action_index: Option<usize>,
    pub baseline_ts: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Indices into `TrajectoryRow::t_air` of the occupied apartments.
    pub occupied: Vec<usize>,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn new(occupied: Vec<usize>) -> Self {
        Trajectory {
            occupied,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn occupied_t_air<'a>(&'a self, row: &'a TrajectoryRow) -> impl Iterator<Item = f64> + 'a {
        self.occupied.iter().map(move |&j| row.t_air[j])
    }

    /// Concatenate two trajectories of the same building.
    pub fn concat(mut self, other: &Trajectory) -> Self {
        assert_eq!(self.occupied, other.occupied, "different buildings");
        self.rows.extend(other.rows.iter().cloned());
        self
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, with_decisions: bool) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out, with_decisions)
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write, with_decisions: bool) -> std::io::Result<()> {
        let n = self.rows.first().map_or(0, |r| r.t_air.len());
        let mut header = String::from("hour,t_supply,m_dot,t_out,ghi,t_return");
        for j in 0..n {
            header.push_str(&format!(",t_air_{j}"));
        }
        if with_decisions {
            header.push_str(",reward,action_index,baseline_ts");
        }
        writeln!(out, "{header}")?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{}",
                r.hour, r.t_supply, r.m_dot, r.t_out, r.ghi, r.t_return
            )?;
            for t in &r.t_air {
                write!(out, ",{t}")?;
            }
            if with_decisions {
                let a = r.action_index.map(|a| a.to_string()).unwrap_or_default();
                write!(out, ",{},{a},{}", r.reward, r.baseline_ts)?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    /// Read either schema back. Occupancy is not part of the file and must
    /// be supplied.
    pub fn read_csv(path: impl AsRef<Path>, occupied: Vec<usize>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let n_air = headers.iter().filter(|h| h.starts_with("t_air_")).count();
        let with_decisions = headers.iter().any(|h| h == "reward");
        let mut traj = Trajectory::new(occupied);
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("missing column {k}"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    })
            };
            let hour = num(0)? as usize;
            let t_air = (0..n_air).map(|j| num(6 + j)).collect::<Result<Vec<_>>>()?;
            let (reward, action_index, baseline_ts) = if with_decisions {
                let a = rec.get(7 + n_air).unwrap_or("");
                let action = if a.is_empty() {
                    None
                } else {
                    Some(a.parse::<usize>().map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    })?)
                };
                (num(6 + n_air)?, action, num(8 + n_air)?)
            } else {
                (0.0, None, 0.0)
            };
            traj.rows.push(TrajectoryRow {
                hour,
                hour_of_day: (hour % 24) as u32,
                t_supply: num(1)?,
                m_dot: num(2)?,
                t_out: num(3)?,
                ghi: num(4)?,
                t_return: num(5)?,
                t_air,
                reward,
                action_index,
                baseline_ts,
            });
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(vec![1]);
        for h in 0..3 {
            t.rows.push(TrajectoryRow {
                hour: 119 + h,
                hour_of_day: ((119 + h) % 24) as u32,
                t_supply: 30.5,
                m_dot: 5.0,
                t_out: -1.25,
                ghi: 0.0,
                t_return: 29.0,
                t_air: vec![17.0, 18.25],
                reward: -0.25,
                action_index: if h == 0 { None } else { Some(h) },
                baseline_ts: 31.0,
            });
        }
        t
    }

    #[test]
    fn csv_round_trip_with_decisions() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = sample();
        t.write_csv(&p, true).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("hour,t_supply,m_dot,t_out,ghi,t_return,t_air_0,t_air_1,reward,action_index,baseline_ts\n"));
        assert_eq!(Trajectory::read_csv(&p, vec![1]).unwrap(), t);
    }

    #[test]
    fn plain_schema_has_no_decision_columns() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "hour,t_supply,m_dot,t_out,ghi,t_return,t_air_0,t_air_1");
        assert_eq!(text.lines().count(), 4);
    }
}
