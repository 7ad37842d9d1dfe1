//! Per-step trajectory recording and its CSV layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::particles::ParticleSet;

/// Scalar series names accepted by [`RunRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scalar {
    Ksd,
    Loglik,
    Bandwidth,
}

impl Scalar {
    pub fn as_str(self) -> &'static str {
        match self {
            Scalar::Ksd => "ksd",
            Scalar::Loglik => "loglik",
            Scalar::Bandwidth => "bandwidth",
        }
    }
}

impl std::str::FromStr for Scalar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ksd" => Ok(Scalar::Ksd),
            "loglik" => Ok(Scalar::Loglik),
            "bandwidth" => Ok(Scalar::Bandwidth),
            other => Err(Error::Recording(format!("unknown scalar `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub particles: Option<ParticleSet>,
    pub scalars: Vec<(Scalar, f64)>,
}

impl Snapshot {
    pub fn scalar(&self, name: Scalar) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// Immutable rows keyed by time step, iterated in ascending order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    rows: BTreeMap<usize, Snapshot>,
}

impl RunRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &Snapshot)> {
        self.rows.iter().map(|(t, s)| (*t, s))
    }

    pub fn get(&self, t: usize) -> Option<&Snapshot> {
        self.rows.get(&t)
    }

    pub fn last(&self) -> Option<(usize, &Snapshot)> {
        self.rows.iter().next_back().map(|(t, s)| (*t, s))
    }

    /// The `(t, value)` series for one scalar, ascending in t.
    pub fn series(&self, name: Scalar) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter_map(|(t, s)| s.scalar(name).map(|v| (*t, v)))
            .collect()
    }

    fn insert(mut self, t: usize, snap: Snapshot) -> Result<Self> {
        let mut seen = Vec::with_capacity(snap.scalars.len());
        for (name, value) in &snap.scalars {
            if seen.contains(name) {
                return Err(Error::Recording(format!(
                    "scalar `{}` given twice at t={t}",
                    name.as_str()
                )));
            }
            if !value.is_finite() {
                return Err(Error::Recording(format!(
                    "scalar `{}` is not finite at t={t}",
                    name.as_str()
                )));
            }
            seen.push(*name);
        }
        if self.rows.contains_key(&t) {
            return Err(Error::Recording(format!("duplicate snapshot at t={t}")));
        }
        self.rows.insert(t, snap);
        Ok(self)
    }

    /// Append the cloud at its own time step together with named scalars.
    pub fn record_snapshot(self, ps: &ParticleSet, scalars: &[(Scalar, f64)]) -> Result<Self> {
        let t = ps.time_step();
        self.insert(
            t,
            Snapshot {
                particles: Some(ps.clone()),
                scalars: scalars.to_vec(),
            },
        )
    }

    /// Append a scalar-only row (no particle snapshot).
    pub fn record_scalars(self, t: usize, scalars: &[(Scalar, f64)]) -> Result<Self> {
        self.insert(
            t,
            Snapshot {
                particles: None,
                scalars: scalars.to_vec(),
            },
        )
    }

    /// `t,particle_id,dim_0..dim_{D-1}` for every row carrying particles.
    pub fn write_snapshots_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self
            .rows
            .values()
            .find_map(|s| s.particles.as_ref().map(|p| p.dim()));
        let Some(dim) = dim else {
            writeln!(out, "t,particle_id")?;
            return Ok(());
        };
        let mut header = String::from("t,particle_id");
        for k in 0..dim {
            write!(header, ",dim_{k}").unwrap();
        }
        writeln!(out, "{header}")?;
        let mut line = String::new();
        for (t, snap) in &self.rows {
            let Some(ps) = &snap.particles else { continue };
            for (i, p) in ps.iter().enumerate() {
                line.clear();
                write!(line, "{t},{i}").unwrap();
                for v in p {
                    write!(line, ",{v}").unwrap();
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }

    /// `t,name,value` for every recorded scalar.
    pub fn write_scalars_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,name,value")?;
        for (t, snap) in &self.rows {
            for (name, value) in &snap.scalars {
                writeln!(out, "{t},{},{value}", name.as_str())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(t: usize) -> ParticleSet {
        ParticleSet::from_flat(vec![0.5, -1.0, 2.0, 0.25], 2, t).unwrap()
    }

    #[test]
    fn single_snapshot() {
        let r = RunRecord::new().record_snapshot(&cloud(0), &[]).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn duplicate_time_step_rejected() {
        let r = RunRecord::new().record_snapshot(&cloud(0), &[]).unwrap();
        assert!(matches!(
            r.record_snapshot(&cloud(0), &[]),
            Err(Error::Recording(_))
        ));
    }

    #[test]
    fn rows_ascending() {
        let r = RunRecord::new()
            .record_snapshot(&cloud(2), &[(Scalar::Ksd, 0.1)])
            .unwrap()
            .record_snapshot(&cloud(0), &[(Scalar::Ksd, 0.3)])
            .unwrap()
            .record_snapshot(&cloud(1), &[(Scalar::Ksd, 0.2)])
            .unwrap();
        let ts: Vec<_> = r.rows().map(|(t, _)| t).collect();
        assert_eq!(ts, vec![0, 1, 2]);
        assert_eq!(r.series(Scalar::Ksd), vec![(0, 0.3), (1, 0.2), (2, 0.1)]);
    }

    #[test]
    fn csv_layout() {
        let r = RunRecord::new()
            .record_snapshot(&cloud(0), &[(Scalar::Ksd, 0.5), (Scalar::Bandwidth, 1.0)])
            .unwrap();
        let mut buf = Vec::new();
        r.write_snapshots_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,particle_id,dim_0,dim_1\n0,0,0.5,-1\n0,1,2,0.25\n");
        let mut buf = Vec::new();
        r.write_scalars_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,name,value\n0,ksd,0.5\n0,bandwidth,1\n");
    }

    #[test]
    fn scalar_names_parse() {
        assert_eq!("ksd".parse::<Scalar>().unwrap(), Scalar::Ksd);
        assert!("energy".parse::<Scalar>().is_err());
    }
}
