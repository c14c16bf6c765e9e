//! Supporting-state selection: lattice, uniform sampling and slope-weighted
//! importance sampling. Every set carries one pinned state at the goal center.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{State, Workspace};
use crate::rng;
use crate::scalar::{lit, to_f64, Scalar};
use crate::terrain::TerrainModel;

/// Minimum spacing kept between distinct supporting states.
pub const DEDUP_RADIUS: f64 = 1e-6;

/// Floor added to slope weights, radians.
pub const SLOPE_WEIGHT_FLOOR: f64 = 1e-3;

/// How a supporting state was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Lattice,
    Uniform,
    Importance,
    PinnedGoal,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Lattice => "lattice",
            Origin::Uniform => "uniform",
            Origin::Importance => "importance",
            Origin::PinnedGoal => "pinned-goal",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" => Ok(Origin::Lattice),
            "uniform" => Ok(Origin::Uniform),
            "importance" => Ok(Origin::Importance),
            "pinned-goal" => Ok(Origin::PinnedGoal),
            other => Err(Error::Parse(format!("unknown support tag `{other}`"))),
        }
    }
}

/// Ordered supporting states with their origin tags.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet<T> {
    states: Vec<State<T>>,
    origins: Vec<Origin>,
}

#[derive(Serialize, Deserialize)]
struct SupportRecord {
    x: f64,
    y: f64,
    tag: String,
}

impl<T: Scalar> SupportSet<T> {
    pub fn new(states: Vec<State<T>>, origins: Vec<Origin>) -> Result<Self> {
        if states.len() != origins.len() {
            return Err(Error::Dimension("one origin tag per state".into()));
        }
        Ok(Self { states, origins })
    }

    pub fn states(&self) -> &[State<T>] {
        &self.states
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn pinned_goal_index(&self) -> Option<usize> {
        self.origins.iter().position(|&o| o == Origin::PinnedGoal)
    }

    /// Checks bounds, separation and the single pinned goal.
    pub fn validate(&self, ws: &Workspace<T>) -> Result<()> {
        for (i, s) in self.states.iter().enumerate() {
            if !ws.bounds().contains(*s) {
                return Err(Error::InvalidParameter(format!(
                    "supporting state {i} lies outside the workspace"
                )));
            }
        }
        let sep = lit::<T>(DEDUP_RADIUS);
        for i in 0..self.len() {
            for j in 0..i {
                if (self.states[i] - self.states[j]).norm() <= sep {
                    return Err(Error::NearDuplicateSupport {
                        first: j,
                        second: i,
                    });
                }
            }
        }
        let pinned: Vec<usize> = self
            .origins
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == Origin::PinnedGoal)
            .map(|(i, _)| i)
            .collect();
        match pinned.as_slice() {
            [i] if self.states[*i] == ws.goal_center() => Ok(()),
            [_] => Err(Error::InvalidParameter(
                "pinned goal state is not at the goal center".into(),
            )),
            _ => Err(Error::InvalidParameter(format!(
                "expected exactly one pinned goal state, found {}",
                pinned.len()
            ))),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (s, o) in self.states.iter().zip(&self.origins) {
            w.serialize(SupportRecord {
                x: to_f64(s.x),
                y: to_f64(s.y),
                tag: o.as_str().to_string(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut states = Vec::new();
        let mut origins = Vec::new();
        for rec in rdr.deserialize::<SupportRecord>() {
            let rec = rec?;
            let conv = |v: f64| {
                T::from_f64(v)
                    .ok_or_else(|| Error::Parse(format!("coordinate {v} not representable")))
            };
            states.push(State::new(conv(rec.x)?, conv(rec.y)?));
            origins.push(rec.tag.parse()?);
        }
        Self::new(states, origins)
    }
}

fn too_close<T: Scalar>(s: State<T>, others: &[State<T>]) -> bool {
    let r = lit::<T>(DEDUP_RADIUS);
    others.iter().any(|o| (*o - s).norm() <= r)
}

/// `n × n` cell-center lattice over the bounds plus the pinned goal center.
/// A lattice point within the dedup radius of the goal center is replaced by it.
pub fn lattice<T: Scalar>(ws: &Workspace<T>, n_per_axis: usize) -> Result<SupportSet<T>> {
    lattice_dims(ws, n_per_axis, n_per_axis)
}

/// `nx × ny` cell-center lattice; see [`lattice`].
pub fn lattice_dims<T: Scalar>(ws: &Workspace<T>, nx: usize, ny: usize) -> Result<SupportSet<T>> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "lattice needs at least 2 points per axis, got {nx} x {ny}"
        )));
    }
    let b = ws.bounds();
    let (dx, dy) = (
        b.width() / lit::<T>(nx as f64),
        b.height() / lit::<T>(ny as f64),
    );
    let half = lit::<T>(0.5);
    let goal = ws.goal_center();
    let mut states = Vec::with_capacity(nx * ny + 1);
    let mut origins = Vec::with_capacity(nx * ny + 1);
    let mut replaced = false;
    for j in 0..ny {
        for i in 0..nx {
            let p = State::new(
                b.min.x + (lit::<T>(i as f64) + half) * dx,
                b.min.y + (lit::<T>(j as f64) + half) * dy,
            );
            if !replaced && too_close(p, &[goal]) {
                states.push(goal);
                origins.push(Origin::PinnedGoal);
                replaced = true;
            } else {
                states.push(p);
                origins.push(Origin::Lattice);
            }
        }
    }
    if !replaced {
        states.push(goal);
        origins.push(Origin::PinnedGoal);
    }
    SupportSet::new(states, origins)
}

fn uniform_points<T: Scalar>(
    ws: &Workspace<T>,
    count: usize,
    seed: u64,
    stream_key: u64,
) -> Vec<State<T>> {
    let b = ws.bounds();
    let goal = ws.goal_center();
    let mut rng = rng::stream(seed, &[stream_key]);
    let mut out: Vec<State<T>> = Vec::with_capacity(count);
    for _ in 0..count {
        let p = State::new(
            T::uniform(&mut rng, b.min.x, b.max.x),
            T::uniform(&mut rng, b.min.y, b.max.y),
        );
        if !too_close(p, &[goal]) && !too_close(p, &out) {
            out.push(p);
        }
    }
    out
}

/// `n` i.i.d. uniform states over the bounds (after deduplication) plus the pinned goal.
pub fn uniform_sample<T: Scalar>(ws: &Workspace<T>, n: usize, seed: u64) -> Result<SupportSet<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "uniform sampling needs N >= 1".into(),
        ));
    }
    let mut states = uniform_points(ws, n, seed, 0x756e_6966);
    let mut origins = vec![Origin::Uniform; states.len()];
    states.push(ws.goal_center());
    origins.push(Origin::PinnedGoal);
    SupportSet::new(states, origins)
}

/// Draws `candidate_count` uniform candidates, weights each by its slope angle
/// plus [`SLOPE_WEIGHT_FLOOR`], and keeps `n` of them sampled without
/// replacement proportionally to weight. The goal center is pinned.
pub fn importance_sample<T: Scalar>(
    ws: &Workspace<T>,
    terrain: &TerrainModel<T>,
    n: usize,
    candidate_count: usize,
    seed: u64,
) -> Result<SupportSet<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "importance sampling needs N >= 1".into(),
        ));
    }
    if candidate_count < n {
        return Err(Error::InvalidParameter(format!(
            "candidate count {candidate_count} is smaller than N = {n}"
        )));
    }
    let candidates = uniform_points(ws, candidate_count, seed, 0x696d_7073);
    let floor = SLOPE_WEIGHT_FLOOR;
    let weighted: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, to_f64(terrain.slope_at(c)).max(0.0) + floor))
        .collect();
    let mut rng = rng::stream(seed, &[0x7265_7361]);
    let mut chosen: Vec<usize> = weighted
        .choose_multiple_weighted(&mut rng, n.min(weighted.len()), |&(_, w)| w)
        .map_err(|e| Error::InvalidParameter(format!("importance weights: {e}")))?
        .map(|&(i, _)| i)
        .collect();
    chosen.sort_unstable();
    let mut states: Vec<State<T>> = chosen.iter().map(|&i| candidates[i]).collect();
    let mut origins = vec![Origin::Importance; states.len()];
    states.push(ws.goal_center());
    origins.push(Origin::PinnedGoal);
    SupportSet::new(states, origins)
}

/// Default candidate pool size for [`importance_sample`].
pub fn default_candidate_count(n: usize) -> usize {
    50 * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn ws() -> Workspace<f64> {
        Workspace::new(
            Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            vec![],
            Rect::new(8.0, 8.0, 9.0, 9.0).unwrap(),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn two_by_two_lattice() {
        let s = lattice(&ws(), 2).unwrap();
        let expect = [(2.5, 2.5), (7.5, 2.5), (2.5, 7.5), (7.5, 7.5), (8.5, 8.5)];
        assert_eq!(s.len(), 5);
        for (p, e) in s.states().iter().zip(expect) {
            assert_eq!((p.x, p.y), e);
        }
        assert_eq!(s.pinned_goal_index(), Some(4));
        s.validate(&ws()).unwrap();
    }

    #[test]
    fn ten_by_ten_lattice_replaces_goal_point() {
        let s = lattice(&ws(), 10).unwrap();
        assert_eq!(s.len(), 100);
        let g = s.pinned_goal_index().unwrap();
        assert_eq!(s.states()[g], State::new(8.5, 8.5));
        assert_eq!(
            s.origins()
                .iter()
                .filter(|&&o| o == Origin::Lattice)
                .count(),
            99
        );
        s.validate(&ws()).unwrap();
    }

    #[test]
    fn lattice_rejects_single_point() {
        assert!(lattice(&ws(), 1).is_err());
    }

    #[test]
    fn uniform_is_seeded() {
        let a = uniform_sample(&ws(), 30, 11).unwrap();
        let b = uniform_sample(&ws(), 30, 11).unwrap();
        let c = uniform_sample(&ws(), 30, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let one = uniform_sample(&ws(), 1, 3).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one.origins(), &[Origin::Uniform, Origin::PinnedGoal]);
    }

    #[test]
    fn csv_roundtrip() {
        let a = uniform_sample(&ws(), 10, 5).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = SupportSet::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a, b);
        assert!(std::str::from_utf8(&buf).unwrap().starts_with("x,y,tag\n"));
    }

    #[test]
    fn validate_detects_missing_goal() {
        let s = SupportSet::new(vec![State::new(1.0, 1.0)], vec![Origin::Uniform]).unwrap();
        assert!(s.validate(&ws()).is_err());
    }
}
