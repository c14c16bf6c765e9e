//! Workspace geometry: states, rectangles, region classification and the
//! circular waypoint action set.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::scalar::{to_f64, Scalar};

/// A point of the planar workspace, in meters.
pub type State<T> = Vec2<T>;

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        let all_finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        if !all_finite || !(x0 < x1) || !(y0 < y1) {
            return Err(Error::InvalidParameter(format!(
                "rectangle [{x0}, {x1}] x [{y0}, {y1}] must have finite, increasing corners"
            )));
        }
        Ok(Self {
            min: Vec2::new(x0, y0),
            max: Vec2::new(x1, y1),
        })
    }

    pub fn contains(&self, p: State<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Self) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// True when the interiors overlap (positive-area intersection).
    pub fn overlaps(&self, other: &Self) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }

    /// True when the closed rectangles share any point.
    pub fn intersects(&self, other: &Self) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn center(&self) -> State<T> {
        let half = crate::scalar::lit::<T>(0.5);
        Vec2::new(
            (self.min.x + self.max.x) * half,
            (self.min.y + self.max.y) * half,
        )
    }

    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Nearest point of the rectangle.
    pub fn project(&self, p: State<T>) -> State<T> {
        Vec2::new(
            p.x.max(self.min.x).min(self.max.x),
            p.y.max(self.min.y).min(self.max.y),
        )
    }
}

/// Classification of a point with respect to a [`Workspace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Free,
    Obstacle,
    Goal,
    Outside,
}

impl Region {
    pub fn is_terminal(self) -> bool {
        matches!(self, Region::Obstacle | Region::Goal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Free => "free",
            Region::Obstacle => "obstacle",
            Region::Goal => "goal",
            Region::Outside => "outside",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rectangular planning region with rectangular obstacles and a goal area.
#[derive(Debug, Clone, PartialEq)]
pub struct Workspace<T> {
    bounds: Rect<T>,
    obstacles: Vec<Rect<T>>,
    goal: Rect<T>,
    goal_value: T,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(
        bounds: Rect<T>,
        obstacles: Vec<Rect<T>>,
        goal: Rect<T>,
        goal_value: T,
    ) -> Result<Self> {
        if !bounds.contains_rect(&goal) {
            return Err(Error::InvalidParameter(
                "goal must lie inside the bounds".into(),
            ));
        }
        for (k, o) in obstacles.iter().enumerate() {
            if !bounds.contains_rect(o) {
                return Err(Error::InvalidParameter(format!(
                    "obstacle {k} must lie inside the bounds"
                )));
            }
            if o.intersects(&goal) {
                return Err(Error::InvalidParameter(format!(
                    "obstacle {k} intersects the goal"
                )));
            }
            // Arrival rewards sum per-obstacle masses, so interiors must be disjoint.
            if let Some(j) = obstacles[..k].iter().position(|p| p.overlaps(o)) {
                return Err(Error::InvalidParameter(format!(
                    "obstacles {j} and {k} overlap"
                )));
            }
        }
        if !goal_value.is_finite() {
            return Err(Error::InvalidParameter("goal value must be finite".into()));
        }
        Ok(Self {
            bounds,
            obstacles,
            goal,
            goal_value,
        })
    }

    pub fn bounds(&self) -> &Rect<T> {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Rect<T>] {
        &self.obstacles
    }

    pub fn goal(&self) -> &Rect<T> {
        &self.goal
    }

    /// Designated goal state `s_g`, the center of the goal rectangle.
    pub fn goal_center(&self) -> State<T> {
        self.goal.center()
    }

    /// Prescribed value `v_g` at the goal.
    pub fn goal_value(&self) -> T {
        self.goal_value
    }

    /// Point classification with precedence outside > goal > obstacle > free.
    pub fn classify(&self, s: State<T>) -> Region {
        if !s.is_finite() || !self.bounds.contains(s) {
            Region::Outside
        } else if self.goal.contains(s) {
            Region::Goal
        } else if self.obstacles.iter().any(|o| o.contains(s)) {
            Region::Obstacle
        } else {
            Region::Free
        }
    }

    /// Fails unless `s` is a free (transient) state.
    pub fn require_free(&self, s: State<T>) -> Result<()> {
        match self.classify(s) {
            Region::Free => Ok(()),
            Region::Outside => Err(Error::OutsideWorkspace {
                x: to_f64(s.x),
                y: to_f64(s.y),
            }),
            r => Err(Error::NonTransientState {
                x: to_f64(s.x),
                y: to_f64(s.y),
                region: r.as_str(),
            }),
        }
    }
}

/// One-based index into the action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(u16);

impl Action {
    pub fn new(index: usize, count: usize) -> Result<Self> {
        if index == 0 || index > count || index > u16::MAX as usize {
            return Err(Error::ActionOutOfRange { index, count });
        }
        Ok(Self(index as u16))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn zero_based(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `count` waypoints evenly spaced on a circle of `radius` around the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSet<T> {
    count: usize,
    radius: T,
}

impl<T: Scalar> ActionSet<T> {
    pub fn new(count: usize, radius: T) -> Result<Self> {
        if count < 2 || count > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "action count must be at least 2, got {count}"
            )));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "action radius must be positive, got {radius}"
            )));
        }
        Ok(Self { count, radius })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        (1..=self.count).map(|i| Action(i as u16))
    }

    pub fn action(&self, index: usize) -> Result<Action> {
        Action::new(index, self.count)
    }

    /// Displacement `(r·cos(2πi/Q), r·sin(2πi/Q))` from the current state to waypoint `i`.
    pub fn displacement(&self, a: Action) -> Result<Vec2<T>> {
        let i = a.index();
        if i > self.count {
            return Err(Error::ActionOutOfRange {
                index: i,
                count: self.count,
            });
        }
        let theta = T::TAU() * T::from_usize(i).unwrap() / T::from_usize(self.count).unwrap();
        Ok(Vec2::new(
            self.radius * theta.cos(),
            self.radius * theta.sin(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws() -> Workspace<f64> {
        Workspace::new(
            Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            vec![Rect::new(2.0, 2.0, 4.0, 3.0).unwrap()],
            Rect::new(8.0, 8.0, 9.0, 9.0).unwrap(),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn classification_examples() {
        let w = ws();
        assert_eq!(w.classify(w.goal_center()), Region::Goal);
        assert_eq!(w.classify(Vec2::new(-0.1, 5.0)), Region::Outside);
        assert_eq!(w.classify(Vec2::new(2.0, 2.0)), Region::Obstacle);
        assert_eq!(w.classify(Vec2::new(4.0, 3.0)), Region::Obstacle);
        assert_eq!(w.classify(Vec2::new(5.0, 5.0)), Region::Free);
        assert_eq!(w.classify(Vec2::new(f64::NAN, 5.0)), Region::Outside);
    }

    #[test]
    fn workspace_rejects_goal_on_obstacle() {
        let err = Workspace::new(
            Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            vec![Rect::new(7.0, 7.0, 8.0, 8.0).unwrap()],
            Rect::new(8.0, 8.0, 9.0, 9.0).unwrap(),
            10.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn displacement_examples() {
        let set = ActionSet::new(12, 0.5_f64).unwrap();
        let d = set.displacement(set.action(12).unwrap()).unwrap();
        assert!((d.x - 0.5).abs() < 1e-15 && d.y.abs() < 1e-15);

        let four = ActionSet::new(4, 1.0_f64).unwrap();
        let d = four.displacement(four.action(1).unwrap()).unwrap();
        assert!(d.x.abs() < 1e-15 && (d.y - 1.0).abs() < 1e-15);

        // i=3 of 12 is a quarter turn: (0, 0.5).
        let d = set.displacement(set.action(3).unwrap()).unwrap();
        assert!(d.x.abs() < 1e-15 && (d.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn action_index_out_of_range() {
        let set = ActionSet::new(12, 0.5_f64).unwrap();
        assert!(matches!(
            set.action(13),
            Err(Error::ActionOutOfRange {
                index: 13,
                count: 12
            })
        ));
        assert!(set.action(0).is_err());
        assert!(ActionSet::new(1, 0.5_f64).is_err());
    }
}
