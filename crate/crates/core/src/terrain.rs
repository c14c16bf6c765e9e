//! Elevation grids, slope fields and the slope-dependent trap model.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Rect, State};
use crate::scalar::{lit, to_f64, Scalar};

/// Dense elevation grid. Samples sit on grid nodes; row 0 is the maximum-y row.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap<T> {
    ncols: usize,
    nrows: usize,
    cellsize: T,
    elevations: Vec<T>,
}

impl<T: Scalar> Heightmap<T> {
    pub fn new(ncols: usize, nrows: usize, cellsize: T, elevations: Vec<T>) -> Result<Self> {
        if ncols < 2 || nrows < 2 {
            return Err(Error::InvalidParameter(format!(
                "heightmap must be at least 2x2, got {ncols}x{nrows}"
            )));
        }
        if !(cellsize > T::zero()) || !cellsize.is_finite() {
            return Err(Error::InvalidParameter("cellsize must be positive".into()));
        }
        if elevations.len() != ncols * nrows {
            return Err(Error::Dimension(format!(
                "expected {} elevations, got {}",
                ncols * nrows,
                elevations.len()
            )));
        }
        if elevations.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter("elevations must be finite".into()));
        }
        Ok(Self {
            ncols,
            nrows,
            cellsize,
            elevations,
        })
    }

    /// Samples `f(x, y)` on the node lattice covering `[0, (ncols−1)·cellsize] × [0, (nrows−1)·cellsize]`.
    pub fn from_fn(ncols: usize, nrows: usize, cellsize: T, f: impl Fn(T, T) -> T) -> Result<Self> {
        let mut elevations = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            let y = lit::<T>((nrows - 1 - r) as f64) * cellsize;
            for c in 0..ncols {
                let x = lit::<T>(c as f64) * cellsize;
                elevations.push(f(x, y));
            }
        }
        Self::new(ncols, nrows, cellsize, elevations)
    }

    /// Parses the plain-text format: a header `ncols nrows cellsize` followed by
    /// `nrows` rows of whitespace-separated elevations, first row at maximum y.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("heightmap: missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "heightmap header must be `ncols nrows cellsize`, got `{header}`"
            )));
        }
        let ncols: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("heightmap: bad ncols `{}`", fields[0])))?;
        let nrows: usize = fields[1]
            .parse()
            .map_err(|_| Error::Parse(format!("heightmap: bad nrows `{}`", fields[1])))?;
        let cellsize = parse_scalar::<T>(fields[2], "cellsize")?;
        let mut elevations = Vec::with_capacity(ncols * nrows);
        let mut rows_seen = 0;
        for (r, line) in lines.enumerate() {
            let row: Vec<T> = line
                .split_whitespace()
                .map(|tok| parse_scalar(tok, "elevation"))
                .collect::<Result<_>>()?;
            if row.len() != ncols {
                return Err(Error::Parse(format!(
                    "heightmap row {r}: expected {ncols} values, got {}",
                    row.len()
                )));
            }
            elevations.extend(row);
            rows_seen += 1;
        }
        if rows_seen != nrows {
            return Err(Error::Parse(format!(
                "heightmap: expected {nrows} rows, got {rows_seen}"
            )));
        }
        Self::new(ncols, nrows, cellsize, elevations)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Writes the text format accepted by [`Heightmap::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.ncols, self.nrows, self.cellsize);
        for r in 0..self.nrows {
            let row: Vec<String> = (0..self.ncols)
                .map(|c| self.elevations[r * self.ncols + c].to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn cellsize(&self) -> T {
        self.cellsize
    }

    /// Rectangle spanned by the grid nodes.
    pub fn extent(&self) -> Rect<T> {
        let w = lit::<T>((self.ncols - 1) as f64) * self.cellsize;
        let h = lit::<T>((self.nrows - 1) as f64) * self.cellsize;
        Rect::new(T::zero(), T::zero(), w, h).expect("extent of a valid heightmap")
    }

    /// Elevation at node column `c`, counted from x = 0, and node row `j`, counted from y = 0.
    pub fn at(&self, c: usize, j: usize) -> T {
        let r = self.nrows - 1 - j;
        self.elevations[r * self.ncols + c]
    }

    /// Slope angle (radians) at every node from central differences, one-sided at the edges.
    /// Indexed `[j * ncols + c]` with `j` counted from y = 0.
    pub fn slope_angles(&self) -> Vec<T> {
        let (nc, nr) = (self.ncols, self.nrows);
        let mut out = Vec::with_capacity(nc * nr);
        for j in 0..nr {
            for c in 0..nc {
                let (c0, c1) = (c.saturating_sub(1), (c + 1).min(nc - 1));
                let (j0, j1) = (j.saturating_sub(1), (j + 1).min(nr - 1));
                let dx = (self.at(c1, j) - self.at(c0, j))
                    / (lit::<T>((c1 - c0) as f64) * self.cellsize);
                let dy = (self.at(c, j1) - self.at(c, j0))
                    / (lit::<T>((j1 - j0) as f64) * self.cellsize);
                out.push(dx.hypot(dy).atan());
            }
        }
        out
    }
}

fn parse_scalar<T: Scalar>(tok: &str, what: &str) -> Result<T> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .and_then(T::from_f64)
        .ok_or_else(|| Error::Parse(format!("heightmap: bad {what} `{tok}`")))
}

/// Heightmap plus the derived slope field and slope-to-trap mapping.
#[derive(Debug, Clone)]
pub struct TerrainModel<T> {
    heightmap: Heightmap<T>,
    slopes: Vec<T>,
    trap_gain: T,
}

impl<T: Scalar> TerrainModel<T> {
    pub fn new(heightmap: Heightmap<T>, trap_gain: T) -> Result<Self> {
        if !(trap_gain >= T::zero()) || !trap_gain.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "trap gain must be non-negative, got {trap_gain}"
            )));
        }
        let slopes = heightmap.slope_angles();
        Ok(Self {
            heightmap,
            slopes,
            trap_gain,
        })
    }

    pub fn heightmap(&self) -> &Heightmap<T> {
        &self.heightmap
    }

    pub fn trap_gain(&self) -> T {
        self.trap_gain
    }

    pub fn extent(&self) -> Rect<T> {
        self.heightmap.extent()
    }

    /// Bilinear interpolation of the node slope field; points outside are clamped to the edge.
    pub fn slope_at(&self, s: State<T>) -> T {
        let hm = &self.heightmap;
        let (nc, nr) = (hm.ncols, hm.nrows);
        let gx = (s.x / hm.cellsize).max(T::zero()).min(lit((nc - 1) as f64));
        let gy = (s.y / hm.cellsize).max(T::zero()).min(lit((nr - 1) as f64));
        let c0 = gx.floor().to_usize().unwrap_or(0).min(nc - 2);
        let j0 = gy.floor().to_usize().unwrap_or(0).min(nr - 2);
        let fx = gx - lit(c0 as f64);
        let fy = gy - lit(j0 as f64);
        let at = |c: usize, j: usize| self.slopes[j * nc + c];
        let one = T::one();
        at(c0, j0) * (one - fx) * (one - fy)
            + at(c0 + 1, j0) * fx * (one - fy)
            + at(c0, j0 + 1) * (one - fx) * fy
            + at(c0 + 1, j0 + 1) * fx * fy
    }

    /// `clamp(trap_gain · slope(s), 0, 1)`.
    pub fn trap_probability(&self, s: State<T>) -> T {
        (self.trap_gain * self.slope_at(s))
            .max(T::zero())
            .min(T::one())
    }

    pub fn max_slope(&self) -> T {
        self.slopes.iter().fold(T::zero(), |m, &v| m.max(v))
    }
}

/// Synthetic terrain: a Gaussian ridge of `height` meters and half-width `width`
/// running along the segment `from → to`, on an otherwise flat plane.
pub fn ridge_heightmap<T: Scalar>(
    ncols: usize,
    nrows: usize,
    cellsize: T,
    from: State<T>,
    to: State<T>,
    height: T,
    width: T,
) -> Result<Heightmap<T>> {
    if !(width > T::zero()) {
        return Err(Error::InvalidParameter(
            "ridge width must be positive".into(),
        ));
    }
    let dir = to - from;
    let len2 = dir.dot(dir);
    Heightmap::from_fn(ncols, nrows, cellsize, |x, y| {
        let p = State::new(x, y);
        let t = if len2 > T::zero() {
            ((p - from).dot(dir) / len2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        let d = (p - (from + dir.scale(t))).norm();
        height * (-(d * d) / (width * width * lit(2.0))).exp()
    })
}

impl<T: Scalar> std::fmt::Display for Heightmap<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{} heightmap, cell {} m",
            self.ncols,
            self.nrows,
            to_f64(self.cellsize)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_orientation_and_roundtrip() {
        let text = "3 2 0.5\n1 2 3\n4 5 6\n";
        let hm: Heightmap<f64> = Heightmap::parse(text).unwrap();
        // Row 0 is the top (maximum y) row.
        assert_eq!(hm.at(0, 1), 1.0);
        assert_eq!(hm.at(2, 0), 6.0);
        assert_eq!(hm.extent().max.x, 1.0);
        assert_eq!(hm.extent().max.y, 0.5);
        assert_eq!(Heightmap::<f64>::parse(&hm.to_text()).unwrap(), hm);
    }

    #[test]
    fn parse_errors() {
        assert!(Heightmap::<f64>::parse("").is_err());
        assert!(Heightmap::<f64>::parse("2 2\n1 2\n3 4").is_err());
        assert!(Heightmap::<f64>::parse("2 2 1\n1 2\n3").is_err());
        assert!(Heightmap::<f64>::parse("2 2 1\n1 2\n3 x").is_err());
        assert!(Heightmap::<f64>::parse("1 2 1\n1\n3").is_err());
        assert!(Heightmap::<f64>::parse("2 3 1\n1 2\n3 4").is_err());
    }

    #[test]
    fn planar_incline_has_constant_slope() {
        let theta = 0.3_f64;
        let hm = Heightmap::from_fn(6, 5, 1.0, |x, _| x * theta.tan()).unwrap();
        let tm = TerrainModel::new(hm, 1.0).unwrap();
        for s in [
            State::new(0.0, 0.0),
            State::new(2.3, 1.7),
            State::new(5.0, 4.0),
        ] {
            assert!((tm.slope_at(s) - theta).abs() < 1e-12);
        }
        assert!((tm.trap_probability(State::new(1.0, 1.0)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn trap_probability_is_clamped() {
        let hm = Heightmap::from_fn(4, 4, 1.0, |x, _| 3.0 * x).unwrap();
        let tm = TerrainModel::new(hm, 10.0_f64).unwrap();
        assert_eq!(tm.trap_probability(State::new(1.5, 1.5)), 1.0);
        let flat = TerrainModel::new(Heightmap::from_fn(4, 4, 1.0, |_, _| 2.0).unwrap(), 10.0_f64)
            .unwrap();
        assert_eq!(flat.trap_probability(State::new(1.5, 1.5)), 0.0);
    }

    #[test]
    fn ridge_peaks_on_its_axis() {
        let hm = ridge_heightmap(
            21,
            21,
            0.5_f64,
            State::new(2.0, 5.0),
            State::new(8.0, 5.0),
            3.0,
            0.8,
        )
        .unwrap();
        assert!((hm.at(10, 10) - 3.0).abs() < 1e-12);
        assert!(hm.at(10, 0) < 1e-6);
    }
}
