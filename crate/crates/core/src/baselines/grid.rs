//! Grid-based tabular policy iteration.
//!
//! The workspace is split into `n × n` cells. A cell is absorbing when its
//! center is a goal or obstacle state. Transition probabilities of free cells
//! are estimated by sampling the continuous transition from the cell center:
//! draws landing in a goal or obstacle collect the arrival reward and move to
//! a shared absorbing sink, all other draws move to the cell that contains
//! them. Absorbing cells and the sink contribute no continuation value.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Action, Rect, Region, State};
use crate::linalg::{solve_dense, Matrix};
use crate::policy::{argmax_first, Policy};
use crate::rng;
use crate::scalar::{lit, Scalar};
use crate::world::World;

/// Samples per `(cell, action)` used to estimate transition masses.
pub const DEFAULT_TRANSITION_SAMPLES: usize = 4096;

/// Finite MDP over grid cells plus one absorbing sink (index `len()`).
#[derive(Debug, Clone)]
pub struct DiscreteMdp<T> {
    centers: Vec<State<T>>,
    terminal: Vec<bool>,
    /// `transitions[cell][action]` as sparse `(next, probability)` pairs.
    transitions: Vec<Vec<Vec<(usize, T)>>>,
    rewards: Vec<Vec<T>>,
    action_count: usize,
}

impl<T: Scalar> DiscreteMdp<T> {
    /// Validates row-stochasticity (to `1e−9`) and self-absorbing terminal rows.
    pub fn new(
        centers: Vec<State<T>>,
        terminal: Vec<bool>,
        transitions: Vec<Vec<Vec<(usize, T)>>>,
        rewards: Vec<Vec<T>>,
        action_count: usize,
    ) -> Result<Self> {
        let n = centers.len();
        if terminal.len() != n || transitions.len() != n || rewards.len() != n {
            return Err(Error::Dimension(
                "discrete MDP tables disagree in size".into(),
            ));
        }
        let tol = lit::<T>(1e-9);
        for (c, rows) in transitions.iter().enumerate() {
            if rows.len() != action_count || rewards[c].len() != action_count {
                return Err(Error::Dimension(format!(
                    "cell {c} needs {action_count} actions"
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                let total: T = row.iter().map(|&(_, p)| p).sum();
                if (total - T::one()).abs() > tol
                    || row.iter().any(|&(j, p)| j > n || p < T::zero())
                {
                    return Err(Error::InvalidParameter(format!(
                        "transition row (cell {c}, action {}) is not stochastic",
                        a + 1
                    )));
                }
                if terminal[c] && !(row.len() == 1 && row[0].0 == c) {
                    return Err(Error::InvalidParameter(format!(
                        "terminal cell {c} must be self-absorbing"
                    )));
                }
            }
        }
        Ok(Self {
            centers,
            terminal,
            transitions,
            rewards,
            action_count,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[State<T>] {
        &self.centers
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn row(&self, cell: usize, action: usize) -> &[(usize, T)] {
        &self.transitions[cell][action]
    }

    pub fn reward(&self, cell: usize, action: usize) -> T {
        self.rewards[cell][action]
    }

    fn continuation(&self, values: &[T], cell: usize, action: usize) -> T {
        self.transitions[cell][action]
            .iter()
            .filter(|&&(j, _)| j < self.len() && !self.terminal[j])
            .map(|&(j, p)| p * values[j])
            .sum()
    }

    /// `R(c, a) + γ Σ P(c' | c, a) V(c')` for every action.
    pub fn q_values(&self, values: &[T], gamma: T, cell: usize) -> Vec<T> {
        (0..self.action_count)
            .map(|a| self.rewards[cell][a] + gamma * self.continuation(values, cell, a))
            .collect()
    }

    /// Exact evaluation of a zero-based action table over the transient cells.
    pub fn evaluate(&self, policy: &[usize], gamma: T) -> Result<Vec<T>> {
        let free: Vec<usize> = (0..self.len()).filter(|&c| !self.terminal[c]).collect();
        let mut index = vec![usize::MAX; self.len()];
        for (k, &c) in free.iter().enumerate() {
            index[c] = k;
        }
        let mut a = Matrix::identity(free.len());
        let mut b = vec![T::zero(); free.len()];
        for (k, &c) in free.iter().enumerate() {
            let act = policy[c];
            b[k] = self.rewards[c][act];
            for &(j, p) in &self.transitions[c][act] {
                if j < self.len() && !self.terminal[j] {
                    a[(k, index[j])] -= gamma * p;
                }
            }
        }
        let x = solve_dense(&a, &b)?;
        let mut values = vec![T::zero(); self.len()];
        for (k, &c) in free.iter().enumerate() {
            values[c] = x[k];
        }
        Ok(values)
    }
}

/// Result of tabular policy iteration.
#[derive(Debug, Clone)]
pub struct TabularSolution<T> {
    /// Values of transient cells; absorbing cells hold 0 here.
    pub values: Vec<T>,
    /// Zero-based greedy action per cell (absorbing cells: unused, 0).
    pub policy: Vec<usize>,
    /// Values after each evaluation, for monotonicity checks.
    pub history: Vec<Vec<T>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Howard policy iteration with exact evaluation; ties go to the lowest action.
pub fn solve_tabular<T: Scalar>(
    mdp: &DiscreteMdp<T>,
    gamma: T,
    max_iters: usize,
) -> Result<TabularSolution<T>> {
    if max_iters == 0 {
        return Err(Error::InvalidParameter(
            "max_iters must be at least 1".into(),
        ));
    }
    let mut policy = vec![0usize; mdp.len()];
    let mut history = Vec::new();
    for it in 1..=max_iters {
        let values = mdp.evaluate(&policy, gamma)?;
        let next: Vec<usize> = (0..mdp.len())
            .map(|c| {
                if mdp.terminal[c] {
                    0
                } else {
                    let q = mdp.q_values(&values, gamma, c);
                    let best = argmax_first(q.iter().copied());
                    // Keep the incumbent action unless strictly improved.
                    if q[best] > q[policy[c]] {
                        best
                    } else {
                        policy[c]
                    }
                }
            })
            .collect();
        history.push(values.clone());
        let stable = next == policy;
        if stable || it == max_iters {
            return Ok(TabularSolution {
                values,
                policy,
                history,
                iterations: it,
                converged: stable,
            });
        }
        policy = next;
    }
    unreachable!("loop returns on its last iteration")
}

/// Uniform cell partition of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGrid<T> {
    pub bounds: Rect<T>,
    pub resolution: usize,
}

impl<T: Scalar> CellGrid<T> {
    pub fn new(bounds: Rect<T>, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        Ok(Self { bounds, resolution })
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major centers, `index = iy · n + ix`.
    pub fn centers(&self) -> Vec<State<T>> {
        let n = self.resolution;
        let (w, h) = self.cell_size();
        let half = lit::<T>(0.5);
        (0..n)
            .flat_map(|iy| {
                (0..n).map(move |ix| {
                    State::new(
                        self.bounds.min.x + (lit::<T>(ix as f64) + half) * w,
                        self.bounds.min.y + (lit::<T>(iy as f64) + half) * h,
                    )
                })
            })
            .collect()
    }

    pub fn cell_size(&self) -> (T, T) {
        let n = lit::<T>(self.resolution as f64);
        (self.bounds.width() / n, self.bounds.height() / n)
    }

    fn axis_index(&self, v: T, lo: T, size: T) -> usize {
        // Points on a shared edge belong to the lower-index cell.
        let k = ((v - lo) / size).ceil().to_i64().unwrap_or(0) - 1;
        k.clamp(0, self.resolution as i64 - 1) as usize
    }

    /// Index of the cell containing `s`.
    pub fn cell_of(&self, s: State<T>) -> Result<usize> {
        if !s.is_finite() || !self.bounds.contains(s) {
            return Err(Error::OutsideWorkspace {
                x: s.x.to_f64().unwrap_or(f64::NAN),
                y: s.y.to_f64().unwrap_or(f64::NAN),
            });
        }
        let (w, h) = self.cell_size();
        let ix = self.axis_index(s.x, self.bounds.min.x, w);
        let iy = self.axis_index(s.y, self.bounds.min.y, h);
        Ok(iy * self.resolution + ix)
    }
}

/// Discretizes `world` on an `n × n` grid by sampling `samples` transitions per
/// `(cell, action)` from the cell center.
pub fn discretize<T: Scalar, W: World<T> + ?Sized>(
    world: &W,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<(CellGrid<T>, DiscreteMdp<T>)> {
    let grid = CellGrid::new(*world.workspace().bounds(), resolution)?;
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "transition samples must be at least 1".into(),
        ));
    }
    let centers = grid.centers();
    let terminal: Vec<bool> = centers
        .iter()
        .map(|&c| world.classify(c).is_terminal())
        .collect();
    let n = centers.len();
    let q = world.actions().count();
    let sink = n;
    let inv = T::one() / lit::<T>(samples as f64);
    let rows = (0..n)
        .into_par_iter()
        .map(|c| {
            if terminal[c] {
                return Ok((vec![vec![(c, T::one())]; q], vec![T::zero(); q]));
            }
            let mut trans = Vec::with_capacity(q);
            let mut rews = Vec::with_capacity(q);
            for a in world.actions().iter() {
                let tr = world.transition(centers[c], a)?;
                let mut r = rng::stream(seed, &[c as u64, a.index() as u64]);
                let mut counts = vec![0usize; n + 1];
                let mut reward = T::zero();
                for _ in 0..samples {
                    let next = tr.sample(&mut r);
                    match world.classify(next) {
                        Region::Goal | Region::Obstacle => {
                            reward += world.arrival_reward(next);
                            counts[sink] += 1;
                        }
                        _ => counts[grid.cell_of(next)?] += 1,
                    }
                }
                trans.push(
                    counts
                        .iter()
                        .enumerate()
                        .filter(|(_, &k)| k > 0)
                        .map(|(j, &k)| (j, lit::<T>(k as f64) * inv))
                        .collect(),
                );
                rews.push(reward * inv);
            }
            Ok((trans, rews))
        })
        .collect::<Result<Vec<_>>>()?;
    let (transitions, rewards): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mdp = DiscreteMdp::new(centers, terminal, transitions, rewards, q)?;
    Ok((grid, mdp))
}

/// Tabular solution mapped back onto the continuous workspace.
#[derive(Debug, Clone)]
pub struct GridSolution<T> {
    pub grid: CellGrid<T>,
    pub regions: Vec<Region>,
    /// Reported values: transient cells from the tabular solve, goal cells `v_g`, obstacle cells 0.
    pub values: Vec<T>,
    /// Action per cell; absorbing cells borrow the action of the nearest transient cell.
    pub policy: Vec<Action>,
    pub history: Vec<Vec<T>>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> GridSolution<T> {
    pub fn centers(&self) -> Vec<State<T>> {
        self.grid.centers()
    }

    /// Action of the cell containing `s`.
    pub fn action_at(&self, s: State<T>) -> Result<Action> {
        Ok(self.policy[self.grid.cell_of(s)?])
    }
}

impl<T: Scalar> Policy<T> for GridSolution<T> {
    fn action(&self, s: State<T>) -> Action {
        let cell = self.grid.cell_of(s).unwrap_or(0);
        self.policy[cell]
    }
}

/// Discretizes and solves; see [`discretize`] and [`solve_tabular`].
pub fn grid_policy_iteration<T: Scalar, W: World<T> + ?Sized>(
    world: &W,
    resolution: usize,
    samples: usize,
    seed: u64,
    max_iters: usize,
) -> Result<GridSolution<T>> {
    let (grid, mdp) = discretize(world, resolution, samples, seed)?;
    let sol = solve_tabular(&mdp, world.gamma(), max_iters)?;
    let centers = mdp.centers();
    let regions: Vec<Region> = centers.iter().map(|&c| world.classify(c)).collect();
    let q = world.actions().count();
    let values = regions
        .iter()
        .zip(&sol.values)
        .map(|(&r, &v)| world.terminal_value(r).unwrap_or(v))
        .collect();
    let policy = (0..mdp.len())
        .map(|c| {
            let src = if mdp.terminal()[c] {
                // Nearest transient cell, lowest index on ties.
                (0..mdp.len())
                    .filter(|&j| !mdp.terminal()[j])
                    .min_by(|&i, &j| {
                        let di = (centers[i] - centers[c]).norm();
                        let dj = (centers[j] - centers[c]).norm();
                        di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap_or(c)
            } else {
                c
            };
            Action::new(sol.policy[src] + 1, q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSolution {
        grid,
        regions,
        values,
        policy,
        history: sol.history,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}
