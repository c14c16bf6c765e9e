//! Kernel Taylor-based approximate policy iteration.
//!
//! The Bellman evaluation equation is replaced by its second-order expansion
//!
//! ```text
//! γ (μᵀ∇ + ½ ∇·σ∇) v(s) − (1 − γ) v(s) = −R(s, π(s))
//! ```
//!
//! which needs only the first two moments `(μ, σ)` of the transition. With
//! `v(s) = k(s, S)ᵀ (λI + K)⁻¹ V` this becomes the dense linear system
//! `(M (λI + K)⁻¹ − (1 − γ) I) V = Rπ` over the supporting states, where
//! `M_ij = γ (μ_iᵀ ∇ + ½ ∇·σ_i∇) k(s_i, s_j)` and `[Rπ]_i = −R(s_i, π(s_i))`.
//! Absorbing supporting states get their prescribed values.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Action, Region, State};
use crate::kernel::{GramSystem, KernelExpansion};
use crate::linalg::{inf_norm, solve_with_fixed, Matrix};
use crate::model::SupportModel;
use crate::policy::{argmax_first, Policy, PolicyTable};
use crate::scalar::{lit, Scalar};
use crate::world::{Moments, World};

/// Default iteration cap for [`TaylorSolver::run`].
pub const DEFAULT_MAX_ITERS: usize = 100;

/// The assembled evaluation system for one policy and its solution.
#[derive(Debug, Clone)]
pub struct EvaluationSystem<T> {
    /// `M` (rows of absorbing states are zero placeholders).
    pub m: Matrix<T>,
    /// `[Rπ]_i = −R(s_i, π(s_i))`, zero for absorbing states.
    pub rpi: Vec<T>,
    /// `M (λI + K)⁻¹ − (1 − γ) I` before row substitution.
    pub system: Matrix<T>,
    pub values: Vec<T>,
    pub dirichlet_rows: Vec<usize>,
}

impl<T: Scalar> EvaluationSystem<T> {
    /// `‖(system · V − Rπ)_i‖∞` over the non-Dirichlet rows.
    pub fn residual(&self) -> T {
        let sv = self.system.mul_vec(&self.values);
        (0..self.values.len())
            .filter(|i| self.dirichlet_rows.binary_search(i).is_err())
            .map(|i| (sv[i] - self.rpi[i]).abs())
            .fold(T::zero(), T::max)
    }
}

/// Per-iteration record of a policy-iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Number of supporting states whose action changed in the improvement step.
    pub changed: usize,
    pub evaluation_seconds: f64,
    pub improvement_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PiOutcome<T> {
    /// Values at the supporting states under the final evaluated policy.
    pub values: Vec<T>,
    pub policy: PolicyTable,
    pub evaluation: EvaluationSystem<T>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

impl<T> PiOutcome<T> {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Solver state that is fixed across iterations: the Gram factorization and
/// the moment/reward tables at the supporting states.
pub struct TaylorSolver<'a, T: Scalar, W: ?Sized> {
    gram: &'a GramSystem<T>,
    world: &'a W,
    model: SupportModel<T>,
}

impl<'a, T: Scalar, W: World<T> + ?Sized> TaylorSolver<'a, T, W> {
    pub fn new(gram: &'a GramSystem<T>, world: &'a W) -> Result<Self> {
        let model = SupportModel::build(world, gram.support())?;
        Ok(Self { gram, world, model })
    }

    pub fn model(&self) -> &SupportModel<T> {
        &self.model
    }

    pub fn gram(&self) -> &'a GramSystem<T> {
        self.gram
    }

    /// Action 1 at every transient supporting state.
    pub fn initial_policy(&self) -> PolicyTable {
        self.model.constant_policy(
            Action::new(1, self.model.action_count()).expect("at least one action"),
        )
    }

    fn operator_row(&self, s: State<T>, mom: &Moments<T>, row: &mut [T]) {
        let gamma = self.world.gamma();
        let half = lit::<T>(0.5);
        let p = self.gram.params();
        for (out, &sj) in row.iter_mut().zip(self.gram.support()) {
            *out = gamma
                * (mom.mu.dot(p.kernel_grad(s, sj)) + half * p.kernel_diffusion(mom.sigma, s, sj));
        }
    }

    /// `M_ij = γ (μ_iᵀ ∇ + ½ ∇·σ_i∇) k(s_i, s_j)` with the moments of `π(s_i)`.
    pub fn assemble_m(&self, policy: &PolicyTable) -> Result<Matrix<T>> {
        let selected = self.model.selected(policy)?;
        let n = self.gram.len();
        let mut m = Matrix::zeros(n, n);
        let support = self.gram.support();
        for (i, sel) in selected.iter().enumerate() {
            if let Some(d) = sel {
                self.operator_row(support[i], &d.moments, m.row_mut(i));
            }
        }
        Ok(m)
    }

    /// Assembles and solves the evaluation system for `policy`.
    pub fn evaluate(&self, policy: &PolicyTable) -> Result<EvaluationSystem<T>> {
        let m = self.assemble_m(policy)?;
        let selected = self.model.selected(policy)?;
        let n = self.gram.len();
        let one_minus_gamma = T::one() - self.world.gamma();
        // (M A)ᵀ = A Mᵀ with A = (λI + K)⁻¹ symmetric.
        let xt = self.gram.factor().solve_matrix(&m.transpose());
        let mut system = xt.transpose();
        for i in 0..n {
            system[(i, i)] -= one_minus_gamma;
        }
        let rpi: Vec<T> = selected
            .iter()
            .map(|sel| sel.map_or(T::zero(), |d| -d.reward))
            .collect();
        let dirichlet_rows = self.model.dirichlet_rows();
        let fixed: Vec<(usize, T)> = dirichlet_rows
            .iter()
            .map(|&i| {
                (
                    i,
                    self.model.prescribed(i).expect("dirichlet row has a value"),
                )
            })
            .collect();
        let values = solve_with_fixed(&system, &rpi, &fixed)?;
        Ok(EvaluationSystem {
            m,
            rpi,
            system,
            values,
            dirichlet_rows,
        })
    }

    /// Improvement objective `R(s_i, a) + γ (μ_aᵀ ∇ + ½ ∇·σ_a∇) v(s_i)` for every action.
    pub fn objectives(&self, values: &[T], i: usize) -> Result<Vec<T>> {
        let exp = self.gram.expansion(values)?;
        Ok(self.objectives_with(&exp, i))
    }

    fn objectives_with(&self, exp: &KernelExpansion<'_, T>, i: usize) -> Vec<T> {
        let (_, g, h) = exp.jet(self.gram.support()[i]);
        let gamma = self.world.gamma();
        let half = lit::<T>(0.5);
        self.model
            .actions_at(i)
            .iter()
            .map(|d| {
                d.reward + gamma * (d.moments.mu.dot(g) + half * (d.moments.sigma * h).trace())
            })
            .collect()
    }

    /// Greedy policy at the supporting states; ties go to the lowest action index.
    pub fn improve(&self, values: &[T]) -> Result<PolicyTable> {
        let exp = self.gram.expansion(values)?;
        let q = self.model.action_count();
        let actions = (0..self.gram.len())
            .into_par_iter()
            .map(|i| {
                if self.model.is_terminal(i) {
                    None
                } else {
                    let best = argmax_first(self.objectives_with(&exp, i));
                    Some(Action::new(best + 1, q).expect("argmax within action set"))
                }
            })
            .collect();
        Ok(PolicyTable::new(actions))
    }

    /// Alternates evaluation and improvement until the action table repeats or
    /// `max_iters` evaluations have run. Non-convergence is reported through
    /// [`PiOutcome::converged`], with the last evaluated policy and its values.
    pub fn run(&self, initial: PolicyTable, max_iters: usize) -> Result<PiOutcome<T>> {
        if max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        let mut policy = initial;
        let mut trace = Vec::new();
        for iteration in 1..=max_iters {
            let t0 = Instant::now();
            let evaluation = self.evaluate(&policy)?;
            let t1 = Instant::now();
            let next = self.improve(&evaluation.values)?;
            let changed = next.hamming(&policy);
            trace.push(IterationRecord {
                iteration,
                changed,
                evaluation_seconds: (t1 - t0).as_secs_f64(),
                improvement_seconds: t1.elapsed().as_secs_f64(),
            });
            if changed == 0 || iteration == max_iters {
                return Ok(PiOutcome {
                    values: evaluation.values.clone(),
                    policy,
                    evaluation,
                    trace,
                    converged: changed == 0,
                });
            }
            policy = next;
        }
        unreachable!("loop returns on its last iteration")
    }
}

/// Greedy continuous-state policy read off a kernel value function with the
/// same objective as the improvement step.
pub struct TaylorPolicy<'a, T: Scalar, W: ?Sized> {
    expansion: KernelExpansion<'a, T>,
    world: &'a W,
}

impl<'a, T: Scalar, W: World<T> + ?Sized> TaylorPolicy<'a, T, W> {
    pub fn new(gram: &'a GramSystem<T>, world: &'a W, values: &[T]) -> Result<Self> {
        Ok(Self {
            expansion: gram.expansion(values)?,
            world,
        })
    }

    pub fn expansion(&self) -> &KernelExpansion<'a, T> {
        &self.expansion
    }

    /// Objective per action at a free state.
    pub fn objectives(&self, s: State<T>) -> Result<Vec<T>> {
        let (_, g, h) = self.expansion.jet(s);
        let gamma = self.world.gamma();
        let half = lit::<T>(0.5);
        self.world
            .actions()
            .iter()
            .map(|a| {
                let tr = self.world.transition(s, a)?;
                let m = tr.moments();
                let r = tr.expected_reward(self.world.workspace(), self.world.mdp());
                Ok(r + gamma * (m.mu.dot(g) + half * (m.sigma * h).trace()))
            })
            .collect()
    }
}

impl<'a, T: Scalar, W: World<T> + ?Sized> Policy<T> for TaylorPolicy<'a, T, W> {
    fn action(&self, s: State<T>) -> Action {
        let q = self.world.actions().count();
        let best = match self.world.classify(s) {
            Region::Free => self.objectives(s).map(argmax_first).unwrap_or(0),
            _ => 0,
        };
        Action::new(best + 1, q).expect("argmax within action set")
    }
}

/// `M` for `policy`; see [`TaylorSolver::assemble_m`].
pub fn assemble_m<T: Scalar, W: World<T> + ?Sized>(
    gram: &GramSystem<T>,
    world: &W,
    policy: &PolicyTable,
) -> Result<Matrix<T>> {
    TaylorSolver::new(gram, world)?.assemble_m(policy)
}

pub fn solve_policy_evaluation<T: Scalar, W: World<T> + ?Sized>(
    gram: &GramSystem<T>,
    world: &W,
    policy: &PolicyTable,
) -> Result<EvaluationSystem<T>> {
    TaylorSolver::new(gram, world)?.evaluate(policy)
}

pub fn improve_policy<T: Scalar, W: World<T> + ?Sized>(
    gram: &GramSystem<T>,
    world: &W,
    values: &[T],
) -> Result<PolicyTable> {
    TaylorSolver::new(gram, world)?.improve(values)
}

/// Full policy iteration; `initial` defaults to action 1 everywhere.
pub fn run_policy_iteration<T: Scalar, W: World<T> + ?Sized>(
    gram: &GramSystem<T>,
    world: &W,
    initial: Option<PolicyTable>,
    max_iters: usize,
) -> Result<PiOutcome<T>> {
    let solver = TaylorSolver::new(gram, world)?;
    let init = initial.unwrap_or_else(|| solver.initial_policy());
    solver.run(init, max_iters)
}

/// Residual tolerance used by [`EvaluationSystem`] checks: `1e−8 · max(1, ‖Rπ‖∞)`.
pub fn residual_tolerance<T: Scalar>(rpi: &[T]) -> T {
    lit::<T>(1e-8) * T::one().max(inf_norm(rpi))
}
