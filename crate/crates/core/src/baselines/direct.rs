//! Direct kernel-based policy iteration: the exact Bellman expectation with a
//! kernel value representation, for worlds whose full transition law is known.
//!
//! Evaluation solves `(I − γ P (λI + K)⁻¹) V = R` with
//! `P_ij = E[k(s', s_j) | s_i, π(s_i)]`. For a Gaussian kernel with diagonal
//! lengthscale and the per-axis truncated Gaussian motion model this
//! expectation is available in closed form.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Action, Region, State};
use crate::kernel::{GramSystem, KernelParams};
use crate::linalg::{solve_with_fixed, Matrix};
use crate::model::SupportModel;
use crate::policy::{argmax_first, Policy, PolicyTable};
use crate::scalar::Scalar;
use crate::taylor::{EvaluationSystem, IterationRecord, PiOutcome};
use crate::world::{Transition, World};

/// `E[k(s', c)]` under the transition law.
pub fn kernel_expectation<T: Scalar>(
    params: &KernelParams<T>,
    transition: &Transition<T>,
    c: State<T>,
) -> Result<T> {
    let (lx, ly) = params.axis_lengthscales().ok_or_else(|| {
        Error::Unsupported("closed-form kernel expectation needs a diagonal lengthscale".into())
    })?;
    let step = transition.step;
    let moved = params.amplitude()
        * step.x.gaussian_expectation(c.x, lx)
        * step.y.gaussian_expectation(c.y, ly);
    let stay = transition.stay;
    if stay > T::zero() {
        Ok(stay * params.kernel(transition.origin, c) + (T::one() - stay) * moved)
    } else {
        Ok(moved)
    }
}

fn expectation_row<T: Scalar>(
    gram: &GramSystem<T>,
    tr: &Transition<T>,
    row: &mut [T],
) -> Result<()> {
    for (out, &sj) in row.iter_mut().zip(gram.support()) {
        *out = kernel_expectation(gram.params(), tr, sj)?;
    }
    Ok(())
}

pub struct DirectSolver<'a, T: Scalar, W: ?Sized> {
    gram: &'a GramSystem<T>,
    world: &'a W,
    model: SupportModel<T>,
    /// `E_a[k(s', S)]` per supporting state and action, empty when absorbing.
    expectations: Vec<Vec<Vec<T>>>,
}

impl<'a, T: Scalar, W: World<T> + ?Sized> DirectSolver<'a, T, W> {
    pub fn new(gram: &'a GramSystem<T>, world: &'a W) -> Result<Self> {
        gram.params().axis_lengthscales().ok_or_else(|| {
            Error::Unsupported("direct kernel baseline needs a diagonal lengthscale".into())
        })?;
        let model = SupportModel::build(world, gram.support())?;
        let n = gram.len();
        let expectations = (0..n)
            .into_par_iter()
            .map(|i| {
                model
                    .actions_at(i)
                    .iter()
                    .map(|d| {
                        let mut row = vec![T::zero(); n];
                        expectation_row(gram, &d.transition, &mut row)?;
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gram,
            world,
            model,
            expectations,
        })
    }

    pub fn model(&self) -> &SupportModel<T> {
        &self.model
    }

    pub fn initial_policy(&self) -> PolicyTable {
        self.model.constant_policy(
            Action::new(1, self.model.action_count()).expect("at least one action"),
        )
    }

    /// The expectation matrix `P` for `policy` (zero rows for absorbing states).
    pub fn expectation_matrix(&self, policy: &PolicyTable) -> Result<Matrix<T>> {
        policy.check_against(&self.model.terminal_mask())?;
        let n = self.gram.len();
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            if let (false, Some(a)) = (self.model.is_terminal(i), policy.get(i)) {
                p.row_mut(i)
                    .copy_from_slice(&self.expectations[i][a.zero_based()]);
            }
        }
        Ok(p)
    }

    /// Solves the Bellman evaluation system. In the returned system `m` holds
    /// `P`, `rpi` holds `R`, and `system` is `I − γ P (λI + K)⁻¹`.
    pub fn evaluate(&self, policy: &PolicyTable) -> Result<EvaluationSystem<T>> {
        let p = self.expectation_matrix(policy)?;
        let n = self.gram.len();
        let gamma = self.world.gamma();
        let pat = self.gram.factor().solve_matrix(&p.transpose());
        let mut system = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                system[(i, j)] -= gamma * pat[(j, i)];
            }
        }
        let rewards: Vec<T> = (0..n)
            .map(|i| match (self.model.is_terminal(i), policy.get(i)) {
                (false, Some(a)) => self.model.data(i, a).reward,
                _ => T::zero(),
            })
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
        let values = solve_with_fixed(&system, &rewards, &fixed)?;
        Ok(EvaluationSystem {
            m: p,
            rpi: rewards,
            system,
            values,
            dirichlet_rows,
        })
    }

    /// `R(s_i, a) + γ E_a[v(s')]` for every action at supporting state `i`.
    pub fn objectives(&self, alpha: &[T], i: usize) -> Vec<T> {
        let gamma = self.world.gamma();
        self.model
            .actions_at(i)
            .iter()
            .zip(&self.expectations[i])
            .map(|(d, row)| {
                let ev: T = row.iter().zip(alpha).map(|(&e, &a)| e * a).sum();
                d.reward + gamma * ev
            })
            .collect()
    }

    pub fn improve(&self, values: &[T]) -> Result<PolicyTable> {
        let alpha = self.gram.weights(values)?;
        let q = self.model.action_count();
        Ok(PolicyTable::new(
            (0..self.gram.len())
                .map(|i| {
                    (!self.model.is_terminal(i)).then(|| {
                        Action::new(argmax_first(self.objectives(&alpha, i)) + 1, q)
                            .expect("argmax within action set")
                    })
                })
                .collect(),
        ))
    }

    pub fn run(&self, initial: PolicyTable, max_iters: usize) -> Result<PiOutcome<T>> {
        if max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        let mut policy = initial;
        let mut trace = Vec::new();
        for iteration in 1..=max_iters {
            let t0 = std::time::Instant::now();
            let evaluation = self.evaluate(&policy)?;
            let t1 = std::time::Instant::now();
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

/// Evaluates `policy` with the direct method and returns `V`.
pub fn direct_kernel_policy_evaluation<T: Scalar, W: World<T> + ?Sized>(
    gram: &GramSystem<T>,
    world: &W,
    policy: &PolicyTable,
) -> Result<Vec<T>> {
    Ok(DirectSolver::new(gram, world)?.evaluate(policy)?.values)
}

pub fn run_direct_policy_iteration<T: Scalar, W: World<T> + ?Sized>(
    gram: &GramSystem<T>,
    world: &W,
    initial: Option<PolicyTable>,
    max_iters: usize,
) -> Result<PiOutcome<T>> {
    let solver = DirectSolver::new(gram, world)?;
    let init = initial.unwrap_or_else(|| solver.initial_policy());
    solver.run(init, max_iters)
}

/// One-step greedy lookahead with the full transition expectation.
pub struct DirectPolicy<'a, T: Scalar, W: ?Sized> {
    gram: &'a GramSystem<T>,
    world: &'a W,
    alpha: Vec<T>,
}

impl<'a, T: Scalar, W: World<T> + ?Sized> DirectPolicy<'a, T, W> {
    pub fn new(gram: &'a GramSystem<T>, world: &'a W, values: &[T]) -> Result<Self> {
        Ok(Self {
            gram,
            world,
            alpha: gram.weights(values)?,
        })
    }

    pub fn objectives(&self, s: State<T>) -> Result<Vec<T>> {
        let gamma = self.world.gamma();
        self.world
            .actions()
            .iter()
            .map(|a| {
                let tr = self.world.transition(s, a)?;
                let r = tr.expected_reward(self.world.workspace(), self.world.mdp());
                let mut ev = T::zero();
                for (&sj, &al) in self.gram.support().iter().zip(&self.alpha) {
                    ev += al * kernel_expectation(self.gram.params(), &tr, sj)?;
                }
                Ok(r + gamma * ev)
            })
            .collect()
    }
}

impl<'a, T: Scalar, W: World<T> + ?Sized> Policy<T> for DirectPolicy<'a, T, W> {
    fn action(&self, s: State<T>) -> Action {
        let q = self.world.actions().count();
        let best = match self.world.classify(s) {
            Region::Free => self.objectives(s).map(argmax_first).unwrap_or(0),
            _ => 0,
        };
        Action::new(best + 1, q).expect("argmax within action set")
    }
}
