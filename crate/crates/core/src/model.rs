//! Per-supporting-state tables that stay fixed across policy iterations:
//! region, prescribed value, and transition data for every action.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Action, Region, State};
use crate::policy::PolicyTable;
use crate::scalar::Scalar;
use crate::world::{Moments, Transition, World};

#[derive(Debug, Clone)]
pub struct ActionData<T> {
    pub transition: Transition<T>,
    pub moments: Moments<T>,
    pub reward: T,
}

#[derive(Debug, Clone)]
pub struct SupportModel<T> {
    regions: Vec<Region>,
    prescribed: Vec<Option<T>>,
    /// Empty for absorbing states, otherwise one entry per action.
    actions: Vec<Vec<ActionData<T>>>,
    action_count: usize,
}

impl<T: Scalar> SupportModel<T> {
    pub fn build<W: World<T> + ?Sized>(world: &W, support: &[State<T>]) -> Result<Self> {
        let regions: Vec<Region> = support.iter().map(|&s| world.classify(s)).collect();
        if let Some(i) = regions.iter().position(|&r| r == Region::Outside) {
            let s = support[i];
            return Err(Error::at_support(
                i,
                Error::OutsideWorkspace {
                    x: crate::scalar::to_f64(s.x),
                    y: crate::scalar::to_f64(s.y),
                },
            ));
        }
        let prescribed = regions.iter().map(|&r| world.terminal_value(r)).collect();
        let acts: Vec<Action> = world.actions().iter().collect();
        let actions = support
            .par_iter()
            .zip(regions.par_iter())
            .enumerate()
            .map(|(i, (&s, &r))| {
                if r.is_terminal() {
                    return Ok(Vec::new());
                }
                acts.iter()
                    .map(|&a| {
                        let transition = world.transition(s, a)?;
                        Ok(ActionData {
                            moments: transition.moments(),
                            reward: world.expected_reward(s, a)?,
                            transition,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::at_support(i, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            regions,
            prescribed,
            actions,
            action_count: acts.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn region(&self, i: usize) -> Region {
        self.regions[i]
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.regions[i].is_terminal()
    }

    pub fn terminal_mask(&self) -> Vec<bool> {
        self.regions.iter().map(|r| r.is_terminal()).collect()
    }

    /// Prescribed value of absorbing state `i`.
    pub fn prescribed(&self, i: usize) -> Option<T> {
        self.prescribed[i]
    }

    /// Indices with prescribed values, ascending.
    pub fn dirichlet_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.prescribed[i].is_some())
            .collect()
    }

    /// Transition data of every action at state `i` (empty when absorbing).
    pub fn actions_at(&self, i: usize) -> &[ActionData<T>] {
        &self.actions[i]
    }

    pub fn data(&self, i: usize, a: Action) -> &ActionData<T> {
        &self.actions[i][a.zero_based()]
    }

    /// Action data selected by `policy`, `None` for absorbing states.
    pub fn selected<'a>(&'a self, policy: &PolicyTable) -> Result<Vec<Option<&'a ActionData<T>>>> {
        policy.check_against(&self.terminal_mask())?;
        Ok((0..self.len())
            .map(|i| {
                if self.is_terminal(i) {
                    None
                } else {
                    policy.get(i).map(|a| self.data(i, a))
                }
            })
            .collect())
    }

    /// Policy with `action` at every transient state.
    pub fn constant_policy(&self, action: Action) -> PolicyTable {
        PolicyTable::constant(&self.terminal_mask(), action)
    }
}
