use crate::error::{Error, Result};
use crate::geometry::{Action, ActionSet, State};
use crate::rng;
use rand::Rng;

/// A deterministic policy over the continuous state space.
pub trait Policy<T>: Sync {
    fn action(&self, s: State<T>) -> Action;
}

impl<T, F> Policy<T> for F
where
    F: Fn(State<T>) -> Action + Sync,
{
    fn action(&self, s: State<T>) -> Action {
        self(s)
    }
}

/// One action per supporting state; `None` marks absorbing states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    actions: Vec<Option<Action>>,
}

impl PolicyTable {
    pub fn new(actions: Vec<Option<Action>>) -> Self {
        Self { actions }
    }

    /// `action` at every transient state.
    pub fn constant(terminal: &[bool], action: Action) -> Self {
        Self::new(terminal.iter().map(|&t| (!t).then_some(action)).collect())
    }

    /// Independent uniform actions at the transient states.
    pub fn random<T: crate::scalar::Scalar>(
        terminal: &[bool],
        actions: &ActionSet<T>,
        seed: u64,
    ) -> Self {
        let mut r = rng::stream(seed, &[0x706f_6c69]);
        Self::new(
            terminal
                .iter()
                .map(|&t| {
                    let i = r.random_range(1..=actions.count());
                    (!t).then(|| Action::new(i, actions.count()).expect("index in range"))
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<Action> {
        self.actions[i]
    }

    pub fn as_slice(&self) -> &[Option<Action>] {
        &self.actions
    }

    /// Number of entries that differ.
    pub fn hamming(&self, other: &Self) -> usize {
        self.actions
            .iter()
            .zip(&other.actions)
            .filter(|(a, b)| a != b)
            .count()
            + self.actions.len().abs_diff(other.actions.len())
    }

    /// Fails unless every non-terminal entry has an action and terminal ones have none.
    pub fn check_against(&self, terminal: &[bool]) -> Result<()> {
        if self.len() != terminal.len() {
            return Err(Error::Dimension(format!(
                "policy has {} entries for {} supporting states",
                self.len(),
                terminal.len()
            )));
        }
        match terminal
            .iter()
            .zip(&self.actions)
            .position(|(&t, a)| !t && a.is_none())
        {
            Some(i) => Err(Error::MissingAction(i)),
            None => Ok(()),
        }
    }
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax_first<T: PartialOrd + Copy>(scores: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_first([1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_first([0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn hamming_and_checks() {
        let a1 = Action::new(1, 4).unwrap();
        let a2 = Action::new(2, 4).unwrap();
        let p = PolicyTable::new(vec![Some(a1), None, Some(a2)]);
        let q = PolicyTable::new(vec![Some(a1), None, Some(a1)]);
        assert_eq!(p.hamming(&q), 1);
        p.check_against(&[false, true, false]).unwrap();
        assert!(matches!(
            p.check_against(&[false, false, false]),
            Err(Error::MissingAction(1))
        ));
    }
}
