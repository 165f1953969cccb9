use alloc::vec::Vec;
use core::fmt::Debug;

use crate::rational::Prob;
use crate::walk::{TransitionKernel, WalkState};
use crate::Result;

/// A discrete-time Markov chain given by exact one-step successor lists.
///
/// Implemented by [`TransitionKernel`] and by the embedded queueing chain, so
/// the stationary routines work on both.
pub trait MarkovChain {
    type State: Clone + Ord + Debug;

    /// Successors with positive probability. Probabilities sum to one.
    fn successors(&self, state: &Self::State) -> Result<Vec<(Self::State, Prob)>>;
}

impl MarkovChain for TransitionKernel {
    type State = WalkState;

    fn successors(&self, state: &WalkState) -> Result<Vec<(WalkState, Prob)>> {
        self.step_distribution(state)
    }
}

impl<C: MarkovChain + ?Sized> MarkovChain for &C {
    type State = C::State;

    fn successors(&self, state: &Self::State) -> Result<Vec<(Self::State, Prob)>> {
        (**self).successors(state)
    }
}
