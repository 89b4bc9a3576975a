//! Sources of ground-truth edge outcomes.

use crate::error::Result;
use crate::graph::{EdgeId, World};

/// Answers edge-validity queries; each call is one (costly) evaluation.
pub trait EdgeOracle {
    fn evaluate(&mut self, edge: EdgeId) -> Result<bool>;
}

impl EdgeOracle for &World {
    fn evaluate(&mut self, edge: EdgeId) -> Result<bool> {
        if edge as usize >= self.len() {
            return Err(crate::Error::Oracle(format!("edge {edge} out of range")));
        }
        Ok(self.is_valid(edge))
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F>(pub F);

impl<F: FnMut(EdgeId) -> Result<bool>> EdgeOracle for FnOracle<F> {
    fn evaluate(&mut self, edge: EdgeId) -> Result<bool> {
        (self.0)(edge)
    }
}

impl<O: EdgeOracle + ?Sized> EdgeOracle for &mut O {
    fn evaluate(&mut self, edge: EdgeId) -> Result<bool> {
        (**self).evaluate(edge)
    }
}
