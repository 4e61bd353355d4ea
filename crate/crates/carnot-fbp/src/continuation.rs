//! placeholder
use crate::Real;
#[derive(Debug, Clone)]
pub struct FreeBoundary<T> { pub cells: Vec<T> }
