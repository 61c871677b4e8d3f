//! Scalar functions of the flow parameter with explicit breakpoints.

use std::fmt;
use std::sync::Arc;

use crate::ode::Side;
use crate::scalar::Real;

/// Index of the piece containing `t` among pieces separated by sorted `breaks`.
pub(crate) fn piece_index<T: Real>(breaks: &[T], t: T, side: Side) -> usize {
    match side {
        Side::Right => breaks.partition_point(|b| *b <= t),
        Side::Left => breaks.partition_point(|b| *b < t),
    }
}

/// A real function of one variable: constant, piecewise constant, or smooth.
#[derive(Clone)]
pub enum ScalarFn<T: Real> {
    Const(T),
    /// `values[i]` holds on the `i`-th interval cut out by `breaks`.
    Piecewise { breaks: Vec<T>, values: Vec<T> },
    Smooth(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> fmt::Debug for ScalarFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "Const({c})"),
            Self::Piecewise { breaks, values } => f
                .debug_struct("Piecewise")
                .field("breaks", breaks)
                .field("values", values)
                .finish(),
            Self::Smooth(_) => f.write_str("Smooth(..)"),
        }
    }
}

impl<T: Real> ScalarFn<T> {
    pub fn smooth(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self::Smooth(Arc::new(f))
    }

    /// Piecewise constant function; panics unless `values.len() == breaks.len() + 1`
    /// and `breaks` is strictly increasing.
    pub fn piecewise(breaks: Vec<T>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), breaks.len() + 1, "one value per piece");
        assert!(breaks.windows(2).all(|w| w[0] < w[1]), "breaks must increase");
        Self::Piecewise { breaks, values }
    }

    /// `a` before `t_switch`, `b` from `t_switch` on.
    pub fn step(a: T, b: T, t_switch: T) -> Self {
        Self::piecewise(vec![t_switch], vec![a, b])
    }

    pub fn eval_side(&self, t: T, side: Side) -> T {
        match self {
            Self::Const(c) => *c,
            Self::Piecewise { breaks, values } => values[piece_index(breaks, t, side)],
            Self::Smooth(f) => f(t),
        }
    }

    pub fn eval(&self, t: T) -> T {
        self.eval_side(t, Side::Right)
    }

    pub fn breakpoints(&self) -> Vec<T> {
        match self {
            Self::Piecewise { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_sides() {
        let f = ScalarFn::step(0.0, 1.0, 0.8);
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(0.8), 1.0);
        assert_eq!(f.eval_side(0.8, Side::Left), 0.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.breakpoints(), vec![0.8]);
        let g = ScalarFn::smooth(|t: f64| t * t);
        assert_eq!(g.eval(3.0), 9.0);
    }
}
