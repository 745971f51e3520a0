//! Boundary and source data given either as constants or as closures.

use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(&[f64; 3], f64) -> f64 + Send + Sync>;

/// A scalar field on the macroscopic domain.
#[derive(Clone)]
pub enum Field {
    Constant(f64),
    Function(ScalarFn),
}

impl Field {
    pub fn function(f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        Field::Function(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            Field::Constant(c) => *c,
            Field::Function(f) => f(x),
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        match self {
            Field::Constant(c) => Field::Constant(c * s),
            Field::Function(f) => {
                let f = f.clone();
                Field::Function(Arc::new(move |x| s * f(x)))
            }
        }
    }
}

impl From<f64> for Field {
    fn from(c: f64) -> Self {
        Field::Constant(c)
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Constant(c) => write!(f, "Constant({c})"),
            Field::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// A scalar field that may also depend on time.
#[derive(Clone)]
pub enum TimeField {
    Constant(f64),
    Function(SpaceTimeFn),
}

impl TimeField {
    pub fn function(f: impl Fn(&[f64; 3], f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeField::Function(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64; 3], t: f64) -> f64 {
        match self {
            TimeField::Constant(c) => *c,
            TimeField::Function(f) => f(x, t),
        }
    }

    pub fn scaled(&self, s: f64) -> TimeField {
        match self {
            TimeField::Constant(c) => TimeField::Constant(c * s),
            TimeField::Function(f) => {
                let f = f.clone();
                TimeField::Function(Arc::new(move |x, t| s * f(x, t)))
            }
        }
    }
}

impl From<f64> for TimeField {
    fn from(c: f64) -> Self {
        TimeField::Constant(c)
    }
}

impl fmt::Debug for TimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeField::Constant(c) => write!(f, "Constant({c})"),
            TimeField::Function(_) => write!(f, "Function(..)"),
        }
    }
}
