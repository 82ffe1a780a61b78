use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fidelity {
    Low,
    High,
}

impl Fidelity {
    pub fn tag(self) -> &'static str {
        match self {
            Fidelity::Low => "low",
            Fidelity::High => "high",
        }
    }
}

/// One `(x, y)` observation. `y_low` carries the paired low-fidelity output
/// that MF-NP consumes alongside a high-fidelity point.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub y_low: Option<Vec<T>>,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Self {
        Point { x, y, y_low: None }
    }

    pub fn paired(x: Vec<T>, y: Vec<T>, y_low: Vec<T>) -> Self {
        Point { x, y, y_low: Some(y_low) }
    }
}

/// Context and target sets at one fidelity level.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextTargetBatch<T> {
    pub fidelity: Fidelity,
    pub context: Vec<Point<T>>,
    pub target: Vec<Point<T>>,
}

/// Row matrices for a batch, context rows first then target rows.
pub(crate) struct BatchMatrices<T> {
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    pub y_low: Option<Tensor<T>>,
    pub n_context: usize,
    pub n_target: usize,
}

impl<T: Scalar> BatchMatrices<T> {
    pub fn context_rows(&self) -> Vec<usize> {
        (0..self.n_context).collect()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_context + self.n_target).collect()
    }

    pub fn target_rows(&self) -> Vec<usize> {
        (self.n_context..self.n_context + self.n_target).collect()
    }
}

impl<T: Scalar> ContextTargetBatch<T> {
    pub fn new(fidelity: Fidelity, context: Vec<Point<T>>, target: Vec<Point<T>>) -> Self {
        ContextTargetBatch { fidelity, context, target }
    }

    pub fn points(&self) -> impl Iterator<Item = &Point<T>> {
        self.context.iter().chain(&self.target)
    }

    pub(crate) fn expect_fidelity(&self, f: Fidelity) -> Result<()> {
        if self.fidelity == f {
            Ok(())
        } else {
            Err(Error::invalid(format!("expected a {} fidelity batch, got {}", f.tag(), self.fidelity.tag())))
        }
    }

    /// Validates widths and stacks the points. `paired` demands `y_low` of width `d_y_low`.
    pub(crate) fn matrices(&self, d_x: usize, d_y: usize, paired: Option<usize>) -> Result<BatchMatrices<T>> {
        let n = self.context.len() + self.target.len();
        let mut xs = Vec::with_capacity(n * d_x);
        let mut ys = Vec::with_capacity(n * d_y);
        let mut yl = Vec::new();
        for (i, p) in self.points().enumerate() {
            if p.x.len() != d_x {
                return Err(Error::LengthMismatch { op: "batch x", expected: d_x, actual: p.x.len() });
            }
            if p.y.len() != d_y {
                return Err(Error::LengthMismatch { op: "batch y", expected: d_y, actual: p.y.len() });
            }
            xs.extend_from_slice(&p.x);
            ys.extend_from_slice(&p.y);
            if let Some(d_yl) = paired {
                let low = p.y_low.as_ref().ok_or(Error::Unpaired { index: i })?;
                if low.len() != d_yl {
                    return Err(Error::LengthMismatch { op: "batch y_low", expected: d_yl, actual: low.len() });
                }
                yl.extend_from_slice(low);
            }
        }
        Ok(BatchMatrices {
            x: Tensor::matrix(n, d_x, xs)?,
            y: Tensor::matrix(n, d_y, ys)?,
            y_low: match paired {
                Some(d_yl) => Some(Tensor::matrix(n, d_yl, yl)?),
                None => None,
            },
            n_context: self.context.len(),
            n_target: self.target.len(),
        })
    }
}
