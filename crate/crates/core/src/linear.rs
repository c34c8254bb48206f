//! Continuous piecewise-linear test functions and the integrand interface shared
//! with step functions.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::Q;
use crate::step::StepFunction;

/// `f(z) = slope·z + intercept` on `[a, b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub a: Q,
    pub b: Q,
    pub slope: Q,
    pub intercept: Q,
}

/// A function that can be integrated exactly against Lebesgue measure restricted to
/// unions of intervals.
pub trait Integrand {
    /// Pieces meeting `[lo, hi]`, in increasing order, zero pieces omitted.
    fn pieces_in(&self, lo: &Q, hi: &Q) -> Vec<Piece>;
    fn value_at(&self, x: &Q) -> Q;
}

impl Integrand for StepFunction {
    fn pieces_in(&self, lo: &Q, hi: &Q) -> Vec<Piece> {
        let Some((s, e)) = self.support() else {
            return Vec::new();
        };
        if &e <= lo || &s >= hi {
            return Vec::new();
        }
        let bps = self.breakpoints();
        let start = bps.partition_point(|k| k <= lo).saturating_sub(1);
        let mut out = Vec::new();
        for i in start..self.num_cells() {
            if &bps[i] >= hi {
                break;
            }
            let v = &self.palette()[self.cell_indices()[i] as usize];
            if v.is_zero() {
                continue;
            }
            out.push(Piece {
                a: bps[i].clone(),
                b: bps[i + 1].clone(),
                slope: Q::zero(),
                intercept: v.clone(),
            });
        }
        out
    }

    fn value_at(&self, x: &Q) -> Q {
        self.eval(x)
    }
}

/// Continuous interpolant through `(x_i, y_i)`, zero outside `[x_0, x_n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(Q, Q)>,
}

impl PiecewiseLinear {
    pub fn from_points(points: Vec<(Q, Q)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("need at least two points".into()));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Domain("abscissae must increase".into()));
        }
        Ok(PiecewiseLinear { points })
    }

    /// Tent of the given height on `[c − w, c + w]`.
    pub fn hat(center: &Q, half_width: &Q, height: &Q) -> Result<Self> {
        Self::from_points(vec![
            (center - half_width, Q::zero()),
            (center.clone(), height.clone()),
            (center + half_width, Q::zero()),
        ])
    }

    pub fn points(&self) -> &[(Q, Q)] {
        &self.points
    }

    /// Lipschitz constant on ℝ; `None` if the function jumps at an end.
    pub fn lipschitz(&self) -> Option<Q> {
        if !self.points[0].1.is_zero() || !self.points.last().unwrap().1.is_zero() {
            return None;
        }
        self.pieces_all().into_iter().map(|p| p.slope.abs()).max()
    }

    fn pieces_all(&self) -> Vec<Piece> {
        self.points
            .windows(2)
            .map(|w| {
                let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
                let slope = (y1 - y0) / (x1 - x0);
                let intercept = y0 - &slope * x0;
                Piece {
                    a: x0.clone(),
                    b: x1.clone(),
                    slope,
                    intercept,
                }
            })
            .collect()
    }
}

impl Integrand for PiecewiseLinear {
    fn pieces_in(&self, lo: &Q, hi: &Q) -> Vec<Piece> {
        self.pieces_all()
            .into_iter()
            .filter(|p| &p.b > lo && &p.a < hi)
            .filter(|p| !(p.slope.is_zero() && p.intercept.is_zero()))
            .collect()
    }

    fn value_at(&self, x: &Q) -> Q {
        for p in self.pieces_all() {
            if &p.a <= x && x < &p.b {
                return &p.slope * x + &p.intercept;
            }
        }
        Q::zero()
    }
}
