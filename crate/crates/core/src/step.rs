//! Exact piecewise-constant functions with rational breakpoints.
//!
//! Breakpoints are stored as `i128` numerators over one common denominator, and
//! cell values as indices into a palette of distinct rationals. Densities of
//! Cantor levels have two distinct values and hundreds of thousands of cells, so
//! this layout keeps sweeps cheap while every quantity stays exact.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{big_to_i128, checked_lcm, fmt_q, numer_over, parse_q, to_f64, Q};

/// Piecewise-constant function, zero outside `[knots[0], knots[last]]`.
///
/// Canonical form: adjacent cells carry different values, the first and last
/// cells are nonzero, and `palette[0] == 0`.
#[derive(Clone, Debug)]
pub struct StepFunction {
    denom: i128,
    knots: Vec<i128>,
    palette: Vec<Q>,
    cells: Vec<u32>,
}

/// One cell of the JSON form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub left: String,
    pub right: String,
    pub value: String,
}

impl PartialEq for StepFunction {
    fn eq(&self, other: &Self) -> bool {
        self.cells_exact() == other.cells_exact()
    }
}

struct Palette {
    values: Vec<Q>,
    index: HashMap<Q, u32>,
}

impl Palette {
    fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(Q::zero(), 0);
        Palette {
            values: vec![Q::zero()],
            index,
        }
    }

    fn intern(&mut self, v: Q) -> u32 {
        if let Some(&i) = self.index.get(&v) {
            return i;
        }
        let i = self.values.len() as u32;
        self.index.insert(v.clone(), i);
        self.values.push(v);
        i
    }
}

impl StepFunction {
    pub fn zero() -> Self {
        StepFunction {
            denom: 1,
            knots: Vec::new(),
            palette: vec![Q::zero()],
            cells: Vec::new(),
        }
    }

    /// Indicator of `[a, b]`.
    pub fn indicator(a: &Q, b: &Q) -> Result<Self> {
        Self::from_cells(&[(a.clone(), b.clone(), Q::one())])
    }

    /// Builds from `(left, right, value)` cells, sorted and non-overlapping; gaps are zero.
    pub fn from_cells(cells: &[(Q, Q, Q)]) -> Result<Self> {
        if cells.is_empty() {
            return Ok(Self::zero());
        }
        let mut denom: i128 = 1;
        for (a, b, _) in cells {
            denom = checked_lcm(denom, big_to_i128(a.denom(), "breakpoint denominator")?)?;
            denom = checked_lcm(denom, big_to_i128(b.denom(), "breakpoint denominator")?)?;
        }
        let mut knots = Vec::with_capacity(cells.len() + 1);
        let mut values = Vec::with_capacity(cells.len());
        for (a, b, v) in cells {
            if a >= b {
                return Err(Error::Domain(format!(
                    "empty cell [{}, {}]",
                    fmt_q(a),
                    fmt_q(b)
                )));
            }
            let an = numer_over(a, denom)?;
            let bn = numer_over(b, denom)?;
            match knots.last() {
                None => knots.push(an),
                Some(&last) if an == last => {}
                Some(&last) if an > last => {
                    values.push(Q::zero());
                    knots.push(an);
                }
                Some(_) => {
                    return Err(Error::Domain("cells overlap or are unsorted".into()));
                }
            }
            values.push(v.clone());
            knots.push(bn);
        }
        Ok(Self::from_lattice(denom, knots, values))
    }

    /// Builds from lattice knots `knots[i] / denom` and one value per cell.
    pub fn from_lattice(denom: i128, knots: Vec<i128>, values: Vec<Q>) -> Self {
        assert!(denom > 0);
        assert_eq!(knots.len(), values.len() + 1);
        let mut pal = Palette::new();
        let cells = values.into_iter().map(|v| pal.intern(v)).collect();
        Self::canonical(denom, knots, pal.values, cells)
    }

    /// Builds from lattice knots with cells already indexing `palette` (`palette[0] == 0`).
    pub(crate) fn from_palette(
        denom: i128,
        knots: Vec<i128>,
        palette: Vec<Q>,
        cells: Vec<u32>,
    ) -> Self {
        let mut pal = Palette::new();
        let remap: Vec<u32> = palette.into_iter().map(|v| pal.intern(v)).collect();
        let cells = cells.into_iter().map(|c| remap[c as usize]).collect();
        Self::canonical(denom, knots, pal.values, cells)
    }

    fn canonical(denom: i128, knots: Vec<i128>, palette: Vec<Q>, cells: Vec<u32>) -> Self {
        let mut k2: Vec<i128> = Vec::with_capacity(knots.len());
        let mut c2: Vec<u32> = Vec::with_capacity(cells.len());
        let push = |k2: &mut Vec<i128>, c2: &mut Vec<u32>, c: u32, b: i128| {
            if c2.last() == Some(&c) {
                *k2.last_mut().unwrap() = b;
            } else {
                c2.push(c);
                k2.push(b);
            }
        };
        for (i, &c) in cells.iter().enumerate() {
            let (a, b) = (knots[i], knots[i + 1]);
            assert!(a <= b, "knots must be nondecreasing");
            if a == b {
                continue;
            }
            match k2.last() {
                None => k2.push(a),
                Some(&last) if last < a => push(&mut k2, &mut c2, 0, a),
                Some(&last) => assert!(last == a, "cells overlap"),
            }
            push(&mut k2, &mut c2, c, b);
        }
        // trim zero cells at both ends
        let start = c2.iter().position(|&c| c != 0);
        let Some(start) = start else {
            return StepFunction {
                denom: 1,
                knots: Vec::new(),
                palette,
                cells: Vec::new(),
            };
        };
        let end = c2.iter().rposition(|&c| c != 0).unwrap();
        let cells = c2[start..=end].to_vec();
        let knots = k2[start..=end + 1].to_vec();
        StepFunction {
            denom,
            knots,
            palette,
            cells,
        }
    }

    pub fn denom(&self) -> i128 {
        self.denom
    }

    pub fn knots(&self) -> &[i128] {
        &self.knots
    }

    pub fn palette(&self) -> &[Q] {
        &self.palette
    }

    pub fn cell_indices(&self) -> &[u32] {
        &self.cells
    }

    pub fn is_zero(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Breakpoints as exact rationals.
    pub fn breakpoints(&self) -> Vec<Q> {
        self.knots.iter().map(|&k| self.knot(k)).collect()
    }

    fn knot(&self, k: i128) -> Q {
        Q::new(BigInt::from(k), BigInt::from(self.denom))
    }

    /// Support hull `[first, last]` breakpoint, or `None` for the zero function.
    pub fn support(&self) -> Option<(Q, Q)> {
        if self.is_zero() {
            return None;
        }
        Some((
            self.knot(self.knots[0]),
            self.knot(*self.knots.last().unwrap()),
        ))
    }

    /// All cells including interior zero gaps.
    pub fn cells_exact(&self) -> Vec<(Q, Q, Q)> {
        (0..self.cells.len())
            .map(|i| {
                (
                    self.knot(self.knots[i]),
                    self.knot(self.knots[i + 1]),
                    self.palette[self.cells[i] as usize].clone(),
                )
            })
            .collect()
    }

    /// Nonzero cells only.
    pub fn nonzero_cells(&self) -> Vec<(Q, Q, Q)> {
        self.cells_exact()
            .into_iter()
            .filter(|(_, _, v)| !v.is_zero())
            .collect()
    }

    fn locate(&self, x: &Q) -> Option<usize> {
        if self.is_zero() {
            return None;
        }
        let t = x * BigRational::from_integer(BigInt::from(self.denom));
        let fl = t.floor().to_integer();
        let lo = self.knots[0];
        let hi = *self.knots.last().unwrap();
        let fl = match fl.try_into() {
            Ok(v) => v,
            Err(_) => {
                return None;
            }
        };
        let fl: i128 = fl;
        if fl < lo || fl >= hi {
            return None;
        }
        let pos = self.knots.partition_point(|&k| k <= fl);
        Some(pos - 1)
    }

    /// Right-continuous evaluation: the value of the cell `[a, b)` holding `x`.
    pub fn eval(&self, x: &Q) -> Q {
        match self.locate(x) {
            Some(i) => self.palette[self.cells[i] as usize].clone(),
            None => Q::zero(),
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let t = x * self.denom as f64;
        let lo = self.knots[0] as f64;
        let hi = *self.knots.last().unwrap() as f64;
        if t < lo || t >= hi {
            return 0.0;
        }
        let pos = self.knots.partition_point(|&k| (k as f64) <= t);
        to_f64(&self.palette[self.cells[pos - 1] as usize])
    }

    /// Exact `∫ f`.
    pub fn integral(&self) -> Q {
        let mut widths = vec![0i128; self.palette.len()];
        for (i, &c) in self.cells.iter().enumerate() {
            widths[c as usize] += self.knots[i + 1] - self.knots[i];
        }
        let mut s = Q::zero();
        for (w, v) in widths.iter().zip(&self.palette) {
            if *w != 0 && !v.is_zero() {
                s += v * Q::from_integer(BigInt::from(*w));
            }
        }
        s / Q::from_integer(BigInt::from(self.denom))
    }

    /// Exact `∫ |f|^p` for integer `p ≥ 1`.
    pub fn abs_power_integral(&self, p: u32) -> Q {
        let mut widths = vec![0i128; self.palette.len()];
        for (i, &c) in self.cells.iter().enumerate() {
            widths[c as usize] += self.knots[i + 1] - self.knots[i];
        }
        let mut s = Q::zero();
        for (w, v) in widths.iter().zip(&self.palette) {
            if *w != 0 && !v.is_zero() {
                s += num_traits::pow(v.abs(), p as usize) * Q::from_integer(BigInt::from(*w));
            }
        }
        s / Q::from_integer(BigInt::from(self.denom))
    }

    /// Exact `∫_a^b f`.
    pub fn integral_over(&self, a: &Q, b: &Q) -> Q {
        if a >= b || self.is_zero() {
            return Q::zero();
        }
        let d = Q::from_integer(BigInt::from(self.denom));
        let mut s = Q::zero();
        let start = self.locate_floor(a);
        for i in start..self.cells.len() {
            let left = self.knot(self.knots[i]);
            if &left >= b {
                break;
            }
            let v = &self.palette[self.cells[i] as usize];
            if v.is_zero() {
                continue;
            }
            let right = Q::new(BigInt::from(self.knots[i + 1]), d.numer().clone());
            let lo = if &left > a { left } else { a.clone() };
            let hi = if &right < b { right } else { b.clone() };
            if lo < hi {
                s += v * (hi - lo);
            }
        }
        s
    }

    /// Index of the first cell whose right end exceeds `x`.
    fn locate_floor(&self, x: &Q) -> usize {
        let t = x * BigRational::from_integer(BigInt::from(self.denom));
        let fl = t.floor().to_integer();
        match i128::try_from(fl) {
            Ok(fl) => self
                .knots
                .partition_point(|&k| k <= fl)
                .saturating_sub(1)
                .min(self.cells.len()),
            Err(_) => {
                if t.is_negative() {
                    0
                } else {
                    self.cells.len()
                }
            }
        }
    }

    fn map_values<F: Fn(&Q) -> Q>(&self, f: F) -> Self {
        let mut pal = Palette::new();
        let remap: Vec<u32> = self.palette.iter().map(|v| pal.intern(f(v))).collect();
        let cells = self.cells.iter().map(|&c| remap[c as usize]).collect();
        Self::canonical(self.denom, self.knots.clone(), pal.values, cells)
    }

    pub fn abs(&self) -> Self {
        self.map_values(|v| v.abs())
    }

    pub fn scale(&self, c: &Q) -> Self {
        self.map_values(|v| v * c)
    }

    /// Pointwise combination `op(f, g)`; `op(0, 0)` must be 0.
    pub fn combine<F: Fn(&Q, &Q) -> Q>(&self, other: &Self, op: F) -> Result<Self> {
        let d = checked_lcm(self.denom, other.denom)?;
        let (sa, sb) = (d / self.denom, d / other.denom);
        let ka: Vec<i128> = self
            .knots
            .iter()
            .map(|&k| crate::exact::mul128(k, sa))
            .collect::<Result<_>>()?;
        let kb: Vec<i128> = other
            .knots
            .iter()
            .map(|&k| crate::exact::mul128(k, sb))
            .collect::<Result<_>>()?;
        let mut all: Vec<i128> = ka.iter().chain(kb.iter()).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.is_empty() {
            return Ok(Self::zero());
        }
        let mut pal = Palette::new();
        let mut memo: HashMap<(u32, u32), u32> = HashMap::new();
        let mut cells = Vec::with_capacity(all.len() - 1);
        let (mut ia, mut ib) = (0usize, 0usize);
        let value_at = |knots: &[i128], cells: &[u32], ptr: &mut usize, x: i128| -> u32 {
            while *ptr < knots.len() && knots[*ptr] <= x {
                *ptr += 1;
            }
            if *ptr == 0 || *ptr == knots.len() {
                0
            } else {
                cells[*ptr - 1]
            }
        };
        for w in all.windows(2) {
            let x = w[0];
            let ca = value_at(&ka, &self.cells, &mut ia, x);
            let cb = value_at(&kb, &other.cells, &mut ib, x);
            let idx = *memo.entry((ca, cb)).or_insert_with(|| {
                pal.intern(op(&self.palette[ca as usize], &other.palette[cb as usize]))
            });
            cells.push(idx);
        }
        Ok(Self::canonical(d, all, pal.values, cells))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a * b)
    }

    /// `x ↦ f(x / λ)` for rational `λ > 0`.
    pub fn dilate(&self, lambda: &Q) -> Result<Self> {
        if !lambda.is_positive() {
            return Err(Error::Domain("dilation factor must be positive".into()));
        }
        let n = big_to_i128(lambda.numer(), "dilation")?;
        let d = big_to_i128(lambda.denom(), "dilation")?;
        let denom = crate::exact::mul128(self.denom, d)?;
        let knots = self
            .knots
            .iter()
            .map(|&k| crate::exact::mul128(k, n))
            .collect::<Result<_>>()?;
        Ok(Self::canonical(
            denom,
            knots,
            self.palette.clone(),
            self.cells.clone(),
        ))
    }

    /// `x ↦ f(x − t)`.
    pub fn translate(&self, t: &Q) -> Result<Self> {
        let d = checked_lcm(self.denom, big_to_i128(t.denom(), "shift")?)?;
        let s = d / self.denom;
        let tn = numer_over(t, d)?;
        let knots = self
            .knots
            .iter()
            .map(|&k| crate::exact::add128(crate::exact::mul128(k, s)?, tn))
            .collect::<Result<_>>()?;
        Ok(Self::canonical(
            d,
            knots,
            self.palette.clone(),
            self.cells.clone(),
        ))
    }

    /// `true` when `f ≤ g` everywhere.
    pub fn le(&self, other: &Self) -> Result<bool> {
        let diff = other.sub(self)?;
        Ok(diff
            .palette
            .iter()
            .enumerate()
            .all(|(i, v)| !v.is_negative() || !diff.cells.iter().any(|&c| c as usize == i)))
    }

    pub fn to_records(&self) -> Vec<CellRecord> {
        self.nonzero_cells()
            .into_iter()
            .map(|(a, b, v)| CellRecord {
                left: fmt_q(&a),
                right: fmt_q(&b),
                value: fmt_q(&v),
            })
            .collect()
    }

    pub fn from_records(records: &[CellRecord]) -> Result<Self> {
        let cells = records
            .iter()
            .map(|r| Ok((parse_q(&r.left)?, parse_q(&r.right)?, parse_q(&r.value)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_cells(&cells)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_records()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let recs: Vec<CellRecord> =
            serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_records(&recs)
    }
}

impl Serialize for StepFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_records().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let recs = Vec::<CellRecord>::deserialize(d)?;
        Self::from_records(&recs).map_err(serde::de::Error::custom)
    }
}
