//! Averages along dilated copies of the level sets, the maximal operators built
//! from them, the adjoint `Φ_k*`, and the two numerical experiments.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{sigma, CantorSet};
use crate::correlation::c0_constant;
use crate::error::{Error, Result};
use crate::exact::{
    add128, big_to_i128, checked_lcm, fmt_q, mul128, numer_over, q, qi, qu, to_f64, Q,
};
use crate::intersect::Grid;
use crate::linear::Integrand;
use crate::rng::RngStream;
use crate::step::StepFunction;

/// `A_r[k] f(x) = ∫ f(x + r y) φ_k(y) dy`, exact.
pub fn average<F: Integrand>(f: &F, set: &CantorSet, k: usize, r: &Q, x: &Q) -> Result<Q> {
    if !r.is_positive() {
        return Err(Error::Domain("r must be positive".into()));
    }
    let lvl = set.level(k)?;
    if lvl.count() == 0 {
        return Err(Error::DegenerateMeasure(k));
    }
    let lo = x + r;
    let hi = x + r * qi(2);
    let mut acc = Q::zero();
    for p in f.pieces_in(&lo, &hi) {
        let a = if p.a > lo { p.a.clone() } else { lo.clone() };
        let b = if p.b < hi { p.b.clone() } else { hi.clone() };
        if a >= b {
            continue;
        }
        let ya = (&a - x) / r;
        let yb = (&b - x) / r;
        let meas = lvl.measure_between(&ya, &yb);
        if meas.is_zero() {
            continue;
        }
        acc += (&p.slope * x + &p.intercept) * meas;
        if !p.slope.is_zero() {
            acc += &p.slope * r * lvl.moment_between(&ya, &yb);
        }
    }
    Ok(acc / lvl.measure())
}

/// `max_{r ∈ grid} |∫ f(x + r y) σ_k(y) dy|`.
pub fn mk_operator<F: Integrand>(
    f: &F,
    set: &CantorSet,
    k: usize,
    x: &Q,
    r_grid: &[Q],
) -> Result<Q> {
    set.level(k + 1)?;
    let mut best = Q::zero();
    for r in r_grid {
        let v = (average(f, set, k + 1, r, x)? - average(f, set, k, r, x)?).abs();
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Evaluation points, dilation grid, scale window and exponents of a maximal query.
#[derive(Clone, Debug, PartialEq)]
pub struct MaximalQuery {
    pub xs: Vec<Q>,
    pub r_grid: Vec<Q>,
    pub m_min: i32,
    pub m_max: i32,
    pub p: Q,
    pub q: Q,
}

impl MaximalQuery {
    pub fn validate(&self) -> Result<()> {
        if self.r_grid.is_empty() || self.r_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "r grid must be nonempty and increasing".into(),
            ));
        }
        if self.r_grid.iter().any(|r| !r.is_positive()) {
            return Err(Error::Domain("r grid must be positive".into()));
        }
        if !(self.p > Q::one() && self.p <= self.q) {
            return Err(Error::Domain("need 1 < p ≤ q".into()));
        }
        if self.m_min > self.m_max {
            return Err(Error::Domain("empty scale window".into()));
        }
        Ok(())
    }

    /// `a = 1/p − 1/q`.
    pub fn a(&self) -> Q {
        Q::one() / &self.p - Q::one() / &self.q
    }
}

/// Where a maximal value was attained.
#[derive(Clone, Debug, PartialEq)]
pub struct Attained {
    pub value: Q,
    pub r: Q,
    pub k: usize,
}

/// Per `x`: `max_{r ∈ grid, 1 ≤ k ≤ K} A_r[k]|f|(x)`.
pub fn restricted_maximal(
    f: &StepFunction,
    set: &CantorSet,
    xs: &[Q],
    r_grid: &[Q],
) -> Result<Vec<Attained>> {
    let g = f.abs();
    xs.par_iter()
        .map(|x| {
            let mut best = Attained {
                value: Q::zero(),
                r: r_grid.first().cloned().unwrap_or_else(Q::one),
                k: 1,
            };
            for k in 1..=set.depth() {
                for r in r_grid {
                    let v = average(&g, set, k, r, x)?;
                    if v > best.value {
                        best = Attained {
                            value: v,
                            r: r.clone(),
                            k,
                        };
                    }
                }
            }
            Ok(best)
        })
        .collect()
}

/// Per-level maxima `max_r A_r[k]|f|(x)` for `k = 1..=K`.
pub fn restricted_maximal_by_level(
    f: &StepFunction,
    set: &CantorSet,
    x: &Q,
    r_grid: &[Q],
) -> Result<Vec<Q>> {
    let g = f.abs();
    (1..=set.depth())
        .map(|k| {
            let mut best = Q::zero();
            for r in r_grid {
                let v = average(&g, set, k, r, x)?;
                if v > best {
                    best = v;
                }
            }
            Ok(best)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrestrictedValue {
    pub value: f64,
    /// Exact average at the maximizer, before the `r^a` factor.
    pub average: Q,
    pub m: i32,
    pub r: Q,
    pub k: usize,
}

fn pow2(m: i32) -> Q {
    if m >= 0 {
        Q::from_integer(BigInt::one() << m as usize)
    } else {
        Q::new(BigInt::one(), BigInt::one() << (-m) as usize)
    }
}

/// `A_{u 2^{−m}}[k] f(x)` evaluated as `A_u[k](f(2^{−m} ·))(2^m x)`.
pub fn rescaled_average(
    f: &StepFunction,
    set: &CantorSet,
    k: usize,
    u: &Q,
    m: i32,
    x: &Q,
) -> Result<Q> {
    let s = pow2(m);
    let g = f.dilate(&s)?;
    average(&g, set, k, u, &(x * &s))
}

/// Per `x`: `max (r 2^{−m})^a A_{r 2^{−m}}[k]|f|(x)` over the query window.
pub fn unrestricted_maximal(
    f: &StepFunction,
    set: &CantorSet,
    query: &MaximalQuery,
) -> Result<Vec<UnrestrictedValue>> {
    query.validate()?;
    let g = f.abs();
    let a = to_f64(&query.a());
    let dilated: Vec<(i32, StepFunction)> = (query.m_min..=query.m_max)
        .map(|m| Ok((m, g.dilate(&pow2(m))?)))
        .collect::<Result<_>>()?;
    query
        .xs
        .par_iter()
        .map(|x| {
            let mut best: Option<UnrestrictedValue> = None;
            for (m, gm) in &dilated {
                let xm = x * pow2(*m);
                for r in &query.r_grid {
                    let scale = (to_f64(r) * 2f64.powi(-*m)).powf(a);
                    for k in 1..=set.depth() {
                        let avg = average(gm, set, k, r, &xm)?;
                        let v = scale * to_f64(&avg);
                        if best.as_ref().is_none_or(|b| v > b.value) {
                            best = Some(UnrestrictedValue {
                                value: v,
                                average: avg,
                                m: *m,
                                r: r.clone(),
                                k,
                            });
                        }
                    }
                }
            }
            best.ok_or_else(|| Error::Domain("empty query".into()))
        })
        .collect()
}

/// Centers of `count` equal cells of `[1, 2]`.
pub fn r_grid_uniform(count: u64) -> Vec<Q> {
    (0..count)
        .map(|i| qi(1) + Q::new(BigInt::from(2 * i + 1), BigInt::from(2 * count)))
        .collect()
}

/// The grid together with all midpoints of consecutive entries.
pub fn refine_grid(grid: &[Q]) -> Vec<Q> {
    let mut out = Vec::with_capacity(grid.len() * 2);
    for w in grid.windows(2) {
        out.push(w[0].clone());
        out.push((&w[0] + &w[1]) / qi(2));
    }
    if let Some(last) = grid.last() {
        out.push(last.clone());
    }
    out
}

/// Union of cells `[j/m, (j+1)/m)` of `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSet {
    pub cells: u64,
    pub members: Vec<u64>,
}

impl GridSet {
    pub fn new(cells: u64, mut members: Vec<u64>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.last().is_some_and(|&j| j >= cells) {
            return Err(Error::Grid(format!("cell index beyond {cells}")));
        }
        Ok(GridSet { cells, members })
    }

    /// Builds the set from intervals whose endpoints lie on the `1/cells` grid.
    pub fn from_intervals(cells: u64, intervals: &[(Q, Q)]) -> Result<Self> {
        let m = qu(cells);
        let mut members = Vec::new();
        for (a, b) in intervals {
            let (ta, tb) = (a * &m, b * &m);
            if !ta.is_integer() || !tb.is_integer() || a < &Q::zero() || b > &Q::one() || a > b {
                return Err(Error::Grid(format!(
                    "[{}, {}] is not a union of 1/{cells} cells in [0, 1]",
                    fmt_q(a),
                    fmt_q(b)
                )));
            }
            let (ia, ib) = (
                ta.to_integer().to_u64().unwrap(),
                tb.to_integer().to_u64().unwrap(),
            );
            members.extend(ia..ib);
        }
        Self::new(cells, members)
    }

    pub fn measure(&self) -> Q {
        Q::new(BigInt::from(self.members.len()), BigInt::from(self.cells))
    }

    pub fn indicator(&self) -> StepFunction {
        let d = self.cells as i128;
        let mut knots = Vec::new();
        let mut vals = Vec::new();
        for &j in &self.members {
            knots.push(j as i128);
            knots.push(j as i128 + 1);
            vals.push(Q::one());
            vals.push(Q::zero());
        }
        let cells: Vec<(Q, Q, Q)> = self
            .members
            .iter()
            .map(|&j| (q128(j as i128, d), q128(j as i128 + 1, d), Q::one()))
            .collect();
        StepFunction::from_cells(&cells).expect("disjoint cells")
    }
}

fn q128(n: i128, d: i128) -> Q {
    crate::exact::q128(n, d)
}

/// Piecewise-constant `x ↦ (c(x), r(x))` on the `cells` equal cells of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointAssignment {
    pub k: usize,
    pub cells: u64,
    pub c: Vec<Q>,
    pub r: Vec<Q>,
}

impl AdjointAssignment {
    pub fn constant(k: usize, cells: u64, c: Q, r: Q) -> Self {
        AdjointAssignment {
            k,
            cells,
            c: vec![c; cells as usize],
            r: vec![r; cells as usize],
        }
    }

    fn check(&self, omega_cells: u64) -> Result<()> {
        if omega_cells != self.cells
            || self.c.len() as u64 != self.cells
            || self.r.len() as u64 != self.cells
        {
            return Err(Error::Grid(format!(
                "set on 1/{omega_cells} cells does not align with an assignment on 1/{} cells",
                self.cells
            )));
        }
        Ok(())
    }
}

/// Largest number of breakpoint events a superposition may allocate.
pub const MAX_EVENTS: usize = 20_000_000;

/// Superposition on the lattice `Z/denom`: cell `i` spans `knots[i]..knots[i+1]` and
/// carries `values[i] / scale`.
struct Sweep {
    denom: i128,
    scale: i128,
    knots: Vec<i128>,
    values: Vec<i128>,
}

fn sweep(s: &StepFunction, copies: &[(Q, Q, Q)]) -> Result<Option<Sweep>> {
    let copies: Vec<&(Q, Q, Q)> = copies.iter().filter(|c| !c.2.is_zero()).collect();
    if copies.is_empty() || s.is_zero() {
        return Ok(None);
    }
    let kn = s.knots();
    let idx = s.cell_indices();
    let pal = s.palette();
    if copies.len().saturating_mul(kn.len()) > MAX_EVENTS {
        return Err(Error::Capacity(format!(
            "{} copies of {} breakpoints exceed {MAX_EVENTS} events",
            copies.len(),
            kn.len()
        )));
    }
    let mut g: i128 = 1;
    let mut wden: i128 = 1;
    let mut pden: i128 = 1;
    for p in pal {
        pden = checked_lcm(pden, big_to_i128(p.denom(), "value denominator")?)?;
    }
    for (c, r, w) in copies.iter().map(|t| (&t.0, &t.1, &t.2)) {
        if !r.is_positive() {
            return Err(Error::Domain("dilations must be positive".into()));
        }
        g = checked_lcm(g, big_to_i128(c.denom(), "translation denominator")?)?;
        g = checked_lcm(
            g,
            mul128(big_to_i128(r.denom(), "dilation denominator")?, s.denom())?,
        )?;
        wden = checked_lcm(wden, big_to_i128(w.denom(), "weight denominator")?)?;
    }
    let pnum: Vec<i128> = pal
        .iter()
        .map(|p| numer_over(p, pden))
        .collect::<Result<_>>()?;
    // (z, change of the value numerator)
    let mut events: Vec<(i128, i128)> = Vec::with_capacity(copies.len() * kn.len());
    let sd = Q::from_integer(BigInt::from(s.denom()));
    for (c, r, w) in copies.iter().map(|t| (&t.0, &t.1, &t.2)) {
        let base = numer_over(c, g)?;
        let step = numer_over(&(r / &sd), g)?;
        let wn = numer_over(w, wden)?;
        let mut prev = 0i128;
        for (i, &x) in kn.iter().enumerate() {
            let z = add128(mul128(step, x)?, base)?;
            let next = if i < idx.len() {
                pnum[idx[i] as usize]
            } else {
                0
            };
            events.push((z, mul128(wn, next - prev)?));
            prev = next;
        }
    }
    events.sort_unstable_by_key(|e| e.0);
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut v: i128 = 0;
    let mut i = 0;
    while i < events.len() {
        let z = events[i].0;
        while i < events.len() && events[i].0 == z {
            v = add128(v, events[i].1)?;
            i += 1;
        }
        knots.push(z);
        values.push(v);
    }
    // the value after the last knot is 0
    values.pop();
    Ok(Some(Sweep {
        denom: g,
        scale: mul128(pden, wden)?,
        knots,
        values,
    }))
}

/// `Σ_j w_j s((z − c_j)/r_j)` for copies `(c_j, r_j, w_j)`, exact.
pub fn superpose(s: &StepFunction, copies: &[(Q, Q, Q)]) -> Result<StepFunction> {
    let Some(sw) = sweep(s, copies)? else {
        return Ok(StepFunction::zero());
    };
    let scale = Q::from_integer(BigInt::from(sw.scale));
    let mut ids: HashMap<i128, u32> = HashMap::new();
    ids.insert(0, 0);
    let mut pal = vec![Q::zero()];
    let cells: Vec<u32> = sw
        .values
        .iter()
        .map(|&v| {
            *ids.entry(v).or_insert_with(|| {
                pal.push(Q::from_integer(BigInt::from(v)) / &scale);
                pal.len() as u32 - 1
            })
        })
        .collect();
    Ok(StepFunction::from_palette(sw.denom, sw.knots, pal, cells))
}

/// `∫ |Σ_j w_j s((z − c_j)/r_j)|^p dz`, exact, without building the sum.
pub fn superpose_abs_power(s: &StepFunction, copies: &[(Q, Q, Q)], p: u32) -> Result<Q> {
    let Some(sw) = sweep(s, copies)? else {
        return Ok(Q::zero());
    };
    let mut widths: HashMap<i128, i128> = HashMap::new();
    for (i, &v) in sw.values.iter().enumerate() {
        if v != 0 {
            *widths.entry(v.abs()).or_insert(0) += sw.knots[i + 1] - sw.knots[i];
        }
    }
    let mut total = BigInt::zero();
    for (v, w) in widths {
        total += num_traits::pow(BigInt::from(v), p as usize) * BigInt::from(w);
    }
    let den = num_traits::pow(BigInt::from(sw.scale), p as usize) * BigInt::from(sw.denom);
    Ok(Q::new(total, den))
}

/// `Φ_k* g(z) = ∫ g(x) σ_k((z − c(x))/r(x)) dx` for `g` constant on assignment cells,
/// given by its cell integrals `∫_{cell j} g`.
pub fn phi_star_weighted(
    set: &CantorSet,
    assign: &AdjointAssignment,
    cell_integrals: &[(u64, Q)],
) -> Result<StepFunction> {
    let s = sigma(set, assign.k)?;
    let copies: Vec<(Q, Q, Q)> = cell_integrals
        .iter()
        .map(|(j, w)| {
            let j = *j as usize;
            if j >= assign.c.len() {
                return Err(Error::Grid(format!("cell {j} outside the assignment")));
            }
            Ok((assign.c[j].clone(), assign.r[j].clone(), w.clone()))
        })
        .collect::<Result<_>>()?;
    superpose(&s, &copies)
}

/// `Φ_k* 1_Ω`.
pub fn phi_star(
    omega: &GridSet,
    set: &CantorSet,
    k: usize,
    assign: &AdjointAssignment,
) -> Result<StepFunction> {
    assign.check(omega.cells)?;
    if assign.k != k {
        return Err(Error::Domain(format!(
            "assignment is for level {}, not {k}",
            assign.k
        )));
    }
    let w = Q::new(BigInt::one(), BigInt::from(omega.cells));
    let ints: Vec<(u64, Q)> = omega.members.iter().map(|&j| (j, w.clone())).collect();
    phi_star_weighted(set, assign, &ints)
}

/// `∫ |Φ_k* 1_Ω|^p`.
pub fn phi_star_abs_power(
    omega: &GridSet,
    set: &CantorSet,
    k: usize,
    assign: &AdjointAssignment,
    p: u32,
) -> Result<Q> {
    assign.check(omega.cells)?;
    let s = sigma(set, k)?;
    let w = Q::new(BigInt::one(), BigInt::from(omega.cells));
    let copies: Vec<(Q, Q, Q)> = omega
        .members
        .iter()
        .map(|&j| {
            (
                assign.c[j as usize].clone(),
                assign.r[j as usize].clone(),
                w.clone(),
            )
        })
        .collect();
    superpose_abs_power(&s, &copies, p)
}

/// `Φ_k* g` for a step `g` supported in `[0, 1]`.
pub fn phi_star_step(
    g: &StepFunction,
    set: &CantorSet,
    assign: &AdjointAssignment,
) -> Result<StepFunction> {
    let m = qu(assign.cells);
    let ints: Vec<(u64, Q)> = (0..assign.cells)
        .map(|j| {
            let a = qu(j) / &m;
            let b = qu(j + 1) / &m;
            (j, g.integral_over(&a, &b))
        })
        .filter(|(_, w)| !w.is_zero())
        .collect();
    phi_star_weighted(set, assign, &ints)
}

/// `⟨Φ_k f, g⟩ = ∫ g(x) ∫ f(z) σ_k((z − c(x))/r(x)) dz dx`, cell by cell.
pub fn phi_pairing(
    f: &StepFunction,
    g: &StepFunction,
    set: &CantorSet,
    assign: &AdjointAssignment,
) -> Result<Q> {
    let s = sigma(set, assign.k)?;
    let m = qu(assign.cells);
    let mut total = Q::zero();
    for j in 0..assign.cells {
        let w = g.integral_over(&(qu(j) / &m), &(qu(j + 1) / &m));
        if w.is_zero() {
            continue;
        }
        let pairs = [
            (qi(0), qi(1)),
            (assign.c[j as usize].clone(), assign.r[j as usize].clone()),
        ];
        total += w * crate::correlation::lambda_pairs(&pairs, &[f, &s])?;
    }
    Ok(total)
}

/// Translation rule of a sampled assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranslationMode {
    /// One translation for every cell.
    Constant(#[serde(with = "crate::exact::serde_q")] Q),
    /// `c(x)` is the translation-grid center nearest below `x − 4`.
    Tracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DilationMode {
    Constant(#[serde(with = "crate::exact::serde_q")] Q),
    CellwiseRandom,
}

/// Random `Ω` as unions of `M_{k+1}^{ell}` equal cells of `[0, 1]`, each kept with
/// probability drawn from `densities`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaSampler {
    pub ell: u32,
    pub densities: Vec<Q>,
    pub translation: TranslationMode,
    pub dilation: DilationMode,
}

impl Default for OmegaSampler {
    fn default() -> Self {
        OmegaSampler {
            ell: 1,
            densities: vec![q(1, 8), q(1, 4), q(1, 2)],
            translation: TranslationMode::Tracking,
            dilation: DilationMode::CellwiseRandom,
        }
    }
}

impl OmegaSampler {
    pub fn cells(&self, set: &CantorSet, k: usize) -> Result<u64> {
        let m = set.params.m(k + 1)?;
        let mut c: u64 = 1;
        for _ in 0..self.ell {
            c = c
                .checked_mul(m)
                .filter(|&v| v <= 1 << 24)
                .ok_or_else(|| Error::Capacity("too many Ω cells".into()))?;
        }
        Ok(c)
    }

    pub fn draw(
        &self,
        set: &CantorSet,
        k: usize,
        stream: &RngStream,
    ) -> Result<(GridSet, AdjointAssignment)> {
        if self.ell > set.params.l {
            return Err(Error::Grid(
                "Ω cells must be unions of discretization cells".into(),
            ));
        }
        let cells = self.cells(set, k)?;
        let grid = Grid::new(&set.params, k, set.params.l)?;
        let mut rng = stream.rng();
        let d = &self.densities[rng.gen_range(0..self.densities.len())];
        let pd = to_f64(d);
        let mut members: Vec<u64> = (0..cells).filter(|_| rng.gen::<f64>() < pd).collect();
        if members.is_empty() {
            members.push(rng.gen_range(0..cells));
        }
        let per = grid.cells_per_unit / cells as u128;
        let c: Vec<Q> = (0..cells)
            .map(|j| match &self.translation {
                TranslationMode::Constant(c) => c.clone(),
                TranslationMode::Tracking => grid.c(j as u128 * per + 1),
            })
            .collect();
        let r: Vec<Q> = (0..cells)
            .map(|_| match &self.dilation {
                DilationMode::Constant(r) => r.clone(),
                DilationMode::CellwiseRandom => grid.r(rng.gen_range(1..=grid.r_count())),
            })
            .collect();
        Ok((
            GridSet::new(cells, members)?,
            AdjointAssignment { k, cells, c, r },
        ))
    }
}

/// `‖f‖_p`; the exact `p`-th power is kept for integer `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpNorm {
    pub pth_power: Option<Q>,
    pub value: f64,
}

pub fn lp_norm(f: &StepFunction, p: &Q) -> Result<LpNorm> {
    if p < &Q::one() {
        return Err(Error::Domain("p must be at least 1".into()));
    }
    if p.is_integer() {
        let e = p
            .to_integer()
            .to_u32()
            .ok_or_else(|| Error::Domain("p too large".into()))?;
        let s = f.abs_power_integral(e);
        let value = to_f64(&s).powf(1.0 / e as f64);
        return Ok(LpNorm {
            pth_power: Some(s),
            value,
        });
    }
    let pf = to_f64(p);
    let s: f64 = f
        .nonzero_cells()
        .iter()
        .map(|(a, b, v)| to_f64(&v.abs()).powf(pf) * to_f64(&(b - a)))
        .sum();
    Ok(LpNorm {
        pth_power: None,
        value: s.powf(1.0 / pf),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioSample {
    pub index: u64,
    pub omega_measure: Q,
    /// `∫ |Φ_k* 1_Ω|^n`, exact.
    pub norm_power: Q,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioReport {
    pub k: usize,
    pub n: usize,
    pub max_ratio: f64,
    pub samples: Vec<RatioSample>,
    /// Right side of the restricted strong-type bound with the absolute constant set to 1.
    pub rhs_c1: f64,
    /// Same with `C₀` replaced by a supplied measured sup, when given.
    pub rhs_measured: Option<f64>,
}

/// `‖Φ_k* 1_Ω‖_n / |Ω|^{(n−1)/n}` over `budget` sampled `(Ω, assignment)` pairs.
pub fn restricted_type_ratio(
    set: &CantorSet,
    k: usize,
    n: usize,
    sampler: &OmegaSampler,
    budget: usize,
    stream: &RngStream,
    measured_sup: Option<&Q>,
) -> Result<RatioReport> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Domain("n must be even".into()));
    }
    if budget == 0 {
        return Err(Error::EmptySample("budget is 0".into()));
    }
    let samples: Vec<RatioSample> = (0..budget as u64)
        .into_par_iter()
        .map(|i| {
            let (omega, assign) = sampler.draw(set, k, &stream.child(i))?;
            let np = phi_star_abs_power(&omega, set, k, &assign, n as u32)?;
            let om = omega.measure();
            let nf = n as f64;
            let ratio = ((to_f64(&np).ln() - (nf - 1.0) * to_f64(&om).ln()) / nf).exp();
            Ok(RatioSample {
                index: i,
                omega_measure: om,
                norm_power: np,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let term = transverse_term(set, n, k)?;
    let c0 = c0_constant(&set.params, n, k)?;
    let nf = n as f64;
    Ok(RatioReport {
        k,
        n,
        max_ratio,
        samples,
        rhs_c1: term.max(c0).powf(1.0 / nf),
        rhs_measured: measured_sup.map(|m| term.max(to_f64(m)).powf(1.0 / nf)),
    })
}

/// `2^n n^4 P_k^{ε₀−1} / (P_{k+1} δ_{k+1})^{n−1}`.
pub fn transverse_term(set: &CantorSet, n: usize, k: usize) -> Result<f64> {
    let pk = set.count(k)? as f64;
    let mass = to_f64(&set.level(k + 1)?.measure());
    let e0 = to_f64(&set.params.epsilon0);
    let nf = n as f64;
    Ok(2f64.powf(nf) * nf.powi(4) * pk.powf(e0 - 1.0) / mass.powf(nf - 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffRow {
    pub x: Q,
    pub r: Q,
    /// `max_k |A_r[k] f(x) − f(x)|`.
    pub error: Q,
    pub k: usize,
}

/// Error table of the averages against the point value.
pub fn differentiation_experiment<F: Integrand + Sync>(
    f: &F,
    set: &CantorSet,
    points: &[Q],
    rs: &[Q],
) -> Result<Vec<DiffRow>> {
    if rs.windows(2).any(|w| w[0] <= w[1]) || rs.iter().any(|r| !r.is_positive()) {
        return Err(Error::Domain(
            "r sequence must be positive and decreasing".into(),
        ));
    }
    let rows: Vec<Vec<DiffRow>> = points
        .par_iter()
        .map(|x| {
            let fx = f.value_at(x);
            rs.iter()
                .map(|r| {
                    let mut best = DiffRow {
                        x: x.clone(),
                        r: r.clone(),
                        error: Q::zero(),
                        k: 1,
                    };
                    for k in 1..=set.depth() {
                        let e = (average(f, set, k, r, x)? - &fx).abs();
                        if e > best.error {
                            best.error = e;
                            best.k = k;
                        }
                    }
                    Ok(best)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoParams {
    /// Singular point; defaults to the center of a level-`K` cell in the densest parent.
    #[serde(default, with = "opt_q", skip_serializing_if = "Option::is_none")]
    pub x0: Option<Q>,
    /// Truncation radius; defaults to `δ_K / 4`.
    #[serde(default, with = "opt_q", skip_serializing_if = "Option::is_none")]
    pub rho0: Option<Q>,
    #[serde(default = "one_q", with = "crate::exact::serde_q")]
    pub r: Q,
    /// Minimum of the empirical density ratio below which the demo is inconclusive.
    #[serde(default = "one_f64")]
    pub floor: f64,
}

fn one_q() -> Q {
    Q::one()
}

fn one_f64() -> f64 {
    1.0
}

mod opt_q {
    use super::Q;
    use crate::exact::{fmt_q, parse_q};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&fmt_q(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Q>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_q(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            x0: None,
            rho0: None,
            r: Q::one(),
            floor: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub k: usize,
    /// `∫ h(x + r y) dμ_k(y)`.
    pub integral: f64,
    /// `μ_k(B(x₀, ρ))` at each tabulated radius.
    pub ball_mass: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    #[serde(with = "crate::exact::serde_q")]
    pub x0: Q,
    #[serde(with = "crate::exact::serde_q")]
    pub rho0: Q,
    #[serde(with = "crate::exact::serde_q")]
    pub x: Q,
    #[serde(with = "crate::exact::serde_q")]
    pub r: Q,
    pub radii: Vec<f64>,
    /// `μ_K(B(x₀, ρ))/(2ρ)` at each radius.
    pub eta_hat: Vec<f64>,
    pub rows: Vec<DemoRow>,
    /// Last integral over the first.
    pub growth: f64,
}

/// `∫_a^b |y − x₀|^{−1/2} dy`.
fn singular_integral(a: f64, b: f64, x0: f64) -> f64 {
    let f = |t: f64| 2.0 * t.signum() * t.abs().sqrt();
    f(b - x0) - f(a - x0)
}

/// Center of a level-`K` cell inside the parent holding the most level-`K` cells.
fn densest_point(set: &CantorSet) -> Result<Q> {
    let depth = set.depth();
    let top = set.level(depth)?;
    if top.count() == 0 {
        return Err(Error::DegenerateMeasure(depth));
    }
    let n = top.n_k;
    let mut best = (0usize, top.positions()[0]);
    let pos = top.positions();
    let mut i = 0;
    while i < pos.len() {
        let parent = pos[i] / n;
        let start = i;
        while i < pos.len() && pos[i] / n == parent {
            i += 1;
        }
        if i - start > best.0 {
            best = (i - start, pos[start]);
        }
    }
    Ok(top.alpha_of(best.1) + top.delta() / qi(2))
}

/// Tabulates `∫ h(x + r y) dμ_k(y)` with `h(u) = |u|^{−1/2}` on `|u| < ρ₀` and
/// `x = −r x₀`, so that the singularity of `h` sits on `x₀`.
pub fn l1_divergence_demo(set: &CantorSet, demo: &DemoParams) -> Result<DemoReport> {
    let depth = set.depth();
    let top = set.level(depth)?;
    let x0 = match &demo.x0 {
        Some(x) => x.clone(),
        None => densest_point(set)?,
    };
    let rho0 = demo.rho0.clone().unwrap_or_else(|| top.delta() / qi(4));
    if !rho0.is_positive() || !demo.r.is_positive() {
        return Err(Error::Domain("ρ₀ and r must be positive".into()));
    }
    let r = demo.r.clone();
    let x = -(&r * &x0);
    // radii 2^{-j} down to below δ_K
    let mut radii_q = Vec::new();
    let mut rad = q(1, 2);
    let stop = top.delta() / qi(4);
    while rad >= stop {
        radii_q.push(rad.clone());
        rad /= qi(2);
    }
    let ball = |k: usize, rq: &Q| -> Result<Q> {
        let l = set.level(k)?;
        Ok(l.measure_between(&(&x0 - rq), &(&x0 + rq)) / l.measure())
    };
    let eta_hat: Vec<f64> = radii_q
        .iter()
        .map(|rq| Ok(to_f64(&ball(depth, rq)?) / (2.0 * to_f64(rq))))
        .collect::<Result<_>>()?;
    if eta_hat.iter().cloned().fold(0.0, f64::max) < demo.floor {
        return Err(Error::DemoInconclusive(format!(
            "density ratio stays below {} at every radius",
            demo.floor
        )));
    }
    // in y: the support of h(x + r ·) is |y − x₀| < ρ₀/r
    let w = &rho0 / &r;
    let (lo, hi) = (&x0 - &w, &x0 + &w);
    let x0f = to_f64(&x0);
    let mut rows = Vec::with_capacity(depth);
    for k in 1..=depth {
        let l = set.level(k)?;
        if l.count() == 0 {
            return Err(Error::DegenerateMeasure(k));
        }
        let m = l.m_k;
        let first = ((&lo - qi(1)) * qu(m))
            .floor()
            .to_integer()
            .to_i64()
            .unwrap_or(0)
            .max(0) as u64;
        let pos = l.positions();
        let mut s = 0.0;
        let start = pos.partition_point(|&g| g < first);
        for &g in &pos[start..] {
            let a = l.alpha_of(g);
            if a >= hi {
                break;
            }
            let b = &a + l.delta();
            let ca = if a > lo { a } else { lo.clone() };
            let cb = if b < hi { b } else { hi.clone() };
            if ca < cb {
                s += singular_integral(to_f64(&ca), to_f64(&cb), x0f);
            }
        }
        // h(x + r y) = r^{-1/2} |y − x₀|^{-1/2}
        let integral = s / to_f64(&r).sqrt() / to_f64(&l.measure());
        let ball_mass = radii_q
            .iter()
            .map(|rq| Ok(to_f64(&ball(k, rq)?)))
            .collect::<Result<_>>()?;
        rows.push(DemoRow {
            k,
            integral,
            ball_mass,
        });
    }
    let growth = rows.last().unwrap().integral / rows[0].integral;
    Ok(DemoReport {
        x0,
        rho0,
        x,
        r,
        radii: radii_q.iter().map(to_f64).collect(),
        eta_hat,
        rows,
        growth,
    })
}
