//! n-fold intersections of affine copies `c_ℓ + r_ℓ·I_k(i)` of the level intervals.
//!
//! All endpoints of a family live on one integer lattice: with `D` a common
//! denominator, the copy of cell `g` in slot `ℓ` is `[C_ℓ + R_ℓ g, C_ℓ + R_ℓ (g+1)] / D`.
//! Enumeration walks slot by slot, keeping the running common intersection and
//! solving for the contiguous range of cells that still meet it, so the cost is
//! proportional to the output.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{CantorSet, ConstructionParams, MultiIndex};
use crate::error::{Error, Result};
use crate::exact::{big_to_i128, checked_lcm, fmt_q, numer_over, q, qi, Q};

/// Default cap on the number of enumerated tuples.
pub const DEFAULT_OUTPUT_CAP: usize = 10_000_000;

/// Closed ranges for translations and dilations.
pub fn c_range() -> (Q, Q) {
    (qi(-4), qi(0))
}

pub fn r_range() -> (Q, Q) {
    (qi(1), qi(2))
}

/// `n` pairs `(c_ℓ, r_ℓ)` with `c_ℓ ∈ [−4, 0]`, `r_ℓ ∈ [1, 2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTuple {
    #[serde(with = "pairs_serde")]
    pairs: Vec<(Q, Q)>,
}

mod pairs_serde {
    use super::Q;
    use crate::exact::{fmt_q, parse_q};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &[(Q, Q)], s: S) -> Result<S::Ok, S::Error> {
        p.iter()
            .map(|(c, r)| [fmt_q(c), fmt_q(r)])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(Q, Q)>, D::Error> {
        let v = Vec::<[String; 2]>::deserialize(d)?;
        v.iter()
            .map(|[c, r]| {
                Ok((
                    parse_q(c).map_err(serde::de::Error::custom)?,
                    parse_q(r).map_err(serde::de::Error::custom)?,
                ))
            })
            .collect()
    }
}

impl AffineTuple {
    pub fn new(pairs: Vec<(Q, Q)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Domain("empty tuple".into()));
        }
        let (c0, c1) = c_range();
        let (r0, r1) = r_range();
        for (c, r) in &pairs {
            if c < &c0 || c > &c1 || r < &r0 || r > &r1 {
                return Err(Error::Domain(format!(
                    "pair ({}, {}) outside [−4,0]×[1,2]",
                    fmt_q(c),
                    fmt_q(r)
                )));
            }
        }
        Ok(AffineTuple { pairs })
    }

    /// `n` copies of `(c, r)`.
    pub fn repeated(c: Q, r: Q, n: usize) -> Result<Self> {
        Self::new(vec![(c, r); n])
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(Q, Q)] {
        &self.pairs
    }

    /// Smallest pairwise `|c_ℓ − c_ℓ'|`.
    pub fn min_translation_gap(&self) -> Option<Q> {
        let mut best: Option<Q> = None;
        for a in 0..self.pairs.len() {
            for b in a + 1..self.pairs.len() {
                let d = (&self.pairs[a].0 - &self.pairs[b].0).abs();
                if best.as_ref().is_none_or(|x| &d < x) {
                    best = Some(d);
                }
            }
        }
        best
    }

    /// Reorders slots: slot `j` of the result is slot `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        AffineTuple {
            pairs: perm.iter().map(|&i| self.pairs[i].clone()).collect(),
        }
    }
}

/// Discretization grids at level `k`: translation centers of cells of length
/// `h = δ_{k+1}^L` in `[−4, 0]` and dilation centers of such cells in `[1, 2]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub k: usize,
    pub l: u32,
    /// `1/h = M_{k+1}^L`.
    pub cells_per_unit: u128,
}

impl Grid {
    pub fn new(params: &ConstructionParams, k: usize, l: u32) -> Result<Self> {
        let m = params.m(k + 1)? as u128;
        let mut h: u128 = 1;
        for _ in 0..l {
            h = h
                .checked_mul(m)
                .filter(|&v| v <= (1u128 << 100))
                .ok_or_else(|| Error::Capacity(format!("grid M_{}^{l} too fine", k + 1)))?;
        }
        Ok(Grid {
            k,
            l,
            cells_per_unit: h,
        })
    }

    /// Grid with an explicit number of cells per unit length.
    pub fn with_cells(k: usize, cells_per_unit: u128) -> Self {
        Grid {
            k,
            l: 0,
            cells_per_unit,
        }
    }

    pub fn c_count(&self) -> u128 {
        4 * self.cells_per_unit
    }

    pub fn r_count(&self) -> u128 {
        self.cells_per_unit
    }

    /// Number of `(c, r)` pairs, saturating.
    pub fn pair_count(&self) -> u128 {
        self.c_count().saturating_mul(self.r_count())
    }

    fn center(offset: i64, i: u128, h: u128) -> Q {
        let hb = BigInt::from(h);
        Q::from_integer(BigInt::from(offset))
            + Q::new(BigInt::from(2 * i - 1), BigInt::from(2) * hb)
    }

    /// Center of the `i`-th translation cell, `1 ≤ i ≤ 4/h`.
    pub fn c(&self, i: u128) -> Q {
        Self::center(-4, i, self.cells_per_unit)
    }

    /// Center of the `j`-th dilation cell, `1 ≤ j ≤ 1/h`.
    pub fn r(&self, j: u128) -> Q {
        Self::center(1, j, self.cells_per_unit)
    }

    /// Index of the translation cell holding `x ∈ [−4, 0)`.
    pub fn c_index_of(&self, x: &Q) -> Option<u128> {
        let t = (x + qi(4)) * Q::from_integer(BigInt::from(self.cells_per_unit));
        if t.is_negative() || t >= Q::from_integer(BigInt::from(self.c_count())) {
            return None;
        }
        t.floor().to_integer().to_u128().map(|v| v + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TupleClass {
    Internal,
    Transverse,
}

/// A member of `𝔽[n, k; A]`, stored by cell positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntersectionTuple {
    pub positions: Vec<u64>,
    pub class: TupleClass,
    /// First slot pair `(ℓ, ℓ')`, `ℓ < ℓ'`, sharing a parent with last entries at most 4 apart.
    pub witness: Option<(usize, usize)>,
}

impl PartialOrd for TupleClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TupleClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

impl IntersectionTuple {
    pub fn indices(&self, k: usize, params: &ConstructionParams) -> Result<Vec<MultiIndex>> {
        self.positions
            .iter()
            .map(|&g| MultiIndex::from_position(g, k, params))
            .collect()
    }
}

/// Internal-tangency witness for positions at a level with `N_k = n_k`.
pub fn tangency_witness(positions: &[u64], n_k: u64) -> Option<(usize, usize)> {
    for a in 0..positions.len() {
        for b in a + 1..positions.len() {
            let (ga, gb) = (positions[a], positions[b]);
            if ga / n_k == gb / n_k && (ga % n_k).abs_diff(gb % n_k) <= 4 {
                return Some((a, b));
            }
        }
    }
    None
}

fn classify_positions(positions: Vec<u64>, n_k: u64) -> IntersectionTuple {
    let witness = tangency_witness(&positions, n_k);
    IntersectionTuple {
        positions,
        class: if witness.is_some() {
            TupleClass::Internal
        } else {
            TupleClass::Transverse
        },
        witness,
    }
}

/// Cells available to each slot.
#[derive(Clone, Copy, Debug)]
pub enum Domain<'a> {
    /// All `M_k` cells.
    Full(u64),
    /// Selected cells, sorted.
    Subset(&'a [u64]),
}

impl Domain<'_> {
    fn bounds(&self) -> Option<(u64, u64)> {
        match self {
            Domain::Full(0) => None,
            Domain::Full(m) => Some((0, m - 1)),
            Domain::Subset(s) => Some((*s.first()?, *s.last()?)),
        }
    }

    /// Domain cells in `[lo, hi]`.
    fn slice(&self, lo: u64, hi: u64) -> DomainIter<'_> {
        match self {
            Domain::Full(_) => DomainIter::Range(lo..=hi),
            Domain::Subset(s) => {
                let a = s.partition_point(|&g| g < lo);
                let b = s.partition_point(|&g| g <= hi);
                DomainIter::Slice(s[a..b.max(a)].iter())
            }
        }
    }
}

enum DomainIter<'a> {
    Range(std::ops::RangeInclusive<u64>),
    Slice(std::slice::Iter<'a, u64>),
}

impl Iterator for DomainIter<'_> {
    type Item = u64;
    fn next(&mut self) -> Option<u64> {
        match self {
            DomainIter::Range(r) => r.next(),
            DomainIter::Slice(s) => s.next().copied(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct SlotLattice {
    base: i128,
    step: i128,
}

impl SlotLattice {
    fn left(&self, g: u64) -> i128 {
        self.base + self.step * g as i128
    }

    fn right(&self, g: u64) -> i128 {
        self.base + self.step * (g as i128 + 1)
    }

    /// Cells `g` with `left(g) ≤ hi` and `right(g) ≥ lo`, clipped to `[0, max]`.
    fn range(&self, lo: i128, hi: i128, max: u64) -> Option<(u64, u64)> {
        let gmax = (hi - self.base).div_euclid(self.step);
        let gmin = -((self.base - lo).div_euclid(self.step)) - 1;
        let a = gmin.max(0);
        let b = gmax.min(max as i128);
        (a <= b).then_some((a as u64, b as u64))
    }
}

fn lattice(pairs: &[(Q, Q)], m_k: u64) -> Result<Vec<SlotLattice>> {
    let m = m_k as i128;
    let mut d: i128 = 1;
    for (c, r) in pairs {
        d = checked_lcm(d, big_to_i128(c.denom(), "translation denominator")?)?;
        let rd = big_to_i128(r.denom(), "dilation denominator")?;
        d = checked_lcm(d, crate::exact::mul128(rd, m)?)?;
    }
    pairs
        .iter()
        .map(|(c, r)| {
            let base = numer_over(&(c + r), d)?;
            let step = numer_over(&(r / Q::from_integer(BigInt::from(m_k))), d)?;
            if step <= 0 {
                return Err(Error::Domain("dilations must be positive".into()));
            }
            // right end of the last cell must stay representable
            crate::exact::add128(base, crate::exact::mul128(step, m + 1)?)?;
            Ok(SlotLattice { base, step })
        })
        .collect()
}

struct Walker<'a> {
    slots: &'a [SlotLattice],
    domain: Domain<'a>,
    max: u64,
}

impl Walker<'_> {
    fn walk<F: FnMut(&[u64])>(
        &self,
        depth: usize,
        lo: i128,
        hi: i128,
        cur: &mut Vec<u64>,
        f: &mut F,
    ) {
        if depth == self.slots.len() {
            f(cur);
            return;
        }
        let s = &self.slots[depth];
        let Some((a, b)) = s.range(lo, hi, self.max) else {
            return;
        };
        for g in self.domain.slice(a, b) {
            let nlo = lo.max(s.left(g));
            let nhi = hi.min(s.right(g));
            if nlo > nhi {
                continue;
            }
            cur.push(g);
            self.walk(depth + 1, nlo, nhi, cur, f);
            cur.pop();
        }
    }
}

/// Calls `f` on every member of `𝔽[n, k; A]` over `domain`, in lexicographic order of
/// the first slot's cell and depth-first below it. Parallel over first-slot blocks.
fn for_each_block<T: Send, F>(
    pairs: &[(Q, Q)],
    m_k: u64,
    domain: Domain<'_>,
    per_block: F,
) -> Result<Vec<T>>
where
    F: Fn(&Walker<'_>, u64, i128, i128) -> T + Sync,
{
    let slots = lattice(pairs, m_k)?;
    let Some((dlo, dhi)) = domain.bounds() else {
        return Ok(Vec::new());
    };
    // hull of every slot's family
    let lo = slots.iter().map(|s| s.left(dlo)).max().unwrap();
    let hi = slots.iter().map(|s| s.right(dhi)).min().unwrap();
    if lo > hi {
        return Ok(Vec::new());
    }
    let walker = Walker {
        slots: &slots,
        domain,
        max: m_k - 1,
    };
    let Some((a, b)) = slots[0].range(lo, hi, m_k - 1) else {
        return Ok(Vec::new());
    };
    let firsts: Vec<u64> = domain.slice(a, b).collect();
    Ok(firsts
        .par_chunks(256)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&g| per_block(&walker, g, lo, hi))
                .collect::<Vec<T>>()
        })
        .flatten_iter()
        .collect())
}

fn walk_from<F: FnMut(&[u64])>(w: &Walker<'_>, g: u64, lo: i128, hi: i128, f: &mut F) {
    let s = &w.slots[0];
    let nlo = lo.max(s.left(g));
    let nhi = hi.min(s.right(g));
    if nlo > nhi {
        return;
    }
    let mut cur = vec![g];
    w.walk(1, nlo, nhi, &mut cur, f);
}

fn check_n(n: usize, a: &AffineTuple) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "n = {n} must be even and at least 2"
        )));
    }
    if a.n() != n {
        return Err(Error::Domain(format!(
            "tuple has {} slots, expected {n}",
            a.n()
        )));
    }
    Ok(())
}

/// `𝔽[n, k; A]` over the full grid or, with `restrict_to`, over selected cells.
pub fn enumerate_f(
    n: usize,
    k: usize,
    a: &AffineTuple,
    params: &ConstructionParams,
    restrict_to: Option<&CantorSet>,
    cap: usize,
) -> Result<Vec<IntersectionTuple>> {
    check_n(n, a)?;
    if k == 0 {
        return Err(Error::LevelOutOfRange("k must be at least 1".into()));
    }
    let m_k = params.m(k)?;
    let n_k = params.n_checked(k)?;
    let domain = match restrict_to {
        Some(set) => Domain::Subset(set.level(k)?.positions()),
        None => Domain::Full(m_k),
    };
    let seen = AtomicUsize::new(0);
    let blocks = for_each_block(a.pairs(), m_k, domain, |w, g, lo, hi| {
        let mut out = Vec::new();
        walk_from(w, g, lo, hi, &mut |t: &[u64]| {
            if seen.fetch_add(1, Ordering::Relaxed) < cap {
                out.push(classify_positions(t.to_vec(), n_k));
            }
        });
        out
    })?;
    if seen.load(Ordering::Relaxed) > cap {
        return Err(Error::Capacity(format!("𝔽 has more than {cap} tuples")));
    }
    Ok(blocks.into_iter().flatten().collect())
}

/// `(#𝔽_int, #𝔽_tr)` without materializing tuples.
pub fn count_f(
    n: usize,
    k: usize,
    a: &AffineTuple,
    params: &ConstructionParams,
    restrict_to: Option<&CantorSet>,
) -> Result<(u64, u64)> {
    check_n(n, a)?;
    let m_k = params.m(k)?;
    let n_k = params.n_checked(k)?;
    let domain = match restrict_to {
        Some(set) => Domain::Subset(set.level(k)?.positions()),
        None => Domain::Full(m_k),
    };
    let blocks = for_each_block(a.pairs(), m_k, domain, |w, g, lo, hi| {
        let (mut i, mut t) = (0u64, 0u64);
        walk_from(w, g, lo, hi, &mut |tu: &[u64]| {
            if tangency_witness(tu, n_k).is_some() {
                i += 1;
            } else {
                t += 1;
            }
        });
        (i, t)
    })?;
    Ok(blocks
        .into_iter()
        .fold((0, 0), |(a, b), (c, d)| (a + c, b + d)))
}

/// Splits into `(𝔽_int, 𝔽_tr)`.
pub fn classify(tuples: &[IntersectionTuple]) -> (Vec<IntersectionTuple>, Vec<IntersectionTuple>) {
    tuples
        .iter()
        .cloned()
        .partition(|t| t.class == TupleClass::Internal)
}

/// `(L_int, L_tr)`: members of `𝔽` with every coordinate selected at level `k`.
pub fn tangency_counts(set: &CantorSet, a: &AffineTuple, n: usize, k: usize) -> Result<(u64, u64)> {
    count_f(n, k, a, &set.params, Some(set))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Multiplicity {
    /// Largest number of distinct `i_ℓ` completing one fixed complement.
    pub max: usize,
    /// Largest `max − min` over completions, in cells of `δ_k`.
    pub max_spread_cells: u64,
}

/// Completions of slot `ell` per fixed complement.
pub fn projection_multiplicity(tuples: &[IntersectionTuple], ell: usize) -> Multiplicity {
    use std::collections::HashMap;
    let mut groups: HashMap<Vec<u64>, Vec<u64>> = HashMap::new();
    for t in tuples {
        let mut rest = t.positions.clone();
        let g = rest.remove(ell);
        groups.entry(rest).or_default().push(g);
    }
    let mut max = 0;
    let mut spread = 0;
    for v in groups.values_mut() {
        v.sort_unstable();
        v.dedup();
        max = max.max(v.len());
        spread = spread.max(v.last().unwrap() - v.first().unwrap());
    }
    Multiplicity {
        max,
        max_spread_cells: spread,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proximity {
    pub bound: Q,
    pub actual: Q,
    pub satisfied: bool,
}

/// `min |c_ℓ − c_ℓ'| ≤ min(4, 80n(n−1)/L_int)`.
pub fn proximity_check(a: &AffineTuple, n: usize, l_int: u64) -> Result<Proximity> {
    check_n(n, a)?;
    let four = qi(4);
    let bound = if l_int == 0 {
        four
    } else {
        let v = Q::new(
            BigInt::from(80 * n as u64 * (n as u64 - 1)),
            BigInt::from(l_int),
        );
        if v < four {
            v
        } else {
            four
        }
    };
    let actual = a.min_translation_gap().unwrap_or_else(Q::zero);
    let satisfied = actual <= bound;
    Ok(Proximity {
        bound,
        actual,
        satisfied,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymDiff {
    pub measure: Q,
    pub bound: Q,
    pub satisfied: bool,
}

/// `|[x, x+rt] △ [y, y+st]|` against `3η`.
pub fn symdiff_bound_check(x: &Q, y: &Q, r: &Q, s: &Q, t: &Q, eta: &Q) -> Result<SymDiff> {
    let half = q(1, 2);
    let two = qi(2);
    let ok = t.is_positive()
        && t < &Q::one()
        && r > &half
        && r < &two
        && s > &half
        && s < &two
        && eta.is_positive()
        && eta < &(t / &two)
        && (x - y).abs() < *eta
        && (r - s).abs() < *eta;
    if !ok {
        return Err(Error::Domain(
            "preconditions of the symmetric-difference bound fail".into(),
        ));
    }
    let (a0, a1) = (x.clone(), x + r * t);
    let (b0, b1) = (y.clone(), y + s * t);
    let lo = if a0 > b0 { a0.clone() } else { b0.clone() };
    let hi = if a1 < b1 { a1.clone() } else { b1.clone() };
    let overlap = if hi > lo { hi - lo } else { Q::zero() };
    let measure = (&a1 - &a0) + (&b1 - &b0) - qi(2) * overlap;
    let bound = qi(3) * eta;
    let satisfied = measure <= bound;
    Ok(SymDiff {
        measure,
        bound,
        satisfied,
    })
}

/// CSV rows: one column per slot (dotted multi-index), class, witness pair.
pub fn tuple_rows(
    tuples: &[IntersectionTuple],
    k: usize,
    params: &ConstructionParams,
) -> Result<Vec<Vec<String>>> {
    tuples
        .iter()
        .map(|t| {
            let mut row: Vec<String> = t
                .indices(k, params)?
                .into_iter()
                .map(|i| {
                    i.0.iter()
                        .map(|e| e.to_string())
                        .collect::<Vec<_>>()
                        .join(".")
                })
                .collect();
            row.push(
                match t.class {
                    TupleClass::Internal => "internal",
                    TupleClass::Transverse => "transverse",
                }
                .into(),
            );
            match t.witness {
                Some((a, b)) => {
                    row.push((a + 1).to_string());
                    row.push((b + 1).to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            Ok(row)
        })
        .collect()
}

impl TupleClass {
    pub fn is_internal(&self) -> bool {
        matches!(self, TupleClass::Internal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::tests::fixture_a;
    use crate::exact::q;

    fn p4() -> ConstructionParams {
        ConstructionParams::custom(vec![4, 4], vec![q(1, 2); 2], 2).unwrap()
    }

    fn ident(n: usize) -> AffineTuple {
        AffineTuple::repeated(qi(0), qi(1), n).unwrap()
    }

    #[test]
    fn identical_copies_level_one() {
        let f = enumerate_f(2, 1, &ident(2), &p4(), None, DEFAULT_OUTPUT_CAP).unwrap();
        assert_eq!(f.len(), 10);
        for t in &f {
            assert!(t.positions[0].abs_diff(t.positions[1]) <= 1);
            assert_eq!(t.class, TupleClass::Internal);
        }
        let (i, tr) = classify(&f);
        assert_eq!((i.len(), tr.len()), (10, 0));
        let m = projection_multiplicity(&f, 0);
        assert_eq!(m.max, 3);
    }

    #[test]
    fn disjoint_copies() {
        let a = AffineTuple::new(vec![(qi(0), qi(1)), (qi(-2), qi(1))]).unwrap();
        assert!(enumerate_f(2, 1, &a, &p4(), None, 100).unwrap().is_empty());
        assert_eq!(tangency_counts(&fixture_a(), &a, 2, 2).unwrap(), (0, 0));
        assert_eq!(projection_multiplicity(&[], 0).max, 0);
    }

    #[test]
    fn far_pair_not_in_f() {
        let p = ConstructionParams::custom(vec![32], vec![q(1, 2)], 1).unwrap();
        let f = enumerate_f(2, 1, &ident(2), &p, None, 1000).unwrap();
        assert!(!f.iter().any(|t| t.positions == vec![0, 9]));
    }

    #[test]
    fn gap_five_pair_is_transverse() {
        // i = 1 in slot 1 scaled by r = 2, touching i = 6 in slot 2 (r = 1)
        // slot 1: cell 0 → [2, 2 + 2/16], slot 2 shifted so cell 5 starts at 2 + 2/16
        let p = ConstructionParams::custom(vec![16], vec![q(1, 2)], 1).unwrap();
        let c2 = qi(2) + q(2, 16) - (qi(1) + q(5, 16));
        let a = AffineTuple::new(vec![(qi(-2), qi(2)), (c2 - qi(2), qi(1))]).unwrap();
        let f = enumerate_f(2, 1, &a, &p, None, 1000).unwrap();
        let t = f.iter().find(|t| t.positions == vec![0, 5]).expect("in F");
        assert_eq!(t.class, TupleClass::Transverse);
    }

    #[test]
    fn fixture_counts_match_brute_force() {
        let s = fixture_a();
        let (li, lt) = tangency_counts(&s, &ident(2), 2, 2).unwrap();
        let sel = s.level(2).unwrap().positions().to_vec();
        let mut n = 0;
        for &a in &sel {
            for &b in &sel {
                if a.abs_diff(b) <= 1 {
                    n += 1;
                }
            }
        }
        assert_eq!(li + lt, n);
        assert!(li >= 4);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            enumerate_f(2, 1, &ident(2), &p4(), None, 5),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn proximity_examples() {
        let a = AffineTuple::new(vec![(qi(0), qi(1)), (q(-1, 2), qi(1))]).unwrap();
        let p = proximity_check(&a, 2, 160).unwrap();
        assert_eq!(p.bound, qi(1));
        assert!(p.satisfied);
        assert_eq!(proximity_check(&a, 2, 40).unwrap().bound, qi(4));
        assert_eq!(proximity_check(&a, 2, 0).unwrap().bound, qi(4));
    }

    #[test]
    fn symdiff_examples() {
        let eta = q(1, 10);
        let r = symdiff_bound_check(&qi(0), &qi(0), &qi(1), &qi(1), &q(1, 2), &eta).unwrap();
        assert_eq!(r.measure, qi(0));
        let r = symdiff_bound_check(&qi(0), &q(1, 20), &qi(1), &qi(1), &q(1, 2), &eta).unwrap();
        assert_eq!(r.measure, eta);
        assert!(r.satisfied);
        assert!(symdiff_bound_check(&qi(0), &qi(1), &qi(1), &qi(1), &q(1, 2), &eta).is_err());
    }

    #[test]
    fn grid_centers() {
        let p = p4();
        let g = Grid::new(&p, 1, 1).unwrap();
        assert_eq!(g.cells_per_unit, 16);
        assert_eq!(g.c(1), qi(-4) + q(1, 32));
        assert_eq!(g.r(16), qi(2) - q(1, 32));
        assert_eq!(g.c_index_of(&g.c(7)), Some(7));
    }
}
