//! Nested selections of N-adic subintervals of `[1, 2]` and their densities.
//!
//! Level `k` subdivides `[1, 2]` into `M_k = N_1⋯N_k` cells of length `δ_k = 1/M_k`.
//! A cell is addressed by its multi-index `(i_1, …, i_k)` or, internally, by its
//! position `g = Σ_j (i_j − 1)·M_k/M_j`, so that the cell is `[1 + g/M_k, 1 + (g+1)/M_k]`.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{fmt_q, parse_q, q, qi, qu, serde_q, serde_q_vec, to_f64, Q};
use crate::step::StepFunction;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest supported `M_K`; positions are stored as `u64`.
pub const MAX_CELLS: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `N_k = N^{k+1}`, `ε_k = 1/(k+1)`.
    OneDimensional,
    /// `N_k = N^k`, `ε_k = ε` with `0 < ε < 1/3`.
    FixedDimension,
    /// Explicit `N_k` and `ε_k` lists.
    Custom,
}

/// Scalar knobs of the iteration. Schedules hold `K + 1` entries when the regime
/// determines them, so that quantities involving `N_{K+1}` are available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub regime: Regime,
    /// Base `N` of the closed-form regimes; 0 for custom schedules.
    pub base: u64,
    #[serde(default, with = "opt_q")]
    pub epsilon: Option<Q>,
    #[serde(with = "serde_q_vec")]
    pub epsilon_schedule: Vec<Q>,
    pub level_counts: Vec<u64>,
    pub depth: usize,
    #[serde(with = "serde_q")]
    pub b: Q,
    pub l: u32,
    #[serde(with = "serde_q")]
    pub epsilon0: Q,
    #[serde(with = "serde_q")]
    pub gamma: Q,
    pub seed: u64,
    pub max_retries: u32,
    /// Even `n` used by the correlation gate.
    pub gate_n: usize,
    /// Sample budget of the correlation gate.
    pub gate_budget: usize,
}

mod opt_q {
    use super::{fmt_q, parse_q, Q};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&fmt_q(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Q>, D::Error> {
        let v = Option::<String>::deserialize(d)?;
        v.map(|s| parse_q(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

fn checked_pow(base: u64, e: u64) -> Result<u64> {
    let mut acc: u64 = 1;
    for _ in 0..e {
        acc = acc
            .checked_mul(base)
            .ok_or_else(|| Error::Capacity(format!("{base}^{e} exceeds 64 bits")))?;
    }
    Ok(acc)
}

impl ConstructionParams {
    fn defaults(
        regime: Regime,
        base: u64,
        epsilon: Option<Q>,
        level_counts: Vec<u64>,
        epsilon_schedule: Vec<Q>,
        depth: usize,
    ) -> Self {
        ConstructionParams {
            regime,
            base,
            epsilon,
            epsilon_schedule,
            level_counts,
            depth,
            b: qi(10),
            l: 2,
            epsilon0: q(1, 2),
            gamma: qi(1),
            seed: 0,
            max_retries: 50,
            gate_n: 2,
            gate_budget: 32,
        }
    }

    /// `N_k = N^{k+1}`, `ε_k = 1/(k+1)`.
    pub fn one_dimensional(base: u64, depth: usize) -> Result<Self> {
        let mut counts = Vec::new();
        let mut eps = Vec::new();
        for k in 1..=depth as u64 + 1 {
            counts.push(checked_pow(base, k + 1)?);
            eps.push(q(1, k as i64 + 1));
        }
        let p = Self::defaults(Regime::OneDimensional, base, None, counts, eps, depth);
        p.validate()?;
        Ok(p)
    }

    /// `N_k = N^k`, `ε_k = ε`.
    pub fn fixed_dimension(base: u64, epsilon: Q, depth: usize) -> Result<Self> {
        let mut counts = Vec::new();
        for k in 1..=depth as u64 + 1 {
            counts.push(checked_pow(base, k)?);
        }
        let eps = vec![epsilon.clone(); depth + 1];
        let p = Self::defaults(
            Regime::FixedDimension,
            base,
            Some(epsilon),
            counts,
            eps,
            depth,
        );
        p.validate()?;
        Ok(p)
    }

    /// Explicit schedules with at least `depth` entries each.
    pub fn custom(level_counts: Vec<u64>, epsilon_schedule: Vec<Q>, depth: usize) -> Result<Self> {
        let p = Self::defaults(
            Regime::Custom,
            0,
            None,
            level_counts,
            epsilon_schedule,
            depth,
        );
        p.validate()?;
        Ok(p)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Params(m));
        if self.depth == 0 {
            return bad("depth K must be positive".into());
        }
        if self.level_counts.len() < self.depth || self.epsilon_schedule.len() < self.depth {
            return bad(format!(
                "schedules must cover depth {}: got {} counts and {} exponents",
                self.depth,
                self.level_counts.len(),
                self.epsilon_schedule.len()
            ));
        }
        if self.level_counts.len() != self.epsilon_schedule.len() {
            return bad("level_counts and epsilon_schedule differ in length".into());
        }
        let half = q(1, 2);
        for (j, (n, e)) in self
            .level_counts
            .iter()
            .zip(&self.epsilon_schedule)
            .enumerate()
        {
            if *n < 2 {
                return bad(format!("N_{} = {n} must be at least 2", j + 1));
            }
            if !e.is_positive() || e > &half {
                return bad(format!("ε_{} = {} must lie in (0, 1/2]", j + 1, fmt_q(e)));
            }
        }
        let mut m: u64 = 1;
        for n in &self.level_counts[..self.depth] {
            m = m
                .checked_mul(*n)
                .filter(|&v| v <= MAX_CELLS)
                .ok_or_else(|| Error::Capacity("M_K exceeds 2^62".into()))?;
        }
        match self.regime {
            Regime::OneDimensional => {
                for k in 1..=self.level_counts.len() {
                    if self.level_counts[k - 1] != checked_pow(self.base, k as u64 + 1)?
                        || self.epsilon_schedule[k - 1] != q(1, k as i64 + 1)
                    {
                        return bad(format!("level {k} breaks N_k = N^(k+1), ε_k = 1/(k+1)"));
                    }
                }
            }
            Regime::FixedDimension => {
                let Some(eps) = &self.epsilon else {
                    return bad("fixed-dimension regime needs ε".into());
                };
                if !eps.is_positive() || eps >= &q(1, 3) {
                    return bad(format!("ε = {} must lie in (0, 1/3)", fmt_q(eps)));
                }
                for k in 1..=self.level_counts.len() {
                    if self.level_counts[k - 1] != checked_pow(self.base, k as u64)?
                        || &self.epsilon_schedule[k - 1] != eps
                    {
                        return bad(format!("level {k} breaks N_k = N^k, ε_k = ε"));
                    }
                }
            }
            Regime::Custom => {}
        }
        if !self.b.is_positive() {
            return bad("B must be positive".into());
        }
        if self.l == 0 {
            return bad("L must be positive".into());
        }
        if !self.epsilon0.is_positive() || self.epsilon0 >= Q::one() {
            return bad("ε₀ must lie in (0, 1)".into());
        }
        if !self.gamma.is_positive() {
            return bad("γ must be positive".into());
        }
        if self.gate_n < 2 || !self.gate_n.is_multiple_of(2) {
            return bad(format!(
                "gate n = {} must be even and at least 2",
                self.gate_n
            ));
        }
        Ok(())
    }

    /// `N_k` for `1 ≤ k ≤` schedule length.
    pub fn n(&self, k: usize) -> Option<u64> {
        (k >= 1)
            .then(|| self.level_counts.get(k - 1).copied())
            .flatten()
    }

    pub fn eps(&self, k: usize) -> Option<&Q> {
        (k >= 1).then(|| self.epsilon_schedule.get(k - 1)).flatten()
    }

    pub fn n_checked(&self, k: usize) -> Result<u64> {
        self.n(k)
            .ok_or_else(|| Error::LevelOutOfRange(format!("schedule does not reach level {k}")))
    }

    pub fn eps_checked(&self, k: usize) -> Result<&Q> {
        self.eps(k)
            .ok_or_else(|| Error::LevelOutOfRange(format!("schedule does not reach level {k}")))
    }

    /// `M_k = N_1⋯N_k`, with `M_0 = 1`.
    pub fn m(&self, k: usize) -> Result<u64> {
        let mut m: u64 = 1;
        for j in 1..=k {
            m = m
                .checked_mul(self.n_checked(j)?)
                .ok_or_else(|| Error::Capacity(format!("M_{k} exceeds 64 bits")))?;
        }
        Ok(m)
    }

    /// `M_k` as an exact integer, valid beyond 64 bits.
    pub fn m_big(&self, k: usize) -> Result<BigInt> {
        let mut m = BigInt::one();
        for j in 1..=k {
            m *= BigInt::from(self.n_checked(j)?);
        }
        Ok(m)
    }

    pub fn delta(&self, k: usize) -> Result<Q> {
        Ok(Q::new(BigInt::one(), self.m_big(k)?))
    }

    /// `p_k = N_k^{−ε_k}`.
    pub fn p(&self, k: usize) -> Result<f64> {
        let n = self.n_checked(k)? as f64;
        Ok(n.powf(-to_f64(self.eps_checked(k)?)))
    }

    /// `q_ε = (1 + ε)/(2ε)` for the fixed-dimension regime.
    pub fn q_eps(&self) -> Option<Q> {
        self.epsilon.as_ref().map(|e| (Q::one() + e) / (qi(2) * e))
    }
}

/// Multi-index `(i_1, …, i_k)`, 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: &[u32]) -> Self {
        MultiIndex(entries.to_vec())
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn prefix(&self) -> MultiIndex {
        MultiIndex(self.0[..self.0.len().saturating_sub(1)].to_vec())
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    pub fn validate(&self, params: &ConstructionParams) -> Result<()> {
        for (j, &i) in self.0.iter().enumerate() {
            let n = params.n_checked(j + 1)?;
            if i < 1 || i as u64 > n {
                return Err(Error::InvalidIndex(format!(
                    "{:?}: entry {} = {i} outside 1..={n}",
                    self.0,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// Position of the cell at level `k = self.level()`.
    pub fn position(&self, params: &ConstructionParams) -> Result<u64> {
        self.validate(params)?;
        let mut g: u64 = 0;
        for (j, &i) in self.0.iter().enumerate() {
            g = g * params.n_checked(j + 1)? + (i as u64 - 1);
        }
        Ok(g)
    }

    pub fn from_position(g: u64, k: usize, params: &ConstructionParams) -> Result<Self> {
        let mut rest = g;
        let mut entries = vec![0u32; k];
        for j in (1..=k).rev() {
            let n = params.n_checked(j)?;
            entries[j - 1] = (rest % n) as u32 + 1;
            rest /= n;
        }
        if rest != 0 {
            return Err(Error::InvalidIndex(format!(
                "position {g} outside level {k}"
            )));
        }
        Ok(MultiIndex(entries))
    }
}

/// `α(i) = 1 + Σ_j (i_j − 1)/(N_1⋯N_j)`.
pub fn alpha(i: &MultiIndex, params: &ConstructionParams) -> Result<Q> {
    i.validate(params)?;
    let mut s = Q::one();
    let mut m = BigInt::one();
    for (j, &e) in i.0.iter().enumerate() {
        m *= BigInt::from(params.n_checked(j + 1)?);
        s += Q::new(BigInt::from(e - 1), m.clone());
    }
    Ok(s)
}

/// `I_k(i) = [α(i), α(i) + δ_k]`.
pub fn interval_of(i: &MultiIndex, params: &ConstructionParams) -> Result<(Q, Q)> {
    let a = alpha(i, params)?;
    let d = params.delta(i.level())?;
    let b = &a + d;
    Ok((a, b))
}

/// The `N_{k+1}` children of `i`, in increasing order.
pub fn children(i: &MultiIndex, params: &ConstructionParams) -> Result<Vec<MultiIndex>> {
    i.validate(params)?;
    let n = params.n_checked(i.level() + 1)?;
    Ok((1..=n as u32)
        .map(|c| {
            let mut e = i.0.clone();
            e.push(c);
            MultiIndex(e)
        })
        .collect())
}

/// Selected cells of one level, as sorted positions.
#[derive(Clone, Debug, PartialEq)]
pub struct CantorLevel {
    pub k: usize,
    pub n_k: u64,
    pub m_k: u64,
    positions: Vec<u64>,
    prefix_sum: Vec<u128>,
}

impl CantorLevel {
    pub fn new(k: usize, n_k: u64, m_k: u64, mut positions: Vec<u64>) -> Result<Self> {
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Structure(format!("duplicate cell at level {k}")));
        }
        if let Some(&g) = positions.last() {
            if g >= m_k {
                return Err(Error::InvalidIndex(format!(
                    "position {g} outside level {k} (M_k = {m_k})"
                )));
            }
        }
        let mut prefix_sum = Vec::with_capacity(positions.len() + 1);
        let mut acc: u128 = 0;
        prefix_sum.push(0);
        for &g in &positions {
            acc += g as u128;
            prefix_sum.push(acc);
        }
        Ok(CantorLevel {
            k,
            n_k,
            m_k,
            positions,
            prefix_sum,
        })
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    /// `P_k`.
    pub fn count(&self) -> u64 {
        self.positions.len() as u64
    }

    pub fn delta(&self) -> Q {
        Q::new(BigInt::one(), BigInt::from(self.m_k))
    }

    /// `|S_k| = P_k δ_k`.
    pub fn measure(&self) -> Q {
        Q::new(BigInt::from(self.count()), BigInt::from(self.m_k))
    }

    pub fn contains(&self, g: u64) -> bool {
        self.positions.binary_search(&g).is_ok()
    }

    /// Left endpoint `1 + g/M_k`.
    pub fn alpha_of(&self, g: u64) -> Q {
        Q::new(BigInt::from(self.m_k + g), BigInt::from(self.m_k))
    }

    fn split(&self, u: &Q) -> Option<(u64, Q)> {
        // (u − 1)·M_k as floor + fraction; None when u ≤ 1.
        let t = (u - Q::one()) * qu(self.m_k);
        if !t.is_positive() {
            return None;
        }
        if t >= qu(self.m_k) {
            return Some((self.m_k, Q::zero()));
        }
        let fl = t.floor();
        let g: u64 = fl.to_integer().try_into().expect("below M_k");
        Some((g, t - fl))
    }

    /// `|S_k ∩ (−∞, u]|`.
    pub fn measure_below(&self, u: &Q) -> Q {
        let Some((g, frac)) = self.split(u) else {
            return Q::zero();
        };
        let c = self.positions.partition_point(|&p| p < g);
        let mut cells = Q::from_integer(BigInt::from(c));
        if self.contains(g) {
            cells += frac;
        }
        cells / qu(self.m_k)
    }

    /// `∫_{S_k ∩ (−∞, u]} y dy`.
    pub fn moment_below(&self, u: &Q) -> Q {
        let Some((g, _)) = self.split(u) else {
            return Q::zero();
        };
        let c = self.positions.partition_point(|&p| p < g);
        let m = qu(self.m_k);
        // Σ over whole cells of ∫_α^{α+δ} y dy = (c·M + Σg + c/2)/M²
        let cq = Q::from_integer(BigInt::from(c));
        let sum_g = Q::from_integer(BigInt::from(self.prefix_sum[c]));
        let mut s = (&cq * &m + sum_g + &cq / qi(2)) / (&m * &m);
        if self.contains(g) {
            let a = self.alpha_of(g);
            s += (u * u - &a * &a) / qi(2);
        }
        s
    }

    /// `|S_k ∩ [u, w]|`.
    pub fn measure_between(&self, u: &Q, w: &Q) -> Q {
        if u >= w {
            return Q::zero();
        }
        self.measure_below(w) - self.measure_below(u)
    }

    pub fn moment_between(&self, u: &Q, w: &Q) -> Q {
        if u >= w {
            return Q::zero();
        }
        self.moment_below(w) - self.moment_below(u)
    }
}

/// Nested family `S_1 ⊇ ⋯ ⊇ S_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct CantorSet {
    pub params: ConstructionParams,
    levels: Vec<CantorLevel>,
}

impl CantorSet {
    /// Validates nesting; `positions[k-1]` lists the selected cells of level `k`.
    pub fn from_positions(params: ConstructionParams, positions: Vec<Vec<u64>>) -> Result<Self> {
        params.validate()?;
        if positions.len() > params.depth {
            return Err(Error::Structure(format!(
                "{} levels given for depth {}",
                positions.len(),
                params.depth
            )));
        }
        let mut levels: Vec<CantorLevel> = Vec::with_capacity(positions.len());
        for (j, pos) in positions.into_iter().enumerate() {
            let k = j + 1;
            let level = CantorLevel::new(k, params.n_checked(k)?, params.m(k)?, pos)?;
            if let Some(parent) = levels.last() {
                for &g in level.positions() {
                    if !parent.contains(g / level.n_k) {
                        let idx = MultiIndex::from_position(g, k, &params)?;
                        return Err(Error::Structure(format!(
                            "index {:?} at level {k} has unselected parent {:?}",
                            idx.0,
                            idx.prefix().0
                        )));
                    }
                }
            }
            levels.push(level);
        }
        Ok(CantorSet { params, levels })
    }

    /// Number of built levels.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> Result<&CantorLevel> {
        if k == 0 || k > self.levels.len() {
            return Err(Error::LevelOutOfRange(format!(
                "level {k} not in 1..={}",
                self.levels.len()
            )));
        }
        Ok(&self.levels[k - 1])
    }

    pub fn levels(&self) -> &[CantorLevel] {
        &self.levels
    }

    /// `P_k`, with `P_0 = 1`.
    pub fn count(&self, k: usize) -> Result<u64> {
        if k == 0 {
            return Ok(1);
        }
        Ok(self.level(k)?.count())
    }

    pub fn selection(&self, k: usize) -> Result<Vec<MultiIndex>> {
        let lvl = self.level(k)?;
        lvl.positions()
            .iter()
            .map(|&g| MultiIndex::from_position(g, k, &self.params))
            .collect()
    }

    /// Levels with `P_k = 0`.
    pub fn degenerate_levels(&self) -> Vec<usize> {
        self.levels
            .iter()
            .filter(|l| l.count() == 0)
            .map(|l| l.k)
            .collect()
    }

    pub(crate) fn push_level(&mut self, level: CantorLevel) {
        self.levels.push(level);
    }

    pub(crate) fn truncated(&self, depth: usize) -> CantorSet {
        CantorSet {
            params: self.params.clone(),
            levels: self.levels[..depth].to_vec(),
        }
    }

    pub(crate) fn empty(params: ConstructionParams) -> CantorSet {
        CantorSet {
            params,
            levels: Vec::new(),
        }
    }

    fn nondegenerate(&self, k: usize) -> Result<&CantorLevel> {
        let l = self.level(k)?;
        if l.count() == 0 {
            return Err(Error::DegenerateMeasure(k));
        }
        Ok(l)
    }
}

/// Builds a set from explicit per-level selections.
pub fn build_deterministic(
    selections: &[Vec<MultiIndex>],
    params: ConstructionParams,
) -> Result<CantorSet> {
    let mut positions = Vec::with_capacity(selections.len());
    for (j, sel) in selections.iter().enumerate() {
        let k = j + 1;
        let mut pos = Vec::with_capacity(sel.len());
        for i in sel {
            if i.level() != k {
                return Err(Error::InvalidIndex(format!(
                    "{:?} listed at level {k}",
                    i.0
                )));
            }
            pos.push(i.position(&params)?);
        }
        positions.push(pos);
    }
    CantorSet::from_positions(params, positions)
}

/// Lattice form of `1_{S_k}` times `value` over denominator `M_k`.
fn level_step(level: &CantorLevel, value: Q) -> StepFunction {
    let m = level.m_k as i128;
    let mut knots: Vec<i128> = Vec::with_capacity(level.positions.len() * 2);
    let mut cells: Vec<u32> = Vec::with_capacity(level.positions.len() * 2);
    for &g in &level.positions {
        let a = m + g as i128;
        match knots.last() {
            Some(&last) if last == a => {}
            Some(_) => {
                cells.push(0);
                knots.push(a);
            }
            None => knots.push(a),
        }
        cells.push(1);
        knots.push(a + 1);
    }
    StepFunction::from_palette(m, knots, vec![Q::zero(), value], cells)
}

/// `φ_k = 1_{S_k}/|S_k|`.
pub fn density(set: &CantorSet, k: usize) -> Result<StepFunction> {
    let l = set.nondegenerate(k)?;
    Ok(level_step(l, Q::one() / l.measure()))
}

/// `σ_k = φ_{k+1} − φ_k`.
pub fn sigma(set: &CantorSet, k: usize) -> Result<StepFunction> {
    let lo = set.nondegenerate(k)?;
    let hi = set.nondegenerate(k + 1)?;
    let a = Q::one() / hi.measure();
    let b = Q::one() / lo.measure();
    // cells of S_{k+1} carry a − b, the rest of S_k carries −b
    let m = hi.m_k as i128;
    let ratio = (hi.m_k / lo.m_k) as i128;
    let mut knots: Vec<i128> = Vec::with_capacity(lo.positions.len() * 2 + hi.positions.len() * 2);
    let mut cells: Vec<u32> = Vec::with_capacity(knots.capacity());
    let mut child = hi.positions.iter().peekable();
    let push = |knots: &mut Vec<i128>, cells: &mut Vec<u32>, a: i128, b: i128, c: u32| {
        match knots.last() {
            Some(&last) if last == a => {}
            Some(_) => {
                cells.push(0);
                knots.push(a);
            }
            None => knots.push(a),
        }
        cells.push(c);
        knots.push(b);
    };
    for &g in &lo.positions {
        let start = m + g as i128 * ratio;
        let end = start + ratio;
        let mut cur = start;
        while let Some(&&c) = child.peek() {
            let cs = m + c as i128;
            if cs >= end {
                break;
            }
            if cs > cur {
                push(&mut knots, &mut cells, cur, cs, 2);
            }
            push(&mut knots, &mut cells, cs, cs + 1, 1);
            cur = cs + 1;
            child.next();
        }
        if cur < end {
            push(&mut knots, &mut cells, cur, end, 2);
        }
    }
    let palette = vec![Q::zero(), &a - &b, -b];
    Ok(StepFunction::from_palette(m, knots, palette, cells))
}

/// Depth-`K` mass `μ_K(J) = ∫_J φ_K`.
pub fn nu_interval(set: &CantorSet, a: &Q, b: &Q) -> Result<Q> {
    if a < &qi(1) || b > &qi(2) || a > b {
        return Err(Error::Domain(format!(
            "J = [{}, {}] must lie in [1, 2]",
            fmt_q(a),
            fmt_q(b)
        )));
    }
    let l = set.level(set.depth())?;
    if l.count() == 0 {
        return Ok(Q::zero());
    }
    Ok(l.measure_between(a, b) / l.measure())
}

/// `Σ_{i ∈ S_k} |∫_{I_k(i)} (φ_{k'} − φ_k)|`.
pub fn weak_star_defect(set: &CantorSet, k: usize, k2: usize) -> Result<Q> {
    if k == 0 || k > k2 || k2 > set.depth() {
        return Err(Error::LevelOutOfRange(format!(
            "need 1 ≤ k ≤ k' ≤ {}, got k = {k}, k' = {k2}",
            set.depth()
        )));
    }
    let lo = set.nondegenerate(k)?;
    let hi = set.nondegenerate(k2)?;
    let ratio = hi.m_k / lo.m_k;
    let pk = qu(lo.count());
    let pk2 = qu(hi.count());
    let mut total = Q::zero();
    let desc = hi.positions();
    let mut at = 0usize;
    for &g in lo.positions() {
        let start = at;
        while at < desc.len() && desc[at] / ratio == g {
            at += 1;
        }
        let mass = Q::from_integer(BigInt::from(at - start)) / &pk2;
        total += (mass - Q::one() / &pk).abs();
    }
    Ok(total)
}

/// Right side `2B·2^{−kγ/2}/(1 − 2^{−γ/2})` of the level-`k` defect bound.
pub fn defect_bound(b: &Q, gamma: &Q, k: usize) -> f64 {
    let g = to_f64(gamma);
    2.0 * to_f64(b) * 2f64.powf(-(k as f64) * g / 2.0) / (1.0 - 2f64.powf(-g / 2.0))
}

/// Parses a 1-based index list such as `"2,3"`.
pub fn parse_index(s: &str) -> Result<MultiIndex> {
    let entries = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Format(format!("bad index entry in {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiIndex(entries))
}

/// JSON form of a set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CantorSetFile {
    pub schema_version: u32,
    pub params: ConstructionParams,
    pub levels: Vec<LevelFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelFile {
    pub level: usize,
    pub n_k: u64,
    pub count: u64,
    pub selection: Vec<MultiIndex>,
}

impl CantorSet {
    pub fn to_file(&self) -> Result<CantorSetFile> {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                Ok(LevelFile {
                    level: l.k,
                    n_k: l.n_k,
                    count: l.count(),
                    selection: self.selection(l.k)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CantorSetFile {
            schema_version: SCHEMA_VERSION,
            params: self.params.clone(),
            levels,
        })
    }

    pub fn from_file(file: &CantorSetFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        for (j, l) in file.levels.iter().enumerate() {
            if l.level != j + 1 {
                return Err(Error::Format(format!("level {} out of order", l.level)));
            }
            if l.count != l.selection.len() as u64 {
                return Err(Error::Format(format!(
                    "level {} records count {} but lists {} indices",
                    l.level,
                    l.count,
                    l.selection.len()
                )));
            }
        }
        let sel: Vec<Vec<MultiIndex>> = file.levels.iter().map(|l| l.selection.clone()).collect();
        build_deterministic(&sel, file.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.to_file()?).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: CantorSetFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_file(&f)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn fixture_a() -> CantorSet {
        let params = ConstructionParams::custom(vec![4, 4], vec![q(1, 2), q(1, 2)], 2).unwrap();
        let l1 = vec![MultiIndex::new(&[2]), MultiIndex::new(&[4])];
        let l2 = vec![
            MultiIndex::new(&[2, 1]),
            MultiIndex::new(&[2, 3]),
            MultiIndex::new(&[4, 2]),
            MultiIndex::new(&[4, 4]),
        ];
        build_deterministic(&[l1, l2], params).unwrap()
    }

    fn params_44() -> ConstructionParams {
        ConstructionParams::custom(vec![4, 2, 4], vec![q(1, 3); 3], 3).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let p = params_44();
        assert_eq!(alpha(&MultiIndex::new(&[1, 1]), &p).unwrap(), qi(1));
        assert_eq!(alpha(&MultiIndex::new(&[3]), &p).unwrap(), q(3, 2));
        assert_eq!(alpha(&MultiIndex::new(&[2, 2]), &p).unwrap(), q(11, 8));
        assert!(matches!(
            alpha(&MultiIndex::new(&[5]), &p),
            Err(Error::InvalidIndex(_))
        ));
        assert!(matches!(
            alpha(&MultiIndex::new(&[1, 3]), &p),
            Err(Error::InvalidIndex(_))
        ));
    }

    #[test]
    fn interval_examples() {
        let p = ConstructionParams::custom(vec![4, 4], vec![q(1, 3); 2], 2).unwrap();
        assert_eq!(
            interval_of(&MultiIndex::new(&[1]), &p).unwrap(),
            (qi(1), q(5, 4))
        );
        assert_eq!(
            interval_of(&MultiIndex::new(&[4, 4]), &p).unwrap(),
            (q(31, 16), qi(2))
        );
        let ch = children(&MultiIndex::new(&[1]), &p).unwrap();
        assert_eq!(ch.len(), 4);
        let mut end = qi(1);
        for c in &ch {
            let (a, b) = interval_of(c, &p).unwrap();
            assert_eq!(a, end);
            end = b;
        }
        assert_eq!(end, q(5, 4));
    }

    #[test]
    fn positions_round_trip() {
        let p = params_44();
        for g in 0..32 {
            let i = MultiIndex::from_position(g, 3, &p).unwrap();
            assert_eq!(i.position(&p).unwrap(), g);
            let a = alpha(&i, &p).unwrap();
            assert_eq!(a, Q::new(BigInt::from(32 + g), BigInt::from(32)));
        }
    }

    #[test]
    fn fixture_a_counts() {
        let s = fixture_a();
        assert_eq!(s.count(1).unwrap(), 2);
        assert_eq!(s.count(2).unwrap(), 4);
    }

    #[test]
    fn nesting_violation() {
        let params = ConstructionParams::custom(vec![4, 4], vec![q(1, 2), q(1, 2)], 2).unwrap();
        let r = build_deterministic(
            &[vec![MultiIndex::new(&[2])], vec![MultiIndex::new(&[3, 1])]],
            params,
        );
        match r {
            Err(Error::Structure(m)) => assert!(m.contains("[3, 1]")),
            other => panic!("expected structure error, got {other:?}"),
        }
    }

    #[test]
    fn empty_level_is_flagged() {
        let params = ConstructionParams::custom(vec![4, 4], vec![q(1, 2), q(1, 2)], 2).unwrap();
        let s = build_deterministic(&[vec![]], params).unwrap();
        assert_eq!(s.count(1).unwrap(), 0);
        assert_eq!(s.degenerate_levels(), vec![1]);
        assert!(matches!(density(&s, 1), Err(Error::DegenerateMeasure(1))));
    }

    #[test]
    fn densities_of_fixture_a() {
        let s = fixture_a();
        let phi1 = density(&s, 1).unwrap();
        assert_eq!(
            phi1.nonzero_cells(),
            vec![(q(5, 4), q(3, 2), qi(2)), (q(7, 4), qi(2), qi(2)),]
        );
        assert_eq!(phi1.integral(), qi(1));
        let phi2 = density(&s, 2).unwrap();
        assert_eq!(phi2.nonzero_cells().len(), 4);
        assert!(phi2.nonzero_cells().iter().all(|c| c.2 == qi(4)));
        assert_eq!(phi2.integral(), qi(1));
        let sg = sigma(&s, 1).unwrap();
        assert_eq!(sg.integral(), qi(0));
        assert_eq!(sg, phi2.sub(&phi1).unwrap());
        assert_eq!(sg.eval(&q(5, 4)), qi(2));
        assert_eq!(sg.eval(&(q(5, 4) + q(1, 16))), qi(-2));
        assert_eq!(sg.eval(&q(9, 8)), qi(0));
    }

    #[test]
    fn nu_examples() {
        let s = fixture_a();
        assert_eq!(nu_interval(&s, &qi(1), &qi(2)).unwrap(), qi(1));
        assert_eq!(nu_interval(&s, &q(5, 4), &q(21, 16)).unwrap(), q(1, 4));
        assert_eq!(nu_interval(&s, &qi(1), &q(5, 4)).unwrap(), qi(0));
        // half a cell
        assert_eq!(nu_interval(&s, &q(5, 4), &q(41, 32)).unwrap(), q(1, 8));
    }

    #[test]
    fn defect_examples() {
        let s = fixture_a();
        assert_eq!(weak_star_defect(&s, 1, 1).unwrap(), qi(0));
        assert_eq!(weak_star_defect(&s, 2, 2).unwrap(), qi(0));
        assert_eq!(weak_star_defect(&s, 1, 2).unwrap(), qi(0));
        assert!(weak_star_defect(&s, 2, 1).is_err());
        assert!(weak_star_defect(&s, 1, 3).is_err());
    }

    #[test]
    fn measure_and_moment_match_direct_sums() {
        let s = fixture_a();
        let l = s.level(2).unwrap();
        let pts = [
            q(1, 1),
            q(21, 16),
            q(41, 32),
            q(3, 2),
            q(63, 32),
            qi(2),
            qi(3),
        ];
        for u in &pts {
            let mut m = Q::zero();
            let mut mo = Q::zero();
            for &g in l.positions() {
                let a = l.alpha_of(g);
                let b = &a + l.delta();
                let hi = if &b < u { b } else { u.clone() };
                if hi > a {
                    m += &hi - &a;
                    mo += (&hi * &hi - &a * &a) / qi(2);
                }
            }
            assert_eq!(l.measure_below(u), m);
            assert_eq!(l.moment_below(u), mo);
        }
    }

    #[test]
    fn json_round_trip() {
        let s = fixture_a();
        let j = s.to_json().unwrap();
        let t = CantorSet::from_json(&j).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn regime_schedules() {
        let p = ConstructionParams::fixed_dimension(16, q(1, 4), 3).unwrap();
        assert_eq!(p.level_counts, vec![16, 256, 4096, 65536]);
        assert_eq!(p.m(3).unwrap(), 1 << 24);
        assert_eq!(p.q_eps(), Some(q(5, 2)));
        let e1 = ConstructionParams::one_dimensional(4, 2).unwrap();
        assert_eq!(e1.level_counts, vec![16, 64, 256]);
        assert_eq!(e1.eps(2), Some(&q(1, 3)));
        assert!(ConstructionParams::fixed_dimension(16, q(1, 3), 3).is_err());
        assert!(ConstructionParams::custom(vec![1], vec![q(1, 4)], 1).is_err());
    }
}
