//! The n-fold correlation `Λ(A; f_1, …, f_n) = ∫ ∏ f_ℓ((z − c_ℓ)/r_ℓ) dz`, evaluated
//! exactly by one merged sweep over the transformed breakpoints.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{sigma, CantorSet, ConstructionParams};
use crate::error::{Error, Result};
use crate::exact::{checked_lcm, fmt_q, mul128, numer_over, qi, round_down, round_up, to_f64, Q};
use crate::intersect::{count_f, AffineTuple, Grid, TupleClass};
use crate::rng::RngStream;
use crate::step::StepFunction;

/// Grids with at most this many tuples are swept exhaustively.
pub const EXHAUSTIVE_CAP: u128 = 1_000_000;

/// Largest palette product accumulated in a dense table.
const DENSE_KEYS: usize = 1 << 20;

struct Slot<'a> {
    f: &'a StepFunction,
    base: i128,
    step: i128,
}

impl Slot<'_> {
    fn z(&self, i: usize) -> i128 {
        self.base + self.step * self.f.knots()[i]
    }
}

/// Exact `Λ` for arbitrary pairs with `r_ℓ > 0`.
pub fn lambda_pairs(pairs: &[(Q, Q)], fns: &[&StepFunction]) -> Result<Q> {
    if pairs.len() != fns.len() || pairs.is_empty() {
        return Err(Error::Domain(format!(
            "{} pairs for {} functions",
            pairs.len(),
            fns.len()
        )));
    }
    if pairs.iter().any(|(_, r)| !r.is_positive()) {
        return Err(Error::Domain("dilations must be positive".into()));
    }
    if fns.iter().any(|f| f.is_zero()) {
        return Ok(Q::zero());
    }
    let mut g: i128 = 1;
    for ((c, r), f) in pairs.iter().zip(fns) {
        let cd = crate::exact::big_to_i128(c.denom(), "translation denominator")?;
        let rd = crate::exact::big_to_i128(r.denom(), "dilation denominator")?;
        g = checked_lcm(g, cd)?;
        g = checked_lcm(g, mul128(rd, f.denom())?)?;
    }
    let gq = BigInt::from(g);
    let mut slots = Vec::with_capacity(fns.len());
    for ((c, r), f) in pairs.iter().zip(fns) {
        let base = numer_over(c, g)?;
        let step = numer_over(&(r / Q::from_integer(BigInt::from(f.denom()))), g)?;
        let s = Slot { f, base, step };
        // extreme transformed knots must fit
        for &kn in [f.knots()[0], *f.knots().last().unwrap()].iter() {
            step.checked_mul(kn)
                .and_then(|v| v.checked_add(base))
                .ok_or_else(|| Error::Overflow("transformed breakpoint exceeds 128 bits".into()))?;
        }
        slots.push(s);
    }
    let lo = slots.iter().map(|s| s.z(0)).max().unwrap();
    let hi = slots
        .iter()
        .map(|s| s.z(s.f.knots().len() - 1))
        .min()
        .unwrap();
    if lo >= hi {
        return Ok(Q::zero());
    }

    let mut events: Vec<i128> = Vec::new();
    for s in &slots {
        let kn = s.f.knots();
        let a = kn.partition_point(|&x| s.base + s.step * x < lo);
        let b = kn.partition_point(|&x| s.base + s.step * x <= hi);
        events.extend((a..b).map(|i| s.z(i)));
    }
    events.push(lo);
    events.push(hi);
    events.sort_unstable();
    events.dedup();

    let sizes: Vec<usize> = slots.iter().map(|s| s.f.palette().len()).collect();
    let dense_len = sizes.iter().try_fold(1usize, |acc, &s| {
        acc.checked_mul(s).filter(|&v| v <= DENSE_KEYS)
    });
    let mut dense: Vec<i128> = vec![0; dense_len.unwrap_or(0)];
    let mut sparse: HashMap<Vec<u32>, i128> = HashMap::new();

    // cursor[ℓ] = index of the cell of slot ℓ containing the current event
    let mut cursor: Vec<usize> = slots
        .iter()
        .map(|s| {
            let kn = s.f.knots();
            kn.partition_point(|&x| s.base + s.step * x <= lo) - 1
        })
        .collect();
    let mut key: Vec<u32> = vec![0; slots.len()];
    for w in events.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a >= hi {
            break;
        }
        let mut zero = false;
        for (l, s) in slots.iter().enumerate() {
            let kn_len = s.f.knots().len();
            while cursor[l] + 1 < kn_len && s.z(cursor[l] + 1) <= a {
                cursor[l] += 1;
            }
            let idx = s.f.cell_indices()[cursor[l]];
            if idx == 0 {
                zero = true;
                break;
            }
            key[l] = idx;
        }
        if zero {
            continue;
        }
        let width = b - a;
        if dense_len.is_some() {
            let mut at = 0usize;
            for (l, &k) in key.iter().enumerate() {
                at = at * sizes[l] + k as usize;
            }
            dense[at] += width;
        } else {
            *sparse.entry(key.clone()).or_insert(0) += width;
        }
    }

    let value_of = |key: &[u32]| -> Q {
        let mut p = Q::one();
        for (l, &k) in key.iter().enumerate() {
            p *= &slots[l].f.palette()[k as usize];
        }
        p
    };
    let mut total = Q::zero();
    if dense_len.is_some() {
        let mut key = vec![0u32; slots.len()];
        for (at, &w) in dense.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let mut rest = at;
            for l in (0..slots.len()).rev() {
                key[l] = (rest % sizes[l]) as u32;
                rest /= sizes[l];
            }
            total += value_of(&key) * Q::from_integer(BigInt::from(w));
        }
    } else {
        let mut keys: Vec<_> = sparse.into_iter().collect();
        keys.sort_unstable();
        for (k, w) in keys {
            total += value_of(&k) * Q::from_integer(BigInt::from(w));
        }
    }
    Ok(total / Q::from_integer(gq))
}

/// Exact `Λ(A; f_1, …, f_n)`.
pub fn lambda_exact(a: &AffineTuple, fns: &[&StepFunction]) -> Result<Q> {
    lambda_pairs(a.pairs(), fns)
}

/// `Λ(A; σ_k)` with every slot equal to `σ_k`.
pub fn lambda_sigma(a: &AffineTuple, set: &CantorSet, k: usize) -> Result<Q> {
    let s = sigma(set, k)?;
    lambda_with(a, &s)
}

/// `Λ(A; f)` with every slot equal to `f`.
pub fn lambda_with(a: &AffineTuple, f: &StepFunction) -> Result<Q> {
    let fns = vec![f; a.n()];
    lambda_exact(a, &fns)
}

/// `2^{n+1}/(P_{k+1} δ_{k+1})^{n−1}`.
pub fn trivial_bound(set: &CantorSet, n: usize, k: usize) -> Result<Q> {
    let lvl = set.level(k + 1)?;
    if lvl.count() == 0 {
        return Err(Error::DegenerateMeasure(k + 1));
    }
    let mass = lvl.measure();
    Ok(Q::from_integer(BigInt::one() << (n + 1)) / num_traits::pow(mass, n - 1))
}

/// Strict test `#𝔽_int < P_k^{1−ε₀}` over the full index grid.
pub fn classify_a(
    a: &AffineTuple,
    set: &CantorSet,
    n: usize,
    k: usize,
    epsilon0: &Q,
) -> Result<TupleClass> {
    let (f_int, _) = count_f(n, k, a, &set.params, None)?;
    Ok(class_from_count(f_int, set.count(k)?, epsilon0))
}

/// `F < P^{1−ε₀}` decided on integer powers.
pub fn class_from_count(f_int: u64, p_k: u64, epsilon0: &Q) -> TupleClass {
    let e = Q::one() - epsilon0;
    let u = e.numer().to_usize().expect("exponent numerator");
    let v = e.denom().to_usize().expect("exponent denominator");
    let lhs = num_traits::pow(BigUint::from(f_int), v);
    let rhs = num_traits::pow(BigUint::from(p_k), u);
    if lhs < rhs {
        TupleClass::Transverse
    } else {
        TupleClass::Internal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageMode {
    Exhaustive,
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub mode: CoverageMode,
    pub sampled: u64,
    pub transverse: u64,
    pub internal: u64,
}

/// One evaluated grid tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub index: u64,
    pub tuple: AffineTuple,
    pub f_int: u64,
    pub class: TupleClass,
    /// Present for transverse tuples.
    pub lambda: Option<Q>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupReport {
    pub max_abs: Q,
    pub witness: AffineTuple,
    pub coverage: Coverage,
    pub samples: Vec<SampleRecord>,
}

/// Draws the `i`-th sample: even indices cluster the translations near the first
/// slot at log-uniform distances, odd indices are uniform on the grid.
pub fn sample_tuple(grid: &Grid, n: usize, i: u64, stream: &RngStream) -> AffineTuple {
    let mut rng = stream.child(i).rng();
    let cn = grid.c_count();
    let rn = grid.r_count();
    let mut pairs = Vec::with_capacity(n);
    if i % 2 == 1 {
        for _ in 0..n {
            let ci = rng.gen_range(1..=cn);
            let ri = rng.gen_range(1..=rn);
            pairs.push((grid.c(ci), grid.r(ri)));
        }
    } else {
        let c0 = rng.gen_range(1..=cn);
        let r0 = rng.gen_range(1..=rn);
        pairs.push((grid.c(c0), grid.r(r0)));
        let jump = |rng: &mut rand_chacha::ChaCha8Rng, base: u128, count: u128| -> u128 {
            let span = (count as f64).ln();
            let d = (rng.gen::<f64>() * span).exp().floor() as i128 - 1;
            let d = if rng.gen::<bool>() { d } else { -d };
            (base as i128 + d).clamp(1, count as i128) as u128
        };
        for _ in 1..n {
            let ci = jump(&mut rng, c0, cn);
            let ri = jump(&mut rng, r0, rn);
            pairs.push((grid.c(ci), grid.r(ri)));
        }
    }
    AffineTuple::new(pairs).expect("grid points lie in range")
}

fn exhaustive_tuple(grid: &Grid, n: usize, mut idx: u128) -> AffineTuple {
    let cn = grid.c_count();
    let rn = grid.r_count();
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let ci = idx % cn;
        idx /= cn;
        let ri = idx % rn;
        idx /= rn;
        pairs.push((grid.c(ci + 1), grid.r(ri + 1)));
    }
    AffineTuple::new(pairs).expect("grid points lie in range")
}

/// Max `|Λ(A; σ_k)|` over sampled grid tuples in `𝔄_tr`, on the level-`k`
/// discretization grid with exponent `L` from the parameters.
pub fn sup_lambda_tr(
    set: &CantorSet,
    n: usize,
    k: usize,
    budget: usize,
    stream: &RngStream,
) -> Result<SupReport> {
    let grid = Grid::new(&set.params, k, set.params.l)?;
    sup_lambda_tr_on(set, n, k, budget, stream, &grid)
}

/// As [`sup_lambda_tr`] on an explicit grid.
pub fn sup_lambda_tr_on(
    set: &CantorSet,
    n: usize,
    k: usize,
    budget: usize,
    stream: &RngStream,
    grid: &Grid,
) -> Result<SupReport> {
    if budget == 0 {
        return Err(Error::EmptySample("budget is 0".into()));
    }
    let s = sigma(set, k)?;
    let p_k = set.count(k)?;
    let eps0 = set.params.epsilon0.clone();
    let total = (0..n).try_fold(1u128, |acc, _| acc.checked_mul(grid.pair_count()));
    let exhaustive = matches!(total, Some(t) if t <= EXHAUSTIVE_CAP);
    let (mode, count) = if exhaustive {
        (CoverageMode::Exhaustive, total.unwrap() as u64)
    } else {
        (CoverageMode::Stratified, budget as u64)
    };
    let samples: Vec<SampleRecord> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<SampleRecord> {
            let tuple = if exhaustive {
                exhaustive_tuple(grid, n, i as u128)
            } else {
                sample_tuple(grid, n, i, stream)
            };
            let (f_int, _) = count_f(n, k, &tuple, &set.params, None)?;
            let class = class_from_count(f_int, p_k, &eps0);
            let lambda = match class {
                TupleClass::Transverse => Some(lambda_with(&tuple, &s)?),
                TupleClass::Internal => None,
            };
            Ok(SampleRecord {
                index: i,
                tuple,
                f_int,
                class,
                lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(Q, usize)> = None;
    let mut tr = 0u64;
    for (j, r) in samples.iter().enumerate() {
        if let Some(l) = &r.lambda {
            tr += 1;
            let v = l.abs();
            if best.as_ref().is_none_or(|(b, _)| &v > b) {
                best = Some((v, j));
            }
        }
    }
    let Some((max_abs, at)) = best else {
        return Err(Error::EmptySample(format!(
            "all {count} sampled tuples are internal"
        )));
    };
    Ok(SupReport {
        max_abs,
        witness: samples[at].tuple.clone(),
        coverage: Coverage {
            mode,
            sampled: count,
            transverse: tr,
            internal: count - tr,
        },
        samples,
    })
}

/// `ln C₀(k, n, 1/2)`, unrounded.
pub fn c0_ln(params: &ConstructionParams, n: usize, k: usize) -> Result<f64> {
    let nf = n as f64;
    let ln_fact: f64 = (2..=n).map(|j| (j as f64).ln()).sum();
    let ln_b = to_f64(&params.b).ln();
    let ln2 = std::f64::consts::LN_2;
    let mut s = (nf + 2.0) * 2.0 * ln2 + ln_fact + ln_b + k as f64 * (nf + 1.5) * ln2;
    let mut ln_m = 0.0;
    for j in 1..=k {
        let ln_n = (params.n_checked(j)? as f64).ln();
        let e = to_f64(params.eps_checked(j)?);
        s += (-0.5 + e * (nf - 0.5)) * ln_n;
        ln_m += ln_n;
    }
    let ln_next = (params.n_checked(k + 1)? as f64).ln();
    s += nf * to_f64(params.eps_checked(k + 1)?) * ln_next;
    ln_m += ln_next;
    let inner = nf * 2.0 * ln2 + ln_fact + ln_b + 2.0 * params.l as f64 * nf * ln_m;
    s += 0.5 * inner.ln();
    Ok(s)
}

/// `C₀(k, n, 1/2)`, rounded up.
pub fn c0_constant(params: &ConstructionParams, n: usize, k: usize) -> Result<f64> {
    Ok(round_up(c0_ln(params, n, k)?.exp()))
}

/// `C₀` rounded down, for use as an acceptance threshold.
pub fn c0_threshold(params: &ConstructionParams, n: usize, k: usize) -> Result<f64> {
    Ok(round_down(c0_ln(params, n, k)?.exp()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub schema_version: u32,
    pub a: AffineTuple,
    pub n: usize,
    pub k: usize,
    #[serde(with = "crate::exact::serde_q")]
    pub lambda: Q,
    pub lambda_f64: f64,
    pub class: TupleClass,
    pub f_int: u64,
    #[serde(with = "crate::exact::serde_q")]
    pub trivial_bound: Q,
    pub c0: f64,
    pub within_trivial: bool,
    pub within_c0: bool,
}

pub fn correlation_report(
    a: &AffineTuple,
    set: &CantorSet,
    n: usize,
    k: usize,
) -> Result<CorrelationReport> {
    let s = sigma(set, k)?;
    correlation_report_with(a, set, n, k, &s)
}

/// As [`correlation_report`] with `σ_k` precomputed.
pub fn correlation_report_with(
    a: &AffineTuple,
    set: &CantorSet,
    n: usize,
    k: usize,
    s: &StepFunction,
) -> Result<CorrelationReport> {
    let lambda = lambda_with(a, s)?;
    let (f_int, _) = count_f(n, k, a, &set.params, None)?;
    let class = class_from_count(f_int, set.count(k)?, &set.params.epsilon0);
    let tb = trivial_bound(set, n, k)?;
    let c0 = c0_constant(&set.params, n, k)?;
    let within_trivial = lambda.abs() <= tb;
    let within_c0 = lambda.abs() <= Q::from_float(round_down(c0)).unwrap_or_else(|| qi(0));
    Ok(CorrelationReport {
        schema_version: crate::cantor::SCHEMA_VERSION,
        a: a.clone(),
        n,
        k,
        lambda_f64: to_f64(&lambda),
        lambda,
        class,
        f_int,
        trivial_bound: tb,
        c0,
        within_trivial,
        within_c0,
    })
}

impl CorrelationReport {
    /// CSV row `k, n, class, lambda, trivial_bound, c0`.
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.n.to_string(),
            match self.class {
                TupleClass::Internal => "internal".into(),
                TupleClass::Transverse => "transverse".into(),
            },
            fmt_q(&self.lambda),
            fmt_q(&self.trivial_bound),
            format!("{:e}", self.c0),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::{density, tests::fixture_a};
    use crate::exact::{q, qi};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn ident(n: usize) -> AffineTuple {
        AffineTuple::repeated(qi(0), qi(1), n).unwrap()
    }

    #[test]
    fn disjoint_copies_vanish() {
        let s = fixture_a();
        let a = AffineTuple::new(vec![(qi(0), qi(1)), (qi(-2), qi(1))]).unwrap();
        assert_eq!(lambda_sigma(&a, &s, 1).unwrap(), qi(0));
        assert_eq!(
            classify_a(&a, &s, 2, 1, &q(1, 2)).unwrap(),
            TupleClass::Transverse
        );
    }

    #[test]
    fn fixture_values() {
        let s = fixture_a();
        let phi = density(&s, 1).unwrap();
        assert_eq!(lambda_exact(&ident(2), &[&phi, &phi]).unwrap(), qi(2));
        assert_eq!(lambda_sigma(&ident(2), &s, 1).unwrap(), qi(2));
        assert_eq!(trivial_bound(&s, 2, 1).unwrap(), qi(32));
        assert_eq!(
            classify_a(&ident(2), &s, 2, 1, &q(1, 2)).unwrap(),
            TupleClass::Internal
        );
    }

    #[test]
    fn identical_copies_scale_with_r() {
        let s = fixture_a();
        let phi = density(&s, 2).unwrap();
        let a = AffineTuple::repeated(q(-1, 3), q(3, 2), 2).unwrap();
        // Λ = r ∫ f²
        let direct = q(3, 2) * phi.mul(&phi).unwrap().integral();
        assert_eq!(lambda_exact(&a, &[&phi, &phi]).unwrap(), direct);
    }

    #[test]
    fn threshold_is_strict() {
        // P = 16, ε₀ = 1/2: threshold 4
        assert_eq!(class_from_count(4, 16, &q(1, 2)), TupleClass::Internal);
        assert_eq!(class_from_count(3, 16, &q(1, 2)), TupleClass::Transverse);
        assert_eq!(class_from_count(0, 1, &q(1, 2)), TupleClass::Transverse);
    }

    #[test]
    fn trivial_bound_unit_mass() {
        let p = ConstructionParams::custom(vec![2, 2], vec![q(1, 2); 2], 2).unwrap();
        let s = CantorSet::from_positions(p, vec![vec![0, 1], vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(trivial_bound(&s, 2, 1).unwrap(), qi(8));
    }

    #[test]
    fn c0_matches_hand_evaluation() {
        let p = ConstructionParams::fixed_dimension(16, q(1, 4), 2).unwrap();
        // 4^4 · 2 · 10 · 2^{3.5} · 16^{-1/8} · 256^{1/2} · sqrt(ln(320 · 4096^8))
        let hand = 256.0
            * 2.0
            * 10.0
            * 2f64.powf(3.5)
            * 16f64.powf(-0.125)
            * 16.0
            * (320f64.ln() + 8.0 * 4096f64.ln()).sqrt();
        let got = c0_constant(&p, 2, 1).unwrap();
        assert!(((got - hand) / hand).abs() < 1e-9, "{got} vs {hand}");
        assert!((got / 5.573e6 - 1.0).abs() < 1e-3);
        let mut p2 = p.clone();
        p2.b = qi(20);
        assert!(c0_constant(&p2, 2, 1).unwrap() > got);
        assert!(c0_threshold(&p, 2, 1).unwrap() < got);
    }

    #[test]
    fn c0_custom_schedule() {
        // N = (16, 256) with ε = (1/2, 1/3)
        let p = ConstructionParams::custom(vec![16, 256], vec![q(1, 2), q(1, 3)], 1).unwrap();
        let hand = 256.0
            * 2.0
            * 10.0
            * 2f64.powf(3.5)
            * 16f64.powf(-0.5 + 0.5 * 1.5)
            * 256f64.powf(2.0 / 3.0)
            * (320f64.ln() + 8.0 * 4096f64.ln()).sqrt();
        let got = c0_constant(&p, 2, 1).unwrap();
        assert!(((got - hand) / hand).abs() < 1e-9);
    }

    #[test]
    fn c0_product_form_one_dimensional() {
        let p = ConstructionParams::one_dimensional(10, 2).unwrap();
        // N = (100, 1000, 10000), ε = (1/2, 1/3, 1/4), n = 2, k = 2
        let prod = 100f64.powf(-0.5 + 0.5 * 1.5) * 1000f64.powf(-0.5 + 1.5 / 3.0);
        let m3: f64 = 1e9;
        let log = (16.0 * 2.0 * 10.0f64).ln() + 8.0 * m3.ln();
        let hand =
            4f64.powi(4) * 2.0 * 10.0 * 2f64.powf(7.0) * prod * 10000f64.powf(0.5) * log.sqrt();
        let got = c0_constant(&p, 2, 2).unwrap();
        assert!(((got - hand) / hand).abs() < 1e-9, "{got} vs {hand}");
    }

    #[test]
    fn exhaustive_tiny_grid_matches_brute_force() {
        let p = ConstructionParams {
            l: 1,
            ..ConstructionParams::custom(vec![2, 2], vec![q(1, 2); 2], 2).unwrap()
        };
        let s = CantorSet::from_positions(p, vec![vec![0, 1], vec![0, 3]]).unwrap();
        let st = RngStream::new(1);
        let rep = sup_lambda_tr(&s, 2, 1, 1, &st).unwrap();
        assert_eq!(rep.coverage.mode, CoverageMode::Exhaustive);
        let grid = Grid::new(&s.params, 1, 1).unwrap();
        assert_eq!(rep.coverage.sampled, 4096);
        let sig = sigma(&s, 1).unwrap();
        let mut best = Q::zero();
        for c1 in 1..=grid.c_count() {
            for r1 in 1..=grid.r_count() {
                for c2 in 1..=grid.c_count() {
                    for r2 in 1..=grid.r_count() {
                        let a = AffineTuple::new(vec![
                            (grid.c(c1), grid.r(r1)),
                            (grid.c(c2), grid.r(r2)),
                        ])
                        .unwrap();
                        if classify_a(&a, &s, 2, 1, &q(1, 2)).unwrap() == TupleClass::Transverse {
                            let v = lambda_with(&a, &sig).unwrap().abs();
                            if v > best {
                                best = v;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(rep.max_abs, best);
        assert!(rep.max_abs <= trivial_bound(&s, 2, 1).unwrap());
    }

    #[test]
    fn budget_zero_is_rejected() {
        let st = RngStream::new(1);
        assert!(matches!(
            sup_lambda_tr(&fixture_a(), 2, 1, 0, &st),
            Err(Error::EmptySample(_))
        ));
    }

    fn mc_lambda(a: &AffineTuple, fns: &[&StepFunction], seed: u64) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for ((c, r), f) in a.pairs().iter().zip(fns) {
            let (s, e) = f.support().unwrap();
            lo = lo.max(to_f64(&(c + r * s)));
            hi = hi.min(to_f64(&(c + r * e)));
        }
        if lo >= hi {
            return (0.0, 0.0);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = 20_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let z = rng.gen_range(lo..hi);
            let mut p = 1.0;
            for ((c, r), f) in a.pairs().iter().zip(fns) {
                p *= f.eval_f64((z - to_f64(c)) / to_f64(r));
            }
            let v = p * (hi - lo);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / m as f64;
        let var = (s2 / m as f64 - mean * mean).max(0.0);
        (mean, (var / m as f64).sqrt())
    }

    #[test]
    fn monte_carlo_agrees() {
        let s = fixture_a();
        let sig = sigma(&s, 1).unwrap();
        let phi = density(&s, 2).unwrap();
        let mut hits = 0;
        let total = 40;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for t in 0..total {
            let pairs: Vec<(Q, Q)> = (0..2)
                .map(|_| {
                    (
                        q(-rng.gen_range(0..64), 64),
                        q(64 + rng.gen_range(0..64), 64),
                    )
                })
                .collect();
            let a = AffineTuple::new(vec![pairs[0].clone(), pairs[1].clone()]).unwrap();
            let fns = [&sig, &phi];
            let exact = to_f64(&lambda_exact(&a, &fns).unwrap());
            let (m, se) = mc_lambda(&a, &fns, t);
            if (m - exact).abs() <= 3.0 * se + 1e-12 {
                hits += 1;
            }
        }
        assert!(hits * 100 >= 90 * total, "{hits}/{total}");
    }

    fn small_q() -> impl Strategy<Value = Q> {
        (-64i64..=0).prop_map(|n| q(n, 16))
    }

    fn dil() -> impl Strategy<Value = Q> {
        (16i64..=32).prop_map(|n| q(n, 16))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn translation_invariance(c1 in small_q(), c2 in small_q(), r1 in dil(), r2 in dil(), t in -8i64..8) {
            let s = fixture_a();
            let sig = sigma(&s, 1).unwrap();
            let t = q(t, 7);
            let p1 = vec![(c1.clone(), r1.clone()), (c2.clone(), r2.clone())];
            let p2 = vec![(c1 + &t, r1), (c2 + &t, r2)];
            prop_assert_eq!(
                lambda_pairs(&p1, &[&sig, &sig]).unwrap(),
                lambda_pairs(&p2, &[&sig, &sig]).unwrap()
            );
        }

        #[test]
        fn joint_scaling(c1 in small_q(), c2 in small_q(), r1 in dil(), r2 in dil(), l in 1i64..9) {
            let s = fixture_a();
            let sig = sigma(&s, 1).unwrap();
            let phi = density(&s, 2).unwrap();
            let lam = q(l, 3);
            let p1 = vec![(c1.clone(), r1.clone()), (c2.clone(), r2.clone())];
            let p2 = vec![(&lam * c1, &lam * r1), (&lam * c2, &lam * r2)];
            prop_assert_eq!(
                lambda_pairs(&p1, &[&sig, &phi]).unwrap() * &lam,
                lambda_pairs(&p2, &[&sig, &phi]).unwrap()
            );
        }

        #[test]
        fn slot_symmetry(c1 in small_q(), c2 in small_q(), r1 in dil(), r2 in dil()) {
            let s = fixture_a();
            let sig = sigma(&s, 1).unwrap();
            let phi = density(&s, 1).unwrap();
            let p1 = vec![(c1.clone(), r1.clone()), (c2.clone(), r2.clone())];
            let p2 = vec![(c2, r2), (c1, r1)];
            prop_assert_eq!(
                lambda_pairs(&p1, &[&sig, &phi]).unwrap(),
                lambda_pairs(&p2, &[&phi, &sig]).unwrap()
            );
        }

        #[test]
        fn within_trivial_bound(c in proptest::collection::vec(small_q(), 4), r in proptest::collection::vec(dil(), 4)) {
            let s = fixture_a();
            let a = AffineTuple::new(c.into_iter().zip(r).collect()).unwrap();
            let v = lambda_sigma(&a, &s, 1).unwrap();
            prop_assert!(v.abs() <= trivial_bound(&s, 4, 1).unwrap());
        }
    }
}
