//! Finite-depth dimension proxies: the two counting quotients, a box count, and the
//! closed forms of the quotients in the two parameter regimes.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::cantor::{CantorSet, Regime};
use crate::error::{Error, Result};
use crate::exact::{qi, to_f64, Q};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimBounds {
    /// `ln P_k / ln M_k` for `k = 1..=K`.
    pub upper_sequence: Vec<f64>,
    /// `ln(P_k/N_k) / ln M_{k−1}` for `k = 2..=K`.
    pub lower_sequence: Vec<f64>,
    pub upper: f64,
    pub lower: f64,
}

/// Minima of the two quotient sequences over the available levels.
pub fn dim_bounds(set: &CantorSet) -> Result<DimBounds> {
    let depth = set.depth();
    if depth < 2 {
        return Err(Error::InsufficientDepth(format!(
            "need at least 2 levels, have {depth}"
        )));
    }
    let mut up = Vec::with_capacity(depth);
    let mut lo = Vec::with_capacity(depth - 1);
    let mut ln_m = 0.0;
    for k in 1..=depth {
        let p = set.count(k)?;
        if p == 0 {
            return Err(Error::DegenerateMeasure(k));
        }
        let ln_n = (set.params.n_checked(k)? as f64).ln();
        let prev = ln_m;
        ln_m += ln_n;
        up.push((p as f64).ln() / ln_m);
        if k >= 2 {
            lo.push(((p as f64).ln() - ln_n) / prev);
        }
    }
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DimBounds {
        upper: min(&up),
        lower: min(&lo),
        upper_sequence: up,
        lower_sequence: lo,
    })
}

/// Number of level-`k` cells holding a level-`K` cell.
pub fn box_count(set: &CantorSet, k: usize) -> Result<u64> {
    let top = set.level(set.depth())?;
    set.level(k)?;
    let ratio = set.params.m(set.depth())? / set.params.m(k)?;
    let mut count = 0u64;
    let mut last = None;
    for &g in top.positions() {
        let parent = g / ratio;
        if last != Some(parent) {
            count += 1;
            last = Some(parent);
        }
    }
    Ok(count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxReport {
    /// `(k, M_k, count)` per level.
    pub counts: Vec<(usize, u64, u64)>,
    /// Least-squares slope of `ln count` against `ln M_k`.
    pub slope: f64,
}

pub fn box_slope(set: &CantorSet) -> Result<BoxReport> {
    let depth = set.depth();
    if depth < 2 {
        return Err(Error::InsufficientDepth(
            "box slope needs two levels".into(),
        ));
    }
    let mut counts = Vec::with_capacity(depth);
    for k in 1..=depth {
        counts.push((k, set.params.m(k)?, box_count(set, k)?));
    }
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .filter(|c| c.2 > 0)
        .map(|&(_, m, c)| ((m as f64).ln(), (c as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(BoxReport {
        counts,
        slope: sxy / sxx,
    })
}

/// Polynomial in `k` with rational coefficients, lowest degree first.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<Q>);

impl Poly {
    fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|c| !c.is_zero())
    }

    pub fn eval(&self, k: &Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * k + c)
    }

    fn coef(&self, d: usize) -> Q {
        self.0.get(d).cloned().unwrap_or_else(Q::zero)
    }
}

/// `(A(k) ln N + B(k) ln 2) / (D(k) ln N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientForm {
    pub num_ln_base: Poly,
    pub num_ln2: Poly,
    pub den_ln_base: Poly,
}

impl QuotientForm {
    pub fn eval(&self, k: u64, base: u64) -> f64 {
        let kq = Q::from_integer(k.into());
        let ln_n = (base as f64).ln();
        let num = to_f64(&self.num_ln_base.eval(&kq)) * ln_n
            + to_f64(&self.num_ln2.eval(&kq)) * std::f64::consts::LN_2;
        num / (to_f64(&self.den_ln_base.eval(&kq)) * ln_n)
    }

    /// Exact limit as `k → ∞`, read off the leading coefficients.
    pub fn limit(&self) -> Result<Q> {
        let d = self
            .den_ln_base
            .degree()
            .ok_or_else(|| Error::Domain("zero denominator".into()))?;
        if self.num_ln_base.degree().is_some_and(|n| n > d)
            || self.num_ln2.degree().is_some_and(|n| n >= d)
        {
            return Err(Error::Domain(
                "quotient has no finite rational limit".into(),
            ));
        }
        Ok(self.num_ln_base.coef(d) / self.den_ln_base.coef(d))
    }
}

/// Closed forms of the two quotients with `P_k` at either end of the count-gate window
/// `2^{∓k} ∏ N_j^{1−ε_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicQuotients {
    pub upper_hi: QuotientForm,
    pub upper_lo: QuotientForm,
    pub lower_hi: QuotientForm,
    pub lower_lo: QuotientForm,
}

/// `N_j = N^{a j + b}` and `N_j^{1−ε_j} = N^{u j + w}`.
fn forms(a: Q, b: Q, u: Q, w: Q) -> SymbolicQuotients {
    let half = Q::new(1.into(), 2.into());
    // Σ_{j≤k} (u j + w) = (u/2) k² + (u/2 + w) k
    let sum = Poly(vec![Q::zero(), &u * &half + &w, &u * &half]);
    // ln M_k / ln N = (a/2) k² + (a/2 + b) k
    let m_k = Poly(vec![Q::zero(), &a * &half + &b, &a * &half]);
    // ln M_{k−1} / ln N = (a/2) k² + (b − a/2) k − b
    let m_prev = Poly(vec![-b.clone(), &b - &a * &half, &a * &half]);
    // Σ − (a k + b)
    let lower_num = Poly(vec![-b.clone(), sum.coef(1) - &a, sum.coef(2)]);
    let lin = |s: i64| Poly(vec![Q::zero(), qi(s)]);
    SymbolicQuotients {
        upper_hi: QuotientForm {
            num_ln_base: sum.clone(),
            num_ln2: lin(1),
            den_ln_base: m_k.clone(),
        },
        upper_lo: QuotientForm {
            num_ln_base: sum,
            num_ln2: lin(-1),
            den_ln_base: m_k,
        },
        lower_hi: QuotientForm {
            num_ln_base: lower_num.clone(),
            num_ln2: lin(1),
            den_ln_base: m_prev.clone(),
        },
        lower_lo: QuotientForm {
            num_ln_base: lower_num,
            num_ln2: lin(-1),
            den_ln_base: m_prev,
        },
    }
}

/// Closed forms for the one-dimensional regime (`ε` ignored) or the fixed-dimension
/// regime with the given `ε`.
pub fn symbolic_quotients(regime: Regime, epsilon: Option<&Q>) -> Result<SymbolicQuotients> {
    match regime {
        // N_j = N^{j+1}, N_j^{1−ε_j} = N^j
        Regime::OneDimensional => Ok(forms(Q::one(), Q::one(), Q::one(), Q::zero())),
        // N_j = N^j, N_j^{1−ε} = N^{(1−ε) j}
        Regime::FixedDimension => {
            let e = epsilon.ok_or_else(|| Error::Params("ε required".into()))?;
            Ok(forms(Q::one(), Q::zero(), Q::one() - e, Q::zero()))
        }
        Regime::Custom => Err(Error::Params("no closed form for custom schedules".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::{tests::fixture_a, ConstructionParams};
    use crate::exact::q;

    #[test]
    fn fixture_quotients() {
        let d = dim_bounds(&fixture_a()).unwrap();
        assert!((d.upper_sequence[1] - 0.5).abs() < 1e-12);
        assert!((d.upper_sequence[0] - 0.5).abs() < 1e-12);
        // ln(4/4)/ln 4
        assert!(d.lower_sequence[0].abs() < 1e-12);
    }

    #[test]
    fn shallow_set_rejected() {
        let s = fixture_a();
        let p = s.params.clone();
        let one = CantorSet::from_positions(p, vec![vec![1, 3]]).unwrap();
        assert!(matches!(dim_bounds(&one), Err(Error::InsufficientDepth(_))));
    }

    #[test]
    fn box_counts() {
        let s = fixture_a();
        assert_eq!(box_count(&s, 1).unwrap(), 2);
        assert_eq!(box_count(&s, 2).unwrap(), 4);
        let r = box_slope(&s).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regime_limits() {
        let one = symbolic_quotients(Regime::OneDimensional, None).unwrap();
        for f in [&one.upper_hi, &one.upper_lo, &one.lower_hi, &one.lower_lo] {
            assert_eq!(f.limit().unwrap(), qi(1));
        }
        let e = q(1, 4);
        let fixed = symbolic_quotients(Regime::FixedDimension, Some(&e)).unwrap();
        for f in [
            &fixed.upper_hi,
            &fixed.upper_lo,
            &fixed.lower_hi,
            &fixed.lower_lo,
        ] {
            assert_eq!(f.limit().unwrap(), q(3, 4));
        }
    }

    #[test]
    fn closed_forms_match_direct_evaluation() {
        let p = ConstructionParams::fixed_dimension(16, q(1, 4), 4).unwrap();
        let f = symbolic_quotients(Regime::FixedDimension, Some(&q(1, 4))).unwrap();
        let mut ln_m = 0.0;
        let mut ln_r = 0.0;
        for k in 1..=4usize {
            let n = p.n(k).unwrap() as f64;
            let prev = ln_m;
            ln_m += n.ln();
            ln_r += 0.75 * n.ln();
            let up = (ln_r + k as f64 * 2f64.ln()) / ln_m;
            assert!((f.upper_hi.eval(k as u64, 16) - up).abs() < 1e-12);
            if k >= 2 {
                let lo = (ln_r - k as f64 * 2f64.ln() - n.ln()) / prev;
                assert!((f.lower_lo.eval(k as u64, 16) - lo).abs() < 1e-12);
            }
        }
        let p1 = ConstructionParams::one_dimensional(10, 4).unwrap();
        let g = symbolic_quotients(Regime::OneDimensional, None).unwrap();
        let (mut lm, mut lr) = (0.0, 0.0);
        for k in 1..=4usize {
            let n = p1.n(k).unwrap() as f64;
            lm += n.ln();
            lr += (1.0 - to_f64(p1.eps(k).unwrap())) * n.ln();
            assert!(
                (g.upper_lo.eval(k as u64, 10) - (lr - k as f64 * 2f64.ln()) / lm).abs() < 1e-12
            );
        }
    }
}
