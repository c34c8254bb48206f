//! Random layer-by-layer construction with rejection against the four acceptance
//! gates, plus the concentration bounds behind them.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cantor::{CantorLevel, CantorSet, ConstructionParams, SCHEMA_VERSION};
use crate::correlation::{c0_threshold, sup_lambda_tr, CoverageMode};
use crate::error::{Error, Result};
use crate::exact::{decide, fmt_q, max_q, qu, round_down, round_up, to_f64, Radical, Q};
use crate::rng::RngStream;

/// Path entry of the correlation-gate sampler, shared by every retry of a level.
pub const GATE_C_TAG: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    A,
    B,
    C,
    D,
    Boundedness,
}

/// A named value, exact when available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<String>,
    pub value: f64,
}

impl Quantity {
    pub fn exact(name: &str, x: &Q) -> Self {
        Quantity {
            name: name.into(),
            exact: Some(fmt_q(x)),
            value: to_f64(x),
        }
    }

    pub fn float(name: &str, value: f64) -> Self {
        Quantity {
            name: name.into(),
            exact: None,
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub schema_version: u32,
    pub level: usize,
    pub gate: Gate,
    pub retry: u32,
    pub measured: Vec<Quantity>,
    pub thresholds: Vec<Quantity>,
    pub pass: bool,
    pub detail: String,
}

impl GateReport {
    fn new(level: usize, gate: Gate, retry: u32) -> Self {
        GateReport {
            schema_version: SCHEMA_VERSION,
            level,
            gate,
            retry,
            measured: Vec::new(),
            thresholds: Vec::new(),
            pass: false,
            detail: String::new(),
        }
    }
}

/// Positions of the cells selected at level `k − 1`, with the root cell at level 0.
fn parent_positions(set: &CantorSet, k: usize) -> Result<Vec<u64>> {
    if k == 1 {
        Ok(vec![0])
    } else {
        Ok(set.level(k - 1)?.positions().to_vec())
    }
}

/// Draws level `k` below the last built level with success probability `p`.
pub fn bernoulli_layer_p<R: Rng>(
    parent: &CantorSet,
    k: usize,
    p: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if parent.depth() + 1 != k {
        return Err(Error::LevelOutOfRange(format!(
            "set has {} levels, cannot draw level {k}",
            parent.depth()
        )));
    }
    let n = parent.params.n_checked(k)?;
    let mut out = Vec::new();
    for g in parent_positions(parent, k)? {
        for c in 0..n {
            if rng.gen::<f64>() < p {
                out.push(g * n + c);
            }
        }
    }
    Ok(out)
}

/// Draws level `k` with `p_k = N_k^{−ε_k}`.
pub fn bernoulli_layer<R: Rng>(parent: &CantorSet, k: usize, rng: &mut R) -> Result<Vec<u64>> {
    let p = parent.params.p(k)?;
    bernoulli_layer_p(parent, k, p, rng)
}

/// `∏_{j ≤ k} N_j^{1−ε_j}` as an exact radical.
fn product_radical(params: &ConstructionParams, from: usize, to: usize) -> Result<Radical> {
    let mut r = Radical::rational(Q::one());
    for j in from..=to {
        let e = Q::one() - params.eps_checked(j)?;
        r = r.mul(&Radical::power(params.n_checked(j)?, &e));
    }
    Ok(r)
}

/// Gates (a) and (b) at level `k`.
pub fn gate_counts(set: &CantorSet, k: usize) -> Result<(GateReport, GateReport)> {
    gate_counts_at(set, k, 0)
}

fn gate_counts_at(set: &CantorSet, k: usize, retry: u32) -> Result<(GateReport, GateReport)> {
    let params = &set.params;
    let p = qu(set.count(k)?);
    let two_k = Q::from_integer(BigInt::one() << k);
    let prod = product_radical(params, 1, k)?;

    let mut a = GateReport::new(k, Gate::A, retry);
    let lower_ok = prod.cmp_q(&(&p * &two_k)) != std::cmp::Ordering::Greater;
    let upper_ok = prod.cmp_q(&(&p / &two_k)) != std::cmp::Ordering::Less;
    let pf = prod.to_f64();
    a.measured.push(Quantity::exact("P_k", &p));
    a.thresholds
        .push(Quantity::float("lower", pf / to_f64(&two_k)));
    a.thresholds
        .push(Quantity::float("upper", pf * to_f64(&two_k)));
    a.pass = lower_ok && upper_ok;
    a.detail = format!("2^-k R ≤ P_k ≤ 2^k R with R = {pf:.6}, decided exactly");

    let mut b = GateReport::new(k, Gate::B, retry);
    let prev = qu(set.count(k - 1)?);
    let q_k =
        Radical::power(params.n_checked(k)?, &(Q::one() - params.eps_checked(k)?)).scale(&prev);
    let bb = &params.b * &params.b;
    // (P − Q)² ≤ B² Q on a bracket of Q
    let pass = decide(&q_k, |lo, hi| {
        let d_lo = (&p - lo).abs();
        let d_hi = (&p - hi).abs();
        let dmax = max_q(d_lo.clone(), d_hi.clone());
        let dmin = if &p >= lo && &p <= hi {
            Q::zero()
        } else if d_lo < d_hi {
            d_lo
        } else {
            d_hi
        };
        if &dmax * &dmax <= &bb * lo {
            Some(true)
        } else if &dmin * &dmin > &bb * hi {
            Some(false)
        } else {
            None
        }
    });
    let qf = q_k.to_f64();
    b.measured
        .push(Quantity::float("|P_k - Q_k|", (to_f64(&p) - qf).abs()));
    b.thresholds.push(Quantity::float(
        "B sqrt(Q_k)",
        to_f64(&params.b) * qf.sqrt(),
    ));
    b.pass = pass;
    b.detail = format!("Q_k = {qf:.6}, decided on rational brackets");
    Ok((a, b))
}

/// Gate (d) for the transition into level `k`.
pub fn gate_deviation(set: &CantorSet, k: usize) -> Result<GateReport> {
    gate_deviation_at(set, k, 0)
}

fn gate_deviation_at(set: &CantorSet, k: usize, retry: u32) -> Result<GateReport> {
    let params = &set.params;
    let n = params.n_checked(k)?;
    let parents = parent_positions(set, k)?;
    let children = set.level(k)?.positions();
    let np = Radical::power(n, &(Q::one() - params.eps_checked(k)?));
    let (lo, hi) = np.bracket(128);
    let mut worst = Q::zero();
    let mut worst_f = 0.0f64;
    let npf = np.to_f64();
    let mut at = 0usize;
    for &g in &parents {
        let start = at;
        while at < children.len() && children[at] / n == g {
            at += 1;
        }
        let c = qu((at - start) as u64);
        let dev = max_q((&c - &lo).abs(), (&c - &hi).abs());
        worst_f = worst_f.max(((at - start) as f64 - npf).abs());
        if dev > worst {
            worst = dev;
        }
    }
    let p_parent = set.count(k - 1)? as f64;
    let rhs = (8.0 * npf * (4.0 * to_f64(&params.b) * p_parent).ln()).sqrt();
    let rhs_down = round_down(rhs);
    let mut r = GateReport::new(k, Gate::D, retry);
    r.measured
        .push(Quantity::float("sup |sum (X - p)|", worst_f));
    r.measured.push(Quantity::exact("upper bracket", &worst));
    r.thresholds.push(Quantity::float("bound", rhs_down));
    r.pass = Q::from_float(rhs_down).is_some_and(|t| worst <= t);
    r.detail = format!("{} parents, bound rounded down", parents.len());
    Ok(r)
}

/// Gate (c) at index `k`, which needs levels `k` and `k + 1`.
pub fn gate_correlation(set: &CantorSet, k: usize, stream: &RngStream) -> Result<GateReport> {
    gate_correlation_at(set, k, stream, 0)
}

fn gate_correlation_at(
    set: &CantorSet,
    k: usize,
    stream: &RngStream,
    retry: u32,
) -> Result<GateReport> {
    let params = &set.params;
    let n = params.gate_n;
    let budget = params.gate_budget;
    if budget == 0 {
        return Err(Error::EmptySample("gate budget is 0".into()));
    }
    let threshold = c0_threshold(params, n, k)?;
    let mut r = GateReport::new(k + 1, Gate::C, retry);
    r.thresholds
        .push(Quantity::float("C0 (rounded down)", threshold));
    match sup_lambda_tr(set, n, k, budget, stream) {
        Ok(rep) => {
            r.measured
                .push(Quantity::exact("max |Lambda|", &rep.max_abs));
            r.pass = Q::from_float(threshold).is_some_and(|t| rep.max_abs <= t);
            let mode = match rep.coverage.mode {
                CoverageMode::Exhaustive => "exhaustive",
                CoverageMode::Stratified => "stratified",
            };
            r.detail = format!(
                "n = {n}, index k = {k}, {mode} coverage, {} sampled, {} transverse, witness {}",
                rep.coverage.sampled,
                rep.coverage.transverse,
                serde_json::to_string(&rep.witness).unwrap_or_default()
            );
        }
        Err(Error::EmptySample(msg)) => {
            r.measured.push(Quantity::float("max |Lambda|", 0.0));
            r.pass = true;
            r.detail =
                format!("no transverse tuple in the sample ({msg}); sup over an empty class");
        }
        Err(e) => return Err(e),
    }
    Ok(r)
}

/// Every gate for the newly drawn level `k`: (a), (b), (d), and (c) at index `k − 1`
/// once the cheaper gates pass.
pub fn evaluate_level(set: &CantorSet, k: usize, retry: u32) -> Result<Vec<GateReport>> {
    let (a, b) = gate_counts_at(set, k, retry)?;
    let d = gate_deviation_at(set, k, retry)?;
    let ok = a.pass && b.pass && d.pass;
    let mut out = vec![a, b, d];
    if ok && k >= 2 {
        let stream = RngStream::new(set.params.seed)
            .child(k as u64)
            .child(GATE_C_TAG);
        out.push(gate_correlation_at(set, k - 1, &stream, retry)?);
    }
    Ok(out)
}

/// Builds levels `1..=K`, redrawing each level until every gate passes. On failure
/// the error carries the transcript up to and including the last attempt.
pub fn construct(params: &ConstructionParams) -> Result<(CantorSet, Vec<GateReport>)> {
    params.validate()?;
    let root = RngStream::new(params.seed);
    let mut set = CantorSet::empty(params.clone());
    let mut transcript = Vec::new();
    for k in 1..=params.depth {
        let mut accepted = None;
        for retry in 0..params.max_retries {
            let mut rng = root.child(k as u64).child(retry as u64).rng();
            let pos = bernoulli_layer(&set, k, &mut rng)?;
            let level = CantorLevel::new(k, params.n_checked(k)?, params.m(k)?, pos)?;
            let mut cand = set.clone();
            cand.push_level(level);
            let reports = evaluate_level(&cand, k, retry)?;
            let ok = reports.iter().all(|r| r.pass);
            transcript.extend(reports);
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        match accepted {
            Some(c) => set = c,
            None => {
                return Err(Error::ConstructionFailure {
                    level: k,
                    attempts: params.max_retries + 1,
                    transcript,
                })
            }
        }
    }
    Ok((set, transcript))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    /// Formula value before clamping.
    pub raw: f64,
    /// Clamped to `[0, 1]`.
    pub value: f64,
    /// Whether the hypothesis of the inequality holds.
    pub applicable: bool,
}

/// `4 exp(−m²λ²/(8σ²))`, applicable when `σ² ≥ 6mλ`.
pub fn bernstein_bound(m: u64, sigma2: f64, lambda: f64) -> Result<ProbabilityBound> {
    if m == 0 || !(sigma2 > 0.0) {
        return Err(Error::Domain("m and sigma² must be positive".into()));
    }
    let mf = m as f64;
    let raw = 4.0 * (-(mf * mf * lambda * lambda) / (8.0 * sigma2)).exp();
    Ok(ProbabilityBound {
        raw,
        value: raw.clamp(0.0, 1.0),
        applicable: sigma2 >= 6.0 * mf * lambda,
    })
}

/// `2 exp(−λ²/(2 Σ c_k²))`.
pub fn azuma_bound(c: &[f64], lambda: f64) -> Result<ProbabilityBound> {
    if c.is_empty() || c.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("c must be nonempty and positive".into()));
    }
    let s: f64 = c.iter().map(|x| x * x).sum();
    let raw = 2.0 * (-(lambda * lambda) / (2.0 * s)).exp();
    Ok(ProbabilityBound {
        raw,
        value: raw.clamp(0.0, 1.0),
        applicable: true,
    })
}

/// `max_k 2^{(5+γ)k} ln(M_k)/N_{k+1}^{1−ε_{k+1}}` against `1/32`, over the levels whose
/// successor is scheduled.
pub fn boundedness_check(params: &ConstructionParams) -> Result<GateReport> {
    let gamma = to_f64(&params.gamma);
    let mut r = GateReport::new(0, Gate::Boundedness, 0);
    let mut worst = 0.0f64;
    let top = params
        .depth
        .min(params.level_counts.len().saturating_sub(1));
    if top == 0 {
        return Err(Error::InsufficientDepth(
            "schedule must reach level 2".into(),
        ));
    }
    let mut ln_m = 0.0;
    for k in 1..=top {
        ln_m += (params.n_checked(k)? as f64).ln();
        let next = params.n_checked(k + 1)? as f64;
        let e = to_f64(params.eps_checked(k + 1)?);
        let v = round_up(
            ((5.0 + gamma) * k as f64 * std::f64::consts::LN_2).exp() * ln_m / next.powf(1.0 - e),
        );
        r.measured.push(Quantity::float(&format!("k = {k}"), v));
        worst = worst.max(v);
    }
    r.thresholds.push(Quantity::float("bound", 1.0 / 32.0));
    r.pass = worst <= 1.0 / 32.0;
    r.detail = format!("max over k ≤ {top} is {worst:.6e}, rounded up");
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::tests::fixture_a;
    use crate::exact::{q, qi};
    use rand::SeedableRng;

    fn zero_p() -> ConstructionParams {
        ConstructionParams::custom(vec![16, 16], vec![q(1, 2); 2], 2).unwrap()
    }

    #[test]
    fn layer_extremes() {
        let p = zero_p();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let root = CantorSet::empty(p.clone());
        assert_eq!(
            bernoulli_layer_p(&root, 1, 1.0, &mut rng).unwrap().len(),
            16
        );
        assert!(bernoulli_layer_p(&root, 1, 0.0, &mut rng)
            .unwrap()
            .is_empty());
        let s = CantorSet::from_positions(p, vec![vec![3, 7]]).unwrap();
        let kids = bernoulli_layer_p(&s, 2, 0.6, &mut rng).unwrap();
        assert!(kids.iter().all(|&g| g / 16 == 3 || g / 16 == 7));
    }

    #[test]
    fn binomial_mean() {
        let p = ConstructionParams::custom(vec![16], vec![q(1, 2)], 1).unwrap();
        let root = CantorSet::empty(p);
        let st = RngStream::new(9);
        let trials = 10_000;
        let total: usize = (0..trials)
            .map(|t| {
                let mut rng = st.child(t).rng();
                bernoulli_layer_p(&root, 1, 0.25, &mut rng).unwrap().len()
            })
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 4.0).abs() < 0.1, "{mean}");
    }

    fn with_p1(count: u64) -> CantorSet {
        let p = ConstructionParams::custom(vec![16, 16], vec![q(1, 2); 2], 2).unwrap();
        CantorSet::from_positions(p, vec![(0..count).collect()]).unwrap()
    }

    #[test]
    fn count_gates_level_one() {
        // bounds [2, 8], Q_1 = 4, B sqrt(Q_1) = 20
        let (a, b) = gate_counts(&with_p1(4), 1).unwrap();
        assert!(a.pass && b.pass);
        assert!((a.thresholds[0].value - 2.0).abs() < 1e-12);
        assert!((a.thresholds[1].value - 8.0).abs() < 1e-12);
        assert!((b.thresholds[0].value - 20.0).abs() < 1e-12);
        assert!(gate_counts(&with_p1(2), 1).unwrap().0.pass);
        assert!(gate_counts(&with_p1(8), 1).unwrap().0.pass);
        assert!(!gate_counts(&with_p1(1), 1).unwrap().0.pass);
        assert!(!gate_counts(&with_p1(9), 1).unwrap().0.pass);
        assert!(gate_counts(&with_p1(16), 1).unwrap().1.pass);
    }

    #[test]
    fn deviation_gate_bound_value() {
        let p = ConstructionParams::custom(vec![4, 16], vec![q(1, 2); 2], 2).unwrap();
        let s = CantorSet::from_positions(
            p,
            vec![
                vec![0, 1, 2, 3],
                vec![0, 1, 2, 3, 16, 17, 18, 19, 32, 33, 34, 35, 48, 49, 50, 51],
            ],
        )
        .unwrap();
        let r = gate_deviation(&s, 2).unwrap();
        let expect = (8.0f64 * 4.0 * 160f64.ln()).sqrt();
        assert!((r.thresholds[0].value - 12.74).abs() < 0.01);
        assert!((r.thresholds[0].value - expect).abs() < 1e-9);
        assert!(r.pass);
        assert_eq!(r.measured[0].value, 0.0);
    }

    #[test]
    fn deviation_gate_on_fixture() {
        let s = fixture_a();
        let r = gate_deviation(&s, 2).unwrap();
        assert_eq!(r.measured[0].value, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn bernstein_examples() {
        let b = bernstein_bound(1, 1.0, 10.0).unwrap();
        assert!((b.raw - 1.49e-5).abs() < 0.01e-5);
        assert!(!b.applicable);
        let z = bernstein_bound(4, 1.0, 0.0).unwrap();
        assert_eq!((z.raw, z.value), (4.0, 1.0));
        assert!(z.applicable);
        assert!(bernstein_bound(0, 1.0, 1.0).is_err());
        assert!(bernstein_bound(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn bernstein_holds_empirically() {
        let st = RngStream::new(5);
        let trials = 10_000u64;
        let (n, p) = (16u64, 0.25);
        let sums: Vec<f64> = (0..trials)
            .map(|t| {
                let mut rng = st.child(t).rng();
                (0..n)
                    .map(|_| if rng.gen::<f64>() < p { 1.0 - p } else { -p })
                    .sum()
            })
            .collect();
        let sigma2 = n as f64 * p * (1.0 - p);
        for lam in [0.005, 0.01, 0.02, 0.03] {
            let b = bernstein_bound(n, sigma2, lam).unwrap();
            assert!(b.applicable);
            let frac =
                sums.iter().filter(|s| s.abs() >= n as f64 * lam).count() as f64 / trials as f64;
            assert!(frac <= b.value, "λ = {lam}: {frac} > {}", b.value);
        }
    }

    #[test]
    fn azuma_examples() {
        assert_eq!(azuma_bound(&[1.0, 1.0], 0.0).unwrap().value, 1.0);
        let v = azuma_bound(&[1.0, 1.0], 2.0).unwrap().value;
        assert!((v - 0.7358).abs() < 1e-4);
        assert!(azuma_bound(&[], 1.0).is_err());
    }

    #[test]
    fn azuma_usage_in_correlation_estimate() {
        // c_j = 4δ_k over P_k steps with λ = 4δ_k sqrt(2 P_k) sqrt(ln X), X = 4^n n! B δ_{k+1}^{-2Ln}
        let (n, b, l) = (2u32, 10.0f64, 1u32);
        let (dk, dk1, pk) = (1.0f64 / 16.0, 1.0f64 / 64.0, 6usize);
        let x = 4f64.powi(n as i32) * 2.0 * b * dk1.powi(-((2 * l * n) as i32));
        let lam = 4.0 * dk * (2.0 * pk as f64).sqrt() * x.ln().sqrt();
        let bound = azuma_bound(&vec![4.0 * dk; pk], lam).unwrap().raw;
        let target = dk1.powi((2 * l * n) as i32) / (4f64.powi(n as i32 - 1) * 2.0 * b);
        assert!(bound <= target * (1.0 + 1e-12));
    }

    #[test]
    fn boundedness_examples() {
        let p = ConstructionParams::one_dimensional(1000, 2).unwrap();
        assert!(boundedness_check(&p).unwrap().pass);
        let two = ConstructionParams::custom(vec![2; 4], vec![q(1, 2); 4], 3).unwrap();
        let r = boundedness_check(&two).unwrap();
        assert!(!r.pass);
        assert!(r.measured[0].value > 1.0 / 32.0);
    }

    #[test]
    fn retries_zero_fails() {
        let mut p = ConstructionParams::fixed_dimension(16, q(1, 4), 2).unwrap();
        p.max_retries = 0;
        assert!(matches!(
            construct(&p),
            Err(Error::ConstructionFailure {
                level: 1,
                attempts: 1,
                ..
            })
        ));
    }

    #[test]
    fn construction_is_deterministic() {
        let p = ConstructionParams::fixed_dimension(16, q(1, 4), 2)
            .unwrap()
            .with_seed(7);
        let (a, ta) = construct(&p).unwrap();
        let (b, tb) = construct(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.depth(), 2);
        let _ = qi(0);
    }
}
