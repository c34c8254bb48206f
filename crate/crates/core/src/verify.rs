//! Re-checks a stored set: structure, normalization, every acceptance gate with the
//! same sampler streams as construction, and the weak-* defect.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::cantor::{defect_bound, density, sigma, weak_star_defect, CantorSet, SCHEMA_VERSION};
use crate::construct::{evaluate_level, GateReport};
use crate::error::Result;
use crate::exact::{fmt_q, to_f64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub level: usize,
    pub pass: bool,
    /// Informational checks are reported but do not decide the verdict.
    pub required: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub gates: Vec<GateReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .filter(|c| c.required && !c.pass)
            .map(|c| format!("{} at level {}: {}", c.name, c.level, c.detail))
            .collect();
        out.extend(
            self.gates
                .iter()
                .filter(|g| !g.pass)
                .map(|g| format!("gate {:?} at level {}: {}", g.gate, g.level, g.detail)),
        );
        out
    }
}

fn check(name: &str, level: usize, pass: bool, required: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        level,
        pass,
        required,
        detail,
    }
}

/// Runs every check. Nesting and position bounds are enforced when the set is
/// loaded, so a set that reaches this point is structurally valid.
pub fn verify(set: &CantorSet) -> Result<VerifyReport> {
    let depth = set.depth();
    let mut checks = Vec::new();
    let mut gates = Vec::new();
    let mut prev = None;
    for k in 1..=depth {
        let l = set.level(k)?;
        if l.count() == 0 {
            checks.push(check(
                "nonempty",
                k,
                false,
                true,
                "no selected intervals".into(),
            ));
            continue;
        }
        let m = l.measure();
        if let Some(p) = &prev {
            checks.push(check(
                "measure nonincreasing",
                k,
                &m <= p,
                true,
                format!("|S_k| = {}", fmt_q(&m)),
            ));
        }
        prev = Some(m);
        let i = density(set, k)?.integral();
        checks.push(check(
            "density integral",
            k,
            i.is_one(),
            true,
            format!("= {}", fmt_q(&i)),
        ));
        if k < depth && set.level(k + 1)?.count() > 0 {
            let s = sigma(set, k)?.integral();
            checks.push(check(
                "difference integral",
                k,
                s.is_zero(),
                true,
                format!("= {}", fmt_q(&s)),
            ));
        }
    }
    let degenerate = !set.degenerate_levels().is_empty();
    if !degenerate {
        for k in 1..=depth {
            gates.extend(evaluate_level(&set.truncated(k), k, 0)?);
        }
        for k in 1..depth {
            let d = weak_star_defect(set, k, depth)?;
            let bound = defect_bound(&set.params.b, &set.params.gamma, k);
            checks.push(check(
                "weak-* defect",
                k,
                to_f64(&d) <= bound,
                false,
                format!("{:.6e} against {:.6e}", to_f64(&d), bound),
            ));
        }
    }
    let pass = checks.iter().all(|c| c.pass || !c.required) && gates.iter().all(|g| g.pass);
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        pass,
        checks,
        gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::ConstructionParams;
    use crate::construct::{construct, Gate};
    use crate::exact::q;

    #[test]
    fn constructed_set_verifies() {
        let p = ConstructionParams::fixed_dimension(16, q(1, 4), 2)
            .unwrap()
            .with_seed(3);
        let (s, _) = construct(&p).unwrap();
        let r = verify(&s).unwrap();
        assert!(r.pass, "{:?}", r.failures());
        assert!(r.gates.iter().any(|g| g.gate == Gate::C));
    }

    #[test]
    fn count_violation_is_reported() {
        // Q_1 = 4, so 16 cells breaks the upper count bound
        let p = ConstructionParams::custom(vec![16, 16], vec![q(1, 2); 2], 2).unwrap();
        let s = CantorSet::from_positions(p, vec![(0..16).collect(), vec![0, 17, 34, 51]]).unwrap();
        let r = verify(&s).unwrap();
        assert!(!r.pass);
        assert!(r
            .gates
            .iter()
            .any(|g| g.gate == Gate::A && g.level == 1 && !g.pass));
    }

    #[test]
    fn empty_level_fails() {
        let p = ConstructionParams::custom(vec![4, 4], vec![q(1, 2); 2], 2).unwrap();
        let s = CantorSet::from_positions(p, vec![vec![1, 2], vec![]]).unwrap();
        let r = verify(&s).unwrap();
        assert!(!r.pass);
        assert!(r.gates.is_empty());
    }
}
