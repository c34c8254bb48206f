//! Run configuration: one TOML file with a section per command.

use serde::{Deserialize, Serialize};
use sparse_cantor::exact::{parse_q, serde_q, serde_q_vec};
use sparse_cantor::linear::PiecewiseLinear;
use sparse_cantor::maxops::{DemoParams, DilationMode, OmegaSampler, TranslationMode};
use sparse_cantor::{ConstructionParams, Regime, StepFunction, Q};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Construction {
    pub regime: Regime,
    #[serde(default)]
    pub base: u64,
    #[serde(default, with = "opt_q", skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Q>,
    pub depth: usize,
    /// Custom regime only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_counts: Vec<u64>,
    #[serde(default, with = "serde_q_vec", skip_serializing_if = "Vec::is_empty")]
    pub epsilon_schedule: Vec<Q>,
    #[serde(default = "d_b", with = "serde_q")]
    pub b: Q,
    #[serde(default = "d_l")]
    pub l: u32,
    #[serde(default = "d_half", with = "serde_q")]
    pub epsilon0: Q,
    #[serde(default = "d_one", with = "serde_q")]
    pub gamma: Q,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_retries")]
    pub max_retries: u32,
    #[serde(default = "d_gate_n")]
    pub gate_n: usize,
    #[serde(default = "d_gate_budget")]
    pub gate_budget: usize,
}

fn d_b() -> Q {
    Q::from_integer(10.into())
}
fn d_l() -> u32 {
    2
}
fn d_half() -> Q {
    Q::new(1.into(), 2.into())
}
fn d_one() -> Q {
    Q::from_integer(1.into())
}
fn d_retries() -> u32 {
    50
}
fn d_gate_n() -> usize {
    2
}
fn d_gate_budget() -> usize {
    32
}

impl Construction {
    pub fn params(&self) -> Result<ConstructionParams, CliError> {
        let base = match self.regime {
            Regime::OneDimensional => ConstructionParams::one_dimensional(self.base, self.depth),
            Regime::FixedDimension => {
                let e = self.epsilon.clone().ok_or_else(|| {
                    CliError::Usage("construction.epsilon is required for fixed-dimension".into())
                })?;
                ConstructionParams::fixed_dimension(self.base, e, self.depth)
            }
            Regime::Custom => ConstructionParams::custom(
                self.level_counts.clone(),
                self.epsilon_schedule.clone(),
                self.depth,
            ),
        }
        .map_err(|e| CliError::from_core("construction", e))?;
        let p = ConstructionParams {
            b: self.b.clone(),
            l: self.l,
            epsilon0: self.epsilon0.clone(),
            gamma: self.gamma.clone(),
            seed: self.seed,
            max_retries: self.max_retries,
            gate_n: self.gate_n,
            gate_budget: self.gate_budget,
            ..base
        };
        p.validate()
            .map_err(|e| CliError::from_core("construction", e))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlate {
    #[serde(default = "d_gate_n")]
    pub n: usize,
    /// Levels at which to sample; defaults to `1..K`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<usize>,
    #[serde(default = "d_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    /// Write every evaluated sample to the CSV sweep.
    #[serde(default)]
    pub write_samples: bool,
}

fn d_budget() -> usize {
    200
}

impl Default for Correlate {
    fn default() -> Self {
        Correlate {
            n: 2,
            levels: Vec::new(),
            budget: d_budget(),
            seed: 0,
            write_samples: false,
        }
    }
}

/// Test functions available to the operator commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// Piecewise constant, from `[a, b, value]` triples.
    Step { cells: Vec<[String; 3]> },
    Indicator {
        #[serde(with = "serde_q")]
        a: Q,
        #[serde(with = "serde_q")]
        b: Q,
    },
    Hat {
        #[serde(with = "serde_q")]
        center: Q,
        #[serde(with = "serde_q")]
        half_width: Q,
        #[serde(with = "serde_q")]
        height: Q,
    },
}

impl Default for FunctionSpec {
    fn default() -> Self {
        FunctionSpec::Indicator {
            a: Q::from_integer(0.into()),
            b: Q::from_integer(1.into()),
        }
    }
}

pub enum TestFunction {
    Step(StepFunction),
    Linear(PiecewiseLinear),
}

impl FunctionSpec {
    pub fn build(&self) -> Result<TestFunction, CliError> {
        let ctx = |e| CliError::from_core("function", e);
        Ok(match self {
            FunctionSpec::Step { cells } => {
                let cells = cells
                    .iter()
                    .map(|[a, b, v]| Ok((parse_q(a)?, parse_q(b)?, parse_q(v)?)))
                    .collect::<sparse_cantor::Result<Vec<_>>>()
                    .map_err(ctx)?;
                TestFunction::Step(StepFunction::from_cells(&cells).map_err(ctx)?)
            }
            FunctionSpec::Indicator { a, b } => {
                TestFunction::Step(StepFunction::indicator(a, b).map_err(ctx)?)
            }
            FunctionSpec::Hat {
                center,
                half_width,
                height,
            } => {
                TestFunction::Linear(PiecewiseLinear::hat(center, half_width, height).map_err(ctx)?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Maximal {
    #[serde(default)]
    pub function: FunctionSpec,
    /// Explicit evaluation points; when empty, `point_count` points spread over `[−4, 0]`.
    #[serde(default, with = "serde_q_vec", skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Q>,
    #[serde(default = "d_points")]
    pub point_count: u64,
    /// Explicit dilation grid in `(1, 2)`; when empty, `r_grid_count` cell centers.
    #[serde(default, with = "serde_q_vec", skip_serializing_if = "Vec::is_empty")]
    pub r_grid: Vec<Q>,
    #[serde(default = "d_rcount")]
    pub r_grid_count: u64,
    #[serde(default = "d_two", with = "serde_q")]
    pub p: Q,
    #[serde(default = "d_two", with = "serde_q")]
    pub q: Q,
    #[serde(default)]
    pub m_min: i32,
    #[serde(default)]
    pub m_max: i32,
    /// Sampled `Ω` per level for the restricted-type ratio; 0 skips it.
    #[serde(default)]
    pub ratio_budget: usize,
    #[serde(default = "d_gate_n")]
    pub ratio_n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratio_levels: Vec<usize>,
    #[serde(default = "d_one_u32")]
    pub omega_cell_exponent: u32,
    #[serde(default = "d_tracking")]
    pub translation: String,
    #[serde(default = "d_random")]
    pub dilation: String,
    #[serde(default)]
    pub seed: u64,
}

fn d_points() -> u64 {
    17
}
fn d_rcount() -> u64 {
    16
}
fn d_two() -> Q {
    Q::from_integer(2.into())
}
fn d_one_u32() -> u32 {
    1
}
fn d_tracking() -> String {
    "tracking".into()
}
fn d_random() -> String {
    "cellwise-random".into()
}

impl Default for Maximal {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl Maximal {
    pub fn points(&self) -> Vec<Q> {
        if !self.points.is_empty() {
            return self.points.clone();
        }
        let n = self.point_count.max(1);
        if n == 1 {
            return vec![Q::from_integer((-2).into())];
        }
        (0..n)
            .map(|i| Q::from_integer((-4).into()) + Q::new((4 * i).into(), (n - 1).into()))
            .collect()
    }

    pub fn r_grid(&self) -> Vec<Q> {
        if self.r_grid.is_empty() {
            sparse_cantor::maxops::r_grid_uniform(self.r_grid_count)
        } else {
            self.r_grid.clone()
        }
    }

    pub fn sampler(&self) -> Result<OmegaSampler, CliError> {
        let translation = match self.translation.as_str() {
            "tracking" => TranslationMode::Tracking,
            s => TranslationMode::Constant(parse_q(s).map_err(|_| {
                CliError::Usage(format!(
                    "maximal.translation: expected \"tracking\" or a rational, got {s:?}"
                ))
            })?),
        };
        let dilation = match self.dilation.as_str() {
            "cellwise-random" => DilationMode::CellwiseRandom,
            s => DilationMode::Constant(parse_q(s).map_err(|_| {
                CliError::Usage(format!(
                    "maximal.dilation: expected \"cellwise-random\" or a rational, got {s:?}"
                ))
            })?),
        };
        Ok(OmegaSampler {
            ell: self.omega_cell_exponent,
            translation,
            dilation,
            ..OmegaSampler::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Differentiate {
    #[serde(default = "d_hat")]
    pub function: FunctionSpec,
    /// Decreasing radii.
    #[serde(default = "d_rseq", with = "serde_q_vec")]
    pub r_sequence: Vec<Q>,
    /// Explicit points; when empty, `point_count` random points of `(0, 1)`.
    #[serde(default, with = "serde_q_vec", skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Q>,
    #[serde(default = "d_points")]
    pub point_count: u64,
    #[serde(default)]
    pub seed: u64,
}

fn d_hat() -> FunctionSpec {
    FunctionSpec::Hat {
        center: Q::new(1.into(), 2.into()),
        half_width: Q::new(1.into(), 2.into()),
        height: Q::from_integer(1.into()),
    }
}

fn d_rseq() -> Vec<Q> {
    (2..=6)
        .map(|j| Q::new(1.into(), (1u64 << j).into()))
        .collect()
}

impl Default for Differentiate {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    #[serde(default = "d_out")]
    pub output_dir: String,
    /// `"csv"` enables the sweep tables; JSON reports are always written.
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
}

fn d_out() -> String {
    "out".into()
}
fn d_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

impl Default for Report {
    fn default() -> Self {
        Report {
            output_dir: d_out(),
            formats: d_formats(),
        }
    }
}

impl Report {
    pub fn wants(&self, f: &str) -> bool {
        self.formats.iter().any(|x| x == f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub construction: Construction,
    #[serde(default)]
    pub correlate: Correlate,
    #[serde(default)]
    pub maximal: Maximal,
    #[serde(default)]
    pub differentiate: Differentiate,
    #[serde(default)]
    pub demo: DemoParams,
    #[serde(default)]
    pub report: Report,
}

mod opt_q {
    use serde::{Deserialize, Deserializer, Serializer};
    use sparse_cantor::exact::{fmt_q, parse_q};
    use sparse_cantor::Q;

    pub fn serialize<S: Serializer>(x: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_str(&fmt_q(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Q>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_q(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Parses `section.key=value`; the value is read as a TOML value and falls back
/// to a bare string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().unwrap();
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {spec:?}: {k} is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section a command will touch before any computation.
    pub fn validate(&self, command: &str) -> Result<ConstructionParams, CliError> {
        let p = self.construction.params()?;
        let usage = |m: String| Err(CliError::Usage(m));
        match command {
            "correlate" => {
                let c = &self.correlate;
                if c.budget == 0 {
                    return usage("correlate.budget must be at least 1".into());
                }
                if c.n < 2 || !c.n.is_multiple_of(2) {
                    return usage(format!("correlate.n = {} must be even and at least 2", c.n));
                }
                if let Some(&k) = c.levels.iter().find(|&&k| k == 0 || k >= p.depth) {
                    return usage(format!("correlate.levels: {k} is outside 1..{}", p.depth));
                }
            }
            "maximal" => {
                let m = &self.maximal;
                m.function.build()?;
                if m.r_grid.is_empty() && m.r_grid_count == 0 {
                    return usage("maximal.r_grid_count must be positive".into());
                }
                let grid = m.r_grid();
                if grid.windows(2).any(|w| w[0] >= w[1]) {
                    return usage("maximal.r_grid must be increasing".into());
                }
                let one = Q::from_integer(1.into());
                if !(m.p > one && m.p <= m.q) {
                    return usage("maximal: need 1 < p ≤ q".into());
                }
                if m.m_min > m.m_max {
                    return usage("maximal: m_min exceeds m_max".into());
                }
                if m.ratio_budget > 0 {
                    if m.ratio_n < 2 || !m.ratio_n.is_multiple_of(2) {
                        return usage(format!("maximal.ratio_n = {} must be even", m.ratio_n));
                    }
                    if m.omega_cell_exponent == 0 || m.omega_cell_exponent > p.l {
                        return usage(format!(
                            "maximal.omega_cell_exponent must lie in 1..={}",
                            p.l
                        ));
                    }
                    m.sampler()?;
                }
            }
            "differentiate" => {
                let d = &self.differentiate;
                d.function.build()?;
                let zero = Q::from_integer(0.into());
                if d.r_sequence.is_empty()
                    || d.r_sequence.windows(2).any(|w| w[0] <= w[1])
                    || d.r_sequence.iter().any(|r| r <= &zero)
                {
                    return usage(
                        "differentiate.r_sequence must be positive and decreasing".into(),
                    );
                }
                if d.points.is_empty() && d.point_count == 0 {
                    return usage("differentiate.point_count must be positive".into());
                }
            }
            "demo-l1" => {
                let zero = Q::from_integer(0.into());
                if self.demo.r <= zero || self.demo.rho0.as_ref().is_some_and(|r| r <= &zero) {
                    return usage("demo: r and rho0 must be positive".into());
                }
            }
            _ => {}
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[construction]
regime = "fixed-dimension"
base = 16
epsilon = "1/4"
depth = 3
seed = 1

[correlate]
n = 2
budget = 50

[maximal]
p = "3/2"
q = "3"
m_min = -1
m_max = 1
function = { kind = "step", cells = [["0", "1/2", "2"], ["1/2", "1", "-1"]] }

[demo]
r = "1"
floor = 1.0
"#;

    #[test]
    fn parses_and_validates() {
        let c = RunConfig::parse(SAMPLE, &[]).unwrap();
        let p = c.validate("construct").unwrap();
        assert_eq!(p.level_counts[..3], [16, 256, 4096]);
        assert_eq!(c.maximal.p, Q::new(3.into(), 2.into()));
        assert_eq!(c.maximal.points().len(), 17);
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::parse(SAMPLE, &[]).unwrap();
        let again = RunConfig::parse(&c.to_toml(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overrides() {
        let c = RunConfig::parse(
            SAMPLE,
            &[
                "construction.seed=9".into(),
                "correlate.budget=0".into(),
                "construction.b=\"20\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.construction.seed, 9);
        assert_eq!(c.construction.b, Q::from_integer(20.into()));
        assert!(matches!(c.validate("correlate"), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_field_names_the_key() {
        let err = RunConfig::parse(
            "[construction]\nregime = \"custom\"\ndepth = 1\nbogus = 3\n",
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = RunConfig::parse("[construction\n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn regime_preconditions_are_checked() {
        let c = RunConfig::parse(&SAMPLE.replace("\"1/4\"", "\"1/2\""), &[]).unwrap();
        assert!(matches!(c.validate("construct"), Err(CliError::Usage(_))));
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_any(seed in 0u64..=i64::MAX as u64, budget in 1usize..1000, num in 1i64..9, den in 1i64..9,
                              m0 in -3i32..0, m1 in 0i32..3, retries in 0u32..100) {
                let text = format!(
                    "[construction]\nregime = \"custom\"\nlevel_counts = [4, 8]\nepsilon_schedule = [\"1/2\", \"1/3\"]\ndepth = 2\nseed = {seed}\nmax_retries = {retries}\nb = \"{num}/{den}\"\n[correlate]\nbudget = {budget}\n[maximal]\nm_min = {m0}\nm_max = {m1}\n"
                );
                let c = RunConfig::parse(&text, &[]).unwrap();
                prop_assert_eq!(RunConfig::parse(&c.to_toml(), &[]).unwrap(), c);
            }
        }
    }
}
