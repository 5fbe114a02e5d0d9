//! Scenario files (TOML, `schema = 1`) and their validation.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{AlphaFn, Barrier};
use crate::error::{Error, Result};
use crate::geometry::{annuli_disjoint, AnnulusShell, Ellipsoid, Region, DEFAULT_DISJOINT_RESOLUTION};
use crate::input_box::InputBox;
use crate::plants::{AicardiNominal, UnicycleBarrier, UnicycleBarrierGains};
use crate::qp::ProbeRegion;

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_DT: f64 = 0.05;
const SHIPPED: &str = include_str!("../../scenarios/obstacle_field.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    #[serde(default = "default_plant")]
    pub plant: String,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Live-session pacing; defaults to real time (`1 / dt`).
    #[serde(default)]
    pub steps_per_second: Option<f64>,
    pub input_box: BoxConfig,
    pub nominal: NominalConfig,
    #[serde(default, rename = "barrier")]
    pub barriers: Vec<BarrierConfig>,
    #[serde(default, rename = "initial_state")]
    pub initial_states: Vec<InitialStateConfig>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
}

fn default_plant() -> String {
    "unicycle".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub u_p: f64,
    pub u_d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalConfig {
    Aicardi { k_r: f64, k_a: f64 },
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub gamma: i32,
    pub delta: f64,
    pub p: [[f64; 2]; 2],
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
    #[serde(default = "default_alpha_gain")]
    pub alpha_gain: f64,
    /// Explicit gains; the largest admissible ones are used when absent.
    #[serde(default)]
    pub k_p: Option<f64>,
    #[serde(default)]
    pub k_d: Option<f64>,
}

fn default_alpha_gain() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateConfig {
    pub x: [f64; 3],
    /// Starts inside exactly one annulus with `h < 0`.
    #[serde(default)]
    pub robustness: bool,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Schema,
    Timing,
    Shell,
    Disjointness,
    Gains,
    InitialState,
    Nominal,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::Schema => "schema",
            Check::Timing => "timing",
            Check::Shell => "shell",
            Check::Disjointness => "disjointness",
            Check::Gains => "gains",
            Check::InitialState => "initial-state",
            Check::Nominal => "nominal",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub check: Check,
    /// Barrier or initial-state indices the issue refers to (0-based).
    pub indices: Vec<usize>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    fn fail(&mut self, check: Check, indices: Vec<usize>, message: impl Into<String>) {
        self.issues.push(ValidationIssue { check, indices, message: message.into() });
    }

    fn note(&mut self, message: impl Into<String>) {
        self.notes.push(message.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.notes {
            writeln!(f, "ok    {n}")?;
        }
        for i in &self.issues {
            write!(f, "FAIL  [{}]", i.check)?;
            if !i.indices.is_empty() {
                let ids: Vec<String> = i.indices.iter().map(|k| k.to_string()).collect();
                write!(f, " ({})", ids.join(", "))?;
            }
            writeln!(f, " {}", i.message)?;
        }
        if self.is_ok() {
            write!(f, "scenario valid")
        } else {
            write!(f, "{} issue(s)", self.issues.len())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitialState {
    pub x: Vector3<f64>,
    pub robustness: bool,
    pub label: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Nominal {
    Aicardi(AicardiNominal),
    Zero,
}

/// A validated scenario: the only way to build one is through validation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub steps_per_second: f64,
    pub input_box: InputBox<2>,
    pub nominal: Nominal,
    pub barriers: Vec<UnicycleBarrier>,
    pub barrier_names: Vec<String>,
    pub initial_states: Vec<InitialState>,
    pub probe: Option<ProbeRegion<3>>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.schema != SCHEMA_VERSION {
            report.fail(Check::Schema, vec![], format!("schema = {}, expected {SCHEMA_VERSION}", self.schema));
        }
        if self.plant != "unicycle" {
            report.fail(Check::Schema, vec![], format!("unknown plant {:?}", self.plant));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            report.fail(Check::Timing, vec![], format!("dt = {} outside (0, {MAX_DT}]", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            report.fail(Check::Timing, vec![], format!("horizon = {} must be positive", self.horizon));
        }
        if let Some(sps) = self.steps_per_second {
            if !(sps > 0.0 && sps.is_finite()) {
                report.fail(Check::Timing, vec![], format!("steps_per_second = {sps} must be positive"));
            }
        }
        let input_box = match InputBox::symmetric(Vector2::new(self.input_box.u_p, self.input_box.u_d)) {
            Ok(b) => Some(b),
            Err(e) => {
                report.fail(Check::Schema, vec![], format!("input box: {e}"));
                None
            }
        };

        let mut barriers: Vec<Option<UnicycleBarrier>> = Vec::with_capacity(self.barriers.len());
        for (i, cfg) in self.barriers.iter().enumerate() {
            let shell = match cfg.shell() {
                Ok(s) => s,
                Err(e) => {
                    report.fail(Check::Shell, vec![i], e.to_string());
                    barriers.push(None);
                    continue;
                }
            };
            let alpha = match AlphaFn::new(cfg.alpha_gain) {
                Ok(a) => a,
                Err(e) => {
                    report.fail(Check::Shell, vec![i], e.to_string());
                    barriers.push(None);
                    continue;
                }
            };
            let Some(input_box) = input_box else {
                barriers.push(None);
                continue;
            };
            match gains_for(i, cfg, &shell, &input_box, &mut report) {
                Some(gains) => barriers.push(Some(UnicycleBarrier::new(shell, gains, alpha))),
                None => barriers.push(None),
            }
        }

        let shells: Vec<(usize, AnnulusShell)> =
            barriers.iter().enumerate().filter_map(|(i, b)| b.map(|b| (i, b.shell))).collect();
        let pairs: Vec<(usize, usize)> =
            (0..shells.len()).flat_map(|i| (i + 1..shells.len()).map(move |j| (i, j))).collect();
        let checks: Vec<_> = pairs
            .par_iter()
            .filter(|&&(i, j)| !bounding_disks_apart(&shells[i].1, &shells[j].1))
            .map(|&(i, j)| (i, j, annuli_disjoint(&shells[i].1, &shells[j].1, DEFAULT_DISJOINT_RESOLUTION)))
            .collect();
        let sampled = checks.len();
        let mut min_margin = f64::INFINITY;
        for (i, j, r) in checks {
            let (bi, bj) = (shells[i].0, shells[j].0);
            min_margin = min_margin.min(r.min_margin);
            if !r.disjoint {
                report.fail(
                    Check::Disjointness,
                    vec![bi, bj],
                    format!("annuli {bi} and {bj} overlap (margin {:.3e})", r.min_margin),
                );
            }
        }
        if !pairs.is_empty() && min_margin > 0.0 {
            report.note(format!(
                "{} annulus pairs disjoint ({sampled} sampled, smallest sampled margin {min_margin:.4})",
                pairs.len()
            ));
        }

        if barriers.iter().all(Option::is_some) {
            let built: Vec<UnicycleBarrier> = barriers.iter().flatten().copied().collect();
            self.check_initial_states(&built, &mut report);
            if let Some(input_box) = input_box {
                self.check_nominal(&built, &input_box, &mut report);
            }
        }
        if let Some(p) = &self.probe {
            if ProbeRegion::new(Vector3::from(p.lower), Vector3::from(p.upper)).is_err() {
                report.fail(Check::Schema, vec![], "probe region needs lower < upper");
            }
        }
        report
    }

    fn check_initial_states(&self, barriers: &[UnicycleBarrier], report: &mut ValidationReport) {
        let mut safe = 0;
        let mut robust = 0;
        for (k, s) in self.initial_states.iter().enumerate() {
            let x = Vector3::from(s.x);
            if x.iter().any(|v| !v.is_finite()) {
                report.fail(Check::InitialState, vec![k], "non-finite initial state");
                continue;
            }
            let negative: Vec<(usize, f64)> =
                barriers.iter().enumerate().map(|(i, b)| (i, b.value(&x))).filter(|(_, h)| *h < 0.0).collect();
            if !s.robustness {
                if let Some(&(i, h)) = negative.first() {
                    report.fail(
                        Check::InitialState,
                        vec![k],
                        format!("initial state {k} violates barrier {i} (h = {h:.4}) and is not flagged robustness"),
                    );
                } else {
                    safe += 1;
                }
            } else if negative.len() != 1 {
                report.fail(
                    Check::InitialState,
                    vec![k],
                    format!("robustness state {k} must violate exactly one barrier, violates {}", negative.len()),
                );
            } else {
                let (i, h) = negative[0];
                if h < -barriers[i].shell.b() {
                    report.fail(
                        Check::InitialState,
                        vec![k, i],
                        format!("robustness state {k} has h = {h:.4} below -b = {}", -barriers[i].shell.b()),
                    );
                } else {
                    robust += 1;
                }
            }
        }
        report.note(format!("{safe} safe and {robust} robustness initial states"));
    }

    fn check_nominal(&self, barriers: &[UnicycleBarrier], input_box: &InputBox<2>, report: &mut ValidationReport) {
        let NominalConfig::Aicardi { k_r, k_a } = self.nominal else {
            return;
        };
        let nominal = match AicardiNominal::new(k_r, k_a) {
            Ok(n) => n,
            Err(e) => {
                report.fail(Check::Nominal, vec![], e.to_string());
                return;
            }
        };
        let radius = self.nominal_radius(barriers);
        let issues = nominal.check(radius, input_box);
        if issues.is_empty() {
            report.note(format!("nominal gains within bounds for radius {radius:.4}"));
        }
        for i in issues {
            report.fail(Check::Nominal, vec![], i);
        }
    }

    /// Radius bounding the positions the nominal law sees: the outer level of
    /// the stay-inside shells when there are any, else the initial radii.
    pub fn nominal_radius(&self, barriers: &[UnicycleBarrier]) -> f64 {
        let bounds: Vec<f64> = barriers
            .iter()
            .filter(|b| b.shell.ellipsoid().region() == Region::Interior)
            .map(|b| b.shell.ellipsoid().center().norm() + outer_radius(&b.shell))
            .collect();
        if bounds.is_empty() {
            self.initial_states.iter().map(|s| s.x[0].hypot(s.x[1])).fold(0.0, f64::max)
        } else {
            bounds.into_iter().fold(f64::INFINITY, f64::min)
        }
    }
}

impl BarrierConfig {
    pub fn shell(&self) -> Result<AnnulusShell> {
        let region = Region::from_sign(self.gamma)?;
        let p = Matrix2::new(self.p[0][0], self.p[0][1], self.p[1][0], self.p[1][1]);
        let ell = Ellipsoid::new(region, self.delta, p, Vector2::from(self.center))?;
        AnnulusShell::new(ell, self.a, self.b)
    }
}

/// Radius of a disk around the center containing the whole shell.
fn outer_radius(shell: &AnnulusShell) -> f64 {
    let (lambda_min, _) = shell.ellipsoid().eigenvalues();
    (2.0 * shell.level_range().1 / lambda_min).sqrt()
}

/// Shells whose enclosing disks are apart need no sampling.
fn bounding_disks_apart(s1: &AnnulusShell, s2: &AnnulusShell) -> bool {
    let gap = (s1.ellipsoid().center() - s2.ellipsoid().center()).norm() - outer_radius(s1) - outer_radius(s2);
    gap > 0.0
}

fn gains_for(
    i: usize,
    cfg: &BarrierConfig,
    shell: &AnnulusShell,
    input_box: &InputBox<2>,
    report: &mut ValidationReport,
) -> Option<UnicycleBarrierGains> {
    let max = match UnicycleBarrierGains::max_admissible(shell, input_box) {
        Ok(g) => g,
        Err(e) => {
            report.fail(Check::Gains, vec![i], e.to_string());
            return None;
        }
    };
    let k_p = cfg.k_p.unwrap_or(max.k_p);
    let k_d = cfg.k_d.unwrap_or(max.k_d);
    let mut ok = true;
    if k_p > max.k_p {
        report.fail(Check::Gains, vec![i], format!("k_p = {k_p} exceeds the admissible maximum {}", max.k_p));
        ok = false;
    }
    if k_d > max.k_d {
        report.fail(Check::Gains, vec![i], format!("k_d = {k_d} exceeds the admissible maximum {}", max.k_d));
        ok = false;
    }
    match UnicycleBarrierGains::new(k_p, k_d) {
        Ok(g) if ok => Some(g),
        Ok(_) => None,
        Err(e) => {
            report.fail(Check::Gains, vec![i], e.to_string());
            None
        }
    }
}

impl Scenario {
    pub fn from_config(config: &ScenarioConfig) -> Result<Self> {
        let report = config.validate();
        if !report.is_ok() {
            return Err(Error::Validation(report));
        }
        let input_box = InputBox::symmetric(Vector2::new(config.input_box.u_p, config.input_box.u_d))?;
        let mut barriers = Vec::with_capacity(config.barriers.len());
        let mut barrier_names = Vec::with_capacity(config.barriers.len());
        for (i, cfg) in config.barriers.iter().enumerate() {
            let shell = cfg.shell()?;
            let max = UnicycleBarrierGains::max_admissible(&shell, &input_box)?;
            let gains = UnicycleBarrierGains::new(cfg.k_p.unwrap_or(max.k_p), cfg.k_d.unwrap_or(max.k_d))?;
            barriers.push(UnicycleBarrier::new(shell, gains, AlphaFn::new(cfg.alpha_gain)?));
            barrier_names.push(cfg.name.clone().unwrap_or_else(|| format!("barrier_{i}")));
        }
        let nominal = match config.nominal {
            NominalConfig::Aicardi { k_r, k_a } => Nominal::Aicardi(AicardiNominal::new(k_r, k_a)?),
            NominalConfig::Zero => Nominal::Zero,
        };
        let initial_states = config
            .initial_states
            .iter()
            .map(|s| InitialState { x: Vector3::from(s.x), robustness: s.robustness, label: s.label.clone() })
            .collect();
        let probe = match &config.probe {
            Some(p) => Some(ProbeRegion::new(Vector3::from(p.lower), Vector3::from(p.upper))?),
            None => None,
        };
        Ok(Self {
            name: config.name.clone(),
            dt: config.dt,
            horizon: config.horizon,
            seed: config.seed,
            steps_per_second: config.steps_per_second.unwrap_or(1.0 / config.dt),
            input_box,
            nominal,
            barriers,
            barrier_names,
            initial_states,
            probe,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_config(&ScenarioConfig::from_toml_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config(&ScenarioConfig::from_path(path)?)
    }

    pub fn shipped_config() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(SHIPPED).expect("shipped scenario parses")
    }

    /// The bundled obstacle field, validated once per process.
    pub fn shipped() -> Self {
        static SHIPPED_SCENARIO: OnceLock<Scenario> = OnceLock::new();
        SHIPPED_SCENARIO
            .get_or_init(|| Self::from_config(&Self::shipped_config()).expect("shipped scenario validates"))
            .clone()
    }

    pub fn shipped_toml() -> &'static str {
        SHIPPED
    }

    /// Number of integration steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Keeps only the barriers whose indices fall in `range`.
    pub fn select_barriers(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.barriers.len() {
            return Err(Error::InvalidParameter(format!(
                "barrier range {}..{} outside 0..{}",
                range.start,
                range.end,
                self.barriers.len()
            )));
        }
        let mut s = self.clone();
        s.barriers = self.barriers[range.clone()].to_vec();
        s.barrier_names = self.barrier_names[range].to_vec();
        Ok(s)
    }

    pub fn with_overrides(mut self, dt: Option<f64>, horizon: Option<f64>, seed: Option<u64>) -> Result<Self> {
        if let Some(dt) = dt {
            if !(dt > 0.0 && dt <= MAX_DT) {
                return Err(Error::InvalidParameter(format!("dt = {dt} outside (0, {MAX_DT}]")));
            }
            self.dt = dt;
        }
        if let Some(h) = horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!("horizon = {h} must be positive")));
            }
            self.horizon = h;
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        Ok(self)
    }

    pub fn nominal_command(&self, x: &Vector3<f64>) -> Vector2<f64> {
        match &self.nominal {
            Nominal::Aicardi(n) => n.command(x),
            Nominal::Zero => Vector2::zeros(),
        }
    }

    /// Barrier values at `x`, in scenario order.
    pub fn barrier_values(&self, x: &Vector3<f64>) -> Vec<f64> {
        self.barriers.iter().map(|b| b.value(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema = 1
name = "pair"
dt = 0.001
horizon = 1.0

[input_box]
u_p = 2.0
u_d = 2.0

[nominal]
kind = "zero"

[[barrier]]
gamma = -1
delta = 1.0
p = [[1.0, 0.0], [0.0, 1.0]]
center = [0.0, 0.0]
a = 0.5
b = 0.5

[[barrier]]
gamma = -1
delta = 1.0
p = [[1.0, 0.0], [0.0, 1.0]]
center = [6.0, 0.0]
a = 0.5
b = 0.5

[[initial_state]]
x = [3.0, 0.0, 0.0]
"#;

    #[test]
    fn small_scenario_validates() {
        let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
        let report = cfg.validate();
        assert!(report.is_ok(), "{report}");
        let s = Scenario::from_config(&cfg).unwrap();
        assert_eq!(s.barriers.len(), 2);
        assert_eq!(s.steps(), 1000);
        assert_eq!(s.steps_per_second, 1000.0);
    }

    #[test]
    fn overlap_names_the_pair() {
        let text = SMALL.replace("center = [6.0, 0.0]", "center = [2.5, 0.0]");
        let report = ScenarioConfig::from_toml_str(&text).unwrap().validate();
        let issue = report.issues.iter().find(|i| i.check == Check::Disjointness).unwrap();
        assert_eq!(issue.indices, vec![0, 1]);
        assert!(report.to_string().contains("annuli 0 and 1 overlap"));
    }

    #[test]
    fn excessive_gain_prints_the_maximum() {
        let text = SMALL.replacen("b = 0.5\n", "b = 0.5\nk_p = 10.0\n", 1);
        let report = ScenarioConfig::from_toml_str(&text).unwrap().validate();
        let issue = report.issues.iter().find(|i| i.check == Check::Gains).unwrap();
        // eta = sqrt(3), max(a, b) = 0.5
        let max = 2.0 / (3f64.sqrt() * 0.5);
        assert!(issue.message.contains(&max.to_string()), "{}", issue.message);
    }

    #[test]
    fn center_exclusion_and_schema() {
        let text = SMALL.replacen("b = 0.5", "b = 1.5", 1).replace("schema = 1", "schema = 2");
        let report = ScenarioConfig::from_toml_str(&text).unwrap().validate();
        assert!(report.issues.iter().any(|i| i.check == Check::Schema));
        assert!(report.issues.iter().any(|i| i.check == Check::Shell && i.indices == vec![0]));
        assert!(matches!(Scenario::from_toml_str(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn dt_bounds() {
        let text = SMALL.replace("dt = 0.001", "dt = 0.1");
        let report = ScenarioConfig::from_toml_str(&text).unwrap().validate();
        assert!(report.issues.iter().any(|i| i.check == Check::Timing));
    }

    #[test]
    fn initial_state_classification() {
        let inside = SMALL.replace("x = [3.0, 0.0, 0.0]", "x = [1.2, 0.0, 0.0]");
        let report = ScenarioConfig::from_toml_str(&inside).unwrap().validate();
        assert!(report.issues.iter().any(|i| i.check == Check::InitialState));

        // 0.5 |e|^2 = 0.72, h = -0.28 in [-0.5, 0)
        let flagged = format!("{inside}robustness = true\n");
        assert!(ScenarioConfig::from_toml_str(&flagged).unwrap().validate().is_ok());

        let deep = flagged.replace("x = [1.2, 0.0, 0.0]", "x = [0.5, 0.0, 0.0]");
        let report = ScenarioConfig::from_toml_str(&deep).unwrap().validate();
        assert!(report.issues.iter().any(|i| i.check == Check::InitialState));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = SMALL.replace("horizon = 1.0", "horizon = 1.0\ncolour = 3");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(Error::Toml(_))));
    }

    #[test]
    fn barrier_selection() {
        let s = Scenario::from_toml_str(SMALL).unwrap();
        assert_eq!(s.select_barriers(1..2).unwrap().barriers.len(), 1);
        assert!(s.select_barriers(0..3).is_err());
    }
}
