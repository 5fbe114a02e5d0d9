//! Scenarios a client may join, and the geometry sent to it for rendering.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use barrier_guard::sim::Scenario;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TeleopError};

/// Ellipse parameters of one barrier: `c(z) = gamma (delta^2 - 0.5 e'P e)`,
/// `e = z - center`, annulus `-b <= c <= a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierGeometry {
    pub index: usize,
    pub name: String,
    pub gamma: i8,
    pub delta: f64,
    pub p: [[f64; 2]; 2],
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSummary {
    pub index: usize,
    pub x: [f64; 3],
    pub label: Option<String>,
    pub robustness: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub dt: f64,
    pub horizon: f64,
    pub steps_per_second: f64,
    pub input_box: [[f64; 2]; 2],
    pub barriers: Vec<BarrierGeometry>,
    pub initial_states: Vec<InitialStateSummary>,
}

impl ScenarioSummary {
    pub fn of(s: &Scenario) -> Self {
        let barriers = s
            .barriers
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let e = b.shell.ellipsoid();
                let p = e.shape();
                BarrierGeometry {
                    index: i,
                    name: s.barrier_names[i].clone(),
                    gamma: e.gamma() as i8,
                    delta: e.delta(),
                    p: [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]],
                    center: [e.center()[0], e.center()[1]],
                    a: b.shell.a(),
                    b: b.shell.b(),
                }
            })
            .collect();
        let initial_states = s
            .initial_states
            .iter()
            .enumerate()
            .map(|(i, st)| InitialStateSummary {
                index: i,
                x: [st.x[0], st.x[1], st.x[2]],
                label: st.label.clone(),
                robustness: st.robustness,
            })
            .collect();
        let (lo, hi) = (s.input_box.lower(), s.input_box.upper());
        ScenarioSummary {
            name: s.name.clone(),
            dt: s.dt,
            horizon: s.horizon,
            steps_per_second: s.steps_per_second,
            input_box: [[lo[0], lo[1]], [hi[0], hi[1]]],
            barriers,
            initial_states,
        }
    }
}

/// Validated scenarios by name.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    scenarios: BTreeMap<String, Arc<Scenario>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Catalog holding only the shipped scenario.
    pub fn shipped() -> Self {
        let mut c = Self::new();
        c.insert(Scenario::shipped());
        c
    }

    pub fn insert(&mut self, scenario: Scenario) {
        self.scenarios.insert(scenario.name.clone(), Arc::new(scenario));
    }

    /// Adds every `*.toml` scenario in `dir`; the first invalid file aborts.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for p in &paths {
            self.insert(Scenario::from_path(p)?);
        }
        Ok(paths.len())
    }

    pub fn get(&self, name: &str) -> Result<Arc<Scenario>> {
        self.scenarios.get(name).cloned().ok_or_else(|| TeleopError::UnknownScenario(name.into()))
    }

    pub fn names(&self) -> Vec<String> {
        self.scenarios.keys().cloned().collect()
    }

    pub fn summaries(&self) -> Vec<ScenarioSummary> {
        self.scenarios.values().map(|s| ScenarioSummary::of(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_geometry() {
        let c = Catalog::shipped();
        let s = c.get("obstacle_field").unwrap();
        let summary = ScenarioSummary::of(&s);
        assert_eq!(summary.barriers.len(), 13);
        let ws = &summary.barriers[0];
        assert_eq!((ws.gamma, ws.p), (1, [[1.0, 0.0], [0.0, 1.0]]));
        assert!(summary.barriers[1..].iter().all(|b| b.gamma == -1));
        assert_eq!(summary.input_box, [[-2.0, -2.0], [2.0, 2.0]]);
        assert!(matches!(c.get("nope"), Err(TeleopError::UnknownScenario(_))));
    }

    #[test]
    fn load_dir_validates() {
        let dir = tempfile::tempdir().unwrap();
        let text = Scenario::shipped_toml().replace("name = \"obstacle_field\"", "name = \"copy\"");
        std::fs::write(dir.path().join("copy.toml"), text).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let mut c = Catalog::shipped();
        assert_eq!(c.load_dir(dir.path()).unwrap(), 1);
        assert_eq!(c.names(), vec!["copy".to_string(), "obstacle_field".to_string()]);

        std::fs::write(dir.path().join("bad.toml"), "schema = 2").unwrap();
        assert!(c.load_dir(dir.path()).is_err());
    }
}
