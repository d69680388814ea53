//! Strict JSON scenario files.
//!
//! Syntax errors are reported with their line and column. Everything else
//! (missing or unknown keys, wrong types, out-of-range values) is collected
//! into a single list so that a file can be fixed in one pass.

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::params::{CoefficientField, ModelConstants, ModelSpec};
use crate::pde::{Grid1D, InitProfile, SimOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub save_every: usize,
}

impl TimeConfig {
    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            t_end: self.t_end,
            dt: self.dt,
            save_every: self.save_every,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Stopping tolerance of the rectangle iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative singularity threshold of the closed-form systems.
    pub det_tol: f64,
    /// Enlargement of the rectangle in the attraction check.
    pub eps: f64,
    pub pullback_tol: f64,
    pub pullback_horizon: f64,
    /// Largest spatial spread accepted as homogenised.
    pub homogenization_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol: 1e-12,
            max_iter: 10_000,
            det_tol: 1e-10,
            eps: 0.01,
            pullback_tol: 1e-8,
            pullback_horizon: 50.0,
            homogenization_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub initial_u: InitProfile,
    pub initial_v: InitProfile,
    /// Partner run for the energy comparison.
    pub pair_with: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub grid: Grid1D,
    pub time: TimeConfig,
    pub initial_u: InitProfile,
    pub initial_v: InitProfile,
    pub runs: Vec<RunConfig>,
    pub tolerances: Tolerances,
}

pub const DEFAULT_SAVE_EVERY: usize = 100;

const CONSTANT_KEYS: [&str; 8] = ["d1", "d2", "d3", "chi1", "chi2", "k", "l", "lambda"];
const FIELD_KEYS: [&str; 6] = ["a0", "a1", "a2", "b0", "b1", "b2"];

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn error(&mut self, path: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn object<'a>(&mut self, value: &'a Value, path: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        match value.as_object() {
            Some(map) => {
                for key in map.keys() {
                    if !allowed.contains(&key.as_str()) {
                        self.error(&join(path, key), "unknown key");
                    }
                }
                Some(map)
            }
            None => {
                self.error(path, "expected an object");
                None
            }
        }
    }

    fn section<'a>(
        &mut self,
        map: &'a Map<String, Value>,
        path: &str,
        key: &str,
        allowed: &[&str],
    ) -> Option<&'a Map<String, Value>> {
        match map.get(key) {
            Some(v) => self.object(v, &join(path, key), allowed),
            None => {
                self.error(&join(path, key), "missing required key");
                None
            }
        }
    }

    fn number(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let p = join(path, key);
        match map.get(key) {
            None => {
                self.error(&p, "missing required key");
                None
            }
            Some(v) => self.as_number(v, &p),
        }
    }

    fn optional_number(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<Option<f64>> {
        match map.get(key) {
            None => Some(None),
            Some(v) => self.as_number(v, &join(path, key)).map(Some),
        }
    }

    fn as_number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.error(path, "expected a finite number");
                None
            }
        }
    }

    fn optional_count(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<Option<u64>> {
        match map.get(key) {
            None => Some(None),
            Some(v) => match v.as_u64() {
                Some(n) => Some(Some(n)),
                None => {
                    self.error(&join(path, key), "expected a nonnegative integer");
                    None
                }
            },
        }
    }

    fn count(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<u64> {
        match self.optional_count(map, path, key)? {
            Some(n) => Some(n),
            None => {
                self.error(&join(path, key), "missing required key");
                None
            }
        }
    }

    fn positive(&mut self, path: &str, x: Option<f64>) -> Option<f64> {
        match x {
            Some(x) if x <= 0.0 => {
                self.error(path, format!("must be positive, got {x}"));
                None
            }
            other => other,
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn field(r: &mut Reader, value: &Value, path: &str) -> Option<CoefficientField> {
    if value.is_number() {
        return r.as_number(value, path).map(CoefficientField::constant);
    }
    let keys = [
        "mean",
        "time_amp",
        "time_freq",
        "time_phase",
        "space_amp",
        "space_mode",
        "inf",
        "sup",
    ];
    let map = r.object(value, path, &keys)?;
    let mean = r.number(map, path, "mean");
    let time_amp = r.optional_number(map, path, "time_amp");
    let time_freq = r.optional_number(map, path, "time_freq");
    let time_phase = r.optional_number(map, path, "time_phase");
    let space_amp = r.optional_number(map, path, "space_amp");
    let space_mode = r.optional_count(map, path, "space_mode");
    let inf = r.optional_number(map, path, "inf");
    let sup = r.optional_number(map, path, "sup");
    let space_mode = match space_mode? {
        Some(m) if m > u32::MAX as u64 => {
            r.error(&join(path, "space_mode"), "too large");
            return None;
        }
        m => m.unwrap_or(0) as u32,
    };
    let f = CoefficientField::new(
        mean?,
        time_amp?.unwrap_or(0.0),
        time_freq?.unwrap_or(0.0),
        time_phase?.unwrap_or(0.0),
        space_amp?.unwrap_or(0.0),
        space_mode,
    );
    match (inf?, sup?) {
        (None, None) => Some(f),
        (Some(i), Some(s)) => Some(f.with_bounds(i, s)),
        _ => {
            r.error(path, "inf and sup must be given together");
            None
        }
    }
}

fn profile(r: &mut Reader, value: &Value, path: &str) -> Option<InitProfile> {
    let map = r.object(value, path, &["base", "amp", "mode"])?;
    let base = r.number(map, path, "base");
    let amp = r.optional_number(map, path, "amp");
    let mode = r.optional_count(map, path, "mode");
    let mode = match mode? {
        Some(m) if m > u32::MAX as u64 => {
            r.error(&join(path, "mode"), "too large");
            return None;
        }
        m => m.unwrap_or(0) as u32,
    };
    Some(InitProfile {
        base: base?,
        amp: amp?.unwrap_or(0.0),
        mode,
    })
}

fn model(r: &mut Reader, root: &Map<String, Value>) -> Option<ModelSpec> {
    let mut allowed: Vec<&str> = CONSTANT_KEYS.to_vec();
    allowed.extend(FIELD_KEYS);
    let map = r.section(root, "", "model", &allowed)?;
    let mut c = [0.0; 8];
    let mut ok = true;
    for (slot, key) in c.iter_mut().zip(CONSTANT_KEYS) {
        let path = join("model", key);
        let mut x = r.number(map, "model", key);
        if let Some(v) = x {
            let strict = matches!(key, "d1" | "d2" | "d3" | "lambda");
            if strict && v <= 0.0 {
                r.error(&path, format!("must be positive, got {v}"));
                x = None;
            } else if !strict && v < 0.0 {
                r.error(&path, format!("must be nonnegative, got {v}"));
                x = None;
            }
        }
        match x {
            Some(v) => *slot = v,
            None => ok = false,
        }
    }
    let mut fields = Vec::with_capacity(6);
    for key in FIELD_KEYS {
        let path = join("model", key);
        let parsed = match map.get(key) {
            Some(v) => field(r, v, &path),
            None => {
                r.error(&path, "missing required key");
                None
            }
        };
        if let Some(f) = parsed {
            if let Err(Error::InvalidSpec(msg)) = f.check(key, matches!(key, "a2" | "b1")) {
                r.error(&path, msg.trim_start_matches(&format!("{key}: ")));
            }
        }
        fields.push(parsed);
    }
    if !ok || fields.iter().any(Option::is_none) {
        return None;
    }
    let f: Vec<CoefficientField> = fields.into_iter().flatten().collect();
    Some(ModelSpec {
        constants: ModelConstants {
            d1: c[0],
            d2: c[1],
            d3: c[2],
            chi1: c[3],
            chi2: c[4],
            k: c[5],
            l: c[6],
            lambda: c[7],
        },
        a0: f[0],
        a1: f[1],
        a2: f[2],
        b0: f[3],
        b1: f[4],
        b2: f[5],
    })
}

fn valid_run_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn runs(
    r: &mut Reader,
    root: &Map<String, Value>,
    u: Option<InitProfile>,
    v: Option<InitProfile>,
) -> Option<Vec<RunConfig>> {
    let Some(value) = root.get("runs") else {
        return Some(Vec::new());
    };
    let Some(list) = value.as_array() else {
        r.error("runs", "expected an array");
        return None;
    };
    let mut out = Vec::new();
    let mut ok = true;
    for (i, item) in list.iter().enumerate() {
        let path = format!("runs[{i}]");
        let Some(map) = r.object(item, &path, &["name", "initial_u", "initial_v", "pair_with"]) else {
            ok = false;
            continue;
        };
        let name = match map.get("name").map(Value::as_str) {
            Some(Some(n)) if valid_run_name(n) => Some(n.to_string()),
            Some(Some(n)) => {
                r.error(
                    &join(&path, "name"),
                    format!("'{n}' may only use letters, digits, '_' and '-'"),
                );
                None
            }
            Some(None) => {
                r.error(&join(&path, "name"), "expected a string");
                None
            }
            None => {
                r.error(&join(&path, "name"), "missing required key");
                None
            }
        };
        let iu = match map.get("initial_u") {
            Some(p) => profile(r, p, &join(&path, "initial_u")),
            None => u,
        };
        let iv = match map.get("initial_v") {
            Some(p) => profile(r, p, &join(&path, "initial_v")),
            None => v,
        };
        let pair_with = match map.get("pair_with") {
            None => Some(None),
            Some(Value::String(s)) => Some(Some(s.clone())),
            Some(_) => {
                r.error(&join(&path, "pair_with"), "expected a string");
                None
            }
        };
        match (name, iu, iv, pair_with) {
            (Some(name), Some(initial_u), Some(initial_v), Some(pair_with)) => out.push(RunConfig {
                name,
                initial_u,
                initial_v,
                pair_with,
            }),
            _ => ok = false,
        }
    }
    let mut seen = BTreeSet::new();
    for run in &out {
        if !seen.insert(run.name.as_str()) {
            r.error("runs", format!("duplicate run name '{}'", run.name));
            ok = false;
        }
    }
    for run in &out {
        if let Some(p) = &run.pair_with {
            if p == &run.name {
                r.error("runs", format!("run '{}' is paired with itself", run.name));
                ok = false;
            } else if !seen.contains(p.as_str()) {
                r.error("runs", format!("run '{}' is paired with unknown run '{p}'", run.name));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn tolerances(r: &mut Reader, root: &Map<String, Value>) -> Option<Tolerances> {
    let mut t = Tolerances::default();
    let keys = [
        "tol",
        "max_iter",
        "det_tol",
        "eps",
        "pullback_tol",
        "pullback_horizon",
        "homogenization_tol",
    ];
    let Some(value) = root.get("tolerances") else {
        return Some(t);
    };
    let map = r.object(value, "tolerances", &keys)?;
    let before = r.errors.len();
    let slots: [(&str, &mut f64); 6] = [
        ("tol", &mut t.tol),
        ("det_tol", &mut t.det_tol),
        ("eps", &mut t.eps),
        ("pullback_tol", &mut t.pullback_tol),
        ("pullback_horizon", &mut t.pullback_horizon),
        ("homogenization_tol", &mut t.homogenization_tol),
    ];
    for (key, slot) in slots {
        if let Some(Some(x)) = r.optional_number(map, "tolerances", key) {
            if let Some(x) = r.positive(&join("tolerances", key), Some(x)) {
                *slot = x;
            }
        }
    }
    match r.optional_count(map, "tolerances", "max_iter") {
        Some(Some(0)) => r.error("tolerances.max_iter", "must be positive"),
        Some(Some(n)) => t.max_iter = n as usize,
        _ => {}
    }
    (r.errors.len() == before).then_some(t)
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut r = Reader { errors: Vec::new() };
        let top = ["model", "grid", "time", "initial_u", "initial_v", "runs", "tolerances"];
        let Some(root) = r.object(&value, "", &top) else {
            return Err(Error::Validation(r.errors));
        };

        let model = model(&mut r, root);

        let grid = r.section(root, "", "grid", &["length", "n_cells"]).and_then(|g| {
            let length = r.number(g, "grid", "length");
            let length = r.positive("grid.length", length);
            let n = r.count(g, "grid", "n_cells");
            match n {
                Some(n) if n < 4 => {
                    r.error("grid.n_cells", format!("must be at least 4, got {n}"));
                    None
                }
                Some(n) => Some(Grid1D {
                    length: length?,
                    n_cells: n as usize,
                }),
                None => None,
            }
        });

        let time = r
            .section(root, "", "time", &["dt", "t_end", "save_every"])
            .and_then(|t| {
                let dt = r.number(t, "time", "dt");
                let dt = r.positive("time.dt", dt);
                let t_end = r.number(t, "time", "t_end");
                let t_end = r.positive("time.t_end", t_end);
                let save_every = match r.optional_count(t, "time", "save_every") {
                    Some(Some(0)) => {
                        r.error("time.save_every", "must be positive");
                        None
                    }
                    Some(n) => Some(n.map_or(DEFAULT_SAVE_EVERY, |n| n as usize)),
                    None => None,
                };
                Some(TimeConfig {
                    dt: dt?,
                    t_end: t_end?,
                    save_every: save_every?,
                })
            });

        let init = |r: &mut Reader, key: &str| match root.get(key) {
            Some(v) => profile(r, v, key),
            None => {
                r.error(key, "missing required key");
                None
            }
        };
        let initial_u = init(&mut r, "initial_u");
        let initial_v = init(&mut r, "initial_v");
        for (key, p) in [("initial_u", initial_u), ("initial_v", initial_v)] {
            if let Some(p) = p {
                if p.base + p.amp.abs() <= 0.0 {
                    r.error(key, "profile is identically zero");
                }
            }
        }
        let runs = runs(&mut r, root, initial_u, initial_v);
        let tolerances = tolerances(&mut r, root);

        if !r.errors.is_empty() {
            return Err(Error::Validation(r.errors));
        }
        match (model, grid, time, initial_u, initial_v, runs, tolerances) {
            (Some(model), Some(grid), Some(time), Some(initial_u), Some(initial_v), Some(runs), Some(tolerances)) => {
                Ok(ScenarioConfig {
                    model,
                    grid,
                    time,
                    initial_u,
                    initial_v,
                    runs,
                    tolerances,
                })
            }
            _ => Err(Error::Validation(vec!["configuration is incomplete".into()])),
        }
    }

    /// Every value spelled out, so that parsing the result gives back `self`.
    pub fn to_normalized_json(&self) -> Value {
        let field = |f: &CoefficientField| {
            json!({
                "mean": f.mean,
                "time_amp": f.time_amp,
                "time_freq": f.time_freq,
                "time_phase": f.time_phase,
                "space_amp": f.space_amp,
                "space_mode": f.space_mode,
                "inf": f.inf,
                "sup": f.sup,
            })
        };
        let profile = |p: &InitProfile| json!({"base": p.base, "amp": p.amp, "mode": p.mode});
        let m = &self.model;
        let c = &m.constants;
        let runs: Vec<Value> = self
            .runs
            .iter()
            .map(|run| {
                let mut v = json!({
                    "name": run.name,
                    "initial_u": profile(&run.initial_u),
                    "initial_v": profile(&run.initial_v),
                });
                if let Some(p) = &run.pair_with {
                    v["pair_with"] = json!(p);
                }
                v
            })
            .collect();
        let t = &self.tolerances;
        json!({
            "model": {
                "d1": c.d1, "d2": c.d2, "d3": c.d3,
                "chi1": c.chi1, "chi2": c.chi2,
                "k": c.k, "l": c.l, "lambda": c.lambda,
                "a0": field(&m.a0), "a1": field(&m.a1), "a2": field(&m.a2),
                "b0": field(&m.b0), "b1": field(&m.b1), "b2": field(&m.b2),
            },
            "grid": {"length": self.grid.length, "n_cells": self.grid.n_cells},
            "time": {"dt": self.time.dt, "t_end": self.time.t_end, "save_every": self.time.save_every},
            "initial_u": profile(&self.initial_u),
            "initial_v": profile(&self.initial_v),
            "runs": runs,
            "tolerances": {
                "tol": t.tol,
                "max_iter": t.max_iter,
                "det_tol": t.det_tol,
                "eps": t.eps,
                "pullback_tol": t.pullback_tol,
                "pullback_horizon": t.pullback_horizon,
                "homogenization_tol": t.homogenization_tol,
            },
        })
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    ScenarioConfig::from_json_str(&text)
}
