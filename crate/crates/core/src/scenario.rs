//! Scenario files: a TOML key-tree merged over built-in defaults.
//!
//! Resolution order is defaults, then the scenario file, then `--set`
//! overrides. Every leaf of the result is tagged with where it came from,
//! and the fully resolved tree can be written to JSON and read back to
//! reproduce a run exactly.
//!
//! Units: AC quantities are per-unit on the `bases` section. The converter
//! section takes `v_dc_ref` in AC per-unit and expresses the remaining DC
//! quantities in a DC per-unit whose voltage base is `v_dc_ref`. VSG inertia
//! and damping are given in SI and divided by the power base.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::controllers::outer::{DvocPhaseLaw, OuterControllerConfig, OuterKind, Setpoints};
use crate::controllers::InnerLoopConfig;
use crate::converter::{ConverterParams, DcPerUnit};
use crate::engine::{GfcConfig, Scenario, SimulationConfig};
use crate::error::ConfigError;
use crate::network::{Bases, LoadStepEvent, NetworkConfig, IEEE9_TOML};

const DEFAULTS_TOML: &str = include_str!("../data/defaults.toml");
const GFC_TEMPLATE_TOML: &str = include_str!("../data/gfc_template.toml");
const GFC_KINDS_TOML: &str = include_str!("../data/gfc_kinds.toml");

/// Tables whose entries a scenario may add to.
const COLLECTIONS: &[&str] = &[
    "gfc",
    "network.buses",
    "network.lines",
    "network.transformers",
    "network.loads",
    "network.machines",
];

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Reference parameter table of the method.
    Paper,
    /// Built-in modelling default.
    Default,
    Scenario,
    Override,
}

#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub tree: Table,
    pub provenance: BTreeMap<String, Provenance>,
}

#[derive(Serialize, Deserialize)]
struct ResolvedFile {
    provenance: BTreeMap<String, Provenance>,
    scenario: Table,
}

fn parse_toml(text: &str, origin: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .unwrap_or(1);
        ConfigError::Syntax {
            line,
            message: format!("{origin}: {}", e.message()),
        }
    })
}

fn builtin(text: &str) -> Table {
    parse_toml(text, "built-in defaults").expect("built-in defaults parse")
}

fn is_paper_key(path: &str, kind: &str) -> bool {
    let leaf = path.rsplit('.').next().unwrap_or("");
    if path.starts_with("bases.") {
        return true;
    }
    if !path.starts_with("gfc.") {
        return false;
    }
    if path.contains(".controller.") {
        return matches!(leaf, "d_omega" | "j" | "d_p" | "eta" | "mu" | "kappa" | "omega_ref");
    }
    path.contains(".inner.") && matches!(leaf, "kp_v" | "ki_v") && kind != "dvoc"
}

/// Default tree for the given converter kinds (missing names use the union
/// of every kind's gains so any kind can be selected by an override).
fn default_tree(kinds: &BTreeMap<String, String>, gfc_names: &BTreeSet<String>) -> Table {
    let mut tree = builtin(DEFAULTS_TOML);
    let mut network = builtin(IEEE9_TOML);
    network.remove("name");
    tree.insert("network".into(), Value::Table(network));
    let gfc = tree
        .get_mut("gfc")
        .and_then(Value::as_table_mut)
        .expect("defaults have a gfc table");
    for name in gfc_names {
        gfc.entry(name.clone()).or_insert_with(|| Value::Table(Table::new()));
    }
    let names: Vec<String> = gfc.keys().cloned().collect();
    for name in names {
        let entry = gfc[&name].as_table().cloned().unwrap_or_default();
        let mut t = gfc_template(kinds.get(&name).map(String::as_str));
        for (k, v) in entry {
            t.insert(k, v);
        }
        gfc.insert(name, Value::Table(t));
    }
    tree
}

fn gfc_template(kind: Option<&str>) -> Table {
    let mut t = builtin(GFC_TEMPLATE_TOML);
    let kinds = builtin(GFC_KINDS_TOML);
    let selected: Vec<&str> = match kind {
        Some(k) if kinds.contains_key(k) => vec![k],
        _ => vec!["droop", "vsg", "dvoc"],
    };
    if let Some(k) = kind.filter(|k| kinds.contains_key(*k)) {
        t["controller"]
            .as_table_mut()
            .unwrap()
            .insert("kind".into(), Value::String(k.into()));
    }
    for k in selected {
        for section in ["controller", "inner"] {
            let gains = kinds[k][section].as_table().unwrap();
            let target = t[section].as_table_mut().unwrap();
            for (key, v) in gains {
                target.entry(key.clone()).or_insert_with(|| v.clone());
            }
        }
    }
    t
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn leaves(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                leaves(&join(prefix, k), v, out);
            }
        }
        Value::Array(a) if a.iter().any(|v| v.is_table()) => {
            for (k, v) in a.iter().enumerate() {
                leaves(&join(prefix, &k.to_string()), v, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

/// Coerce `new` to the type of `old` where that is lossless.
fn coerce(path: &str, old: &Value, new: Value) -> Result<Value, ConfigError> {
    match (old, new) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Table(_), Value::Table(t)) => Ok(Value::Table(t)),
        (Value::Array(_), Value::Array(a)) => Ok(Value::Array(a)),
        (o, n) if type_name(o) == type_name(&n) => Ok(n),
        (o, n) => Err(ConfigError::invalid(
            path,
            format!("expected {}, got {}", type_name(o), type_name(&n)),
        )),
    }
}

/// Merge `src` into `dst`, recording the leaves that were set.
fn merge(
    dst: &mut Table,
    src: Table,
    prefix: &str,
    set: &mut BTreeSet<String>,
) -> Result<(), ConfigError> {
    for (key, value) in src {
        let path = join(prefix, &key);
        match dst.get_mut(&key) {
            Some(Value::Table(d)) => match value {
                Value::Table(s) => merge(d, s, &path, set)?,
                other => {
                    return Err(ConfigError::invalid(
                        path,
                        format!("expected table, got {}", type_name(&other)),
                    ))
                }
            },
            Some(old) => {
                let v = coerce(&path, old, value)?;
                let mut l = Vec::new();
                leaves(&path, &v, &mut l);
                set.extend(l);
                *old = v;
            }
            None if COLLECTIONS.contains(&prefix) => {
                let mut l = Vec::new();
                leaves(&path, &value, &mut l);
                set.extend(l);
                dst.insert(key, value);
            }
            None => return Err(ConfigError::UnknownKey(path)),
        }
    }
    Ok(())
}

/// One `key=value` override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl Override {
    /// Parse `a.b.c=value`. Values are read as TOML; anything that does not
    /// parse is taken as a bare string.
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::invalid(spec, "override must look like key=value"))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(ConfigError::invalid(spec, "empty key segment"));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Self {
            path: key.split('.').map(str::to_string).collect(),
            value,
        })
    }
}

fn apply_override(
    node: &mut Value,
    path: &[String],
    prefix: &str,
    value: &Value,
    set: &mut BTreeSet<String>,
) -> Result<usize, ConfigError> {
    let Some((head, rest)) = path.split_first() else {
        let v = coerce(prefix, node, value.clone())?;
        let mut l = Vec::new();
        leaves(prefix, &v, &mut l);
        set.extend(l);
        *node = v;
        return Ok(1);
    };
    let mut hits = 0;
    match node {
        Value::Table(t) => {
            let keys: Vec<String> = if head == "*" {
                t.keys().cloned().collect()
            } else if t.contains_key(head) {
                vec![head.clone()]
            } else {
                vec![]
            };
            for k in keys {
                let child = t.get_mut(&k).unwrap();
                hits += apply_override(child, rest, &join(prefix, &k), value, set)?;
            }
        }
        Value::Array(a) => {
            let idx: Vec<usize> = if head == "*" {
                (0..a.len()).collect()
            } else {
                head.parse::<usize>().ok().filter(|&i| i < a.len()).into_iter().collect()
            };
            for i in idx {
                hits += apply_override(&mut a[i], rest, &join(prefix, &i.to_string()), value, set)?;
            }
        }
        _ => {}
    }
    Ok(hits)
}

fn apply_overrides(
    tree: &mut Table,
    overrides: &[Override],
    set: &mut BTreeSet<String>,
) -> Result<(), ConfigError> {
    for o in overrides {
        let mut path = o.path.clone();
        // `gfc1.controller.alpha` is shorthand for `gfc.gfc1.controller.alpha`.
        let is_gfc = tree
            .get("gfc")
            .and_then(Value::as_table)
            .is_some_and(|g| g.contains_key(&path[0]));
        if !tree.contains_key(&path[0]) && is_gfc {
            path.insert(0, "gfc".into());
        }
        let mut root = Value::Table(std::mem::take(tree));
        let hits = apply_override(&mut root, &path, "", &o.value, set);
        *tree = match root {
            Value::Table(t) => t,
            _ => unreachable!(),
        };
        if hits? == 0 {
            return Err(ConfigError::UnknownKey(o.path.join(".")));
        }
    }
    Ok(())
}

fn gfc_kinds(tree: &Table) -> BTreeMap<String, String> {
    tree.get("gfc")
        .and_then(Value::as_table)
        .map(|g| {
            g.iter()
                .filter_map(|(name, v)| {
                    let kind = v.get("controller")?.get("kind")?.as_str()?;
                    Some((name.clone(), kind.to_string()))
                })
                .collect()
        })
        .unwrap_or_default()
}

fn gfc_entry_names(file: &Table) -> BTreeSet<String> {
    file.get("gfc")
        .and_then(Value::as_table)
        .map(|g| g.keys().cloned().collect())
        .unwrap_or_default()
}

struct Merged {
    tree: Table,
    from_file: BTreeSet<String>,
    from_override: BTreeSet<String>,
}

fn merge_all(
    file: &Table,
    overrides: &[Override],
    kinds: &BTreeMap<String, String>,
) -> Result<Merged, ConfigError> {
    let mut tree = default_tree(kinds, &gfc_entry_names(file));
    let mut from_file = BTreeSet::new();
    let mut from_override = BTreeSet::new();
    merge(&mut tree, file.clone(), "", &mut from_file)?;
    apply_overrides(&mut tree, overrides, &mut from_override)?;
    Ok(Merged {
        tree,
        from_file,
        from_override,
    })
}

/// Resolve a scenario tree (as read from a file) with overrides.
pub fn resolve_table(file: &Table, overrides: &[Override]) -> Result<ResolvedScenario, ConfigError> {
    // First pass finds each converter's kind; the second uses the gains of
    // that kind only, so stray gains for another kind are rejected.
    let first = merge_all(file, overrides, &BTreeMap::new())?;
    let kinds = gfc_kinds(&first.tree);
    let merged = merge_all(file, overrides, &kinds)?;

    let mut all = Vec::new();
    leaves("", &Value::Table(merged.tree.clone()), &mut all);
    let provenance = all
        .into_iter()
        .map(|path| {
            let kind = path
                .split('.')
                .nth(1)
                .and_then(|g| kinds.get(g))
                .map_or("", String::as_str);
            let tag = if merged.from_override.contains(&path) {
                Provenance::Override
            } else if merged.from_file.contains(&path) {
                Provenance::Scenario
            } else if is_paper_key(&path, kind) {
                Provenance::Paper
            } else {
                Provenance::Default
            };
            (path, tag)
        })
        .collect();
    let scenario = build(&merged.tree)?;
    Ok(ResolvedScenario {
        scenario,
        tree: merged.tree,
        provenance,
    })
}

/// Resolve scenario text.
pub fn resolve_str(text: &str, overrides: &[Override]) -> Result<ResolvedScenario, ConfigError> {
    if text
        .lines()
        .all(|l| l.trim().is_empty() || l.trim_start().starts_with('#'))
    {
        return Err(ConfigError::Syntax {
            line: 1,
            message: "scenario file is empty".into(),
        });
    }
    resolve_table(&parse_toml(text, "scenario")?, overrides)
}

/// Read a resolved JSON record back. Its provenance is kept; overrides
/// applied on top are tagged as such.
pub fn resolve_json(text: &str, overrides: &[Override]) -> Result<ResolvedScenario, ConfigError> {
    let file: ResolvedFile = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut r = resolve_table(&file.scenario, overrides)?;
    for (path, tag) in r.provenance.iter_mut() {
        if *tag != Provenance::Override {
            if let Some(t) = file.provenance.get(path) {
                *tag = *t;
            }
        }
    }
    Ok(r)
}

/// Read a scenario file (`.json` files are resolved records).
pub fn parse_scenario(path: &Path, overrides: &[Override]) -> Result<ResolvedScenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        resolve_json(&text, overrides)
    } else {
        resolve_str(&text, overrides)
    }
}

impl ResolvedScenario {
    /// JSON record holding the provenance map and the full resolved tree.
    pub fn to_json(&self) -> String {
        let rec = ResolvedFile {
            provenance: self.provenance.clone(),
            scenario: self.tree.clone(),
        };
        let mut s = serde_json::to_string_pretty(&rec).expect("resolved tree serializes");
        s.push('\n');
        s
    }
}

// ---------------------------------------------------------------------------
// Tree to typed scenario
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationFile {
    t_end: f64,
    dt: f64,
    log_decimation: i64,
    preroll: f64,
    collapse_threshold: f64,
    v_dc_trip: f64,
    dvoc_phase_law: DvocPhaseLaw,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConverterFile {
    v_dc_ref: f64,
    c_dc: f64,
    g_dc: f64,
    k_dc: f64,
    i_dc_max: f64,
    tau_dc: f64,
    x_f: f64,
    b_f: f64,
    r_f: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerFile {
    kind: String,
    alpha: f64,
    p_ref: f64,
    q_ref: f64,
    v_ref: f64,
    omega_ref: f64,
    d_omega: Option<f64>,
    j: Option<f64>,
    d_p: Option<f64>,
    eta: Option<f64>,
    mu: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GfcFile {
    bus: String,
    omega_f: f64,
    converter: ConverterFile,
    controller: ControllerFile,
    inner: InnerLoopConfig,
}

fn section<T: serde::de::DeserializeOwned>(tree: &Table, key: &str) -> Result<T, ConfigError> {
    let v = tree
        .get(key)
        .cloned()
        .ok_or_else(|| ConfigError::Missing(key.to_string()))?;
    typed(v, key)
}

fn typed<T: serde::de::DeserializeOwned>(v: Value, key: &str) -> Result<T, ConfigError> {
    v.try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        if let Some(field) = msg
            .strip_prefix("missing field `")
            .and_then(|m| m.split('`').next())
        {
            ConfigError::Missing(format!("{key}.{field}"))
        } else {
            ConfigError::invalid(key, msg)
        }
    })
}

fn gain(v: Option<f64>, key: &str) -> Result<f64, ConfigError> {
    v.ok_or_else(|| ConfigError::Missing(key.to_string()))
}

fn build(tree: &Table) -> Result<Scenario, ConfigError> {
    let name = tree
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| ConfigError::Missing("name".into()))?
        .to_string();
    let bases: Bases = section(tree, "bases")?;
    if !(bases.s_base_mva > 0.0 && bases.v_base_kv > 0.0 && bases.f_base_hz > 0.0) {
        return Err(ConfigError::invalid("bases", "bases must be positive"));
    }
    let sim: SimulationFile = section(tree, "simulation")?;
    if sim.log_decimation < 1 {
        return Err(ConfigError::invalid(
            "simulation.log_decimation",
            "must be at least 1",
        ));
    }
    let network: NetworkConfig = section(tree, "network")?;
    let gfc_files: BTreeMap<String, GfcFile> = section(tree, "gfc")?;

    let mut gfcs = Vec::new();
    for (name, g) in gfc_files {
        let key = format!("gfc.{name}");
        let c = &g.converter;
        if !(c.v_dc_ref > 0.0) {
            return Err(ConfigError::invalid(
                format!("{key}.converter.v_dc_ref"),
                "must be positive",
            ));
        }
        let dc = DcPerUnit::new(c.v_dc_ref);
        let wb = bases.omega_base();
        let converter = ConverterParams {
            c_dc: c.c_dc * dc.y_base(),
            g_dc: c.g_dc * dc.y_base(),
            l_f: c.x_f / wb,
            c_f: c.b_f / wb,
            r_f: c.r_f,
            i_dc_max: c.i_dc_max * dc.i_base(),
            v_dc_ref: c.v_dc_ref,
            k_dc: c.k_dc * dc.y_base(),
            tau_dc: c.tau_dc,
        };
        let ct = &g.controller;
        let ck = format!("{key}.controller");
        let kind = match ct.kind.as_str() {
            "droop" => OuterKind::Droop {
                d_omega: gain(ct.d_omega, &format!("{ck}.d_omega"))?,
            },
            "vsg" => OuterKind::Vsg {
                j: gain(ct.j, &format!("{ck}.j"))? / bases.s_base_va(),
                d_p: gain(ct.d_p, &format!("{ck}.d_p"))? / bases.s_base_va(),
            },
            "dvoc" => OuterKind::Dvoc {
                eta: gain(ct.eta, &format!("{ck}.eta"))?,
                mu: gain(ct.mu, &format!("{ck}.mu"))?,
                kappa: gain(ct.kappa, &format!("{ck}.kappa"))?,
            },
            other => {
                return Err(ConfigError::invalid(
                    format!("{ck}.kind"),
                    format!("unknown controller kind `{other}` (droop, vsg, dvoc)"),
                ))
            }
        };
        gfcs.push(GfcConfig {
            name,
            bus: g.bus,
            converter,
            outer: OuterControllerConfig {
                kind,
                alpha: ct.alpha,
                setpoints: Setpoints {
                    p_ref: ct.p_ref,
                    q_ref: ct.q_ref,
                    v_ref: ct.v_ref,
                    omega_ref: ct.omega_ref,
                    v_dc_ref: c.v_dc_ref,
                },
                dvoc_phase_law: sim.dvoc_phase_law,
            },
            inner: g.inner,
            omega_f: g.omega_f,
        });
    }

    let mut events: Vec<LoadStepEvent> = match tree.get("events") {
        Some(v) => typed(v.clone(), "events")?,
        None => Vec::new(),
    };
    events.sort_by(|a, b| a.t_event.total_cmp(&b.t_event));

    let scenario = Scenario {
        name,
        bases,
        network,
        gfcs,
        events,
        simulation: SimulationConfig {
            t_end: sim.t_end,
            dt: sim.dt,
            log_decimation: sim.log_decimation as usize,
            preroll: sim.preroll,
            collapse_threshold: sim.collapse_threshold,
            v_dc_trip: sim.v_dc_trip,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(s: &str) -> Override {
        Override::parse(s).unwrap()
    }

    const BASIC: &str = r#"
name = "t"
[[events]]
t_event = 1.0
bus = "bus5"
p_before = 0.0
p_after = 0.9
"#;

    #[test]
    fn defaults_resolve() {
        let r = resolve_str(BASIC, &[]).unwrap();
        assert_eq!(r.scenario.gfcs.len(), 2);
        assert_eq!(r.scenario.events.len(), 1);
        let g = &r.scenario.gfcs[0];
        assert!(matches!(g.outer.kind, OuterKind::Vsg { j, d_p } if j == 2e-5 && d_p == 1e-3));
        assert_eq!(g.inner.ki_v, 1.1109);
        assert_eq!(r.provenance["bases.s_base_mva"], Provenance::Paper);
        assert_eq!(r.provenance["gfc.gfc1.controller.j"], Provenance::Paper);
        assert_eq!(r.provenance["gfc.gfc1.converter.tau_dc"], Provenance::Default);
        assert_eq!(r.provenance["events.0.p_after"], Provenance::Scenario);
        assert_eq!(r.provenance["name"], Provenance::Scenario);
    }

    #[test]
    fn dc_per_unit_conversion() {
        let r = resolve_str(BASIC, &[ov("gfc1.converter.v_dc_ref=2"), ov("gfc1.converter.c_dc=0.4")])
            .unwrap();
        let c = &r.scenario.gfcs[0].converter;
        assert_eq!(c.c_dc, 0.1);
        assert_eq!(c.i_dc_max, 1.06 / 2.0);
        assert_eq!(r.scenario.gfcs[0].outer.setpoints.v_dc_ref, 2.0);
    }

    #[test]
    fn overrides_and_shorthand() {
        let r = resolve_str(BASIC, &[ov("gfc1.controller.alpha=0.75")]).unwrap();
        assert_eq!(r.scenario.gfcs[0].outer.alpha, 0.75);
        assert_eq!(r.scenario.gfcs[1].outer.alpha, 0.5);
        assert_eq!(r.provenance["gfc.gfc1.controller.alpha"], Provenance::Override);
        let r = resolve_str(BASIC, &[ov("gfc.*.controller.alpha=0.25")]).unwrap();
        assert!(r.scenario.gfcs.iter().all(|g| g.outer.alpha == 0.25));
        let r = resolve_str(BASIC, &[ov("events.0.p_after=0.78")]).unwrap();
        assert_eq!(r.scenario.events[0].p_after, 0.78);
        let r = resolve_str(BASIC, &[ov("simulation.t_end=2")]).unwrap();
        assert_eq!(r.scenario.simulation.t_end, 2.0);
    }

    #[test]
    fn kind_switch_uses_kind_gains() {
        let r = resolve_str(BASIC, &[ov("gfc1.controller.kind=droop")]).unwrap();
        let g = &r.scenario.gfcs[0];
        assert!(matches!(g.outer.kind, OuterKind::Droop { .. }));
        assert_eq!(g.inner.ki_v, 264.5);
        assert!(!r.tree["gfc"]["gfc1"]["controller"].as_table().unwrap().contains_key("j"));
    }

    #[test]
    fn stray_gain_for_other_kind_is_rejected() {
        let text = format!("{BASIC}\n[gfc.gfc1.controller]\nkind = \"droop\"\nj = 5.0\n");
        assert!(matches!(
            resolve_str(&text, &[]),
            Err(ConfigError::UnknownKey(k)) if k == "gfc.gfc1.controller.j"
        ));
    }

    #[test]
    fn unknown_keys() {
        assert!(matches!(
            resolve_str(BASIC, &[ov("gfc1.controller.nope=1")]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            resolve_str("name = \"x\"\n[simulation]\nspeed = 3\n", &[]),
            Err(ConfigError::UnknownKey(k)) if k == "simulation.speed"
        ));
    }

    #[test]
    fn syntax_errors_carry_line() {
        assert!(matches!(resolve_str("", &[]), Err(ConfigError::Syntax { .. })));
        let err = resolve_str("name = \"x\"\n\n[simulation\n", &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn semantic_errors_name_key() {
        let err = resolve_str(BASIC, &[ov("gfc1.controller.alpha=1.5")]).unwrap_err();
        assert!(err.to_string().contains("gfc.gfc1.controller.alpha"), "{err}");
        let err = resolve_str(BASIC, &[ov("gfc1.bus=bus42")]);
        assert!(err.is_ok(), "bus references are checked at assembly");
        let err = resolve_str(BASIC, &[ov("simulation.dt=\"fast\"")]).unwrap_err();
        assert!(err.to_string().contains("simulation.dt"), "{err}");
    }

    #[test]
    fn new_collection_entries_are_allowed() {
        let text = format!("{BASIC}\n[network.loads.extra]\nbus = \"bus7\"\np = 0.1\nq = 0.0\n");
        let r = resolve_str(&text, &[]).unwrap();
        assert!(r.scenario.network.loads.contains_key("extra"));
        let text = format!("{BASIC}\n[network.loads.extra]\nbus = \"bus7\"\n");
        assert!(matches!(resolve_str(&text, &[]), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let r = resolve_str(BASIC, &[ov("gfc2.controller.alpha=0.3"), ov("gfc1.converter.tau_dc=0.0123456789")])
            .unwrap();
        let json = r.to_json();
        let back = resolve_json(&json, &[]).unwrap();
        assert_eq!(back.scenario, r.scenario);
        assert_eq!(back.provenance, r.provenance);
        assert_eq!(back.to_json(), json);
    }
}
