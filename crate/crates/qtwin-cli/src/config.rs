//! Config resolution: built-in presets, file lookup through
//! `QTWIN_CONFIG_DIR`, and `--set key=value` overrides applied on the JSON
//! representation before deserialization.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

use qtwin::optimize::OptimizeConfig;
use qtwin::qsim::QubitConfig;

/// Environment variable holding the default directory for config files.
pub const CONFIG_DIR_ENV: &str = "QTWIN_CONFIG_DIR";

/// Resolves `name` to a file path: absolute/relative paths that exist win,
/// then `$QTWIN_CONFIG_DIR/name`.
fn find_config_file(name: &str) -> Option<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Some(direct);
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let in_dir = Path::new(&dir).join(name);
        if in_dir.is_file() {
            return Some(in_dir);
        }
    }
    None
}

/// Loads a qubit config: `general` / `specific` presets or a JSON file.
pub fn load_qubit_config(name: &str, sets: &[(String, Value)]) -> Result<QubitConfig> {
    let value = match name {
        "general" => serde_json::to_value(QubitConfig::general())?,
        "specific" => serde_json::to_value(QubitConfig::specific())?,
        other => {
            let path = find_config_file(other)
                .ok_or_else(|| anyhow!("qubit config '{other}' is neither a preset (general, specific) nor a readable file"))?;
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
    };
    let value = apply_sets(value, sets, "qubit")?;
    let cfg: QubitConfig = serde_json::from_value(value).context("invalid qubit config")?;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(cfg)
}

/// Loads an optimization config: `desk` / `paper` presets or a JSON file.
pub fn load_optimize_config(
    name: &str,
    seed: u64,
    sets: &[(String, Value)],
) -> Result<OptimizeConfig> {
    let value = match name {
        "desk" => serde_json::to_value(OptimizeConfig::desk(seed))?,
        "paper" => serde_json::to_value(OptimizeConfig::paper(seed))?,
        other => {
            let path = find_config_file(other).ok_or_else(|| {
                anyhow!("optimize config '{other}' is neither a preset (desk, paper) nor a readable file")
            })?;
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
    };
    let mut value = apply_sets(value, sets, "optimize")?;
    // The CLI seed flag wins over whatever the file carries.
    if let Value::Object(map) = &mut value {
        map.insert("seed".into(), serde_json::json!(seed));
    }
    let cfg: OptimizeConfig =
        serde_json::from_value(value).context("invalid optimize config")?;
    cfg.resolve_stages().map_err(|e| anyhow!("{e}"))?;
    Ok(cfg)
}

/// Parses `--set key=value` arguments. Values are JSON when possible,
/// strings otherwise.
pub fn parse_sets(raw: &[String]) -> Result<Vec<(String, Value)>> {
    raw.iter()
        .map(|entry| {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got '{entry}'"))?;
            let parsed = serde_json::from_str(value)
                .unwrap_or_else(|_| Value::String(value.to_string()));
            Ok((key.to_string(), parsed))
        })
        .collect()
}

/// Applies overrides with keys scoped by `scope.` (e.g. `qubit.noise.enabled`)
/// or unscoped (applied as-is) to the JSON tree.
pub fn apply_sets(mut value: Value, sets: &[(String, Value)], scope: &str) -> Result<Value> {
    let prefix = format!("{scope}.");
    for (key, v) in sets {
        let path = match key.strip_prefix(&prefix) {
            Some(rest) => rest,
            None if !key.contains('.') || !is_scoped(key) => key.as_str(),
            None => continue, // belongs to another scope
        };
        set_path(&mut value, path, v.clone())
            .with_context(|| format!("applying --set {key}"))?;
    }
    Ok(value)
}

/// A key counts as scoped when its first component names a known scope.
fn is_scoped(key: &str) -> bool {
    matches!(
        key.split('.').next(),
        Some("qubit") | Some("strategy") | Some("optimize") | Some("train")
    )
}

fn set_path(root: &mut Value, path: &str, new: Value) -> Result<()> {
    let mut current = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i == parts.len() - 1;
        match current {
            Value::Object(map) => {
                if last {
                    // Overrides may only touch fields that exist; silently
                    // inserting unknown keys would hide typos.
                    match map.get_mut(*part) {
                        Some(slot) => {
                            *slot = new;
                            return Ok(());
                        }
                        None => bail!("unknown config field '{part}'"),
                    }
                }
                current = map
                    .get_mut(*part)
                    .ok_or_else(|| anyhow!("unknown config field '{part}'"))?;
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| anyhow!("expected array index, got '{part}'"))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| anyhow!("array index {idx} out of range"))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                current = slot;
            }
            _ => bail!("cannot descend into scalar at '{part}'"),
        }
    }
    bail!("empty --set path")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sets_apply_scoped_and_nested() {
        let value = serde_json::to_value(QubitConfig::general()).unwrap();
        let sets = parse_sets(&[
            "qubit.noise.enabled=false".into(),
            "qubit.eps_max_mv=1.5".into(),
            "strategy.length_range=[10,20]".into(), // other scope: ignored here
        ])
        .unwrap();
        let value = apply_sets(value, &sets, "qubit").unwrap();
        let cfg: QubitConfig = serde_json::from_value(value).unwrap();
        assert!(!cfg.noise.enabled);
        assert_eq!(cfg.eps_max_mv, 1.5);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let value = serde_json::to_value(QubitConfig::general()).unwrap();
        let sets = parse_sets(&["qubit.nonsense=1".into()]).unwrap();
        assert!(apply_sets(value, &sets, "qubit").is_err());
    }

    #[test]
    fn presets_resolve() {
        assert!(load_qubit_config("general", &[]).is_ok());
        assert!(load_qubit_config("specific", &[]).is_ok());
        assert!(load_qubit_config("no-such-thing", &[]).is_err());
        assert!(load_optimize_config("desk", 1, &[]).is_ok());
        assert!(load_optimize_config("paper", 1, &[]).is_ok());
    }
}
