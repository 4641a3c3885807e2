//! `key = value` configuration files. `#` starts a comment; values may be
//! quoted.

use std::path::Path;

use crate::energies::Energy;
use crate::solver::SolverConfig;

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", i + 1));
        };
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .or_else(|| v.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
            .unwrap_or(v);
        out.push((k.trim().replace('-', "_"), v.to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse '{v}'"))
}

fn flag(key: &str, v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, got '{v}'")),
    }
}

/// Applies entries in order. Returns the energy if one was named.
pub fn apply_config(cfg: &mut SolverConfig, entries: &[(String, String)]) -> Result<Option<Energy>, String> {
    let mut energy = None;
    for (k, v) in entries {
        let k = k.as_str();
        match k {
            "alpha" => cfg.alpha = num(k, v)?,
            "gamma" => cfg.gamma = num(k, v)?,
            "beta_start" => cfg.beta_start = num(k, v)?,
            "beta_end" => cfg.beta_end = num(k, v)?,
            "beta_ramp" => cfg.beta_ramp = num(k, v)?,
            "max_outer_iters" => cfg.max_outer_iters = num(k, v)?,
            "grad_tol" => cfg.grad_tol = num(k, v)?,
            "obj_decrease_tol" => cfg.obj_decrease_tol = num(k, v)?,
            "lbfgs_memory" => cfg.lbfgs_memory = num(k, v)?,
            "lbfgs_max_iters" => cfg.lbfgs_max_iters = num(k, v)?,
            "repair_lbfgs_steps" => cfg.repair_lbfgs_steps = num(k, v)?,
            "hard_boundary" => cfg.hard_boundary = flag(k, v)?,
            "stage_boundary_fixed" => cfg.stages.boundary_fixed = flag(k, v)?,
            "stage_repair" => cfg.stages.repair = flag(k, v)?,
            "stage_free" => cfg.stages.free = flag(k, v)?,
            "stage_post_repair" => cfg.stages.post_repair = flag(k, v)?,
            "energy" => energy = Some(Energy::from_name(v).ok_or_else(|| format!("energy: unknown energy '{v}'"))?),
            _ => return Err(format!("unknown key '{k}'")),
        }
    }
    Ok(energy)
}
