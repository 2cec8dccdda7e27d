//! Text rendering of optimizer-state accounting.
//!
//! The format is a list of `[section]` headers followed by `key = value`
//! lines; `#` starts a comment. Counts are in elements, and each state
//! category also gets byte estimates at 2- and 4-byte widths.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use natgalore_core::{MemoryReport, Mode, OptimizerConfig, Side, SlotMemory};

use crate::error::{Error, Result};

/// Accounting for a single `rows × cols` parameter under `mode`.
pub fn for_shape(rows: usize, cols: usize, rank: usize, history: usize, mode: Mode) -> Result<MemoryReport> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!("invalid shape {rows}x{cols}")));
    }
    let cfg = OptimizerConfig {
        mode,
        rank,
        history,
        ..OptimizerConfig::default()
    };
    cfg.validate()?;
    let projection = cfg
        .projects(rows, cols)
        .then(|| (Side::for_shape(rows, cols), rank.min(rows.min(cols))));
    let history_len = if mode == Mode::NaturalGalore { history } else { 0 };
    let slot = SlotMemory::estimate("param".into(), rows, cols, projection, history_len);
    Ok(MemoryReport::new(vec![slot]))
}

/// Warnings worth surfacing for one slot.
pub fn warnings(s: &SlotMemory) -> Vec<String> {
    let mut out = Vec::new();
    if s.projection.is_some() && s.ratio() >= 1.0 {
        out.push(format!(
            "warning: optimizer state is not smaller than full-space Adam (ratio {:.4})",
            s.ratio()
        ));
    }
    if s.history > 0 {
        out.push(format!(
            "note: gradient history holds {:.2}x the moment storage",
            s.history_to_moments()
        ));
    }
    out
}

fn section(out: &mut String, title: &str, s: &SlotMemory) {
    let _ = writeln!(out, "[{title}]");
    let _ = writeln!(out, "shape = {}x{}", s.shape.0, s.shape.1);
    match s.projection {
        Some((side, r)) => {
            let side = match side {
                Side::Left => "left",
                Side::Right => "right",
            };
            let _ = writeln!(out, "projection = {side}");
            let _ = writeln!(out, "rank = {r}");
        }
        None => {
            let _ = writeln!(out, "projection = none");
        }
    }
    let _ = writeln!(out, "history_len = {}", s.history_len);
    let categories = [
        ("parameters", s.parameters),
        ("gradients", s.gradients),
        ("projector", s.projector),
        ("moments", s.moments),
        ("history", s.history),
        ("optimizer_state", s.optimizer_state()),
        ("full_adam_state", s.baseline()),
    ];
    for (key, n) in categories {
        let _ = writeln!(out, "{key} = {n}");
        let _ = writeln!(out, "{key}_bytes_2 = {}", SlotMemory::bytes(n, 2));
        let _ = writeln!(out, "{key}_bytes_4 = {}", SlotMemory::bytes(n, 4));
    }
    let _ = writeln!(out, "ratio = {}", s.ratio());
    let _ = writeln!(out, "moment_ratio = {}", s.moment_ratio());
    for w in warnings(s) {
        let _ = writeln!(out, "# {w}");
    }
}

pub fn render(report: &MemoryReport) -> String {
    let mut out = String::new();
    for s in &report.slots {
        section(&mut out, &s.name, s);
        out.push('\n');
    }
    section(&mut out, "total", &report.total);
    out
}

/// Parses rendered text back into `section → key → value`.
pub fn parse(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            out.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let bad = || Error::InvalidInput(format!("memory report line {}: `{raw}`", n + 1));
        let (k, v) = line.split_once('=').ok_or_else(bad)?;
        let sec = current.as_ref().ok_or_else(bad)?;
        out.get_mut(sec)
            .expect("section exists")
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
