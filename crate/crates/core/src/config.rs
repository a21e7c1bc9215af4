//! Declarative text model files.
//!
//! ```text
//! gamma = 1.0            # optional
//! [interior]
//! 1,0 = 0.2
//! -1,-1 = 0.6
//! [horizontal]
//! ...
//! [pi]
//! term = 0.5887, 0.3802, 1
//! normalize = true
//! [perturbation]
//! h_bar_10 = 0.2
//! auto_threshold = true
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::geomsum::{GeometricSum, GeometricTerm};
use crate::model::{Component, Dir, RandomWalk, Rates};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerturbationSettings {
    pub h_bar_10: Option<f64>,
    pub v_bar_01: Option<f64>,
    pub auto_threshold: bool,
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub walk: RandomWalk,
    pub pi: Option<GeometricSum>,
    pub perturbation: PerturbationSettings,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Top,
    Rates(Component),
    Pi,
    Perturbation,
}

fn parse_f64(value: &str, line: usize) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse { line, msg: format!("expected a number, got `{}`", value.trim()) })
}

fn parse_bool(value: &str, line: usize) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse { line, msg: format!("expected true or false, got `{other}`") }),
    }
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let mut section = Section::Top;
    let mut rates = [Rates::zero(); 4];
    let mut seen = [false; 4];
    let mut gamma = None;
    let mut terms = Vec::new();
    let mut normalize = true;
    let mut perturbation = PerturbationSettings::default();
    let slot = |c: Component| match c {
        Component::Interior => 0,
        Component::Horizontal => 1,
        Component::Vertical => 2,
        Component::Origin => 3,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "interior" => Section::Rates(Component::Interior),
                "horizontal" => Section::Rates(Component::Horizontal),
                "vertical" => Section::Rates(Component::Vertical),
                "origin" => Section::Rates(Component::Origin),
                "pi" => Section::Pi,
                "perturbation" => Section::Perturbation,
                other => return Err(Error::Parse { line, msg: format!("unknown section [{other}]") }),
            };
            if let Section::Rates(c) = section {
                seen[slot(c)] = true;
            }
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: "expected `key = value`".into() })?;
        let key = key.trim();
        match section {
            Section::Top => match key {
                "gamma" => gamma = Some(parse_f64(value, line)?),
                _ => return Err(Error::Parse { line, msg: format!("unknown key `{key}`") }),
            },
            Section::Rates(component) => {
                let (i, j) = key
                    .split_once(',')
                    .ok_or_else(|| Error::Parse { line, msg: format!("expected `i,j`, got `{key}`") })?;
                let parse_step = |s: &str| {
                    s.trim()
                        .parse::<i64>()
                        .map_err(|_| Error::Parse { line, msg: format!("bad direction component `{}`", s.trim()) })
                };
                let dir = Dir::try_new(parse_step(i)?, parse_step(j)?)
                    .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
                if !component.allows(dir) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("direction {dir} is not allowed on the {} component", component.name()),
                    });
                }
                let rate = parse_f64(value, line)?;
                if rate < 0.0 {
                    return Err(Error::Parse { line, msg: format!("negative rate {rate}") });
                }
                rates[slot(component)].set(dir, rate);
            }
            Section::Pi => match key {
                "term" => {
                    let parts: Vec<&str> = value.split(',').collect();
                    if parts.len() != 3 {
                        return Err(Error::Parse { line, msg: "expected `term = rho, sigma, weight`".into() });
                    }
                    terms.push(GeometricTerm::new(
                        parse_f64(parts[0], line)?,
                        parse_f64(parts[1], line)?,
                        parse_f64(parts[2], line)?,
                    ));
                }
                "normalize" => normalize = parse_bool(value, line)?,
                _ => return Err(Error::Parse { line, msg: format!("unknown key `{key}`") }),
            },
            Section::Perturbation => match key {
                "h_bar_10" => perturbation.h_bar_10 = Some(parse_f64(value, line)?),
                "v_bar_01" => perturbation.v_bar_01 = Some(parse_f64(value, line)?),
                "auto_threshold" => perturbation.auto_threshold = parse_bool(value, line)?,
                _ => return Err(Error::Parse { line, msg: format!("unknown key `{key}`") }),
            },
        }
    }
    if !seen[0] {
        return Err(Error::Config("model file has no [interior] section".into()));
    }
    let [interior, horizontal, vertical, origin] = rates;
    let walk = RandomWalk::new(interior, horizontal, vertical, origin, gamma)?;
    let pi = match (terms.is_empty(), normalize) {
        (true, _) => None,
        (false, true) => Some(GeometricSum::normalize(terms)?),
        (false, false) => Some(GeometricSum::new(terms)?),
    };
    Ok(ModelFile { walk, pi, perturbation })
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    parse_model(&std::fs::read_to_string(path)?)
}
