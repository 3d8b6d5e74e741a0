//! Model and coordinate-change file formats (JSON with expression strings)
//! and their conversion into core objects.

use std::path::Path;

use serde::Deserialize;

use kccjet_core::{
    parse, CoordinateChange, Expr, JetPoint, LinearConnection, SodeModel, SpatialMetric,
    TemporalMetric,
};

use crate::CliError;

/// Sample box for property checks. Absent ranges fall back to
/// `t ∈ [0.5, 1.5]`, `x, y ∈ [-1, 1]ⁿ`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    #[serde(default = "default_t_range")]
    pub t: [f64; 2],
    #[serde(default)]
    pub x: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub y: Option<Vec<[f64; 2]>>,
}

fn default_t_range() -> [f64; 2] {
    [0.5, 1.5]
}

impl DomainBox {
    pub fn defaults() -> DomainBox {
        DomainBox { t: default_t_range(), x: None, y: None }
    }

    pub fn x_range(&self, i: usize) -> [f64; 2] {
        self.x.as_ref().and_then(|v| v.get(i)).copied().unwrap_or([-1.0, 1.0])
    }

    pub fn y_range(&self, i: usize) -> [f64; 2] {
        self.y.as_ref().and_then(|v| v.get(i)).copied().unwrap_or([-1.0, 1.0])
    }
}

/// A SODE model: dimension, temporal metric, and exactly one of the four
/// constructors — explicit force `F`, spatial metric `phi` (harmonic
/// curves), vector field `X` (rheonomic prolongation), or linear
/// connection `gamma`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub h11: String,
    #[serde(default, rename = "F")]
    pub force: Option<Vec<String>>,
    #[serde(default)]
    pub phi: Option<Vec<Vec<String>>>,
    #[serde(default, rename = "X")]
    pub field: Option<Vec<String>>,
    #[serde(default)]
    pub gamma: Option<Vec<Vec<Vec<String>>>>,
    #[serde(default)]
    pub domain: Option<DomainBox>,
}

fn parse_expr(src: &str, dim: usize, what: &str) -> Result<Expr, CliError> {
    parse(src, dim).map_err(|e| CliError::usage(format!("{what}: in \"{src}\": {e}")))
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<ModelFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: line {}: {e}", path.display(), e.line())))
    }

    pub fn build(&self) -> Result<(SodeModel, DomainBox), CliError> {
        let n = self.dim;
        if n == 0 {
            return Err(CliError::usage("dim must be at least 1".into()));
        }
        let h = TemporalMetric::new(parse_expr(&self.h11, n, "h11")?)
            .map_err(|e| CliError::usage(e.to_string()))?;

        let kinds = [
            self.force.is_some(),
            self.phi.is_some(),
            self.field.is_some(),
            self.gamma.is_some(),
        ];
        if kinds.iter().filter(|k| **k).count() != 1 {
            return Err(CliError::usage(
                "exactly one of F, phi, X, gamma must be present".into(),
            ));
        }

        let model = if let Some(f) = &self.force {
            let force = parse_vec(f, n, "F")?;
            SodeModel::explicit(h, force)
        } else if let Some(phi) = &self.phi {
            let rows = parse_matrix(phi, n, "phi")?;
            let metric =
                SpatialMetric::new(rows).map_err(|e| CliError::usage(e.to_string()))?;
            SodeModel::harmonic(h, metric)
        } else if let Some(x) = &self.field {
            let field = parse_vec(x, n, "X")?;
            SodeModel::from_vectorfield(field, h)
        } else {
            let g = self.gamma.as_ref().unwrap();
            if g.len() != n {
                return Err(CliError::usage(format!("gamma must have {n} outer entries")));
            }
            let mut rank3 = Vec::with_capacity(n);
            for layer in g {
                rank3.push(parse_matrix(layer, n, "gamma")?);
            }
            let conn =
                LinearConnection::new(rank3).map_err(|e| CliError::usage(e.to_string()))?;
            SodeModel::from_connection(conn, h)
        }
        .map_err(|e| CliError::usage(e.to_string()))?;

        let domain = self.domain.clone().unwrap_or_else(DomainBox::defaults);
        Ok((model, domain))
    }
}

fn parse_vec(src: &[String], n: usize, what: &str) -> Result<Vec<Expr>, CliError> {
    if src.len() != n {
        return Err(CliError::usage(format!("{what} must have {n} components")));
    }
    src.iter().map(|s| parse_expr(s, n, what)).collect()
}

fn parse_matrix(src: &[Vec<String>], n: usize, what: &str) -> Result<Vec<Vec<Expr>>, CliError> {
    if src.len() != n || src.iter().any(|row| row.len() != n) {
        return Err(CliError::usage(format!("{what} must be a {n}x{n} matrix")));
    }
    src.iter().map(|row| parse_vec(row, n, what)).collect()
}

/// A jet coordinate change with explicit forward and inverse maps.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeFile {
    pub t_fwd: String,
    pub t_inv: String,
    pub x_fwd: Vec<String>,
    pub x_inv: Vec<String>,
}

impl ChangeFile {
    pub fn load(path: &Path) -> Result<ChangeFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: line {}: {e}", path.display(), e.line())))
    }

    pub fn build(&self, n: usize) -> Result<CoordinateChange, CliError> {
        let t_fwd = parse_expr(&self.t_fwd, n, "t_fwd")?;
        let t_inv = parse_expr(&self.t_inv, n, "t_inv")?;
        let x_fwd = parse_vec(&self.x_fwd, n, "x_fwd")?;
        let x_inv = parse_vec(&self.x_inv, n, "x_inv")?;
        CoordinateChange::new(t_fwd, t_inv, x_fwd, x_inv)
            .map_err(|e| CliError::usage(e.to_string()))
    }
}

/// Parses `"t=0.5, x=[1, 2], y=[0.1, -1]"` into a jet point of dimension n.
pub fn parse_at(src: &str, n: usize) -> Result<JetPoint, CliError> {
    let bad = |msg: &str| CliError::usage(format!("--at \"{src}\": {msg}"));
    let mut t = None;
    let mut x = None;
    let mut y = None;

    // split on commas outside brackets
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in src.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&src[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&src[start..]);

    for part in parts {
        let part = part.trim();
        let Some((key, value)) = part.split_once('=') else {
            return Err(bad("expected key=value entries"));
        };
        let value = value.trim();
        match key.trim() {
            "t" => {
                t = Some(value.parse::<f64>().map_err(|e| bad(&format!("t: {e}")))?);
            }
            "x" => x = Some(parse_list(value).map_err(|m| bad(&m))?),
            "y" => y = Some(parse_list(value).map_err(|m| bad(&m))?),
            other => return Err(bad(&format!("unknown key {other}"))),
        }
    }
    let t = t.ok_or_else(|| bad("missing t"))?;
    let x = x.ok_or_else(|| bad("missing x"))?;
    let y = y.ok_or_else(|| bad("missing y"))?;
    if x.len() != n || y.len() != n {
        return Err(bad(&format!("x and y must each have {n} entries")));
    }
    Ok(JetPoint::new(t, x, y))
}

fn parse_list(src: &str) -> Result<Vec<f64>, String> {
    let inner = src
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("{src}: expected [v1, v2, ...]"))?;
    inner
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s}: {e}")))
        .collect()
}
