//! JSON instance files and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectorySample;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::problem::{default_a, DesignMode, Instance};

/// Design used for `a` when an instance file lists only `c`.
pub const FILE_DESIGN: (f64, f64, f64) = (1.0, 0.1, 0.1);

/// On-disk instance schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    pub gamma: f64,
    pub p_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance, graph: Option<&Graph>) -> Self {
        InstanceFile {
            n: inst.n(),
            p: inst.p().to_vec(),
            c: None,
            a: Some(inst.a().to_vec()),
            b: Some(inst.b().to_vec()),
            d: Some(inst.d().to_vec()),
            gamma: inst.gamma(),
            p_ref: inst.p_ref(),
            edges: graph.map(|g| g.edges().iter().map(|&(i, j)| [i, j]).collect()),
        }
    }

    /// Builds the instance and, if edges are listed, the connected graph.
    pub fn into_parts(self) -> Result<(Instance, Option<Graph>)> {
        let n = self.n;
        let check = |name: &str, v: &[f64]| {
            if v.len() != n {
                Err(Error::Shape(format!("field `{name}` has length {}, expected n = {n}", v.len())))
            } else {
                Ok(())
            }
        };
        check("p", &self.p)?;
        let d = self.d.unwrap_or_else(|| vec![0.0; n]);
        check("d", &d)?;
        let inst = match (self.c, self.a, self.b) {
            (Some(c), None, None) => {
                check("c", &c)?;
                let (t0, tau0, margin) = FILE_DESIGN;
                let a = default_a(&self.p, self.gamma, t0, tau0, margin, DesignMode::Centralized);
                Instance::from_costs(&c, a, d, self.p, self.gamma, self.p_ref)?
            }
            (Some(c), Some(a), None) => {
                check("c", &c)?;
                check("a", &a)?;
                Instance::from_costs(&c, a, d, self.p, self.gamma, self.p_ref)?
            }
            (None, Some(a), Some(b)) => {
                check("a", &a)?;
                check("b", &b)?;
                Instance::new(a, b, d, self.p, self.gamma, self.p_ref)?
            }
            _ => {
                return Err(Error::Parse("instance needs either `c` (optionally with `a`) or both `a` and `b`".into()))
            }
        };
        let graph = match self.edges {
            Some(edges) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                let g = Graph::new(n, &pairs)?;
                if !g.is_connected() {
                    return Err(Error::Disconnected);
                }
                Some(g)
            }
            None => None,
        };
        Ok((inst, graph))
    }
}

pub fn read_instance(path: &Path) -> Result<(Instance, Option<Graph>)> {
    let text = fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.into_parts()
}

pub fn write_instance(path: &Path, inst: &Instance, graph: Option<&Graph>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&InstanceFile::from_instance(inst, graph))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Formats with 12 significant digits, switching to exponent form for very large
/// or small magnitudes; infinities print as `inf` / `-inf`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..12).contains(&exp) {
        let s = format!("{:.11e}", v);
        let (mant, e) = s.split_once('e').expect("exponent form");
        return format!("{}e{}", trim_zeros(mant), e);
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Trajectory CSV with columns `t, x_0.., [y_0..,] energy`.
pub fn trajectory_csv(samples: &[TrajectorySample]) -> String {
    let mut out = String::new();
    let Some(first) = samples.first() else {
        return "t,energy\n".into();
    };
    let n = first.x.len();
    let with_y = first.y.is_some();
    out.push('t');
    for i in 0..n {
        let _ = write!(out, ",x_{i}");
    }
    if with_y {
        for i in 0..n {
            let _ = write!(out, ",y_{i}");
        }
    }
    out.push_str(",energy\n");
    for s in samples {
        out.push_str(&fmt_float(s.t));
        for v in s.x.iter().chain(s.y.iter().flatten()) {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push(',');
        out.push_str(&fmt_float(s.energy));
        out.push('\n');
    }
    out
}

/// Reads a fractional point: comma or whitespace separated numbers, optionally
/// across several lines; a non-numeric first line is treated as a header.
pub fn parse_fractional_point(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(v) => values.extend(v),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", k + 1))),
        }
    }
    Ok(values)
}

pub fn read_fractional_point(path: &Path) -> Result<Vec<f64>> {
    parse_fractional_point(&fs::read_to_string(path)?)
}
