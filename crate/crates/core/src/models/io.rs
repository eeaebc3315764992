//! Text model files: a header line naming the kind and shape, then one
//! `class_id bias weights...` row per class. Reals use 17 significant
//! digits so files round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ChainModel, HybridClassifier, ModelError, MultiLabelHead, Result, SoftmaxHead};
use crate::datasets::ClassId;

/// Classes, weight rows and biases of a linear head.
type LinearParams = (Vec<ClassId>, Vec<Vec<f64>>, Vec<f64>);

const MAGIC: &str = "marstag-model";
const VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Softmax(SoftmaxHead),
    MultiLabel(MultiLabelHead),
    Chain(ChainModel),
    Hybrid(HybridClassifier),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Softmax(_) => "softmax",
            Model::MultiLabel(_) => "multilabel",
            Model::Chain(_) => "chain",
            Model::Hybrid(_) => "hybrid",
        }
    }
}

fn row(out: &mut String, class: ClassId, bias: f64, w: &[f64]) {
    write!(out, "{} {bias:.16e}", class.0).expect("string write");
    for v in w {
        write!(out, " {v:.16e}").expect("string write");
    }
    out.push('\n');
}

fn write_linear(out: &mut String, kind: &str, classes: &[ClassId], weights: &[Vec<f64>], bias: &[f64]) {
    let d = weights.first().map(Vec::len).unwrap_or(0);
    writeln!(out, "{MAGIC} {VERSION} {kind} {} {d}", classes.len()).expect("string write");
    for ((c, w), b) in classes.iter().zip(weights).zip(bias) {
        row(out, *c, *b, w);
    }
}

fn render(model: &Model) -> Result<String> {
    let mut out = String::new();
    match model {
        Model::Softmax(h) => write_linear(&mut out, "softmax", &h.classes, &h.weights, &h.bias),
        Model::MultiLabel(h) => write_linear(&mut out, "multilabel", &h.classes, &h.weights, &h.bias),
        Model::Chain(c) => {
            if let Some(bad) = c.sites.iter().find(|s| s.is_empty() || s.contains(char::is_whitespace)) {
                return Err(ModelError::Invalid(format!("site {bad:?} cannot be stored")));
            }
            writeln!(
                out,
                "{MAGIC} {VERSION} chain {} {} {} {}",
                c.classes.len(),
                c.feature_dim,
                c.sites.len(),
                c.strict
            )
            .expect("string write");
            writeln!(out, "sites {}", c.sites.join(" ")).expect("string write");
            for ((cl, w), b) in c.classes.iter().zip(&c.weights).zip(&c.bias) {
                row(&mut out, *cl, *b, w);
            }
        }
        Model::Hybrid(h) => {
            writeln!(out, "{MAGIC} {VERSION} hybrid {}", h.trigger.0).expect("string write");
            write_linear(&mut out, "softmax", &h.v2.classes, &h.v2.weights, &h.v2.bias);
            write_linear(&mut out, "softmax", &h.v1.classes, &h.v1.weights, &h.v1.bias);
        }
    }
    Ok(out)
}

pub fn write_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render(model)?).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                self.line = i + 1;
                return Ok(l.split_whitespace().collect());
            }
        }
        Err(ModelError::Parse {
            line: self.line + 1,
            reason: "unexpected end of file".into(),
        })
    }

    fn err(&self, reason: impl Into<String>) -> ModelError {
        ModelError::Parse {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn header(&mut self, kind: &str) -> Result<Vec<&'a str>> {
        let h = self.next()?;
        if h.len() < 3 || h[0] != MAGIC || h[1] != VERSION {
            return Err(self.err(format!("expected '{MAGIC} {VERSION}' header")));
        }
        if h[2] != kind {
            return Err(self.err(format!("expected a {kind} model, found {}", h[2])));
        }
        Ok(h[3..].to_vec())
    }

    fn int(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("not an integer: {s:?}")))
    }

    fn row(&mut self, len: usize) -> Result<(ClassId, f64, Vec<f64>)> {
        let parts = self.next()?;
        if parts.len() != len + 2 {
            return Err(self.err(format!("expected {} values, found {}", len + 2, parts.len())));
        }
        let class = ClassId(self.int(parts[0])?);
        let vals = parts[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| self.err(format!("not a number: {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(self.err("non-finite parameter"));
        }
        Ok((class, vals[0], vals[1..].to_vec()))
    }

    fn linear(&mut self, kind: &str) -> Result<LinearParams> {
        let h = self.header(kind)?;
        if h.len() != 2 {
            return Err(self.err("expected class count and dimension"));
        }
        let (k, d) = (self.int(h[0])?, self.int(h[1])?);
        let (mut classes, mut weights, mut bias) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..k {
            let (c, b, w) = self.row(d)?;
            classes.push(c);
            bias.push(b);
            weights.push(w);
        }
        Ok((classes, weights, bias))
    }
}

fn kind_of(text: &str) -> Option<&str> {
    text.lines().find(|l| !l.trim().is_empty())?.split_whitespace().nth(2)
}

pub fn parse_model(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let model = match kind_of(text).unwrap_or_default() {
        "softmax" => {
            let (classes, weights, bias) = lines.linear("softmax")?;
            Model::Softmax(SoftmaxHead { classes, weights, bias })
        }
        "multilabel" => {
            let (classes, weights, bias) = lines.linear("multilabel")?;
            Model::MultiLabel(MultiLabelHead { classes, weights, bias })
        }
        "chain" => {
            let h = lines.header("chain")?;
            if h.len() != 4 {
                return Err(lines.err("expected N, D, site count and strict flag"));
            }
            let (n, d, s) = (lines.int(h[0])?, lines.int(h[1])?, lines.int(h[2])?);
            let strict = h[3]
                .parse::<bool>()
                .map_err(|_| lines.err("strict flag must be true or false"))?;
            let sites_line = lines.next()?;
            if sites_line.first() != Some(&"sites") || sites_line.len() != s + 1 || s == 0 {
                return Err(lines.err(format!("expected 'sites' followed by {s} names")));
            }
            let sites = sites_line[1..].iter().map(|v| v.to_string()).collect();
            let mut chain = ChainModel::zeros(Vec::new(), d, sites);
            chain.strict = strict;
            for t in 0..n {
                let (c, b, w) = lines.row(d + t + s)?;
                chain.classes.push(c);
                chain.bias.push(b);
                chain.weights.push(w);
            }
            Model::Chain(chain)
        }
        "hybrid" => {
            let h = lines.header("hybrid")?;
            if h.len() != 1 {
                return Err(lines.err("expected trigger class id"));
            }
            let trigger = ClassId(lines.int(h[0])?);
            let (c2, w2, b2) = lines.linear("softmax")?;
            let (c1, w1, b1) = lines.linear("softmax")?;
            Model::Hybrid(HybridClassifier::new(
                SoftmaxHead {
                    classes: c2,
                    weights: w2,
                    bias: b2,
                },
                SoftmaxHead {
                    classes: c1,
                    weights: w1,
                    bias: b1,
                },
                trigger,
            )?)
        }
        other => {
            return Err(ModelError::Parse {
                line: 1,
                reason: format!("unknown model kind {other:?}"),
            })
        }
    };
    Ok(model)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}
