//! Closed-form smooth fields on coordinate domains.
//!
//! [`FieldExpr`] provides values together with analytic gradients and
//! Hessians, so the same expression can be sampled onto a grid and handed to
//! the smooth-geometry oracle. Fields without analytic derivatives implement
//! [`SmoothField`] with the default `None` derivatives and the oracle falls
//! back to central differences.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

pub trait SmoothField {
    fn value(&self, p: &[f64]) -> f64;

    fn gradient(&self, _p: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn hessian(&self, _p: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Wraps a closure; derivatives are always taken by finite differences.
pub struct FnField<F>(pub F);

impl<F: Fn(&[f64]) -> f64> SmoothField for FnField<F> {
    fn value(&self, p: &[f64]) -> f64 {
        (self.0)(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    Const(f64),
    /// `Σ a_k x_k`
    Linear(Vec<f64>),
    /// `x_i x_j`
    Monomial(usize, usize),
    /// `sin x_k`
    Sin(usize),
    /// `ln(2 / (1 + |x|²))`; on ℝ² `e^{2w} δ` is the round unit sphere.
    Stereographic,
    /// `exp(-|x - c|² / (2 σ²))`
    Bump {
        center: Vec<f64>,
        width: f64,
    },
    /// `sin(k·x + φ)`
    Wave {
        k: Vec<f64>,
        phase: f64,
    },
    Scaled(f64, Box<FieldExpr>),
    Sum(Vec<FieldExpr>),
}

fn coord(p: &[f64], k: usize) -> f64 {
    p.get(k).copied().unwrap_or(0.0)
}

fn dot(a: &[f64], p: &[f64]) -> f64 {
    a.iter().enumerate().map(|(k, ak)| ak * coord(p, k)).sum()
}

impl FieldExpr {
    pub fn zero() -> Self {
        FieldExpr::Const(0.0)
    }

    pub fn x() -> Self {
        FieldExpr::Linear(vec![1.0])
    }

    pub fn y() -> Self {
        FieldExpr::Linear(vec![0.0, 1.0])
    }

    pub fn scaled(self, c: f64) -> Self {
        FieldExpr::Scaled(c, Box::new(self))
    }

    pub fn plus(self, other: FieldExpr) -> Self {
        match self {
            FieldExpr::Sum(mut terms) => {
                terms.push(other);
                FieldExpr::Sum(terms)
            }
            e => FieldExpr::Sum(vec![e, other]),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            FieldExpr::Const(_) => true,
            FieldExpr::Linear(a) => a.iter().all(|&x| x == 0.0),
            FieldExpr::Scaled(c, e) => *c == 0.0 || e.is_constant(),
            FieldExpr::Sum(ts) => ts.iter().all(FieldExpr::is_constant),
            _ => false,
        }
    }

    /// A smooth field built from a few random waves and Gaussian bumps on
    /// roughly unit scale. Used for probe families and property tests.
    pub fn random_smooth<R: Rng>(rng: &mut R, dim: usize, terms: usize) -> Self {
        let mut parts = Vec::with_capacity(terms);
        for t in 0..terms {
            let amp = rng.gen_range(-1.0..1.0);
            let e = if t % 2 == 0 {
                FieldExpr::Wave { k: (0..dim).map(|_| rng.gen_range(-2.5..2.5)).collect(), phase: rng.gen_range(0.0..std::f64::consts::TAU) }
            } else {
                FieldExpr::Bump { center: (0..dim).map(|_| rng.gen_range(-0.2..1.2)).collect(), width: rng.gen_range(0.3..0.8) }
            };
            parts.push(e.scaled(amp));
        }
        FieldExpr::Sum(parts)
    }

    fn eval(&self, p: &[f64]) -> f64 {
        match self {
            FieldExpr::Const(c) => *c,
            FieldExpr::Linear(a) => dot(a, p),
            FieldExpr::Monomial(i, j) => coord(p, *i) * coord(p, *j),
            FieldExpr::Sin(k) => coord(p, *k).sin(),
            FieldExpr::Stereographic => {
                let r2: f64 = p.iter().map(|x| x * x).sum();
                (2.0 / (1.0 + r2)).ln()
            }
            FieldExpr::Bump { center, width } => {
                let d2: f64 = (0..p.len().max(center.len())).map(|k| (coord(p, k) - coord(center, k)).powi(2)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            FieldExpr::Wave { k, phase } => (dot(k, p) + phase).sin(),
            FieldExpr::Scaled(c, e) => c * e.eval(p),
            FieldExpr::Sum(ts) => ts.iter().map(|t| t.eval(p)).sum(),
        }
    }

    fn grad(&self, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        let mut g = vec![0.0; n];
        match self {
            FieldExpr::Const(_) => {}
            FieldExpr::Linear(a) => {
                for (k, gk) in g.iter_mut().enumerate() {
                    *gk = coord(a, k);
                }
            }
            FieldExpr::Monomial(i, j) => {
                if *i < n {
                    g[*i] += coord(p, *j);
                }
                if *j < n {
                    g[*j] += coord(p, *i);
                }
            }
            FieldExpr::Sin(k) => {
                if *k < n {
                    g[*k] = p[*k].cos();
                }
            }
            FieldExpr::Stereographic => {
                let r2: f64 = p.iter().map(|x| x * x).sum();
                for k in 0..n {
                    g[k] = -2.0 * p[k] / (1.0 + r2);
                }
            }
            FieldExpr::Bump { center, width } => {
                let s2 = width * width;
                let b = self.eval(p);
                for k in 0..n {
                    g[k] = -b * (p[k] - coord(center, k)) / s2;
                }
            }
            FieldExpr::Wave { k, phase } => {
                let c = (dot(k, p) + phase).cos();
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = c * coord(k, i);
                }
            }
            FieldExpr::Scaled(c, e) => {
                for (gi, ei) in g.iter_mut().zip(e.grad(p)) {
                    *gi = c * ei;
                }
            }
            FieldExpr::Sum(ts) => {
                for t in ts {
                    for (gi, ti) in g.iter_mut().zip(t.grad(p)) {
                        *gi += ti;
                    }
                }
            }
        }
        g
    }

    fn hess(&self, p: &[f64]) -> DMatrix<f64> {
        let n = p.len();
        let mut h = DMatrix::zeros(n, n);
        match self {
            FieldExpr::Const(_) | FieldExpr::Linear(_) => {}
            FieldExpr::Monomial(i, j) => {
                if *i < n && *j < n {
                    h[(*i, *j)] += 1.0;
                    h[(*j, *i)] += 1.0;
                }
            }
            FieldExpr::Sin(k) => {
                if *k < n {
                    h[(*k, *k)] = -p[*k].sin();
                }
            }
            FieldExpr::Stereographic => {
                let r2: f64 = p.iter().map(|x| x * x).sum();
                let q = 1.0 + r2;
                for a in 0..n {
                    for b in 0..n {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        h[(a, b)] = -2.0 * delta / q + 4.0 * p[a] * p[b] / (q * q);
                    }
                }
            }
            FieldExpr::Bump { center, width } => {
                let s2 = width * width;
                let b = self.eval(p);
                for a in 0..n {
                    for c in 0..n {
                        let da = p[a] - coord(center, a);
                        let dc = p[c] - coord(center, c);
                        let delta = if a == c { 1.0 } else { 0.0 };
                        h[(a, c)] = b * (da * dc / (s2 * s2) - delta / s2);
                    }
                }
            }
            FieldExpr::Wave { k, phase } => {
                let s = (dot(k, p) + phase).sin();
                for a in 0..n {
                    for c in 0..n {
                        h[(a, c)] = -s * coord(k, a) * coord(k, c);
                    }
                }
            }
            FieldExpr::Scaled(c, e) => h = e.hess(p) * *c,
            FieldExpr::Sum(ts) => {
                for t in ts {
                    h += t.hess(p);
                }
            }
        }
        h
    }
}

impl SmoothField for FieldExpr {
    fn value(&self, p: &[f64]) -> f64 {
        self.eval(p)
    }

    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        Some(self.grad(p))
    }

    fn hessian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.hess(p))
    }
}

/// Parses a small expression language: a `+`-separated sum of terms, each an
/// optional `c*` coefficient times an atom. Atoms: a number, `ln2`, `x`, `y`,
/// `z`, `x^2`, `y^2`, `xy`, `r2`, `sinx`, `siny`, `stereographic`.
/// `const:c` is accepted as an alias for the number `c`.
impl FromStr for FieldExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |m: String| Error::Parse { context: format!("field expression {s:?}"), message: m };
        let s = s.trim();
        if s.is_empty() {
            return Err(err("empty expression".into()));
        }
        // split on '+' that is not part of an exponent like 1e+3
        let mut terms = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'+' && i > start && !matches!(bytes[i - 1], b'e' | b'E') {
                terms.push(&s[start..i]);
                start = i + 1;
            }
        }
        terms.push(&s[start..]);

        let mut parsed = Vec::new();
        for term in terms {
            let term = term.trim();
            let (coef, atom) = match term.split_once('*') {
                Some((c, a)) => (c.trim().parse::<f64>().map_err(|e| err(format!("bad coefficient {c:?}: {e}")))?, a.trim()),
                None => (1.0, term),
            };
            let atom = atom.strip_prefix("const:").unwrap_or(atom);
            let e = match atom {
                "0" | "zero" => FieldExpr::zero(),
                "ln2" => FieldExpr::Const(std::f64::consts::LN_2),
                "x" => FieldExpr::x(),
                "y" => FieldExpr::y(),
                "z" => FieldExpr::Linear(vec![0.0, 0.0, 1.0]),
                "x^2" => FieldExpr::Monomial(0, 0),
                "y^2" => FieldExpr::Monomial(1, 1),
                "xy" => FieldExpr::Monomial(0, 1),
                "r2" => FieldExpr::Sum(vec![FieldExpr::Monomial(0, 0), FieldExpr::Monomial(1, 1)]),
                "sinx" => FieldExpr::Sin(0),
                "siny" => FieldExpr::Sin(1),
                "stereographic" => FieldExpr::Stereographic,
                other => match other.parse::<f64>() {
                    Ok(c) => FieldExpr::Const(c),
                    Err(_) => return Err(err(format!("unknown atom {other:?}"))),
                },
            };
            parsed.push(if coef == 1.0 { e } else { e.scaled(coef) });
        }
        Ok(if parsed.len() == 1 { parsed.pop().unwrap() } else { FieldExpr::Sum(parsed) })
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldExpr::Const(c) => write!(f, "{c}"),
            FieldExpr::Linear(a) => {
                let names = ["x", "y", "z"];
                let parts: Vec<String> =
                    a.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, c)| format!("{c}*{}", names.get(k).copied().unwrap_or("?"))).collect();
                if parts.is_empty() {
                    write!(f, "0")
                } else {
                    write!(f, "{}", parts.join("+"))
                }
            }
            FieldExpr::Monomial(i, j) => write!(f, "x{i}*x{j}"),
            FieldExpr::Sin(k) => write!(f, "sin(x{k})"),
            FieldExpr::Stereographic => write!(f, "stereographic"),
            FieldExpr::Bump { center, width } => write!(f, "bump({center:?},{width})"),
            FieldExpr::Wave { k, phase } => write!(f, "wave({k:?},{phase})"),
            FieldExpr::Scaled(c, e) => write!(f, "{c}*({e})"),
            FieldExpr::Sum(ts) => {
                let parts: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
                write!(f, "{}", parts.join("+"))
            }
        }
    }
}
