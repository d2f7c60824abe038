//! Differentiable scalar functions of named arguments.
//!
//! The canonical representation is a sparse polynomial whose variables are named
//! invariants (`X1`, `eta3`, `Y6`, ...). Polynomials are closed under the exact
//! differentiation and substitution the closure families need.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    X1,
    X2,
    X3,
    X4,
    X5,
    X6,
    X7,
    X8,
    Q1,
    Q2,
    Q3,
    #[serde(rename = "eta1")]
    Eta1,
    #[serde(rename = "eta2")]
    Eta2,
    #[serde(rename = "eta3")]
    Eta3,
    #[serde(rename = "eta4")]
    Eta4,
    #[serde(rename = "eta5")]
    Eta5,
    #[serde(rename = "eta6")]
    Eta6,
    #[serde(rename = "eta7")]
    Eta7,
    #[serde(rename = "eta8")]
    Eta8,
    Y5,
    Y6,
    Y7,
    Y8,
    Z5,
    Z7,
    Z8,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "lambda_ll")]
    LambdaLl,
    /// lambda_a lambda_a - 4/3 lambda lambda_ll
    #[serde(rename = "w")]
    W,
}

pub const X_VARS: [Var; 8] = [Var::X1, Var::X2, Var::X3, Var::X4, Var::X5, Var::X6, Var::X7, Var::X8];
pub const ETA_VARS: [Var; 8] =
    [Var::Eta1, Var::Eta2, Var::Eta3, Var::Eta4, Var::Eta5, Var::Eta6, Var::Eta7, Var::Eta8];
pub const Q_VARS: [Var; 3] = [Var::Q1, Var::Q2, Var::Q3];

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).unwrap_or_default();
        f.write_str(s.trim_matches('"'))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exp: Vec<u32>,
    pub coef: f64,
}

/// Sparse multivariate polynomial over named variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomial")]
pub struct Polynomial {
    pub vars: Vec<Var>,
    pub terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawPolynomial {
    vars: Vec<Var>,
    terms: Vec<Term>,
}

impl TryFrom<RawPolynomial> for Polynomial {
    type Error = String;
    fn try_from(r: RawPolynomial) -> std::result::Result<Self, String> {
        for t in &r.terms {
            if t.exp.len() != r.vars.len() {
                return Err(format!("term exponent length {} != {} vars", t.exp.len(), r.vars.len()));
            }
        }
        let mut seen = r.vars.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != r.vars.len() {
            return Err("duplicate variable".into());
        }
        Ok(Polynomial { vars: r.vars, terms: r.terms }.normalized())
    }
}

impl Polynomial {
    pub fn zero(vars: &[Var]) -> Self {
        Polynomial { vars: vars.to_vec(), terms: vec![] }
    }

    pub fn constant(vars: &[Var], c: f64) -> Self {
        Polynomial { vars: vars.to_vec(), terms: vec![Term { exp: vec![0; vars.len()], coef: c }] }.normalized()
    }

    /// The single variable `v` over the variable list `vars`.
    pub fn var(vars: &[Var], v: Var) -> Self {
        let mut exp = vec![0; vars.len()];
        let i = vars.iter().position(|x| *x == v).expect("variable not in list");
        exp[i] = 1;
        Polynomial { vars: vars.to_vec(), terms: vec![Term { exp, coef: 1.0 }] }
    }

    pub fn monomial(vars: &[Var], exp: Vec<u32>, coef: f64) -> Self {
        assert_eq!(exp.len(), vars.len());
        Polynomial { vars: vars.to_vec(), terms: vec![Term { exp, coef }] }.normalized()
    }

    /// Merge equal monomials, drop zero coefficients, sort terms.
    pub fn normalized(mut self) -> Self {
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in self.terms.drain(..) {
            *acc.entry(t.exp).or_insert(0.0) += t.coef;
        }
        self.terms = acc.into_iter().filter(|(_, c)| *c != 0.0).map(|(exp, coef)| Term { exp, coef }).collect();
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exp.iter().sum()).max().unwrap_or(0)
    }

    /// Variables that actually occur with a nonzero exponent.
    pub fn support(&self) -> Vec<Var> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(i, _)| self.terms.iter().any(|t| t.exp[*i] > 0))
            .map(|(_, v)| *v)
            .collect()
    }

    /// Re-express over another variable list that contains the support.
    pub fn over(&self, vars: &[Var]) -> Result<Self> {
        let mut map = Vec::with_capacity(self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            match vars.iter().position(|x| x == v) {
                Some(j) => map.push(Some(j)),
                None if self.terms.iter().all(|t| t.exp[i] == 0) => map.push(None),
                None => {
                    return Err(Error::ArityMismatch {
                        what: "polynomial",
                        expected: fmt_vars(vars),
                        got: fmt_vars(&self.vars),
                    })
                }
            }
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut exp = vec![0; vars.len()];
                for (i, e) in t.exp.iter().enumerate() {
                    if let Some(j) = map[i] {
                        exp[j] += e;
                    }
                }
                Term { exp, coef: t.coef }
            })
            .collect();
        Ok(Polynomial { vars: vars.to_vec(), terms }.normalized())
    }

    fn aligned(&self, o: &Self) -> (Self, Self) {
        if self.vars == o.vars {
            return (self.clone(), o.clone());
        }
        let mut vars = self.vars.clone();
        for v in &o.vars {
            if !vars.contains(v) {
                vars.push(*v);
            }
        }
        (self.over(&vars).unwrap(), o.over(&vars).unwrap())
    }

    pub fn add(&self, o: &Self) -> Self {
        let (mut a, b) = self.aligned(o);
        a.terms.extend(b.terms);
        a.normalized()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut a = self.clone();
        a.terms.iter_mut().for_each(|t| t.coef *= c);
        a.normalized()
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = self.aligned(o);
        let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
        for s in &a.terms {
            for t in &b.terms {
                let exp = s.exp.iter().zip(&t.exp).map(|(x, y)| x + y).collect();
                terms.push(Term { exp, coef: s.coef * t.coef });
            }
        }
        Polynomial { vars: a.vars, terms }.normalized()
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut r = Polynomial::constant(&self.vars, 1.0);
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    /// Exact partial derivative with respect to `v` (zero if `v` is absent).
    pub fn diff(&self, v: Var) -> Self {
        let Some(i) = self.vars.iter().position(|x| *x == v) else {
            return Polynomial::zero(&self.vars);
        };
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exp[i] > 0)
            .map(|t| {
                let mut exp = t.exp.clone();
                exp[i] -= 1;
                Term { exp, coef: t.coef * t.exp[i] as f64 }
            })
            .collect();
        Polynomial { vars: self.vars.clone(), terms }.normalized()
    }

    /// Substitute every variable by a polynomial over `target`; variables without a
    /// substitute must not occur.
    pub fn compose(&self, subs: &[(Var, Polynomial)], target: &[Var]) -> Result<Self> {
        let mut images = Vec::with_capacity(self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            let img = match subs.iter().find(|(w, _)| w == v) {
                Some((_, p)) => Some(p.over(target)?),
                None if self.terms.iter().all(|t| t.exp[i] == 0) => None,
                None => {
                    return Err(Error::ArityMismatch {
                        what: "composition",
                        expected: fmt_vars(&subs.iter().map(|(v, _)| *v).collect::<Vec<_>>()),
                        got: fmt_vars(&self.vars),
                    })
                }
            };
            images.push(img);
        }
        let mut powers: Vec<Vec<Polynomial>> = images
            .iter()
            .map(|img| vec![Polynomial::constant(target, 1.0)].into_iter().chain(img.clone()).collect())
            .collect();
        let mut out = Polynomial::zero(target);
        for t in &self.terms {
            let mut prod = Polynomial::constant(target, t.coef);
            for (i, &e) in t.exp.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap().mul(&powers[i][1]);
                    powers[i].push(next);
                }
                prod = prod.mul(&powers[i][e as usize]);
            }
            out.terms.extend(prod.terms);
        }
        Ok(out.normalized())
    }

    /// Value, gradient and row-major Hessian with respect to `self.vars`.
    pub fn eval_full(&self, x: &[f64], order: u8) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.vars.len();
        let maxe = self.terms.iter().flat_map(|t| t.exp.iter()).copied().max().unwrap_or(0) as usize;
        let mut pw = vec![vec![1.0; maxe + 1]; n];
        for i in 0..n {
            for k in 1..=maxe {
                pw[i][k] = pw[i][k - 1] * x[i];
            }
        }
        let mut v = 0.0;
        let mut g = vec![0.0; if order >= 1 { n } else { 0 }];
        let mut h = vec![0.0; if order >= 2 { n * n } else { 0 }];
        let mut nz: Vec<usize> = Vec::with_capacity(n);
        for t in &self.terms {
            nz.clear();
            let mut m = t.coef;
            for (i, &e) in t.exp.iter().enumerate() {
                if e > 0 {
                    nz.push(i);
                    m *= pw[i][e as usize];
                }
            }
            v += m;
            if order == 0 {
                continue;
            }
            // product of all factors except those listed, with listed ones differentiated
            let partial = |skip: &[(usize, u32)]| -> f64 {
                let mut r = t.coef;
                for &i in &nz {
                    let e = t.exp[i];
                    let d = skip.iter().filter(|(j, _)| *j == i).map(|(_, k)| *k).sum::<u32>();
                    if d > e {
                        return 0.0;
                    }
                    let mut c = 1.0;
                    for q in 0..d {
                        c *= (e - q) as f64;
                    }
                    r *= c * pw[i][(e - d) as usize];
                }
                r
            };
            for &i in &nz {
                g[i] += partial(&[(i, 1)]);
                if order >= 2 {
                    for &j in &nz {
                        h[i * n + j] += if i == j { partial(&[(i, 2)]) } else { partial(&[(i, 1), (j, 1)]) };
                    }
                }
            }
        }
        (v, g, h)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_full(x, 0).0
    }

    /// Random polynomial with every monomial of total degree <= `degree` over `vars`,
    /// coefficients uniform in `[-1, 1]`.
    pub fn random(vars: &[Var], degree: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = vec![];
        for exp in monomials(vars.len(), degree) {
            terms.push(Term { exp, coef: rng.gen_range(-1.0..1.0) });
        }
        Polynomial { vars: vars.to_vec(), terms }.normalized()
    }

    /// Random polynomial with `count` distinct random monomials.
    pub fn random_sparse(vars: &[Var], degree: u32, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = monomials(vars.len(), degree);
        let mut terms = vec![];
        let mut used = vec![false; all.len()];
        while terms.len() < count.min(all.len()) {
            let k = rng.gen_range(0..all.len());
            if used[k] {
                continue;
            }
            used[k] = true;
            terms.push(Term { exp: all[k].clone(), coef: rng.gen_range(-1.0..1.0) });
        }
        Polynomial { vars: vars.to_vec(), terms }.normalized()
    }
}

/// All exponent vectors of length `n` with total degree <= `d`, in graded order.
pub fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut out = vec![];
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    rec(n, d, &mut vec![], &mut out);
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

fn fmt_vars(v: &[Var]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Value, gradient and row-major Hessian of a user-supplied function.
pub type Callback = dyn Fn(&[f64]) -> (f64, Vec<f64>, Vec<f64>) + Send + Sync;

#[derive(Clone)]
pub enum ScalarFunction {
    Polynomial(Polynomial),
    Callback { vars: Vec<Var>, f: Arc<Callback> },
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFunction::Polynomial(p) => p.fmt(f),
            ScalarFunction::Callback { vars, .. } => write!(f, "Callback({})", fmt_vars(vars)),
        }
    }
}

impl PartialEq for ScalarFunction {
    fn eq(&self, o: &Self) -> bool {
        match (self, o) {
            (ScalarFunction::Polynomial(a), ScalarFunction::Polynomial(b)) => a == b,
            (ScalarFunction::Callback { f: a, .. }, ScalarFunction::Callback { f: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Serialize for ScalarFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ScalarFunction::Polynomial(p) => p.serialize(s),
            ScalarFunction::Callback { .. } => Err(serde::ser::Error::custom("callback functions are not serializable")),
        }
    }
}

impl<'de> Deserialize<'de> for ScalarFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Polynomial::deserialize(d).map(ScalarFunction::Polynomial)
    }
}

impl From<Polynomial> for ScalarFunction {
    fn from(p: Polynomial) -> Self {
        ScalarFunction::Polynomial(p)
    }
}

impl ScalarFunction {
    pub fn callback(
        vars: &[Var],
        f: impl Fn(&[f64]) -> (f64, Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        ScalarFunction::Callback { vars: vars.to_vec(), f: Arc::new(f) }
    }

    pub fn vars(&self) -> &[Var] {
        match self {
            ScalarFunction::Polynomial(p) => &p.vars,
            ScalarFunction::Callback { vars, .. } => vars,
        }
    }

    /// Variables the value can depend on.
    pub fn dependencies(&self) -> Vec<Var> {
        match self {
            ScalarFunction::Polynomial(p) => p.support(),
            ScalarFunction::Callback { vars, .. } => vars.clone(),
        }
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match self {
            ScalarFunction::Polynomial(p) => Some(p),
            _ => None,
        }
    }

    pub fn eval_full(&self, x: &[f64], order: u8) -> (f64, Vec<f64>, Vec<f64>) {
        match self {
            ScalarFunction::Polynomial(p) => p.eval_full(x, order),
            ScalarFunction::Callback { f, .. } => f(x),
        }
    }

    /// Evaluate with arguments looked up by name; derivatives propagate through `T`.
    pub fn eval_with<T: Scalar>(&self, lookup: &dyn Fn(Var) -> T) -> T {
        let args: Vec<T> = self.vars().iter().map(|v| lookup(*v)).collect();
        let x: Vec<f64> = args.iter().map(|a| a.value()).collect();
        let (v, g, h) = self.eval_full(&x, T::ORDER);
        T::lift(v, &g, &h, &args)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const V3: [Var; 3] = [Var::X1, Var::X2, Var::X5];

    #[test]
    fn derivatives_match_central_differences() {
        for seed in 0..20 {
            let p = Polynomial::random(&V3, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let (_, g, h) = p.eval_full(&x, 2);
            let step = 1e-5;
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * step);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "grad {i}");
                let gp = p.eval_full(&xp, 1).1;
                let gm = p.eval_full(&xm, 1).1;
                for j in 0..3 {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * step);
                    assert!((fd2 - h[i * 3 + j]).abs() <= 1e-6 * h[i * 3 + j].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn diff_agrees_with_eval_full() {
        let p = Polynomial::random(&V3, 3, 5);
        let x = [0.3, -1.2, 0.8];
        let g = p.eval_full(&x, 1).1;
        for (i, v) in V3.iter().enumerate() {
            assert!((p.diff(*v).eval(&x) - g[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn compose_matches_nested_evaluation() {
        let outer = Polynomial::random(&[Var::Y6, Var::X1], 3, 2);
        let inner = Polynomial::random(&V3, 2, 3);
        let c = outer
            .compose(&[(Var::Y6, inner.clone()), (Var::X1, Polynomial::var(&V3, Var::X1))], &V3)
            .unwrap();
        let x = [0.4, 0.9, -0.6];
        let direct = outer.eval(&[inner.eval(&x), x[0]]);
        assert!((c.eval(&x) - direct).abs() < 1e-12);
    }

    #[test]
    fn compose_rejects_unbound_variable() {
        let p = Polynomial::var(&[Var::Y7], Var::Y7);
        assert!(p.compose(&[], &V3).is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let j = r#"{"vars":["X1","eta2","Y6"],"terms":[{"exp":[1,0,2],"coef":0.5},{"exp":[0,1,0],"coef":-2}]}"#;
        let f: ScalarFunction = serde_json::from_str(j).unwrap();
        assert!((f.eval_full(&[2.0, 3.0, 1.0], 0).0 - (1.0 - 6.0)).abs() < 1e-15);
        let back: ScalarFunction = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(f, back);
        let bad = r#"{"vars":["X1"],"terms":[{"exp":[1,1],"coef":1}]}"#;
        assert!(serde_json::from_str::<ScalarFunction>(bad).is_err());
    }

    #[test]
    fn callback_lifts_through_dual() {
        use crate::ad::Dual;
        let f = ScalarFunction::callback(&[Var::X1], |x| (x[0].sin(), vec![x[0].cos()], vec![-x[0].sin()]));
        let t = Dual::<1>::variable(0.5, 0);
        let r = f.eval_with(&|_| t);
        assert!((r.d[0] - 0.5_f64.cos()).abs() < 1e-15);
    }
}
