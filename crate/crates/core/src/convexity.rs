//! Hessian of h', the block quadratic forms at the comparison state C and the
//! leading-minor convexity criteria.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Jet, Scalar};
use crate::closure::{potentials, ClosureSpec, Form};
use crate::error::{Error, Result};
use crate::function::{Polynomial, Var, ETA_VARS};
use crate::invariants::x_from_eta_polys;
use crate::state::{c_pattern_deviation, state_c, MultiplierState, DIM, I_A, I_L, I_LAMBDA, I_M, I_P};

pub type Matrix14 = [[f64; DIM]; DIM];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub h: Vec<Vec<f64>>,
    /// max |H - H^T| / max |H|
    pub asymmetry: f64,
    pub eigenvalues: Vec<f64>,
}

impl HessianReport {
    pub fn matrix(&self) -> Matrix14 {
        let mut m = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            m[i].copy_from_slice(&self.h[i]);
        }
        m
    }

    /// Q(delta) = delta^T H delta in storage coordinates.
    pub fn quadratic_form(&self, d: &MultiplierState) -> f64 {
        quad(&self.matrix(), &d.coords())
    }
}

fn quad(h: &Matrix14, c: &[f64; DIM]) -> f64 {
    let mut s = 0.0;
    for i in 0..DIM {
        for j in 0..DIM {
            s += c[i] * h[i][j] * c[j];
        }
    }
    s
}

fn bilinear(h: &Matrix14, a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
    let mut s = 0.0;
    for i in 0..DIM {
        for j in 0..DIM {
            s += a[i] * h[i][j] * b[j];
        }
    }
    s
}

fn max_entry(h: &Matrix14) -> f64 {
    h.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn eigenvalues(h: &Matrix14) -> Vec<f64> {
    let m = DMatrix::from_fn(DIM, DIM, |i, j| h[i][j]);
    let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Exact second derivatives of h' in storage coordinates.
pub fn hessian(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<HessianReport> {
    let (h, _) = potentials(&Jet::<DIM>::seed(state.coords()), spec, eps1)?;
    let m = h.h;
    let scale = max_entry(&m);
    let mut asym = 0.0_f64;
    for i in 0..DIM {
        for j in 0..DIM {
            asym = asym.max((m[i][j] - m[j][i]).abs());
        }
    }
    Ok(HessianReport {
        h: m.iter().map(|r| r.to_vec()).collect(),
        asymmetry: if scale > 0.0 { asym / scale } else { 0.0 },
        eigenvalues: eigenvalues(&m),
    })
}

/// Central-difference Hessian of h'.
pub fn fd_hessian(state: &MultiplierState, spec: &ClosureSpec, eps1: f64, step: f64) -> Result<Matrix14> {
    let c = state.coords();
    let f = |c: &[f64; DIM]| potentials(c, spec, eps1).map(|r| r.0);
    let mut m = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in i..DIM {
            let mut v = 0.0;
            for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                let mut p = c;
                p[i] += si * step;
                p[j] += sj * step;
                v += w * f(&p)?;
            }
            m[i][j] = v / (4.0 * step * step);
            m[j][i] = m[i][j];
        }
    }
    Ok(m)
}

/// Second derivative of h' along `d`, from a one-direction jet.
pub fn second_directional_derivative(state: &MultiplierState, d: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<f64> {
    let (s, v) = (state.coords(), d.coords());
    let t = Jet::<1>::variable(0.0, 0);
    let c: [Jet<1>; DIM] = std::array::from_fn(|i| t * v[i] + s[i]);
    Ok(potentials(&c, spec, eps1)?.0.h[0][0])
}

/// Coefficients of the block forms Q1 (a), Q2 (b) and Q3 (c) at state C.
///
/// Q1 = u^T a u with u = (dlambda, dlambda_ll, dlambda_ppll); Q2 is, for each i,
/// b22 dl_i^2 + 2 b12 dl_i dm_i / lambda_ppll + b11 (dm_i / lambda_ppll)^2 with
/// dl = dlambda_i, dm = dlambda_ill; Q3 = c dlambda_<rs> dlambda_<rs>.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a: [[f64; 3]; 3],
    pub b11: f64,
    pub b12: f64,
    pub b22: f64,
    pub c: f64,
}

impl Coefficients {
    pub fn b(&self) -> [[f64; 2]; 2] {
        [[self.b11, self.b12], [self.b12, self.b22]]
    }

    fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.a.iter().flatten().copied().collect();
        v.extend([self.b11, self.b12, self.b22, self.c]);
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry-wise difference relative to the largest entry of either set.
    pub fn max_rel_diff(&self, o: &Coefficients) -> f64 {
        let (a, b) = (self.flat(), o.flat());
        let scale = a.iter().chain(&b).fold(0.0_f64, |m, v| m.max(v.abs()));
        let d = a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        if scale == 0.0 {
            0.0
        } else {
            d / scale
        }
    }
}

/// eta at state C as polynomials in (lambda, lambda_ll, lambda_ppll).
pub fn eta_star<T: Scalar>(lambda: T, ll: T, p: T) -> [T; 8] {
    let ll2 = ll * ll;
    let ll3 = ll2 * ll;
    [
        p,
        ll * (-16.0 / 5.0),
        ll2 * (32.0 / 75.0),
        ll3 * (-64.0 / 3375.0),
        lambda * 16.0,
        lambda * ll * (-32.0 / 5.0),
        lambda * ll2 * (64.0 / 75.0),
        lambda * ll3 * (-128.0 / 3375.0),
    ]
}

/// h' as a function of eta for an eta-form closure.
pub fn h_of_eta<T: Scalar>(eta: &[T; 8], spec: &ClosureSpec) -> Result<T> {
    if spec.form != Form::Eta {
        return Err(Error::FormMismatch { form: "eta", expected: "eta closure".into(), got: spec.form.name().into() });
    }
    if let Some(v) = spec.functions.iter().flat_map(|f| f.dependencies()).find(|v| !ETA_VARS.contains(v)) {
        return Err(Error::FormMismatch { form: "eta", expected: "functions of eta1..eta8".into(), got: format!("dependence on {v}") });
    }
    let lookup = |v: Var| eta[ETA_VARS.iter().position(|z| *z == v).expect("eta variable")];
    let xs = x_from_eta_polys();
    let x: Vec<T> = xs[..4].iter().map(|p: &Polynomial| crate::function::ScalarFunction::from(p.clone()).eval_with(&lookup)).collect();
    let w = spec.convention.weights();
    let mut h = T::zero();
    for r in 0..4 {
        h += spec.functions[r].eval_with(&lookup) * x[r] * w[r];
    }
    Ok(h / eta[0])
}

fn check_c(state: &MultiplierState) -> Result<(f64, f64, f64)> {
    let d = c_pattern_deviation(state);
    if d > 1e-12 {
        return Err(Error::NotStateC(d));
    }
    Ok((state.lambda, state.lambda_ll(), state.lambda_ppll))
}

fn first_derivatives(state: &MultiplierState, spec: &ClosureSpec) -> Result<(f64, f64, f64, [f64; 8])> {
    let (lam, ll, p) = check_c(state)?;
    let e = eta_star(lam, ll, p);
    let g = h_of_eta(&Dual::<8>::seed(e), spec)?;
    Ok((lam, ll, p, g.d))
}

fn a_block(lam: f64, ll: f64, p: f64, spec: &ClosureSpec) -> Result<[[f64; 3]; 3]> {
    let u = Jet::<3>::seed([lam, ll, p]);
    let e = eta_star(u[0], u[1], u[2]);
    Ok(h_of_eta(&e, spec)?.h)
}

/// Coefficients from the exact second-order expansions of eta at state C.
pub fn coefficients_at_c(state: &MultiplierState, spec: &ClosureSpec) -> Result<Coefficients> {
    let (lam, ll, p, d) = first_derivatives(state, spec)?;
    let dd = |j: usize| d[j - 1];
    let (l2, l3, l4) = (ll * ll, ll * ll * ll, ll * ll * ll * ll);
    let b22 = 8.0 * dd(6) - 32.0 / 15.0 * ll * dd(7) + 32.0 / 225.0 * l2 * dd(8);
    let b12 = -4.0 * dd(5) + 4.0 / 15.0 * ll * dd(6) + 32.0 / 225.0 * l2 * dd(7) - 16.0 / 1125.0 * l3 * dd(8);
    let b11 = 2.0 / 3.0 * ll * dd(5) - 2.0 / 45.0 * l2 * dd(6) - 16.0 / 675.0 * l3 * dd(7)
        + 8.0 / 3375.0 * l4 * dd(8)
        + 2.0
            * p
            * (2.0 * dd(2) - 8.0 / 15.0 * ll * dd(3) + 8.0 / 225.0 * l2 * dd(4) + 4.0 * lam * dd(6)
                - 16.0 / 15.0 * lam * ll * dd(7)
                + 16.0 / 225.0 * lam * l2 * dd(8));
    let c = -8.0 * dd(3) + 16.0 / 15.0 * ll * dd(4) - 16.0 * lam * dd(7) + 32.0 / 15.0 * lam * ll * dd(8);
    Ok(Coefficients { a: a_block(lam, ll, p, spec)?, b11, b12, b22, c })
}

/// Coefficients with the expansion constants exactly as printed.
pub fn coefficients_at_c_printed(state: &MultiplierState, spec: &ClosureSpec) -> Result<Coefficients> {
    let (lam, ll, p, d) = first_derivatives(state, spec)?;
    let dd = |j: usize| d[j - 1];
    let (l2, l3) = (ll * ll, ll * ll * ll);
    let b22 = 8.0 * dd(6) + 112.0 / 15.0 * ll * dd(7) + 32.0 / 225.0 * l2 * dd(8);
    let b12 = -4.0 * dd(5) + 4.0 / 15.0 * ll * dd(6) + 32.0 / 225.0 * l2 * dd(7) - 16.0 / 1125.0 * l3 * dd(8);
    let b11 = 2.0 / 3.0 * ll * dd(5) - 2.0 / 45.0 * l2 * dd(6) - 2.0 * 47.0 / 3375.0 * l3 * dd(7)
        + 8.0 / 5625.0 * l3 * dd(8)
        + 2.0
            * p
            * (2.0 * dd(2) - 8.0 / 15.0 * ll * dd(3) + 8.0 / 225.0 * l2 * dd(4) + 4.0 * lam * dd(6)
                - 12.0 / 5.0 * lam * ll * dd(7)
                + 16.0 / 225.0 * lam * l2 * dd(8));
    let c = -8.0 * dd(3) + 16.0 / 15.0 * ll * dd(4) - 16.0 * lam * dd(7) + 32.0 / 15.0 * lam * ll * dd(8);
    Ok(Coefficients { a: a_block(lam, ll, p, spec)?, b11, b12, b22, c })
}

/// Basis adapted to the block structure at state C, in storage coordinates:
/// 3 for Q1, 6 for Q2 (lambda_i, lambda_ill / lambda_ppll pairs), 5 deviatoric.
pub fn block_basis(p: f64) -> [[f64; DIM]; DIM] {
    let mut b = [[0.0; DIM]; DIM];
    b[0][I_LAMBDA] = 1.0;
    for k in 0..3 {
        b[1][I_A + k] = 1.0 / 3.0;
    }
    b[2][I_P] = 1.0;
    for i in 0..3 {
        b[3 + 2 * i][I_M + i] = p;
        b[4 + 2 * i][I_L + i] = 1.0;
    }
    b[9][I_A] = 1.0;
    b[9][I_A + 1] = -1.0;
    b[10][I_A] = 1.0;
    b[10][I_A + 1] = 1.0;
    b[10][I_A + 2] = -2.0;
    for k in 0..3 {
        b[11 + k][I_A + 3 + k] = 1.0;
    }
    b
}

/// Full-index squared norms of the deviatoric basis vectors.
const DEV_NORM: [f64; 5] = [2.0, 6.0, 2.0, 2.0, 2.0];

const BLOCKS: [&[usize]; 9] = [&[0, 1, 2], &[3, 4], &[5, 6], &[7, 8], &[9], &[10], &[11], &[12], &[13]];

/// H in the block basis, T^T H T.
pub fn block_transform(h: &Matrix14, p: f64) -> Matrix14 {
    let t = block_basis(p);
    let mut m = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..DIM {
            m[i][j] = bilinear(h, &t[i], &t[j]);
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    /// Largest entry outside the diagonal blocks, relative to the largest entry.
    pub cross_block: f64,
    /// Largest disagreement among the three Q2 blocks and the five Q3 entries.
    pub repetition: f64,
}

/// Coefficients read off the Hessian at state C.
pub fn coefficients_from_hessian(h: &Matrix14, state: &MultiplierState) -> Result<(Coefficients, BlockCheck)> {
    let (_, _, p) = check_c(state)?;
    let m = block_transform(h, p);
    let scale = max_entry(&m).max(f64::MIN_POSITIVE);
    let block_of = |i: usize| BLOCKS.iter().position(|b| b.contains(&i)).unwrap();
    let mut cross = 0.0_f64;
    for i in 0..DIM {
        for j in 0..DIM {
            if block_of(i) != block_of(j) {
                cross = cross.max(m[i][j].abs());
            }
        }
    }
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = m[i][j];
        }
    }
    let c = m[9][9] / DEV_NORM[0];
    let mut rep = 0.0_f64;
    for i in 1..3 {
        for (x, y) in [(0, 0), (0, 1), (1, 1)] {
            rep = rep.max((m[3 + 2 * i + x][3 + 2 * i + y] - m[3 + x][3 + y]).abs());
        }
    }
    for k in 1..5 {
        rep = rep.max((m[9 + k][9 + k] / DEV_NORM[k] - c).abs());
    }
    Ok((
        Coefficients { a, b11: m[3][3], b12: m[3][4], b22: m[4][4], c },
        BlockCheck { cross_block: cross / scale, repetition: rep / scale },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    PositiveDefinite,
    Indefinite,
    Degenerate,
}

/// Matrix order of each minor.
pub const MINOR_ORDER: [i32; 6] = [1, 2, 3, 1, 2, 1];

pub const MINOR_NAMES: [&str; 6] = ["a11", "a_2x2", "a_3x3", "b11", "b_det", "c"];

/// The six leading minors of the criteria.
pub fn minors(k: &Coefficients) -> [f64; 6] {
    let a = &k.a;
    let d2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let d3 = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    [a[0][0], d2, d3, k.b11, k.b11 * k.b22 - k.b12 * k.b12, k.c]
}

/// Inertia of the assembled block forms (Q1, Q2, Q3): counts of negative and zero eigenvalues.
pub fn block_inertia(k: &Coefficients, tol: f64) -> (usize, usize) {
    let a = DMatrix::from_fn(3, 3, |i, j| k.a[i][j]);
    let b = DMatrix::from_fn(2, 2, |i, j| k.b()[i][j]);
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.extend(SymmetricEigen::new(b).eigenvalues.iter());
    ev.push(k.c);
    let scale = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let neg = ev.iter().filter(|v| **v < -tol * scale).count();
    let zero = ev.iter().filter(|v| v.abs() <= tol * scale).count();
    (neg, zero)
}

/// Negative eigenvalues of the full quadratic form at C implied by the blocks:
/// Q2 occurs once per axis and Q3 once per deviatoric direction.
pub fn negative_multiplicity(k: &Coefficients, tol: f64) -> usize {
    let a = DMatrix::from_fn(3, 3, |i, j| k.a[i][j]);
    let b = DMatrix::from_fn(2, 2, |i, j| k.b()[i][j]);
    let na = SymmetricEigen::new(a).eigenvalues.iter().filter(|v| **v < -tol).count();
    let nb = SymmetricEigen::new(b).eigenvalues.iter().filter(|v| **v < -tol).count();
    na + 3 * nb + 5 * usize::from(k.c < -tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub minors: [f64; 6],
    pub verdict: VerdictKind,
    /// Index into `MINOR_NAMES` of the first minor that is not positive.
    pub failing_minor: Option<usize>,
    pub counterexample: Option<MultiplierState>,
    pub q_counterexample: Option<f64>,
    /// lambda_ppll values used for the one-sided limit and the extrapolants.
    pub limit_sequence: Vec<f64>,
}

/// Leading-minor test of the block coefficients; `tol` is relative to the largest minor.
pub fn convexity_verdict(k: &Coefficients, tol: f64) -> Verdict {
    let m = minors(k);
    verdict_from_minors(m, k, tol)
}

fn verdict_from_minors(m: [f64; 6], k: &Coefficients, tol: f64) -> Verdict {
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let failing = m.iter().position(|v| *v <= tol * scale);
    let kind = match failing {
        None => VerdictKind::PositiveDefinite,
        Some(_) => {
            if block_inertia(k, tol).0 > 0 {
                VerdictKind::Indefinite
            } else {
                VerdictKind::Degenerate
            }
        }
    };
    Verdict { minors: m, verdict: kind, failing_minor: failing, counterexample: None, q_counterexample: None, limit_sequence: vec![] }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub sequence: Vec<f64>,
    pub tol: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { sequence: vec![1e-2, 1e-3, 1e-4], tol: 1e-4 }
    }
}

/// Minors in the limit lambda_ppll -> 0+, by repeated Richardson extrapolation
/// (Neville's scheme in powers of lambda_ppll). With n values the order-(n-2)
/// extrapolants of the last two windows must agree; with three values this is
/// the plain first-order rule. Agreement is relative to the larger extrapolant or
/// to the natural size of the minor, the largest coefficient raised to its order.
pub fn limit_minors(
    f: impl Fn(f64) -> Result<Coefficients>,
    opts: &LimitOptions,
) -> Result<([f64; 6], Coefficients)> {
    let h = &opts.sequence;
    if h.len() < 3 {
        return Err(Error::LimitNotConverged("need at least three lambda_ppll values".into()));
    }
    let vals: Vec<(Coefficients, [f64; 6])> = h.iter().map(|p| f(*p).map(|k| (k, minors(&k)))).collect::<Result<_>>()?;
    let size = vals.iter().fold(0.0f64, |m, (k, _)| m.max(k.max_abs()));
    let n = vals.len();
    let mut out = [0.0; 6];
    for j in 0..6 {
        let mut t: Vec<f64> = vals.iter().map(|v| v.1[j]).collect();
        let mut prev = 0.0;
        for l in 1..=n - 2 {
            t = (l..n).map(|i| (h[i - l] * t[i - l + 1] - h[i] * t[i - l]) / (h[i - l] - h[i])).collect();
            prev = t[t.len() - 2];
        }
        let last = t[t.len() - 1];
        let scale = last.abs().max(prev.abs()).max(size.powi(MINOR_ORDER[j]));
        if (last - prev).abs() > opts.tol * scale {
            return Err(Error::LimitNotConverged(format!("{}: {prev:e} vs {last:e}", MINOR_NAMES[j])));
        }
        out[j] = last;
    }
    Ok((out, vals[n - 1].0))
}

pub fn limit_verdict(f: impl Fn(f64) -> Result<Coefficients>, opts: &LimitOptions, tol: f64) -> Result<Verdict> {
    let (m, k) = limit_minors(f, opts)?;
    let mut v = verdict_from_minors(m, &k, tol);
    v.limit_sequence = opts.sequence.clone();
    Ok(v)
}

/// Direction with Q(delta) < 0 from the smallest eigenvalue of H.
pub fn counterexample_direction(h: &Matrix14) -> Result<(MultiplierState, f64)> {
    let m = DMatrix::from_fn(DIM, DIM, |i, j| h[i][j]);
    let e = SymmetricEigen::new(m);
    let (k, min) = e.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
    let scale = max_entry(h).max(f64::MIN_POSITIVE);
    if min >= -1e-12 * scale {
        return Err(Error::NotIndefinite(min));
    }
    let mut c = [0.0; DIM];
    for i in 0..DIM {
        c[i] = e.eigenvectors[(i, k)];
    }
    let q = quad(h, &c);
    Ok((MultiplierState::from_coords(&c), q))
}

/// Full verdict at a state C: block coefficients from the exact Hessian, minors,
/// eigenvalue cross-check and counterexample when indefinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateCAnalysis {
    pub lambda: f64,
    pub lambda_ll: f64,
    pub lambda_ppll: f64,
    pub coefficients: Coefficients,
    pub blocks: BlockCheck,
    pub verdict: Verdict,
    /// Number of negative eigenvalues of H and of the assembled blocks (with multiplicity).
    pub negative_eigenvalues: (usize, usize),
    /// Q(delta) recomputed as a second directional derivative along the counterexample.
    pub q_direct: Option<f64>,
}

pub fn analyze_state_c(lambda: f64, lambda_ll: f64, lambda_ppll: f64, spec: &ClosureSpec, eps1: f64) -> Result<StateCAnalysis> {
    let s = state_c(lambda, lambda_ll, lambda_ppll);
    let rep = hessian(&s, spec, eps1)?;
    let h = rep.matrix();
    let (k, blocks) = coefficients_from_hessian(&h, &s)?;
    let mut v = convexity_verdict(&k, 1e-12);
    let scale = max_entry(&h).max(f64::MIN_POSITIVE);
    let neg_h = rep.eigenvalues.iter().filter(|e| **e < -1e-12 * scale).count();
    let nb = negative_multiplicity(&k, 1e-12 * scale);
    let mut q_direct = None;
    if v.verdict == VerdictKind::Indefinite || neg_h > 0 {
        if let Ok((d, q)) = counterexample_direction(&h) {
            q_direct = Some(second_directional_derivative(&s, &d, spec, eps1)?);
            v.counterexample = Some(d);
            v.q_counterexample = Some(q);
        }
    }
    Ok(StateCAnalysis {
        lambda,
        lambda_ll,
        lambda_ppll,
        coefficients: k,
        blocks,
        verdict: v,
        negative_eigenvalues: (neg_h, nb),
        q_direct,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub family: usize,
    pub lambda: f64,
    pub lambda_ll: f64,
    pub verdict: Option<VerdictKind>,
    pub minors: Option<[f64; 6]>,
    pub note: String,
}

/// Scan rows as CSV: family, state parameters, verdict, the six minors and a note.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = format!("family,lambda,lambda_ll,verdict,{},note\n", MINOR_NAMES.join(","));
    for r in rows {
        let verdict = r.verdict.map(|v| serde_json::to_value(v).unwrap().as_str().unwrap().to_string()).unwrap_or_default();
        let minors: Vec<String> = match r.minors {
            Some(m) => m.iter().map(|v| format!("{v:e}")).collect(),
            None => vec![String::new(); 6],
        };
        out += &format!("{},{:e},{:e},{verdict},{},\"{}\"\n", r.family, r.lambda, r.lambda_ll, minors.join(","), r.note.replace('"', "'"));
    }
    out
}

/// Search over random eta-form families of a given degree: verdict in the
/// lambda_ppll -> 0+ limit at each listed (lambda, lambda_ll).
pub fn scan_k(degree: u32, count: usize, seed: u64, points: &[(f64, f64)], opts: &LimitOptions) -> Vec<ScanRow> {
    use crate::closure::families::random_k;
    use crate::invariants::Convention;
    let jobs: Vec<(usize, (f64, f64))> = (0..count).flat_map(|f| points.iter().map(move |p| (f, *p))).collect();
    jobs.par_iter()
        .map(|(f, (lam, ll))| {
            let spec = ClosureSpec::from_polys(Form::Eta, random_k(seed * 1_000 + *f as u64, degree, 6), Convention::Consistent)
                .expect("eta polynomials");
            let r = limit_verdict(|p| coefficients_at_c(&state_c(*lam, *ll, p), &spec), opts, 1e-12);
            match r {
                Ok(v) => ScanRow { family: *f, lambda: *lam, lambda_ll: *ll, verdict: Some(v.verdict), minors: Some(v.minors), note: String::new() },
                Err(e) => ScanRow { family: *f, lambda: *lam, lambda_ll: *ll, verdict: None, minors: None, note: e.to_string() },
            }
        })
        .collect()
}
