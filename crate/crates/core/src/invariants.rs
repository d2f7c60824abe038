//! Isotropic invariants X1..X8, generator vectors V0..V3, the eta variables and the
//! Y/Z combinations.
//!
//! The scalar `Lambda` of the X5..X8 formulas is the multiplier `lambda`.

use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::function::{Polynomial, Var, ETA_VARS, X_VARS};
use crate::report::Residual;
use crate::state::{Fields, MultiplierState, DIM};

/// Coefficients multiplying H_r X_{r+1} in h' as printed.
pub const P: [f64; 4] = [8.0, -1.0, -2.0 / 3.0, -0.5];

/// How the printed coefficients P_r are paired with X2..X4.
///
/// With the invariants exactly as printed, the lambda-derivatives of X6..X8 are
/// +2X2, +2X3, +2X4, so frame-change invariance requires h' weights (8,1,1,1).
/// `Consistent` keeps every P-based formula verbatim but evaluates it on the
/// rescaled invariants Xhat_{r+1} = s_r X_{r+1}, s = (1, -1, -3/2, -2), which gives
/// exactly those weights. `Legacy` reads the formulas literally (s = 1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Consistent,
    Legacy,
}

impl Convention {
    pub fn hat(self) -> [f64; 4] {
        match self {
            Convention::Consistent => [1.0, -1.0, -1.5, -2.0],
            Convention::Legacy => [1.0; 4],
        }
    }

    /// Effective weights W_r = P_r s_r of H_r X_{r+1} in h'.
    pub fn weights(self) -> [f64; 4] {
        let s = self.hat();
        [P[0] * s[0], P[1] * s[1], P[2] * s[2], P[3] * s[3]]
    }
}

/// Intermediate contractions shared by X and V.
#[derive(Clone, Copy, Debug)]
pub struct Contractions<T> {
    pub ll: T,
    pub tr2: T,
    pub tr3: T,
    pub mm: T,
    pub mam: T,
    pub ma2m: T,
    pub ma3m: T,
    pub lm: T,
    pub lam: T,
    pub la2m: T,
    pub la3m: T,
    pub la: T,
    pub lal: T,
    pub la2l: T,
    pub am: [T; 3],
    pub a2m: [T; 3],
    pub a3m: [T; 3],
    pub al: [T; 3],
    pub a2l: [T; 3],
}

fn mv<T: Scalar>(a: &[[T; 3]; 3], v: &[T; 3]) -> [T; 3] {
    let mut o = [T::zero(); 3];
    for i in 0..3 {
        o[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
    }
    o
}

fn dot<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl<T: Scalar> Contractions<T> {
    pub fn of(f: &Fields<T>) -> Self {
        let a = &f.a;
        let (l, m) = (&f.l, &f.m);
        let ll = a[0][0] + a[1][1] + a[2][2];
        let mut tr2 = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                tr2 += a[i][j] * a[j][i];
            }
        }
        let mut tr3 = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let aij = a[i][j];
                tr3 += aij * (a[j][0] * a[0][i] + a[j][1] * a[1][i] + a[j][2] * a[2][i]);
            }
        }
        let am = mv(a, m);
        let a2m = mv(a, &am);
        let a3m = mv(a, &a2m);
        let al = mv(a, l);
        let a2l = mv(a, &al);
        Contractions {
            ll,
            tr2,
            tr3,
            mm: dot(m, m),
            mam: dot(m, &am),
            ma2m: dot(&am, &am),
            ma3m: dot(&am, &a2m),
            lm: dot(l, m),
            lam: dot(l, &am),
            la2m: dot(l, &a2m),
            la3m: dot(l, &a3m),
            la: dot(l, l),
            lal: dot(l, &al),
            la2l: dot(&al, &al),
            am,
            a2m,
            a3m,
            al,
            a2l,
        }
    }
}

/// X1..X8 of a state.
pub fn x_of<T: Scalar>(f: &Fields<T>, c: &Contractions<T>) -> [T; 8] {
    let (lam, p) = (f.lambda, f.p);
    let Contractions { ll, tr2, tr3, mm, mam, ma2m, lm, lam: lam_m, la2m, la3m, la, lal, la2l, .. } = *c;
    let lambda_am = lam_m;
    let ll2 = ll * ll;
    let ll3 = ll2 * ll;
    let cubic = ll3 * (-37.0 / 375.0) + ll * tr2 * 0.4 - tr3 / 3.0;

    let x1 = p;
    let x2 = mm * 2.0 - p * ll * (16.0 / 5.0);
    let x3 = p * (ll2 * (11.0 / 50.0) - tr2 * 0.5) * 8.0 + mam * 2.0 - ll * mm * 1.2;
    let x4 = ma2m * 2.0 - tr2 * mm - ll * mam * 1.6 + ll2 * mm * (17.0 / 25.0) + p * cubic * 8.0;
    let x5 = ll2 * -0.4 + p * lam * 16.0 - lm * 4.0 + tr2 * 2.0;
    let x6 = lam * mm * 4.0 + p * (lam * ll * -0.8 + la * 0.5) * 8.0 + ll * lm * 1.6 - ll * tr2 * 0.8
        + ll3 * (8.0 / 75.0)
        - lambda_am * 4.0
        + tr3 * (4.0 / 3.0);
    let x7 = tr3 * ll * (8.0 / 15.0) - ll2 * tr2 * (14.0 / 25.0) + ll2 * ll2 * (46.0 / 375.0) + lam * mam * 4.0
        + tr2 * lm * 2.0
        - lm * lm
        - lam * ll * mm * 2.4
        + la * mm
        - la2m * 4.0
        - p * (lam * tr2 - lal * 0.5 - lam * ll2 * (11.0 / 25.0) + ll * la * 0.3) * 8.0
        + ll * lambda_am * 2.4
        - ll2 * lm * (22.0 / 25.0);
    let x8 = ll2 * lambda_am * (-34.0 / 25.0) + tr2 * lambda_am * 2.0 + ll * la2m * 3.2 + ll3 * lm * (148.0 / 375.0)
        - ll * tr2 * lm * 1.6
        + tr3 * lm * (4.0 / 3.0)
        - la3m * 4.0
        + p * (la2l * 2.0 - tr2 * la - ll * lal * 1.6 + ll2 * la * (17.0 / 25.0)) * 2.0
        + lal * mm
        - ll * la * mm * 0.8
        - lm * lambda_am * 2.0
        + ll * lm * lm * 0.8
        + la * mam
        + lam * ma2m * 4.0
        - lam * tr2 * mm * 2.0
        - lam * ll * mam * 3.2
        + lam * ll2 * mm * (34.0 / 25.0)
        + lam * p * cubic * 16.0
        + ll2 * tr3 * (4.0 / 75.0)
        - ll3 * tr2 * (8.0 / 125.0)
        + ll3 * ll2 * (4.0 * 37.0 / (15.0 * 625.0));
    [x1, x2, x3, x4, x5, x6, x7, x8]
}

/// Generator vectors V0..V3.
pub fn v_of<T: Scalar>(f: &Fields<T>, c: &Contractions<T>) -> [[T; 3]; 4] {
    let (l, m, p) = (&f.l, &f.m, f.p);
    let Contractions { ll, tr2, tr3, mm, mam, lm, lam, am, a2m, a3m, al, a2l, .. } = *c;
    let ll2 = ll * ll;
    let mut v = [[T::zero(); 3]; 4];
    for k in 0..3 {
        v[0][k] = m[k] * -2.0;
        v[1][k] = am[k] * -2.0 + p * l[k] * 4.0 + ll * m[k] * 0.8;
        v[2][k] = a2m[k] * -2.0 + ll * am[k] * 1.2 + p * al[k] * 4.0 - ll2 * m[k] * (11.0 / 25.0) - lm * m[k]
            + mm * l[k]
            + tr2 * m[k]
            - p * ll * l[k] * 2.4;
        v[3][k] = p * (a2l[k] * 2.0 - tr2 * l[k] - ll * al[k] * 1.6 + ll2 * l[k] * (17.0 / 25.0)) * 2.0
            + al[k] * mm
            - ll * mm * l[k] * 0.8
            - ll2 * am[k] * (17.0 / 25.0)
            - lm * am[k]
            + tr2 * am[k]
            + ll * lm * m[k] * 0.8
            + ll * a2m[k] * 1.6
            + ll2 * ll * m[k] * (74.0 / 375.0)
            - ll * tr2 * m[k] * 0.8
            + mam * l[k]
            - lam * m[k]
            + tr3 * m[k] * (2.0 / 3.0)
            - a3m[k] * 2.0;
    }
    v
}

/// eta1..eta8 from X1..X8 (requires X1 != 0).
pub fn eta_of<T: Scalar>(x: &[T; 8]) -> [T; 8] {
    let x1 = x[0];
    let r = x1.recip();
    let (e2, e3, e4) = (x[1] * r, x[2] * r, x[3] * r);
    let e5 = (x[4] + e3 * 0.5 - e2 * e2 * (3.0 / 64.0)) * r;
    let e6 = (x[5] + e4 * 0.5 - e2 * e3 * (1.0 / 16.0) + e2 * e2 * e2 * (1.0 / 512.0)) * r;
    let e7 = (x[6] - e2 * e4 * (1.0 / 16.0) + e3 * e2 * e2 * (1.0 / 512.0)) * r;
    let e8 = (x[7] + e4 * e2 * e2 * (1.0 / 512.0)) * r;
    [x1, e2, e3, e4, e5, e6, e7, e8]
}

/// Y5..Y8, Z5, Z7, Z8 from X1..X8.
pub fn yz_of<T: Scalar>(x: &[T; 8], conv: Convention) -> ([T; 4], [T; 3]) {
    let s = conv.hat();
    let (h2, h3, h4) = (x[1] * s[1], x[2] * s[2], x[3] * s[3]);
    let y = [
        x[4],
        x[0] * x[5] + h2 * x[4] * (1.0 / 8.0),
        x[0] * x[6] + h3 * x[4] * (1.0 / 12.0),
        x[0] * x[7] + h4 * x[4] * (1.0 / 16.0),
    ];
    let z = [
        h2 * x[4] + x[0] * x[5] * 8.0,
        h2 * x[6] - h3 * x[5] * (2.0 / 3.0),
        h2 * x[7] - h4 * x[5] * 0.5,
    ];
    (y, z)
}

fn term(vars: &[Var], coef: f64, factors: &[(Var, u32)]) -> Polynomial {
    let mut exp = vec![0; vars.len()];
    for (v, e) in factors {
        exp[vars.iter().position(|x| x == v).unwrap()] += e;
    }
    Polynomial::monomial(vars, exp, coef)
}

fn sum(ps: Vec<Polynomial>) -> Polynomial {
    ps.into_iter().fold(Polynomial::zero(&ETA_VARS), |a, b| a.add(&b))
}

/// Y5..Y8 as polynomials in eta1..eta8.
///
/// `Legacy` is the printed closed form with the Y6 tail taken as eta2^3/256;
/// `Consistent` is the same substitution carried out for the rescaled Y's.
pub fn y_from_eta_polys(conv: Convention) -> [Polynomial; 4] {
    use Var::*;
    let v = &ETA_VARS;
    let t = |c: f64, f: &[(Var, u32)]| term(v, c, f);
    let y5 = sum(vec![t(1.0, &[(Eta1, 1), (Eta5, 1)]), t(-0.5, &[(Eta3, 1)]), t(3.0 / 64.0, &[(Eta2, 2)])]);
    match conv {
        Convention::Legacy => [
            y5,
            sum(vec![
                t(1.0, &[(Eta1, 2), (Eta6, 1)]),
                t(-0.5, &[(Eta1, 1), (Eta4, 1)]),
                t(1.0 / 8.0, &[(Eta1, 2), (Eta2, 1), (Eta5, 1)]),
                t(1.0 / 256.0, &[(Eta1, 1), (Eta2, 3)]),
            ]),
            sum(vec![
                t(1.0, &[(Eta1, 2), (Eta7, 1)]),
                t(1.0 / 16.0, &[(Eta1, 1), (Eta2, 1), (Eta4, 1)]),
                t(1.0 / 512.0, &[(Eta1, 1), (Eta3, 1), (Eta2, 2)]),
                t(1.0 / 12.0, &[(Eta1, 2), (Eta3, 1), (Eta5, 1)]),
                t(-1.0 / 24.0, &[(Eta1, 1), (Eta3, 2)]),
            ]),
            sum(vec![
                t(1.0, &[(Eta1, 2), (Eta8, 1)]),
                t(1.0 / 16.0, &[(Eta1, 2), (Eta4, 1), (Eta5, 1)]),
                t(1.0 / 1024.0, &[(Eta1, 1), (Eta4, 1), (Eta2, 2)]),
                t(-1.0 / 32.0, &[(Eta1, 1), (Eta3, 1), (Eta4, 1)]),
            ]),
        ],
        Convention::Consistent => [
            y5,
            sum(vec![
                t(1.0, &[(Eta1, 2), (Eta6, 1)]),
                t(-0.5, &[(Eta1, 1), (Eta4, 1)]),
                t(-1.0 / 8.0, &[(Eta1, 2), (Eta2, 1), (Eta5, 1)]),
                t(1.0 / 8.0, &[(Eta1, 1), (Eta2, 1), (Eta3, 1)]),
                t(-1.0 / 128.0, &[(Eta1, 1), (Eta2, 3)]),
            ]),
            sum(vec![
                t(1.0, &[(Eta1, 2), (Eta7, 1)]),
                t(1.0 / 16.0, &[(Eta1, 1), (Eta2, 1), (Eta4, 1)]),
                t(-1.0 / 8.0, &[(Eta1, 2), (Eta3, 1), (Eta5, 1)]),
                t(-1.0 / 128.0, &[(Eta1, 1), (Eta2, 2), (Eta3, 1)]),
                t(1.0 / 16.0, &[(Eta1, 1), (Eta3, 2)]),
            ]),
            sum(vec![
                t(1.0, &[(Eta1, 2), (Eta8, 1)]),
                t(-1.0 / 8.0, &[(Eta1, 2), (Eta4, 1), (Eta5, 1)]),
                t(-1.0 / 128.0, &[(Eta1, 1), (Eta2, 2), (Eta4, 1)]),
                t(1.0 / 16.0, &[(Eta1, 1), (Eta3, 1), (Eta4, 1)]),
            ]),
        ],
    }
}

/// The printed Y6 with its last bracket term as eta2^2/256 (kept to document the typo).
pub fn y6_from_eta_printed_square() -> Polynomial {
    use Var::*;
    let v = &ETA_VARS;
    sum(vec![
        term(v, 1.0, &[(Eta1, 2), (Eta6, 1)]),
        term(v, -0.5, &[(Eta1, 1), (Eta4, 1)]),
        term(v, 1.0 / 8.0, &[(Eta1, 2), (Eta2, 1), (Eta5, 1)]),
        term(v, 1.0 / 256.0, &[(Eta1, 1), (Eta2, 2)]),
    ])
}

/// X1..X8 as polynomials in eta1..eta8 (inverse of the eta definitions).
pub fn x_from_eta_polys() -> [Polynomial; 8] {
    use Var::*;
    let v = &ETA_VARS;
    let t = |c: f64, f: &[(Var, u32)]| term(v, c, f);
    [
        t(1.0, &[(Eta1, 1)]),
        t(1.0, &[(Eta1, 1), (Eta2, 1)]),
        t(1.0, &[(Eta1, 1), (Eta3, 1)]),
        t(1.0, &[(Eta1, 1), (Eta4, 1)]),
        sum(vec![t(1.0, &[(Eta1, 1), (Eta5, 1)]), t(-0.5, &[(Eta3, 1)]), t(3.0 / 64.0, &[(Eta2, 2)])]),
        sum(vec![
            t(1.0, &[(Eta1, 1), (Eta6, 1)]),
            t(-0.5, &[(Eta4, 1)]),
            t(1.0 / 16.0, &[(Eta2, 1), (Eta3, 1)]),
            t(-1.0 / 512.0, &[(Eta2, 3)]),
        ]),
        sum(vec![
            t(1.0, &[(Eta1, 1), (Eta7, 1)]),
            t(1.0 / 16.0, &[(Eta2, 1), (Eta4, 1)]),
            t(-1.0 / 512.0, &[(Eta3, 1), (Eta2, 2)]),
        ]),
        sum(vec![t(1.0, &[(Eta1, 1), (Eta8, 1)]), t(-1.0 / 512.0, &[(Eta4, 1), (Eta2, 2)])]),
    ]
}

/// Y5..Y8 and Z5, Z7, Z8 as polynomials in X1..X8.
pub fn yz_polys(conv: Convention) -> ([Polynomial; 4], [Polynomial; 3]) {
    let xs: Vec<Polynomial> = X_VARS.iter().map(|v| Polynomial::var(&X_VARS, *v)).collect();
    let s = conv.hat();
    let h = |i: usize| xs[i].scale(s[i]);
    let y = [
        xs[4].clone(),
        xs[0].mul(&xs[5]).add(&h(1).mul(&xs[4]).scale(1.0 / 8.0)),
        xs[0].mul(&xs[6]).add(&h(2).mul(&xs[4]).scale(1.0 / 12.0)),
        xs[0].mul(&xs[7]).add(&h(3).mul(&xs[4]).scale(1.0 / 16.0)),
    ];
    let z = [
        h(1).mul(&xs[4]).add(&xs[0].mul(&xs[5]).scale(8.0)),
        h(1).mul(&xs[6]).sub(&h(2).mul(&xs[5]).scale(2.0 / 3.0)),
        h(1).mul(&xs[7]).sub(&h(3).mul(&xs[5]).scale(0.5)),
    ];
    (y, z)
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aux {
    /// lambda_all lambda_all
    pub mm: f64,
    /// lambda_ab lambda_all lambda_bll
    pub mAm: f64,
    /// lambda_ab^2 lambda_all lambda_bll
    pub mA2m: f64,
    /// lambda_ab^3 lambda_all lambda_bll
    pub mA3m: f64,
    /// lambda_a lambda_all
    pub lm: f64,
    /// lambda_ab lambda_a lambda_bll
    pub lAm: f64,
    /// lambda_a lambda_a
    pub ll_vec: f64,
    /// lambda_ab lambda_a lambda_b
    pub lAl: f64,
    /// lambda_ab^2 lambda_a lambda_b
    pub lA2l: f64,
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantBundle {
    pub X1: f64,
    pub X2: f64,
    pub X3: f64,
    pub X4: f64,
    pub X5: f64,
    pub X6: f64,
    pub X7: f64,
    pub X8: f64,
    pub Q1: f64,
    pub Q2: f64,
    pub Q3: f64,
    pub aux: Aux,
}

impl InvariantBundle {
    pub fn x(&self) -> [f64; 8] {
        [self.X1, self.X2, self.X3, self.X4, self.X5, self.X6, self.X7, self.X8]
    }

    pub fn q(&self) -> [f64; 3] {
        [self.Q1, self.Q2, self.Q3]
    }

    /// Every scalar of the bundle in a fixed order.
    pub fn flat(&self) -> Vec<f64> {
        let a = &self.aux;
        let mut v = self.x().to_vec();
        v.extend(self.q());
        v.extend([a.mm, a.mAm, a.mA2m, a.mA3m, a.lm, a.lAm, a.ll_vec, a.lAl, a.lA2l]);
        v
    }
}

pub fn compute_x(state: &MultiplierState) -> InvariantBundle {
    let f = Fields::of(state);
    let c = Contractions::of(&f);
    let x = x_of(&f, &c);
    InvariantBundle {
        X1: x[0],
        X2: x[1],
        X3: x[2],
        X4: x[3],
        X5: x[4],
        X6: x[5],
        X7: x[6],
        X8: x[7],
        Q1: c.ll,
        Q2: c.tr2,
        Q3: c.tr3,
        aux: Aux {
            mm: c.mm,
            mAm: c.mam,
            mA2m: c.ma2m,
            mA3m: c.ma3m,
            lm: c.lm,
            lAm: c.lam,
            ll_vec: c.la,
            lAl: c.lal,
            lA2l: c.la2l,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorVectors {
    pub v: [[f64; 3]; 4],
}

pub fn compute_v(state: &MultiplierState) -> GeneratorVectors {
    let f = Fields::of(state);
    GeneratorVectors { v: v_of(&f, &Contractions::of(&f)) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaBundle {
    pub eta: [f64; 8],
}

pub fn compute_eta(state: &MultiplierState, eps1: f64) -> Result<EtaBundle> {
    if state.lambda_ppll.abs() < eps1 {
        return Err(Error::SingularX1 { value: state.lambda_ppll, eps: eps1 });
    }
    Ok(EtaBundle { eta: eta_of(&compute_x(state).x()) })
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YZBundle {
    pub Y5: f64,
    pub Y6: f64,
    pub Y7: f64,
    pub Y8: f64,
    pub Z5: f64,
    pub Z7: f64,
    pub Z8: f64,
}

impl YZBundle {
    pub fn y(&self) -> [f64; 4] {
        [self.Y5, self.Y6, self.Y7, self.Y8]
    }
}

pub fn compute_yz(bundle: &InvariantBundle, conv: Convention) -> YZBundle {
    let (y, z) = yz_of(&bundle.x(), conv);
    YZBundle { Y5: y[0], Y6: y[1], Y7: y[2], Y8: y[3], Z5: z[0], Z7: z[1], Z8: z[2] }
}

pub fn compute_y_from_eta(eta: &EtaBundle, conv: Convention) -> [f64; 4] {
    let p = y_from_eta_polys(conv);
    [p[0].eval(&eta.eta), p[1].eval(&eta.eta), p[2].eval(&eta.eta), p[3].eval(&eta.eta)]
}

/// One of the sixteen lambda-derivative identities at a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeIdentity {
    pub name: String,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Residual,
}

/// The sixteen identities dX_h/dlambda_k and dX_h/dlambda, lhs by forward-mode
/// differentiation, rhs from X and V.
pub fn check_derivative_identities(state: &MultiplierState, conv: Convention) -> Vec<DerivativeIdentity> {
    let c = state.coords();
    let mut seeded = [Dual::<4>::constant(0.0); DIM];
    for k in 0..DIM {
        seeded[k] = Dual::constant(c[k]);
    }
    for k in 0..4 {
        seeded[k] = Dual::variable(c[k], k);
    }
    let f = Fields::from_coords(&seeded);
    let x = x_of(&f, &Contractions::of(&f));
    let xv = compute_x(state).x();
    let v = compute_v(state).v;
    let w = conv.weights();
    let mut out = Vec::with_capacity(16);
    let mut push = |name: String, lhs: Vec<f64>, rhs: Vec<f64>| {
        let abs = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = lhs.iter().chain(&rhs).map(|a| a.abs()).fold(0.0, f64::max);
        out.push(DerivativeIdentity { name, lhs, rhs, residual: Residual { abs, scale } });
    };
    for h in 0..8 {
        let lhs = vec![x[h].d[1], x[h].d[2], x[h].d[3]];
        let rhs = if h < 4 { vec![0.0; 3] } else { v[h - 4].iter().map(|a| 2.0 * a).collect() };
        push(format!("dX{}/dlambda_k", h + 1), lhs, rhs);
    }
    for h in 0..8 {
        let rhs = if h < 4 { 0.0 } else { 2.0 * w[h - 4] * xv[h - 4] };
        push(format!("dX{}/dlambda", h + 1), vec![x[h].d[0]], vec![rhs]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{state_c, random_state, SamplerConfig};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn state_c_values() {
        let x = compute_x(&state_c(0.0, 1.0, 1.0)).x();
        assert!(close(x[0], 1.0, 1e-15));
        assert!(close(x[1], -16.0 / 5.0, 1e-15));
        assert!(close(x[2], 32.0 / 75.0, 1e-14));
        assert!(close(x[3], -64.0 / 3375.0, 1e-13));
        for lam in [0.0, 0.7, -2.0] {
            assert!(close(compute_x(&state_c(lam, 1.0, 1.0)).X5, 4.0 / 15.0 + 16.0 * lam, 1e-14));
        }
    }

    #[test]
    fn v_examples() {
        let mut s = random_state(&SamplerConfig::default(), 3).unwrap();
        s.lambda_ill = [0.0; 3];
        assert_eq!(compute_v(&s).v[0], [0.0; 3]);
        s.lambda_ppll = 1.0;
        let v1 = compute_v(&s).v[1];
        for k in 0..3 {
            assert!(close(v1[k], 4.0 * s.lambda_i[k], 1e-14));
        }
    }

    #[test]
    fn eta_at_state_c() {
        for (lam, ll, p) in [(0.3, 1.0, 1.0), (-1.2, 0.4, 0.7)] {
            let e = compute_eta(&state_c(lam, ll, p), 1e-6).unwrap().eta;
            assert!(close(e[4], 16.0 * lam, 1e-13));
        }
        let e = compute_eta(&state_c(0.0, 1.0, 1.0), 1e-6).unwrap().eta;
        assert!(close(e[2], 32.0 / 75.0, 1e-14));
        assert!(compute_eta(&state_c(0.0, 1.0, 1e-9), 1e-6).is_err());
    }

    #[test]
    fn restricted_eta_list() {
        // lambda_ill = 0: the listed closed forms
        for seed in 0..20 {
            let mut s = random_state(&SamplerConfig::eta_admissible(0.1), seed).unwrap();
            s.lambda_ill = [0.0; 3];
            let e = compute_eta(&s, 1e-6).unwrap().eta;
            let b = compute_x(&s);
            let (lam, ll, tr2, tr3) = (s.lambda, b.Q1, b.Q2, b.Q3);
            let (la, lal, la2l) = (b.aux.ll_vec, b.aux.lAl, b.aux.lA2l);
            let cubic = -37.0 / 375.0 * ll.powi(3) + 0.4 * ll * tr2 - tr3 / 3.0;
            let want = [
                s.lambda_ppll,
                -16.0 / 5.0 * ll,
                8.0 * (11.0 / 50.0 * ll * ll - 0.5 * tr2),
                8.0 * cubic,
                16.0 * lam,
                -32.0 / 5.0 * lam * ll + 4.0 * la,
                -8.0 * lam * tr2 + 4.0 * lal + 88.0 / 25.0 * lam * ll * ll - 12.0 / 5.0 * ll * la,
                4.0 * la2l - 2.0 * tr2 * la - 16.0 / 5.0 * ll * lal + 34.0 / 25.0 * ll * ll * la + 16.0 * lam * cubic,
            ];
            for i in 0..8 {
                assert!(close(e[i], want[i], 1e-11), "eta{} {} vs {}", i + 1, e[i], want[i]);
            }
        }
    }

    #[test]
    fn yz_examples() {
        let zero = compute_yz(&compute_x(&MultiplierState::zero()), Convention::Legacy);
        assert_eq!(zero.y(), [0.0; 4]);
        let mut x = [0.0; 8];
        x[0] = 1.0;
        x[5] = 1.0;
        for conv in [Convention::Legacy, Convention::Consistent] {
            let (y, z) = yz_of(&x, conv);
            assert_eq!(y[1], 1.0);
            assert_eq!(z[0], 8.0);
        }
        let mut e = [0.0; 8];
        e[0] = 1.0;
        e[4] = 1.0;
        assert_eq!(compute_y_from_eta(&EtaBundle { eta: e }, Convention::Legacy)[0], 1.0);
        assert_eq!(compute_y_from_eta(&EtaBundle { eta: [0.0; 8] }, Convention::Consistent), [0.0; 4]);
    }

    #[test]
    fn eta_inverse_round_trip() {
        let xp = x_from_eta_polys();
        for seed in 0..20 {
            let s = random_state(&SamplerConfig::eta_admissible(0.1), seed).unwrap();
            let x = compute_x(&s).x();
            let e = eta_of(&x);
            for i in 0..8 {
                assert!(close(xp[i].eval(&e), x[i], 1e-11));
            }
        }
    }

    #[test]
    fn yz_polys_match_numeric() {
        let s = random_state(&SamplerConfig::default(), 11).unwrap();
        let x = compute_x(&s).x();
        for conv in [Convention::Legacy, Convention::Consistent] {
            let (yp, zp) = yz_polys(conv);
            let (y, z) = yz_of(&x, conv);
            for i in 0..4 {
                assert!(close(yp[i].eval(&x), y[i], 1e-13));
            }
            for i in 0..3 {
                assert!(close(zp[i].eval(&x), z[i], 1e-13));
            }
        }
    }

    #[test]
    fn derivative_identities_hold_in_consistent_reading() {
        for seed in 0..50 {
            let s = random_state(&SamplerConfig::default(), seed).unwrap();
            for id in check_derivative_identities(&s, Convention::Consistent) {
                assert!(id.residual.rel() <= 1e-12, "{} {:?}", id.name, id.residual);
            }
        }
        let c = check_derivative_identities(&state_c(0.0, 1.0, 1.0), Convention::Consistent);
        assert!(close(c[12].lhs[0], 16.0, 1e-15));
    }

    #[test]
    fn printed_lambda_row_fails_for_x6_to_x8() {
        let s = random_state(&SamplerConfig::default(), 5).unwrap();
        let ids = check_derivative_identities(&s, Convention::Legacy);
        assert!(ids[12].residual.rel() < 1e-12);
        for id in &ids[13..16] {
            assert!(id.residual.rel() > 0.1, "{}", id.name);
        }
    }
}
