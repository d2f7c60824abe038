//! Constructive representation theorem: every scalar of the multipliers is a
//! function of the S1 set. Rotate into the canonical frame, rebuild the tensors
//! from S1, then recover (lambda, lambda_k) from X5..X8 by Newton's method.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{compute_v, compute_x, Convention};
use crate::state::{cross, mat_vec, pack, Mat3, MultiplierState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CaseTag {
    Generic,
    Axial,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFrame {
    pub rotation: Mat3,
    pub canonical_state: MultiplierState,
    pub case_tag: CaseTag,
}

/// Relative dispatch threshold; multiplied by the state scale.
pub const EPS2_REL: f64 = 1e-8;

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: &[f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn det3(r: &Mat3) -> f64 {
    Matrix3::from_fn(|i, j| r[i][j]).determinant()
}

/// Eigenvectors of a symmetric matrix as rows, eigenvalues descending.
fn sorted_eigen(a: &Mat3) -> ([f64; 3], Mat3) {
    let e = SymmetricEigen::new(Matrix3::from_fn(|i, j| a[i][j]));
    let mut idx = [0, 1, 2];
    idx.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]));
    let mut rows = [[0.0; 3]; 3];
    let mut vals = [0.0; 3];
    for (r, &k) in idx.iter().enumerate() {
        vals[r] = e.eigenvalues[k];
        for c in 0..3 {
            rows[r][c] = e.eigenvectors[(c, k)];
        }
    }
    (vals, rows)
}

pub fn canonicalize(state: &MultiplierState) -> CanonicalFrame {
    let eps2 = EPS2_REL * state.scale().max(f64::MIN_POSITIVE);
    let a = state.matrix();
    let m = state.lambda_ill;
    let (rotation, case_tag) = if norm(&m) <= eps2 {
        let (_, mut r) = sorted_eigen(&a);
        if det3(&r) < 0.0 {
            r[2] = r[2].map(|x| -x);
        }
        (r, CaseTag::Degenerate)
    } else {
        let e1 = unit(&m);
        let ae1 = mat_vec(&a, &e1);
        let d = dot(&e1, &ae1);
        let w = [ae1[0] - d * e1[0], ae1[1] - d * e1[1], ae1[2] - d * e1[2]];
        if norm(&w) > eps2 {
            let e2 = unit(&w);
            (([e1, e2, cross(&e1, &e2)]), CaseTag::Generic)
        } else {
            // diagonalize lambda_ij on the plane orthogonal to e1
            let seed = if e1[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let u = unit(&cross(&e1, &seed));
            let v = cross(&e1, &u);
            let (au, av) = (mat_vec(&a, &u), mat_vec(&a, &v));
            let (buu, buv, bvv) = (dot(&u, &au), dot(&u, &av), dot(&v, &av));
            let theta = 0.5 * (2.0 * buv).atan2(buu - bvv);
            let (c, s) = (theta.cos(), theta.sin());
            let e2 = [c * u[0] + s * v[0], c * u[1] + s * v[1], c * u[2] + s * v[2]];
            (([e1, e2, cross(&e1, &e2)]), CaseTag::Axial)
        }
    };
    CanonicalFrame { rotation, canonical_state: state.rotated(&rotation), case_tag }
}

/// The S1 scalars plus the auxiliary lambda_ab^3 lambda_all lambda_bll.
#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct S1Set {
    pub lambda_ll: f64,
    pub tr2: f64,
    pub tr3: f64,
    pub mm: f64,
    pub mAm: f64,
    pub mA2m: f64,
    pub X5: f64,
    pub X6: f64,
    pub X7: f64,
    pub X8: f64,
    pub lambda_ppll: f64,
    pub mA3m: f64,
}

impl S1Set {
    pub fn of(state: &MultiplierState) -> Self {
        let b = compute_x(state);
        S1Set {
            lambda_ll: b.Q1,
            tr2: b.Q2,
            tr3: b.Q3,
            mm: b.aux.mm,
            mAm: b.aux.mAm,
            mA2m: b.aux.mA2m,
            X5: b.X5,
            X6: b.X6,
            X7: b.X7,
            X8: b.X8,
            lambda_ppll: b.X1,
            mA3m: b.aux.mA3m,
        }
    }

    pub fn det(&self) -> f64 {
        let (q1, q2, q3) = (self.lambda_ll, self.tr2, self.tr3);
        (q1 * q1 * q1 - 3.0 * q1 * q2 + 2.0 * q3) / 6.0
    }

    /// lambda_ab^3 lambda_all lambda_bll through the Hamilton-Cayley theorem.
    pub fn ma3m_hamilton_cayley(&self) -> f64 {
        let q1 = self.lambda_ll;
        q1 * self.mA2m - 0.5 * (q1 * q1 - self.tr2) * self.mAm + self.det() * self.mm
    }
}

/// Canonical-frame tensors rebuilt from S1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensors {
    pub lambda_ij: Mat3,
    pub lambda_ill: [f64; 3],
    pub lambda_ppll: f64,
}

fn radicand(name: &str, r: f64, scale: f64) -> Result<f64> {
    if r < -1e-9 * scale.max(1e-300) {
        return Err(Error::InconsistentScalars(format!("{name} radicand {r:e}")));
    }
    Ok(r.max(0.0).sqrt())
}

pub fn reconstruct_tensors(s1: &S1Set, case: CaseTag) -> Result<Tensors> {
    let ll = s1.lambda_ll;
    let mut a = [[0.0; 3]; 3];
    let mut m = [0.0; 3];
    let scale2 = ll * ll + s1.tr2.abs();
    match case {
        CaseTag::Generic => {
            let m1 = radicand("lambda_1ll", s1.mm, s1.mm)?;
            if m1 == 0.0 {
                return Err(Error::InconsistentScalars("lambda_1ll = 0 in generic case".into()));
            }
            let a11 = s1.mAm / s1.mm;
            let a12 = radicand("lambda_12", s1.mA2m / s1.mm - a11 * a11, s1.mA2m / s1.mm)?;
            if a12 == 0.0 {
                return Err(Error::InconsistentScalars("lambda_12 = 0 in generic case".into()));
            }
            let ma3m = s1.ma3m_hamilton_cayley();
            let a22 = (ma3m / s1.mm - a11 * a11 * a11 - 2.0 * a11 * a12 * a12) / (a12 * a12);
            let a33 = ll - a11 - a22;
            let r = 0.5 * (s1.tr2 - a11 * a11 - a22 * a22 - a33 * a33 - 2.0 * a12 * a12);
            let a23 = radicand("lambda_23", r, scale2)?;
            m[0] = m1;
            a = [[a11, a12, 0.0], [a12, a22, a23], [0.0, a23, a33]];
        }
        CaseTag::Axial => {
            let m1 = radicand("lambda_1ll", s1.mm, s1.mm)?;
            if m1 == 0.0 {
                return Err(Error::InconsistentScalars("lambda_1ll = 0 in axial case".into()));
            }
            let a11 = s1.mAm / s1.mm;
            let sum = ll - a11;
            let sq = s1.tr2 - a11 * a11;
            let d = radicand("lambda_22 - lambda_33", 2.0 * sq - sum * sum, scale2)?;
            m[0] = m1;
            a[0][0] = a11;
            a[1][1] = 0.5 * (sum + d);
            a[2][2] = 0.5 * (sum - d);
        }
        CaseTag::Degenerate => {
            let q = ll / 3.0;
            let p2 = (s1.tr2 - ll * ll / 3.0) / 6.0;
            if p2 <= 1e-300 {
                a = [[q, 0.0, 0.0], [0.0, q, 0.0], [0.0, 0.0, q]];
            } else {
                let p = p2.sqrt();
                let shifted3 = s1.tr3 - 3.0 * q * s1.tr2 + 3.0 * q * q * ll - 3.0 * q * q * q;
                let r = (shifted3 / 3.0 / (2.0 * p * p * p)).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                let e1 = q + 2.0 * p * phi.cos();
                let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                let e2 = ll - e1 - e3;
                a = [[e1, 0.0, 0.0], [0.0, e2, 0.0], [0.0, 0.0, e3]];
            }
        }
    }
    Ok(Tensors { lambda_ij: a, lambda_ill: m, lambda_ppll: s1.lambda_ppll })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub step_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 50, step_tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaVector {
    pub lambda: f64,
    pub lambda_i: [f64; 3],
    pub iterations: usize,
}

fn assemble(t: &Tensors, u: &[f64; 4]) -> MultiplierState {
    MultiplierState {
        lambda: u[0],
        lambda_i: [u[1], u[2], u[3]],
        lambda_ij: pack(&t.lambda_ij),
        lambda_ill: t.lambda_ill,
        lambda_ppll: t.lambda_ppll,
    }
}

/// Rows (W_r X_{r+1}, V_r^k); the Jacobian of X5..X8 in (lambda, lambda_k) is twice this.
pub fn condition2_matrix(state: &MultiplierState) -> Matrix4<f64> {
    let x = compute_x(state).x();
    let v = compute_v(state).v;
    let w = Convention::Consistent.weights();
    Matrix4::from_fn(|r, c| if c == 0 { w[r] * x[r] } else { v[r][c - 1] })
}

fn relative_det4(m: &Matrix4<f64>) -> (f64, f64) {
    let rows: f64 = (0..4).map(|r| m.row(r).norm()).product();
    (m.determinant(), rows)
}

/// Newton iteration on X5..X8(lambda, lambda_k; tensors) = S1 targets.
pub fn reconstruct_lambda_vector(
    s1: &S1Set,
    tensors: &Tensors,
    initial_guess: [f64; 4],
    opts: NewtonOptions,
) -> Result<LambdaVector> {
    let target = [s1.X5, s1.X6, s1.X7, s1.X8];
    let mut u = initial_guess;
    for it in 0..=opts.max_iter {
        let s = assemble(tensors, &u);
        let x = compute_x(&s).x();
        let f = Vector4::from_fn(|r, _| x[r + 4] - target[r]);
        let jac = condition2_matrix(&s) * 2.0;
        let (det, rows) = relative_det4(&jac);
        if det.abs() <= 1e-14 * rows || rows == 0.0 {
            return Err(Error::SingularJacobian(det.abs()));
        }
        let step = jac.lu().solve(&f).ok_or(Error::SingularJacobian(det.abs()))?;
        for k in 0..4 {
            u[k] -= step[k];
        }
        let size = 1.0 + u.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if step.amax() <= opts.step_tol * size {
            return Ok(LambdaVector { lambda: u[0], lambda_i: [u[1], u[2], u[3]], iterations: it + 1 });
        }
        if it == opts.max_iter {
            break;
        }
    }
    Err(Error::NoConvergence(opts.max_iter))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Independence {
    pub cond1: bool,
    pub cond2: bool,
    pub det1: f64,
    pub det2: f64,
}

pub const INDEPENDENCE_REL: f64 = 1e-10;

pub fn independence_conditions(state: &MultiplierState) -> Independence {
    let a = state.matrix();
    let m = state.lambda_ill;
    let am = mat_vec(&a, &m);
    let a2m = mat_vec(&a, &am);
    let m1 = Matrix3::from_fn(|r, c| [m, am, a2m][r][c]);
    let det1 = m1.determinant();
    let rows1 = norm(&m) * norm(&am) * norm(&a2m);
    let (det2, rows2) = relative_det4(&condition2_matrix(state));
    Independence {
        cond1: rows1 > 0.0 && det1.abs() > INDEPENDENCE_REL * rows1,
        cond2: rows2 > 0.0 && det2.abs() > INDEPENDENCE_REL * rows2,
        det1,
        det2,
    }
}

/// Result of the full reduction chain for one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub case_tag: CaseTag,
    pub reconstructed: MultiplierState,
    pub newton_iterations: usize,
    pub max_rel_error: f64,
}

/// canonicalize -> S1 -> tensors -> Newton; compares full invariant bundles.
pub fn round_trip(state: &MultiplierState, guess: [f64; 4], opts: NewtonOptions) -> Result<RoundTrip> {
    let frame = canonicalize(state);
    let s1 = S1Set::of(&frame.canonical_state);
    let t = reconstruct_tensors(&s1, frame.case_tag)?;
    let lv = reconstruct_lambda_vector(&s1, &t, guess, opts)?;
    let rec = assemble(&t, &[lv.lambda, lv.lambda_i[0], lv.lambda_i[1], lv.lambda_i[2]]);
    Ok(RoundTrip {
        case_tag: frame.case_tag,
        reconstructed: rec,
        newton_iterations: lv.iterations,
        max_rel_error: bundle_distance(state, &rec),
    })
}

/// Largest componentwise difference of the invariant bundles, relative to
/// max(|a|, |b|) floored at 1e-6 of the bundle's largest entry.
pub fn bundle_distance(a: &MultiplierState, b: &MultiplierState) -> f64 {
    flat_distance(&compute_x(a).flat(), &compute_x(b).flat())
}

/// As `bundle_distance`, restricted to the entries fixed by S1: X1..X8, Q1..Q3
/// and the contractions of lambda_ill with powers of lambda_ij.
pub fn s1_distance(a: &MultiplierState, b: &MultiplierState) -> f64 {
    flat_distance(&compute_x(a).flat()[..15], &compute_x(b).flat()[..15])
}

fn flat_distance(x: &[f64], y: &[f64]) -> f64 {
    let big = x.iter().chain(y).map(|v| v.abs()).fold(0.0, f64::max);
    x.iter()
        .zip(y)
        .map(|(p, q)| (p - q).abs() / p.abs().max(q.abs()).max(1e-6 * big).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
