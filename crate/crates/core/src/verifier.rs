//! Residuals of the frame-change (Galilean) conditions, the compatibility
//! condition, the X-space PDE system and its solved forms, and the 5-moment
//! subsystem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar};
use crate::closure::{assemble_potentials, compatibility_scale, potential_gradients, potentials, ClosureSpec, Form, Slots};
use crate::error::{Error, Result};
use crate::function::{ScalarFunction, Var, X_VARS};
use crate::invariants::{eta_of, v_of, x_of, Contractions, Convention};
use crate::report::{digest, worst, Residual, ResidualReport};
use crate::state::{Fields, MultiplierState, DIM};

fn max_abs(terms: &[f64]) -> f64 {
    terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()))
}

/// Bracket of the first frame-change condition applied to a field whose
/// tensor-slot gradient is `g`; returns the value and its summands.
fn operator_terms(g: &Slots, s: &MultiplierState, i: usize) -> Vec<f64> {
    let a = s.matrix();
    let m = s.lambda_ill;
    let tr = g.t[0][0] + g.t[1][1] + g.t[2][2];
    let mut t = vec![g.s * s.lambda_i[i], 4.0 * s.lambda_ppll * g.w[i], m[i] * tr];
    for j in 0..3 {
        t.push(2.0 * a[i][j] * g.v[j]);
        t.push(2.0 * m[j] * g.t[i][j]);
    }
    t
}

fn operator_residual(g: &Slots, s: &MultiplierState, i: usize, extra: f64) -> Residual {
    let mut t = operator_terms(g, s, i);
    t.push(extra);
    Residual::new(t.iter().sum(), max_abs(&t))
}

/// G_i[f] for a scalar field given as a function of the 14 coordinates.
pub fn galilean_operator(f: impl Fn(&[Dual<DIM>; DIM]) -> Dual<DIM>, state: &MultiplierState, i: usize) -> f64 {
    let g = f(&Dual::seed(state.coords()));
    operator_terms(&Slots::from_storage_gradient(&g.d), state, i).iter().sum()
}

pub fn galilean_operator_residual(f: impl Fn(&[Dual<DIM>; DIM]) -> Dual<DIM>, state: &MultiplierState, i: usize) -> Residual {
    let g = f(&Dual::seed(state.coords()));
    operator_residual(&Slots::from_storage_gradient(&g.d), state, i, 0.0)
}

/// Reduced state of the 5-moment subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State5 {
    pub lambda: f64,
    pub lambda_i: [f64; 3],
    pub lambda_ll: f64,
}

impl State5 {
    pub fn of(s: &MultiplierState) -> Self {
        State5 { lambda: s.lambda, lambda_i: s.lambda_i, lambda_ll: s.lambda_ll() }
    }
}

fn sub5_potentials<T: Scalar>(c: &[T; 5], h0: &ScalarFunction) -> (T, [T; 3]) {
    let (lam, l, ll) = (c[0], [c[1], c[2], c[3]], c[4]);
    let w = l[0] * l[0] + l[1] * l[1] + l[2] * l[2] - lam * ll * (4.0 / 3.0);
    let h = h0.eval_with(&|v| match v {
        Var::LambdaLl => ll,
        Var::W => w,
        _ => lam,
    });
    (h * ll * (-2.0 / 3.0), [h * l[0], h * l[1], h * l[2]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemResidual {
    pub h: [Residual; 3],
    /// `phi[k][i]`
    pub phi: [[Residual; 3]; 3],
    pub compat: [Residual; 3],
}

impl SubsystemResidual {
    pub fn galilean(&self) -> Residual {
        worst(self.h.iter().chain(self.phi.iter().flatten()).copied())
    }

    pub fn compatibility(&self) -> Residual {
        worst(self.compat)
    }
}

/// Subsystem frame-change conditions and compatibility on (lambda, lambda_i, lambda_ll).
pub fn subsystem_residual(state5: &State5, spec: &ClosureSpec) -> Result<SubsystemResidual> {
    if spec.form != Form::Sub5 {
        return Err(Error::FormMismatch { form: "sub5", expected: "sub5 closure".into(), got: spec.form.name().into() });
    }
    let c = [state5.lambda, state5.lambda_i[0], state5.lambda_i[1], state5.lambda_i[2], state5.lambda_ll];
    let (h, phi) = sub5_potentials(&Dual::<5>::seed(c), &spec.functions[0]);
    let op = |f: &Dual<5>, i: usize, extra: f64| {
        let t = [f.d[0] * c[1 + i], 2.0 / 3.0 * c[4] * f.d[1 + i], extra];
        Residual::new(t.iter().sum(), max_abs(&t))
    };
    let hr = [0, 1, 2].map(|i| op(&h, i, 0.0));
    let pr = [0, 1, 2].map(|k| [0, 1, 2].map(|i| op(&phi[k], i, if i == k { h.v } else { 0.0 })));
    let cr = [0, 1, 2].map(|k| {
        let (a, b) = (phi[k].d[0], h.d[1 + k]);
        Residual::new(a - b, a.abs().max(b.abs()))
    });
    Ok(SubsystemResidual { h: hr, phi: pr, compat: cr })
}

/// Residual of the first frame-change condition for h'.
pub fn galilean_residual_h(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<[Residual; 3]> {
    if spec.form == Form::Sub5 {
        return Ok(subsystem_residual(&State5::of(state), spec)?.h);
    }
    let (h, _) = potential_gradients(state, spec, eps1)?;
    Ok([0, 1, 2].map(|i| operator_residual(&h, state, i, 0.0)))
}

/// Residual of the second frame-change condition, `[k][i]`.
pub fn galilean_residual_phi(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<[[Residual; 3]; 3]> {
    if spec.form == Form::Sub5 {
        return Ok(subsystem_residual(&State5::of(state), spec)?.phi);
    }
    let hv = assemble_potentials(state, spec, eps1)?.h_prime;
    let (_, phi) = potential_gradients(state, spec, eps1)?;
    Ok([0, 1, 2].map(|k| [0, 1, 2].map(|i| operator_residual(&phi[k], state, i, if i == k { hv } else { 0.0 }))))
}

/// dphi'_k/dlambda - dh'/dlambda_k.
pub fn compatibility_residual(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<[Residual; 3]> {
    if spec.form == Form::Sub5 {
        return Ok(subsystem_residual(&State5::of(state), spec)?.compat);
    }
    let (h, phi) = potential_gradients(state, spec, eps1)?;
    let sc = compatibility_scale(state, spec, eps1)?;
    Ok([0, 1, 2].map(|k| Residual::new(phi[k].s - h.v[k], sc[k].max(phi[k].s.abs()).max(h.v[k].abs()))))
}

/// The operator annihilates every X_h.
pub fn invariant_galilean_residuals(state: &MultiplierState) -> [Residual; 8] {
    let c = state.coords();
    let x = {
        let f = Fields::from_coords(&Dual::<DIM>::seed(c));
        x_of(&f, &Contractions::of(&f))
    };
    [0, 1, 2, 3, 4, 5, 6, 7].map(|h| {
        let g = Slots::from_storage_gradient(&x[h].d);
        worst([0, 1, 2].map(|i| operator_residual(&g, state, i, 0.0)))
    })
}

/// Per-generator form of the second condition: G_i[V_r^k] + W_r X_{r+1} delta_ik = 0.
pub fn generator_galilean_residuals(state: &MultiplierState, conv: Convention) -> [Residual; 4] {
    let f = Fields::from_coords(&Dual::<DIM>::seed(state.coords()));
    let ctr = Contractions::of(&f);
    let x = x_of(&f, &ctr);
    let v = v_of(&f, &ctr);
    let w = conv.weights();
    [0, 1, 2, 3].map(|r| {
        let mut out = Residual::default();
        for k in 0..3 {
            let g = Slots::from_storage_gradient(&v[r][k].d);
            for i in 0..3 {
                let extra = if i == k { w[r] * x[r].v } else { 0.0 };
                out = out.worst(operator_residual(&g, state, i, extra));
            }
        }
        out
    })
}

/// Central-difference gradient of h' and phi'_k in storage coordinates.
pub fn fd_gradients(state: &MultiplierState, spec: &ClosureSpec, eps1: f64, step: f64) -> Result<[[f64; DIM]; 4]> {
    let c = state.coords();
    let mut g = [[0.0; DIM]; 4];
    for j in 0..DIM {
        let mut cp = c;
        let mut cm = c;
        cp[j] += step;
        cm[j] -= step;
        let (hp, pp) = potentials(&cp, spec, eps1)?;
        let (hm, pm) = potentials(&cm, spec, eps1)?;
        g[0][j] = (hp - hm) / (2.0 * step);
        for k in 0..3 {
            g[1 + k][j] = (pp[k] - pm[k]) / (2.0 * step);
        }
    }
    Ok(g)
}

/// Agreement of the exact and finite-difference residuals of the frame-change and
/// compatibility conditions, measured against the largest summand at the state.
pub fn fd_crosscheck(state: &MultiplierState, spec: &ClosureSpec, eps1: f64, step: f64) -> Result<Residual> {
    if spec.form == Form::Sub5 {
        return Ok(Residual::default());
    }
    let fd = fd_gradients(state, spec, eps1, step)?;
    let (h, phi) = potential_gradients(state, spec, eps1)?;
    let hv = assemble_potentials(state, spec, eps1)?.h_prime;
    let fh = Slots::from_storage_gradient(&fd[0]);
    let fp = [1, 2, 3].map(|k| Slots::from_storage_gradient(&fd[k]));
    let mut diffs = vec![];
    let mut scale = 0.0f64;
    let mut cmp = |a: Vec<f64>, b: Vec<f64>| {
        diffs.push(a.iter().sum::<f64>() - b.iter().sum::<f64>());
        scale = scale.max(max_abs(&a)).max(max_abs(&b));
    };
    for i in 0..3 {
        cmp(operator_terms(&h, state, i), operator_terms(&fh, state, i));
        for k in 0..3 {
            let e = if i == k { vec![hv] } else { vec![] };
            let mut a = operator_terms(&phi[k], state, i);
            let mut b = operator_terms(&fp[k], state, i);
            a.extend(&e);
            b.extend(&e);
            cmp(a, b);
        }
        cmp(vec![phi[i].s, -h.v[i]], vec![fp[i].s, -fh.v[i]]);
    }
    Ok(Residual::new(max_abs(&diffs), scale))
}

/// Partial derivatives dH_r/dX_{s+5}, `d[r][s]`, and the coefficients D_s = 2 W_s X_{s+1}.
fn pde_parts(h: &[ScalarFunction; 4], x: &[f64; 8], conv: Convention) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut d = [[0.0; 4]; 4];
    for r in 0..4 {
        let lookup = |v: Var| -> Dual<4> {
            let j = X_VARS.iter().position(|z| *z == v).unwrap_or(0);
            if j >= 4 {
                Dual::variable(x[j], j - 4)
            } else {
                Dual::constant(x[j])
            }
        };
        let g = h[r].eval_with(&lookup);
        d[r] = g.d;
    }
    let w = conv.weights();
    (d, [0, 1, 2, 3].map(|s| 2.0 * w[s] * x[s]))
}

fn check_x_vars(h: &[ScalarFunction; 4]) -> Result<()> {
    for f in h {
        if let Some(v) = f.dependencies().into_iter().find(|v| !X_VARS.contains(v)) {
            return Err(Error::FormMismatch {
                form: "x",
                expected: "functions of X1..X8".into(),
                got: format!("dependence on {v}"),
            });
        }
    }
    Ok(())
}

/// The four X-space relations equivalent to the compatibility condition:
/// sum_{s != r} D_s (dH_r/dX_{s+5} - dH_s/dX_{r+5}) = 0.
pub fn pde_system_residual(h: &[ScalarFunction; 4], x: &[f64; 8], conv: Convention) -> Result<[Residual; 4]> {
    check_x_vars(h)?;
    let (d, c) = pde_parts(h, x, conv);
    Ok([0, 1, 2, 3].map(|r| {
        let t: Vec<f64> = (0..4).filter(|s| *s != r).flat_map(|s| [c[s] * d[r][s], -c[s] * d[s][r]]).collect();
        Residual::new(t.iter().sum(), max_abs(&t))
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedForm {
    /// 0: solved for dH_0 (needs X1 != 0); 1: solved for dH_1 (needs X2 != 0).
    pub pivot: usize,
    /// Residuals of the three solved relations.
    pub solved: Vec<Residual>,
    /// Residual of the remaining relation after substituting the solved ones.
    pub identity: Residual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedFormsReport {
    pub forms: Vec<DerivedForm>,
}

/// Solve three of the four relations for dH_q/dX_{r+5} (q the pivot) and check
/// that the fourth one then holds identically.
pub fn derived_form(h: &[ScalarFunction; 4], x: &[f64; 8], conv: Convention, pivot: usize, eps: f64) -> Result<DerivedForm> {
    check_x_vars(h)?;
    let (d, c) = pde_parts(h, x, conv);
    let q = pivot;
    if c[q].abs() < eps {
        return Err(Error::SingularDenominator { name: if q == 0 { "X1" } else { "X2" }, value: x[q] });
    }
    let mut solved = vec![];
    let mut sub = d[q];
    for r in (0..4).filter(|r| *r != q) {
        let mut t = vec![d[q][r], d[r][q]];
        let mut rhs = d[r][q];
        for s in (0..4).filter(|s| *s != q && *s != r) {
            let k = c[s] / c[q];
            rhs += k * (d[r][s] - d[s][r]);
            t.push(k * d[r][s]);
            t.push(k * d[s][r]);
        }
        solved.push(Residual::new(d[q][r] - rhs, max_abs(&t)));
        sub[r] = rhs;
    }
    let t: Vec<f64> = (0..4).filter(|s| *s != q).flat_map(|s| [c[s] * sub[s], -c[s] * d[s][q]]).collect();
    Ok(DerivedForm { pivot, solved, identity: Residual::new(t.iter().sum(), max_abs(&t)) })
}

/// Both solved forms; a pivot whose coefficient is below `eps` is reported as an error.
pub fn derived_forms_check(h: &[ScalarFunction; 4], x: &[f64; 8], conv: Convention, eps: f64) -> Result<DerivedFormsReport> {
    Ok(DerivedFormsReport { forms: vec![derived_form(h, x, conv, 0, eps)?, derived_form(h, x, conv, 1, eps)?] })
}

/// X-form H functions of a closure spec.
pub fn x_functions(spec: &ClosureSpec) -> Result<[ScalarFunction; 4]> {
    if spec.form != Form::X || spec.functions.len() != 4 {
        return Err(Error::FormMismatch { form: "x", expected: "x closure".into(), got: spec.form.name().into() });
    }
    Ok([0, 1, 2, 3].map(|i| spec.functions[i].clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: MultiplierState,
    pub value: Vec<f64>,
    /// Deviation from the expected value (facts a, b) or norm of the residual (fact c).
    pub measure: f64,
}

/// Evidence that restricting and closing do not commute for the 5-moment subsystem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoncommutativityReport {
    /// Largest |h'| of the X-form potential over restricted states.
    pub restricted_h_max: f64,
    pub restricted_h_witness: Witness,
    /// eta5 on the restricted states violates the restricted first condition by 16 lambda_i.
    pub eta5: Witness,
    /// lambda_a lambda_a - 4/3 lambda lambda_ll used as h' in the restricted first condition.
    pub w_as_h: Witness,
}

/// Restricted first condition (lambda_ill = 0, lambda_ppll = 0) for a field given by its gradient.
fn restricted_operator(g: &Slots, s: &MultiplierState, i: usize) -> f64 {
    let a = s.matrix();
    g.s * s.lambda_i[i] + (0..3).map(|j| 2.0 * a[i][j] * g.v[j]).sum::<f64>()
}

fn restricted(mut s: MultiplierState) -> MultiplierState {
    s.lambda_ill = [0.0; 3];
    s.lambda_ppll = 0.0;
    s
}

pub fn noncommutativity_demo() -> NoncommutativityReport {
    use crate::closure::families::random_h;
    use crate::state::{random_state, SamplerConfig};
    let cfg = SamplerConfig { require_x1_nonzero: false, ..SamplerConfig::default() };
    let spec = ClosureSpec::from_polys(Form::X, random_h(17, 3, 8), Convention::Consistent).expect("x polynomials");
    let mut hmax = 0.0;
    let mut hw = None;
    for seed in 0..50 {
        let s = restricted(random_state(&cfg, 9000 + seed).expect("unconstrained sampler"));
        let h = assemble_potentials(&s, &spec, 0.0).expect("x form").h_prime;
        if hw.is_none() || h.abs() > hmax {
            hmax = h.abs();
            hw = Some(Witness { state: s, value: vec![h], measure: h.abs() });
        }
    }

    // eta5 is 16 lambda on the whole slice lambda_ill = 0 for any lambda_ppll != 0, so
    // its tangential derivatives can be taken at lambda_ppll = 1.
    let mut s = MultiplierState::zero();
    s.lambda = 1.0;
    s.lambda_i = [1.0, 0.0, 0.0];
    s.lambda_ij = [0.4, -0.3, 0.2, 0.1, -0.25, 0.15];
    let mut at = s;
    at.lambda_ppll = 1.0;
    let e5 = {
        let f = Fields::from_coords(&Dual::<DIM>::seed(at.coords()));
        eta_of(&x_of(&f, &Contractions::of(&f)))[4]
    };
    let g = Slots::from_storage_gradient(&e5.d);
    let r: Vec<f64> = (0..3).map(|i| restricted_operator(&g, &s, i)).collect();
    let dev = (0..3).map(|i| (r[i] - 16.0 * s.lambda_i[i]).abs()).fold(0.0, f64::max);
    let eta5 = Witness { state: s, value: r, measure: dev };

    let mut s = restricted(random_state(&cfg, 4242).expect("unconstrained sampler"));
    s.lambda_ij = [0.7, -0.2, 0.1, 0.5, -0.4, 0.3];
    let g = {
        let c = Dual::<DIM>::seed(s.coords());
        let f = Fields::from_coords(&c);
        let ll = f.a[0][0] + f.a[1][1] + f.a[2][2];
        let w = f.l[0] * f.l[0] + f.l[1] * f.l[1] + f.l[2] * f.l[2] - f.lambda * ll * (4.0 / 3.0);
        Slots::from_storage_gradient(&w.d)
    };
    let r: Vec<f64> = (0..3).map(|i| restricted_operator(&g, &s, i)).collect();
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    NoncommutativityReport {
        restricted_h_max: hmax,
        restricted_h_witness: hw.expect("50 samples"),
        eta5,
        w_as_h: Witness { state: s, value: r, measure: norm },
    }
}

/// Evaluate a residual function over states in parallel, merged in state order.
pub fn sweep<F>(name: &str, label: &str, states: &[MultiplierState], f: F) -> Result<ResidualReport>
where
    F: Fn(&MultiplierState) -> Result<Vec<Residual>> + Sync,
{
    if states.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let rows: Vec<Vec<Residual>> = states.par_iter().map(&f).collect::<Result<_>>()?;
    let mut rep = ResidualReport::new(name, label);
    for (i, (s, r)) in states.iter().zip(rows).enumerate() {
        let comps = r.iter().map(|x| x.abs).collect();
        rep.push(i, digest(&s.coords()), comps, worst(r));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::families;
    use crate::function::Polynomial;
    use crate::state::{random_state, SamplerConfig};

    fn st(seed: u64) -> MultiplierState {
        random_state(&SamplerConfig::default(), seed).unwrap()
    }

    #[test]
    fn operator_on_invariants_vanishes() {
        for seed in 0..20 {
            let s = st(seed);
            for r in invariant_galilean_residuals(&s) {
                assert!(r.rel() < 1e-12, "{r:?}");
            }
        }
    }

    #[test]
    fn operator_on_constant_and_lambda() {
        let s = st(1);
        assert_eq!(galilean_operator(|_| Dual::constant(3.0), &s, 0), 0.0);
        for i in 0..3 {
            let v = galilean_operator(|c| c[0] * 16.0, &s, i);
            assert!((v - 16.0 * s.lambda_i[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_identities() {
        for seed in 0..20 {
            for r in generator_galilean_residuals(&st(seed), Convention::Consistent) {
                assert!(r.rel() < 1e-12, "{r:?}");
            }
        }
        let legacy = generator_galilean_residuals(&st(3), Convention::Legacy);
        assert!(legacy[0].rel() < 1e-12);
        assert!(legacy[1].rel() > 1e-3 && legacy[2].rel() > 1e-3 && legacy[3].rel() > 1e-3);
    }

    #[test]
    fn x_and_eta_forms_satisfy_galilean() {
        let spec = ClosureSpec::from_polys(Form::X, families::random_h(4, 3, 10), Convention::Consistent).unwrap();
        let eta = ClosureSpec::from_polys(Form::Eta, families::random_k(4, 3, 10), Convention::Consistent).unwrap();
        for seed in 0..20 {
            let s = st(seed);
            assert!(worst(galilean_residual_h(&s, &spec, 1e-6).unwrap()).rel() < 1e-10);
            assert!(worst(galilean_residual_phi(&s, &spec, 1e-6).unwrap().concat()).rel() < 1e-10);
            let s = random_state(&SamplerConfig::eta_admissible(0.1), seed).unwrap();
            assert!(worst(galilean_residual_h(&s, &eta, 1e-6).unwrap()).rel() < 1e-10);
            assert!(worst(galilean_residual_phi(&s, &eta, 1e-6).unwrap().concat()).rel() < 1e-10);
        }
    }

    #[test]
    fn q_dependence_breaks_galilean() {
        let q1: ScalarFunction = Polynomial::var(&[Var::Q1], Var::Q1).into();
        let z = || -> ScalarFunction { Polynomial::zero(&X_VARS).into() };
        let spec = ClosureSpec::new(Form::X, vec![q1, z(), z(), z()]).unwrap();
        let hits = (0..50).filter(|s| worst(galilean_residual_h(&st(*s), &spec, 1e-6).unwrap()).rel() > 1e-3).count();
        assert!(hits >= 48);
    }

    #[test]
    fn families_are_compatible() {
        for (seed, psi, phi) in [(1, true, false), (2, false, true), (3, true, true)] {
            let spec = families::random_x_family(seed, psi, phi, Convention::Consistent);
            for s in 0..20 {
                let r = worst(compatibility_residual(&st(s), &spec, 1e-6).unwrap());
                assert!(r.rel() < 1e-10, "{r:?}");
            }
        }
        let spec = families::random_k_family(5, Convention::Consistent);
        for s in 0..20 {
            let state = random_state(&SamplerConfig::eta_admissible(0.1), s).unwrap();
            let r = worst(compatibility_residual(&state, &spec, 1e-6).unwrap());
            assert!(r.rel() < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn x5_witnesses() {
        let z = || -> ScalarFunction { Polynomial::zero(&X_VARS).into() };
        let x5 = || -> ScalarFunction { Polynomial::var(&X_VARS, Var::X5).into() };
        // H0 = X5 is the family member psi = X5^2/2
        let h0 = ClosureSpec::new(Form::X, vec![x5(), z(), z(), z()]).unwrap();
        let h1 = ClosureSpec::new(Form::X, vec![z(), x5(), z(), z()]).unwrap();
        for s in 0..50 {
            assert!(worst(compatibility_residual(&st(s), &h0, 1e-6).unwrap()).rel() < 1e-12);
        }
        let hits = (0..50).filter(|s| worst(compatibility_residual(&st(*s), &h1, 1e-6).unwrap()).rel() > 1e-3).count();
        assert!(hits >= 48);
    }

    #[test]
    fn pde_system_examples() {
        let x = [0.7, -0.4, 0.3, 1.1, 0.2, -0.6, 0.9, 0.5];
        let z = || -> ScalarFunction { Polynomial::zero(&X_VARS).into() };
        let h = [z(), Polynomial::var(&X_VARS, Var::X5).into(), z(), z()];
        let r = pde_system_residual(&h, &x, Convention::Consistent).unwrap();
        assert!((r[1].abs - 16.0 * x[0]).abs() < 1e-15);

        let low = [0, 1, 2, 3].map(|i| ScalarFunction::from(Polynomial::random(&X_VARS[..4], 3, i)));
        assert!(pde_system_residual(&low, &x, Convention::Consistent).unwrap().iter().all(|r| r.abs == 0.0));

        let c = [0, 1, 2, 3].map(|i| ScalarFunction::from(Polynomial::constant(&X_VARS, i as f64)));
        let d = derived_forms_check(&c, &x, Convention::Consistent, 1e-12).unwrap();
        assert!(d.forms.iter().all(|f| f.identity.abs == 0.0 && f.solved.iter().all(|r| r.abs == 0.0)));

        for seed in 0..5 {
            let fam = x_functions(&families::random_x_family(seed, true, true, Convention::Consistent)).unwrap();
            for r in pde_system_residual(&fam, &x, Convention::Consistent).unwrap() {
                assert!(r.rel() < 1e-12, "{r:?}");
            }
            let d = derived_forms_check(&fam, &x, Convention::Consistent, 1e-12).unwrap();
            for f in d.forms {
                assert!(f.identity.rel() < 1e-12);
                assert!(worst(f.solved).rel() < 1e-12);
            }
        }
        let mut x0 = x;
        x0[0] = 0.0;
        assert!(matches!(derived_form(&c, &x0, Convention::Consistent, 0, 1e-12), Err(Error::SingularDenominator { .. })));
    }

    #[test]
    fn identity_row_holds_for_arbitrary_h() {
        let x = [0.7, -0.4, 0.3, 1.1, 0.2, -0.6, 0.9, 0.5];
        let h = [0, 1, 2, 3].map(|i| ScalarFunction::from(Polynomial::random(&X_VARS, 2, 40 + i)));
        let d = derived_forms_check(&h, &x, Convention::Consistent, 1e-12).unwrap();
        for f in &d.forms {
            assert!(f.identity.rel() < 1e-12);
            assert!(worst(f.solved.clone()).rel() > 1e-3);
        }
    }

    #[test]
    fn subsystem() {
        let w: ScalarFunction = Polynomial::var(&[Var::LambdaLl, Var::W], Var::W).into();
        let spec = ClosureSpec::new(Form::Sub5, vec![w]).unwrap();
        let mixed: ScalarFunction = Polynomial::random(&[Var::LambdaLl, Var::W], 3, 5).into();
        let mixed = ClosureSpec::new(Form::Sub5, vec![mixed]).unwrap();
        let bad: ScalarFunction = Polynomial::var(&[Var::Lambda], Var::Lambda).into();
        let bad = ClosureSpec::new(Form::Sub5, vec![bad]).unwrap();
        for seed in 0..20 {
            let s5 = State5::of(&st(seed));
            for sp in [&spec, &mixed] {
                let r = subsystem_residual(&s5, sp).unwrap();
                assert!(r.galilean().rel() < 1e-12 && r.compatibility().rel() < 1e-12);
            }
            assert!(subsystem_residual(&s5, &bad).unwrap().galilean().rel() > 1e-3);
        }
        let c: ScalarFunction = Polynomial::constant(&[Var::LambdaLl], 2.0).into();
        let c = ClosureSpec::new(Form::Sub5, vec![c]).unwrap();
        let r = subsystem_residual(&State5::of(&st(1)), &c).unwrap();
        assert_eq!(r.galilean().abs, 0.0);
        assert_eq!(r.compatibility().abs, 0.0);
    }

    #[test]
    fn demo() {
        let d = noncommutativity_demo();
        assert!(d.restricted_h_max <= 1e-12);
        assert_eq!(d.eta5.value, vec![16.0, 0.0, 0.0]);
        assert!(d.eta5.measure <= 1e-12);
        assert!(d.w_as_h.measure > 0.1);
    }

    #[test]
    fn fd_agreement() {
        let spec = families::random_x_family(8, true, true, Convention::Consistent);
        for seed in 0..5 {
            assert!(fd_crosscheck(&st(seed), &spec, 1e-6, 1e-5).unwrap().rel() < 1e-5);
        }
    }

    #[test]
    fn sweep_is_ordered_and_rejects_empty() {
        assert!(matches!(sweep("x", "y", &[], |_| Ok(vec![])), Err(Error::EmptySampleSet)));
        let states: Vec<_> = (0..8).map(st).collect();
        let rep = sweep("n", "l", &states, |s| Ok(vec![Residual::new(s.lambda, 1.0)])).unwrap();
        for (i, r) in rep.rows.iter().enumerate() {
            assert_eq!(r.index, i);
            assert_eq!(r.components[0], states[i].lambda.abs());
        }
    }
}
