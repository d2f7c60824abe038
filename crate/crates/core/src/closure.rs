//! Potentials h', phi'_k in the three closure forms, the compatibility families and
//! the moments obtained as gradients of the potentials.

use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::function::{Polynomial, ScalarFunction, Var, ETA_VARS, Q_VARS, X_VARS};
use crate::invariants::{eta_of, v_of, x_from_eta_polys, x_of, y_from_eta_polys, yz_polys, Contractions, Convention};
use crate::state::{Fields, MultiplierState, DIM, I_A, I_L, I_LAMBDA, I_M, I_P, SYM_SLOT};

pub use crate::invariants::P;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Form {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "sub5")]
    Sub5,
}

impl Form {
    pub fn name(self) -> &'static str {
        match self {
            Form::X => "x",
            Form::Eta => "eta",
            Form::Sub5 => "sub5",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Form::Sub5 => 1,
            _ => 4,
        }
    }

    /// Variables a closure function of this form may depend on.
    pub fn admissible(self) -> Vec<Var> {
        match self {
            Form::X => X_VARS.iter().chain(&Q_VARS).copied().collect(),
            Form::Eta => ETA_VARS.iter().chain(&Q_VARS).copied().collect(),
            Form::Sub5 => vec![Var::LambdaLl, Var::W, Var::Lambda],
        }
    }
}

/// Constant coefficients of h' as printed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PCoefficients {
    pub p: [f64; 4],
}

impl Default for PCoefficients {
    fn default() -> Self {
        PCoefficients { p: P }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ClosureSpec {
    pub form: Form,
    pub functions: Vec<ScalarFunction>,
    #[serde(default)]
    pub convention: Convention,
}

#[derive(Deserialize)]
struct RawSpec {
    form: Form,
    functions: Vec<ScalarFunction>,
    #[serde(default)]
    convention: Convention,
}

impl TryFrom<RawSpec> for ClosureSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        ClosureSpec::with_convention(r.form, r.functions, r.convention)
    }
}

impl ClosureSpec {
    pub fn new(form: Form, functions: Vec<ScalarFunction>) -> Result<Self> {
        Self::with_convention(form, functions, Convention::default())
    }

    pub fn with_convention(form: Form, functions: Vec<ScalarFunction>, convention: Convention) -> Result<Self> {
        if functions.len() != form.arity() {
            return Err(Error::FormMismatch {
                form: form.name(),
                expected: format!("{} functions", form.arity()),
                got: format!("{} functions", functions.len()),
            });
        }
        let ok = form.admissible();
        for f in &functions {
            if let Some(v) = f.dependencies().iter().find(|v| !ok.contains(v)) {
                return Err(Error::FormMismatch {
                    form: form.name(),
                    expected: "functions of the form's invariants".into(),
                    got: format!("dependence on {v}"),
                });
            }
        }
        Ok(ClosureSpec { form, functions, convention })
    }

    pub fn from_polys(form: Form, polys: Vec<Polynomial>, convention: Convention) -> Result<Self> {
        Self::with_convention(form, polys.into_iter().map(ScalarFunction::from).collect(), convention)
    }
}

/// A closure file holds one spec or a list of specs.
pub fn parse_closures(text: &str) -> Result<Vec<ClosureSpec>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ClosureSpec),
        Many(Vec<ClosureSpec>),
    }
    match serde_json::from_str::<OneOrMany>(text) {
        Ok(OneOrMany::One(s)) => Ok(vec![s]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(_) => {
            // re-parse strictly to surface the real error
            if text.trim_start().starts_with('[') {
                Ok(serde_json::from_str::<Vec<ClosureSpec>>(text)?)
            } else {
                Ok(vec![serde_json::from_str::<ClosureSpec>(text)?])
            }
        }
    }
}

/// h' and phi'_k evaluated at generic-scalar coordinates.
pub fn potentials<T: Scalar>(c: &[T; DIM], spec: &ClosureSpec, eps1: f64) -> Result<(T, [T; 3])> {
    let f = Fields::from_coords(c);
    let fs = &spec.functions;
    match spec.form {
        Form::Sub5 => {
            let ll = f.a[0][0] + f.a[1][1] + f.a[2][2];
            let la = f.l[0] * f.l[0] + f.l[1] * f.l[1] + f.l[2] * f.l[2];
            let w = la - f.lambda * ll * (4.0 / 3.0);
            let h0 = fs[0].eval_with(&|v| match v {
                Var::LambdaLl => ll,
                Var::W => w,
                _ => f.lambda,
            });
            Ok((h0 * ll * (-2.0 / 3.0), [h0 * f.l[0], h0 * f.l[1], h0 * f.l[2]]))
        }
        Form::X | Form::Eta => {
            let ctr = Contractions::of(&f);
            let x = x_of(&f, &ctr);
            let v = v_of(&f, &ctr);
            let q = [ctr.ll, ctr.tr2, ctr.tr3];
            let w = spec.convention.weights();
            let (args, scale) = if spec.form == Form::X {
                (x, T::cst(1.0))
            } else {
                let p = f.p.value();
                if p.abs() < eps1 {
                    return Err(Error::SingularX1 { value: p, eps: eps1 });
                }
                (eta_of(&x), f.p.recip())
            };
            let lookup = |var: Var| -> T {
                match var {
                    Var::Q1 => q[0],
                    Var::Q2 => q[1],
                    Var::Q3 => q[2],
                    other => {
                        let i = X_VARS.iter().position(|z| *z == other).or_else(|| ETA_VARS.iter().position(|z| *z == other));
                        args[i.expect("admissible variable")]
                    }
                }
            };
            let hr: Vec<T> = fs.iter().map(|g| g.eval_with(&lookup)).collect();
            let mut h = T::zero();
            let mut phi = [T::zero(); 3];
            for r in 0..4 {
                h += hr[r] * x[r] * w[r];
                for k in 0..3 {
                    phi[k] += hr[r] * v[r][k];
                }
            }
            Ok((h * scale, [phi[0] * scale, phi[1] * scale, phi[2] * scale]))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialValue {
    pub h_prime: f64,
    pub phi_prime: [f64; 3],
}

pub fn assemble_potentials(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<PotentialValue> {
    let (h, phi) = potentials(&state.coords(), spec, eps1)?;
    Ok(PotentialValue { h_prime: h, phi_prime: phi })
}

/// Gradient in storage coordinates mapped to tensor slots: off-diagonal lambda_ij
/// slots get half the storage derivative, so the full-index pairing with a
/// perturbation reproduces the directional derivative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slots {
    pub s: f64,
    pub v: [f64; 3],
    pub t: [[f64; 3]; 3],
    pub w: [f64; 3],
    pub u: f64,
}

impl Slots {
    pub fn from_storage_gradient(g: &[f64; DIM]) -> Self {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let d = g[I_A + SYM_SLOT[i][j]];
                t[i][j] = if i == j { d } else { 0.5 * d };
            }
        }
        Slots {
            s: g[I_LAMBDA],
            v: [g[I_L], g[I_L + 1], g[I_L + 2]],
            t,
            w: [g[I_M], g[I_M + 1], g[I_M + 2]],
            u: g[I_P],
        }
    }

    /// Full-index contraction with a perturbation.
    pub fn pair(&self, d: &MultiplierState) -> f64 {
        let a = d.matrix();
        let mut s = self.s * d.lambda + self.u * d.lambda_ppll;
        for i in 0..3 {
            s += self.v[i] * d.lambda_i[i] + self.w[i] * d.lambda_ill[i];
            for j in 0..3 {
                s += self.t[i][j] * a[i][j];
            }
        }
        s
    }
}

/// Densities F, F_i, F_ij, F_ill, F_iill and fluxes with the extra index k.
#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub F: f64,
    pub F_i: [f64; 3],
    pub F_ij: [[f64; 3]; 3],
    pub F_ill: [f64; 3],
    pub F_iill: f64,
    pub F_k: [f64; 3],
    pub G_ki: [[f64; 3]; 3],
    pub G_kij: [[[f64; 3]; 3]; 3],
    pub G_kill: [[f64; 3]; 3],
    pub G_kiill: [f64; 3],
}

pub fn potential_gradients(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<(Slots, [Slots; 3])> {
    let (h, phi) = potentials(&Dual::<DIM>::seed(state.coords()), spec, eps1)?;
    Ok((
        Slots::from_storage_gradient(&h.d),
        [
            Slots::from_storage_gradient(&phi[0].d),
            Slots::from_storage_gradient(&phi[1].d),
            Slots::from_storage_gradient(&phi[2].d),
        ],
    ))
}

pub fn compute_moments(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<MomentSet> {
    let (h, phi) = potential_gradients(state, spec, eps1)?;
    Ok(MomentSet {
        F: h.s,
        F_i: h.v,
        F_ij: h.t,
        F_ill: h.w,
        F_iill: h.u,
        F_k: [phi[0].s, phi[1].s, phi[2].s],
        G_ki: [phi[0].v, phi[1].v, phi[2].v],
        G_kij: [phi[0].t, phi[1].t, phi[2].t],
        G_kill: [phi[0].w, phi[1].w, phi[2].w],
        G_kiill: [phi[0].u, phi[1].u, phi[2].u],
    })
}

/// Largest product-rule summand of dphi'_k/dlambda and dh'/dlambda_k, the
/// normalization of the compatibility residual.
pub fn compatibility_scale(state: &MultiplierState, spec: &ClosureSpec, eps1: f64) -> Result<[f64; 3]> {
    if spec.form == Form::Sub5 {
        return Ok([0.0; 3]);
    }
    let c = Dual::<DIM>::seed(state.coords());
    let f = Fields::from_coords(&c);
    let ctr = Contractions::of(&f);
    let x = x_of(&f, &ctr);
    let v = v_of(&f, &ctr);
    let q = [ctr.ll, ctr.tr2, ctr.tr3];
    let (args, factor) = if spec.form == Form::X {
        (x, 1.0)
    } else {
        if state.lambda_ppll.abs() < eps1 {
            return Err(Error::SingularX1 { value: state.lambda_ppll, eps: eps1 });
        }
        (eta_of(&x), 1.0 / state.lambda_ppll.abs())
    };
    let lookup = |var: Var| -> Dual<DIM> {
        match var {
            Var::Q1 => q[0],
            Var::Q2 => q[1],
            Var::Q3 => q[2],
            other => {
                let i = X_VARS.iter().position(|z| *z == other).or_else(|| ETA_VARS.iter().position(|z| *z == other));
                args[i.expect("admissible variable")]
            }
        }
    };
    let hr: Vec<Dual<DIM>> = spec.functions.iter().map(|g| g.eval_with(&lookup)).collect();
    let w = spec.convention.weights();
    Ok([0, 1, 2].map(|k| {
        let mut m: f64 = 0.0;
        for r in 0..4 {
            for t in [
                hr[r].d[I_LAMBDA] * v[r][k].v,
                hr[r].v * v[r][k].d[I_LAMBDA],
                w[r] * hr[r].d[I_L + k] * x[r].v,
                w[r] * hr[r].v * x[r].d[I_L + k],
            ] {
                m = m.max(t.abs());
            }
        }
        m * factor
    }))
}

fn require_poly<'a>(f: &'a ScalarFunction, what: &'static str) -> Result<&'a Polynomial> {
    f.as_polynomial().ok_or(Error::NotPolynomial(what))
}

fn check_vars(p: &Polynomial, allowed: &[Var], what: &'static str) -> Result<()> {
    let sup = p.support();
    if sup.iter().any(|v| !allowed.contains(v)) {
        return Err(Error::ArityMismatch {
            what,
            expected: allowed.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            got: sup.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

pub const PSI_VARS: [Var; 8] = [Var::X1, Var::X2, Var::X3, Var::X4, Var::X5, Var::Y6, Var::Y7, Var::Y8];
pub const HSTAR_VARS: [Var; 7] = [Var::X1, Var::X2, Var::X3, Var::X4, Var::Y6, Var::Y7, Var::Y8];
pub const PHI_VARS: [Var; 8] = [Var::X1, Var::X2, Var::X3, Var::X4, Var::Z5, Var::X6, Var::Z7, Var::Z8];
pub const HSTARSTAR_VARS: [Var; 7] = [Var::X1, Var::X2, Var::X3, Var::X4, Var::Z5, Var::Z7, Var::Z8];
pub const THETA_VARS: [Var; 8] = [Var::Eta1, Var::Eta2, Var::Eta3, Var::Eta4, Var::Y5, Var::Y6, Var::Y7, Var::Y8];
pub const KSTAR_VARS: [Var; 7] = [Var::Eta1, Var::Eta2, Var::Eta3, Var::Eta4, Var::Y6, Var::Y7, Var::Y8];

/// Closure functions H0..H3 solving the compatibility condition, built from the
/// arbitrary functions psi, H*_1..3, phi and H**_{0,2,3}. Derivatives of psi and
/// phi are taken in their own arguments and then evaluated at the Y/Z points.
pub fn build_compat_family_x(
    psi: &ScalarFunction,
    hstar: &[ScalarFunction; 3],
    phi: &ScalarFunction,
    hstarstar: &[ScalarFunction; 3],
    conv: Convention,
) -> Result<ClosureSpec> {
    let psi = require_poly(psi, "psi")?;
    let phi = require_poly(phi, "phi")?;
    check_vars(psi, &PSI_VARS, "psi")?;
    check_vars(phi, &PHI_VARS, "phi")?;
    let mut hs = vec![];
    for h in hstar {
        let p = require_poly(h, "H*")?;
        check_vars(p, &HSTAR_VARS, "H*")?;
        hs.push(p.clone());
    }
    let mut hss = vec![];
    for h in hstarstar {
        let p = require_poly(h, "H**")?;
        check_vars(p, &HSTARSTAR_VARS, "H**")?;
        hss.push(p.clone());
    }
    let xs: Vec<Polynomial> = X_VARS.iter().map(|v| Polynomial::var(&X_VARS, *v)).collect();
    let (y, z) = yz_polys(conv);
    let mut subs: Vec<(Var, Polynomial)> = X_VARS.iter().zip(&xs).map(|(v, p)| (*v, p.clone())).collect();
    subs.extend([(Var::Y6, y[1].clone()), (Var::Y7, y[2].clone()), (Var::Y8, y[3].clone())]);
    subs.extend([(Var::Z5, z[0].clone()), (Var::Z7, z[1].clone()), (Var::Z8, z[2].clone())]);
    let at = |p: &Polynomial| p.compose(&subs, &X_VARS);

    let s = conv.hat();
    let hat = |i: usize| xs[i].scale(s[i]);
    // psi-branch brackets (dpsi/dY_{r+5} + H*_r), r = 1..3
    let a: Vec<Polynomial> =
        (0..3).map(|i| at(&psi.diff([Var::Y6, Var::Y7, Var::Y8][i]).add(&hs[i]))).collect::<Result<_>>()?;
    // phi-branch brackets (dphi/dZ + H**) for Z5, Z7, Z8
    let b: Vec<Polynomial> =
        (0..3).map(|i| at(&phi.diff([Var::Z5, Var::Z7, Var::Z8][i]).add(&hss[i]))).collect::<Result<_>>()?;
    let psi5 = at(&psi.diff(Var::X5))?;
    let phi6 = at(&phi.diff(Var::X6))?;

    let h0 = hat(1)
        .mul(&a[0])
        .scale(1.0 / 8.0)
        .add(&hat(2).mul(&a[1]).scale(1.0 / 12.0))
        .add(&hat(3).mul(&a[2]).scale(1.0 / 16.0))
        .add(&psi5)
        .add(&hat(1).mul(&b[0]));
    let h1 = xs[0]
        .mul(&a[0])
        .add(&xs[0].mul(&b[0]).scale(8.0))
        .sub(&hat(2).mul(&b[1]).scale(2.0 / 3.0))
        .sub(&hat(3).mul(&b[2]).scale(0.5))
        .add(&phi6);
    let h2 = xs[0].mul(&a[1]).add(&hat(1).mul(&b[1]));
    let h3 = xs[0].mul(&a[2]).add(&hat(1).mul(&b[2]));
    ClosureSpec::from_polys(Form::X, vec![h0, h1, h2, h3], conv)
}

/// eta-form family: K0..K3 from theta and K*_1..3, arguments evaluated through Y(eta).
pub fn build_compat_family_k(theta: &ScalarFunction, kstar: &[ScalarFunction; 3], conv: Convention) -> Result<ClosureSpec> {
    let theta = require_poly(theta, "theta")?;
    check_vars(theta, &THETA_VARS, "theta")?;
    let mut ks = vec![];
    for k in kstar {
        let p = require_poly(k, "K*")?;
        check_vars(p, &KSTAR_VARS, "K*")?;
        ks.push(p.clone());
    }
    let es: Vec<Polynomial> = ETA_VARS.iter().map(|v| Polynomial::var(&ETA_VARS, *v)).collect();
    let y = y_from_eta_polys(conv);
    let mut subs: Vec<(Var, Polynomial)> = (0..4).map(|i| (ETA_VARS[i], es[i].clone())).collect();
    subs.extend([Var::Y5, Var::Y6, Var::Y7, Var::Y8].into_iter().zip(y.iter().cloned()));
    let at = |p: &Polynomial| p.compose(&subs, &ETA_VARS);
    let s = conv.hat();
    let a: Vec<Polynomial> =
        (0..3).map(|i| at(&theta.diff([Var::Y6, Var::Y7, Var::Y8][i]).add(&ks[i]))).collect::<Result<_>>()?;
    let t5 = at(&theta.diff(Var::Y5))?;
    let e1 = &es[0];
    let k0 = e1
        .mul(&es[1])
        .mul(&a[0])
        .scale(s[1] / 8.0)
        .add(&e1.mul(&es[2]).mul(&a[1]).scale(s[2] / 12.0))
        .add(&e1.mul(&es[3]).mul(&a[2]).scale(s[3] / 16.0))
        .add(&t5);
    let k: Vec<Polynomial> = (0..3).map(|i| e1.mul(&a[i])).collect();
    ClosureSpec::from_polys(Form::Eta, vec![k0, k[0].clone(), k[1].clone(), k[2].clone()], conv)
}

/// eta-form spec equivalent to an X-form spec: K_i = eta1 (H_i o X(eta)).
pub fn eta_equivalent(spec: &ClosureSpec) -> Result<ClosureSpec> {
    if spec.form != Form::X {
        return Err(Error::FormMismatch { form: "x", expected: "x form".into(), got: spec.form.name().into() });
    }
    let xe = x_from_eta_polys();
    let subs: Vec<(Var, Polynomial)> = X_VARS.iter().copied().zip(xe.iter().cloned()).collect();
    let e1 = Polynomial::var(&ETA_VARS, Var::Eta1);
    let ks = spec
        .functions
        .iter()
        .map(|f| Ok(e1.mul(&require_poly(f, "H")?.compose(&subs, &ETA_VARS)?)))
        .collect::<Result<Vec<_>>>()?;
    ClosureSpec::from_polys(Form::Eta, ks, spec.convention)
}

/// Random polynomial families used by tests and sweeps.
pub mod families {
    use super::*;

    /// Four random polynomials in X1..X8.
    pub fn random_h(seed: u64, degree: u32, terms: usize) -> Vec<Polynomial> {
        (0..4).map(|r| Polynomial::random_sparse(&X_VARS, degree, terms, seed * 4 + r)).collect()
    }

    /// Four random polynomials in eta1..eta8.
    pub fn random_k(seed: u64, degree: u32, terms: usize) -> Vec<Polynomial> {
        (0..4).map(|r| Polynomial::random_sparse(&ETA_VARS, degree, terms, 1_000_003 + seed * 4 + r)).collect()
    }

    pub struct XFamilyInputs {
        pub psi: ScalarFunction,
        pub hstar: [ScalarFunction; 3],
        pub phi: ScalarFunction,
        pub hstarstar: [ScalarFunction; 3],
    }

    fn sf(p: Polynomial) -> ScalarFunction {
        ScalarFunction::Polynomial(p)
    }

    /// Random inputs for the X-form family; either branch can be switched off.
    pub fn random_x_inputs(seed: u64, psi_branch: bool, phi_branch: bool) -> XFamilyInputs {
        let s = 7919 * seed;
        let pick = |on: bool, vars: &[Var], deg: u32, n: usize, k: u64| {
            if on {
                Polynomial::random_sparse(vars, deg, n, s + k)
            } else {
                Polynomial::zero(vars)
            }
        };
        XFamilyInputs {
            psi: sf(pick(psi_branch, &PSI_VARS, 3, 10, 1)),
            hstar: [1, 2, 3].map(|k| sf(pick(psi_branch, &HSTAR_VARS, 2, 5, 10 + k))),
            phi: sf(pick(phi_branch, &PHI_VARS, 3, 10, 20)),
            hstarstar: [1, 2, 3].map(|k| sf(pick(phi_branch, &HSTARSTAR_VARS, 2, 5, 30 + k))),
        }
    }

    pub fn random_x_family(seed: u64, psi_branch: bool, phi_branch: bool, conv: Convention) -> ClosureSpec {
        let i = random_x_inputs(seed, psi_branch, phi_branch);
        build_compat_family_x(&i.psi, &i.hstar, &i.phi, &i.hstarstar, conv).expect("polynomial inputs")
    }

    pub fn random_k_family(seed: u64, conv: Convention) -> ClosureSpec {
        let s = 104_729 * seed;
        let theta = sf(Polynomial::random_sparse(&THETA_VARS, 3, 10, s + 1));
        let kstar = [1, 2, 3].map(|k| sf(Polynomial::random_sparse(&KSTAR_VARS, 2, 5, s + 10 + k)));
        build_compat_family_k(&theta, &kstar, conv).expect("polynomial inputs")
    }

    /// Compatible X-form families shipped with the crate: both branches alone and together.
    pub fn bundled_x() -> Vec<ClosureSpec> {
        (1..=10)
            .map(|seed| {
                let (psi, phi) = [(true, false), (false, true), (true, true)][(seed as usize - 1) % 3];
                random_x_family(seed, psi, phi, Convention::Consistent)
            })
            .collect()
    }

    pub fn bundled_eta() -> Vec<ClosureSpec> {
        (1..=5).map(|seed| random_k_family(seed, Convention::Consistent)).collect()
    }

    pub fn bundled_sub5() -> Vec<ClosureSpec> {
        let v = [Var::LambdaLl, Var::W];
        [
            Polynomial::var(&v, Var::W),
            Polynomial::constant(&v, 1.5),
            Polynomial::random_sparse(&v, 3, 6, 5),
        ]
        .into_iter()
        .map(|p| ClosureSpec::from_polys(Form::Sub5, vec![p], Convention::Consistent).expect("sub5 polynomial"))
        .collect()
    }
}
