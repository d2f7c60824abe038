//! Seeded batch runs behind the command-line tool. Every run returns a summary
//! (one entry per check), per-item rows and free-form details; identical
//! configurations give identical output regardless of the worker count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::closure::{ClosureSpec, Form};
use crate::convexity::{
    analyze_state_c, coefficients_at_c, coefficients_at_c_printed, coefficients_from_hessian, convexity_verdict, hessian,
    limit_verdict, scan_k, LimitOptions, Verdict, VerdictKind,
};
use crate::error::{Error, Result};
use crate::frame::{bundle_distance, canonicalize, round_trip, s1_distance, NewtonOptions, S1Set};
use crate::function::{Polynomial, ScalarFunction, Var, X_VARS};
use crate::invariants::{check_derivative_identities, compute_x};
use crate::report::{digest, worst, Residual};
use crate::state::{sample_states, state_c, sub_seed, MultiplierState, SamplerConfig};
use crate::verifier::{
    compatibility_residual, derived_form, fd_crosscheck, galilean_residual_h, galilean_residual_phi, generator_galilean_residuals,
    invariant_galilean_residuals, noncommutativity_demo, pde_system_residual, subsystem_residual, x_functions, State5,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Identities evaluated with exact derivatives.
    pub exact: f64,
    /// X-space system and the 5-moment checks.
    pub strict: f64,
    /// Exact against finite-difference derivatives.
    pub fd: f64,
    /// Floor a negative witness must exceed.
    pub witness: f64,
    /// Representation round trip.
    pub round_trip: f64,
    /// Block structure and coefficient formulas at state C.
    pub blocks: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { exact: 1e-9, strict: 1e-10, fd: 1e-5, witness: 1e-3, round_trip: 1e-8, blocks: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub paper_ref: String,
    pub max_rel: f64,
    pub pass: bool,
    /// Reported without affecting the overall verdict.
    #[serde(default = "yes", skip_serializing_if = "Clone::clone")]
    pub gating: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub config: Value,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Summary {
    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.gating && !c.pass).map(|c| c.name.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub index: usize,
    pub digest: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub summary: Summary,
    pub rows: Vec<Row>,
    pub details: Value,
}

impl Output {
    pub fn jsonl(&self) -> String {
        self.rows.iter().map(|r| serde_json::to_string(r).expect("row serializes") + "\n").collect()
    }

    pub fn csv(&self) -> String {
        let mut names: Vec<&String> = self.rows.iter().flat_map(|r| r.values.keys()).collect();
        names.sort();
        names.dedup();
        let mut out = String::from("index,digest");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{}", r.index, r.digest));
            for n in &names {
                match r.values.get(*n) {
                    Some(v) => out.push_str(&format!(",{v:e}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Accumulates named checks and per-item values in insertion order.
struct Collector {
    checks: Vec<Check>,
    rows: Vec<Row>,
}

impl Collector {
    fn new(digests: Vec<String>) -> Self {
        Collector {
            checks: vec![],
            rows: digests.into_iter().enumerate().map(|(index, digest)| Row { index, digest, values: BTreeMap::new() }).collect(),
        }
    }

    fn check(&mut self, name: &str, label: &str, max_rel: f64, pass: bool) -> &mut Check {
        if let Some(i) = self.checks.iter().position(|c| c.name == name) {
            let c = &mut self.checks[i];
            c.max_rel = c.max_rel.max(max_rel);
            c.pass &= pass;
            return c;
        }
        self.checks.push(Check { name: name.into(), paper_ref: label.into(), max_rel, pass, gating: true });
        self.checks.last_mut().unwrap()
    }

    /// Upper-bounded residuals, one per item.
    fn bounded(&mut self, name: &str, label: &str, tol: f64, per_item: &[(usize, Residual)]) {
        let w = worst(per_item.iter().map(|(_, r)| *r)).rel();
        self.check(name, label, w, w <= tol);
        for (i, r) in per_item {
            let e = self.rows[*i].values.entry(name.into()).or_insert(0.0);
            *e = e.max(r.rel());
        }
    }

    /// Negative witness: the residual must exceed the floor on at least 95% of items.
    /// Reports the 5th-percentile relative residual.
    fn witness(&mut self, name: &str, label: &str, floor: f64, per_item: &[(usize, Residual)]) {
        let mut rels: Vec<f64> = per_item.iter().map(|(_, r)| r.rel()).collect();
        rels.sort_by(f64::total_cmp);
        let hits = rels.iter().filter(|r| **r >= floor).count();
        let q = rels.get(rels.len() / 20).copied().unwrap_or(0.0);
        self.check(name, label, q, !rels.is_empty() && hits * 100 >= 95 * rels.len());
        for (i, r) in per_item {
            self.rows[*i].values.insert(name.into(), r.rel());
        }
    }

    fn finish(self, command: &str, config: Value, details: Value) -> Output {
        let pass = self.checks.iter().filter(|c| c.gating).all(|c| c.pass);
        Output { summary: Summary { command: command.into(), config, checks: self.checks, pass }, rows: self.rows, details }
    }
}

fn per_state<F>(states: &[MultiplierState], f: F) -> Result<Vec<(usize, Residual)>>
where
    F: Fn(&MultiplierState) -> Result<Residual> + Sync,
{
    states.par_iter().enumerate().map(|(i, s)| f(s).map(|r| (i, r))).collect()
}

fn check_forms(closures: &[ClosureSpec], form: Form) -> Result<()> {
    if closures.is_empty() {
        return Err(Error::Schema("no closure functions given".into()));
    }
    if let Some(c) = closures.iter().find(|c| c.form != form) {
        return Err(Error::FormMismatch { form: form.name(), expected: format!("{} closures", form.name()), got: c.form.name().into() });
    }
    Ok(())
}

fn x_spec(fs: [ScalarFunction; 4]) -> ClosureSpec {
    ClosureSpec::new(Form::X, fs.to_vec()).expect("x-form witness")
}

fn zero_x() -> ScalarFunction {
    Polynomial::zero(&X_VARS).into()
}

/// H0 = Q1: a potential depending on a trace scalar.
pub fn q1_witness() -> ClosureSpec {
    x_spec([Polynomial::var(&[Var::Q1], Var::Q1).into(), zero_x(), zero_x(), zero_x()])
}

/// H1 = X5: violates the second X-space relation by 16 X1.
pub fn h1_x5_witness() -> ClosureSpec {
    x_spec([zero_x(), Polynomial::var(&X_VARS, Var::X5).into(), zero_x(), zero_x()])
}

/// H0 = X5, which belongs to the family (psi = X5^2/2).
pub fn h0_x5_closure() -> ClosureSpec {
    x_spec([Polynomial::var(&X_VARS, Var::X5).into(), zero_x(), zero_x(), zero_x()])
}

pub fn sub5_lambda_witness() -> ClosureSpec {
    ClosureSpec::new(Form::Sub5, vec![Polynomial::var(&[Var::Lambda], Var::Lambda).into()]).expect("sub5 witness")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub samples: usize,
    pub form: Form,
    pub tol: Tolerances,
    /// Lower bound on |lambda_ppll| for eta-form states.
    pub eta_min: f64,
    /// States used for the finite-difference cross-check.
    pub fd_samples: usize,
    pub skip_compat: bool,
    pub closure_source: String,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            samples: 200,
            form: Form::X,
            tol: Tolerances::default(),
            eta_min: 0.1,
            fd_samples: 10,
            skip_compat: false,
            closure_source: "bundled".into(),
        }
    }
}

pub fn sampler_for(form: Form, eta_min: f64) -> SamplerConfig {
    match form {
        Form::Eta => SamplerConfig::eta_admissible(eta_min),
        _ => SamplerConfig::default(),
    }
}

pub fn verify(cfg: &VerifyConfig, closures: &[ClosureSpec]) -> Result<Output> {
    if cfg.samples == 0 {
        return Err(Error::EmptySampleSet);
    }
    check_forms(closures, cfg.form)?;
    let states = sample_states(&sampler_for(cfg.form, cfg.eta_min), cfg.seed, cfg.samples)?;
    let mut col = Collector::new(states.iter().map(|s| digest(&s.coords())).collect());
    let t = cfg.tol;
    let eps1 = 1e-6;

    for spec in closures {
        if cfg.form == Form::Sub5 {
            let r = per_state(&states, |s| Ok(subsystem_residual(&State5::of(s), spec)?.galilean()))?;
            col.bounded("galilean_sub5", "5-moment frame-change conditions", t.strict, &r);
            if !cfg.skip_compat {
                let r = per_state(&states, |s| Ok(subsystem_residual(&State5::of(s), spec)?.compatibility()))?;
                col.bounded("compatibility", "compatibility condition", t.strict, &r);
            }
            continue;
        }
        let r = per_state(&states, |s| Ok(worst(galilean_residual_h(s, spec, eps1)?)))?;
        col.bounded("galilean_h", "frame-change condition, h' line", t.exact, &r);
        let r = per_state(&states, |s| Ok(worst(galilean_residual_phi(s, spec, eps1)?.concat())))?;
        col.bounded("galilean_phi", "frame-change condition, phi' line", t.exact, &r);
        let n = cfg.fd_samples.min(states.len());
        let r = per_state(&states[..n], |s| fd_crosscheck(s, spec, eps1, 1e-5))?;
        col.bounded("fd_crosscheck", "exact against central-difference derivatives", t.fd, &r);
        if cfg.skip_compat {
            continue;
        }
        let r = per_state(&states, |s| Ok(worst(compatibility_residual(s, spec, eps1)?)))?;
        col.bounded("compatibility", "compatibility condition", t.exact, &r);
        let pure_x = spec.functions.iter().all(|f| f.dependencies().iter().all(|v| X_VARS.contains(v)));
        if let (Form::X, true) = (spec.form, pure_x) {
            let h = x_functions(spec)?;
            let r = per_state(&states, |s| Ok(worst(pde_system_residual(&h, &compute_x(s).x(), spec.convention)?)))?;
            col.bounded("pde_system", "compatibility condition in the X variables", t.strict, &r);
            let r = per_state(&states, |s| {
                let x = compute_x(s).x();
                let mut w = Residual::default();
                for (pivot, min) in [(0, x[0].abs()), (1, x[1].abs())] {
                    if min >= 0.1 {
                        let f = derived_form(&h, &x, spec.convention, pivot, 1e-12)?;
                        w = w.worst(worst(f.solved)).worst(f.identity);
                    }
                }
                Ok(w)
            })?;
            col.bounded("derived_forms", "X-variable system solved for dH0 and dH1", t.exact, &r);
        }
    }

    let r = per_state(&states, |s| Ok(worst(invariant_galilean_residuals(s))))?;
    col.bounded("invariant_frame_change", "frame-change invariance of X1..X8", t.exact, &r);
    let conv = closures.first().map(|c| c.convention).unwrap_or_default();
    let r = per_state(&states, |s| Ok(worst(generator_galilean_residuals(s, conv))))?;
    col.bounded("generator_frame_change", "frame-change identity of the generators V_r", t.exact, &r);
    let r = per_state(&states, |s| Ok(worst(check_derivative_identities(s, conv).into_iter().map(|d| d.residual))))?;
    col.bounded("derivative_identities", "lambda-derivatives of X1..X8", t.exact, &r);

    if cfg.form == Form::Sub5 {
        let w = sub5_lambda_witness();
        let r = per_state(&states, |s| Ok(subsystem_residual(&State5::of(s), &w)?.galilean()))?;
        col.witness("witness_sub5_lambda", "5-moment closure depending on lambda", t.witness, &r);
    } else {
        let w = q1_witness();
        let r = per_state(&states, |s| Ok(worst(galilean_residual_h(s, &w, eps1)?)))?;
        col.witness("witness_uniqueness_q1", "H_r depending on a trace scalar", t.witness, &r);
        let w = h1_x5_witness();
        let r = per_state(&states, |s| Ok(worst(compatibility_residual(s, &w, eps1)?)))?;
        col.witness("witness_compat_h1_x5", "H1 = X5 outside the compatible family", t.witness, &r);
    }
    Ok(col.finish("verify", serde_json::to_value(cfg)?, Value::Null))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub degree: u32,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityConfig {
    pub seed: u64,
    pub form: Form,
    /// Number of (lambda, lambda_ll, lambda_ppll) points of state C.
    pub points: usize,
    pub reproduce_form5_failure: bool,
    /// Verdicts in the lambda_ppll -> 0+ limit for eta closures.
    pub limit: bool,
    pub limit_options: LimitOptions,
    pub scan: Option<ScanConfig>,
    pub tol: Tolerances,
    pub closure_source: String,
}

impl Default for ConvexityConfig {
    fn default() -> Self {
        ConvexityConfig {
            seed: 0,
            form: Form::X,
            points: 4,
            reproduce_form5_failure: false,
            limit: false,
            limit_options: LimitOptions::default(),
            scan: None,
            tol: Tolerances::default(),
            closure_source: "bundled".into(),
        }
    }
}

/// Seeded points (lambda, lambda_ll, lambda_ppll) of state C with lambda_ll, lambda_ppll away from 0.
pub fn c_points(seed: u64, n: usize) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0xC));
    (0..n).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.5), rng.gen_range(0.2..1.5))).collect()
}

struct EtaPoint {
    asymmetry: f64,
    blocks: f64,
    formulas: f64,
    printed: f64,
    verdict: Verdict,
}

pub fn convexity(cfg: &ConvexityConfig, closures: &[ClosureSpec]) -> Result<Output> {
    let pts = c_points(cfg.seed, cfg.points);
    let jobs: Vec<(usize, usize)> = (0..closures.len()).flat_map(|f| (0..pts.len()).map(move |p| (f, p))).collect();
    if jobs.is_empty() && cfg.scan.is_none() {
        return Err(Error::EmptySampleSet);
    }
    if !closures.is_empty() {
        check_forms(closures, cfg.form)?;
    }
    let digests = jobs
        .iter()
        .map(|(f, p)| {
            let (a, b, c) = pts[*p];
            format!("family{f}@{}", digest(&[a, b, c]))
        })
        .collect();
    let mut col = Collector::new(digests);
    let t = cfg.tol;
    let mut details = serde_json::Map::new();

    if cfg.form == Form::X || cfg.reproduce_form5_failure {
        if cfg.form != Form::X {
            return Err(Error::FormMismatch { form: "x", expected: "x closures".into(), got: cfg.form.name().into() });
        }
        let res: Vec<_> = jobs
            .par_iter()
            .map(|(f, p)| {
                let (l, ll, pp) = pts[*p];
                analyze_state_c(l, ll, pp, &closures[*f], 1e-6)
            })
            .collect::<Result<_>>()?;
        let mut sym = vec![];
        let mut q = vec![];
        let mut inertia = vec![];
        for (i, a) in res.iter().enumerate() {
            let s = state_c(a.lambda, a.lambda_ll, a.lambda_ppll);
            let h = hessian(&s, &closures[jobs[i].0], 1e-6)?;
            sym.push((i, Residual { abs: h.asymmetry, scale: 1.0 }));
            let ok = a.verdict.verdict == VerdictKind::Indefinite && a.q_direct.is_some_and(|v| v < 0.0);
            let dev = match (a.q_direct, a.verdict.q_counterexample) {
                (Some(d), Some(e)) if ok => Residual::new(d - e, e.abs()),
                _ => Residual { abs: 1.0, scale: 0.0 },
            };
            q.push((i, dev));
            inertia.push((i, Residual::new(a.negative_eigenvalues.0 as f64 - a.negative_eigenvalues.1 as f64, 1.0)));
        }
        col.bounded("hessian_symmetry", "symmetry of the Hessian of h'", t.strict, &sym);
        col.bounded("x_form_indefinite", "X-form closures: Q not positive definite at C", t.blocks, &q);
        col.bounded("inertia_cross_check", "minor verdict against Hessian eigenvalue signs", 0.0, &inertia);
        details.insert("analyses".into(), serde_json::to_value(&res)?);
    } else if cfg.form == Form::Eta {
        let res: Vec<_> = jobs
            .par_iter()
            .map(|(f, p)| {
                let (l, ll, pp) = pts[*p];
                let s = state_c(l, ll, pp);
                let spec = &closures[*f];
                let h = hessian(&s, spec, 1e-6)?;
                let (kh, blocks) = coefficients_from_hessian(&h.matrix(), &s)?;
                let kf = coefficients_at_c(&s, spec)?;
                let kp = coefficients_at_c_printed(&s, spec)?;
                Ok(EtaPoint {
                    asymmetry: h.asymmetry,
                    blocks: blocks.cross_block.max(blocks.repetition),
                    formulas: kh.max_rel_diff(&kf),
                    printed: kh.max_rel_diff(&kp),
                    verdict: convexity_verdict(&kf, 1e-12),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rs = |g: fn(&EtaPoint) -> f64| res.iter().enumerate().map(|(i, r)| (i, Residual { abs: g(r), scale: 1.0 })).collect::<Vec<_>>();
        col.bounded("hessian_symmetry", "symmetry of the Hessian of h'", t.strict, &rs(|r| r.asymmetry));
        col.bounded("block_decomposition", "Q = Q1 + Q2 + Q3 at state C", t.blocks, &rs(|r| r.blocks));
        col.bounded("coefficient_formulas", "block coefficients a, b, c at state C", t.blocks, &rs(|r| r.formulas));
        let printed = rs(|r| r.printed);
        col.bounded("printed_coefficients", "block coefficients with the printed expansion constants", t.blocks, &printed);
        if let Some(c) = col.checks.iter_mut().find(|c| c.name == "printed_coefficients") {
            c.gating = false;
        }
        let verdicts: Vec<Value> = res
            .iter()
            .zip(&jobs)
            .map(|(r, (f, p))| json!({"family": f, "point": pts[*p], "verdict": r.verdict}))
            .collect();
        details.insert("verdicts".into(), Value::Array(verdicts));
        if cfg.limit {
            let mut pairs: Vec<(usize, f64, f64)> = vec![];
            for f in 0..closures.len() {
                for p in &pts {
                    pairs.push((f, p.0, p.1));
                }
            }
            let lim: Vec<Value> = pairs
                .par_iter()
                .map(|(f, l, ll)| {
                    match limit_verdict(|p| coefficients_at_c(&state_c(*l, *ll, p), &closures[*f]), &cfg.limit_options, 1e-12) {
                        Ok(v) => json!({"family": f, "lambda": l, "lambda_ll": ll, "verdict": v}),
                        Err(e) => json!({"family": f, "lambda": l, "lambda_ll": ll, "error": e.to_string()}),
                    }
                })
                .collect();
            details.insert("limit_verdicts".into(), Value::Array(lim));
        }
    } else {
        return Err(Error::FormMismatch { form: "x|eta", expected: "x or eta closures".into(), got: cfg.form.name().into() });
    }

    if let Some(sc) = &cfg.scan {
        let pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
        let rows = scan_k(sc.degree, sc.count, cfg.seed, &pairs, &cfg.limit_options);
        let passes = rows.iter().filter(|r| r.verdict == Some(VerdictKind::PositiveDefinite)).count();
        details.insert("scan".into(), json!({"rows": rows, "positive_definite": passes}));
    }
    Ok(col.finish("convexity", serde_json::to_value(cfg)?, Value::Object(details)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReduceConfig {
    pub seed: u64,
    pub samples: usize,
    pub tol: Tolerances,
    pub newton: NewtonOptions,
    /// Iteration budget counted as converged.
    pub newton_budget: usize,
    pub state_source: String,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig {
            seed: 0,
            samples: 200,
            tol: Tolerances::default(),
            newton: NewtonOptions::default(),
            newton_budget: 15,
            state_source: "sampled".into(),
        }
    }
}

pub fn reduce_states(cfg: &ReduceConfig) -> Result<Vec<MultiplierState>> {
    if cfg.samples == 0 {
        return Err(Error::EmptySampleSet);
    }
    let sampler = SamplerConfig { require_independence: true, ..SamplerConfig::default() };
    sample_states(&sampler, cfg.seed, cfg.samples)
}

pub fn reduce(cfg: &ReduceConfig, states: &[MultiplierState]) -> Result<Output> {
    if states.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut col = Collector::new(states.iter().map(|s| digest(&s.coords())).collect());
    let t = cfg.tol;
    let r = per_state(states, |s| Ok(Residual { abs: bundle_distance(s, &canonicalize(s).canonical_state), scale: 1.0 }))?;
    col.bounded("canonical_invariance", "invariants unchanged by the canonical rotation", t.exact * 0.1, &r);
    let r = per_state(states, |s| {
        let s1 = S1Set::of(&canonicalize(s).canonical_state);
        let hc = s1.ma3m_hamilton_cayley();
        Ok(Residual::new(hc - s1.mA3m, s1.mA3m.abs().max(s1.mm * s1.lambda_ll.abs().powi(3))))
    })?;
    col.bounded("hamilton_cayley", "Hamilton-Cayley elimination of the cubic contraction", t.strict, &r);

    let trips: Vec<_> = states.par_iter().map(|s| round_trip(s, [0.0; 4], cfg.newton)).collect();
    let mut conv = vec![];
    let mut s1 = vec![];
    let mut full = vec![];
    let mut iters = vec![];
    let mut errors = BTreeMap::<String, usize>::new();
    for (i, (s, tr)) in states.iter().zip(&trips).enumerate() {
        match tr {
            Ok(tr) => {
                iters.push(tr.newton_iterations);
                conv.push(tr.newton_iterations <= cfg.newton_budget);
                s1.push((i, Residual { abs: s1_distance(s, &tr.reconstructed), scale: 1.0 }));
                full.push((i, Residual { abs: tr.max_rel_error, scale: 1.0 }));
                col.rows[i].values.insert("newton_iterations".into(), tr.newton_iterations as f64);
            }
            Err(e) => {
                conv.push(false);
                *errors.entry(e.to_string()).or_default() += 1;
            }
        }
    }
    let frac = conv.iter().filter(|c| **c).count() as f64 / conv.len() as f64;
    col.check("newton_convergence", "Newton recovery of lambda, lambda_k from zero", 1.0 - frac, frac >= 0.95);
    col.bounded("round_trip_s1_invariants", "invariants fixed by S1 after reconstruction", t.round_trip, &s1);
    col.bounded("round_trip_full_bundle", "full invariant bundle after reconstruction", t.round_trip, &full);
    let recovered = full.iter().filter(|(_, r)| r.abs <= t.round_trip).count();
    if let Some(c) = col.checks.iter_mut().find(|c| c.name == "round_trip_full_bundle") {
        c.gating = false;
    }
    if s1.is_empty() {
        col.check("round_trip_s1_invariants", "invariants fixed by S1 after reconstruction", f64::INFINITY, false);
    }
    iters.sort_unstable();
    let details = json!({
        "converged_fraction": frac,
        "original_root_recovered": recovered,
        "round_trips": full.len(),
        "median_iterations": iters.get(iters.len() / 2),
        "max_iterations": iters.last(),
        "errors": errors,
    });
    Ok(col.finish("reduce", serde_json::to_value(cfg)?, details))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemConfig {
    pub seed: u64,
    pub samples: usize,
    pub tol: Tolerances,
    pub closure_source: String,
}

impl Default for SubsystemConfig {
    fn default() -> Self {
        SubsystemConfig { seed: 0, samples: 200, tol: Tolerances::default(), closure_source: "bundled".into() }
    }
}

pub fn subsystem(cfg: &SubsystemConfig, closures: &[ClosureSpec]) -> Result<Output> {
    if cfg.samples == 0 {
        return Err(Error::EmptySampleSet);
    }
    check_forms(closures, Form::Sub5)?;
    let states = sample_states(&SamplerConfig::default(), cfg.seed, cfg.samples)?;
    let mut col = Collector::new(states.iter().map(|s| digest(&s.coords())).collect());
    let t = cfg.tol;
    for spec in closures {
        let r = per_state(&states, |s| Ok(subsystem_residual(&State5::of(s), spec)?.galilean()))?;
        col.bounded("galilean_sub5", "5-moment frame-change conditions", t.strict, &r);
        let r = per_state(&states, |s| Ok(subsystem_residual(&State5::of(s), spec)?.compatibility()))?;
        col.bounded("compatibility_sub5", "5-moment closures satisfy compatibility", t.strict, &r);
    }
    let w = sub5_lambda_witness();
    let r = per_state(&states, |s| Ok(subsystem_residual(&State5::of(s), &w)?.galilean()))?;
    col.witness("witness_sub5_lambda", "5-moment closure depending on lambda", t.witness, &r);

    let d = noncommutativity_demo();
    col.check("restricted_h_vanishes", "X-form h' on the restricted states", d.restricted_h_max, d.restricted_h_max <= 1e-12);
    let exact = d.eta5.value == vec![16.0 * d.eta5.state.lambda_i[0], 16.0 * d.eta5.state.lambda_i[1], 16.0 * d.eta5.state.lambda_i[2]];
    col.check("eta5_residual", "restricted eta5 leaves 16 lambda_i", d.eta5.measure, d.eta5.measure <= 1e-12 && exact);
    col.check("w_violates_restricted", "lambda_a lambda_a - 4/3 lambda lambda_ll as h'", d.w_as_h.measure, d.w_as_h.measure > 0.1);
    Ok(col.finish("subsystem", serde_json::to_value(cfg)?, serde_json::to_value(&d)?))
}

/// Summary JSON as written to disk (without a timestamp).
pub fn summary_json(o: &Output) -> String {
    serde_json::to_string_pretty(&o.summary).expect("summary serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::families;
    use crate::closure::families::random_h;
    use crate::invariants::Convention;

    fn small_verify(form: Form) -> VerifyConfig {
        VerifyConfig { samples: 12, fd_samples: 2, form, seed: 4, ..VerifyConfig::default() }
    }

    #[test]
    fn verify_bundled_forms_pass() {
        for form in [Form::X, Form::Eta, Form::Sub5] {
            let fams = families(form);
            let o = verify(&small_verify(form), &fams[..2]).unwrap();
            assert!(o.summary.pass, "{form:?} {:?}", o.summary.checks);
            assert_eq!(o.rows.len(), 12);
        }
    }

    #[test]
    fn tampered_closure_fails_galilean_h() {
        let mut spec = families(Form::X)[0].clone();
        let q: ScalarFunction = Polynomial::var(&[Var::Q1, Var::X1], Var::Q1).into();
        spec.functions[0] = q;
        let o = verify(&small_verify(Form::X), &[spec]).unwrap();
        assert!(!o.summary.pass);
        assert!(o.summary.failing().contains(&"galilean_h"));
    }

    #[test]
    fn random_h_fails_only_compatibility_checks() {
        let spec = ClosureSpec::from_polys(Form::X, random_h(2, 2, 6), Convention::Consistent).unwrap();
        let o = verify(&small_verify(Form::X), std::slice::from_ref(&spec)).unwrap();
        let f = o.summary.failing();
        assert!(f.contains(&"compatibility") && !f.contains(&"galilean_h"), "{f:?}");
        let skip = VerifyConfig { skip_compat: true, ..small_verify(Form::X) };
        assert!(verify(&skip, &[spec]).unwrap().summary.pass);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let cfg = VerifyConfig { samples: 0, ..VerifyConfig::default() };
        assert!(matches!(verify(&cfg, &families(Form::X)), Err(Error::EmptySampleSet)));
        assert!(matches!(verify(&small_verify(Form::Eta), &families(Form::X)), Err(Error::FormMismatch { .. })));
    }

    #[test]
    fn convexity_x_and_eta() {
        let cfg = ConvexityConfig { points: 2, reproduce_form5_failure: true, ..ConvexityConfig::default() };
        let o = convexity(&cfg, &families(Form::X)[..2]).unwrap();
        assert!(o.summary.pass, "{:?}", o.summary.checks);
        let cfg = ConvexityConfig { points: 2, form: Form::Eta, limit: true, ..ConvexityConfig::default() };
        let o = convexity(&cfg, &families(Form::Eta)[..2]).unwrap();
        assert!(o.summary.pass, "{:?}", o.summary.checks);
        assert!(o.details["limit_verdicts"].as_array().unwrap().len() == 4);
    }

    #[test]
    fn reduce_and_subsystem() {
        let cfg = ReduceConfig { samples: 20, seed: 3, ..ReduceConfig::default() };
        let o = reduce(&cfg, &reduce_states(&cfg).unwrap()).unwrap();
        assert!(o.summary.pass, "{:?}", o.summary.checks);
        let o = subsystem(&SubsystemConfig { samples: 20, ..SubsystemConfig::default() }, &families(Form::Sub5)).unwrap();
        assert!(o.summary.pass, "{:?}", o.summary.checks);
    }

    #[test]
    fn output_is_independent_of_worker_count() {
        let cfg = small_verify(Form::X);
        let fams = families(Form::X);
        let a = verify(&cfg, &fams[..1]).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| verify(&cfg, &fams[..1]).unwrap());
        assert_eq!(summary_json(&a), summary_json(&b));
        assert_eq!(a.jsonl(), b.jsonl());
        assert!(a.csv().starts_with("index,digest,"));
    }
}
