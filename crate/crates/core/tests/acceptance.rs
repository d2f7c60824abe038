//! Acceptance report: one PASS/FAIL line per criterion, with the measured numbers.
//! Exits non-zero on a failing criterion only when ET14_ACCEPTANCE_STRICT=1.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use et14::bundled::families;
use et14::closure::{ClosureSpec, Form};
use et14::convexity::VerdictKind;
use et14::invariants::{
    check_derivative_identities, compute_eta, compute_x, compute_y_from_eta, compute_yz, y6_from_eta_printed_square, Convention,
};
use et14::report::{worst, Residual};
use et14::state::{sample_states, SamplerConfig};
use et14::suite::{
    convexity, h0_x5_closure, h1_x5_witness, reduce, reduce_states, subsystem, summary_json, verify, ConvexityConfig, Output,
    ReduceConfig, SubsystemConfig, VerifyConfig,
};
use et14::verifier::{compatibility_residual, derived_form, galilean_residual_h, galilean_residual_phi, pde_system_residual, x_functions};

const SEED: u64 = 7;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, n: usize, title: &str, pass: bool, detail: String) {
        println!("[{}] {n} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(n);
        }
    }
}

fn max_rel(states: &[et14::state::MultiplierState], f: impl Fn(&et14::state::MultiplierState) -> Vec<Residual>) -> f64 {
    states.iter().map(|s| worst(f(s)).rel()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn fraction_above(vals: &[f64], floor: f64) -> f64 {
    vals.iter().filter(|v| **v >= floor).count() as f64 / vals.len() as f64
}

fn check(o: &Output, name: &str) -> (f64, bool) {
    let c = o.summary.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("missing check {name}"));
    (c.max_rel, c.pass)
}

fn galilean(r: &mut Report) {
    let t = Instant::now();
    let xf = families(Form::X);
    let ef = families(Form::Eta);
    let gen = sample_states(&SamplerConfig::default(), SEED, 200).unwrap();
    let adm = sample_states(&SamplerConfig::eta_admissible(0.1), SEED, 200).unwrap();
    let line = |fams: &[ClosureSpec], states: &[_]| {
        let h = fams.iter().map(|f| max_rel(states, |s| galilean_residual_h(s, f, 1e-6).unwrap().to_vec())).fold(0.0, f64::max);
        let p = fams.iter().map(|f| max_rel(states, |s| galilean_residual_phi(s, f, 1e-6).unwrap().concat())).fold(0.0, f64::max);
        (h, p)
    };
    let (xh, xp) = line(&xf, &gen);
    let (eh, ep) = line(&ef, &adm);
    let secs = t.elapsed().as_secs_f64();
    let pass = xh.max(xp).max(eh).max(ep) <= 1e-9 && xf.len() >= 10 && secs <= 30.0;
    r.line(
        1,
        "frame-change identities",
        pass,
        format!(
            "{} X-form families, 200 states: h' {xh:.2e}, phi' {xp:.2e}; {} eta-form families on |lambda_ppll|>=0.1: h' {eh:.2e}, phi' {ep:.2e}; {secs:.2}s",
            xf.len(),
            ef.len()
        ),
    );
}

fn derivatives(r: &mut Report) {
    let states = sample_states(&SamplerConfig::default(), SEED, 200).unwrap();
    let all = max_rel(&states, |s| check_derivative_identities(s, Convention::Consistent).into_iter().map(|d| d.residual).collect());
    let count = check_derivative_identities(&states[0], Convention::Consistent).len();
    let dx5 = |s: &et14::state::MultiplierState| {
        let ids = check_derivative_identities(s, Convention::Consistent);
        ids.iter().find(|d| d.name == "dX5/dlambda").unwrap().lhs[0]
    };
    let mut sixteen = 0.0f64;
    let mut alternatives = f64::INFINITY;
    for s in &states {
        let (d, x1) = (dx5(s), compute_x(s).X1);
        sixteen = sixteen.max(rel(d, 16.0 * x1));
        for c in [8.0, 15.0, 17.0, 32.0, -16.0] {
            alternatives = alternatives.min(rel(d, c * x1));
        }
    }
    r.line(
        2,
        "lambda-derivative identities",
        count == 16 && all <= 1e-9 && sixteen <= 1e-9 && alternatives >= 1e-3,
        format!("{count} identities max rel {all:.2e}; dX5/dlambda = 16 X1 to {sixteen:.2e}; constants 8,15,17,32,-16 miss by >= {alternatives:.2e}"),
    );
}

fn compatibility(r: &mut Report) {
    let gen = sample_states(&SamplerConfig::default(), SEED, 100).unwrap();
    let adm = sample_states(&SamplerConfig::eta_admissible(0.1), SEED, 100).unwrap();
    let comp = |f: &ClosureSpec, st: &[_]| max_rel(st, |s| compatibility_residual(s, f, 1e-6).unwrap().to_vec());
    let x = families(Form::X).iter().map(|f| comp(f, &gen)).fold(0.0, f64::max);
    let k = families(Form::Eta).iter().map(|f| comp(f, &adm)).fold(0.0, f64::max);
    let wit = sample_states(&SamplerConfig::default(), SEED, 200).unwrap();
    let rels = |spec: &ClosureSpec| -> Vec<f64> { wit.iter().map(|s| worst(compatibility_residual(s, spec, 1e-6).unwrap()).rel()).collect() };
    let h0 = rels(&h0_x5_closure());
    let h1 = rels(&h1_x5_witness());
    let h0_max = h0.iter().copied().fold(0.0, f64::max);
    let (f0, f1) = (fraction_above(&h0, 1e-3), fraction_above(&h1, 1e-3));
    r.line(
        3,
        "compatibility",
        x <= 1e-9 && k <= 1e-9 && f0 >= 0.95,
        format!(
            "psi/phi-branch X families {x:.2e}, K families {k:.2e} (100 states); witness H0 = X5 reaches 1e-3 on {:.1}% of states (max rel {h0_max:.1e}, it is the family member psi = X5^2/2); H1 = X5 reaches it on {:.1}%",
            100.0 * f0,
            100.0 * f1
        ),
    );
}

fn pde(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let hs: Vec<_> = families(Form::X).iter().map(|f| x_functions(f).unwrap()).collect();
    let mut worst_pde = 0.0f64;
    let mut worst_derived = [0.0f64; 2];
    let mut points = [0usize; 2];
    let mut n = 0;
    while n < 100 {
        let x: [f64; 8] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
        n += 1;
        for h in &hs {
            worst_pde = worst_pde.max(worst(pde_system_residual(h, &x, Convention::Consistent).unwrap()).rel());
            for pivot in 0..2 {
                if x[pivot].abs() < 0.1 {
                    continue;
                }
                let d = derived_form(h, &x, Convention::Consistent, pivot, 1e-12).unwrap();
                worst_derived[pivot] = worst_derived[pivot].max(worst(d.solved).worst(d.identity).rel());
                points[pivot] += 1;
            }
        }
    }
    r.line(
        4,
        "X-space system and derived forms",
        worst_pde.max(worst_derived[0]).max(worst_derived[1]) <= 1e-10,
        format!(
            "100 points x {} families: system {worst_pde:.2e}; solved for dH0 (X1 != 0, {} evaluations) {:.2e}; for dH1 (X2 != 0, {}) {:.2e}",
            hs.len(),
            points[0],
            worst_derived[0],
            points[1],
            worst_derived[1]
        ),
    );
}

fn cross_route(r: &mut Report) {
    let states = sample_states(&SamplerConfig::eta_admissible(0.1), SEED, 100).unwrap();
    let square_tail = y6_from_eta_printed_square();
    let mut agree = [0.0f64; 2];
    let mut square = vec![];
    for s in &states {
        let b = compute_x(s);
        let eta = compute_eta(s, 1e-6).unwrap();
        for (i, conv) in [Convention::Legacy, Convention::Consistent].into_iter().enumerate() {
            let (a, e) = (compute_yz(&b, conv).y(), compute_y_from_eta(&eta, conv));
            for j in 0..4 {
                agree[i] = agree[i].max(rel(a[j], e[j]));
            }
        }
        square.push(rel(compute_yz(&b, Convention::Legacy).Y6, square_tail.eval(&eta.eta)));
    }
    square.sort_by(f64::total_cmp);
    let square_max = square[square.len() - 1];
    r.line(
        5,
        "Y from X against Y from eta",
        agree[0] <= 1e-10 && agree[1] <= 1e-10 && square_max >= 1e-2,
        format!(
            "cube tail: {:.2e} (printed weights), {:.2e} (consistent weights); squared tail disagrees by up to {square_max:.2e} (median {:.2e}, >= 1e-2 on {}/100 states)",
            agree[0],
            agree[1],
            square[square.len() / 2],
            square.iter().filter(|v| **v >= 1e-2).count()
        ),
    );
}

fn convexity_line(r: &mut Report) {
    let eta = convexity(&ConvexityConfig { form: Form::Eta, points: 4, seed: SEED, ..ConvexityConfig::default() }, &families(Form::Eta)).unwrap();
    let (blocks, bp) = check(&eta, "block_decomposition");
    let (coef, cp) = check(&eta, "coefficient_formulas");
    let xf = families(Form::X);
    let x = convexity(&ConvexityConfig { points: 4, seed: SEED, reproduce_form5_failure: true, ..ConvexityConfig::default() }, &xf).unwrap();
    let analyses = x.details["analyses"].as_array().unwrap();
    let indefinite = analyses
        .iter()
        .filter(|a| {
            a["verdict"]["verdict"] == serde_json::to_value(VerdictKind::Indefinite).unwrap()
                && a["q_direct"].as_f64().is_some_and(|q| q < 0.0)
                && !a["verdict"]["counterexample"].is_null()
        })
        .count();
    let (_, fp) = check(&x, "x_form_indefinite");
    r.line(
        6,
        "convexity at state C",
        bp && cp && fp && indefinite == analyses.len(),
        format!(
            "(a) cross-block {blocks:.2e}, coefficient formulas {coef:.2e}; (b) {indefinite}/{} X-form (family, point) pairs indefinite with Q(delta) < 0 confirmed directly",
            analyses.len()
        ),
    );
}

fn round_trip(r: &mut Report) {
    let cfg = ReduceConfig { seed: SEED, samples: 200, ..ReduceConfig::default() };
    let o = reduce(&cfg, &reduce_states(&cfg).unwrap()).unwrap();
    let (s1, s1p) = check(&o, "round_trip_s1_invariants");
    let (full, fullp) = check(&o, "round_trip_full_bundle");
    let frac = o.details["converged_fraction"].as_f64().unwrap();
    let recovered = o.details["original_root_recovered"].as_u64().unwrap();
    let trips = o.details["round_trips"].as_u64().unwrap();
    r.line(
        7,
        "representation round trip",
        fullp && s1p && frac >= 0.95,
        format!(
            "Newton within 15 iterations from zero on {:.1}%; X, Q and tensor contractions reproduced to {s1:.2e}; full bundle (lambda_k contractions) to 1e-8 on {recovered}/{trips} (max {full:.2e}): X5..X8 has other real roots",
            100.0 * frac
        ),
    );
}

fn subsystems(r: &mut Report) {
    let o = subsystem(&SubsystemConfig { seed: SEED, ..SubsystemConfig::default() }, &families(Form::Sub5)).unwrap();
    let (g, gp) = check(&o, "galilean_sub5");
    let (c, cp) = check(&o, "compatibility_sub5");
    let (e, ep) = check(&o, "eta5_residual");
    let (h, hp) = check(&o, "restricted_h_vanishes");
    let (w, wp) = check(&o, "w_violates_restricted");
    let val = &o.details["eta5"]["value"];
    r.line(
        8,
        "5-moment subsystem",
        gp && cp && ep && hp && wp,
        format!("frame-change {g:.2e}, compatibility {c:.2e}; restricted eta5 residual {val} (deviation {e:.1e}); restricted X-form h' {h:.1e}; w as h' leaves {w:.2e}"),
    );
}

fn full_suite() -> String {
    let mut out = String::new();
    for form in [Form::X, Form::Eta, Form::Sub5] {
        let cfg = VerifyConfig { seed: SEED, samples: 50, form, ..VerifyConfig::default() };
        out += &summary_json(&verify(&cfg, &families(form)).unwrap());
    }
    let c = ConvexityConfig { seed: SEED, points: 2, reproduce_form5_failure: true, ..ConvexityConfig::default() };
    let x = convexity(&c, &families(Form::X)).unwrap();
    out += &summary_json(&x);
    out += &serde_json::to_string(&x.details).unwrap();
    let c = ConvexityConfig { seed: SEED, points: 2, form: Form::Eta, limit: true, ..ConvexityConfig::default() };
    let e = convexity(&c, &families(Form::Eta)).unwrap();
    out += &summary_json(&e);
    out += &serde_json::to_string(&e.details).unwrap();
    let cfg = ReduceConfig { seed: SEED, samples: 50, ..ReduceConfig::default() };
    out += &summary_json(&reduce(&cfg, &reduce_states(&cfg).unwrap()).unwrap());
    out += &summary_json(&subsystem(&SubsystemConfig { seed: SEED, samples: 50, ..SubsystemConfig::default() }, &families(Form::Sub5)).unwrap());
    out
}

fn determinism(r: &mut Report) {
    let a = full_suite();
    let b = full_suite();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(full_suite);
    r.line(
        9,
        "determinism",
        a == b && a == c,
        format!("{} bytes of summaries; repeat run identical: {}; single worker identical: {}", a.len(), a == b, a == c),
    );
}

fn main() {
    let mut r = Report { failed: vec![] };
    galilean(&mut r);
    derivatives(&mut r);
    compatibility(&mut r);
    pde(&mut r);
    cross_route(&mut r);
    convexity_line(&mut r);
    round_trip(&mut r);
    subsystems(&mut r);
    determinism(&mut r);
    println!("acceptance: {}/9 criteria pass", 9 - r.failed.len());
    if !r.failed.is_empty() && std::env::var("ET14_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
