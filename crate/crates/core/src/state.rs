//! The 14 Lagrange multipliers, perturbations and the random sampler.
//!
//! Coordinate order everywhere: `lambda`, `lambda_i` (3), `lambda_ij` (6, order
//! 11,22,33,12,13,23), `lambda_ill` (3), `lambda_ppll`. Off-diagonal `lambda_ij`
//! entries are stored once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};

pub const DIM: usize = 14;
pub const I_LAMBDA: usize = 0;
pub const I_L: usize = 1;
pub const I_A: usize = 4;
pub const I_M: usize = 10;
pub const I_P: usize = 13;

/// Storage slot of `lambda_ij` for each (i, j).
pub const SYM_SLOT: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];

pub type Mat3 = [[f64; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub lambda: f64,
    pub lambda_i: [f64; 3],
    #[serde(deserialize_with = "de_sym")]
    pub lambda_ij: [f64; 6],
    pub lambda_ill: [f64; 3],
    pub lambda_ppll: f64,
}

/// Reads one state or an array of states. `lambda_ij` may be packed or a nested 3x3 array.
pub fn parse_states(text: &str) -> Result<Vec<MultiplierState>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<MultiplierState>),
        One(MultiplierState),
    }
    let parsed: std::result::Result<OneOrMany, _> = serde_json::from_str(text);
    match parsed {
        Ok(OneOrMany::Many(v)) => Ok(v),
        Ok(OneOrMany::One(s)) => Ok(vec![s]),
        Err(e) if e.is_data() && has_asymmetric(text) => Err(Error::NonSymmetric),
        Err(e) => Err(e.into()),
    }
}

fn has_asymmetric(text: &str) -> bool {
    let Ok(v) = serde_json::from_str::<serde_json::Value>(text) else { return false };
    let items = match v {
        serde_json::Value::Array(a) => a,
        o => vec![o],
    };
    items.iter().any(|it| match serde_json::from_value::<Mat3>(it["lambda_ij"].clone()) {
        Ok(m) => m[0][1] != m[1][0] || m[0][2] != m[2][0] || m[1][2] != m[2][1],
        Err(_) => false,
    })
}

/// A perturbation of the multipliers, same layout and symmetry as the state.
pub type DeltaState = MultiplierState;

#[derive(Deserialize)]
#[serde(untagged)]
enum SymRepr {
    Packed([f64; 6]),
    Full([[f64; 3]; 3]),
}

fn de_sym<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[f64; 6], D::Error> {
    match SymRepr::deserialize(d)? {
        SymRepr::Packed(v) => Ok(v),
        SymRepr::Full(m) => {
            if m[0][1] != m[1][0] || m[0][2] != m[2][0] || m[1][2] != m[2][1] {
                return Err(serde::de::Error::custom("lambda_ij is not symmetric"));
            }
            Ok(pack(&m))
        }
    }
}

pub fn pack(m: &Mat3) -> [f64; 6] {
    [m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2]]
}

pub fn unpack<T: Copy>(s: &[T]) -> [[T; 3]; 3] {
    [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]]
}

impl MultiplierState {
    pub fn zero() -> Self {
        Self::from_coords(&[0.0; DIM])
    }

    pub fn coords(&self) -> [f64; DIM] {
        let mut c = [0.0; DIM];
        c[I_LAMBDA] = self.lambda;
        c[I_L..I_L + 3].copy_from_slice(&self.lambda_i);
        c[I_A..I_A + 6].copy_from_slice(&self.lambda_ij);
        c[I_M..I_M + 3].copy_from_slice(&self.lambda_ill);
        c[I_P] = self.lambda_ppll;
        c
    }

    pub fn from_coords(c: &[f64; DIM]) -> Self {
        MultiplierState {
            lambda: c[I_LAMBDA],
            lambda_i: [c[1], c[2], c[3]],
            lambda_ij: [c[4], c[5], c[6], c[7], c[8], c[9]],
            lambda_ill: [c[10], c[11], c[12]],
            lambda_ppll: c[I_P],
        }
    }

    pub fn matrix(&self) -> Mat3 {
        unpack(&self.lambda_ij)
    }

    pub fn lambda_ll(&self) -> f64 {
        self.lambda_ij[0] + self.lambda_ij[1] + self.lambda_ij[2]
    }

    /// Simultaneous rotation of every tensorial component: v -> R v, A -> R A R^T.
    pub fn rotated(&self, r: &Mat3) -> Self {
        let a = self.matrix();
        let mut ra = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        ra[i][j] += r[i][k] * a[k][l] * r[j][l];
                    }
                }
            }
        }
        MultiplierState {
            lambda: self.lambda,
            lambda_i: mat_vec(r, &self.lambda_i),
            lambda_ij: pack(&ra),
            lambda_ill: mat_vec(r, &self.lambda_ill),
            lambda_ppll: self.lambda_ppll,
        }
    }

    /// Largest absolute coordinate, used as the state scale.
    pub fn scale(&self) -> f64 {
        self.coords().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn add_scaled(&self, d: &DeltaState, t: f64) -> Self {
        let (a, b) = (self.coords(), d.coords());
        let mut c = [0.0; DIM];
        for k in 0..DIM {
            c[k] = a[k] + t * b[k];
        }
        Self::from_coords(&c)
    }

    /// Sum over full tensor indices of the squared components.
    pub fn full_norm_sq(&self) -> f64 {
        let c = self.coords();
        let mut s = 0.0;
        for (k, x) in c.iter().enumerate() {
            let w = if (I_A + 3..I_A + 6).contains(&k) { 2.0 } else { 1.0 };
            s += w * x * x;
        }
        s
    }
}

pub fn mat_vec(r: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    let mut o = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i] += r[i][j] * v[j];
        }
    }
    o
}

/// Multipliers unpacked into tensors, generic over the scalar type.
#[derive(Clone, Copy, Debug)]
pub struct Fields<T> {
    pub lambda: T,
    pub l: [T; 3],
    pub a: [[T; 3]; 3],
    pub m: [T; 3],
    pub p: T,
}

impl<T: Scalar> Fields<T> {
    pub fn from_coords(c: &[T; DIM]) -> Self {
        Fields {
            lambda: c[I_LAMBDA],
            l: [c[1], c[2], c[3]],
            a: unpack(&c[I_A..I_A + 6]),
            m: [c[10], c[11], c[12]],
            p: c[I_P],
        }
    }
}

impl Fields<f64> {
    pub fn of(s: &MultiplierState) -> Self {
        Self::from_coords(&s.coords())
    }
}

/// The comparison state: `lambda_i = 0`, `lambda_ij = lambda_ll/3 I`, `lambda_ill = 0`.
pub fn state_c(lambda: f64, lambda_ll: f64, lambda_ppll: f64) -> MultiplierState {
    let d = lambda_ll / 3.0;
    MultiplierState {
        lambda,
        lambda_i: [0.0; 3],
        lambda_ij: [d, d, d, 0.0, 0.0, 0.0],
        lambda_ill: [0.0; 3],
        lambda_ppll,
    }
}

/// Distance of a state from the C pattern, relative to its scale.
pub fn c_pattern_deviation(s: &MultiplierState) -> f64 {
    let dev = deviatoric(&s.matrix());
    let mut d = 0.0_f64;
    for v in s.lambda_i.iter().chain(s.lambda_ill.iter()) {
        d = d.max(v.abs());
    }
    for row in dev {
        for v in row {
            d = d.max(v.abs());
        }
    }
    d / s.scale().max(1.0)
}

pub fn deviatoric(a: &Mat3) -> Mat3 {
    let t = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let mut d = *a;
    for i in 0..3 {
        d[i][i] -= t;
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Uniform range for every coordinate.
    pub range: (f64, f64),
    /// Lower bound for |lambda_ppll| when `require_x1_nonzero` is set.
    pub eps1: f64,
    pub require_x1_nonzero: bool,
    pub require_independence: bool,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            range: (-1.0, 1.0),
            eps1: 1e-6,
            require_x1_nonzero: false,
            require_independence: false,
            max_retries: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn eta_admissible(eps1: f64) -> Self {
        SamplerConfig { eps1, require_x1_nonzero: true, ..Self::default() }
    }
}

pub fn random_state(config: &SamplerConfig, seed: u64) -> Result<MultiplierState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.range;
    for _ in 0..config.max_retries.max(1) {
        let mut c = [0.0; DIM];
        for x in c.iter_mut() {
            *x = rng.gen_range(lo..hi);
        }
        let s = MultiplierState::from_coords(&c);
        if config.require_x1_nonzero && s.lambda_ppll.abs() < config.eps1 {
            continue;
        }
        if config.require_independence {
            let ind = crate::frame::independence_conditions(&s);
            if !(ind.cond1 && ind.cond2) {
                continue;
            }
        }
        return Ok(s);
    }
    Err(Error::RetriesExhausted(config.max_retries))
}

/// Per-index seed derivation so sweeps can be generated in any order.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_states(config: &SamplerConfig, seed: u64, n: usize) -> Result<Vec<MultiplierState>> {
    (0..n as u64).map(|i| random_state(config, sub_seed(seed, i))).collect()
}

/// Random proper rotation from a seed (Gram-Schmidt on Gaussian-ish columns).
pub fn random_rotation(seed: u64) -> Mat3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut v = [[0.0; 3]; 3];
        for row in v.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        if let Some(r) = orthonormalize(v) {
            return r;
        }
    }
}

fn orthonormalize(v: Mat3) -> Option<Mat3> {
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let mut e0 = v[0];
    let n0 = dot(&e0, &e0).sqrt();
    if n0 < 1e-3 {
        return None;
    }
    e0.iter_mut().for_each(|x| *x /= n0);
    let mut e1 = v[1];
    let d = dot(&e1, &e0);
    for k in 0..3 {
        e1[k] -= d * e0[k];
    }
    let n1 = dot(&e1, &e1).sqrt();
    if n1 < 1e-3 {
        return None;
    }
    e1.iter_mut().for_each(|x| *x /= n1);
    let e2 = cross(&e0, &e1);
    Some([e0, e1, e2])
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_states_forms() {
        let one = r#"{"lambda":1,"lambda_i":[0,0,0],"lambda_ij":[[1,2,0],[2,1,0],[0,0,1]],"lambda_ill":[0,0,0],"lambda_ppll":0.5}"#;
        let v = parse_states(one).unwrap();
        assert_eq!(v[0].lambda_ij, [1.0, 1.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(parse_states(&format!("[{one},{one}]")).unwrap().len(), 2);
        let bad = one.replace("[2,1,0]", "[3,1,0]");
        assert!(matches!(parse_states(&bad), Err(Error::NonSymmetric)));
        assert!(matches!(parse_states("{"), Err(Error::Json(_))));
    }

    #[test]
    fn state_c_examples() {
        let s = state_c(0.0, 1.0, 1.0);
        assert_eq!(s.matrix(), [[1.0 / 3.0, 0.0, 0.0], [0.0, 1.0 / 3.0, 0.0], [0.0, 0.0, 1.0 / 3.0]]);
        assert_eq!(s.lambda_i, [0.0; 3]);
        let e = state_c(2.0, 0.0, 0.0);
        assert_eq!(e.lambda_ij, [0.0; 6]);
        assert_eq!(e.lambda, 2.0);
        for b in [0.3, -7.0, 1e5] {
            assert_eq!(state_c(1.0, b, 2.0).lambda_ll(), b);
        }
    }

    #[test]
    fn deviatoric_examples() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(deviatoric(&id), [[0.0; 3]; 3]);
        let d = deviatoric(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!((d[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1][1] + 1.0 / 3.0).abs() < 1e-15);
        assert!((d[2][2] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn deviatoric_of_state_c_is_zero() {
        for (a, b, c) in [(0.1, 0.7, -0.2), (3.0, -2.0, 1.0)] {
            let dev = deviatoric(&state_c(a, b, c).matrix());
            for row in dev {
                for x in row {
                    assert!(x.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn sampler_is_deterministic_and_respects_bounds() {
        let cfg = SamplerConfig::default();
        assert_eq!(random_state(&cfg, 1).unwrap(), random_state(&cfg, 1).unwrap());
        let eta = SamplerConfig::eta_admissible(0.1);
        for seed in 0..200 {
            assert!(random_state(&eta, seed).unwrap().lambda_ppll.abs() >= 0.1);
        }
    }

    #[test]
    fn json_round_trip_and_symmetry_check() {
        let s = random_state(&SamplerConfig::default(), 4).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        let back: MultiplierState = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        let full = r#"{"lambda":0,"lambda_i":[0,0,0],"lambda_ij":[[1,2,0],[2,1,0],[0,0,1]],"lambda_ill":[0,0,0],"lambda_ppll":1}"#;
        let ok: MultiplierState = serde_json::from_str(full).unwrap();
        assert_eq!(ok.lambda_ij, [1.0, 1.0, 1.0, 2.0, 0.0, 0.0]);
        let bad = r#"{"lambda":0,"lambda_i":[0,0,0],"lambda_ij":[[1,2,0],[3,1,0],[0,0,1]],"lambda_ill":[0,0,0],"lambda_ppll":1}"#;
        assert!(serde_json::from_str::<MultiplierState>(bad).is_err());
    }

    #[test]
    fn rotation_is_orthogonal() {
        let r = random_rotation(9);
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
