use proptest::prelude::*;

use et14::bundled::families;
use et14::closure::{parse_closures, Form};
use et14::frame::S1Set;
use et14::invariants::{compute_v, compute_x};
use et14::state::{mat_vec, random_rotation, MultiplierState};

fn state() -> impl Strategy<Value = MultiplierState> {
    (prop::array::uniform14(-1.5f64..1.5)).prop_map(|c| MultiplierState::from_coords(&c))
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn invariants_are_rotation_invariant(s in state(), seed in any::<u64>()) {
        let r = random_rotation(seed);
        let (a, b) = (compute_x(&s).flat(), compute_x(&s.rotated(&r)).flat());
        let scale = s.scale().powi(5);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel(*x, *y, scale) < 1e-12);
        }
    }

    #[test]
    fn generators_rotate_as_vectors(s in state(), seed in any::<u64>()) {
        let r = random_rotation(seed);
        let v = compute_v(&s).v;
        let w = compute_v(&s.rotated(&r)).v;
        let scale = s.scale().powi(4);
        for k in 0..4 {
            let rv = mat_vec(&r, &v[k]);
            for i in 0..3 {
                prop_assert!(rel(rv[i], w[k][i], scale) < 1e-12);
            }
        }
    }

    #[test]
    fn hamilton_cayley_cubic(s in state()) {
        let s1 = S1Set::of(&s);
        prop_assert!(rel(s1.ma3m_hamilton_cayley(), s1.mA3m, s.scale().powi(5)) < 1e-12);
    }

    #[test]
    fn state_json_round_trip(s in state()) {
        let text = serde_json::to_string(&s).unwrap();
        let back: MultiplierState = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(s, back);
    }
}

#[test]
fn closure_json_round_trip() {
    for form in [Form::X, Form::Eta, Form::Sub5] {
        let fams = families(form);
        let text = serde_json::to_string(&fams).unwrap();
        assert_eq!(parse_closures(&text).unwrap(), fams);
    }
}
