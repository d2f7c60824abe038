//! Closure families shipped with the crate (regenerate with `cargo run --example gen_families`).

use crate::closure::{parse_closures, ClosureSpec, Form};

pub const X_FAMILIES: &str = include_str!("../data/x_families.json");
pub const ETA_FAMILIES: &str = include_str!("../data/eta_families.json");
pub const SUB5_FAMILIES: &str = include_str!("../data/sub5_families.json");

pub fn families(form: Form) -> Vec<ClosureSpec> {
    let text = match form {
        Form::X => X_FAMILIES,
        Form::Eta => ETA_FAMILIES,
        Form::Sub5 => SUB5_FAMILIES,
    };
    parse_closures(text).expect("bundled families parse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::families::{bundled_eta, bundled_sub5, bundled_x};

    #[test]
    fn data_files_match_generators() {
        assert_eq!(families(Form::X), bundled_x());
        assert_eq!(families(Form::Eta), bundled_eta());
        assert_eq!(families(Form::Sub5), bundled_sub5());
    }

    #[test]
    fn single_spec_file_parses() {
        let one = serde_json::to_string(&bundled_sub5()[0]).unwrap();
        assert_eq!(parse_closures(&one).unwrap().len(), 1);
        assert!(parse_closures(r#"{"form":"x","functions":[]}"#).is_err());
    }
}
