//! Residual bookkeeping shared by every identity check.

use serde::{Deserialize, Serialize};

/// Relative size of a residual against the largest summand of its identity.
pub fn rel(abs: f64, scale: f64) -> f64 {
    if abs == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        abs / scale
    }
}

/// One residual value together with the magnitude it is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub abs: f64,
    pub scale: f64,
}

impl Residual {
    pub fn new(value: f64, scale: f64) -> Self {
        Residual { abs: value.abs(), scale: scale.max(value.abs()) }
    }

    pub fn rel(&self) -> f64 {
        rel(self.abs, self.scale)
    }

    /// Worse of two residuals by relative size.
    pub fn worst(self, o: Residual) -> Residual {
        if o.rel() > self.rel() || (o.rel() == self.rel() && o.abs > self.abs) {
            o
        } else {
            self
        }
    }
}

pub fn worst(it: impl IntoIterator<Item = Residual>) -> Residual {
    it.into_iter().fold(Residual::default(), Residual::worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub index: usize,
    pub digest: String,
    pub components: Vec<f64>,
    pub max_rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub label: String,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Normalization used at the worst row.
    pub denominator: f64,
    pub rows: Vec<Row>,
}

impl ResidualReport {
    pub fn new(name: &str, label: &str) -> Self {
        ResidualReport {
            name: name.into(),
            label: label.into(),
            max_abs: 0.0,
            max_rel: 0.0,
            denominator: 0.0,
            rows: vec![],
        }
    }

    pub fn push(&mut self, index: usize, digest: String, components: Vec<f64>, r: Residual) {
        self.max_abs = self.max_abs.max(r.abs);
        if r.rel() >= self.max_rel {
            self.max_rel = r.rel();
            self.denominator = r.scale;
        }
        self.rows.push(Row { index, digest, components, max_rel: r.rel() });
    }
}

/// Short stable fingerprint of a state for report rows.
pub fn digest(coords: &[f64]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in coords {
        for b in c.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}
