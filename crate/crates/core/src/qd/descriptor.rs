use serde::{Deserialize, Serialize};

/// Normalized behavioral coordinates in `[0, 1]^2`.
///
/// Components are clamped at construction; NaN maps to `0.0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Descriptor([f64; 2]);

impl Descriptor {
    pub fn new(x: f64, y: f64) -> Self {
        Self([clamp_unit(x), clamp_unit(y)])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn values(&self) -> [f64; 2] {
        self.0
    }

    /// Squared Euclidean distance. Every distance comparison in the crate goes
    /// through this so that tree and scan lookups agree bit for bit.
    #[inline]
    pub fn dist2(&self, other: &Descriptor) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        dx * dx + dy * dy
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

impl From<[f64; 2]> for Descriptor {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Descriptor> for [f64; 2] {
    fn from(d: Descriptor) -> Self {
        d.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_out_of_range() {
        let d = Descriptor::new(-0.3, 7.0);
        assert_eq!(d.values(), [0.0, 1.0]);
        assert_eq!(Descriptor::new(f64::NAN, 0.25).values(), [0.0, 0.25]);
        assert_eq!(Descriptor::new(f64::INFINITY, f64::NEG_INFINITY).values(), [1.0, 0.0]);
    }

    #[test]
    fn deserializing_clamps_too() {
        let d: Descriptor = serde_json::from_str("[1.5, 0.5]").unwrap();
        assert_eq!(d.values(), [1.0, 0.5]);
    }
}
