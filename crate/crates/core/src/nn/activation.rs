use serde::{Deserialize, Serialize};

/// Per-layer elementwise activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    /// Three-level activation `1.5*tanh(x) + 0.5*tanh(-3x)`: bounded in
    /// (-1, 1), flat at the origin, with plateaus near -1, 0, +1 that feed a
    /// ternary quantizer.
    TanhStar,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::TanhStar => tanh_star(x),
        }
    }

    /// Derivative given the pre-activation input.
    pub fn prime(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::TanhStar => tanh_star_prime(x),
        }
    }
}

pub fn tanh_star(x: f64) -> f64 {
    1.5 * x.tanh() + 0.5 * (-3.0 * x).tanh()
}

pub fn tanh_star_prime(x: f64) -> f64 {
    let t1 = x.tanh();
    let t3 = (3.0 * x).tanh();
    1.5 * (t3 * t3 - t1 * t1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tanh_star_reference_values() {
        assert_eq!(tanh_star(0.0), 0.0);
        // 1.5*tanh(0.5) - 0.5*tanh(1.5), frozen from direct evaluation.
        assert!((tanh_star(0.5) - 0.240601609067581418).abs() < 1e-9);
        // Saturates toward 1.5 - 0.5 = 1.
        assert!((tanh_star(40.0) - 1.0).abs() < 1e-12);
        assert!((tanh_star(-40.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_star_has_flat_origin() {
        let h = 1e-4;
        let central = (tanh_star(h) - tanh_star(-h)) / (2.0 * h);
        assert!(central.abs() <= 1e-6, "central difference {central}");
        assert_eq!(tanh_star_prime(0.0), 0.0);
    }

    #[test]
    fn activation_primes_match_finite_differences() {
        let h = 1e-6;
        for act in [Activation::Linear, Activation::Tanh, Activation::TanhStar] {
            for &x in &[-2.0, -0.7, -0.1, 0.3, 1.1, 2.5] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!(
                    (fd - act.prime(x)).abs() < 1e-7,
                    "{act:?} at {x}: fd {fd} vs {}",
                    act.prime(x)
                );
            }
        }
    }

    proptest! {
        #[test]
        fn tanh_star_odd_bounded_monotone(x in -20.0f64..20.0, y in -20.0f64..20.0) {
            let fx = tanh_star(x);
            prop_assert!((fx + tanh_star(-x)).abs() < 1e-12);
            prop_assert!(fx > -1.0 && fx < 1.0);
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            prop_assert!(tanh_star(lo) <= tanh_star(hi) + 1e-15);
        }
    }
}
