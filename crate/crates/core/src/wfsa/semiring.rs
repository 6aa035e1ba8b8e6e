use std::fmt;
use std::str::FromStr;

/// Path-weight aggregation over natural-log weights.
///
/// Times is addition for both variants; plus is max (tropical) or
/// log-sum-exp (log). Zero is `-inf`, one is `0.0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Semiring {
    /// Keeps only the best path.
    Tropical,
    /// Accumulates every path.
    #[default]
    Log,
}

impl Semiring {
    pub const ZERO: f64 = f64::NEG_INFINITY;
    pub const ONE: f64 = 0.0;

    #[inline]
    pub fn plus(self, a: f64, b: f64) -> f64 {
        match self {
            // ties keep the first operand
            Semiring::Tropical => {
                if b > a {
                    b
                } else {
                    a
                }
            }
            Semiring::Log => log_add(a, b),
        }
    }

    #[inline]
    pub fn times(self, a: f64, b: f64) -> f64 {
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            a + b
        }
    }

    /// Left fold of `plus` starting from zero.
    pub fn sum<I: IntoIterator<Item = f64>>(self, values: I) -> f64 {
        values
            .into_iter()
            .fold(Self::ZERO, |acc, v| self.plus(acc, v))
    }
}

/// Numerically stable `ln(e^a + e^b)`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl fmt::Display for Semiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semiring::Tropical => "tropical",
            Semiring::Log => "log",
        })
    }
}

impl FromStr for Semiring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tropical" => Ok(Semiring::Tropical),
            "log" => Ok(Semiring::Log),
            other => Err(format!("unknown semiring `{other}` (expected `log` or `tropical`)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_path_example() {
        let (a, b) = (0.02f64.ln(), 0.01f64.ln());
        assert_eq!(Semiring::Tropical.plus(a, b), a);
        assert!((Semiring::Log.plus(a, b) - 0.03f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_is_identity_and_never_nan() {
        for s in [Semiring::Tropical, Semiring::Log] {
            assert_eq!(s.plus(Semiring::ZERO, Semiring::ZERO), Semiring::ZERO);
            assert_eq!(s.plus(Semiring::ZERO, -3.0), -3.0);
            assert_eq!(s.plus(-3.0, Semiring::ZERO), -3.0);
            assert_eq!(s.times(Semiring::ZERO, 5.0), Semiring::ZERO);
            assert_eq!(s.times(Semiring::ONE, -2.5), -2.5);
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("log".parse::<Semiring>(), Ok(Semiring::Log));
        assert_eq!("tropical".parse::<Semiring>(), Ok(Semiring::Tropical));
        assert!("max".parse::<Semiring>().is_err());
        assert_eq!(Semiring::default(), Semiring::Log);
    }

    proptest! {
        #[test]
        fn log_add_matches_naive(a in -50.0f64..10.0, b in -50.0f64..10.0) {
            let naive = (a.exp() + b.exp()).ln();
            let got = log_add(a, b);
            prop_assert!((got - naive).abs() < 1e-12);
            prop_assert!(got >= a.max(b));
        }

        #[test]
        fn log_add_handles_extremes(a in -1e300f64..1e300, b in -1e300f64..1e300) {
            prop_assert!(!log_add(a, b).is_nan());
        }

        #[test]
        fn log_plus_is_commutative_and_dominates_max(a in -80.0f64..0.0, b in -80.0f64..0.0) {
            prop_assert_eq!(Semiring::Log.plus(a, b), Semiring::Log.plus(b, a));
            prop_assert!(Semiring::Log.plus(a, b) >= Semiring::Tropical.plus(a, b));
        }
    }
}
