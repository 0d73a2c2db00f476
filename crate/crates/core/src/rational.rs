//! Exact rational parsing and formatting.
//!
//! Density targets like ε = 9/10 enter through the CLI and certificates as
//! strings. They are parsed exactly (either `P/Q` or a finite decimal) and
//! never pass through binary floating point, so every bound in the crate is
//! an exact integer comparison.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Parses `"P/Q"`, an integer, or a finite decimal such as `"0.9"` into an
/// exact rational. Whitespace around tokens is ignored.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::Parse {
            position: 0,
            msg: "empty rational".into(),
        });
    }
    if let Some((num, den)) = t.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| Error::Parse {
            position: 0,
            msg: format!("bad numerator {:?}", num.trim()),
        })?;
        let d: BigInt = den.trim().parse().map_err(|_| Error::Parse {
            position: 0,
            msg: format!("bad denominator {:?}", den.trim()),
        })?;
        if d.is_zero() {
            return Err(Error::Parse {
                position: 0,
                msg: "zero denominator".into(),
            });
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = t.split_once('.') {
        let sign = if int_part.trim_start().starts_with('-') {
            -BigInt::one()
        } else {
            BigInt::one()
        };
        let int_digits = int_part.trim().trim_start_matches(['-', '+']);
        let frac_digits = frac_part.trim();
        if !frac_digits.chars().all(|c| c.is_ascii_digit())
            || !int_digits.chars().all(|c| c.is_ascii_digit())
            || (int_digits.is_empty() && frac_digits.is_empty())
        {
            return Err(Error::Parse {
                position: 0,
                msg: format!("bad decimal {t:?}"),
            });
        }
        let int_val: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits.parse().unwrap()
        };
        let mut num = int_val;
        let mut den = BigInt::one();
        for c in frac_digits.chars() {
            num = num * 10 + (c.to_digit(10).unwrap() as i64);
            den *= 10;
        }
        return Ok(BigRational::new(sign * num, den));
    }
    let n: BigInt = t.parse().map_err(|_| Error::Parse {
        position: 0,
        msg: format!("bad rational {t:?}"),
    })?;
    Ok(BigRational::from_integer(n))
}

/// Renders a rational in the canonical `P/Q` form (`P` alone when Q = 1).
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact test of `count < r * scale` for a nonnegative count and scale.
pub fn count_below(count: &BigUint, r: &BigRational, scale: &BigUint) -> bool {
    let count = BigInt::from(count.clone());
    let scale = BigInt::from(scale.clone());
    // count < (num/den) * scale  <=>  count * den < num * scale (den > 0)
    debug_assert!(r.denom().is_positive());
    count * r.denom() < r.numer() * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parses_fractions_decimals_integers() {
        assert_eq!(q("9/10"), q("0.9"));
        assert_eq!(q("1/2"), q("0.5"));
        assert_eq!(q("3"), BigRational::from_integer(3.into()));
        assert_eq!(q(" 7 / 4 "), q("1.75"));
        assert_eq!(q("-0.25"), q("-1/4"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_rational("").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("a.b").is_err());
        assert!(parse_rational("0x10").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format_rational(&q("0.9")), "9/10");
        assert_eq!(format_rational(&q("4/2")), "2");
    }

    #[test]
    fn strict_bound_is_exact() {
        // 729 < (3/10)*2431 = 729.3 but 730 is not.
        let m = BigUint::from(2431u32);
        assert!(count_below(&BigUint::from(729u32), &q("3/10"), &m));
        assert!(!count_below(&BigUint::from(730u32), &q("3/10"), &m));
    }
}
