//! Exact complex scalars with big-rational parts.

use alloc::string::String;
use alloc::format;
use core::cmp::Ordering;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational number of arbitrary size.
pub type Rat = BigRational;

/// Exact complex scalar: `re + im*i` with big-rational parts.
pub type Scalar = Complex<Rat>;

/// `n` as a rational.
pub fn rat_i64(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `n/d` as a rational; panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// `n` as a scalar.
pub fn s_i64(n: i64) -> Scalar {
    Scalar::new(rat_i64(n), Rat::zero())
}

/// `n/d` as a scalar.
pub fn s_rat(n: i64, d: i64) -> Scalar {
    Scalar::new(rat(n, d), Rat::zero())
}

/// The imaginary unit.
pub fn s_i() -> Scalar {
    Scalar::new(Rat::zero(), Rat::one())
}

/// `(n/d)*i` as a scalar.
pub fn s_i_rat(n: i64, d: i64) -> Scalar {
    Scalar::new(Rat::zero(), rat(n, d))
}

/// Multiplicative inverse; `None` for zero.
pub fn s_inv(z: &Scalar) -> Option<Scalar> {
    if z.is_zero() {
        return None;
    }
    let n2 = &z.re * &z.re + &z.im * &z.im;
    Some(Scalar::new(&z.re / &n2, -(&z.im / &n2)))
}

/// Integer power with exact arithmetic; negative exponents invert first.
/// Panics when raising zero to a negative power.
pub fn s_pow(z: &Scalar, e: i64) -> Scalar {
    if e == 0 {
        return Scalar::one();
    }
    let base = if e < 0 {
        s_inv(z).expect("zero to a negative power")
    } else {
        z.clone()
    };
    let mut acc = Scalar::one();
    let mut cur = base;
    let mut k = e.unsigned_abs();
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &cur;
        }
        k >>= 1;
        if k > 0 {
            cur = &cur * &cur;
        }
    }
    acc
}

/// Total order on scalars: real part first, then imaginary part.
///
/// This is an arbitrary but stable order used to canonicalize expressions;
/// it has no analytic meaning.
pub fn s_cmp(a: &Scalar, b: &Scalar) -> Ordering {
    a.re.cmp(&b.re).then_with(|| a.im.cmp(&b.im))
}

/// True when the imaginary part is exactly zero.
pub fn s_is_real(z: &Scalar) -> bool {
    z.im.is_zero()
}

/// Sign of a real scalar: -1, 0 or 1; `None` when the value is not real.
pub fn s_real_sign(z: &Scalar) -> Option<i32> {
    if !s_is_real(z) {
        return None;
    }
    Some(if z.re.is_zero() {
        0
    } else if z.re.is_positive() {
        1
    } else {
        -1
    })
}

/// Convert to a double-precision complex number.
pub fn s_to_f64(z: &Scalar) -> Complex<f64> {
    Complex::new(
        z.re.to_f64().unwrap_or(f64::NAN),
        z.im.to_f64().unwrap_or(f64::NAN),
    )
}

/// Greatest common divisor of the absolute values of all rational parts
/// appearing in a nonempty iterator, as a positive rational:
/// `gcd(a/b, c/d) = gcd(a, c)/lcm(b, d)`.
pub fn rat_content<'a, I: Iterator<Item = &'a Rat>>(parts: I) -> Rat {
    use num_integer::Integer;
    let mut num = BigInt::zero();
    let mut den = BigInt::one();
    for r in parts {
        if r.is_zero() {
            continue;
        }
        num = num.gcd(&r.numer().abs());
        den = den.lcm(&r.denom().abs());
    }
    if num.is_zero() {
        Rat::one()
    } else {
        Rat::new(num, den)
    }
}

/// Render a rational as `"n"` or `"n/d"`.
pub fn rat_string(r: &Rat) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Render a scalar in the expression grammar: `3`, `-1/2`, `i`, `2*i`,
/// `(1+2*i)` and so on.  The output re-parses to the same value.
pub fn scalar_string(z: &Scalar) -> String {
    let re0 = z.re.is_zero();
    let im0 = z.im.is_zero();
    if im0 {
        return rat_string(&z.re);
    }
    let im_part = |r: &Rat| -> String {
        if r.is_one() {
            String::from("i")
        } else if (-r).is_one() {
            String::from("-i")
        } else {
            format!("{}*i", rat_string(r))
        }
    };
    if re0 {
        im_part(&z.im)
    } else if z.im.is_positive() {
        format!("({}+{})", rat_string(&z.re), im_part(&z.im))
    } else {
        format!("({}{})", rat_string(&z.re), im_part(&z.im))
    }
}
