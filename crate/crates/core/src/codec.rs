//! Fixed-width radix codec for 24-bit challenge and response values.
//!
//! A value is written as `width` digits in base `radix`, most-significant
//! digit first, zero padded. The width for a radix is the smallest `D` with
//! `radix^D > max_value`, found with integer arithmetic only: at radix 8 the
//! 24-bit maximum sits one below `8^8`, which a floating-point logarithm can
//! get wrong.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESPONSE_BITS: usize = 24;
pub const VALUE_SPACE: u64 = 1 << RESPONSE_BITS;
pub const MAX_VALUE: u64 = VALUE_SPACE - 1;

/// Radices used by the response-prediction experiments.
pub const EXPERIMENT_RADICES: [u32; 11] = [2, 3, 4, 5, 6, 8, 9, 10, 16, 27, 64];

/// Smallest digit count `D` such that `radix^D > max_value`.
pub fn digits_required(radix: u32, max_value: u64) -> Result<usize> {
    if radix < 2 {
        return Err(Error::invalid(format!("radix {radix} is below 2")));
    }
    if max_value < 1 {
        return Err(Error::invalid("max_value must be at least 1"));
    }
    let radix = u128::from(radix);
    let mut capacity: u128 = 1;
    let mut width = 0;
    while capacity <= u128::from(max_value) {
        capacity *= radix;
        width += 1;
    }
    Ok(width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RadixSpec {
    radix: u32,
    width: usize,
    max_value: u64,
}

impl RadixSpec {
    pub fn new(radix: u32, max_value: u64) -> Result<Self> {
        let width = digits_required(radix, max_value)?;
        Ok(Self {
            radix,
            width,
            max_value,
        })
    }

    /// Spec for 24-bit values.
    pub fn for_24_bit(radix: u32) -> Result<Self> {
        Self::new(radix, MAX_VALUE)
    }

    pub fn radix(&self) -> u32 {
        self.radix
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn max_value(&self) -> u64 {
        self.max_value
    }

    /// `radix^width`, one past the largest decodable value.
    pub fn capacity(&self) -> u128 {
        u128::from(self.radix).pow(self.width as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DigitVector {
    spec: RadixSpec,
    digits: Vec<u32>,
}

impl DigitVector {
    pub fn new(spec: RadixSpec, digits: Vec<u32>) -> Result<Self> {
        if digits.len() != spec.width {
            return Err(Error::invalid(format!(
                "expected {} digits, got {}",
                spec.width,
                digits.len()
            )));
        }
        if let Some(&d) = digits.iter().find(|&&d| d >= spec.radix) {
            return Err(Error::InvalidDigit {
                digit: u64::from(d),
                radix: spec.radix,
            });
        }
        Ok(Self { spec, digits })
    }

    pub fn spec(&self) -> &RadixSpec {
        &self.spec
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn decode(&self) -> u64 {
        decode(self)
    }
}

pub fn encode(value: u64, spec: &RadixSpec) -> Result<DigitVector> {
    if value > spec.max_value {
        return Err(Error::invalid(format!(
            "value {value} exceeds maximum {}",
            spec.max_value
        )));
    }
    let radix = u64::from(spec.radix);
    let mut digits = vec![0u32; spec.width];
    let mut rest = value;
    for slot in digits.iter_mut().rev() {
        *slot = (rest % radix) as u32;
        rest /= radix;
    }
    Ok(DigitVector {
        spec: *spec,
        digits,
    })
}

/// Positional value of the digits. The result can exceed `max_value` when
/// `radix^width` overshoots it; reducing such values is the caller's job.
pub fn decode(dv: &DigitVector) -> u64 {
    let radix = u64::from(dv.spec.radix);
    dv.digits
        .iter()
        .fold(0u64, |acc, &d| acc * radix + u64::from(d))
}

/// Decodes raw digits without a prebuilt spec, validating each one.
pub fn decode_digits(radix: u32, digits: &[u32]) -> Result<u64> {
    if radix < 2 {
        return Err(Error::invalid(format!("radix {radix} is below 2")));
    }
    let mut acc: u64 = 0;
    for &d in digits {
        if d >= radix {
            return Err(Error::InvalidDigit {
                digit: u64::from(d),
                radix,
            });
        }
        acc = acc
            .checked_mul(u64::from(radix))
            .and_then(|v| v.checked_add(u64::from(d)))
            .ok_or_else(|| Error::invalid("decoded value overflows 64 bits"))?;
    }
    Ok(acc)
}

/// Rounds continuous network outputs to legal digits: half away from zero,
/// then clamped into `[0, radix - 1]`.
pub fn round_digits(raw: &[f64], spec: &RadixSpec) -> Result<DigitVector> {
    if raw.len() != spec.width {
        return Err(Error::invalid(format!(
            "expected {} outputs, got {}",
            spec.width,
            raw.len()
        )));
    }
    let top = f64::from(spec.radix - 1);
    let digits = raw
        .iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(Error::InvalidPrediction(format!("non-finite output {x}")));
            }
            Ok(x.round().clamp(0.0, top) as u32)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DigitVector {
        spec: *spec,
        digits,
    })
}

/// 24 response bits, most-significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector24(u32);

impl BitVector24 {
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != RESPONSE_BITS {
            return Err(Error::invalid(format!(
                "expected {RESPONSE_BITS} bits, got {}",
                bits.len()
            )));
        }
        let mut v = 0u32;
        for &b in bits {
            if b > 1 {
                return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
            }
            v = (v << 1) | u32::from(b);
        }
        Ok(Self(v))
    }

    /// Bit at position `i`, counting from the most significant.
    pub fn bit(&self, i: usize) -> u8 {
        debug_assert!(i < RESPONSE_BITS);
        ((self.0 >> (RESPONSE_BITS - 1 - i)) & 1) as u8
    }

    pub fn bits(&self) -> [u8; RESPONSE_BITS] {
        std::array::from_fn(|i| self.bit(i))
    }

    pub fn value(&self) -> u32 {
        self.0
    }
}

pub fn value_to_bits(value: u64) -> Result<BitVector24> {
    if value > MAX_VALUE {
        return Err(Error::invalid(format!("value {value} does not fit 24 bits")));
    }
    Ok(BitVector24(value as u32))
}

pub fn bits_to_value(bits: &BitVector24) -> u32 {
    bits.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(radix: u32) -> RadixSpec {
        RadixSpec::for_24_bit(radix).unwrap()
    }

    // Independent of digits_required's loop: checks the two defining
    // inequalities directly with checked powers.
    fn width_oracle(radix: u64, n: u64) -> usize {
        (1..64)
            .find(|&d| {
                let hi = radix.checked_pow(d as u32).map_or(true, |p| p > n);
                let lo = d == 1 || radix.pow(d as u32 - 1) <= n;
                hi && lo
            })
            .unwrap()
    }

    #[test]
    fn digits_required_examples() {
        assert_eq!(digits_required(2, MAX_VALUE).unwrap(), 24);
        assert_eq!(digits_required(8, MAX_VALUE).unwrap(), 8);
        assert_eq!(digits_required(27, MAX_VALUE).unwrap(), 6);
        assert_eq!(digits_required(64, MAX_VALUE).unwrap(), 4);
        for r in EXPERIMENT_RADICES {
            assert_eq!(
                digits_required(r, MAX_VALUE).unwrap(),
                width_oracle(u64::from(r), MAX_VALUE)
            );
        }
    }

    #[test]
    fn digits_required_rejects_bad_arguments() {
        assert!(matches!(digits_required(1, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(digits_required(2, 0), Err(Error::InvalidArgument(_))));
        assert_eq!(digits_required(2, 1).unwrap(), 1);
    }

    #[test]
    fn digits_required_is_non_increasing_in_radix() {
        let widths: Vec<usize> = (2..=300).map(|r| digits_required(r, MAX_VALUE).unwrap()).collect();
        assert!(widths.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn encode_examples() {
        let z = encode(0, &RadixSpec::for_24_bit(5).unwrap()).unwrap();
        assert_eq!(z.digits(), &[0; 11]);
        assert_eq!(encode(MAX_VALUE, &spec(16)).unwrap().digits(), &[15; 6]);
        assert_eq!(encode(5_592_405, &spec(4)).unwrap().digits(), &[1; 12]);
        assert!(matches!(encode(VALUE_SPACE, &spec(4)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn decode_examples() {
        let zeros = DigitVector::new(spec(2), vec![0; 24]).unwrap();
        assert_eq!(decode(&zeros), 0);
        let ones = DigitVector::new(spec(4), vec![1; 12]).unwrap();
        assert_eq!(decode(&ones), 5_592_405);
        let twos = DigitVector::new(spec(3), vec![2; 16]).unwrap();
        assert_eq!(decode(&twos), 43_046_720);
        assert!(decode(&twos) > MAX_VALUE);
    }

    #[test]
    fn invalid_digits_rejected() {
        assert!(matches!(
            DigitVector::new(spec(3), vec![3; 16]),
            Err(Error::InvalidDigit { digit: 3, radix: 3 })
        ));
        assert!(matches!(
            decode_digits(10, &[1, 2, 10]),
            Err(Error::InvalidDigit { digit: 10, radix: 10 })
        ));
        assert_eq!(decode_digits(10, &[1, 2, 3]).unwrap(), 123);
    }

    #[test]
    fn round_digits_examples() {
        let s3 = RadixSpec::new(3, 26).unwrap();
        assert_eq!(s3.width(), 3);
        assert_eq!(round_digits(&[0.4, 1.6, 2.7], &s3).unwrap().digits(), &[0, 2, 2]);
        let s2 = RadixSpec::new(2, 3).unwrap();
        assert_eq!(round_digits(&[0.0, 0.0], &s2).unwrap().digits(), &[0, 0]);
        assert_eq!(round_digits(&[-0.3, 1.5], &s2).unwrap().digits(), &[0, 1]);
        assert!(matches!(
            round_digits(&[f64::NAN, 0.0], &s2),
            Err(Error::InvalidPrediction(_))
        ));
        assert!(matches!(
            round_digits(&[0.0, f64::INFINITY], &s2),
            Err(Error::InvalidPrediction(_))
        ));
    }

    #[test]
    fn bit_conversions() {
        assert_eq!(value_to_bits(0).unwrap().bits(), [0; 24]);
        assert_eq!(value_to_bits(MAX_VALUE).unwrap().bits(), [1; 24]);
        let alt = value_to_bits(5_592_405).unwrap();
        let expected: Vec<u8> = (0..24).map(|i| (i % 2) as u8).collect();
        assert_eq!(alt.bits().to_vec(), expected);
        assert_eq!(bits_to_value(&BitVector24::from_bits(&[0; 24]).unwrap()), 0);
        assert_eq!(bits_to_value(&BitVector24::from_bits(&[1; 24]).unwrap()), 16_777_215);
        assert_eq!(bits_to_value(&BitVector24::from_bits(&expected).unwrap()), 5_592_405);
        assert!(value_to_bits(VALUE_SPACE).is_err());
        assert!(BitVector24::from_bits(&[2; 24]).is_err());
        assert!(BitVector24::from_bits(&[0; 23]).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(v in 0..VALUE_SPACE, idx in 0..EXPERIMENT_RADICES.len()) {
            let s = spec(EXPERIMENT_RADICES[idx]);
            let dv = encode(v, &s).unwrap();
            prop_assert_eq!(dv.digits().len(), s.width());
            prop_assert_eq!(decode(&dv), v);
        }

        #[test]
        fn rounding_always_yields_legal_digits(
            raw in proptest::collection::vec(-1e6f64..1e6, 8),
            radix in 2u32..100,
        ) {
            let s = RadixSpec { radix, width: 8, max_value: MAX_VALUE };
            let dv = round_digits(&raw, &s).unwrap();
            prop_assert!(DigitVector::new(s, dv.digits().to_vec()).is_ok());
        }

        #[test]
        fn bits_round_trip(v in 0..VALUE_SPACE) {
            prop_assert_eq!(u64::from(bits_to_value(&value_to_bits(v).unwrap())), v);
        }
    }
}
