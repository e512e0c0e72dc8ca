//! Jones-calculus transfer matrices and the optical component models.
//!
//! A field is a pair of complex amplitudes on the TE (x) and TM (y) modes.
//! Components are 2x2 complex matrices acting on column vectors; a cascade
//! listed input-to-output composes right-to-left.
//!
//! Rotation convention: `R(a) = [[cos a, -sin a], [sin a, cos a]]`, so
//! `R(pi/2)` carries `(1, 0)` to `(0, 1)`.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    pub ex: Complex64,
    pub ey: Complex64,
}

impl PolarizationState {
    pub fn new(ex: Complex64, ey: Complex64) -> Self {
        Self { ex, ey }
    }

    pub fn power(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub m: [[Complex64; 2]; 2],
}

impl TransferMatrix {
    pub fn new(m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) -> Self {
        Self {
            m: [[m00, m01], [m10, m11]],
        }
    }

    pub fn identity() -> Self {
        Self::diagonal(ONE, ONE)
    }

    pub fn diagonal(a: Complex64, b: Complex64) -> Self {
        Self::new(a, ZERO, ZERO, b)
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c.into(), (-s).into(), s.into(), c.into())
    }

    /// `R(angle) * self * R(-angle)`: the element turned by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        Self::rotation(angle) * *self * Self::rotation(-angle)
    }

    pub fn conj_transpose(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.conj_transpose() * *self).max_abs_diff(&Self::identity()) <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

pub fn apply_transfer(m: &TransferMatrix, s: &PolarizationState) -> PolarizationState {
    PolarizationState {
        ex: m.m[0][0] * s.ex + m.m[0][1] * s.ey,
        ey: m.m[1][0] * s.ex + m.m[1][1] * s.ey,
    }
}

/// Cascade of components listed input-to-output.
pub fn compose(ms: &[TransferMatrix]) -> Result<TransferMatrix> {
    let (first, rest) = ms
        .split_first()
        .ok_or_else(|| Error::invalid("cannot compose an empty component list"))?;
    Ok(rest.iter().fold(*first, |acc, m| *m * acc))
}

/// Trench coupler: each mode sees a Fabry-Perot cavity with internal
/// reflectance `rho` and single-pass phase `delta`, and the mode axes are
/// turned by the cross-coupling angle `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrenchCouplerParams {
    pub rho_te: f64,
    pub rho_tm: f64,
    pub delta_te: f64,
    pub delta_tm: f64,
    pub kappa: f64,
}

impl TrenchCouplerParams {
    pub fn transparent() -> Self {
        Self {
            rho_te: 0.0,
            rho_tm: 0.0,
            delta_te: 0.0,
            delta_tm: 0.0,
            kappa: 0.0,
        }
    }
}

/// Birefringent waveguide segment: a retarder with fast axis at `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideParams {
    pub theta: f64,
    pub phi_te: f64,
    pub phi_tm: f64,
}

impl WaveguideParams {
    pub fn straight() -> Self {
        Self {
            theta: 0.0,
            phi_te: 0.0,
            phi_tm: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCouplerParams {
    pub a_te: f64,
    pub a_tm: f64,
}

impl EdgeCouplerParams {
    pub fn lossless() -> Self {
        Self { a_te: 1.0, a_tm: 1.0 }
    }
}

/// Closed-form sum of the multi-pass series
/// `(1 - rho^2) e^{i delta} * sum_k (rho^2 e^{2 i delta})^k`.
pub fn fabry_perot_transmission(rho: f64, delta: f64) -> Result<Complex64> {
    if !(0.0..1.0).contains(&rho) {
        if rho >= 1.0 {
            return Err(Error::DivergentSeries(rho));
        }
        return Err(Error::invalid(format!("reflectance {rho} is outside [0, 1)")));
    }
    let r2 = rho * rho;
    let num = Complex64::from_polar(1.0 - r2, delta);
    let den = ONE - Complex64::from_polar(r2, 2.0 * delta);
    Ok(num / den)
}

pub fn trench_coupler_transfer(p: &TrenchCouplerParams) -> Result<TransferMatrix> {
    let t_te = fabry_perot_transmission(p.rho_te, p.delta_te)?;
    let t_tm = fabry_perot_transmission(p.rho_tm, p.delta_tm)?;
    Ok(TransferMatrix::diagonal(t_te, t_tm).rotated(p.kappa))
}

pub fn waveguide_transfer(p: &WaveguideParams) -> TransferMatrix {
    TransferMatrix::diagonal(
        Complex64::from_polar(1.0, p.phi_te),
        Complex64::from_polar(1.0, p.phi_tm),
    )
    .rotated(p.theta)
}

pub fn edge_coupler_transfer(p: &EdgeCouplerParams) -> Result<TransferMatrix> {
    for a in [p.a_te, p.a_tm] {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::invalid(format!(
                "edge-coupler transmittance {a} is outside (0, 1]"
            )));
        }
    }
    Ok(TransferMatrix::diagonal(p.a_te.into(), p.a_tm.into()))
}

/// Share of the power carried by the TE (x) mode. Zero total power maps
/// to 0.
pub fn polarized_power_fraction(s: &PolarizationState) -> f64 {
    let px = s.ex.norm_sqr();
    let total = px + s.ey.norm_sqr();
    if total > 0.0 {
        px / total
    } else {
        0.0
    }
}

/// Wraps an angle into `[0, 2*pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    x.rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn apply_examples() {
        let s = PolarizationState::new(c(0.3, -0.2), c(0.1, 0.7));
        assert_eq!(apply_transfer(&TransferMatrix::identity(), &s), s);

        let proj = TransferMatrix::diagonal(c(0.0, 0.0), c(1.0, 0.0));
        let out = apply_transfer(&proj, &PolarizationState::new(c(1.0, 0.0), c(0.0, 0.0)));
        assert_eq!(out.power(), 0.0);

        let out = apply_transfer(
            &TransferMatrix::rotation(FRAC_PI_2),
            &PolarizationState::new(c(1.0, 0.0), c(0.0, 0.0)),
        );
        assert!(close(out.ex, c(0.0, 0.0), 1e-15));
        assert!(close(out.ey, c(1.0, 0.0), 1e-15));
    }

    #[test]
    fn compose_examples() {
        let i = TransferMatrix::identity();
        assert_eq!(compose(&[i, i]).unwrap(), i);
        let a = TransferMatrix::new(c(1.0, 2.0), c(0.5, 0.0), c(0.0, -1.0), c(3.0, 0.1));
        assert_eq!(compose(&[a]).unwrap(), a);
        let (al, be) = (0.37, -1.21);
        let r = compose(&[TransferMatrix::rotation(al), TransferMatrix::rotation(be)]).unwrap();
        assert!(r.max_abs_diff(&TransferMatrix::rotation(al + be)) < 1e-15);
        assert!(matches!(compose(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn compose_applies_first_element_first() {
        let a = TransferMatrix::new(c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        let b = TransferMatrix::new(c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let s = PolarizationState::new(c(0.2, 0.1), c(-0.5, 0.3));
        let direct = apply_transfer(&b, &apply_transfer(&a, &s));
        let via = apply_transfer(&compose(&[a, b]).unwrap(), &s);
        assert!(close(direct.ex, via.ex, 1e-15) && close(direct.ey, via.ey, 1e-15));
    }

    #[test]
    fn trench_coupler_examples() {
        let t = trench_coupler_transfer(&TrenchCouplerParams::transparent()).unwrap();
        assert!(t.max_abs_diff(&TransferMatrix::identity()) < 1e-15);

        let on_resonance = fabry_perot_transmission(0.3, 0.0).unwrap();
        assert!(close(on_resonance, c(1.0, 0.0), 1e-15));

        // 0.91 i / (1 + 0.09)
        let quarter = fabry_perot_transmission(0.3, FRAC_PI_2).unwrap();
        assert!(close(quarter, c(0.0, 0.91 / 1.09), 1e-15));
        assert!((quarter.norm() - 0.834_862_385_321_1).abs() < 1e-12);

        let mut p = TrenchCouplerParams::transparent();
        p.rho_tm = 1.0;
        assert!(matches!(trench_coupler_transfer(&p), Err(Error::DivergentSeries(_))));
        p.rho_tm = -0.1;
        assert!(matches!(trench_coupler_transfer(&p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn waveguide_examples() {
        let w = waveguide_transfer(&WaveguideParams::straight());
        assert!(w.max_abs_diff(&TransferMatrix::identity()) < 1e-15);

        let hw = waveguide_transfer(&WaveguideParams { theta: 0.0, phi_te: PI, phi_tm: 0.0 });
        let expect = TransferMatrix::diagonal(c(-1.0, 0.0), c(1.0, 0.0));
        assert!(hw.max_abs_diff(&expect) < 1e-15);

        // Half-wave plate at 45 degrees swaps the modes (global phase -1).
        let sw = waveguide_transfer(&WaveguideParams { theta: FRAC_PI_4, phi_te: PI, phi_tm: 0.0 });
        let swap = TransferMatrix::new(c(0.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0));
        assert!(sw.max_abs_diff(&swap) < 1e-15);
    }

    #[test]
    fn edge_coupler_validates_transmittance() {
        assert!(edge_coupler_transfer(&EdgeCouplerParams { a_te: 0.0, a_tm: 1.0 }).is_err());
        assert!(edge_coupler_transfer(&EdgeCouplerParams { a_te: 1.0, a_tm: 1.1 }).is_err());
        assert!(edge_coupler_transfer(&EdgeCouplerParams { a_te: 0.5, a_tm: 1.0 }).is_ok());
    }

    #[test]
    fn power_fraction_examples() {
        let f = |ex: Complex64, ey: Complex64| polarized_power_fraction(&PolarizationState::new(ex, ey));
        assert_eq!(f(c(1.0, 0.0), c(0.0, 0.0)), 1.0);
        assert_eq!(f(c(1.0, 0.0), c(1.0, 0.0)), 0.5);
        assert!((f(c(0.6, 0.0), c(0.0, 0.8)) - 0.36).abs() < 1e-15);
        assert_eq!(f(c(0.0, 0.0), c(0.0, 0.0)), 0.0);
    }

    fn angle() -> impl Strategy<Value = f64> {
        0.0..(2.0 * PI)
    }

    fn state() -> impl Strategy<Value = PolarizationState> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_map(|(a, b, cc, d)| PolarizationState::new(c(a, b), c(cc, d)))
    }

    fn coupler() -> impl Strategy<Value = TrenchCouplerParams> {
        (0.0..0.9f64, 0.0..0.9f64, angle(), angle(), -PI..PI).prop_map(|(rt, rm, dt, dm, k)| {
            TrenchCouplerParams { rho_te: rt, rho_tm: rm, delta_te: dt, delta_tm: dm, kappa: k }
        })
    }

    fn matrix() -> impl Strategy<Value = TransferMatrix> {
        proptest::array::uniform8(-2.0..2.0f64)
            .prop_map(|v| TransferMatrix::new(c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(v[6], v[7])))
    }

    proptest! {
        #[test]
        fn waveguides_preserve_norm(theta in -PI..PI, pt in angle(), pm in angle(), s in state()) {
            let m = waveguide_transfer(&WaveguideParams { theta, phi_te: pt, phi_tm: pm });
            prop_assert!(m.is_unitary(1e-9));
            let out = apply_transfer(&m, &s);
            prop_assert!((out.power() - s.power()).abs() <= 1e-9 * s.power().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn couplers_are_passive(p in coupler(), a_te in 1e-3..1.0f64, a_tm in 1e-3..1.0f64, s in state()) {
            let t = trench_coupler_transfer(&p).unwrap();
            prop_assert!(apply_transfer(&t, &s).power() <= s.power() + 1e-9);
            let e = edge_coupler_transfer(&EdgeCouplerParams { a_te, a_tm }).unwrap();
            prop_assert!(apply_transfer(&e, &s).power() <= s.power() + 1e-9);
        }

        #[test]
        fn closed_form_matches_truncated_series(rho in 0.0..=0.9f64, delta in angle()) {
            let r2 = rho * rho;
            let step = Complex64::from_polar(r2, 2.0 * delta);
            let mut term = Complex64::from_polar(1.0 - r2, delta);
            let mut sum = Complex64::new(0.0, 0.0);
            for _ in 0..200 {
                sum += term;
                term *= step;
            }
            let closed = fabry_perot_transmission(rho, delta).unwrap();
            prop_assert!((closed - sum).norm() < 1e-9);
            prop_assert!(closed.norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn composition_is_associative(a in matrix(), b in matrix(), cc in matrix()) {
            let flat = compose(&[a, b, cc]).unwrap();
            let nested = compose(&[compose(&[a, b]).unwrap(), cc]).unwrap();
            prop_assert!(flat.max_abs_diff(&nested) < 1e-12);
        }
    }
}
