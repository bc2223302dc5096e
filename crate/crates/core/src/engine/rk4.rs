//! Classical fixed-step fourth-order Runge-Kutta.
//!
//! Generic over the scalar so the method's order can be measured in
//! extended precision; simulations use `f64`.

use std::ops::{Add, Div, Mul, Sub};

use crate::error::SimError;

/// Arithmetic needed by the integrator.
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Stage buffers, reused across steps to keep the inner loop allocation-free.
#[derive(Debug, Clone)]
pub struct Rk4<T = f64> {
    k: [Vec<T>; 4],
    tmp: Vec<T>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        let zero = T::from_f64(0.0);
        Self {
            k: std::array::from_fn(|_| vec![zero.clone(); dim]),
            tmp: vec![zero.clone(); dim],
        }
    }

    /// Advance `x` from `t` to `t + dt` in place.
    ///
    /// `f(t, x, dx)` writes the derivative. A non-finite derivative entry
    /// aborts the step with the offending index and leaves `x` untouched;
    /// the returned error carries an empty state name for the caller to fill.
    pub fn step<F>(&mut self, mut f: F, x: &mut [T], t: T, dt: T) -> Result<(), SimError>
    where
        F: FnMut(T, &[T], &mut [T]) -> Result<(), SimError>,
    {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        let two = T::from_f64(2.0);
        let h = dt.clone() / two.clone();

        f(t.clone(), x, k1)?;
        check(k1, &t)?;
        for j in 0..x.len() {
            tmp[j] = x[j].clone() + h.clone() * k1[j].clone();
        }
        let t_mid = t.clone() + h.clone();
        f(t_mid.clone(), tmp, k2)?;
        check(k2, &t_mid)?;
        for j in 0..x.len() {
            tmp[j] = x[j].clone() + h.clone() * k2[j].clone();
        }
        f(t_mid.clone(), tmp, k3)?;
        check(k3, &t_mid)?;
        for j in 0..x.len() {
            tmp[j] = x[j].clone() + dt.clone() * k3[j].clone();
        }
        let t_end = t + dt.clone();
        f(t_end.clone(), tmp, k4)?;
        check(k4, &t_end)?;

        let w = dt / T::from_f64(6.0);
        for j in 0..x.len() {
            let incr = k1[j].clone() + two.clone() * (k2[j].clone() + k3[j].clone()) + k4[j].clone();
            x[j] = x[j].clone() + w.clone() * incr;
        }
        Ok(())
    }
}

fn check<T: Scalar>(dx: &[T], t: &T) -> Result<(), SimError> {
    match dx.iter().position(|v| !v.to_f64().is_finite()) {
        Some(index) => Err(SimError::NonFinite {
            index,
            name: String::new(),
            t: t.to_f64(),
        }),
        None => Ok(()),
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<T: Scalar, F>(f: F, x: &[T], t: T, dt: T) -> Result<Vec<T>, SimError>
where
    F: FnMut(T, &[T], &mut [T]) -> Result<(), SimError>,
{
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(f, &mut out, t, dt)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dashu_float::FBig;

    /// 256-bit binary float, enough that rounding never reaches the
    /// truncation error of the method.
    #[derive(Clone)]
    struct Big(FBig);

    impl Add for Big {
        type Output = Big;
        fn add(self, o: Big) -> Big {
            Big(self.0 + o.0)
        }
    }
    impl Sub for Big {
        type Output = Big;
        fn sub(self, o: Big) -> Big {
            Big(self.0 - o.0)
        }
    }
    impl Mul for Big {
        type Output = Big;
        fn mul(self, o: Big) -> Big {
            Big(self.0 * o.0)
        }
    }
    impl Div for Big {
        type Output = Big;
        fn div(self, o: Big) -> Big {
            Big(self.0 / o.0)
        }
    }
    impl Scalar for Big {
        fn from_f64(v: f64) -> Self {
            Big(FBig::try_from(v).unwrap().with_precision(256).value())
        }
        fn to_f64(&self) -> f64 {
            self.0.to_f64().value()
        }
    }

    fn decay<T: Scalar>(_: T, x: &[T], dx: &mut [T]) -> Result<(), SimError> {
        dx[0] = T::from_f64(0.0) - x[0].clone();
        Ok(())
    }

    /// `e^{-1}` from its alternating series.
    fn inv_e() -> Big {
        let mut term = Big::from_f64(1.0);
        let mut sum = term.clone();
        for k in 1..70 {
            term = Big::from_f64(0.0) - term / Big::from_f64(k as f64);
            sum = sum + term.clone();
        }
        sum
    }

    fn global_error(n: usize) -> f64 {
        let h = Big::from_f64(1.0) / Big::from_f64(n as f64);
        let mut x = [Big::from_f64(1.0)];
        let mut rk = Rk4::new(1);
        for k in 0..n {
            let t = h.clone() * Big::from_f64(k as f64);
            rk.step(decay, &mut x, t, h.clone()).unwrap();
        }
        (x[0].clone() - inv_e()).to_f64().abs()
    }

    #[test]
    fn zero_field_keeps_state() {
        let x = [1.5f64, -2.0];
        let y = rk4_step(
            |_, _, dx: &mut [f64]| {
                dx.fill(0.0);
                Ok(())
            },
            &x,
            0.0,
            0.1,
        )
        .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn exponential_decay_single_step() {
        let y = rk4_step(decay, &[1.0f64], 0.0, 1e-3).unwrap();
        assert!((y[0] - 0.999_000_5).abs() < 1e-9);
        assert!((y[0] - (-1e-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn fourth_order_convergence() {
        let e: Vec<f64> = [1000, 2000, 4000].iter().map(|&n| global_error(n)).collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 16.0).abs() < 3.2, "ratio {ratio}");
        }
    }

    #[test]
    fn non_finite_reports_index() {
        let err = rk4_step(
            |_, _, dx: &mut [f64]| {
                dx[0] = 0.0;
                dx[1] = f64::NAN;
                Ok(())
            },
            &[0.0f64, 0.0],
            0.5,
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::NonFinite { index: 1, .. }));
    }
}
