use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

/// Relative outward inflation applied after every interval operation.
pub const DEFAULT_INFLATION: f64 = 1e-12;

/// Closed interval `[lo, hi]` with outward epsilon inflation.
///
/// Rounding is not directed; instead each operation widens its result by a
/// relative `inflation` so that enclosures stay conservative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    inflation: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self::with_inflation(lo, hi, DEFAULT_INFLATION)
    }

    pub fn with_inflation(lo: f64, hi: f64, inflation: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
        Self { lo, hi, inflation }
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    fn make(&self, lo: f64, hi: f64, other: f64) -> Self {
        let eps = self.inflation.max(other);
        Self {
            lo: lo - eps * lo.abs(),
            hi: hi + eps * hi.abs(),
            inflation: eps,
        }
    }

    pub fn sin(self) -> Self {
        self.shifted_cos(-FRAC_PI_2)
    }

    pub fn cos(self) -> Self {
        self.shifted_cos(0.0)
    }

    /// Range of `cos(x + shift)` over the interval.
    fn shifted_cos(self, shift: f64) -> Self {
        if !self.is_finite() {
            return self.make(-1.0, 1.0, 0.0);
        }
        let a = self.lo + shift;
        let b = self.hi + shift;
        if b - a >= 2.0 * PI {
            return self.make(-1.0, 1.0, 0.0);
        }
        let (ca, cb) = (a.cos(), b.cos());
        let mut lo = ca.min(cb);
        let mut hi = ca.max(cb);
        // maxima of cos at 2k*pi, minima at (2k+1)*pi
        let k_max = (a / (2.0 * PI)).ceil();
        if k_max * 2.0 * PI <= b {
            hi = 1.0;
        }
        let k_min = ((a - PI) / (2.0 * PI)).ceil();
        if k_min * 2.0 * PI + PI <= b {
            lo = -1.0;
        }
        self.make(lo.max(-1.0), hi.min(1.0), 0.0)
    }

    pub fn exp(self) -> Self {
        self.make(self.lo.exp(), self.hi.exp(), 0.0)
    }

    /// Reciprocal; `None` when the interval touches zero.
    pub fn recip(self) -> Option<Self> {
        if self.lo <= 0.0 && self.hi >= 0.0 {
            return None;
        }
        Some(self.make(1.0 / self.hi, 1.0 / self.lo, 0.0))
    }

    /// Integer power; `None` for a negative power of an interval touching zero.
    pub fn powi(self, k: i32) -> Option<Self> {
        if k < 0 {
            return self.powi(-k)?.recip();
        }
        if k == 0 {
            return Some(Self { lo: 1.0, hi: 1.0, inflation: self.inflation });
        }
        let (pa, pb) = (self.lo.powi(k), self.hi.powi(k));
        let r = if k % 2 == 1 || self.lo >= 0.0 {
            (pa, pb)
        } else if self.hi <= 0.0 {
            (pb, pa)
        } else {
            (0.0, pa.max(pb))
        };
        Some(self.make(r.0, r.1, 0.0))
    }

    pub fn scale(self, c: f64) -> Self {
        if c >= 0.0 {
            self.make(self.lo * c, self.hi * c, 0.0)
        } else {
            self.make(self.hi * c, self.lo * c, 0.0)
        }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        self.make(self.lo + o.lo, self.hi + o.hi, o.inflation)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        self.make(self.lo - o.hi, self.hi - o.lo, o.inflation)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo, inflation: self.inflation }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        // 0 * inf would give NaN; treat it as 0 like a degenerate product.
        let p = p.map(|v| if v.is_nan() { 0.0 } else { v });
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.make(lo, hi, o.inflation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_over_full_period_is_unit_range() {
        let s = Interval::new(0.0, 2.0 * PI).sin();
        assert!(s.lo <= -1.0 && s.hi >= 1.0);
        assert!(s.hi <= 1.0 + 1e-11);
    }

    #[test]
    fn sin_over_short_range_is_tight() {
        let s = Interval::new(0.1, 0.2).sin();
        assert!(s.lo <= 0.1f64.sin() && s.hi >= 0.2f64.sin());
        assert!(s.hi - s.lo < 0.1);
        let c = Interval::new(3.0, 3.5).cos();
        assert!(c.lo <= -1.0 + 1e-12 && c.lo >= -1.0 - 1e-11);
    }

    #[test]
    fn even_power_straddling_zero() {
        let p = Interval::new(-2.0, 1.0).powi(2).unwrap();
        assert_eq!(p.lo, 0.0);
        assert!(p.hi >= 4.0 && p.hi < 4.0 + 1e-10);
        assert!(Interval::new(-1.0, 1.0).powi(-1).is_none());
    }

    #[test]
    fn exact_zero_stays_zero() {
        let z = Interval::point(0.0) * Interval::new(-3.0, 5.0) + Interval::point(0.0);
        assert_eq!((z.lo, z.hi), (0.0, 0.0));
    }
}
