/// `coef * (1 + t)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerTerm {
    pub coef: f64,
    pub exponent: f64,
}

impl PowerTerm {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.exponent == 0.0 {
            self.coef
        } else {
            self.coef * (1.0 + t).powf(self.exponent)
        }
    }

    /// `int_a^b coef (1+u)^g du`, written as `(1+a)^(g+1) expm1((g+1) L)/(g+1)`
    /// with `L = ln((1+b)/(1+a))` so short intervals far from the origin keep
    /// full relative precision.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        self.integrate_span(a, b - a)
    }

    /// `int_a^(a+len) coef (1+u)^g du` with the length given exactly.
    pub fn integrate_span(&self, a: f64, len: f64) -> f64 {
        if self.coef == 0.0 || len == 0.0 {
            return 0.0;
        }
        if self.exponent == 0.0 {
            return self.coef * len;
        }
        let log_ratio = (len / (1.0 + a)).ln_1p();
        let g = self.exponent + 1.0;
        if g == 0.0 {
            self.coef * log_ratio
        } else {
            let x = g * log_ratio;
            let rel = if x.abs() < 1e-300 {
                log_ratio
            } else {
                x.exp_m1() / g
            };
            self.coef * (1.0 + a).powf(g) * rel
        }
    }
}

const CAP: usize = 4;

/// Finite sum of [`PowerTerm`]s (at most four, enough for a product of two
/// two-term sums).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerSum {
    terms: [PowerTerm; CAP],
    len: usize,
}

impl PowerSum {
    pub fn constant(c: f64) -> Self {
        Self::single(c, 0.0)
    }

    pub fn single(coef: f64, exponent: f64) -> Self {
        let mut s = Self::default();
        s.terms[0] = PowerTerm { coef, exponent };
        s.len = 1;
        s
    }

    /// Adds a term, merging equal exponents.
    pub fn with(mut self, coef: f64, exponent: f64) -> Self {
        if let Some(t) = self.terms[..self.len]
            .iter_mut()
            .find(|t| t.exponent == exponent)
        {
            t.coef += coef;
            return self;
        }
        assert!(self.len < CAP, "power sum capacity exceeded");
        self.terms[self.len] = PowerTerm { coef, exponent };
        self.len += 1;
        self
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms[..self.len]
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.terms().iter().map(|p| p.eval(t)).sum()
    }

    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        self.terms().iter().map(|p| p.integrate(a, b)).sum()
    }

    pub fn integrate_span(&self, a: f64, len: f64) -> f64 {
        self.terms().iter().map(|p| p.integrate_span(a, len)).sum()
    }

    pub fn product(&self, other: &PowerSum) -> PowerSum {
        let mut out = PowerSum::default();
        for p in self.terms() {
            for q in other.terms() {
                let coef = p.coef * q.coef;
                if coef != 0.0 {
                    out = out.with(coef, p.exponent + q.exponent);
                }
            }
        }
        out
    }

    /// True when every term is a constant.
    pub fn is_constant(&self) -> bool {
        self.terms()
            .iter()
            .all(|t| t.exponent == 0.0 || t.coef == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn integrals_match_composite_simpson() {
        for &(c, g) in &[
            (1.0, 0.0),
            (2.0, -0.5),
            (1.5, -1.0),
            (0.3, 2.5),
            (-1.0, -3.0),
            (1.0, -1.0 + 1e-12),
        ] {
            let term = PowerTerm {
                coef: c,
                exponent: g,
            };
            for &(a, b) in &[(0.0, 1.0), (0.5, 7.0), (3.0, 3.5)] {
                let want = simpson(|u| term.eval(u), a, b, 20_000);
                let got = term.integrate(a, b);
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                    "c={c} g={g} [{a},{b}]: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn short_interval_far_out_keeps_precision() {
        let term = PowerTerm {
            coef: 1.0,
            exponent: -1.0,
        };
        let a: f64 = 1e12;
        let b = a + 1e-3;
        let want = (b - a) / (1.0 + a) - 0.5 * ((b - a) / (1.0 + a)).powi(2);
        assert!((term.integrate(a, b) - want).abs() < 1e-15 * want);
    }

    #[test]
    fn product_merges_exponents() {
        let a = PowerSum::constant(1.0).with(1.0, -1.0);
        let b = PowerSum::single(2.0, 1.0);
        let p = a.product(&b);
        assert_eq!(p.terms().len(), 2);
        for t in [0.0, 1.0, 9.0] {
            assert!((p.eval(t) - a.eval(t) * b.eval(t)).abs() < 1e-12);
        }
        assert!(PowerSum::constant(3.0).is_constant());
        assert!(!p.is_constant());
    }
}
