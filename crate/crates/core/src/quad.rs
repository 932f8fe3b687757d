//! Globally adaptive Simpson quadrature for small vector-valued integrands.
//!
//! Each panel carries five samples, so its two-level Simpson estimate gives a
//! Richardson-corrected value and an error estimate `|S2 - S1| / 15`. Panels
//! sit in a max-heap keyed on their share of the tolerance and the worst one
//! is bisected until every component meets `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::NumericError;

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
    pub initial_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_evals: 2_000_000,
            initial_panels: 4,
        }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<const N: usize> {
    pub value: [f64; N],
    pub abs_error: [f64; N],
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    f: [[f64; N]; 5],
    value: [f64; N],
    error: [f64; N],
    priority: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority.total_cmp(&other.priority) == Ordering::Equal
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

impl<const N: usize> Panel<N> {
    fn new(a: f64, b: f64, f: [[f64; N]; 5]) -> Self {
        let h = b - a;
        let mut value = [0.0; N];
        let mut error = [0.0; N];
        for i in 0..N {
            let coarse = h / 6.0 * (f[0][i] + 4.0 * f[2][i] + f[4][i]);
            let fine =
                h / 12.0 * (f[0][i] + 4.0 * f[1][i] + 2.0 * f[2][i] + 4.0 * f[3][i] + f[4][i]);
            let diff = fine - coarse;
            value[i] = fine + diff / 15.0;
            error[i] = diff.abs() / 15.0;
        }
        Self {
            a,
            b,
            f,
            value,
            error,
            priority: 0.0,
        }
    }

    fn splittable(&self) -> bool {
        let q = self.a + 0.25 * (self.b - self.a);
        q > self.a && self.a + 0.75 * (self.b - self.a) < self.b
    }
}

fn tolerance(opts: &QuadOptions, value: f64) -> f64 {
    opts.abs_tol.max(opts.rel_tol * value.abs())
}

/// Integrates a vector-valued `f` over `[a, b]`.
///
/// On running out of evaluations the error carries the partial estimate of
/// the first component that missed its tolerance.
pub fn integrate<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<Quadrature<N>, NumericError>
where
    F: FnMut(f64) -> [f64; N],
{
    if b == a {
        return Ok(Quadrature {
            value: [0.0; N],
            abs_error: [0.0; N],
            evals: 0,
        });
    }
    debug_assert!(b > a);
    let evals = std::cell::Cell::new(0usize);
    let mut eval = |x: f64| -> Result<[f64; N], NumericError> {
        evals.set(evals.get() + 1);
        let y = f(x);
        if y.iter().any(|v| v.is_nan()) {
            return Err(NumericError::NotANumber(x));
        }
        Ok(y)
    };

    let n0 = opts.initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut heap: BinaryHeap<Panel<N>> = BinaryHeap::with_capacity(64);
    let mut frozen_value = [0.0; N];
    let mut frozen_error = [0.0; N];
    let mut total = [0.0; N];
    let mut total_err = [0.0; N];
    let mut panels = Vec::with_capacity(n0);
    let mut left = eval(a)?;
    for k in 0..n0 {
        let pa = a + k as f64 * width;
        let pb = if k + 1 == n0 {
            b
        } else {
            a + (k + 1) as f64 * width
        };
        let h = pb - pa;
        let right = eval(pb)?;
        let samples = [
            left,
            eval(pa + 0.25 * h)?,
            eval(pa + 0.5 * h)?,
            eval(pa + 0.75 * h)?,
            right,
        ];
        let p = Panel::new(pa, pb, samples);
        for i in 0..N {
            total[i] += p.value[i];
            total_err[i] += p.error[i];
        }
        panels.push(p);
        left = right;
    }

    let priority = |p: &Panel<N>, total: &[f64; N]| -> f64 {
        (0..N)
            .map(|i| p.error[i] / tolerance(opts, total[i]).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    for mut p in panels {
        p.priority = priority(&p, &total);
        heap.push(p);
    }

    let done =
        |total: &[f64; N], err: &[f64; N]| (0..N).all(|i| err[i] <= tolerance(opts, total[i]));
    let mut iterations = 0usize;
    while !done(&total, &total_err) {
        let Some(p) = heap.pop() else { break };
        if !p.splittable() {
            for i in 0..N {
                frozen_value[i] += p.value[i];
                frozen_error[i] += p.error[i];
            }
            continue;
        }
        if evals.get() + 4 > opts.max_evals {
            heap.push(p);
            break;
        }
        let m = 0.5 * (p.a + p.b);
        let hl = m - p.a;
        let hr = p.b - m;
        let l = Panel::new(
            p.a,
            m,
            [
                p.f[0],
                eval(p.a + 0.25 * hl)?,
                p.f[1],
                eval(p.a + 0.75 * hl)?,
                p.f[2],
            ],
        );
        let r = Panel::new(
            m,
            p.b,
            [
                p.f[2],
                eval(m + 0.25 * hr)?,
                p.f[3],
                eval(m + 0.75 * hr)?,
                p.f[4],
            ],
        );
        for i in 0..N {
            total[i] += l.value[i] + r.value[i] - p.value[i];
            total_err[i] += l.error[i] + r.error[i] - p.error[i];
        }
        for mut c in [l, r] {
            c.priority = priority(&c, &total);
            heap.push(c);
        }
        iterations += 1;
        if iterations % 256 == 0 {
            // resum to keep the running totals from drifting
            total = frozen_value;
            total_err = frozen_error;
            for q in heap.iter() {
                for i in 0..N {
                    total[i] += q.value[i];
                    total_err[i] += q.error[i];
                }
            }
        }
    }

    let mut value = frozen_value;
    let mut abs_error = frozen_error;
    for q in heap.iter() {
        for i in 0..N {
            value[i] += q.value[i];
            abs_error[i] += q.error[i];
        }
    }
    if let Some(i) = (0..N).find(|&i| abs_error[i] > tolerance(opts, value[i])) {
        // panels too small to split can leave a residual that is pure round-off
        if !heap.iter().all(|p| !p.splittable()) {
            return Err(NumericError::NonConvergence {
                a,
                b,
                evals: evals.get(),
                partial: value[i],
                error: abs_error[i],
            });
        }
    }
    Ok(Quadrature {
        value,
        abs_error,
        evals: evals.get(),
    })
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<(f64, f64), NumericError> {
    let q = integrate(|x| [f(x)], a, b, opts)?;
    Ok((q.value[0], q.abs_error[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, e) =
            integrate_scalar(|x| x * x * x - 2.0 * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((v - 0.0).abs() < 1e-14, "{v}");
        assert!(e < 1e-14);
    }

    #[test]
    fn smooth_functions_hit_tolerance() {
        let opts = QuadOptions::rel(1e-12);
        let (v, _) = integrate_scalar(|x| (-x).exp(), 0.0, 30.0, &opts).unwrap();
        assert!((v - (1.0 - (-30f64).exp())).abs() < 1e-11);
        let (v, _) = integrate_scalar(|x| x.sin(), 0.0, std::f64::consts::PI, &opts).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        let (v, _) = integrate_scalar(|x| 1.0 / (1.0 + x), 0.0, 1e6, &opts).unwrap();
        assert!((v - (1e6f64 + 1.0).ln()).abs() < 1e-10 * v);
    }

    #[test]
    fn narrow_peak_at_the_end_of_a_long_interval() {
        let t = 2f64.powi(40);
        let opts = QuadOptions::rel(1e-10);
        let (v, _) = integrate_scalar(|u| (u - t).exp(), t / 2.0, t, &opts).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn vector_components_share_nodes() {
        let q = integrate(|x| [1.0, x, x * x], 0.0, 3.0, &QuadOptions::default()).unwrap();
        assert!((q.value[0] - 3.0).abs() < 1e-14);
        assert!((q.value[1] - 4.5).abs() < 1e-13);
        assert!((q.value[2] - 9.0).abs() < 1e-13);
    }

    #[test]
    fn budget_exhaustion_is_an_error_with_partial_result() {
        let opts = QuadOptions {
            rel_tol: 1e-15,
            max_evals: 40,
            ..QuadOptions::default()
        };
        match integrate_scalar(|x| x.sqrt(), 0.0, 1.0, &opts) {
            Err(NumericError::NonConvergence { partial, .. }) => {
                assert!((partial - 2.0 / 3.0).abs() < 1e-2)
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn nan_is_reported() {
        assert!(matches!(
            integrate_scalar(
                |x| if x > 0.5 { f64::NAN } else { 1.0 },
                0.0,
                1.0,
                &QuadOptions::default()
            ),
            Err(NumericError::NotANumber(_))
        ));
    }
}
