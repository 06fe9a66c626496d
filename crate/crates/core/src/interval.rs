//! Closed intervals with outward rounding.
//!
//! Each endpoint is rounded to nearest and then moved one ulp outward when an
//! error-free transform shows the rounding went the wrong way, so the result
//! encloses the exact value and exact operations stay exact.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn abs(self) -> Self {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval::new(0.0, (-self.lo).max(self.hi))
        }
    }

    pub fn square(self) -> Self {
        let a = self.abs();
        Interval::new(mul_down(a.lo, a.lo).max(0.0), mul_up(a.hi, a.hi))
    }

    pub fn sqrt(self) -> Self {
        Interval::new(sqrt_down(self.lo.max(0.0)), sqrt_up(self.hi.max(0.0)))
    }

    pub fn contains(self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Rounding error of `a + b`, so that `a + b = s + err` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if e < 0.0 || !s.is_finite() { s.next_down() } else { s }
}

fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if e > 0.0 || !s.is_finite() { s.next_up() } else { s }
}

fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if a.mul_add(b, -p) < 0.0 || !p.is_finite() { p.next_down() } else { p }
}

fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if a.mul_add(b, -p) > 0.0 || !p.is_finite() { p.next_up() } else { p }
}

fn sqrt_down(x: f64) -> f64 {
    let r = x.sqrt();
    if r.mul_add(r, -x) > 0.0 { r.next_down().max(0.0) } else { r }
}

fn sqrt_up(x: f64) -> f64 {
    let r = x.sqrt();
    if r.mul_add(r, -x) < 0.0 { r.next_up() } else { r }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new(add_down(self.lo, o.lo), add_up(self.hi, o.hi))
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new(add_down(self.lo, -o.hi), add_up(self.hi, -o.lo))
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let pairs = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)];
        let lo = pairs.iter().map(|&(a, b)| mul_down(a, b)).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|&(a, b)| mul_up(a, b)).fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }
}

/// Interval enclosure of `Σ a_i b_i`.
pub fn dot(a: &[Interval], b: &[Interval]) -> Interval {
    a.iter()
        .zip(b)
        .fold(Interval::point(0.0), |acc, (x, y)| acc + *x * *y)
}

/// Euclidean norm enclosure.
pub fn norm(v: &[Interval]) -> Interval {
    v.iter()
        .fold(Interval::point(0.0), |acc, x| acc + x.square())
        .sqrt()
}

/// Square interval matrix in row-major order.
#[derive(Clone, Debug)]
pub struct IntervalMatrix {
    pub n: usize,
    pub entries: Vec<Interval>,
}

impl IntervalMatrix {
    pub fn from_matrix(a: &crate::exterior::Matrix) -> Self {
        assert!(a.is_square());
        IntervalMatrix {
            n: a.rows(),
            entries: a.as_slice().iter().map(|&v| Interval::point(v)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![Interval::point(0.0); n * n];
        for i in 0..n {
            entries[i * n + i] = Interval::point(1.0);
        }
        IntervalMatrix { n, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.entries[i * self.n + j]
    }

    pub fn matmul(&self, o: &IntervalMatrix) -> IntervalMatrix {
        let n = self.n;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut s = Interval::point(0.0);
                for k in 0..n {
                    s = s + self.get(i, k) * o.get(k, j);
                }
                entries.push(s);
            }
        }
        IntervalMatrix { n, entries }
    }

    pub fn mul_vec(&self, x: &[Interval]) -> Vec<Interval> {
        (0..self.n)
            .map(|i| dot(&self.entries[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    /// Rigorous upper bound on the operator norm: the least of the Frobenius
    /// norm, `√(‖A‖_1 ‖A‖_∞)` and the Gershgorin bound for `AᵀA`.
    pub fn op_norm_upper(&self) -> f64 {
        let n = self.n;
        let mag: Vec<f64> = self.entries.iter().map(|e| e.abs().hi).collect();
        let frob = mag
            .iter()
            .fold(Interval::point(0.0), |acc, &m| acc + Interval::point(m).square())
            .sqrt()
            .hi;
        let row = (0..n)
            .map(|i| {
                (0..n).fold(Interval::point(0.0), |acc, j| acc + Interval::point(mag[i * n + j])).hi
            })
            .fold(0.0, f64::max);
        let col = (0..n)
            .map(|j| {
                (0..n).fold(Interval::point(0.0), |acc, i| acc + Interval::point(mag[i * n + j])).hi
            })
            .fold(0.0, f64::max);
        let mixed = (Interval::point(row) * Interval::point(col)).sqrt().hi;
        // Gershgorin on |A|ᵀ|A| bounds the largest eigenvalue of AᵀA.
        let mut gersh = 0.0f64;
        for i in 0..n {
            let mut s = Interval::point(0.0);
            for j in 0..n {
                let mut g = Interval::point(0.0);
                for k in 0..n {
                    g = g + Interval::point(mag[k * n + i]) * Interval::point(mag[k * n + j]);
                }
                s = s + g;
            }
            gersh = gersh.max(s.hi);
        }
        let gersh = Interval::point(gersh).sqrt().hi;
        frob.min(mixed).min(gersh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enclosures_contain_exact_values() {
        let third = Interval::point(1.0) * Interval::point(1.0 / 3.0);
        let s = third + third + third;
        assert!(s.contains(1.0));
        let r = Interval::point(2.0).sqrt();
        assert!(r.lo * r.lo <= 2.0 && r.hi * r.hi >= 2.0);
        let x = Interval::new(-1.0, 2.0);
        assert_eq!(x.abs(), Interval::new(0.0, 2.0));
        assert!((x * x).contains(-2.0) && (x * x).contains(4.0));
        let half = Interval::point(0.5) * Interval::point(1.0) + Interval::point(0.0);
        assert_eq!(half, Interval::point(0.5));
        let tenth = Interval::point(0.1) * Interval::point(3.0);
        assert!(tenth.lo < tenth.hi);
    }

    #[test]
    fn op_norm_bound_is_an_upper_bound_and_reasonably_tight() {
        let a = crate::exterior::Matrix::from_rows(&[[0.5, 0.1], [-0.2, 0.3]]);
        let bound = IntervalMatrix::from_matrix(&a).op_norm_upper();
        let exact = a.op_norm();
        assert!(bound >= exact && bound < exact * 1.2);
        let d = crate::exterior::Matrix::diag(&[0.9, 0.9, 0.9]);
        assert!(IntervalMatrix::from_matrix(&d).op_norm_upper() < 0.91);
    }
}
