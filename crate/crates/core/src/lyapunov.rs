//! Lyapunov spectra of random matrix products, Lyapunov dimension, and the
//! entropy of the random walk generated by an IFS.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{wedge_power, Matrix};
use crate::ifs::{AffineIfs, AffineMap};
use crate::random::{keyed_rng, LetterSampler};
use crate::stats::mean_stderr;

pub const BATCH_COUNT: usize = 32;
pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;
pub const DEFAULT_COMPOSITION_BUDGET: usize = 10_000_000;

/// Householder QR of a tall `d×k` matrix with non-negative diagonal in `R`.
/// Returns the orthonormal factor and the diagonal of `R`.
pub fn qr_positive(a: &Matrix) -> (Matrix, Vec<f64>) {
    let (d, k) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut diag = vec![0.0; k];
    for j in 0..k {
        let x: Vec<f64> = (j..d).map(|i| r[(i, j)]).collect();
        let xn = crate::exterior::norm(&x);
        if xn == 0.0 {
            reflectors.push(vec![0.0; d - j]);
            continue;
        }
        let alpha = if x[0] > 0.0 { -xn } else { xn };
        let mut v = x;
        v[0] -= alpha;
        let vn = crate::exterior::norm(&v);
        if vn > 0.0 {
            v.iter_mut().for_each(|t| *t /= vn);
            for c in j..k {
                let s: f64 = (j..d).map(|i| v[i - j] * r[(i, c)]).sum();
                for i in j..d {
                    r[(i, c)] -= 2.0 * v[i - j] * s;
                }
            }
        }
        diag[j] = r[(j, j)];
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of the identity.
    let mut q = Matrix::zeros(d, k);
    for j in 0..k {
        q[(j, j)] = 1.0;
    }
    for j in (0..k).rev() {
        let v = &reflectors[j];
        for c in 0..k {
            let s: f64 = (j..d).map(|i| v[i - j] * q[(i, c)]).sum();
            if s != 0.0 {
                for i in j..d {
                    q[(i, c)] -= 2.0 * v[i - j] * s;
                }
            }
        }
    }
    for j in 0..k {
        if diag[j] < 0.0 {
            diag[j] = -diag[j];
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    (q, diag)
}

/// Estimated exponents in bits per step, descending, with batch-means errors.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub chi: Vec<f64>,
    pub stderr: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
}

impl SpectrumReport {
    pub fn lyapunov_dimension(&self, entropy: f64) -> f64 {
        lyapunov_dimension(&self.chi, entropy)
    }

    pub fn rho(&self) -> Vec<f64> {
        (1..=self.chi.len()).map(|m| rho_threshold(&self.chi, m)).collect()
    }

    pub fn sum_top(&self, m: usize) -> (f64, f64) {
        let s = self.chi[..m].iter().sum();
        // Conservative: errors of the partial sums are not independent.
        let e = self.stderr[..m].iter().sum();
        (s, e)
    }
}

/// One chain of the QR method on `k` columns; returns per-batch means.
fn qr_chain(
    family: &[Matrix],
    sampler: &LetterSampler,
    k: usize,
    batch_len: usize,
    batches: usize,
    seed: u64,
    stream: u64,
) -> Vec<Vec<f64>> {
    let d = family[0].rows();
    let mut rng = keyed_rng(seed, stream);
    let mut q = Matrix::identity(d).columns(0, k);
    let mut out = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut sums = vec![0.0; k];
        for _ in 0..batch_len {
            let a = &family[sampler.draw(&mut rng)];
            let (nq, diag) = qr_positive(&a.matmul(&q));
            q = nq;
            for (s, r) in sums.iter_mut().zip(&diag) {
                *s += r.log2();
            }
        }
        out.push(sums.into_iter().map(|s| s / batch_len as f64).collect());
    }
    out
}

/// Per-batch exponent means of the QR method, unsorted, together with the
/// number of steps actually used.
pub fn qr_exponent_batches(
    family: &[Matrix],
    probs: &[f64],
    k: usize,
    steps: usize,
    chains: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let d = family
        .first()
        .ok_or_else(|| Error::Precondition("empty matrix family".into()))?
        .rows();
    if k == 0 || k > d {
        return Err(Error::Precondition(format!("exponent count {k} outside 1..={d}")));
    }
    let chains = chains.max(1);
    let per_chain = BATCH_COUNT.div_ceil(chains);
    let batch_len = (steps / (per_chain * chains)).max(1);
    let sampler = LetterSampler::new(probs);
    let batches: Vec<Vec<f64>> = (0..chains)
        .into_par_iter()
        .flat_map_iter(|c| qr_chain(family, &sampler, k, batch_len, per_chain, seed, c as u64))
        .collect();
    Ok((batches, batch_len * per_chain * chains))
}

/// Top `k` Lyapunov exponents of i.i.d. products from `family` with law
/// `probs`, split over `chains` independent chains.
pub fn qr_exponents(
    family: &[Matrix],
    probs: &[f64],
    k: usize,
    steps: usize,
    chains: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    let (batches, used) = qr_exponent_batches(family, probs, k, steps, chains, seed)?;
    let mut rows: Vec<(f64, f64)> = (0..k)
        .map(|j| {
            let column: Vec<f64> = batches.iter().map(|v| v[j]).collect();
            mean_stderr(&column)
        })
        .collect();
    rows.sort_by(|x, y| y.0.total_cmp(&x.0));
    Ok(SpectrumReport {
        chi: rows.iter().map(|r| r.0).collect(),
        stderr: rows.iter().map(|r| r.1).collect(),
        steps: used,
        seed,
    })
}

/// The full Lyapunov spectrum `χ_1 ≥ ... ≥ χ_d` in bits.
pub fn lyapunov_spectrum(ifs: &AffineIfs, steps: usize, seed: u64) -> Result<SpectrumReport> {
    lyapunov_spectrum_chains(ifs, steps, 1, seed)
}

pub fn lyapunov_spectrum_chains(
    ifs: &AffineIfs,
    steps: usize,
    chains: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    qr_exponents(&ifs.linear_parts(), ifs.probs(), ifs.dim(), steps, chains, seed)
}

/// Top exponent of the `∧^m` product chain, which equals `χ_1 + ... + χ_m`.
pub fn wedge_top_exponent(ifs: &AffineIfs, m: usize, steps: usize, seed: u64) -> Result<(f64, f64)> {
    let family = ifs
        .linear_parts()
        .iter()
        .map(|a| wedge_power(a, m))
        .collect::<Result<Vec<_>>>()?;
    let r = qr_exponents(&family, ifs.probs(), 1, steps, 1, seed)?;
    Ok((r.chi[0], r.stderr[0]))
}

/// `H(p) = −Σ p_i log2 p_i`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.log2())
        .sum()
}

/// `dim_L` for exponents sorted descending (all negative) and entropy `h` bits.
pub fn lyapunov_dimension(chi: &[f64], h: f64) -> f64 {
    let d = chi.len();
    let mut partial = h;
    let mut m = 0;
    while m < d && partial + chi[m] >= 0.0 {
        partial += chi[m];
        m += 1;
    }
    if m < d {
        m as f64 - partial / chi[m]
    } else {
        let total: f64 = chi.iter().sum();
        -(d as f64) * h / total
    }
}

/// `ϱ_m = (χ_1 − χ_m)(m−1)(m−2)/2 − Σ_{k≤m} χ_k`.
pub fn rho_threshold(chi: &[f64], m: usize) -> f64 {
    assert!(m >= 1 && m <= chi.len(), "rho index outside 1..=d");
    let mf = m as f64;
    (chi[0] - chi[m - 1]) * (mf - 1.0) * (mf - 2.0) / 2.0 - chi[..m].iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Freeness {
    /// No two enumerated compositions coincided.
    Free,
    /// Two distinct words produced exactly the same map.
    NotFree,
    /// Some compositions were merged by the tolerance without being equal.
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arithmetic {
    /// Compositions in floating point, merged within a tolerance.
    Float { tol: f64 },
    /// Compositions checked to be error free; merged only when equal.
    ExactDyadic,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    /// `H(p)` in bits.
    pub shannon: f64,
    /// `H(p_Φ^{*n_used}) / n_used`, an upper bound for the random walk entropy.
    pub random_walk: f64,
    pub n_used: usize,
    pub free_semigroup: Freeness,
    /// `H(p_Φ^{*n})` for `n = 1..=n_used`.
    pub level_entropies: Vec<f64>,
    /// Number of distinct maps at each level.
    pub support_sizes: Vec<usize>,
}

pub(crate) fn coefficients(map: &AffineMap) -> Vec<f64> {
    let mut c = map.linear.as_slice().to_vec();
    c.extend_from_slice(&map.translation);
    c
}

/// Product and sum that report whether rounding occurred.
fn exact_mul(a: f64, b: f64) -> Option<f64> {
    let p = a * b;
    (a.mul_add(b, -p) == 0.0 && p.is_finite()).then_some(p)
}

fn exact_add(a: f64, b: f64) -> Option<f64> {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (err == 0.0 && s.is_finite()).then_some(s)
}

/// Coefficients of `f ∘ g` computed without rounding, or `None`.
pub(crate) fn exact_compose(f: &[f64], g: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; d * d + d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s = exact_add(s, exact_mul(f[i * d + k], g[k * d + j])?)?;
            }
            out[i * d + j] = s;
        }
        let mut t = f[d * d + i];
        for k in 0..d {
            t = exact_add(t, exact_mul(f[i * d + k], g[d * d + k])?)?;
        }
        out[d * d + i] = t;
    }
    Some(out)
}

pub(crate) fn float_compose(f: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d + d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| f[i * d + k] * g[k * d + j]).sum();
        }
        out[d * d + i] = f[d * d + i] + (0..d).map(|k| f[i * d + k] * g[d * d + k]).sum::<f64>();
    }
    out
}

/// Merges entries whose coefficients agree within `tol` (max-abs), keeping the
/// first representative in sorted order. Returns the merged list and whether
/// any merge joined exactly equal or merely close maps.
fn merge_close(mut items: Vec<(Vec<f64>, f64)>, tol: f64) -> (Vec<(Vec<f64>, f64)>, bool, bool) {
    items.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(items.len());
    let (mut exact, mut close) = (false, false);
    for (c, p) in items {
        // Representatives are sorted by the first coefficient: scan back
        // while that coefficient is within tolerance.
        let mut hit = None;
        for (idx, rep) in out.iter().enumerate().rev() {
            if c[0] - rep.0[0] > tol {
                break;
            }
            let dist = c.iter().zip(&rep.0).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if dist <= tol {
                hit = Some((idx, dist == 0.0));
                break;
            }
        }
        match hit {
            Some((idx, eq)) => {
                out[idx].1 += p;
                if eq {
                    exact = true;
                } else {
                    close = true;
                }
            }
            None => out.push((c, p)),
        }
    }
    (out, exact, close)
}

/// Enumerates the convolution powers `p_Φ^{*n}` for `n ≤ n_max` and reports
/// `H(p_Φ^{*n_max}) / n_max`.
pub fn random_walk_entropy(
    ifs: &AffineIfs,
    n_max: usize,
    arithmetic: Arithmetic,
    budget: usize,
) -> Result<EntropyReport> {
    if n_max == 0 {
        return Err(Error::Precondition("random walk depth must be at least 1".into()));
    }
    let d = ifs.dim();
    let letters: Vec<Vec<f64>> = ifs.maps().iter().map(coefficients).collect();
    let tol = match arithmetic {
        Arithmetic::Float { tol } => tol,
        Arithmetic::ExactDyadic => 0.0,
    };
    let mut level: Vec<(Vec<f64>, f64)> = vec![(coefficients(&AffineMap::identity(d)), 1.0)];
    let mut level_entropies = Vec::with_capacity(n_max);
    let mut support_sizes = Vec::with_capacity(n_max);
    let (mut any_exact, mut any_close) = (false, false);
    for _ in 0..n_max {
        if level.len().saturating_mul(letters.len()) > budget {
            return Err(Error::BudgetExceeded {
                what: "random walk compositions",
                limit: budget,
            });
        }
        let mut next = Vec::with_capacity(level.len() * letters.len());
        for (f, q) in &level {
            for (g, p) in letters.iter().zip(ifs.probs()) {
                let c = match arithmetic {
                    Arithmetic::Float { .. } => float_compose(f, g, d),
                    Arithmetic::ExactDyadic => {
                        exact_compose(f, g, d).ok_or(Error::InexactArithmetic)?
                    }
                };
                next.push((c, q * p));
            }
        }
        let (merged, exact, close) = merge_close(next, tol);
        any_exact |= exact;
        any_close |= close;
        let probs: Vec<f64> = merged.iter().map(|m| m.1).collect();
        level_entropies.push(shannon_entropy(&probs));
        support_sizes.push(merged.len());
        level = merged;
    }
    let free_semigroup = if any_exact {
        Freeness::NotFree
    } else if any_close {
        Freeness::Unknown
    } else {
        Freeness::Free
    };
    let shannon = shannon_entropy(ifs.probs());
    let last = *level_entropies.last().unwrap();
    Ok(EntropyReport {
        shannon,
        random_walk: (last / n_max as f64).min(shannon),
        n_used: n_max,
        free_semigroup,
        level_entropies,
        support_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_and_has_positive_diagonal() {
        let a = Matrix::from_rows(&[[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [-0.5, 0.5, 0.9]]);
        let (q, r) = qr_positive(&a);
        assert!(r.iter().all(|&x| x > 0.0));
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&Matrix::identity(3)).max_abs() < 1e-14);
        // |det A| = Π R_ii.
        assert!((r.iter().product::<f64>() - a.det().abs()).abs() < 1e-13);
    }

    #[test]
    fn single_diagonal_map_is_exact() {
        let m = AffineMap::linear_only(Matrix::diag(&[0.5, 0.25]));
        let ifs = AffineIfs::uniform(vec![m]).unwrap();
        let r = lyapunov_spectrum(&ifs, 2000, 1).unwrap();
        assert_eq!(r.chi, vec![-1.0, -2.0]);
        assert_eq!(r.stderr, vec![0.0, 0.0]);
    }

    #[test]
    fn entropy_examples() {
        assert!((shannon_entropy(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        assert_eq!(shannon_entropy(&[1.0]), 0.0);
        assert!((shannon_entropy(&[0.75, 0.25]) - 0.811_278_124_459_132_8).abs() < 1e-12);
    }

    #[test]
    fn dimension_examples() {
        let third = -(3f64.log2());
        assert!((lyapunov_dimension(&[third], 1.0) - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
        assert!((lyapunov_dimension(&[-1.0, -1.0], 3.0) - 3.0).abs() < 1e-15);
        assert_eq!(lyapunov_dimension(&[-1.0, -2.0], 0.0), 0.0);
        // H = 1.5 with χ = (−1, −2): m = 1, dim = 1 + 0.5/2.
        assert!((lyapunov_dimension(&[-1.0, -2.0], 1.5) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn rho_low_grades() {
        let chi = [-0.4, -0.9, -1.7];
        assert_eq!(rho_threshold(&chi, 1), 0.4);
        assert!((rho_threshold(&chi, 2) - 1.3).abs() < 1e-15);
        assert!((rho_threshold(&chi, 3) - (0.9 + 3.4)).abs() < 1e-14);
    }

    fn line_maps(spec: &[(f64, f64)]) -> AffineIfs {
        AffineIfs::uniform(
            spec.iter()
                .map(|&(r, t)| AffineMap::new(Matrix::diag(&[r]), vec![t]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn commuting_pair_has_binomial_supports() {
        let ifs = line_maps(&[(0.5, 0.0), (0.25, 0.0)]);
        for arithmetic in [Arithmetic::Float { tol: DEFAULT_DEDUP_TOL }, Arithmetic::ExactDyadic] {
            let r = random_walk_entropy(&ifs, 8, arithmetic, DEFAULT_COMPOSITION_BUDGET).unwrap();
            assert_eq!(r.support_sizes, (2..=9).collect::<Vec<_>>());
            assert_eq!(r.free_semigroup, Freeness::NotFree);
        }
    }

    #[test]
    fn free_and_trivial_semigroups() {
        let cantor = line_maps(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]);
        let r = random_walk_entropy(&cantor, 6, Arithmetic::Float { tol: 1e-9 }, 1 << 20).unwrap();
        assert_eq!(r.free_semigroup, Freeness::Free);
        assert!((r.random_walk - 1.0).abs() < 1e-12);
        assert!(matches!(
            random_walk_entropy(&cantor, 3, Arithmetic::ExactDyadic, 1 << 20),
            Err(Error::InexactArithmetic)
        ));
        let same = line_maps(&[(0.5, 0.25), (0.5, 0.25)]);
        let r = random_walk_entropy(&same, 5, Arithmetic::ExactDyadic, 1 << 20).unwrap();
        assert_eq!(r.random_walk, 0.0);
    }

    #[test]
    fn budget_stops_enumeration() {
        let ifs = line_maps(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]);
        assert!(matches!(
            random_walk_entropy(&ifs, 12, Arithmetic::Float { tol: 1e-9 }, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
