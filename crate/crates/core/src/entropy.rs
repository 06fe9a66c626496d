//! Entropy of measures with respect to dyadic partitions, component
//! measures, entropy dimension, and the concentration/saturation predicates.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{norm, relative_gap, svd, Subspace};
use crate::ifs::{AffineMap, EmpiricalMeasure};
use crate::stats::{linear_fit, LinearFit};

pub const MIN_SCALE: i32 = -62;
pub const MAX_SCALE: i32 = 62;
/// Above this many occupied cells `Auto` switches the bias correction on.
pub const AUTO_CORRECTION_CELLS: usize = 10_000;
pub const MIN_WINDOW: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasCorrection {
    Off,
    MillerMadow,
    /// Miller–Madow once more than `AUTO_CORRECTION_CELLS` cells are occupied.
    Auto,
}

/// Cell masses at one dyadic scale, keyed by `⌊2^n x⌋` per coordinate in
/// lexicographic key order.
#[derive(Clone, Debug)]
pub struct DyadicHistogram {
    pub scale: i32,
    pub dim: usize,
    keys: Vec<i64>,
    masses: Vec<f64>,
    samples: usize,
}

impl DyadicHistogram {
    pub fn cells(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn key(&self, cell: usize) -> &[i64] {
        &self.keys[cell * self.dim..(cell + 1) * self.dim]
    }

    /// Plug-in entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_of_masses(&self.masses)
    }

    /// `(K − 1) / (2 N ln 2)`.
    pub fn miller_madow(&self) -> f64 {
        (self.cells() as f64 - 1.0) / (2.0 * self.samples as f64 * std::f64::consts::LN_2)
    }
}

pub fn entropy_of_masses(masses: &[f64]) -> f64 {
    masses
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.log2())
        .sum()
}

fn check_scale(n: i32) -> Result<f64> {
    if !(MIN_SCALE..=MAX_SCALE).contains(&n) {
        return Err(Error::Precondition(format!(
            "dyadic scale {n} outside {MIN_SCALE}..={MAX_SCALE}"
        )));
    }
    Ok(f64::from(n).exp2())
}

fn floor_key(v: f64) -> Result<i64> {
    let f = v.floor();
    if !(f >= -(2f64.powi(62)) && f < 2f64.powi(62)) {
        return Err(Error::Precondition(format!(
            "coordinate scaled to {v:e} does not fit a cell index"
        )));
    }
    Ok(f as i64)
}

/// `⌊2^n x⌋` for every point, flattened.
fn cell_keys(theta: &EmpiricalMeasure, n: i32) -> Result<Vec<i64>> {
    let factor = check_scale(n)?;
    theta
        .flat()
        .par_iter()
        .map(|&x| floor_key(x * factor))
        .collect()
}

/// Point indices sorted by key (stable, so ties keep index order).
fn sorted_order(keys: &[i64], dim: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len() / dim).collect();
    idx.par_sort_by(|&a, &b| keys[a * dim..(a + 1) * dim].cmp(&keys[b * dim..(b + 1) * dim]));
    idx
}

/// Groups consecutive entries of `order` with equal keys.
fn runs<'a>(keys: &'a [i64], dim: usize, order: &'a [usize]) -> impl Iterator<Item = &'a [usize]> + 'a {
    order.chunk_by(move |&a, &b| keys[a * dim..(a + 1) * dim] == keys[b * dim..(b + 1) * dim])
}

pub fn histogram(theta: &EmpiricalMeasure, n: i32) -> Result<DyadicHistogram> {
    let dim = theta.dim();
    let keys = cell_keys(theta, n)?;
    let order = sorted_order(&keys, dim);
    let total = theta.len() as f64;
    let mut cell_keys = Vec::new();
    let mut masses = Vec::new();
    for run in runs(&keys, dim, &order) {
        let first = run[0];
        cell_keys.extend_from_slice(&keys[first * dim..(first + 1) * dim]);
        let mass = if theta.is_uniform() {
            run.len() as f64 / total
        } else {
            run.iter().map(|&i| theta.weight(i)).sum()
        };
        masses.push(mass);
    }
    Ok(DyadicHistogram {
        scale: n,
        dim,
        keys: cell_keys,
        masses,
        samples: theta.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub raw: f64,
    pub corrected: f64,
    pub cells: usize,
}

pub fn dyadic_entropy_estimate(theta: &EmpiricalMeasure, n: i32) -> Result<EntropyEstimate> {
    let h = histogram(theta, n)?;
    let raw = h.entropy();
    Ok(EntropyEstimate {
        raw,
        corrected: raw + h.miller_madow(),
        cells: h.cells(),
    })
}

/// `H(θ, D_n)` in bits.
pub fn dyadic_entropy(theta: &EmpiricalMeasure, n: i32, correction: BiasCorrection) -> Result<f64> {
    let e = dyadic_entropy_estimate(theta, n)?;
    Ok(select(e, correction))
}

fn select(e: EntropyEstimate, correction: BiasCorrection) -> f64 {
    match correction {
        BiasCorrection::Off => e.raw,
        BiasCorrection::MillerMadow => e.corrected,
        BiasCorrection::Auto if e.cells > AUTO_CORRECTION_CELLS => e.corrected,
        BiasCorrection::Auto => e.raw,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionalEntropy {
    /// `H(θ, D_{n+k}) − H(θ, D_n)`.
    pub difference: f64,
    /// `Σ_Q θ(Q) H(θ_Q, D_{n+k})` over level-`n` cells `Q`.
    pub component_average: f64,
}

/// `H(θ, D_{n+k} | D_n)` by both routes (plug-in entropies, no correction).
pub fn conditional_dyadic_entropy(theta: &EmpiricalMeasure, n: i32, k: u32) -> Result<ConditionalEntropy> {
    let fine_scale = n
        .checked_add(k as i32)
        .filter(|s| *s <= MAX_SCALE)
        .ok_or_else(|| Error::Precondition("refined scale beyond the supported range".into()))?;
    let dim = theta.dim();
    let fine = cell_keys(theta, fine_scale)?;
    let coarse: Vec<i64> = fine.iter().map(|&v| v >> k).collect();
    let key = |keys: &'_ [i64], i: usize| keys[i * dim..(i + 1) * dim].to_vec();
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.par_sort_by(|&a, &b| {
        coarse[a * dim..(a + 1) * dim]
            .cmp(&coarse[b * dim..(b + 1) * dim])
            .then_with(|| fine[a * dim..(a + 1) * dim].cmp(&fine[b * dim..(b + 1) * dim]))
    });
    let mass_of = |run: &[usize]| -> f64 {
        if theta.is_uniform() {
            run.len() as f64 / theta.len() as f64
        } else {
            run.iter().map(|&i| theta.weight(i)).sum()
        }
    };
    let mut average = 0.0;
    for group in order.chunk_by(|&a, &b| key(&coarse, a) == key(&coarse, b)) {
        let children: Vec<f64> = runs(&fine, dim, group).map(mass_of).collect();
        let q: f64 = children.iter().sum();
        let h: f64 = children.iter().map(|&c| -(c / q) * (c / q).log2()).sum();
        average += q * h;
    }
    let difference = histogram(theta, fine_scale)?.entropy() - histogram(theta, n)?.entropy();
    Ok(ConditionalEntropy {
        difference,
        component_average: average,
    })
}

fn restrict(theta: &EmpiricalMeasure, x: &[f64], n: i32) -> Result<(Vec<usize>, Vec<i64>)> {
    if x.len() != theta.dim() {
        return Err(Error::DimMismatch {
            expected: theta.dim(),
            found: x.len(),
        });
    }
    let factor = check_scale(n)?;
    let target: Vec<i64> = x.iter().map(|&v| floor_key(v * factor)).collect::<Result<_>>()?;
    let mut members = Vec::new();
    for (i, p) in theta.points().enumerate() {
        let mut inside = true;
        for (v, t) in p.iter().zip(&target) {
            if floor_key(v * factor)? != *t {
                inside = false;
                break;
            }
        }
        if inside {
            members.push(i);
        }
    }
    if members.is_empty() {
        return Err(Error::EmptyCell);
    }
    Ok((members, target))
}

fn sub_measure(theta: &EmpiricalMeasure, members: &[usize], f: impl Fn(&[f64]) -> Vec<f64>) -> Result<EmpiricalMeasure> {
    let dim = theta.dim();
    let mut points = Vec::with_capacity(members.len() * dim);
    for &i in members {
        points.extend(f(theta.point(i)));
    }
    let m = EmpiricalMeasure::from_flat(dim, points)?;
    if theta.is_uniform() {
        return Ok(m);
    }
    let total: f64 = members.iter().map(|&i| theta.weight(i)).sum();
    let w = members.iter().map(|&i| theta.weight(i) / total).collect();
    m.with_weights(w)
}

/// `θ_{x,n}`: `θ` conditioned on the level-`n` cell of `x`.
pub fn component(theta: &EmpiricalMeasure, x: &[f64], n: i32) -> Result<EmpiricalMeasure> {
    let (members, _) = restrict(theta, x, n)?;
    sub_measure(theta, &members, |p| p.to_vec())
}

/// `θ^{x,n}`: the component pushed onto `[0,1)^m` by the cell homothety
/// `y ↦ 2^n y − ⌊2^n x⌋`.
pub fn rescaled_component(theta: &EmpiricalMeasure, x: &[f64], n: i32) -> Result<EmpiricalMeasure> {
    let (members, corner) = restrict(theta, x, n)?;
    let factor = f64::from(n).exp2();
    sub_measure(theta, &members, |p| {
        p.iter()
            .zip(&corner)
            .map(|(v, c)| v * factor - *c as f64)
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeOptions {
    /// Drop scales whose occupied cell count reaches `N / 20`.
    pub clip: bool,
    pub correction: BiasCorrection,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        SlopeOptions {
            clip: true,
            correction: BiasCorrection::Auto,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropySlope {
    pub scales: Vec<i32>,
    /// `H(θ, D_n)`.
    pub entropies: Vec<f64>,
    /// `H(θ, D_n) / n`.
    pub normalized: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

impl EntropySlope {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "n,H,H_over_n")?;
        for ((n, h), r) in self.scales.iter().zip(&self.entropies).zip(&self.normalized) {
            writeln!(out, "{n},{h:.12},{r:.12}")?;
        }
        Ok(())
    }
}

/// Least squares slope of `H(θ, D_n)` against `n` on `lo..=hi`.
pub fn entropy_dimension(theta: &EmpiricalMeasure, lo: i32, hi: i32) -> Result<EntropySlope> {
    entropy_dimension_with(theta, lo, hi, SlopeOptions::default())
}

pub fn entropy_dimension_with(
    theta: &EmpiricalMeasure,
    lo: i32,
    hi: i32,
    options: SlopeOptions,
) -> Result<EntropySlope> {
    let limit = theta.len() as f64 / 20.0;
    let mut scales = Vec::new();
    let mut entropies = Vec::new();
    for n in lo..=hi {
        let e = dyadic_entropy_estimate(theta, n)?;
        if options.clip && e.cells as f64 >= limit && e.cells > 1 {
            break;
        }
        scales.push(n);
        entropies.push(select(e, options.correction));
    }
    if scales.len() < MIN_WINDOW {
        return Err(Error::WindowTooSmall {
            scales: scales.len(),
        });
    }
    let x: Vec<f64> = scales.iter().map(|&n| f64::from(n)).collect();
    let LinearFit {
        slope,
        intercept,
        residual,
    } = linear_fit(&x, &entropies);
    let normalized = scales
        .iter()
        .zip(&entropies)
        .map(|(&n, h)| if n == 0 { f64::NAN } else { h / f64::from(n) })
        .collect();
    Ok(EntropySlope {
        scales,
        entropies,
        normalized,
        slope,
        intercept,
        residual,
    })
}

/// `H(θ, D_n^ψ)`: entropy for the partition `U D (D_n)` where `U D V` is a
/// singular value decomposition of the linear part of `ψ`.
///
/// A conformal linear part `c·O` uses `U = O`, `D = c·I`.
pub fn nonconformal_entropy(theta: &EmpiricalMeasure, psi: &AffineMap, n: i32, gap_tol: f64) -> Result<f64> {
    let a = &psi.linear;
    let m = theta.dim();
    if !a.is_square() || a.rows() != m {
        return Err(Error::DimMismatch {
            expected: m,
            found: a.rows(),
        });
    }
    let dec = svd(a);
    let s = dec.sigma();
    let conformal = s.iter().all(|&v| (v - s[0]).abs() <= gap_tol * s[0]);
    // Rows of `inv` give coordinates in the transported grid.
    let inv = if conformal {
        a.transpose().scale(1.0 / (s[0] * s[0]))
    } else {
        for l in 1..m {
            if relative_gap(&dec.log2_sigma, l) < gap_tol {
                return Err(Error::GapTooSmall {
                    index: l,
                    gap: relative_gap(&dec.log2_sigma, l),
                    tol: gap_tol,
                });
            }
        }
        let mut ut = dec.u.transpose();
        for i in 0..m {
            for v in ut.row_mut(i) {
                *v /= s[i];
            }
        }
        ut
    };
    let moved = theta.map_points(m, |x| inv.mul_vec(x));
    dyadic_entropy(&moved, n, BiasCorrection::Off)
}

/// Returns a witness `x` with `θ(x + V^{(ε)}) ≥ 1 − ε`, if one is found.
///
/// Points are projected to `V⊥`; a line is scanned exactly with a sliding
/// window, higher dimensions use mean-shift refinement of up to `⌈2/ε⌉`
/// evenly spaced sample points.
pub fn is_concentrated(theta: &EmpiricalMeasure, v: &Subspace, eps: f64) -> Result<Option<Vec<f64>>> {
    if v.ambient_dim() != theta.dim() {
        return Err(Error::DimMismatch {
            expected: theta.dim(),
            found: v.ambient_dim(),
        });
    }
    let need = 1.0 - eps;
    let comp = v.orthogonal_complement();
    if comp.dim() == 0 || need <= 0.0 {
        return Ok(Some(theta.mean()));
    }
    let proj = theta.project(&comp)?;
    let weights = theta.weights();
    let (center, mass) = if comp.dim() == 1 {
        densest_interval(proj.flat(), &weights, eps)
    } else {
        densest_ball(&proj, &weights, eps)
    };
    if mass >= need - 1e-12 {
        Ok(Some(comp.basis().mul_vec(&center)))
    } else {
        Ok(None)
    }
}

fn densest_interval(values: &[f64], weights: &[f64], radius: f64) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let (mut best, mut best_mass) = (values[order[0]], 0.0);
    let mut hi = 0;
    let mut mass = 0.0;
    for lo in 0..order.len() {
        while hi < order.len() && values[order[hi]] - values[order[lo]] <= 2.0 * radius {
            mass += weights[order[hi]];
            hi += 1;
        }
        if mass > best_mass {
            best_mass = mass;
            best = 0.5 * (values[order[lo]] + values[order[hi - 1]]);
        }
        mass -= weights[order[lo]];
    }
    (vec![best], best_mass)
}

fn ball_mass(points: &EmpiricalMeasure, weights: &[f64], c: &[f64], radius: f64) -> (f64, Vec<f64>) {
    let mut mass = 0.0;
    let mut mean = vec![0.0; c.len()];
    for (i, p) in points.points().enumerate() {
        let d: Vec<f64> = p.iter().zip(c).map(|(a, b)| a - b).collect();
        if norm(&d) <= radius {
            mass += weights[i];
            mean.iter_mut().zip(p).for_each(|(m, x)| *m += weights[i] * x);
        }
    }
    if mass > 0.0 {
        mean.iter_mut().for_each(|m| *m /= mass);
    }
    (mass, mean)
}

fn densest_ball(points: &EmpiricalMeasure, weights: &[f64], radius: f64) -> (Vec<f64>, f64) {
    let n = points.len();
    let count = ((2.0 / radius).ceil() as usize).clamp(1, n);
    let mut candidates: Vec<Vec<f64>> = (0..count).map(|j| points.point(j * n / count).to_vec()).collect();
    candidates.push(points.mean());
    let results: Vec<(Vec<f64>, f64)> = candidates
        .into_par_iter()
        .map(|mut c| {
            let (mut best_mass, mut mean) = ball_mass(points, weights, &c, radius);
            let mut best = c.clone();
            for _ in 0..10 {
                if best_mass == 0.0 {
                    break;
                }
                c = mean.clone();
                let (m, next) = ball_mass(points, weights, &c, radius);
                if m <= best_mass {
                    break;
                }
                best_mass = m;
                best = c.clone();
                mean = next;
            }
            (best, best_mass)
        })
        .collect();
    results
        .into_iter()
        .fold((vec![0.0; points.dim()], -1.0), |acc, r| if r.1 > acc.1 { r } else { acc })
}

/// `(1/k) H(θ, D_k) ≥ (1/k) H(π_{V⊥} θ, D_k) + dim V − ε` with plug-in entropies.
pub fn is_saturated(theta: &EmpiricalMeasure, v: &Subspace, eps: f64, k: i32) -> Result<bool> {
    if v.ambient_dim() != theta.dim() {
        return Err(Error::DimMismatch {
            expected: theta.dim(),
            found: v.ambient_dim(),
        });
    }
    if k <= 0 {
        return Err(Error::Precondition("saturation scale must be positive".into()));
    }
    let kf = f64::from(k);
    let full = dyadic_entropy(theta, k, BiasCorrection::Off)? / kf;
    let comp = v.orthogonal_complement();
    let projected = if comp.dim() == 0 {
        0.0
    } else {
        dyadic_entropy(&theta.project(&comp)?, k, BiasCorrection::Off)? / kf
    };
    Ok(full >= projected + v.dim() as f64 - eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultiscaleCheck {
    /// `(1/n) H(θ, D_{l+n})`.
    pub direct: f64,
    /// Average over `l ≤ i ≤ l+n` of `(1/k) H(θ, D_{i+k} | D_i)`.
    pub component_average: f64,
    pub residual: f64,
}

/// Compares the entropy at scale `l+n` with the average of component
/// entropies over the intermediate scales.
pub fn multiscale_identity_check(theta: &EmpiricalMeasure, l: i32, n: u32, k: u32) -> Result<MultiscaleCheck> {
    if n == 0 || k == 0 {
        return Err(Error::Precondition("multiscale check needs n, k ≥ 1".into()));
    }
    let top = l + n as i32 + k as i32;
    let entropies: Vec<f64> = (l..=top)
        .map(|s| dyadic_entropy(theta, s, BiasCorrection::Off))
        .collect::<Result<_>>()?;
    let h = |s: i32| entropies[(s - l) as usize];
    let direct = h(l + n as i32) / f64::from(n);
    let sum: f64 = (l..=l + n as i32)
        .map(|i| (h(i + k as i32) - h(i)) / f64::from(k))
        .sum();
    let component_average = sum / f64::from(n + 1);
    Ok(MultiscaleCheck {
        direct,
        component_average,
        residual: (direct - component_average).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(n: u32) -> EmpiricalMeasure {
        let k = 1usize << n;
        let pts: Vec<f64> = (0..k).map(|i| i as f64 / k as f64).collect();
        EmpiricalMeasure::from_flat(1, pts).unwrap()
    }

    fn grid_2d(n: u32) -> EmpiricalMeasure {
        let k = 1usize << n;
        let mut pts = Vec::new();
        for i in 0..k {
            for j in 0..k {
                pts.push(i as f64 / k as f64);
                pts.push(j as f64 / k as f64);
            }
        }
        EmpiricalMeasure::from_flat(2, pts).unwrap()
    }

    #[test]
    fn exact_grid_entropies() {
        let g = grid_1d(6);
        for n in 0..=6 {
            assert!((dyadic_entropy(&g, n, BiasCorrection::Off).unwrap() - f64::from(n)).abs() < 1e-12);
        }
        let sq = grid_2d(5);
        assert!((dyadic_entropy(&sq, 5, BiasCorrection::Off).unwrap() - 10.0).abs() < 1e-12);
        let dirac = EmpiricalMeasure::dirac(&[0.3, 0.7]);
        assert_eq!(dyadic_entropy(&dirac, 40, BiasCorrection::MillerMadow).unwrap(), 0.0);
    }

    #[test]
    fn conditional_routes_agree() {
        let sq = grid_2d(4);
        let c = conditional_dyadic_entropy(&sq, 1, 2).unwrap();
        assert!((c.difference - 4.0).abs() < 1e-12);
        assert!((c.component_average - 4.0).abs() < 1e-12);
        let z = conditional_dyadic_entropy(&sq, 2, 0).unwrap();
        assert_eq!(z.difference, 0.0);
    }

    #[test]
    fn components_and_rescaling() {
        let g = grid_1d(4);
        let c = component(&g, &[0.3], 2).unwrap();
        assert_eq!(c.len(), 4);
        let all = component(&g, &[0.3], -10).unwrap();
        assert_eq!(all, g);
        let r = rescaled_component(&g, &[0.3], 2).unwrap();
        assert!(r.flat().iter().all(|&v| (0.0..1.0).contains(&v)));
        let again = rescaled_component(&r, &[0.2], 0).unwrap();
        assert_eq!(again, r);
        assert!(matches!(component(&g, &[3.0], 2), Err(Error::EmptyCell)));
    }

    #[test]
    fn slope_window_rules() {
        let dirac = EmpiricalMeasure::dirac(&[0.25]);
        let s = entropy_dimension(&dirac, 0, 10).unwrap();
        assert_eq!(s.slope, 0.0);
        let g = grid_1d(10);
        assert!(matches!(
            entropy_dimension(&g, 0, 2),
            Err(Error::WindowTooSmall { scales: 3 })
        ));
    }

    #[test]
    fn interval_scan_finds_the_dense_strip() {
        let mut pts = vec![0.5; 990];
        pts.extend((0..10).map(|i| i as f64 / 10.0));
        let theta = EmpiricalMeasure::from_flat(1, pts).unwrap();
        let w = is_concentrated(&theta, &Subspace::zero(1), 0.01).unwrap();
        assert!(w.is_some());
        assert!((w.unwrap()[0] - 0.5).abs() <= 0.01);
        let g = grid_1d(10);
        assert!(is_concentrated(&g, &Subspace::zero(1), 0.01).unwrap().is_none());
    }
}
