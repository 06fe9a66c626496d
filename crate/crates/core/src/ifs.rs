//! Affine iterated function systems, word composition and sampling of the
//! self-affine measure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{norm, svd, Matrix, Subspace};
use crate::random::{keyed_rng, LetterSampler};

/// `x ↦ linear·x + translation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Matrix,
    pub translation: Vec<f64>,
}

impl AffineMap {
    pub fn new(linear: Matrix, translation: Vec<f64>) -> Result<Self> {
        if translation.len() != linear.rows() {
            return Err(Error::DimMismatch {
                expected: linear.rows(),
                found: translation.len(),
            });
        }
        Ok(AffineMap {
            linear,
            translation,
        })
    }

    pub fn identity(d: usize) -> Self {
        AffineMap {
            linear: Matrix::identity(d),
            translation: vec![0.0; d],
        }
    }

    pub fn linear_only(linear: Matrix) -> Self {
        let t = vec![0.0; linear.rows()];
        AffineMap {
            linear,
            translation: t,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.linear.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.linear.mul_vec(x);
        y.iter_mut().zip(&self.translation).for_each(|(v, t)| *v += t);
        y
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            linear: self.linear.matmul(&other.linear),
            translation: self.apply(&other.translation),
        }
    }

    pub fn difference(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            linear: self.linear.sub(&other.linear),
            translation: self
                .translation
                .iter()
                .zip(&other.translation)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest absolute difference over all coefficients.
    pub fn coefficient_distance(&self, other: &AffineMap) -> f64 {
        let lin = self.linear.sub(&other.linear).max_abs();
        let tr = self
            .translation
            .iter()
            .zip(&other.translation)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        lin.max(tr)
    }

    /// `sup_{|x| ≤ 1} |linear·x + translation|`.
    pub fn sup_norm(&self) -> f64 {
        affine_sup_norm(&self.linear, &self.translation)
    }
}

/// Maximizes `|B x + b|` over the closed unit ball.
///
/// In singular coordinates `B = U S Vᵀ`, `y = Vᵀx`, `β = Uᵀb` the objective is
/// `Σ (s_i y_i + β_i)²`, maximized on the sphere at `y_i = s_i β_i / (λ − s_i²)`
/// for the unique `λ ≥ s_1²` making `|y| = 1`.
fn affine_sup_norm(b_lin: &Matrix, b: &[f64]) -> f64 {
    let dec = svd(b_lin);
    let s = dec.sigma();
    let beta = dec.u.transpose().mul_vec(b);
    let s1 = s.first().copied().unwrap_or(0.0);
    if s1 == 0.0 {
        return norm(b);
    }
    let top_sq = s1 * s1;
    let is_top = |si: f64| si >= s1 * (1.0 - 1e-12);
    let c: Vec<f64> = s.iter().zip(&beta).map(|(si, bi)| si * bi).collect();
    let top_weight: f64 = s
        .iter()
        .zip(&c)
        .filter(|(si, _)| is_top(**si))
        .map(|(_, ci)| ci * ci)
        .sum();
    let rest = |lambda: f64| -> f64 {
        s.iter()
            .zip(&c)
            .map(|(si, ci)| {
                let den = lambda - si * si;
                if den <= 0.0 {
                    if *ci == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (ci / den).powi(2)
                }
            })
            .sum()
    };
    let mut y = vec![0.0; s.len()];
    let hard_case = top_weight == 0.0 && {
        let at_top: f64 = s
            .iter()
            .zip(&c)
            .filter(|(si, _)| !is_top(**si))
            .map(|(si, ci)| (ci / (top_sq - si * si)).powi(2))
            .sum();
        at_top <= 1.0
    };
    if hard_case {
        let mut used = 0.0;
        let mut top_index = 0;
        for (i, (si, ci)) in s.iter().zip(&c).enumerate() {
            if is_top(*si) {
                top_index = i;
            } else {
                y[i] = ci / (top_sq - si * si);
                used += y[i] * y[i];
            }
        }
        y[top_index] = (1.0 - used).max(0.0).sqrt();
    } else {
        let cn = norm(&c);
        let (mut lo, mut hi) = (top_sq, top_sq + cn);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if rest(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for (i, (si, ci)) in s.iter().zip(&c).enumerate() {
            y[i] = ci / (hi - si * si);
        }
    }
    let v: Vec<f64> = s
        .iter()
        .zip(&y)
        .zip(&beta)
        .map(|((si, yi), bi)| si * yi + bi)
        .collect();
    // Directions outside the range of U were already absorbed: U is square.
    norm(&v).max(norm(b)).max(s1)
}

/// A finite family of contracting invertible affine maps with probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineIfs {
    dim: usize,
    maps: Vec<AffineMap>,
    probs: Vec<f64>,
}

impl AffineIfs {
    pub fn new(maps: Vec<AffineMap>, probs: Vec<f64>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::invariant("maps", "at least one map is required"));
        };
        let dim = first.out_dim();
        if dim == 0 {
            return Err(Error::invariant("dim", "dimension must be at least 1"));
        }
        if probs.len() != maps.len() {
            return Err(Error::invariant(
                "p",
                format!("{} probabilities for {} maps", probs.len(), maps.len()),
            ));
        }
        for (i, m) in maps.iter().enumerate() {
            if m.linear.rows() != dim || m.linear.cols() != dim || m.translation.len() != dim {
                return Err(Error::invariant(
                    format!("maps[{i}]"),
                    format!("expected a {dim}x{dim} map"),
                ));
            }
            if !m.linear.is_finite() || m.translation.iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant(format!("maps[{i}]"), "non-finite entry"));
            }
            let op = m.linear.op_norm();
            if op >= 1.0 {
                return Err(Error::invariant(
                    format!("maps[{i}].A"),
                    format!("operator norm {op} is not below 1"),
                ));
            }
            let det = m.linear.det();
            if det.abs() <= 1e-12 {
                return Err(Error::invariant(
                    format!("maps[{i}].A"),
                    format!("linear part is not invertible (det {det:e})"),
                ));
            }
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p > 0.0) {
                return Err(Error::invariant(format!("p[{i}]"), "must be positive"));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invariant("p", format!("sums to {total}, not 1")));
        }
        Ok(AffineIfs { dim, maps, probs })
    }

    /// Equal probabilities on all maps.
    pub fn uniform(maps: Vec<AffineMap>) -> Result<Self> {
        let n = maps.len().max(1);
        Self::new(maps, vec![1.0 / n as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn linear_parts(&self) -> Vec<Matrix> {
        self.maps.iter().map(|m| m.linear.clone()).collect()
    }

    /// Transposed linear parts, the family generating the adjoint action.
    pub fn adjoint_linear_parts(&self) -> Vec<Matrix> {
        self.maps.iter().map(|m| m.linear.transpose()).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.maps
            .iter()
            .map(|m| m.linear.op_norm())
            .fold(0.0, f64::max)
    }

    /// `R = max|a_i| / (1 − max‖A_i‖)`, so that the attractor lies in `B(0, R)`.
    pub fn attractor_radius(&self) -> f64 {
        let a = self
            .maps
            .iter()
            .map(|m| norm(&m.translation))
            .fold(0.0, f64::max);
        a / (1.0 - self.max_norm())
    }

    /// Smallest `n` with `max‖A_i‖^n · R < 2^-40` (at least 1).
    pub fn default_depth(&self) -> usize {
        let r = self.attractor_radius();
        if r == 0.0 {
            return 1;
        }
        let q = self.max_norm();
        if q == 0.0 {
            return 1;
        }
        let n = ((-40.0 - r.log2()) / q.log2()).floor() as i64 + 1;
        n.max(1) as usize
    }

    /// The point fixed by every map, if they share one.
    pub fn common_fixed_point(&self) -> Option<Vec<f64>> {
        let mut found: Option<Vec<f64>> = None;
        for m in &self.maps {
            let lhs = Matrix::identity(self.dim).sub(&m.linear);
            let x = lhs.solve(&m.translation)?;
            match &found {
                None => found = Some(x),
                Some(f) => {
                    if f.iter().zip(&x).any(|(a, b)| (a - b).abs() > 1e-9) {
                        return None;
                    }
                }
            }
        }
        found
    }

    pub fn fixed_point(&self, i: usize) -> Vec<f64> {
        let m = &self.maps[i];
        Matrix::identity(self.dim)
            .sub(&m.linear)
            .solve(&m.translation)
            .expect("contractions have a unique fixed point")
    }

    pub fn check_word(&self, word: &[usize]) -> Result<()> {
        match word.iter().position(|&l| l >= self.len()) {
            None => Ok(()),
            Some(k) => Err(Error::invariant(
                "word",
                format!("letter {} at position {k} exceeds alphabet of {}", word[k], self.len()),
            )),
        }
    }

    /// `φ_{u_1} ∘ ... ∘ φ_{u_n}`; the empty word gives the identity.
    pub fn compose_word(&self, word: &[usize]) -> AffineMap {
        let mut acc = AffineMap::identity(self.dim);
        for &l in word {
            acc = acc.compose(&self.maps[l]);
        }
        acc
    }

    /// `A_{u_1} ⋯ A_{u_n}`.
    pub fn linear_word(&self, word: &[usize]) -> Matrix {
        let mut acc = Matrix::identity(self.dim);
        for &l in word {
            acc = acc.matmul(&self.maps[l].linear);
        }
        acc
    }

    /// `p_u = Π p_{u_k}`.
    pub fn word_probability(&self, word: &[usize]) -> f64 {
        word.iter().map(|&l| self.probs[l]).product()
    }

    /// `φ_u(0)`, evaluated from the innermost map outward.
    pub fn coding_point(&self, word: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for &l in word.iter().rev() {
            x = self.maps[l].apply(&x);
        }
        x
    }

    /// `n` independent draws of `Πω` with `ω|depth` Bernoulli distributed.
    /// Point `i` uses the random stream `(seed, i)`.
    pub fn sample_measure(&self, n: usize, depth: usize, seed: u64) -> EmpiricalMeasure {
        let sampler = LetterSampler::new(&self.probs);
        let d = self.dim;
        let mut points = vec![0.0; n * d];
        points
            .par_chunks_mut(d)
            .enumerate()
            .for_each_init(
                || vec![0usize; depth],
                |word, (i, out)| {
                    let mut rng = keyed_rng(seed, i as u64);
                    for l in word.iter_mut() {
                        *l = sampler.draw(&mut rng);
                    }
                    let x = self.coding_point(word);
                    out.copy_from_slice(&x);
                },
            );
        EmpiricalMeasure::from_flat(d, points).expect("sample has at least one point")
    }

    /// Reads the JSON spec format `{dim, maps: [{A, a}], p}`.
    pub fn from_spec_str(text: &str) -> Result<Self> {
        let spec: SpecFile = serde_json::from_str(text).map_err(|e| Error::SpecParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        spec.into_ifs()
    }

    pub fn from_spec_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_spec_str(&text)
    }

    pub fn to_spec_string(&self) -> String {
        let spec = SpecFile {
            name: None,
            dim: self.dim,
            maps: self
                .maps
                .iter()
                .map(|m| SpecMap {
                    linear: m.linear.as_slice().to_vec(),
                    translation: m.translation.clone(),
                })
                .collect(),
            p: self.probs.clone(),
        };
        serde_json::to_string_pretty(&spec).expect("spec serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dim: usize,
    maps: Vec<SpecMap>,
    p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecMap {
    #[serde(rename = "A")]
    linear: Vec<f64>,
    #[serde(rename = "a")]
    translation: Vec<f64>,
}

impl SpecFile {
    fn into_ifs(self) -> Result<AffineIfs> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::invariant("dim", "dimension must be at least 1"));
        }
        let mut maps = Vec::with_capacity(self.maps.len());
        for (i, m) in self.maps.into_iter().enumerate() {
            if m.linear.len() != d * d {
                return Err(Error::invariant(
                    format!("maps[{i}].A"),
                    format!("expected {} entries, found {}", d * d, m.linear.len()),
                ));
            }
            if m.translation.len() != d {
                return Err(Error::invariant(
                    format!("maps[{i}].a"),
                    format!("expected {d} entries, found {}", m.translation.len()),
                ));
            }
            maps.push(AffineMap {
                linear: Matrix::from_row_major(d, d, m.linear),
                translation: m.translation,
            });
        }
        AffineIfs::new(maps, self.p)
    }
}

/// A finite point cloud with probability weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    /// `None` means uniform weights.
    weights: Option<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn from_flat(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invariant(
                "points",
                "need at least one point and a whole number of coordinates",
            ));
        }
        Ok(EmpiricalMeasure {
            dim,
            points,
            weights: None,
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invariant("points", "points differ in dimension"));
        }
        Self::from_flat(dim, points.concat())
    }

    pub fn dirac(x: &[f64]) -> Self {
        EmpiricalMeasure {
            dim: x.len(),
            points: x.to_vec(),
            weights: None,
        }
    }

    /// Attaches weights; they must be positive and sum to 1 within `1e-9`.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invariant("weights", "must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invariant("weights", format!("sum to {total}, not 1")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, p) in self.points().enumerate() {
            let w = self.weight(i);
            m.iter_mut().zip(p).for_each(|(a, x)| *a += w * x);
        }
        m
    }

    /// Weighted covariance matrix.
    pub fn covariance(&self) -> Matrix {
        let mean = self.mean();
        let mut c = Matrix::zeros(self.dim, self.dim);
        for (i, p) in self.points().enumerate() {
            let w = self.weight(i);
            for a in 0..self.dim {
                for b in 0..self.dim {
                    c[(a, b)] += w * (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        c
    }

    /// Pushforward under a map on the whole cloud, weights kept.
    pub fn map_points(&self, out_dim: usize, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Self {
        let points: Vec<f64> = self
            .points
            .par_chunks(self.dim)
            .flat_map_iter(|p| {
                let y = f(p);
                debug_assert_eq!(y.len(), out_dim);
                y
            })
            .collect();
        EmpiricalMeasure {
            dim: out_dim,
            points,
            weights: self.weights.clone(),
        }
    }

    pub fn push_affine(&self, map: &AffineMap) -> Result<Self> {
        if map.in_dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: map.in_dim(),
            });
        }
        Ok(self.map_points(map.out_dim(), |x| map.apply(x)))
    }

    pub fn translate(&self, a: &[f64]) -> Self {
        self.map_points(self.dim, |x| x.iter().zip(a).map(|(u, v)| u + v).collect())
    }

    /// Pushforward by `π_V x = basisᵀ x`, a measure on `R^{dim V}`.
    pub fn project(&self, v: &Subspace) -> Result<Self> {
        if v.ambient_dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: v.ambient_dim(),
            });
        }
        if v.dim() == 0 {
            return Err(Error::Precondition(
                "projection onto the zero subspace has no coordinates".into(),
            ));
        }
        let bt = v.basis().transpose();
        Ok(self.map_points(v.dim(), |x| bt.mul_vec(x)))
    }

    /// Concatenates measures with mixture weights `q` (summing to 1).
    pub fn mixture(parts: &[(f64, &EmpiricalMeasure)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(Error::invariant("parts", "empty mixture"));
        };
        let dim = first.dim;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (q, m) in parts {
            if m.dim != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: m.dim,
                });
            }
            points.extend_from_slice(&m.points);
            weights.extend((0..m.len()).map(|i| q * m.weight(i)));
        }
        EmpiricalMeasure::from_flat(dim, points)?.with_weights(weights)
    }

    /// Writes the binary point-cloud cache (weights are not stored).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_cache_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_cache_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.points {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        Self::read_cache_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_cache_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header)
            .map_err(|_| Error::BadCache("truncated header".into()))?;
        if &header[0..4] != CACHE_MAGIC {
            return Err(Error::BadCache("wrong magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::BadCache(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * m * 8 {
            return Err(Error::BadCache(format!(
                "expected {} payload bytes, found {}",
                n * m * 8,
                bytes.len()
            )));
        }
        let points = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(m, points).map_err(|e| Error::BadCache(e.to_string()))
    }
}

const CACHE_MAGIC: &[u8; 4] = b"AFPC";
const CACHE_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;

    fn line_ifs(maps: &[(f64, f64)]) -> AffineIfs {
        let maps = maps
            .iter()
            .map(|&(r, t)| AffineMap::new(Matrix::diag(&[r]), vec![t]).unwrap())
            .collect();
        AffineIfs::uniform(maps).unwrap()
    }

    #[test]
    fn compose_word_by_hand() {
        let ifs = line_ifs(&[(0.5, 0.0), (0.5, 0.5)]);
        assert_eq!(ifs.compose_word(&[]), AffineMap::identity(1));
        let f = ifs.compose_word(&[0, 1]);
        assert_eq!(f.linear.as_slice(), &[0.25]);
        assert_eq!(f.translation, vec![0.25]);
    }

    #[test]
    fn coding_points_approach_the_right_endpoint() {
        let ifs = line_ifs(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]);
        let x = ifs.coding_point(&[1; 30]);
        assert!((x[0] - 1.0).abs() < 1e-13);
        assert_eq!(ifs.coding_point(&[]), vec![0.0]);
    }

    #[test]
    fn radius_and_fixed_points() {
        let ifs = line_ifs(&[(0.5, 0.5)]);
        assert!((ifs.attractor_radius() - 1.0).abs() < 1e-15);
        let cantor = line_ifs(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]);
        assert!(cantor.common_fixed_point().is_none());
        let linear = line_ifs(&[(0.5, 0.0), (0.25, 0.0)]);
        assert_eq!(linear.common_fixed_point(), Some(vec![0.0]));
        assert_eq!(linear.attractor_radius(), 0.0);
    }

    #[test]
    fn invalid_systems_name_the_field() {
        let big = AffineMap::new(Matrix::diag(&[1.5]), vec![0.0]).unwrap();
        match AffineIfs::uniform(vec![big]) {
            Err(Error::InvariantViolation { field, .. }) => assert_eq!(field, "maps[0].A"),
            other => panic!("unexpected {other:?}"),
        }
        let m = AffineMap::new(Matrix::diag(&[0.5]), vec![0.0]).unwrap();
        assert!(AffineIfs::new(vec![m.clone(), m], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn spec_round_trip_and_parse_errors() {
        let text = r#"{"dim": 1, "maps": [{"A": [0.5], "a": [0]}, {"A": [0.5], "a": [0.5]}], "p": [0.5, 0.5]}"#;
        let ifs = AffineIfs::from_spec_str(text).unwrap();
        assert_eq!(ifs.len(), 2);
        let again = AffineIfs::from_spec_str(&ifs.to_spec_string()).unwrap();
        assert_eq!(again.maps(), ifs.maps());

        let broken = "{\"dim\": 1,\n \"maps\": [oops]}";
        match AffineIfs::from_spec_str(broken) {
            Err(Error::SpecParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sup_norm_closed_forms() {
        let one_d = AffineMap::new(Matrix::diag(&[-0.3]), vec![0.2]).unwrap();
        assert!((one_d.sup_norm() - 0.5).abs() < 1e-15);
        let lin = AffineMap::linear_only(Matrix::from_rows(&[[0.0, 2.0], [1.0, 0.0]]));
        assert!((lin.sup_norm() - 2.0).abs() < 1e-14);
        let tr = AffineMap::new(Matrix::zeros(2, 2), vec![3.0, 4.0]).unwrap();
        assert!((tr.sup_norm() - 5.0).abs() < 1e-14);
        // Conformal part plus translation: |r x + b| peaks at x = b/|b|.
        let conf = AffineMap::new(Matrix::diag(&[0.5, 0.5]), vec![0.0, 1.0]).unwrap();
        assert!((conf.sup_norm() - 1.5).abs() < 1e-12);
        // Translation orthogonal to the dominant direction (the hard case).
        let hard = AffineMap::new(Matrix::diag(&[2.0, 1.0]), vec![0.0, 0.5]).unwrap();
        // max over the circle of (2cos t)^2 + (sin t + 0.5)^2
        let brute = (0..200_000)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 200_000.0;
                ((2.0 * t.cos()).powi(2) + (t.sin() + 0.5).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        assert!((hard.sup_norm() - brute).abs() < 1e-8);
    }

    #[test]
    fn cache_round_trip() {
        let m = EmpiricalMeasure::from_points(&[vec![1.0, 2.0], vec![-3.5, 1e-300]]).unwrap();
        let mut buf = Vec::new();
        m.write_cache_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 32);
        let back = EmpiricalMeasure::read_cache_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        buf[0] = b'X';
        assert!(matches!(
            EmpiricalMeasure::read_cache_from(&mut buf.as_slice()),
            Err(Error::BadCache(_))
        ));
    }
}
