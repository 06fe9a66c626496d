//! Furstenberg boundary maps and samples of the stationary measures on
//! Grassmannians, with the diagnostics built on them.

use std::io::Write;

use rand::RngExt;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{kappa, plucker, Matrix, ProductSvd, Subspace, DEFAULT_GAP_TOL};
use crate::ifs::AffineIfs;
use crate::random::{keyed_rng, LetterSampler};

/// Which generators act on the Grassmannian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    /// The linear parts `A_i`, giving `ν_m`.
    Direct,
    /// The transposes `A_i*`, giving `ν_m^*`.
    Adjoint,
}

impl Action {
    pub fn family(self, ifs: &AffineIfs) -> Vec<Matrix> {
        match self {
            Action::Direct => ifs.linear_parts(),
            Action::Adjoint => ifs.adjoint_linear_parts(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BoundaryMap,
    ForwardChain,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrassmannSample {
    pub m: usize,
    pub ambient: usize,
    pub subspaces: Vec<Subspace>,
    pub provenance: Provenance,
    /// Word length for boundary draws, chain length for forward replicas.
    pub burn_in: usize,
    pub seed: u64,
    /// Draws rejected because the singular gap was below tolerance.
    pub failures: usize,
}

impl GrassmannSample {
    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn failure_fraction(&self) -> f64 {
        let total = self.failures + self.subspaces.len();
        if total == 0 {
            0.0
        } else {
            self.failures as f64 / total as f64
        }
    }

    pub fn plucker_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.subspaces
            .iter()
            .map(|v| plucker(v).map(|w| w.coords().to_vec()))
            .collect()
    }

    /// CSV of Plücker coordinates, one subspace per row.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let rows = self.plucker_rows()?;
        let width = rows.first().map_or(0, Vec::len);
        let header: Vec<String> = (0..width).map(|i| format!("p{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Draws a word of length `n` from stream `(seed, stream)`.
fn draw_word(probs: &[f64], n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let sampler = LetterSampler::new(probs);
    let mut rng = keyed_rng(seed, stream);
    (0..n).map(|_| sampler.draw(&mut rng)).collect()
}

/// `A_{w_1} ⋯ A_{w_n}` in factored form.
pub fn product_of_word(family: &[Matrix], word: &[usize]) -> ProductSvd {
    let mut p = ProductSvd::identity(family[0].rows());
    for &l in word {
        p.right_multiply(&family[l]);
    }
    p
}

/// `L_m(A_{w_1} ⋯ A_{w_n})` for an explicit word.
pub fn boundary_of_word(family: &[Matrix], word: &[usize], m: usize) -> Result<Subspace> {
    product_of_word(family, word).left_subspace(m, DEFAULT_GAP_TOL)
}

/// `L_m(A_{ω|n})` for a random `ω` drawn from stream `(seed, 0)`.
pub fn boundary_map(ifs: &AffineIfs, n: usize, m: usize, seed: u64) -> Result<Subspace> {
    let word = draw_word(ifs.probs(), n, seed, 0);
    boundary_of_word(&ifs.linear_parts(), &word, m)
}

/// Smallest `n` with `2^{n(χ_{m+1} − χ_m)} < 1e-8`; `None` without a gap.
pub fn default_depth(chi: &[f64], m: usize) -> Option<usize> {
    if m == 0 || m >= chi.len() {
        return Some(1);
    }
    let gap = chi[m - 1] - chi[m];
    if !(gap > 1e-6) {
        return None;
    }
    Some(((1e-8f64).log2() / -gap).floor() as usize + 1)
}

/// `N` independent boundary draws at depth `n`; draw `i` uses stream `i`.
pub fn sample_stationary(
    ifs: &AffineIfs,
    action: Action,
    m: usize,
    count: usize,
    n: usize,
    seed: u64,
) -> Result<GrassmannSample> {
    check_grade(ifs, m)?;
    let family = action.family(ifs);
    let probs = ifs.probs();
    let draws: Vec<Option<Subspace>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let word = draw_word(probs, n, seed, i as u64);
            match boundary_of_word(&family, &word, m) {
                Ok(v) => Ok(Some(v)),
                Err(Error::GapTooSmall { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let failures = draws.iter().filter(|d| d.is_none()).count();
    Ok(GrassmannSample {
        m,
        ambient: ifs.dim(),
        subspaces: draws.into_iter().flatten().collect(),
        provenance: Provenance::BoundaryMap,
        burn_in: n,
        seed,
        failures,
    })
}

/// `N` independent forward chains `V ← A_ω V`, each started from a uniformly
/// random `m`-plane and run for `burn_in` steps.
pub fn sample_forward_chain(
    ifs: &AffineIfs,
    action: Action,
    m: usize,
    count: usize,
    burn_in: usize,
    seed: u64,
) -> Result<GrassmannSample> {
    check_grade(ifs, m)?;
    let family = action.family(ifs);
    let d = ifs.dim();
    let sampler = LetterSampler::new(ifs.probs());
    let subspaces = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(seed, i as u64);
            let mut v = random_plane(&mut rng, d, m);
            for _ in 0..burn_in {
                v = v.image(&family[sampler.draw(&mut rng)])?;
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrassmannSample {
        m,
        ambient: d,
        subspaces,
        provenance: Provenance::ForwardChain,
        burn_in,
        seed,
        failures: 0,
    })
}

/// Span of `m` standard Gaussian vectors, which is Haar distributed on `Gr_m(d)`.
fn random_plane(rng: &mut impl RngExt, d: usize, m: usize) -> Subspace {
    loop {
        let vs: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        if let Ok(v) = Subspace::span(d, &vs) {
            if v.dim() == m {
                return v;
            }
        }
    }
}

fn check_grade(ifs: &AffineIfs, m: usize) -> Result<()> {
    if m == 0 || m > ifs.dim() {
        return Err(Error::Precondition(format!(
            "Grassmannian grade {m} outside 1..={}",
            ifs.dim()
        )));
    }
    Ok(())
}

/// A complete flag `V_0 ⊂ V_1 ⊂ ... ⊂ V_d`.
#[derive(Clone, Debug, Serialize)]
pub struct Flag {
    pub levels: Vec<Subspace>,
}

impl Flag {
    /// Largest `|P_{V_{k+1}} b − b|` over basis vectors `b` of `V_k`.
    pub fn containment_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for pair in self.levels.windows(2) {
            for j in 0..pair[0].dim() {
                worst = worst.max(pair[1].distance_to(&pair[0].basis_vector(j)));
            }
        }
        worst
    }
}

/// All `L_k(A_{ω|n})` from one product, nested by construction.
pub fn flag_boundary(ifs: &AffineIfs, n: usize, seed: u64) -> Result<Flag> {
    let word = draw_word(ifs.probs(), n, seed, 0);
    let p = product_of_word(&ifs.linear_parts(), &word);
    let levels = (0..=ifs.dim())
        .map(|k| p.left_subspace(k, DEFAULT_GAP_TOL))
        .collect::<Result<_>>()?;
    Ok(Flag { levels })
}

#[derive(Clone, Debug, Serialize)]
pub struct RuelleCheck {
    /// `|⟨u_{n1,k}, u_{n2,l}⟩|`.
    pub inner: Vec<Vec<f64>>,
    /// `2^{-n1(|χ_k − χ_l| − ε)}`.
    pub bound: Vec<Vec<f64>>,
    pub pass: Vec<Vec<bool>>,
}

impl RuelleCheck {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().flatten().all(|&b| b)
    }
}

/// Compares left singular frames of `A_{ω|n1}` and `A_{ω|n2}` for one `ω`.
///
/// The frame change between the two depths is accumulated from the per-step
/// rotations, so exponentially small inner products keep relative accuracy.
pub fn ruelle_decay_check(
    ifs: &AffineIfs,
    chi: &[f64],
    n1: usize,
    n2: usize,
    eps: f64,
    seed: u64,
) -> Result<RuelleCheck> {
    if n2 < n1 || n1 == 0 {
        return Err(Error::Precondition(format!(
            "need 1 ≤ n1 ≤ n2, got n1 = {n1}, n2 = {n2}"
        )));
    }
    let d = ifs.dim();
    if chi.len() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: chi.len(),
        });
    }
    let family = ifs.linear_parts();
    let word = draw_word(ifs.probs(), n2, seed, 0);
    let mut p = ProductSvd::identity(d);
    for &l in &word[..n1] {
        p.right_multiply(&family[l]);
    }
    let mut change = Matrix::identity(d);
    for &l in &word[n1..] {
        let r = p.right_multiply(&family[l]);
        change = change.matmul(&r);
    }
    let mut inner = vec![vec![0.0; d]; d];
    let mut bound = vec![vec![0.0; d]; d];
    let mut pass = vec![vec![false; d]; d];
    for k in 0..d {
        for l in 0..d {
            inner[k][l] = change[(k, l)].abs();
            bound[k][l] = (-(n1 as f64) * ((chi[k] - chi[l]).abs() - eps)).exp2();
            pass[k][l] = inner[k][l] <= bound[k][l];
        }
    }
    Ok(RuelleCheck { inner, bound, pass })
}

/// Fraction of sampled `V` with `κ(V, W) ≤ δ`.
pub fn kappa_mass(sample: &GrassmannSample, w: &Subspace, delta: f64) -> Result<f64> {
    let need = sample.ambient - sample.m;
    if w.dim() != need || w.ambient_dim() != sample.ambient {
        return Err(Error::DimMismatch {
            expected: need,
            found: w.dim(),
        });
    }
    if sample.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for v in &sample.subspaces {
        if kappa(v, w)? <= delta {
            hits += 1;
        }
    }
    Ok(hits as f64 / sample.len() as f64)
}

/// Fraction of sampled lines `V` with `|π_V x| ≤ r^α`.
pub fn guivarch_fraction(sample: &GrassmannSample, x: &[f64], r: f64, alpha: f64) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let level = r.powf(alpha);
    let hits = sample
        .subspaces
        .iter()
        .filter(|v| crate::exterior::norm(&v.coordinates(x)) <= level)
        .count();
    hits as f64 / sample.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct GuivarchFit {
    /// `(α, C(α))` with `C(α) = max_r fraction(r, α) / r` over the grid.
    pub table: Vec<(f64, f64)>,
    /// Smallest grid `α` with `C(α) ≤ c_target`, if any.
    pub alpha: Option<f64>,
    pub c: Option<f64>,
}

pub fn guivarch_fit(
    sample: &GrassmannSample,
    x: &[f64],
    radii: &[f64],
    alphas: &[f64],
    c_target: f64,
) -> GuivarchFit {
    let table: Vec<(f64, f64)> = alphas
        .iter()
        .map(|&a| {
            let c = radii
                .iter()
                .map(|&r| guivarch_fraction(sample, x, r, a) / r)
                .fold(0.0, f64::max);
            (a, c)
        })
        .collect();
    let best = table
        .iter()
        .filter(|(_, c)| *c <= c_target)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .copied();
    GuivarchFit {
        table,
        alpha: best.map(|b| b.0),
        c: best.map(|b| b.1),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityResidual {
    /// Per-coordinate `|E f(V) − E f(A V)|` of Plücker coordinates.
    pub first: Vec<f64>,
    /// The same for pairwise products of Plücker coordinates (upper triangle).
    pub second: Vec<f64>,
    /// `4 / √N`.
    pub threshold: f64,
}

impl StationarityResidual {
    pub fn max(&self) -> f64 {
        self.first
            .iter()
            .chain(&self.second)
            .fold(0.0f64, |m, v| m.max(*v))
    }

    pub fn passes(&self) -> bool {
        self.max() < self.threshold
    }
}

fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let w = rows[0].len();
    let n = rows.len() as f64;
    let mut first = vec![0.0; w];
    let mut second = vec![0.0; w * (w + 1) / 2];
    for r in rows {
        let mut idx = 0;
        for i in 0..w {
            first[i] += r[i];
            for j in i..w {
                second[idx] += r[i] * r[j];
                idx += 1;
            }
        }
    }
    first.iter_mut().for_each(|v| *v /= n);
    second.iter_mut().for_each(|v| *v /= n);
    (first, second)
}

/// Moment residual of `ν ≈ Σ p_i A_i ν` for an empirical sample: each `V`
/// is pushed by one random generator drawn from stream `(seed, index)`.
pub fn stationarity_residual(
    sample: &GrassmannSample,
    ifs: &AffineIfs,
    action: Action,
    seed: u64,
) -> Result<StationarityResidual> {
    if sample.is_empty() {
        return Err(Error::Precondition("empty Grassmannian sample".into()));
    }
    let family = action.family(ifs);
    let sampler = LetterSampler::new(ifs.probs());
    let before = sample.plucker_rows()?;
    let after = sample
        .subspaces
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = keyed_rng(seed, i as u64);
            let w = v.image(&family[sampler.draw(&mut rng)])?;
            plucker(&w).map(|p| p.coords().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let (f0, s0) = moments(&before);
    let (f1, s1) = moments(&after);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    Ok(StationarityResidual {
        first: diff(&f0, &f1),
        second: diff(&s0, &s1),
        threshold: 4.0 / (sample.len() as f64).sqrt(),
    })
}

/// Angle in `[0, π)` of each line of a 2-D sample.
pub fn line_angles(sample: &GrassmannSample) -> Vec<f64> {
    sample
        .subspaces
        .iter()
        .map(|v| {
            let b = v.basis_vector(0);
            b[1].atan2(b[0]).rem_euclid(std::f64::consts::PI)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::AffineMap;

    fn ifs_of(mats: Vec<Matrix>) -> AffineIfs {
        AffineIfs::uniform(mats.into_iter().map(AffineMap::linear_only).collect()).unwrap()
    }

    #[test]
    fn top_grade_is_the_full_space() {
        let ifs = ifs_of(vec![Matrix::diag(&[0.5, 0.25])]);
        assert_eq!(boundary_map(&ifs, 10, 2, 1).unwrap().dim(), 2);
    }

    #[test]
    fn default_depth_follows_the_gap() {
        assert_eq!(default_depth(&[-1.0, -2.0], 1), Some(27));
        assert_eq!(default_depth(&[-1.0, -1.0], 1), None);
        assert_eq!(default_depth(&[-1.0, -2.0], 2), Some(1));
    }

    #[test]
    fn flag_is_nested_with_dims_zero_to_d() {
        let a = Matrix::from_rows(&[[0.5, 0.1, 0.0], [0.05, 0.3, 0.1], [0.0, 0.02, 0.1]]);
        let b = Matrix::from_rows(&[[0.4, 0.0, 0.1], [0.1, 0.35, 0.0], [0.03, 0.0, 0.15]]);
        let ifs = ifs_of(vec![a, b]);
        let f = flag_boundary(&ifs, 60, 4).unwrap();
        let dims: Vec<usize> = f.levels.iter().map(Subspace::dim).collect();
        assert_eq!(dims, vec![0, 1, 2, 3]);
        assert!(f.containment_residual() < 1e-10);
        let l2 = boundary_map(&ifs, 60, 2, 4).unwrap();
        assert!(crate::exterior::grassmann_distance(&l2, &f.levels[2]).unwrap() < 1e-12);
    }

    #[test]
    fn conformal_ruelle_bounds_are_trivial() {
        let ifs = ifs_of(vec![Matrix::rotation2(1.0).scale(0.5)]);
        let r = ruelle_decay_check(&ifs, &[-1.0, -1.0], 50, 100, 0.1, 2).unwrap();
        assert!(r.all_pass());
    }

    #[test]
    fn kappa_mass_limits() {
        let ifs = ifs_of(vec![
            Matrix::from_rows(&[[0.6, 0.1], [0.0, 0.2]]),
            Matrix::from_rows(&[[0.3, 0.0], [0.2, 0.5]]),
        ]);
        let s = sample_stationary(&ifs, Action::Direct, 1, 500, 40, 9).unwrap();
        let w = Subspace::coordinate(2, &[1]);
        assert_eq!(kappa_mass(&s, &w, 0.0).unwrap(), 0.0);
        assert_eq!(kappa_mass(&s, &w, 1.0).unwrap(), 1.0);
        let a = kappa_mass(&s, &w, 0.2).unwrap();
        let b = kappa_mass(&s, &w, 0.6).unwrap();
        assert!(a <= b);
        assert!(kappa_mass(&s, &Subspace::full(2), 0.1).is_err());
    }
}
