//! Separation diagnostics: Diophantine gaps, freeness of the generated
//! semigroup, strong and open set conditions, and heuristic checks for
//! proximality and strong irreducibility of the wedge representations.

use std::io::Write;

use rand::RngExt;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{wedge_power, Matrix};
use crate::furstenberg::Action;
use crate::ifs::{AffineIfs, AffineMap};
use crate::interval::{self, Interval, IntervalMatrix};
use crate::lyapunov::{
    coefficients, exact_compose, float_compose, qr_exponent_batches, Arithmetic, DEFAULT_DEDUP_TOL,
};
use crate::random::keyed_rng;
use crate::stats::mean_stderr;

pub const DEFAULT_WORD_BUDGET: usize = 1 << 16;

/// Gaps between the compositions of one length.
#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub words: usize,
    pub distinct_maps: usize,
    /// Pairs of distinct words whose maps coincide within tolerance.
    pub coincidences: usize,
    /// Least sup-norm distance over pairs of distinct words; zero on a coincidence.
    pub word_gap: f64,
    /// Least sup-norm distance over pairs of distinct maps.
    pub map_gap: f64,
    /// `map_gap^{1/n}`.
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiophantineReport {
    pub rows: Vec<GapRow>,
    /// Largest `ε` with `map_gap_n ≥ ε^n` for every tabulated `n`, if any pair exists.
    pub epsilon: Option<f64>,
}

impl DiophantineReport {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "n,words,distinct_maps,coincidences,word_gap,map_gap,rate")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.12e},{:.12e},{:.12e}",
                r.n, r.words, r.distinct_maps, r.coincidences, r.word_gap, r.map_gap, r.rate
            )?;
        }
        Ok(())
    }
}

/// All words of length `n` in lexicographic order with their maps.
fn level_maps(ifs: &AffineIfs, n: usize, budget: usize, what: &'static str) -> Result<Vec<(Vec<usize>, AffineMap)>> {
    let count = ifs.len().checked_pow(n as u32).filter(|&c| c <= budget);
    if count.is_none() {
        return Err(Error::BudgetExceeded { what, limit: budget });
    }
    let mut level = vec![(Vec::new(), AffineMap::identity(ifs.dim()))];
    for _ in 0..n {
        let mut next = Vec::with_capacity(level.len() * ifs.len());
        for (w, f) in &level {
            for (i, g) in ifs.maps().iter().enumerate() {
                let mut word = w.clone();
                word.push(i);
                next.push((word, f.compose(g)));
            }
        }
        level = next;
    }
    Ok(level)
}

/// Merges maps equal within `tol` and returns representatives with their
/// multiplicities.
fn distinct_maps(maps: Vec<AffineMap>, tol: f64) -> Vec<(AffineMap, usize)> {
    let mut maps = maps;
    maps.sort_by(|a, b| a.translation[0].total_cmp(&b.translation[0]));
    let mut reps: Vec<(AffineMap, usize)> = Vec::new();
    for f in maps {
        let hit = reps
            .iter_mut()
            .rev()
            .take_while(|(r, _)| f.translation[0] - r.translation[0] <= tol)
            .find(|(r, _)| r.coefficient_distance(&f) <= tol);
        match hit {
            Some(r) => r.1 += 1,
            None => reps.push((f, 1)),
        }
    }
    reps
}

/// Least `sup_{|x|≤1} |φ(x) − ψ(x)|` over pairs, pruned by `|b_0|` which
/// bounds the sup norm from below.
fn least_pair_distance(reps: &[(AffineMap, usize)]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, (f, _)) in reps.iter().enumerate() {
        for (g, _) in &reps[i + 1..] {
            if g.translation[0] - f.translation[0] >= best {
                break;
            }
            let diff = f.difference(g);
            let cheap = diff
                .translation
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(diff.linear.max_abs());
            if cheap < best {
                best = best.min(diff.sup_norm());
            }
        }
    }
    best
}

/// Distances between compositions of each length `1..=n_max`.
pub fn diophantine_gaps(ifs: &AffineIfs, n_max: usize, budget: usize) -> Result<DiophantineReport> {
    if n_max == 0 {
        return Err(Error::Precondition("gap depth must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let level = level_maps(ifs, n, budget, "diophantine word enumeration")?;
        let words = level.len();
        let reps = distinct_maps(level.into_iter().map(|(_, f)| f).collect(), DEFAULT_DEDUP_TOL);
        let coincidences: usize = reps.iter().map(|(_, c)| c * (c - 1) / 2).sum();
        let map_gap = least_pair_distance(&reps);
        let word_gap = if coincidences > 0 { 0.0 } else { map_gap };
        rows.push(GapRow {
            n,
            words,
            distinct_maps: reps.len(),
            coincidences,
            word_gap,
            map_gap,
            rate: map_gap.powf(1.0 / n as f64),
        });
    }
    let epsilon = rows
        .iter()
        .filter(|r| r.map_gap.is_finite())
        .map(|r| r.rate)
        .reduce(f64::min);
    Ok(DiophantineReport { rows, epsilon })
}

#[derive(Clone, Debug, Serialize)]
pub struct FreenessCheck {
    /// Largest `n` such that all words of length at most `n` give distinct maps.
    pub verified_depth: usize,
    pub first_failure: Option<usize>,
    /// Two distinct words with the same map.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
    /// Whether the witness maps are equal exactly rather than within tolerance.
    pub exact: bool,
}

/// Checks that distinct words of length at most `n_max` give distinct maps.
pub fn free_semigroup_check(
    ifs: &AffineIfs,
    n_max: usize,
    arithmetic: Arithmetic,
    budget: usize,
) -> Result<FreenessCheck> {
    let d = ifs.dim();
    let tol = match arithmetic {
        Arithmetic::Float { tol } => tol,
        Arithmetic::ExactDyadic => 0.0,
    };
    let letters: Vec<Vec<f64>> = ifs.maps().iter().map(coefficients).collect();
    let mut all: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    let mut frontier: Vec<(Vec<f64>, Vec<usize>)> = vec![(coefficients(&AffineMap::identity(d)), Vec::new())];
    for n in 1..=n_max {
        if all.len() + frontier.len() * letters.len() > budget {
            return Err(Error::BudgetExceeded { what: "semigroup word enumeration", limit: budget });
        }
        let mut next = Vec::with_capacity(frontier.len() * letters.len());
        for (f, w) in &frontier {
            for (i, g) in letters.iter().enumerate() {
                let c = match arithmetic {
                    Arithmetic::Float { .. } => float_compose(f, g, d),
                    Arithmetic::ExactDyadic => exact_compose(f, g, d).ok_or(Error::InexactArithmetic)?,
                };
                let mut word = w.clone();
                word.push(i);
                next.push((c, word));
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
        if let Some((a, b, exact)) = find_coincidence(&mut all, tol) {
            return Ok(FreenessCheck {
                verified_depth: n - 1,
                first_failure: Some(n),
                witness: Some((a, b)),
                exact,
            });
        }
    }
    Ok(FreenessCheck {
        verified_depth: n_max,
        first_failure: None,
        witness: None,
        exact: false,
    })
}

fn find_coincidence(items: &mut [(Vec<f64>, Vec<usize>)], tol: f64) -> Option<(Vec<usize>, Vec<usize>, bool)> {
    items.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then_with(|| a.1.cmp(&b.1)));
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            if items[j].0[0] - items[i].0[0] > tol {
                break;
            }
            let dist = items[i]
                .0
                .iter()
                .zip(&items[j].0)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if dist <= tol {
                let (a, b) = (items[i].1.clone(), items[j].1.clone());
                let (a, b) = if (a.len(), &a) <= (b.len(), &b) { (a, b) } else { (b, a) };
                return Some((a, b, dist == 0.0));
            }
        }
    }
    None
}

/// Two attractor points in the images of different first-level maps.
#[derive(Clone, Debug, Serialize)]
pub struct CoincidenceWitness {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub point: Vec<f64>,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SscStatus {
    /// Cylinder balls of this depth from different first letters are disjoint.
    Certified { depth: usize },
    Refuted { depth: usize, witness: CoincidenceWitness },
    Unknown { depth: usize },
}

impl SscStatus {
    pub fn is_certified(&self) -> bool {
        matches!(self, SscStatus::Certified { .. })
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self, SscStatus::Refuted { .. })
    }
}

struct Cylinder {
    first: usize,
    center: Vec<Interval>,
    linear: IntervalMatrix,
    norm_bound: f64,
}

fn interval_vec(x: &[f64]) -> Vec<Interval> {
    x.iter().map(|&v| Interval::point(v)).collect()
}

fn interval_apply(map: &AffineMap, linear: &IntervalMatrix, x: &[Interval]) -> Vec<Interval> {
    linear
        .mul_vec(x)
        .into_iter()
        .zip(&map.translation)
        .map(|(y, &t)| y + Interval::point(t))
        .collect()
}

/// Certified lower bound of `|x − y|`.
fn distance_lower(x: &[Interval], y: &[Interval]) -> f64 {
    let diff: Vec<Interval> = x.iter().zip(y).map(|(a, b)| *a - *b).collect();
    interval::norm(&diff).lo
}

/// Tries to certify or refute the strong separation condition with cylinder
/// balls of depth `1..=max_depth`.
///
/// The attractor lies in the ball `B(c, R)` with `c` the mean of the fixed
/// points and `R = max_i |φ_i(c) − c| / (1 − ‖A_i‖)`; its depth-`k` cylinders
/// lie in `B(φ_u(c), ‖A_u‖ R)`. All bounds are evaluated in interval arithmetic.
pub fn ssc_check(ifs: &AffineIfs, max_depth: usize, budget: usize) -> Result<SscStatus> {
    if ifs.len() == 1 {
        return Ok(SscStatus::Certified { depth: 0 });
    }
    let d = ifs.dim();
    let fixed: Vec<Vec<f64>> = (0..ifs.len()).map(|i| ifs.fixed_point(i)).collect();
    let mut c = vec![0.0; d];
    for x in &fixed {
        c.iter_mut().zip(x).for_each(|(s, v)| *s += v / fixed.len() as f64);
    }
    let ci = interval_vec(&c);
    let letters: Vec<IntervalMatrix> = ifs.maps().iter().map(|f| IntervalMatrix::from_matrix(&f.linear)).collect();
    let betas: Vec<f64> = letters.iter().map(|m| m.op_norm_upper()).collect();
    let radius = if betas.iter().all(|&b| b < 1.0) {
        let mut r = 0.0f64;
        for ((f, a), &b) in ifs.maps().iter().zip(&letters).zip(&betas) {
            let img = interval_apply(f, a, &ci);
            let diff: Vec<Interval> = img.iter().zip(&ci).map(|(y, x)| *y - *x).collect();
            let num = interval::norm(&diff);
            let den = Interval::point(1.0) - Interval::point(b);
            r = r.max((Interval::point(num.hi) * Interval::point(1.0 / den.lo)).hi * (1.0 + 4.0 * f64::EPSILON));
        }
        Some(r)
    } else {
        None
    };

    let mut level: Vec<Cylinder> = Vec::new();
    for depth in 1..=max_depth {
        let size = ifs.len().checked_pow(depth as u32).filter(|&s| s <= budget);
        if size.is_none() {
            return Ok(SscStatus::Unknown { depth: depth - 1 });
        }
        level = if depth == 1 {
            (0..ifs.len())
                .map(|i| Cylinder {
                    first: i,
                    center: interval_apply(&ifs.maps()[i], &letters[i], &ci),
                    linear: letters[i].clone(),
                    norm_bound: betas[i],
                })
                .collect()
        } else {
            // u = i·v, so φ_u(c) = φ_i(φ_v(c)) and A_u = A_i A_v.
            let mut next = Vec::with_capacity(level.len() * ifs.len());
            for i in 0..ifs.len() {
                for cyl in &level {
                    let linear = letters[i].matmul(&cyl.linear);
                    let norm_bound = linear
                        .op_norm_upper()
                        .min((Interval::point(betas[i]) * Interval::point(cyl.norm_bound)).hi);
                    next.push(Cylinder {
                        first: i,
                        center: interval_apply(&ifs.maps()[i], &letters[i], &cyl.center),
                        linear,
                        norm_bound,
                    });
                }
            }
            next
        };
        if let Some(r) = radius {
            if cylinders_separated(&level, r) {
                return Ok(SscStatus::Certified { depth });
            }
        }
        if let Some(witness) = attractor_coincidence(ifs, &fixed, depth, budget)? {
            return Ok(SscStatus::Refuted { depth, witness });
        }
    }
    Ok(SscStatus::Unknown { depth: max_depth })
}

fn cylinders_separated(level: &[Cylinder], r: f64) -> bool {
    let radii: Vec<f64> = level
        .iter()
        .map(|c| (Interval::point(c.norm_bound) * Interval::point(r)).hi)
        .collect();
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..level.len()).collect();
    order.sort_by(|&a, &b| level[a].center[0].lo.total_cmp(&level[b].center[0].lo));
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            let reach = (Interval::point(radii[a]) + Interval::point(r_max)).hi;
            if (Interval::point(level[b].center[0].lo) - Interval::point(level[a].center[0].hi)).lo > reach {
                break;
            }
            if level[a].first == level[b].first {
                continue;
            }
            let sum = (Interval::point(radii[a]) + Interval::point(radii[b])).hi;
            if distance_lower(&level[a].center, &level[b].center) <= sum {
                return false;
            }
        }
    }
    true
}

/// Looks for points `φ_u(x_j)` and `φ_w(x_l)` with different first letters
/// that agree to within rounding, where `x_j` are the fixed points.
fn attractor_coincidence(
    ifs: &AffineIfs,
    fixed: &[Vec<f64>],
    depth: usize,
    budget: usize,
) -> Result<Option<CoincidenceWitness>> {
    let words = level_maps(ifs, depth, budget, "attractor point enumeration")?;
    let scale = 1.0 + ifs.attractor_radius();
    let tol = 1e-12 * scale;
    let mut points: Vec<(Vec<f64>, Vec<usize>)> = Vec::with_capacity(words.len() * fixed.len());
    for (w, f) in &words {
        for (j, x) in fixed.iter().enumerate() {
            let mut word = w.clone();
            word.push(j);
            points.push((f.apply(x), word));
        }
    }
    points.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[j].0[0] - points[i].0[0] > tol {
                break;
            }
            if points[i].1[0] == points[j].1[0] {
                continue;
            }
            let dist = points[i]
                .0
                .iter()
                .zip(&points[j].0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist <= tol {
                return Ok(Some(CoincidenceWitness {
                    first: points[i].1.clone(),
                    second: points[j].1.clone(),
                    point: points[i].0.clone(),
                    distance: dist,
                }));
            }
        }
    }
    Ok(None)
}

/// An open axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimMismatch { expected: lo.len(), found: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::invariant("box", "every lower bound must be below its upper bound"));
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        AxisBox { lo: vec![0.0; d], hi: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| (0..d).map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] }).collect())
            .collect()
    }

    /// Whether `x` lies in the box at distance more than `margin` from its boundary.
    pub fn contains_strictly(&self, x: &[f64], margin: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v > a + margin && *v < b - margin)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum OscStatus {
    Certified,
    Refuted { reason: String },
    Unknown { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct OscReport {
    pub status: OscStatus,
    /// An attractor point found inside the box, which upgrades the certificate
    /// to the strong open set condition.
    pub strong_witness: Option<Vec<f64>>,
}

impl OscReport {
    pub fn is_certified(&self) -> bool {
        matches!(self.status, OscStatus::Certified)
    }

    pub fn is_strong(&self) -> bool {
        self.is_certified() && self.strong_witness.is_some()
    }
}

/// Separating axes for two parallelotopes `A_i(U) + a_i`: the face normals,
/// and in three dimensions the cross products of edge directions.
fn candidate_axes(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    let d = a.rows();
    let mut axes = Vec::new();
    for m in [a, b] {
        let t = m.transpose();
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            if let Some(n) = t.solve(&e) {
                axes.push(n);
            }
        }
    }
    if d == 3 {
        for i in 0..3 {
            for j in 0..3 {
                let (u, v) = (a.column(i), b.column(j));
                let cross = vec![
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let len = cross.iter().map(|x| x * x).sum::<f64>().sqrt();
                if len > 1e-12 * (1.0 + a.max_abs() * b.max_abs()) {
                    axes.push(cross);
                }
            }
        }
    }
    axes
}

fn projection_range(vertices: &[Vec<Interval>], axis: &[f64]) -> Interval {
    let n = interval_vec(axis);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vertices {
        let p = interval::dot(v, &n);
        lo = lo.min(p.lo);
        hi = hi.max(p.hi);
    }
    Interval::new(lo, hi)
}

/// Checks the open set condition for the open box `u`: every image lies in
/// `u` and the images are pairwise disjoint, with touching boundaries
/// allowed. Attractor points `φ_w(x_j)` with `|w| ≤ strong_depth` are then
/// searched for a point inside `u`.
pub fn osc_check(ifs: &AffineIfs, u: &AxisBox, strong_depth: usize) -> Result<OscReport> {
    let d = ifs.dim();
    if u.dim() != d {
        return Err(Error::DimMismatch { expected: d, found: u.dim() });
    }
    let unknown = |reason: &str| OscReport {
        status: OscStatus::Unknown { reason: reason.into() },
        strong_witness: None,
    };
    if d > 3 {
        return Ok(unknown("disjointness test implemented for dimension at most 3"));
    }
    let corners: Vec<Vec<Interval>> = u.vertices().iter().map(|v| interval_vec(v)).collect();
    let images: Vec<Vec<Vec<Interval>>> = ifs
        .maps()
        .iter()
        .map(|f| {
            let a = IntervalMatrix::from_matrix(&f.linear);
            corners.iter().map(|x| interval_apply(f, &a, x)).collect()
        })
        .collect();

    let mut undecided = None;
    for (i, verts) in images.iter().enumerate() {
        for v in verts {
            for (k, y) in v.iter().enumerate() {
                if y.hi < u.lo[k] || y.lo > u.hi[k] {
                    return Ok(OscReport {
                        status: OscStatus::Refuted {
                            reason: format!("image of the box under map {i} leaves the box"),
                        },
                        strong_witness: None,
                    });
                }
                if y.lo < u.lo[k] || y.hi > u.hi[k] {
                    undecided.get_or_insert(format!("containment of image {i} not decided by rounding"));
                }
            }
        }
    }

    let maps = ifs.maps();
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            let axes = candidate_axes(&maps[i].linear, &maps[j].linear);
            let mut separated = false;
            let mut clearly_overlapping = true;
            for axis in &axes {
                let p = projection_range(&images[i], axis);
                let q = projection_range(&images[j], axis);
                if p.hi <= q.lo || q.hi <= p.lo {
                    separated = true;
                    break;
                }
                let overlap = p.hi.min(q.hi) - p.lo.max(q.lo);
                let scale = axis.iter().map(|x| x.abs()).sum::<f64>() * (1.0 + u.hi.iter().chain(&u.lo).fold(0.0f64, |m, v| m.max(v.abs())));
                if overlap <= 1e-9 * scale {
                    clearly_overlapping = false;
                }
            }
            if !separated {
                if clearly_overlapping {
                    return Ok(OscReport {
                        status: OscStatus::Refuted {
                            reason: format!("images {i} and {j} overlap"),
                        },
                        strong_witness: None,
                    });
                }
                undecided.get_or_insert(format!("disjointness of images {i} and {j} not decided"));
            }
        }
    }
    if let Some(reason) = undecided {
        return Ok(unknown(&reason));
    }

    let fixed: Vec<Vec<f64>> = (0..ifs.len()).map(|i| ifs.fixed_point(i)).collect();
    let margin = 1e-9 * (1.0 + ifs.attractor_radius());
    let mut strong_witness = fixed.iter().find(|x| u.contains_strictly(x, margin)).cloned();
    for n in 1..=strong_depth {
        if strong_witness.is_some() {
            break;
        }
        let Ok(level) = level_maps(ifs, n, DEFAULT_WORD_BUDGET, "open set witness search") else {
            break;
        };
        strong_witness = level
            .iter()
            .flat_map(|(_, f)| fixed.iter().map(move |x| f.apply(x)))
            .find(|y| u.contains_strictly(y, margin));
    }
    Ok(OscReport {
        status: OscStatus::Certified,
        strong_witness,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProximalityReport {
    pub m: usize,
    pub action: Action,
    /// Gap between the top two exponents of the `∧^m` chain, `χ_m − χ_{m+1}`.
    pub gap: f64,
    pub stderr: f64,
    pub steps: usize,
    /// The gap exceeds three standard errors and `1e-6` bits.
    pub evidence: bool,
}

/// Estimates the top Lyapunov gap of `∧^m` of the chosen action.
pub fn proximality_check(ifs: &AffineIfs, action: Action, m: usize, steps: usize, seed: u64) -> Result<ProximalityReport> {
    let d = ifs.dim();
    if m == 0 || m >= d {
        return Err(Error::Precondition(format!("proximality needs 1 <= m < {d}, got {m}")));
    }
    let family = action
        .family(ifs)
        .iter()
        .map(|a| wedge_power(a, m))
        .collect::<Result<Vec<_>>>()?;
    let (batches, used) = qr_exponent_batches(&family, ifs.probs(), 2, steps, 1, seed)?;
    let gaps: Vec<f64> = batches.iter().map(|b| b[0] - b[1]).collect();
    let (gap, stderr) = mean_stderr(&gaps);
    Ok(ProximalityReport {
        m,
        action,
        gap,
        stderr,
        steps: used,
        evidence: gap > 3.0 * stderr && gap > 1e-6,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IrreducibilityReport {
    pub m: usize,
    pub trials: usize,
    /// A finite set of lines in `∧^m R^d` permuted by every generator, if found.
    pub invariant_lines: Option<Vec<Vec<f64>>>,
    /// The product whose eigenline generated the invariant set.
    pub word: Option<Vec<usize>>,
}

impl IrreducibilityReport {
    /// No finite invariant union of lines was found.
    pub fn evidence(&self) -> bool {
        self.invariant_lines.is_none()
    }
}

const MAX_ORBIT: usize = 8;

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.into_iter().map(|x| x / n).collect())
}

fn line_distance(a: &[f64], b: &[f64]) -> f64 {
    let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - c * c).max(0.0).sqrt()
}

/// Power iteration; returns a unit eigenvector of a real dominant eigenvalue.
fn dominant_eigenline(step: impl Fn(&[f64]) -> Option<Vec<f64>>, start: Vec<f64>) -> Option<Vec<f64>> {
    let mut v = normalized(start)?;
    for _ in 0..500 {
        v = normalized(step(&v)?)?;
    }
    let w = normalized(step(&v)?)?;
    (line_distance(&v, &w) < 1e-9).then_some(v)
}

/// Orbit of a line under the generators, or `None` once it exceeds the cap.
fn finite_orbit(generators: &[Matrix], line: Vec<f64>) -> Option<Vec<Vec<f64>>> {
    let mut orbit = vec![line];
    let mut idx = 0;
    while idx < orbit.len() {
        for g in generators {
            let w = normalized(g.mul_vec(&orbit[idx]))?;
            if orbit.iter().all(|l| line_distance(l, &w) > 1e-6) {
                orbit.push(w);
                if orbit.len() > MAX_ORBIT {
                    return None;
                }
            }
        }
        idx += 1;
    }
    Some(orbit)
}

/// Searches for a finite union of lines in `∧^m R^d` invariant under all
/// `∧^m A_i`, using eigenlines of random products of length at most 4.
pub fn irreducibility_check(ifs: &AffineIfs, m: usize, trials: usize, seed: u64) -> Result<IrreducibilityReport> {
    let generators = ifs
        .linear_parts()
        .iter()
        .map(|a| wedge_power(a, m))
        .collect::<Result<Vec<_>>>()?;
    let dim = generators[0].rows();
    for t in 0..trials {
        let mut rng = keyed_rng(seed, t as u64);
        let len = 1 + (rng.random::<f64>() * 4.0) as usize;
        let word: Vec<usize> = (0..len)
            .map(|_| ((rng.random::<f64>() * generators.len() as f64) as usize).min(generators.len() - 1))
            .collect();
        let mut product = Matrix::identity(dim);
        for &i in &word {
            product = product.matmul(&generators[i]);
        }
        let start: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let forward = dominant_eigenline(|v| Some(product.mul_vec(v)), start.clone());
        let backward = dominant_eigenline(|v| product.solve(v), start);
        for line in [forward, backward].into_iter().flatten() {
            if let Some(orbit) = finite_orbit(&generators, line) {
                return Ok(IrreducibilityReport {
                    m,
                    trials: t + 1,
                    invariant_lines: Some(orbit),
                    word: Some(word),
                });
            }
        }
    }
    Ok(IrreducibilityReport {
        m,
        trials,
        invariant_lines: None,
        word: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(maps: &[(f64, f64)]) -> AffineIfs {
        AffineIfs::uniform(
            maps.iter()
                .map(|&(a, t)| AffineMap::new(Matrix::from_rows(&[[a]]), vec![t]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cantor_gaps_decay_like_a_third() {
        let ifs = one_dim(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]);
        let rep = diophantine_gaps(&ifs, 6, 1 << 12).unwrap();
        for r in &rep.rows {
            let expected = (2.0 / 3.0) * (1.0 / 3.0f64).powi(r.n as i32 - 1);
            assert!((r.map_gap - expected).abs() < 1e-12 * expected.max(1e-3), "{r:?}");
            assert_eq!(r.coincidences, 0);
        }
        assert!(rep.epsilon.unwrap() >= 1.0 / 3.0 - 1e-12);
    }

    #[test]
    fn duplicate_maps_give_zero_word_gap() {
        let ifs = one_dim(&[(0.5, 0.0), (0.5, 0.0)]);
        let rep = diophantine_gaps(&ifs, 2, 64).unwrap();
        assert_eq!(rep.rows[0].word_gap, 0.0);
        assert!(rep.rows[0].map_gap.is_infinite());
        let free = free_semigroup_check(&ifs, 4, Arithmetic::ExactDyadic, 1000).unwrap();
        assert_eq!(free.verified_depth, 0);
        assert_eq!(free.first_failure, Some(1));
    }

    #[test]
    fn halving_and_quartering_fail_at_depth_two() {
        let ifs = one_dim(&[(0.5, 0.0), (0.25, 0.0)]);
        let free = free_semigroup_check(&ifs, 6, Arithmetic::ExactDyadic, 10_000).unwrap();
        assert_eq!(free.first_failure, Some(2));
        assert!(free.exact);
        let (a, b) = free.witness.unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn budget_is_enforced() {
        let ifs = one_dim(&[(0.3, 0.0), (0.3, 0.5), (0.3, 0.7)]);
        assert!(matches!(diophantine_gaps(&ifs, 12, 1000), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn ssc_for_cantor_and_touching_intervals() {
        let cantor = one_dim(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]);
        assert!(matches!(ssc_check(&cantor, 6, DEFAULT_WORD_BUDGET).unwrap(), SscStatus::Certified { depth: 1 }));
        let touching = one_dim(&[(0.5, 0.0), (0.5, 0.5)]);
        let st = ssc_check(&touching, 6, DEFAULT_WORD_BUDGET).unwrap();
        assert!(st.is_refuted(), "{st:?}");
        let single = one_dim(&[(0.5, 0.1)]);
        assert!(ssc_check(&single, 3, 10).unwrap().is_certified());
    }

    #[test]
    fn osc_for_touching_intervals() {
        let touching = one_dim(&[(0.5, 0.0), (0.5, 0.5)]);
        let rep = osc_check(&touching, &AxisBox::unit(1), 3).unwrap();
        assert!(rep.is_strong(), "{rep:?}");
        let small = AxisBox::new(vec![0.0], vec![0.4]).unwrap();
        let rep = osc_check(&touching, &small, 3).unwrap();
        assert!(matches!(rep.status, OscStatus::Refuted { .. }));
        let overlapping = one_dim(&[(0.6, 0.0), (0.6, 0.4)]);
        let rep = osc_check(&overlapping, &AxisBox::unit(1), 3).unwrap();
        assert!(matches!(rep.status, OscStatus::Refuted { .. }));
    }

    #[test]
    fn osc_in_the_plane_with_a_shear() {
        let maps = vec![
            AffineMap::new(Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]), vec![0.0, 0.0]).unwrap(),
            AffineMap::new(Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]), vec![0.5, 0.5]).unwrap(),
            AffineMap::new(Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]), vec![0.5, 0.0]).unwrap(),
        ];
        let ifs = AffineIfs::uniform(maps).unwrap();
        assert!(osc_check(&ifs, &AxisBox::unit(2), 3).unwrap().is_strong());
        let sheared = vec![
            AffineMap::new(Matrix::from_rows(&[[0.5, 0.3], [0.0, 0.5]]), vec![0.0, 0.0]).unwrap(),
            AffineMap::new(Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]), vec![0.5, 0.0]).unwrap(),
        ];
        let ifs = AffineIfs::uniform(sheared).unwrap();
        assert!(!osc_check(&ifs, &AxisBox::unit(2), 3).unwrap().is_certified());
    }

    #[test]
    fn proximality_of_diagonal_and_rotation_families() {
        let diag = AffineIfs::uniform(vec![
            AffineMap::linear_only(Matrix::diag(&[0.5, 0.25])),
            AffineMap::new(Matrix::diag(&[0.5, 0.25]), vec![0.5, 0.75]).unwrap(),
        ])
        .unwrap();
        let rep = proximality_check(&diag, Action::Direct, 1, 4000, 1).unwrap();
        assert!(rep.evidence && (rep.gap - 1.0).abs() < 1e-9);
        let rot = AffineIfs::uniform(vec![
            AffineMap::linear_only(Matrix::rotation2(1.0).scale(0.5)),
            AffineMap::new(Matrix::rotation2(2.5).scale(0.5), vec![1.0, 0.0]).unwrap(),
        ])
        .unwrap();
        let rep = proximality_check(&rot, Action::Direct, 1, 4000, 1).unwrap();
        assert!(!rep.evidence, "{rep:?}");
        assert!(proximality_check(&rot, Action::Direct, 2, 100, 1).is_err());
    }

    #[test]
    fn irreducibility_finds_coordinate_axes_and_finite_rotations() {
        let diag = AffineIfs::uniform(vec![
            AffineMap::linear_only(Matrix::diag(&[0.5, 0.25])),
            AffineMap::new(Matrix::diag(&[0.3, 0.6]), vec![0.5, 0.75]).unwrap(),
        ])
        .unwrap();
        assert!(!irreducibility_check(&diag, 1, 20, 3).unwrap().evidence());
        let quarter = AffineIfs::uniform(vec![
            AffineMap::linear_only(Matrix::rotation2(std::f64::consts::FRAC_PI_2).scale(0.5)),
            AffineMap::new(Matrix::diag(&[0.5, 0.5]), vec![1.0, 0.0]).unwrap(),
        ])
        .unwrap();
        let rep = irreducibility_check(&quarter, 1, 20, 3).unwrap();
        assert!(!rep.evidence());
        assert!(rep.invariant_lines.unwrap().len() <= MAX_ORBIT);
        let rot = AffineIfs::uniform(vec![
            AffineMap::linear_only(Matrix::rotation2(1.0).scale(0.5)),
            AffineMap::new(Matrix::rotation2(2.5).scale(0.5), vec![1.0, 0.0]).unwrap(),
        ])
        .unwrap();
        assert!(irreducibility_check(&rot, 1, 20, 3).unwrap().evidence());
    }
}
