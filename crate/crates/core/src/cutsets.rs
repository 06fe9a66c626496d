//! Minimal cut-sets of the word tree stopped by a singular value threshold.
//!
//! `Ψ_m(n)` holds the words `u` with `α_m(A_u) ≤ 2^-n < α_m(A_{u'})`, where
//! `u'` drops the last letter of `u`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::svd::ScaledRows;
use crate::exterior::Matrix;
use crate::ifs::AffineIfs;
use crate::random::{keyed_rng, LetterSampler};

pub const DEFAULT_CUTSET_CAP: usize = 10_000_000;

/// The orthogonalized rows are written back every this many letters.
const COMMIT_EVERY: usize = 8;

/// Running product `A_u` along one branch of the word tree.
#[derive(Clone, Debug)]
struct Branch {
    rows: ScaledRows,
    depth: usize,
}

impl Branch {
    fn root(d: usize) -> Self {
        Branch {
            rows: ScaledRows::from_matrix(&Matrix::identity(d)),
            depth: 0,
        }
    }

    /// Appends a letter and returns `log2 α_m` of the new product.
    fn push(&mut self, a: &Matrix, m: usize) -> f64 {
        self.rows.right_multiply(a);
        self.depth += 1;
        let mut ortho = self.rows.clone();
        ortho.orthogonalize(None);
        let alpha = ortho.log2_scales()[m - 1];
        if self.depth % COMMIT_EVERY == 0 {
            self.rows = ortho;
        }
        alpha
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CutWord {
    pub letters: Vec<usize>,
    pub weight: f64,
    pub log2_alpha: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CutSet {
    pub m: usize,
    pub n: u32,
    pub words: Vec<CutWord>,
}

impl CutSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.words.iter().map(|w| w.weight).sum()
    }

    pub fn max_length(&self) -> usize {
        self.words.iter().map(|w| w.letters.len()).max().unwrap_or(0)
    }

    /// Index of the word that is a prefix of `sequence`, if any.
    pub fn prefix_index(&self, sequence: &[usize]) -> Option<usize> {
        self.words
            .binary_search_by(|w| {
                let k = w.letters.len().min(sequence.len());
                w.letters[..k].cmp(&sequence[..k]).then(if w.letters.len() <= sequence.len() {
                    std::cmp::Ordering::Equal
                } else {
                    std::cmp::Ordering::Greater
                })
            })
            .ok()
    }
}

fn check_args(ifs: &AffineIfs, m: usize, n: u32) -> Result<()> {
    if m == 0 || m > ifs.dim() {
        return Err(Error::Precondition(format!(
            "singular value index {m} outside 1..={}",
            ifs.dim()
        )));
    }
    if n == 0 {
        return Err(Error::Precondition("cut-set scale must be at least 1".into()));
    }
    Ok(())
}

/// Enumerates `Ψ_m(n)` depth first in lexicographic order.
pub fn build_cutset(ifs: &AffineIfs, m: usize, n: u32, cap: usize) -> Result<CutSet> {
    check_args(ifs, m, n)?;
    let threshold = -f64::from(n);
    let linear = ifs.linear_parts();
    let probs = ifs.probs();
    let mut words = Vec::new();
    let mut letters = Vec::new();
    // Each frame is a branch whose children are explored in increasing order.
    let mut stack: Vec<(Branch, f64, usize)> = vec![(Branch::root(ifs.dim()), 1.0, 0)];
    while let Some(top) = stack.last_mut() {
        let next_letter = top.2;
        if next_letter == linear.len() {
            stack.pop();
            letters.pop();
            continue;
        }
        top.2 += 1;
        let mut child = top.0.clone();
        let weight = top.1 * probs[next_letter];
        let alpha = child.push(&linear[next_letter], m);
        letters.push(next_letter);
        if alpha <= threshold {
            if words.len() == cap {
                return Err(Error::BudgetExceeded {
                    what: "cut-set size",
                    limit: cap,
                });
            }
            words.push(CutWord {
                letters: letters.clone(),
                weight,
                log2_alpha: alpha,
            });
            letters.pop();
        } else {
            stack.push((child, weight, 0));
        }
    }
    Ok(CutSet { m, n, words })
}

fn descend(ifs: &AffineIfs, m: usize, n: u32, sampler: &LetterSampler, seed: u64, stream: u64) -> Vec<usize> {
    let threshold = -f64::from(n);
    let mut rng = keyed_rng(seed, stream);
    let mut branch = Branch::root(ifs.dim());
    let mut word = Vec::new();
    loop {
        let l = sampler.draw(&mut rng);
        word.push(l);
        if branch.push(&ifs.maps()[l].linear, m) <= threshold {
            return word;
        }
    }
}

/// One draw of the random word `I_m(n)`, built letter by letter.
pub fn sample_cutset_word(ifs: &AffineIfs, m: usize, n: u32, seed: u64) -> Result<Vec<usize>> {
    check_args(ifs, m, n)?;
    Ok(descend(ifs, m, n, &LetterSampler::new(ifs.probs()), seed, 0))
}

/// `count` independent draws of `I_m(n)`; draw `i` uses stream `i`.
pub fn sample_cutset_words(
    ifs: &AffineIfs,
    m: usize,
    n: u32,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    check_args(ifs, m, n)?;
    let sampler = LetterSampler::new(ifs.probs());
    Ok((0..count)
        .into_par_iter()
        .map(|i| descend(ifs, m, n, &sampler, seed, i as u64))
        .collect())
}

/// The random word `U(n)`: `n` i.i.d. letters with law `p`.
pub fn sample_fixed_word(ifs: &AffineIfs, n: usize, seed: u64) -> Vec<usize> {
    let sampler = LetterSampler::new(ifs.probs());
    let mut rng = keyed_rng(seed, 0);
    (0..n).map(|_| sampler.draw(&mut rng)).collect()
}
