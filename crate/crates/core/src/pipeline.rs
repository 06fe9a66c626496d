//! End-to-end commands: spectra, dimension estimates, Furstenberg samples,
//! separation reports, cut-sets, theorem verification and rendering.
//!
//! Every command is a pure function of the IFS, its options and one seed.
//! Sub-seeds are `derive_seed(seed, purpose)` with the purpose strings listed
//! on each command.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::cutsets::{build_cutset, DEFAULT_CUTSET_CAP};
use crate::entropy::{entropy_dimension, EntropySlope, MAX_SCALE, MIN_SCALE, MIN_WINDOW};
use crate::error::{Error, Result};
use crate::exterior::Subspace;
use crate::furstenberg::{
    default_depth, sample_forward_chain, sample_stationary, stationarity_residual, Action, GrassmannSample,
    StationarityResidual,
};
use crate::ifs::{AffineIfs, EmpiricalMeasure};
use crate::lyapunov::{
    lyapunov_dimension, lyapunov_spectrum, random_walk_entropy, rho_threshold, shannon_entropy, Arithmetic,
    DEFAULT_DEDUP_TOL,
};
use crate::random::derive_seed;
use crate::separation::{
    diophantine_gaps, free_semigroup_check, irreducibility_check, osc_check, proximality_check, ssc_check,
    AxisBox, DiophantineReport, FreenessCheck, IrreducibilityReport, OscReport, ProximalityReport, SscStatus,
    DEFAULT_WORD_BUDGET,
};

pub const DEFAULT_TOLERANCE: f64 = 0.1;
pub const DEFAULT_POINT_BUDGET: usize = 20_000_000;
/// Burn-in for forward chains when the exponent gap is too small for boundary draws.
pub const FORWARD_BURN_IN: usize = 64;
const IRREDUCIBILITY_TRIALS: usize = 32;

#[derive(Clone, Debug)]
pub struct Options {
    pub seed: u64,
    /// Steps of the Lyapunov QR chain.
    pub steps: usize,
    /// Sample size for the self-affine measure.
    pub points: usize,
    pub max_points: usize,
    /// Coding depth for samples; defaults to `AffineIfs::default_depth`.
    pub depth: Option<usize>,
    /// Dyadic scales for entropy slopes; chosen from the sample when absent.
    pub window: Option<(i32, i32)>,
    /// Subspaces drawn per grade for projection estimates.
    pub projections: usize,
    /// Word length for the Diophantine, freeness and SSC checks.
    pub separation_depth: usize,
    pub word_budget: usize,
    pub osc_box: Option<AxisBox>,
    pub tolerance: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            seed: 0,
            steps: 100_000,
            points: 1_000_000,
            max_points: DEFAULT_POINT_BUDGET,
            depth: None,
            window: None,
            projections: 4,
            separation_depth: 8,
            word_budget: DEFAULT_WORD_BUDGET,
            osc_box: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub dim: usize,
    pub maps: usize,
    pub seed: u64,
    pub steps: usize,
    pub chi: Vec<f64>,
    pub stderr: Vec<f64>,
    pub shannon_entropy: f64,
    pub lyapunov_dimension: f64,
    /// `ϱ_1, ..., ϱ_d`.
    pub rho: Vec<f64>,
}

impl SpectrumSummary {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "k,chi,stderr,rho")?;
        for k in 0..self.chi.len() {
            writeln!(w, "{},{:.12},{:.12},{:.12}", k + 1, self.chi[k], self.stderr[k], self.rho[k])?;
        }
        Ok(())
    }
}

/// Lyapunov spectrum, `dim_L` and `ϱ_m`. Purpose string: `spectrum`.
pub fn spectrum(ifs: &AffineIfs, opts: &Options) -> Result<SpectrumSummary> {
    let rep = lyapunov_spectrum(ifs, opts.steps, derive_seed(opts.seed, "spectrum"))?;
    let h = shannon_entropy(ifs.probs());
    Ok(SpectrumSummary {
        dim: ifs.dim(),
        maps: ifs.len(),
        seed: opts.seed,
        steps: rep.steps,
        lyapunov_dimension: lyapunov_dimension(&rep.chi, h),
        rho: (1..=ifs.dim()).map(|m| rho_threshold(&rep.chi, m)).collect(),
        chi: rep.chi,
        stderr: rep.stderr,
        shannon_entropy: h,
    })
}

/// Samples `μ`. Purpose string: `measure`.
pub fn sample_measure(ifs: &AffineIfs, opts: &Options) -> Result<EmpiricalMeasure> {
    if opts.points > opts.max_points {
        return Err(Error::BudgetExceeded {
            what: "point cloud size",
            limit: opts.max_points,
        });
    }
    if opts.points == 0 {
        return Err(Error::Precondition("sample size must be positive".into()));
    }
    let depth = opts.depth.unwrap_or_else(|| ifs.default_depth());
    Ok(ifs.sample_measure(opts.points, depth, derive_seed(opts.seed, "measure")))
}

/// Scales from three levels below the largest side of the bounding box
/// upward; the upper end is cut by the slope estimator once cells become sparse.
pub fn auto_window(theta: &EmpiricalMeasure) -> (i32, i32) {
    let d = theta.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in theta.points() {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let side = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let base = if side > 0.0 { (-side.log2()).floor() as i32 } else { 0 };
    let start = (base + 3).clamp(MIN_SCALE, MAX_SCALE - 4);
    (start, (start + 40).min(MAX_SCALE))
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeSummary {
    pub slope: f64,
    /// Least squares standard error of the slope.
    pub stderr: f64,
    pub scales: Vec<i32>,
    pub entropies: Vec<f64>,
}

impl SlopeSummary {
    fn from_slope(s: &EntropySlope) -> Self {
        let n = s.scales.len() as f64;
        let mean = s.scales.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let sxx: f64 = s.scales.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum();
        let sse = s.residual * s.residual * n;
        let stderr = if n > 2.0 && sxx > 0.0 {
            (sse / (n - 2.0) / sxx).sqrt()
        } else {
            0.0
        };
        SlopeSummary {
            slope: s.slope,
            stderr,
            scales: s.scales.clone(),
            entropies: s.entropies.clone(),
        }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "n,H,H_over_n")?;
        for (n, h) in self.scales.iter().zip(&self.entropies) {
            let r = if *n == 0 { f64::NAN } else { h / f64::from(*n) };
            writeln!(w, "{n},{h:.12},{r:.12}")?;
        }
        Ok(())
    }
}

/// Without an explicit window the automatic one is used, and its start is
/// moved down when too few scales survive the sparsity cut.
pub fn estimate_slope(theta: &EmpiricalMeasure, window: Option<(i32, i32)>) -> Result<SlopeSummary> {
    if let Some((lo, hi)) = window {
        return Ok(SlopeSummary::from_slope(&entropy_dimension(theta, lo, hi)?));
    }
    let (lo, hi) = auto_window(theta);
    match entropy_dimension(theta, lo, hi) {
        Err(Error::WindowTooSmall { scales }) if lo - 3 > MIN_SCALE => {
            let shift = (MIN_WINDOW - scales).min(3) as i32;
            Ok(SlopeSummary::from_slope(&entropy_dimension(theta, lo - shift, hi)?))
        }
        other => Ok(SlopeSummary::from_slope(&other?)),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionEstimate {
    pub grade: usize,
    /// Orthonormal basis of `V`, one vector per row.
    pub basis: Vec<Vec<f64>>,
    pub estimate: SlopeSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct DimensionSummary {
    pub points: usize,
    pub seed: u64,
    pub measure: SlopeSummary,
    pub projections: Vec<ProjectionEstimate>,
}

/// Subspaces drawn from `ν_m^*`, by boundary draws when the spectrum has a
/// gap at `m` and by forward chains otherwise. Purpose string: `projections-m`.
pub fn sample_projection_subspaces(
    ifs: &AffineIfs,
    chi: &[f64],
    m: usize,
    count: usize,
    seed: u64,
) -> Result<GrassmannSample> {
    let seed = derive_seed(seed, &format!("projections-{m}"));
    match default_depth(chi, m) {
        Some(n) => {
            let s = sample_stationary(ifs, Action::Adjoint, m, count, n, seed)?;
            if s.len() == count {
                return Ok(s);
            }
            sample_forward_chain(ifs, Action::Adjoint, m, count, FORWARD_BURN_IN, seed)
        }
        None => sample_forward_chain(ifs, Action::Adjoint, m, count, FORWARD_BURN_IN, seed),
    }
}

fn basis_rows(v: &Subspace) -> Vec<Vec<f64>> {
    (0..v.dim()).map(|j| v.basis_vector(j)).collect()
}

fn projection_estimates(
    cloud: &EmpiricalMeasure,
    sample: &GrassmannSample,
    window: Option<(i32, i32)>,
) -> Result<Vec<ProjectionEstimate>> {
    sample
        .subspaces
        .iter()
        .map(|v| {
            Ok(ProjectionEstimate {
                grade: v.dim(),
                basis: basis_rows(v),
                estimate: estimate_slope(&cloud.project(v)?, window)?,
            })
        })
        .collect()
}

/// Entropy slopes of `μ` and of `π_V μ` for `V` drawn from `ν_m^*`,
/// `1 ≤ m < d`. Purpose strings: `measure`, `spectrum`, `projections-m`.
pub fn dimension(ifs: &AffineIfs, opts: &Options) -> Result<(DimensionSummary, EmpiricalMeasure)> {
    let cloud = sample_measure(ifs, opts)?;
    let measure = estimate_slope(&cloud, opts.window)?;
    let mut projections = Vec::new();
    if ifs.dim() > 1 && opts.projections > 0 {
        let chi = spectrum(ifs, opts)?.chi;
        for m in 1..ifs.dim() {
            let sample = sample_projection_subspaces(ifs, &chi, m, opts.projections, opts.seed)?;
            projections.extend(projection_estimates(&cloud, &sample, opts.window)?);
        }
    }
    Ok((
        DimensionSummary {
            points: cloud.len(),
            seed: opts.seed,
            measure,
            projections,
        },
        cloud,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct FurstenbergSummary {
    pub m: usize,
    pub action: Action,
    pub count: usize,
    pub depth: usize,
    pub failures: usize,
    pub forward_chain: bool,
    pub stationarity: StationarityResidual,
}

/// Sample of `ν_m` or `ν_m^*` with its stationarity residual. Purpose strings:
/// `spectrum`, `furstenberg`, `stationarity`.
pub fn furstenberg(
    ifs: &AffineIfs,
    action: Action,
    m: usize,
    count: usize,
    opts: &Options,
) -> Result<(FurstenbergSummary, GrassmannSample)> {
    let chi = spectrum(ifs, opts)?.chi;
    let seed = derive_seed(opts.seed, "furstenberg");
    let sample = match default_depth(&chi, m) {
        Some(n) => sample_stationary(ifs, action, m, count, n, seed)?,
        None => sample_forward_chain(ifs, action, m, count, FORWARD_BURN_IN, seed)?,
    };
    if sample.is_empty() {
        return Err(Error::Precondition("every boundary draw failed the singular gap test".into()));
    }
    let stationarity = stationarity_residual(&sample, ifs, action, derive_seed(opts.seed, "stationarity"))?;
    Ok((
        FurstenbergSummary {
            m,
            action,
            count: sample.len(),
            depth: sample.burn_in,
            failures: sample.failures,
            forward_chain: matches!(sample.provenance, crate::furstenberg::Provenance::ForwardChain),
            stationarity,
        },
        sample,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationSummary {
    pub diophantine: DiophantineReport,
    pub freeness: FreenessCheck,
    pub ssc: SscStatus,
    pub osc: OscReport,
    pub proximality: Vec<ProximalityReport>,
    pub irreducibility: Vec<IrreducibilityReport>,
}

/// Largest `n ≤ wanted` with `|Λ|^n ≤ budget`.
fn affordable_depth(ifs: &AffineIfs, wanted: usize, budget: usize) -> usize {
    let mut n = 0;
    let mut size = 1usize;
    while n < wanted {
        match size.checked_mul(ifs.len()) {
            Some(s) if s <= budget => {
                size = s;
                n += 1;
            }
            _ => break,
        }
    }
    n.max(1)
}

/// Purpose strings: `proximality-m`, `irreducibility-m`.
pub fn separation(ifs: &AffineIfs, opts: &Options) -> Result<SeparationSummary> {
    let depth = affordable_depth(ifs, opts.separation_depth, opts.word_budget);
    let diophantine = diophantine_gaps(ifs, depth, opts.word_budget)?;
    let free_depth = affordable_depth(ifs, opts.separation_depth, opts.word_budget / 2);
    let freeness = free_semigroup_check(
        ifs,
        free_depth,
        Arithmetic::Float { tol: DEFAULT_DEDUP_TOL },
        opts.word_budget,
    )?;
    let ssc = ssc_check(ifs, depth, opts.word_budget)?;
    let unit = AxisBox::unit(ifs.dim());
    let osc = osc_check(ifs, opts.osc_box.as_ref().unwrap_or(&unit), 4)?;
    let mut proximality = Vec::new();
    let mut irreducibility = Vec::new();
    for m in 1..ifs.dim() {
        proximality.push(proximality_check(
            ifs,
            Action::Direct,
            m,
            opts.steps,
            derive_seed(opts.seed, &format!("proximality-{m}")),
        )?);
        irreducibility.push(irreducibility_check(
            ifs,
            m,
            IRREDUCIBILITY_TRIALS,
            derive_seed(opts.seed, &format!("irreducibility-{m}")),
        )?);
    }
    Ok(SeparationSummary {
        diophantine,
        freeness,
        ssc,
        osc,
        proximality,
        irreducibility,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CutsetSummary {
    pub m: usize,
    pub n: u32,
    pub words: usize,
    pub total_weight: f64,
    pub min_length: usize,
    pub max_length: usize,
}

pub fn cutset(ifs: &AffineIfs, m: usize, n: u32, cap: Option<usize>, csv: Option<&mut dyn Write>) -> Result<CutsetSummary> {
    let set = build_cutset(ifs, m, n, cap.unwrap_or(DEFAULT_CUTSET_CAP))?;
    if let Some(w) = csv {
        writeln!(w, "word,weight,log2_alpha")?;
        for cw in &set.words {
            let word: Vec<String> = cw.letters.iter().map(usize::to_string).collect();
            writeln!(w, "{},{:.17e},{:.12}", word.join(" "), cw.weight, cw.log2_alpha)?;
        }
    }
    Ok(CutsetSummary {
        m,
        n,
        words: set.len(),
        total_weight: set.total_weight(),
        min_length: set.words.iter().map(|w| w.letters.len()).min().unwrap_or(0),
        max_length: set.max_length(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    /// `d = 3`, strongly irreducible and proximal, SOSC: `dim μ = dim_L`.
    D3Sosc,
    /// Under the standing assumptions and the ESC, `dim_e π_V μ = min{dim V, dim_L}` for `dim V ≤ 2`.
    LowDimProjections,
    /// Under the standing assumptions and the Diophantine property, `h ≥ ϱ_m` forces full-dimensional `m`-projections.
    FullDimRho,
    /// `dim μ ≤ dim_L` for every system.
    LyapunovUpperBound,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [
        Theorem::D3Sosc,
        Theorem::LowDimProjections,
        Theorem::FullDimRho,
        Theorem::LyapunovUpperBound,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Theorem::D3Sosc => "d3-sosc",
            Theorem::LowDimProjections => "low-dim-projections",
            Theorem::FullDimRho => "full-dim-rho",
            Theorem::LyapunovUpperBound => "lyapunov-upper-bound",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown theorem id `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Passed,
    Failed,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl Hypothesis {
    fn new(name: impl Into<String>, status: CheckStatus, detail: impl Into<String>) -> Self {
        Hypothesis {
            name: name.into(),
            status,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub label: String,
    pub predicted: f64,
    pub estimated: f64,
    pub stderr: f64,
    pub within_tolerance: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    HypothesesUnverified,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub theorem: Theorem,
    pub hypotheses: Vec<Hypothesis>,
    pub comparisons: Vec<Comparison>,
    /// The comparison with the largest deviation.
    pub predicted: f64,
    pub estimated: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub lyapunov_dimension: f64,
    pub verdict: Verdict,
}

impl VerificationReport {
    fn assemble(
        theorem: Theorem,
        hypotheses: Vec<Hypothesis>,
        comparisons: Vec<Comparison>,
        tolerance: f64,
        lyapunov_dimension: f64,
    ) -> Self {
        let worst = comparisons
            .iter()
            .max_by(|a, b| (a.estimated - a.predicted).abs().total_cmp(&(b.estimated - b.predicted).abs()));
        let (predicted, estimated, stderr) = worst.map_or((f64::NAN, f64::NAN, f64::NAN), |c| {
            (c.predicted, c.estimated, c.stderr)
        });
        let verdict = if hypotheses.iter().any(|h| h.status != CheckStatus::Passed) {
            Verdict::HypothesesUnverified
        } else if comparisons.iter().all(|c| c.within_tolerance) {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
        VerificationReport {
            theorem,
            hypotheses,
            comparisons,
            predicted,
            estimated,
            stderr,
            tolerance,
            lyapunov_dimension,
            verdict,
        }
    }
}

fn compare(label: impl Into<String>, predicted: f64, est: &SlopeSummary, tolerance: f64) -> Comparison {
    Comparison {
        label: label.into(),
        predicted,
        estimated: est.slope,
        stderr: est.stderr,
        within_tolerance: (est.slope - predicted).abs() <= tolerance,
    }
}

fn fixed_point_hypothesis(ifs: &AffineIfs) -> Hypothesis {
    match ifs.common_fixed_point() {
        Some(x) => Hypothesis::new(
            "no common fixed point",
            CheckStatus::Failed,
            format!("every map fixes {x:?}, so the attractor is a singleton"),
        ),
        None => Hypothesis::new("no common fixed point", CheckStatus::Passed, "the fixed points differ"),
    }
}

fn irreducible_proximal_hypotheses(ifs: &AffineIfs, grades: &[usize], opts: &Options) -> Result<Vec<Hypothesis>> {
    let mut out = Vec::new();
    for &m in grades {
        let irr = irreducibility_check(
            ifs,
            m,
            IRREDUCIBILITY_TRIALS,
            derive_seed(opts.seed, &format!("irreducibility-{m}")),
        )?;
        out.push(match &irr.invariant_lines {
            Some(lines) => Hypothesis::new(
                format!("{m}-strongly irreducible"),
                CheckStatus::Failed,
                format!("a set of {} lines in the {m}-th exterior power is permuted by every generator", lines.len()),
            ),
            None => Hypothesis::new(
                format!("{m}-strongly irreducible"),
                CheckStatus::Passed,
                format!("no finite invariant union of lines in {} random products", irr.trials),
            ),
        });
        let prox = proximality_check(
            ifs,
            Action::Direct,
            m,
            opts.steps,
            derive_seed(opts.seed, &format!("proximality-{m}")),
        )?;
        out.push(Hypothesis::new(
            format!("{m}-proximal"),
            if prox.evidence { CheckStatus::Passed } else { CheckStatus::Unknown },
            format!("exponent gap {:.6} ± {:.6}", prox.gap, prox.stderr),
        ));
    }
    Ok(out)
}

fn esc_hypotheses(ifs: &AffineIfs, opts: &Options, include_freeness: bool) -> Result<Vec<Hypothesis>> {
    let depth = affordable_depth(ifs, opts.separation_depth, opts.word_budget);
    let gaps = diophantine_gaps(ifs, depth, opts.word_budget)?;
    let zero = gaps.rows.iter().find(|r| r.map_gap.is_finite() && r.map_gap <= 0.0);
    let mut out = vec![match zero {
        Some(r) => Hypothesis::new(
            "Diophantine",
            CheckStatus::Failed,
            format!("distinct maps at distance zero at length {}", r.n),
        ),
        None => Hypothesis::new(
            "Diophantine",
            CheckStatus::Passed,
            format!(
                "gaps positive to length {depth}, rate {}",
                gaps.epsilon.map_or("n/a".into(), |e| format!("{e:.6}"))
            ),
        ),
    }];
    if include_freeness {
        out.push(freeness_hypothesis(ifs, opts)?.0);
    }
    Ok(out)
}

fn freeness_hypothesis(ifs: &AffineIfs, opts: &Options) -> Result<(Hypothesis, FreenessCheck)> {
    let depth = affordable_depth(ifs, opts.separation_depth, opts.word_budget / 2);
    let free = free_semigroup_check(ifs, depth, Arithmetic::Float { tol: DEFAULT_DEDUP_TOL }, opts.word_budget)?;
    let h = match (&free.first_failure, &free.witness) {
        (Some(n), Some((a, b))) => Hypothesis::new(
            "free semigroup",
            CheckStatus::Failed,
            format!("words {a:?} and {b:?} give the same map (length {n})"),
        ),
        _ => Hypothesis::new(
            "free semigroup",
            CheckStatus::Passed,
            format!("all words of length at most {} give distinct maps", free.verified_depth),
        ),
    };
    Ok((h, free))
}

fn sosc_hypothesis(ifs: &AffineIfs, opts: &Options) -> Result<Hypothesis> {
    let depth = affordable_depth(ifs, opts.separation_depth, opts.word_budget);
    if let SscStatus::Certified { depth } = ssc_check(ifs, depth, opts.word_budget)? {
        return Ok(Hypothesis::new(
            "SOSC",
            CheckStatus::Passed,
            format!("strong separation certified with cylinders of depth {depth}"),
        ));
    }
    let unit = AxisBox::unit(ifs.dim());
    let osc = osc_check(ifs, opts.osc_box.as_ref().unwrap_or(&unit), 4)?;
    Ok(if osc.is_strong() {
        Hypothesis::new("SOSC", CheckStatus::Passed, "open set condition certified for the box with an attractor point inside")
    } else {
        Hypothesis::new("SOSC", CheckStatus::Unknown, format!("not certified: {:?}", osc.status))
    })
}

/// Runs the hypothesis checks of `theorem`, estimates the dimensions it
/// predicts and compares them at `opts.tolerance`.
pub fn verify(ifs: &AffineIfs, theorem: Theorem, opts: &Options) -> Result<VerificationReport> {
    let d = ifs.dim();
    let spec = spectrum(ifs, opts)?;
    let dim_l = spec.lyapunov_dimension;
    let tol = opts.tolerance;
    let cloud = sample_measure(ifs, opts)?;
    let all_grades: Vec<usize> = (1..d).collect();
    let mut hyps = Vec::new();
    let mut comps = Vec::new();
    match theorem {
        Theorem::D3Sosc => {
            hyps.push(Hypothesis::new(
                "dimension 3",
                if d == 3 { CheckStatus::Passed } else { CheckStatus::Failed },
                format!("ambient dimension {d}"),
            ));
            hyps.push(fixed_point_hypothesis(ifs));
            if d > 1 {
                hyps.extend(irreducible_proximal_hypotheses(ifs, &[1], opts)?);
            }
            hyps.push(sosc_hypothesis(ifs, opts)?);
            comps.push(compare("dim μ", dim_l, &estimate_slope(&cloud, opts.window)?, tol));
        }
        Theorem::LowDimProjections => {
            hyps.push(fixed_point_hypothesis(ifs));
            hyps.extend(irreducible_proximal_hypotheses(ifs, &all_grades, opts)?);
            hyps.extend(esc_hypotheses(ifs, opts, true)?);
            for m in 1..=d.min(2) {
                let predicted = dim_l.min(m as f64);
                if m == d {
                    comps.push(compare("dim μ", predicted, &estimate_slope(&cloud, opts.window)?, tol));
                } else {
                    let sample = sample_projection_subspaces(ifs, &spec.chi, m, opts.projections, opts.seed)?;
                    for (k, p) in projection_estimates(&cloud, &sample, opts.window)?.iter().enumerate() {
                        comps.push(compare(format!("dim π_V μ, dim V = {m}, draw {k}"), predicted, &p.estimate, tol));
                    }
                }
            }
        }
        Theorem::FullDimRho => {
            hyps.push(fixed_point_hypothesis(ifs));
            hyps.extend(irreducible_proximal_hypotheses(ifs, &all_grades, opts)?);
            hyps.extend(esc_hypotheses(ifs, opts, false)?);
            let (free_h, free) = freeness_hypothesis(ifs, opts)?;
            let (h, source) = if free.first_failure.is_none() {
                (spec.shannon_entropy, format!("H(p), free to length {}", free.verified_depth))
            } else {
                let n = affordable_depth(ifs, opts.separation_depth, opts.word_budget);
                let rw = random_walk_entropy(ifs, n, Arithmetic::Float { tol: DEFAULT_DEDUP_TOL }, opts.word_budget)?;
                (rw.random_walk, format!("H(p^{{*{n}}})/{n}"))
            };
            let qualifying: Vec<usize> = (1..=d).filter(|&m| h >= spec.rho[m - 1]).collect();
            hyps.push(Hypothesis::new(
                "h ≥ ϱ_m for some m",
                match (qualifying.is_empty(), free.first_failure.is_none()) {
                    (true, _) => CheckStatus::Failed,
                    (false, true) => CheckStatus::Passed,
                    (false, false) => CheckStatus::Unknown,
                },
                format!("h = {h:.6} from {source} ({}); grades {qualifying:?}", free_h.detail),
            ));
            for &m in &qualifying {
                if m == d {
                    comps.push(compare("dim μ", d as f64, &estimate_slope(&cloud, opts.window)?, tol));
                } else {
                    let sample = sample_projection_subspaces(ifs, &spec.chi, m, opts.projections, opts.seed)?;
                    for (k, p) in projection_estimates(&cloud, &sample, opts.window)?.iter().enumerate() {
                        comps.push(compare(format!("dim π_V μ, dim V = {m}, draw {k}"), m as f64, &p.estimate, tol));
                    }
                }
            }
        }
        Theorem::LyapunovUpperBound => {
            let est = estimate_slope(&cloud, opts.window)?;
            comps.push(Comparison {
                label: "dim μ ≤ dim_L".into(),
                predicted: dim_l,
                estimated: est.slope,
                stderr: est.stderr,
                within_tolerance: est.slope <= dim_l + tol,
            });
        }
    }
    Ok(VerificationReport::assemble(theorem, hyps, comps, tol, dim_l))
}

/// Grayscale log-density raster of a 1-D or 2-D cloud as binary PGM. A 1-D
/// cloud gives a strip of height 1. The header carries the bounding box.
pub fn render_raster(cloud: &EmpiricalMeasure, resolution: usize) -> Result<Vec<u8>> {
    let d = cloud.dim();
    if d > 2 {
        return Err(Error::DimTooHigh(d));
    }
    if resolution == 0 {
        return Err(Error::Precondition("raster resolution must be positive".into()));
    }
    let (width, height) = (resolution, if d == 2 { resolution } else { 1 });
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in cloud.points() {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let cell = |v: f64, k: usize, n: usize| -> usize {
        let span = hi[k] - lo[k];
        if span > 0.0 {
            (((v - lo[k]) / span * n as f64) as usize).min(n - 1)
        } else {
            0
        }
    };
    let mut mass = vec![0.0f64; width * height];
    for (i, x) in cloud.points().enumerate() {
        let col = cell(x[0], 0, width);
        // Row 0 is the top of the image.
        let row = if d == 2 { height - 1 - cell(x[1], 1, height) } else { 0 };
        mass[row * width + col] += cloud.weight(i);
    }
    let peak = mass.iter().copied().fold(0.0, f64::max);
    let floor = mass.iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
    let levels = (peak / floor).ln();
    let mut out = Vec::new();
    write!(out, "P5\n# bbox")?;
    for k in 0..d {
        write!(out, " {} {}", lo[k], hi[k])?;
    }
    write!(out, "\n{width} {height}\n255\n")?;
    out.extend(mass.iter().map(|&m| {
        if m <= 0.0 {
            0
        } else if levels > 0.0 {
            (1.0 + 254.0 * (m / floor).ln() / levels).round() as u8
        } else {
            255
        }
    }));
    Ok(out)
}

/// CSV with one point per row and columns `x0, x1, ...`.
pub fn write_points_csv(cloud: &EmpiricalMeasure, w: &mut impl Write) -> Result<()> {
    let header: Vec<String> = (0..cloud.dim()).map(|k| format!("x{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for x in cloud.points() {
        let cells: Vec<String> = x.iter().map(f64::to_string).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Samples `μ` and optionally projects it onto the span of the rows of `basis`.
pub fn render_cloud(ifs: &AffineIfs, basis: Option<&[Vec<f64>]>, opts: &Options) -> Result<EmpiricalMeasure> {
    let cloud = sample_measure(ifs, opts)?;
    match basis {
        None => Ok(cloud),
        Some(rows) => cloud.project(&Subspace::span(ifs.dim(), rows)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::Matrix;
    use crate::ifs::AffineMap;

    fn cantor() -> AffineIfs {
        AffineIfs::uniform(vec![
            AffineMap::new(Matrix::from_rows(&[[1.0 / 3.0]]), vec![0.0]).unwrap(),
            AffineMap::new(Matrix::from_rows(&[[1.0 / 3.0]]), vec![2.0 / 3.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn cantor_spectrum_has_closed_form() {
        let s = spectrum(&cantor(), &Options { steps: 1000, ..Options::default() }).unwrap();
        assert!((s.chi[0] + 3f64.log2()).abs() < 1e-12);
        assert!((s.lyapunov_dimension - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn theorem_ids_round_trip() {
        for t in Theorem::ALL {
            assert_eq!(t.id().parse::<Theorem>().unwrap(), t);
        }
        assert!("nope".parse::<Theorem>().is_err());
    }

    #[test]
    fn raster_rejects_three_dimensions_and_strips_one() {
        let c = EmpiricalMeasure::from_points(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(render_raster(&c, 8), Err(Error::DimTooHigh(3))));
        let line = EmpiricalMeasure::from_points(&[vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let img = render_raster(&line, 4).unwrap();
        let text = String::from_utf8_lossy(&img);
        assert!(text.contains("\n4 1\n255\n"));
        assert_eq!(img.len(), text.find("255\n").unwrap() + 4 + 4);
    }

    #[test]
    fn point_budget_is_enforced() {
        let opts = Options { points: 10, max_points: 5, ..Options::default() };
        assert!(matches!(sample_measure(&cantor(), &opts), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn linear_only_system_is_flagged() {
        let ifs = AffineIfs::uniform(vec![
            AffineMap::linear_only(Matrix::from_rows(&[[0.5, 0.1], [0.0, 0.4]])),
            AffineMap::linear_only(Matrix::from_rows(&[[0.3, 0.0], [0.2, 0.5]])),
        ])
        .unwrap();
        let opts = Options { points: 20_000, steps: 2000, projections: 1, ..Options::default() };
        let rep = verify(&ifs, Theorem::LowDimProjections, &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::HypothesesUnverified);
        assert_eq!(rep.hypotheses[0].status, CheckStatus::Failed);
        let est = estimate_slope(&sample_measure(&ifs, &opts).unwrap(), None).unwrap();
        assert_eq!(est.slope, 0.0);
    }
}
