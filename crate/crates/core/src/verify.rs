//! Sandwich harness: fit envelope constants to a table of kernel values and
//! measure two-sided comparability per regime.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::envelopes::{envelope_units, green_shape, select_regime, EnvelopeConfig, Regime};
use crate::error::{Error, Result};
use crate::norm;
use crate::spectral::SpectralModel;
use crate::stable_sim::KernelEstimate;
use crate::thresholds::Classification;

/// A computed kernel value at `(t, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

/// Spread limits per regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeThresholds {
    pub small_time: f64,
    pub large_time: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            small_time: 1e3,
            large_time: 1e2,
        }
    }
}

impl RegimeThresholds {
    pub fn get(&self, regime: Regime) -> f64 {
        if regime.is_large_time() {
            self.large_time
        } else {
            self.small_time
        }
    }
}

/// Comparability statistics of one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub regime: Regime,
    pub n_points: usize,
    /// `min value/lower`; at least 1 when the lower bound holds.
    pub min_ratio_lower: f64,
    /// `max value/upper`; at most 1 when the upper bound holds.
    pub max_ratio_upper: f64,
    /// `max(value/lower) / min(value/upper)`.
    pub spread: f64,
    /// `max upper/lower` over the regime's points.
    pub envelope_ratio: f64,
    /// Points attaining `max value/lower` and `min value/upper`.
    pub worst_points: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl RatioStats {
    pub fn sandwich_holds(&self) -> bool {
        self.min_ratio_lower >= 1.0 - 1e-12 && self.max_ratio_upper <= 1.0 + 1e-12
    }
}

/// Outcome of [`sandwich_check`].
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub stats: Vec<RatioStats>,
    pub constants: crate::envelopes::EnvelopeConstants,
    pub thresholds: RegimeThresholds,
    pub pass: bool,
}

impl VerifyReport {
    pub fn regime(&self, regime: Regime) -> Option<&RatioStats> {
        self.stats.iter().find(|s| s.regime == regime)
    }
}

/// The regime the envelope dispatcher selects at `(t, x, y)`.
pub fn regime_partition(t: f64, x: &[f64], y: &[f64], config: &EnvelopeConfig) -> Result<Regime> {
    select_regime(t, norm(x).min(norm(y)), config)
}

/// Ratio statistics of values against explicit lower/upper envelopes.
pub fn ratio_stats(
    regime: Regime,
    points: &[&ValuePoint],
    lower: &[f64],
    upper: &[f64],
) -> RatioStats {
    let mut max_lo = (f64::MIN, 0);
    let mut min_lo = f64::MAX;
    let mut min_up = (f64::MAX, 0);
    let mut max_up = f64::MIN;
    let mut envelope_ratio = 1.0_f64;
    for (i, p) in points.iter().enumerate() {
        let rl = p.value / lower[i];
        let ru = p.value / upper[i];
        if rl > max_lo.0 {
            max_lo = (rl, i);
        }
        if ru < min_up.0 {
            min_up = (ru, i);
        }
        min_lo = min_lo.min(rl);
        max_up = max_up.max(ru);
        envelope_ratio = envelope_ratio.max(upper[i] / lower[i]);
    }
    let worst = |i: usize| (points[i].t, points[i].x.clone(), points[i].y.clone());
    RatioStats {
        regime,
        n_points: points.len(),
        min_ratio_lower: min_lo,
        max_ratio_upper: max_up,
        spread: max_lo.0 / min_up.0,
        envelope_ratio,
        worst_points: vec![worst(max_lo.1), worst(min_up.1)],
    }
}

fn partition<'a>(
    values: &'a [ValuePoint],
    config: &EnvelopeConfig,
) -> Result<BTreeMap<Regime, Vec<&'a ValuePoint>>> {
    if config.thresholds.classification == Classification::Neither {
        return Err(Error::Config(
            "threshold classification is neither almost increasing nor almost decreasing".into(),
        ));
    }
    let mut groups: BTreeMap<Regime, Vec<&ValuePoint>> = BTreeMap::new();
    for p in values {
        if !(p.value > 0.0) {
            return Err(Error::Precondition(format!(
                "value at (t = {}, x = {:?}, y = {:?}) is not positive",
                p.t, p.x, p.y
            )));
        }
        groups
            .entry(regime_partition(p.t, &p.x, &p.y, config)?)
            .or_default()
            .push(p);
    }
    Ok(groups)
}

fn units(points: &[&ValuePoint], regime: Regime, config: &EnvelopeConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::with_capacity(points.len());
    let mut up = Vec::with_capacity(points.len());
    for p in points {
        let (l, u) = envelope_units(regime, p.t, &p.x, &p.y, config)?;
        lo.push(l);
        up.push(u);
    }
    Ok((lo, up))
}

/// Default safety factor applied to the fitted small-time exponent.
pub const EXPONENT_RELAXATION: f64 = 1.5;
const MIN_EXPONENT: f64 = 1e-3;

/// Tuning of the constant fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Candidate values of `C₀`; the best-scoring one is kept.
    pub c0_ladder: Vec<f64>,
    /// Minimum grid points a regime must hold for a `C₀` candidate to count.
    pub min_points: usize,
    /// The lower exponent is `c·r` and the upper `c/r` for the fitted `c`.
    pub exponent_relaxation: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            c0_ladder: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            min_points: 3,
            exponent_relaxation: EXPONENT_RELAXATION,
        }
    }
}

/// [`fit_constants_with`] at the default relaxation factor 1.5.
pub fn fit_constants(values: &[ValuePoint], config: &EnvelopeConfig) -> Result<EnvelopeConfig> {
    fit_constants_with(values, config, EXPONENT_RELAXATION)
}

/// Fits the small-time exponents and per-regime prefactors to `values`.
///
/// The exponent `c` comes from regressing `ln(value/(shape·(1 ∧ 1/(t g(M)))))`
/// on `t g(m)`; the lower envelope uses `c·relaxation` and the upper
/// `c/relaxation`. Prefactors are then the extremal ratios, so every point
/// satisfies `lower ≤ value ≤ upper` with equality somewhere in each regime.
pub fn fit_constants_with(
    values: &[ValuePoint],
    config: &EnvelopeConfig,
    relaxation: f64,
) -> Result<EnvelopeConfig> {
    if !(relaxation >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "exponent_relaxation",
            value: relaxation,
            reason: "must be at least 1",
        });
    }
    let groups = partition(values, config)?;
    let mut fitted = config.clone();
    if let Some(small) = groups.get(&Regime::SmallTime) {
        let mut xs = Vec::with_capacity(small.len());
        let mut ys = Vec::with_capacity(small.len());
        let mut probe = config.clone();
        probe.constants.c_lower_exp = 0.0;
        probe.constants.c_upper_exp = 0.0;
        for p in small {
            // zero exponents leave the un-damped small-time shape
            let (base, _) = envelope_units(Regime::SmallTime, p.t, &p.x, &p.y, &probe)?;
            let m = norm(&p.x).min(norm(&p.y));
            xs.push(p.t * config.profile.g(m));
            ys.push((p.value / base).ln());
        }
        let spread_x = xs.iter().copied().fold(f64::MIN, f64::max) - xs.iter().copied().fold(f64::MAX, f64::min);
        if xs.len() >= 2 && spread_x > 0.0 {
            let c = (-crate::linear_fit(&xs, &ys).slope).max(MIN_EXPONENT);
            fitted.constants.c_lower_exp = c * relaxation;
            fitted.constants.c_upper_exp = c / relaxation;
        }
    }
    for (&regime, points) in &groups {
        let (lo, up) = units(points, regime, &fitted)?;
        let pref_lo = points.iter().zip(&lo).map(|(p, l)| p.value / l).fold(f64::MAX, f64::min);
        let pref_up = points.iter().zip(&up).map(|(p, u)| p.value / u).fold(f64::MIN, f64::max);
        let pair = fitted.constants.prefactors.get_mut(regime);
        pair.lower = pref_lo;
        // raising the upper constant to the lower one keeps both bounds valid
        pair.upper = pref_up.max(pref_lo);
    }
    fitted.constants.validate()?;
    Ok(fitted)
}

/// Per-regime comparability of `values` against the envelopes of `config`.
pub fn sandwich_check(
    values: &[ValuePoint],
    config: &EnvelopeConfig,
    thresholds: &RegimeThresholds,
) -> Result<VerifyReport> {
    let groups = partition(values, config)?;
    let mut stats = Vec::with_capacity(groups.len());
    for (&regime, points) in &groups {
        let pref = config.constants.prefactors.get(regime);
        let (mut lo, mut up) = units(points, regime, config)?;
        lo.iter_mut().for_each(|v| *v *= pref.lower);
        up.iter_mut().for_each(|v| *v *= pref.upper);
        stats.push(ratio_stats(regime, points, &lo, &up));
    }
    let pass = stats.iter().all(|s| s.spread <= thresholds.get(s.regime));
    Ok(VerifyReport {
        stats,
        constants: config.constants,
        thresholds: *thresholds,
        pass,
    })
}

/// Result of the `C₀` search.
#[derive(Debug, Clone)]
pub struct LadderFit {
    pub config: EnvelopeConfig,
    pub report: VerifyReport,
    pub c0: f64,
    /// `(C₀, max over regimes of spread/threshold)` for every admissible candidate.
    pub scores: Vec<(f64, f64)>,
}

/// Fits constants for every `C₀` on the ladder and keeps the candidate with the
/// smallest worst-regime `spread/threshold`. Candidates leaving some regime with
/// fewer than `min_points` points are skipped.
pub fn fit_with_c0_ladder(
    values: &[ValuePoint],
    config: &EnvelopeConfig,
    options: &FitOptions,
    thresholds: &RegimeThresholds,
) -> Result<LadderFit> {
    let min_points = options.min_points;
    let mut best: Option<(f64, LadderFit)> = None;
    let mut scores = Vec::new();
    for &c0 in &options.c0_ladder {
        let mut candidate = config.clone();
        candidate.constants.c0 = c0;
        candidate.constants.validate()?;
        let groups = partition(values, &candidate)?;
        if groups.values().any(|g| g.len() < min_points) {
            continue;
        }
        let fitted = fit_constants_with(values, &candidate, options.exponent_relaxation)?;
        let report = sandwich_check(values, &fitted, thresholds)?;
        let score = report
            .stats
            .iter()
            .map(|s| s.spread / thresholds.get(s.regime))
            .fold(0.0, f64::max);
        scores.push((c0, score));
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((
                score,
                LadderFit {
                    config: fitted,
                    report,
                    c0,
                    scores: Vec::new(),
                },
            ));
        }
    }
    let (_, mut best) = best.ok_or_else(|| {
        Error::Precondition(format!(
            "no C0 candidate leaves at least {min_points} points in every regime"
        ))
    })?;
    best.scores = scores;
    Ok(best)
}

/// The standard verification grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_times: usize,
    pub points: Vec<f64>,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self {
            t_min: 1e-2,
            t_max: 10.0,
            n_times: 13,
            points: vec![0.0, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0, 8.0, -8.0],
        }
    }
}

impl VerifyGrid {
    pub fn times(&self) -> Vec<f64> {
        crate::geometric_grid(self.t_min, self.t_max, self.n_times)
    }
}

/// Spectral kernel values on `grid × points × points`, at the grid nodes
/// nearest to the requested points.
pub fn spectral_table(model: &SpectralModel, grid: &VerifyGrid) -> Vec<ValuePoint> {
    let nodes: Vec<usize> = grid.points.iter().map(|&x| model.node_index(x)).collect();
    let mut out = Vec::new();
    for t in grid.times() {
        for &i in &nodes {
            for &j in &nodes {
                out.push(ValuePoint {
                    t,
                    x: vec![model.node(i)],
                    y: vec![model.node(j)],
                    value: model.kernel(t, i, j),
                });
            }
        }
    }
    out
}

/// Green-function comparison over node pairs.
#[derive(Debug, Clone, Serialize)]
pub struct GreenReport {
    pub stats: RatioStats,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub branch: crate::envelopes::QBranch,
    pub threshold: f64,
    pub pass: bool,
}

/// Compares `green_from_eigs` with the Green envelope at all pairs of
/// `points` with `sep_min ≤ |x − y| ≤ sep_max`. The envelope prefactors are
/// fitted as extremal ratios, so `spread = (max/min of G/E)²`.
pub fn green_check(
    model: &SpectralModel,
    points: &[f64],
    sep_min: f64,
    sep_max: f64,
    threshold: f64,
) -> Result<GreenReport> {
    let mut seen = std::collections::BTreeSet::new();
    let mut table = Vec::new();
    let mut shapes = Vec::new();
    let mut branch = None;
    for &a in points {
        for &b in points {
            let (i, j) = (model.node_index(a), model.node_index(b));
            let (x, y) = (model.node(i), model.node(j));
            let sep = (x - y).abs();
            if i == j || sep < sep_min - 1e-12 || sep > sep_max + 1e-12 || !seen.insert((i, j)) {
                continue;
            }
            let env = green_shape(&model.profile, model.alpha, &[x], &[y])?;
            branch = Some(env.branch);
            table.push(ValuePoint {
                t: 0.0,
                x: vec![x],
                y: vec![y],
                value: model.green(i, j).0,
            });
            shapes.push(env.value);
        }
    }
    let branch = branch.ok_or_else(|| Error::Precondition("no admissible point pairs".into()))?;
    let refs: Vec<&ValuePoint> = table.iter().collect();
    let ratios: Vec<f64> = table.iter().zip(&shapes).map(|(p, e)| p.value / e).collect();
    let min_ratio = ratios.iter().copied().fold(f64::MAX, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lower: Vec<f64> = shapes.iter().map(|e| e * min_ratio).collect();
    let upper: Vec<f64> = shapes.iter().map(|e| e * max_ratio).collect();
    let stats = ratio_stats(Regime::LargeTimeIncreasing, &refs, &lower, &upper);
    Ok(GreenReport {
        pass: stats.spread <= threshold,
        stats,
        min_ratio,
        max_ratio,
        branch,
        threshold,
    })
}

/// Agreement of Monte Carlo estimates with reference values.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub z_scores: Vec<f64>,
    /// Per point: `|mc − oracle| ≤ 3·stderr + bias`.
    pub within: Vec<bool>,
    pub fraction_within: f64,
    pub pass: bool,
}

/// Passes when at least 95% of points satisfy `|mc − oracle| ≤ 3·stderr + bias`.
pub fn mc_vs_oracle(mc: &KernelEstimate, oracle: &[f64]) -> Result<McReport> {
    if oracle.len() != mc.values.len() {
        return Err(Error::Dimension {
            expected: mc.values.len(),
            found: oracle.len(),
        });
    }
    let mut z_scores = Vec::with_capacity(oracle.len());
    let mut within = Vec::with_capacity(oracle.len());
    for (i, &o) in oracle.iter().enumerate() {
        let diff = mc.values[i] - o;
        z_scores.push(diff / mc.stderrs[i]);
        within.push(diff.abs() <= 3.0 * mc.stderrs[i] + mc.bias_bounds[i]);
    }
    let fraction_within = within.iter().filter(|&&w| w).count() as f64 / within.len().max(1) as f64;
    Ok(McReport {
        z_scores,
        within,
        fraction_within,
        pass: fraction_within >= 0.95,
    })
}
