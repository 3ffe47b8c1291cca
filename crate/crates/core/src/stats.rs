//! Annotation statistics: label binarization, agreement coefficients,
//! McNemar's matched-pairs test with random disagreement resolution,
//! two-proportion chi-square and Bonferroni-corrected paired t-tests.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reasonability,
    Novelty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    AlwaysLikely,
    SometimesPossible,
    NeverFarfetched,
    InvalidNonsense,
    NewDetailed,
    NewSimple,
    PurelyRepetitive,
}

impl Label {
    pub fn task(self) -> Task {
        use Label::*;
        match self {
            AlwaysLikely | SometimesPossible | NeverFarfetched | InvalidNonsense => Task::Reasonability,
            NewDetailed | NewSimple | PurelyRepetitive => Task::Novelty,
        }
    }

    pub fn is_positive(self) -> bool {
        use Label::*;
        matches!(self, AlwaysLikely | SometimesPossible | NewDetailed | NewSimple)
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
            .map_err(|_| Error::InvalidArgument(format!("unknown annotation label {s:?}")))
    }
}

/// One item judged by two annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedItem {
    pub item_id: String,
    pub label_a: Label,
    pub label_b: Label,
}

/// Map both annotators' labels to positive/negative. All labels must come
/// from the same task's label set.
pub fn binarize(items: &[AnnotatedItem]) -> Result<Vec<(bool, bool)>> {
    let mut task = None;
    for it in items {
        for l in [it.label_a, it.label_b] {
            match task {
                None => task = Some(l.task()),
                Some(t) if t != l.task() => return Err(Error::MixedLabelSets),
                _ => {}
            }
        }
    }
    Ok(items
        .iter()
        .map(|it| (it.label_a.is_positive(), it.label_b.is_positive()))
        .collect())
}

/// 2x2 table of two binary raters: `a` both positive, `b` first only,
/// `c` second only, `d` both negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Contingency {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Contingency {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_pairs(pairs: &[(bool, bool)]) -> Self {
        let mut t = Self::default();
        for &p in pairs {
            match p {
                (true, true) => t.a += 1,
                (true, false) => t.b += 1,
                (false, true) => t.c += 1,
                (false, false) => t.d += 1,
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    fn rates(&self) -> Result<(f64, f64, f64)> {
        let n = self.total();
        if n == 0 {
            return Err(Error::EmptyTable);
        }
        let n = n as f64;
        let observed = (self.a + self.d) as f64 / n;
        let first = (self.a + self.b) as f64 / n;
        let second = (self.a + self.c) as f64 / n;
        Ok((observed, first, second))
    }
}

/// Gwet's AC1 for two raters on binary labels.
pub fn gwet_ac1(t: &Contingency) -> Result<f64> {
    let (pa, p1, p2) = t.rates()?;
    let pi = (p1 + p2) / 2.0;
    let pe = 2.0 * pi * (1.0 - pi);
    Ok((pa - pe) / (1.0 - pe))
}

pub fn cohen_kappa(t: &Contingency) -> Result<f64> {
    let (pa, p1, p2) = t.rates()?;
    let pe = p1 * p2 + (1.0 - p1) * (1.0 - p2);
    if pe >= 1.0 {
        return Err(Error::DegenerateMarginals);
    }
    Ok((pa - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McNemar {
    pub statistic: f64,
    pub p_value: f64,
    /// Items positive for X only.
    pub b: u64,
    /// Items positive for Y only.
    pub c: u64,
    pub n: u64,
    pub discordance: f64,
}

/// McNemar's test without continuity correction on paired (X, Y) outcomes.
pub fn mcnemar(pairs: &[(bool, bool)]) -> Result<McNemar> {
    let t = Contingency::from_pairs(pairs);
    mcnemar_counts(t.b, t.c, t.total())
}

pub fn mcnemar_counts(b: u64, c: u64, n: u64) -> Result<McNemar> {
    if b + c == 0 {
        return Err(Error::NoDiscordantPairs);
    }
    let diff = b as f64 - c as f64;
    let statistic = diff * diff / (b + c) as f64;
    Ok(McNemar {
        statistic,
        p_value: chi2_sf(statistic, 1.0),
        b,
        c,
        n,
        discordance: (b + c) as f64 / n.max(1) as f64,
    })
}

/// Both annotators' binary judgments of one item on the two systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedJudgment {
    pub x: (bool, bool),
    pub y: (bool, bool),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatOutcome {
    pub rate_x: f64,
    pub rate_y: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub repeats: usize,
    pub seed: u64,
    pub alpha: f64,
    pub items: usize,
    pub disagreements: usize,
    pub mean_rate_x: f64,
    pub mean_rate_y: f64,
    pub mean_statistic: f64,
    pub max_p_value: f64,
    pub significant_repeats: usize,
    /// True only when every repeat is significant.
    pub significant: bool,
    pub outcomes: Vec<RepeatOutcome>,
}

fn resolve(pair: (bool, bool), rng: &mut impl Rng) -> bool {
    if pair.0 == pair.1 {
        pair.0
    } else if rng.gen::<bool>() {
        pair.0
    } else {
        pair.1
    }
}

/// Resolve each annotator disagreement to a uniformly chosen annotator,
/// independently per item and per repeat, then run McNemar on the
/// resolved labels. A repeat without discordant pairs counts as not
/// significant (p = 1).
pub fn resolve_and_repeat(
    items: &[PairedJudgment],
    repeats: usize,
    seed: u64,
    alpha: f64,
) -> Result<Resolution> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    if items.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = items.len() as f64;
    let outcomes: Vec<RepeatOutcome> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::seeded_rng(seed, &format!("resolve/{r}"));
            let resolved: Vec<(bool, bool)> = items
                .iter()
                .map(|it| {
                    let x = resolve(it.x, &mut rng);
                    let y = resolve(it.y, &mut rng);
                    (x, y)
                })
                .collect();
            let rate_x = resolved.iter().filter(|p| p.0).count() as f64 / n;
            let rate_y = resolved.iter().filter(|p| p.1).count() as f64 / n;
            let (statistic, p_value) = match mcnemar(&resolved) {
                Ok(m) => (m.statistic, m.p_value),
                Err(_) => (0.0, 1.0),
            };
            RepeatOutcome {
                rate_x,
                rate_y,
                statistic,
                p_value,
                significant: p_value < alpha,
            }
        })
        .collect();
    let reps = repeats as f64;
    let significant_repeats = outcomes.iter().filter(|o| o.significant).count();
    Ok(Resolution {
        repeats,
        seed,
        alpha,
        items: items.len(),
        disagreements: items
            .iter()
            .filter(|it| it.x.0 != it.x.1 || it.y.0 != it.y.1)
            .count(),
        mean_rate_x: outcomes.iter().map(|o| o.rate_x).sum::<f64>() / reps,
        mean_rate_y: outcomes.iter().map(|o| o.rate_y).sum::<f64>() / reps,
        mean_statistic: outcomes.iter().map(|o| o.statistic).sum::<f64>() / reps,
        max_p_value: outcomes.iter().map(|o| o.p_value).fold(0.0, f64::max),
        significant_repeats,
        significant: significant_repeats == repeats,
        outcomes,
    })
}

/// One line of an annotations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub task: Task,
    pub system: System,
    pub annotator: Annotator,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum System {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Annotator {
    A,
    B,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::X => "X",
            System::Y => "Y",
        })
    }
}

/// Annotation tables of one task, keyed by item id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskTables {
    pub x: Vec<AnnotatedItem>,
    pub y: Vec<AnnotatedItem>,
}

/// Group annotation records of `task` into per-system two-annotator
/// tables, sorted by item id. Each (item, system) needs exactly one label
/// per annotator.
pub fn collect_tables(records: &[AnnotationRecord], task: Task) -> Result<TaskTables> {
    let mut cells: BTreeMap<(System, &str), [Option<Label>; 2]> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task == task) {
        if r.label.task() != task {
            return Err(Error::MixedLabelSets);
        }
        let slot = &mut cells.entry((r.system, r.item_id.as_str())).or_default()[r.annotator as usize];
        if slot.replace(r.label).is_some() {
            return Err(Error::InvalidArgument(format!(
                "item {} system {} has two labels from one annotator",
                r.item_id, r.system
            )));
        }
    }
    let mut tables = TaskTables::default();
    for ((system, id), labels) in cells {
        let (Some(a), Some(b)) = (labels[0], labels[1]) else {
            return Err(Error::InvalidArgument(format!(
                "item {id} system {system} lacks a label from one annotator"
            )));
        };
        let item = AnnotatedItem {
            item_id: id.to_string(),
            label_a: a,
            label_b: b,
        };
        match system {
            System::X => tables.x.push(item),
            System::Y => tables.y.push(item),
        }
    }
    Ok(tables)
}

/// Pair the two systems' judgments by item id; both sides must judge the
/// same items.
pub fn pair_systems(tables: &TaskTables) -> Result<Vec<PairedJudgment>> {
    let ids = |v: &[AnnotatedItem]| v.iter().map(|i| i.item_id.clone()).collect::<Vec<_>>();
    if ids(&tables.x) != ids(&tables.y) {
        return Err(Error::InvalidArgument(
            "systems X and Y must be judged on the same items".into(),
        ));
    }
    let x = binarize(&tables.x)?;
    let y = binarize(&tables.y)?;
    Ok(x.into_iter().zip(y).map(|(x, y)| PairedJudgment { x, y }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of equal success proportions across groups,
/// given (successes, trials) per group.
pub fn chi_square_proportions(groups: &[(u64, u64)]) -> Result<ChiSquare> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("need at least two groups".into()));
    }
    for &(k, n) in groups {
        if n == 0 || k > n {
            return Err(Error::InvalidArgument(format!("invalid proportion {k}/{n}")));
        }
    }
    let succ: u64 = groups.iter().map(|g| g.0).sum();
    let total: u64 = groups.iter().map(|g| g.1).sum();
    if succ == 0 || succ == total {
        return Err(Error::DegenerateMarginals);
    }
    let pooled = succ as f64 / total as f64;
    let statistic = groups
        .iter()
        .map(|&(k, n)| {
            let n = n as f64;
            let (e1, e0) = (n * pooled, n * (1.0 - pooled));
            let (o1, o0) = (k as f64, n - k as f64);
            (o1 - e1).powi(2) / e1 + (o0 - e0).powi(2) / e0
        })
        .sum::<f64>();
    let df = (groups.len() - 1) as f64;
    Ok(ChiSquare {
        statistic,
        df,
        p_value: chi2_sf(statistic, df),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub mean_difference: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
}

/// Two-sided paired t-test of `x` against `y`.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<TTest> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired vectors differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let t = mean / (var / n).sqrt();
    let df = n - 1.0;
    let p = student_t_two_sided(t, df);
    Ok(TTest {
        t,
        df,
        mean_difference: mean,
        p_value: p,
        p_adjusted: p,
    })
}

/// Paired t-tests with p-values multiplied by `m` and capped at 1.
/// `m` defaults to the number of comparisons.
pub fn paired_t_bonferroni(pairs: &[(&[f64], &[f64])], m: Option<usize>) -> Result<Vec<TTest>> {
    let m = m.unwrap_or(pairs.len());
    if m == 0 {
        return Err(Error::InvalidArgument("number of comparisons must be at least 1".into()));
    }
    pairs
        .iter()
        .map(|(x, y)| {
            let mut t = paired_t(x, y)?;
            t.p_adjusted = (t.p_value * m as f64).min(1.0);
            Ok(t)
        })
        .collect()
}

// Special functions.

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        return 1.0 - gamma_p_series(a, x);
    }
    // continued fraction (modified Lentz)
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Survival function of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}
