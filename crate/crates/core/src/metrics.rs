//! Agreement and correlation statistics, and the evaluation reports built
//! on them.
//!
//! Reports join judgements to an evaluation manifest, a TSV with one line
//! per judged variant:
//!
//! ```text
//! story_id<TAB>variant_id<TAB>method<TAB>player_locale<TAB>generator_rank
//! ```
//!
//! `method` is `FT`, `MLM` or `YodaLib`; `generator_rank` is the 1-based rank
//! the generator assigned, or `-` for player-written stories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::annotation::{mfg, Grade, JudgementRecord};
use crate::scorers::Locale;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("reliability matrix rows have different lengths")]
    Ragged,
    #[error("no unit has two or more ratings")]
    NoPairableValues,
    #[error("judge `{judge}` rated story `{story}` variant `{variant}` twice")]
    DuplicateRating { judge: String, story: String, variant: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFew(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("story `{story}` variant `{variant}` has no {judge} judgements")]
    MissingJudgements { story: String, variant: String, judge: Locale },
    #[error("unknown alpha metric `{0}`")]
    UnknownMetric(String),
}

/// Units × raters grid of optional grades.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReliabilityMatrix {
    units: Vec<Vec<Option<Grade>>>,
}

impl ReliabilityMatrix {
    pub fn new(units: Vec<Vec<Option<Grade>>>) -> Result<Self, MetricsError> {
        if let Some(first) = units.first() {
            if units.iter().any(|u| u.len() != first.len()) {
                return Err(MetricsError::Ragged);
            }
        }
        if !units.iter().any(|u| u.iter().flatten().count() >= 2) {
            return Err(MetricsError::NoPairableValues);
        }
        Ok(ReliabilityMatrix { units })
    }

    /// Builds a matrix from integers, `None` marking a missing rating.
    /// Panics on grades outside 0..=3.
    pub fn from_values(units: &[&[Option<u8>]]) -> Result<Self, MetricsError> {
        Self::new(
            units
                .iter()
                .map(|u| u.iter().map(|v| v.map(|g| Grade::new(g).expect("grade in 0..=3"))).collect())
                .collect(),
        )
    }

    /// Funniness grades with one unit per judged variant and one rater per
    /// judge, restricted to judges from `judge_country` when given.
    pub fn from_judgements(records: &[JudgementRecord], judge_country: Option<Locale>) -> Result<Self, MetricsError> {
        let records: Vec<_> = records.iter().filter(|r| judge_country.is_none_or(|c| r.judge_country == c)).collect();
        let judges: BTreeSet<&str> = records.iter().map(|r| r.judge_id.as_str()).collect();
        let column: BTreeMap<&str, usize> = judges.iter().enumerate().map(|(i, j)| (*j, i)).collect();
        let mut units: BTreeMap<(&str, &str), Vec<Option<Grade>>> = BTreeMap::new();
        for r in records {
            let row = units.entry((&r.story_id, &r.variant_id)).or_insert_with(|| vec![None; judges.len()]);
            let cell = &mut row[column[r.judge_id.as_str()]];
            if cell.is_some() {
                return Err(MetricsError::DuplicateRating {
                    judge: r.judge_id.clone(),
                    story: r.story_id.clone(),
                    variant: r.variant_id.clone(),
                });
            }
            *cell = Some(r.funniness);
        }
        Self::new(units.into_values().collect())
    }

    pub fn units(&self) -> &[Vec<Option<Grade>>] {
        &self.units
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaMetric {
    #[default]
    Interval,
    Ordinal,
}

impl FromStr for AlphaMetric {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, MetricsError> {
        match s {
            "interval" => Ok(AlphaMetric::Interval),
            "ordinal" => Ok(AlphaMetric::Ordinal),
            other => Err(MetricsError::UnknownMetric(other.to_string())),
        }
    }
}

const LEVELS: usize = 4;

/// Krippendorff's alpha from the coincidence matrix. Units with fewer than
/// two ratings do not contribute. When every pairable value is the same the
/// expected disagreement is zero and alpha is taken to be 1.
pub fn krippendorff_alpha(m: &ReliabilityMatrix, metric: AlphaMetric) -> f64 {
    let mut o = [[0.0f64; LEVELS]; LEVELS];
    for unit in &m.units {
        let values: Vec<usize> = unit.iter().flatten().map(|g| usize::from(g.value())).collect();
        let mu = values.len();
        if mu < 2 {
            continue;
        }
        let w = 1.0 / (mu - 1) as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    o[a][b] += w;
                }
            }
        }
    }
    let nc: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = nc.iter().sum();

    let delta = |c: usize, k: usize| -> f64 {
        match metric {
            AlphaMetric::Interval => {
                let d = c as f64 - k as f64;
                d * d
            }
            AlphaMetric::Ordinal => {
                let (lo, hi) = (c.min(k), c.max(k));
                let s: f64 = nc[lo..=hi].iter().sum::<f64>() - (nc[c] + nc[k]) / 2.0;
                s * s
            }
        }
    };

    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..LEVELS {
        for k in 0..LEVELS {
            let d = delta(c, k);
            d_o += o[c][k] * d;
            d_e += nc[c] * nc[k] * d;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return 1.0;
    }
    1.0 - d_o / d_e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p_two_tailed: f64,
}

impl Correlation {
    pub fn significant(&self) -> bool {
        self.p_two_tailed < 0.05
    }
}

/// Sample Pearson correlation with a two-tailed t-test on n − 2 degrees of
/// freedom.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(MetricsError::TooFew(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_two_tailed = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p_two_tailed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ft,
    Mlm,
    YodaLib,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ft, Method::Mlm, Method::YodaLib];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ft => "FT",
            Method::Mlm => "MLM",
            Method::YodaLib => "YodaLib",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "FT" => Ok(Method::Ft),
            "MLM" => Ok(Method::Mlm),
            "YodaLib" => Ok(Method::YodaLib),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalVariant {
    pub story_id: String,
    pub variant_id: String,
    pub method: Method,
    pub player_locale: Locale,
    pub generator_rank: Option<usize>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<EvalVariant>, MetricsError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| MetricsError::BadManifest { line: i + 1, reason };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(bad(format!("expected 5 tab-separated columns, got {}", cols.len())));
        }
        let method = cols[2].parse().map_err(|m| bad(format!("unknown method `{m}`")))?;
        let player_locale = match cols[3] {
            "IN" => Locale::In,
            "US" => Locale::Us,
            "neutral" => Locale::Neutral,
            other => return Err(bad(format!("unknown locale `{other}`"))),
        };
        let generator_rank = match cols[4] {
            "-" => None,
            r => match r.parse::<usize>() {
                Ok(v) if v >= 1 => Some(v),
                _ => return Err(bad(format!("bad generator rank `{r}`"))),
            },
        };
        if method != Method::Ft && generator_rank.is_none() {
            return Err(bad(format!("{method} variants need a generator rank")));
        }
        if !seen.insert((cols[0].to_string(), cols[1].to_string())) {
            return Err(bad("variant listed twice".into()));
        }
        out.push(EvalVariant {
            story_id: cols[0].to_string(),
            variant_id: cols[1].to_string(),
            method,
            player_locale,
            generator_rank,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selection {
    Top3,
    Top10,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Top3 => "top3",
            Selection::Top10 => "top10",
        })
    }
}

impl FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "top3" => Ok(Selection::Top3),
            "top10" => Ok(Selection::Top10),
            other => Err(other.to_string()),
        }
    }
}

/// Row key of the evaluation tables.
pub type Group = (Method, Locale);

const JUDGE_LOCALES: [Locale; 2] = [Locale::In, Locale::Us];

/// Funniness grades per variant, split by judge country.
struct GradeIndex<'a> {
    by_variant: BTreeMap<(String, String, Locale), Vec<&'a JudgementRecord>>,
}

impl<'a> GradeIndex<'a> {
    fn new(judgements: &'a [JudgementRecord]) -> Self {
        let mut by_variant: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for j in judgements {
            by_variant.entry((j.story_id.clone(), j.variant_id.clone(), j.judge_country)).or_default().push(j);
        }
        GradeIndex { by_variant }
    }

    fn records(&self, v: &EvalVariant, judge: Locale) -> &[&'a JudgementRecord] {
        self.by_variant.get(&(v.story_id.clone(), v.variant_id.clone(), judge)).map_or(&[], Vec::as_slice)
    }

    fn mfg(&self, v: &EvalVariant, judge: Locale) -> Result<f64, MetricsError> {
        let grades: Vec<Grade> = self.records(v, judge).iter().map(|r| r.funniness).collect();
        mfg(&grades).map_err(|_| MetricsError::MissingJudgements {
            story: v.story_id.clone(),
            variant: v.variant_id.clone(),
            judge,
        })
    }
}

fn groups(manifest: &[EvalVariant]) -> BTreeMap<Group, BTreeMap<&str, Vec<&EvalVariant>>> {
    let mut out: BTreeMap<Group, BTreeMap<&str, Vec<&EvalVariant>>> = BTreeMap::new();
    for v in manifest {
        out.entry((v.method, v.player_locale)).or_default().entry(&v.story_id).or_default().push(v);
    }
    out
}

/// MFGs of the variants a selection keeps for one story, or `None` when
/// the selection does not apply to the method.
fn selected_mfgs(
    method: Method,
    variants: &[&EvalVariant],
    selection: Selection,
    index: &GradeIndex,
    judge: Locale,
) -> Result<Option<Vec<f64>>, MetricsError> {
    let ranked_within = |limit: usize| -> Vec<&EvalVariant> {
        variants.iter().copied().filter(|v| v.generator_rank.is_some_and(|r| r <= limit)).collect()
    };
    let mfgs =
        |vs: &[&EvalVariant]| -> Result<Vec<f64>, MetricsError> { vs.iter().map(|v| index.mfg(v, judge)).collect() };
    Ok(match (method, selection) {
        (Method::Ft, Selection::Top3) => Some(mfgs(variants)?),
        (Method::Ft, Selection::Top10) => None,
        (Method::Mlm, Selection::Top3) => Some(mfgs(&ranked_within(3))?),
        (Method::Mlm | Method::YodaLib, Selection::Top10) => Some(mfgs(&ranked_within(10))?),
        (Method::YodaLib, Selection::Top3) => {
            let mut scored = mfgs(&ranked_within(10))?;
            scored.sort_by(|a, b| b.total_cmp(a));
            scored.truncate(3);
            Some(scored)
        }
    })
}

/// Mean over stories of the mean MFG of each story's selected variants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MfgReport {
    /// Absent cells are `None`.
    pub cells: BTreeMap<(Group, Locale, Selection), Option<f64>>,
}

impl MfgReport {
    pub fn cell(&self, method: Method, player: Locale, judge: Locale, selection: Selection) -> Option<f64> {
        self.cells.get(&((method, player), judge, selection)).copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,player_locale,IN_top3,IN_top10,US_top3,US_top10\n");
        let rows: BTreeSet<Group> = self.cells.keys().map(|(g, _, _)| *g).collect();
        for (method, player) in rows {
            let mut line = format!("{method},{player}");
            for judge in JUDGE_LOCALES {
                for sel in [Selection::Top3, Selection::Top10] {
                    match self.cell(method, player, judge, sel) {
                        Some(v) => line.push_str(&format!(",{v:.4}")),
                        None => line.push_str(",-"),
                    }
                }
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

pub fn mfg_report(judgements: &[JudgementRecord], manifest: &[EvalVariant]) -> Result<MfgReport, MetricsError> {
    let index = GradeIndex::new(judgements);
    let mut report = MfgReport::default();
    for ((method, player), stories) in groups(manifest) {
        for judge in JUDGE_LOCALES {
            let judged = stories.values().flatten().any(|v| !index.records(v, judge).is_empty());
            for sel in [Selection::Top3, Selection::Top10] {
                if !judged {
                    report.cells.insert(((method, player), judge, sel), None);
                    continue;
                }
                let mut story_means = Vec::new();
                let mut applies = false;
                for variants in stories.values() {
                    if let Some(m) = selected_mfgs(method, variants, sel, &index, judge)? {
                        applies = true;
                        if !m.is_empty() {
                            story_means.push(m.iter().sum::<f64>() / m.len() as f64);
                        }
                    }
                }
                let cell = (applies && !story_means.is_empty())
                    .then(|| story_means.iter().sum::<f64>() / story_means.len() as f64);
                report.cells.insert(((method, player), judge, sel), cell);
            }
        }
    }
    Ok(report)
}

/// One Table-4 cell: a correlation or the reason it is undefined.
pub type CorrelationCell = Result<Correlation, MetricsError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub method: Method,
    pub player_locale: Locale,
    pub judge_locale: Locale,
    pub variants: usize,
    pub coherence: CorrelationCell,
    pub incongruity: CorrelationCell,
    pub deviation: CorrelationCell,
}

fn format_cell(cell: &CorrelationCell) -> String {
    match cell {
        Ok(c) => format!("{:.4},{:.4},{}", c.r, c.p_two_tailed, if c.significant() { "yes" } else { "no" }),
        Err(MetricsError::ZeroVariance) => "undefined (zero variance),,".into(),
        Err(MetricsError::TooFew(_)) => "undefined (too few variants),,".into(),
        Err(e) => format!("undefined ({e}),,"),
    }
}

pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut out = String::from(
        "method,player_locale,judge_locale,variants,coh_r,coh_p,coh_sig,inc_r,inc_p,inc_sig,dev_r,dev_p,dev_sig\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            r.player_locale,
            r.judge_locale,
            r.variants,
            format_cell(&r.coherence),
            format_cell(&r.incongruity),
            format_cell(&r.deviation)
        ));
    }
    out
}

/// Correlates variant-level mean coherence, incongruity (no = 0, yes = 1)
/// and deviation with MFG, per method, player locale and judge locale.
pub fn correlation_report(judgements: &[JudgementRecord], manifest: &[EvalVariant]) -> Vec<CorrelationRow> {
    let index = GradeIndex::new(judgements);
    let mut rows = Vec::new();
    for ((method, player), stories) in groups(manifest) {
        for judge in JUDGE_LOCALES {
            let mut cols: [Vec<f64>; 4] = Default::default();
            for v in stories.values().flatten() {
                let recs = index.records(v, judge);
                if recs.is_empty() {
                    continue;
                }
                let n = recs.len() as f64;
                let mean = |f: &dyn Fn(&JudgementRecord) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / n;
                cols[0].push(mean(&|r| f64::from(r.funniness.value())));
                cols[1].push(mean(&|r| f64::from(r.coherence.value())));
                cols[2].push(mean(&|r| if r.incongruity { 1.0 } else { 0.0 }));
                cols[3].push(mean(&|r| f64::from(r.deviation.value())));
            }
            if cols[0].is_empty() {
                continue;
            }
            rows.push(CorrelationRow {
                method,
                player_locale: player,
                judge_locale: judge,
                variants: cols[0].len(),
                coherence: pearson_r(&cols[1], &cols[0]),
                incongruity: pearson_r(&cols[2], &cols[0]),
                deviation: pearson_r(&cols[3], &cols[0]),
            });
        }
    }
    rows
}

/// Per-story MFG under the given selection, one row per story, method,
/// player locale and judge locale with judgements.
pub fn per_story_csv(
    judgements: &[JudgementRecord],
    manifest: &[EvalVariant],
    selection: Selection,
) -> Result<String, MetricsError> {
    let index = GradeIndex::new(judgements);
    let mut out = String::from("story_id,method,player_locale,judge_locale,mfg\n");
    let mut rows = BTreeMap::new();
    for ((method, player), stories) in groups(manifest) {
        for (story, variants) in stories {
            for judge in JUDGE_LOCALES {
                if variants.iter().all(|v| index.records(v, judge).is_empty()) {
                    continue;
                }
                if let Some(m) = selected_mfgs(method, &variants, selection, &index, judge)? {
                    if !m.is_empty() {
                        rows.insert((story, method, player, judge), m.iter().sum::<f64>() / m.len() as f64);
                    }
                }
            }
        }
    }
    for ((story, method, player, judge), v) in rows {
        out.push_str(&format!("{story},{method},{player},{judge},{v:.4}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::HumorLabel;

    /// Pairwise form of alpha with the interval metric: observed
    /// disagreement over ordered within-unit pairs, expected over all
    /// ordered pairs of pairable values.
    fn pairwise_interval_alpha(units: &[&[Option<u8>]]) -> f64 {
        let pairable: Vec<Vec<f64>> = units
            .iter()
            .map(|u| u.iter().flatten().map(|&v| f64::from(v)).collect::<Vec<_>>())
            .filter(|u| u.len() >= 2)
            .collect();
        let all: Vec<f64> = pairable.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mut d_o = 0.0;
        for u in &pairable {
            let mut s = 0.0;
            for (i, a) in u.iter().enumerate() {
                for (j, b) in u.iter().enumerate() {
                    if i != j {
                        s += (a - b).powi(2);
                    }
                }
            }
            d_o += s / (u.len() - 1) as f64;
        }
        d_o /= n;
        let mut d_e = 0.0;
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                if i != j {
                    d_e += (a - b).powi(2);
                }
            }
        }
        d_e /= n * (n - 1.0);
        1.0 - d_o / d_e
    }

    #[test]
    fn perfect_agreement_is_one() {
        let m = ReliabilityMatrix::from_values(&[
            &[Some(1), Some(1)],
            &[Some(0), Some(0)],
            &[Some(3), Some(3)],
            &[Some(2), Some(2)],
        ])
        .unwrap();
        assert_eq!(krippendorff_alpha(&m, AlphaMetric::Interval), 1.0);
        assert_eq!(krippendorff_alpha(&m, AlphaMetric::Ordinal), 1.0);
    }

    #[test]
    fn maximal_disagreement_matches_pairwise_form() {
        let units: [&[Option<u8>]; 2] = [&[Some(0), Some(3)], &[Some(3), Some(0)]];
        let m = ReliabilityMatrix::from_values(&units).unwrap();
        let alpha = krippendorff_alpha(&m, AlphaMetric::Interval);
        assert!(alpha < 0.0);
        assert!((alpha - pairwise_interval_alpha(&units)).abs() < 1e-9);
    }

    #[test]
    fn identical_values_define_alpha_as_one() {
        let m = ReliabilityMatrix::from_values(&[&[Some(2), Some(2)], &[Some(2), None]]).unwrap();
        assert_eq!(krippendorff_alpha(&m, AlphaMetric::Interval), 1.0);
    }

    #[test]
    fn rejects_unpairable_matrices() {
        assert_eq!(
            ReliabilityMatrix::from_values(&[&[Some(1), None], &[None, Some(2)]]).unwrap_err(),
            MetricsError::NoPairableValues
        );
        assert_eq!(ReliabilityMatrix::from_values(&[&[Some(1), Some(1)], &[None]]).unwrap_err(), MetricsError::Ragged);
    }

    #[test]
    fn pearson_extremes_and_errors() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson_r(&x, &up).unwrap().r, 1.0);
        assert_eq!(pearson_r(&x, &down).unwrap().r, -1.0);
        assert_eq!(pearson_r(&x, &[1.0; 4]).unwrap_err(), MetricsError::ZeroVariance);
        assert_eq!(pearson_r(&x, &[1.0; 3]).unwrap_err(), MetricsError::LengthMismatch(4, 3));
        assert_eq!(pearson_r(&x[..2], &up[..2]).unwrap_err(), MetricsError::TooFew(2));
    }

    #[test]
    fn pearson_p_value_for_known_case() {
        // Reference p from scipy.stats.pearsonr on the same data.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let y = [2.0, 1.0, 4.0, 3.0, 7.0, 5.0, 6.0, 9.0, 10.0, 8.0];
        let c = pearson_r(&x, &y).unwrap();
        let sx: f64 = x.iter().map(|v| (v - 5.5f64).powi(2)).sum();
        let sy: f64 = y.iter().map(|v| (v - 5.5f64).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - 5.5) * (b - 5.5)).sum();
        assert!((c.r - sxy / (sx * sy).sqrt()).abs() < 1e-12);
        assert!((c.p_two_tailed - 0.000_343_612_197_763_282_56).abs() < 1e-9);
        assert!(c.significant());
    }

    fn judgement(story: &str, variant: &str, judge: &str, country: Locale, grade: u8) -> JudgementRecord {
        JudgementRecord {
            story_id: story.into(),
            variant_id: variant.into(),
            judge_id: judge.into(),
            judge_country: country,
            funniness: Grade::new(grade).unwrap(),
            coherence: Grade::new(grade).unwrap(),
            deviation: Grade::new(0).unwrap(),
            incongruity: false,
            word_labels: BTreeMap::from([(0, HumorLabel::Funny)]),
            verification_passed: true,
            time_spent_sec: 300.0,
        }
    }

    fn variant(story: &str, id: &str, method: Method, locale: Locale, rank: Option<usize>) -> EvalVariant {
        EvalVariant {
            story_id: story.into(),
            variant_id: id.into(),
            method,
            player_locale: locale,
            generator_rank: rank,
        }
    }

    #[test]
    fn single_variant_cell_is_its_mfg() {
        let js: Vec<_> = (0..5).map(|i| judgement("s", "0", &format!("j{i}"), Locale::In, 2)).collect();
        let manifest = [variant("s", "0", Method::Ft, Locale::In, None)];
        let r = mfg_report(&js, &manifest).unwrap();
        assert_eq!(r.cell(Method::Ft, Locale::In, Locale::In, Selection::Top3), Some(2.0));
        assert_eq!(r.cell(Method::Ft, Locale::In, Locale::In, Selection::Top10), None);
        assert_eq!(r.cell(Method::Ft, Locale::In, Locale::Us, Selection::Top3), None);
    }

    #[test]
    fn yodalib_top3_selects_by_judge_mfg() {
        let mut js = Vec::new();
        let mut manifest = Vec::new();
        // Generator rank runs opposite to judge MFG so the two selections differ.
        for i in 0..10 {
            let id = i.to_string();
            manifest.push(variant("s", &id, Method::YodaLib, Locale::Us, Some(10 - i)));
            // Grades averaging (i + 1) / 10: i + 1 judges give 1, the rest 0.
            for j in 0..10 {
                js.push(judgement("s", &id, &format!("j{j}"), Locale::Us, u8::from(j <= i)));
            }
        }
        let r = mfg_report(&js, &manifest).unwrap();
        let top3 = r.cell(Method::YodaLib, Locale::Us, Locale::Us, Selection::Top3).unwrap();
        assert!((top3 - 0.9).abs() < 1e-12);
        let top10 = r.cell(Method::YodaLib, Locale::Us, Locale::Us, Selection::Top10).unwrap();
        assert!((top10 - 0.55).abs() < 1e-12);
    }

    #[test]
    fn missing_judgements_error() {
        let js = vec![judgement("s", "0", "j", Locale::In, 1)];
        let manifest = [
            variant("s", "0", Method::Mlm, Locale::Neutral, Some(1)),
            variant("s", "1", Method::Mlm, Locale::Neutral, Some(2)),
        ];
        assert!(matches!(mfg_report(&js, &manifest), Err(MetricsError::MissingJudgements { .. })));
    }

    #[test]
    fn correlation_grid() {
        let mut js = Vec::new();
        let mut manifest = Vec::new();
        for i in 0..4u8 {
            let id = i.to_string();
            manifest.push(variant("s", &id, Method::Ft, Locale::In, None));
            js.push(judgement("s", &id, "a", Locale::In, i));
        }
        let rows = correlation_report(&js, &manifest);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].coherence.as_ref().unwrap().r, 1.0);
        assert_eq!(rows[0].incongruity, Err(MetricsError::ZeroVariance));
        let csv = correlation_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().contains("undefined (zero variance)"));
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 13);
    }

    #[test]
    fn per_story_rows() {
        let manifest = [
            variant("a", "0", Method::Ft, Locale::In, None),
            variant("a", "1", Method::Mlm, Locale::Neutral, Some(1)),
            variant("b", "0", Method::Ft, Locale::In, None),
            variant("b", "1", Method::Mlm, Locale::Neutral, Some(1)),
        ];
        let js = vec![
            judgement("a", "0", "j", Locale::In, 3),
            judgement("a", "0", "k", Locale::In, 2),
            judgement("a", "1", "j", Locale::In, 0),
            judgement("b", "0", "j", Locale::In, 1),
            judgement("b", "1", "j", Locale::In, 1),
        ];
        let csv = per_story_csv(&js, &manifest, Selection::Top3).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("a,FT,IN,IN,2.5000\n"));
        assert_eq!(per_story_csv(&[], &manifest, Selection::Top3).unwrap().lines().count(), 1);
    }

    #[test]
    fn manifest_parsing() {
        let m = parse_manifest("s\t0\tFT\tIN\t-\ns\t1\tYodaLib\tUS\t1\n").unwrap();
        assert_eq!(m[1].generator_rank, Some(1));
        assert!(parse_manifest("s\t0\tMLM\tneutral\t-\n").is_err());
        assert!(parse_manifest("s\t0\tGPT\tIN\t1\n").is_err());
        assert!(parse_manifest("s\t0\tFT\tIN\t-\ns\t0\tFT\tIN\t-\n").is_err());
    }

    #[test]
    fn matrix_from_judgements() {
        let js = vec![
            judgement("s", "0", "a", Locale::In, 1),
            judgement("s", "0", "b", Locale::In, 1),
            judgement("s", "1", "a", Locale::Us, 2),
        ];
        let m = ReliabilityMatrix::from_judgements(&js, Some(Locale::In)).unwrap();
        assert_eq!(m.units().len(), 1);
        let all = ReliabilityMatrix::from_judgements(&js, None).unwrap();
        assert_eq!(all.units().len(), 2);
        let dup = vec![js[0].clone(), js[0].clone()];
        assert!(matches!(ReliabilityMatrix::from_judgements(&dup, None), Err(MetricsError::DuplicateRating { .. })));
    }
}
