//! Answer-quality metrics: BLEU, averaged ROUGE and six formula-specific rates.

pub mod judges;
pub mod overlap;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use judges::{Always, CoherenceJudge, FactOracle, Glossary, HallucinationJudge, KgJudge, LlmJudge, ProfessionalismJudge};
pub use overlap::{bleu, rouge_s};

use crate::clients::stub::split_herb_item;
use crate::corpus::FormulaRecord;
use crate::taxonomy::{Category, Role};
use crate::text::{normalize_name, sections, split_sentences};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The metric has no defined value for this item; suites skip it.
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("rule table line {line}: {message}")]
    Rules { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub const BUNDLED_INCOMPATIBLE: &str = include_str!("../../data/rules/incompatible.tsv");
pub const BUNDLED_ANTAGONISTIC: &str = include_str!("../../data/rules/antagonistic.tsv");

/// Forbidden herb pairs, stored as normalised names sorted within each pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    pub incompatible_pairs: BTreeSet<(String, String)>,
    pub antagonistic_pairs: BTreeSet<(String, String)>,
}

fn pair_key(a: &str, b: &str) -> Result<(String, String), String> {
    let (a, b) = (normalize_name(a), normalize_name(b));
    if a.is_empty() || b.is_empty() {
        return Err("empty herb name".into());
    }
    if a == b {
        return Err(format!("self-pair {a:?}"));
    }
    Ok(if a < b { (a, b) } else { (b, a) })
}

/// Parses `herbA<TAB>herbB` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeSet<(String, String)>, MetricsError> {
    let mut out = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| MetricsError::Rules { line: i + 1, message };
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected two tab-separated names".into()));
        };
        out.insert(pair_key(a, b).map_err(err)?);
    }
    Ok(out)
}

impl RuleTable {
    pub fn parse(incompatible: &str, antagonistic: &str) -> Result<Self, MetricsError> {
        Ok(Self { incompatible_pairs: parse_pairs(incompatible)?, antagonistic_pairs: parse_pairs(antagonistic)? })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_INCOMPATIBLE, BUNDLED_ANTAGONISTIC).expect("bundled rule tables parse")
    }

    pub fn load(incompatible: &std::path::Path, antagonistic: &std::path::Path) -> Result<Self, MetricsError> {
        let read = |p: &std::path::Path| {
            std::fs::read_to_string(p).map_err(|source| MetricsError::Io { path: p.to_path_buf(), source })
        };
        Self::parse(&read(incompatible)?, &read(antagonistic)?)
    }

    pub fn add_incompatible(&mut self, a: &str, b: &str) -> Result<(), MetricsError> {
        let k = pair_key(a, b).map_err(MetricsError::InvalidInput)?;
        self.incompatible_pairs.insert(k);
        Ok(())
    }

    pub fn add_antagonistic(&mut self, a: &str, b: &str) -> Result<(), MetricsError> {
        let k = pair_key(a, b).map_err(MetricsError::InvalidInput)?;
        self.antagonistic_pairs.insert(k);
        Ok(())
    }

    pub fn forbids(&self, a: &str, b: &str) -> bool {
        pair_key(a, b).is_ok_and(|k| self.incompatible_pairs.contains(&k) || self.antagonistic_pairs.contains(&k))
    }
}

/// 1 − violations / C(n, 2) over the distinct normalised herbs. A single herb scores 1.
pub fn ccr<S: AsRef<str>>(herbs: &[S], rules: &RuleTable) -> Result<f64, MetricsError> {
    let set: BTreeSet<String> =
        herbs.iter().map(|h| normalize_name(h.as_ref())).filter(|h| !h.is_empty()).collect();
    if set.is_empty() {
        return Err(MetricsError::InvalidInput("no herbs".into()));
    }
    let v: Vec<&String> = set.iter().collect();
    let n = v.len();
    if n == 1 {
        return Ok(1.0);
    }
    let mut violations = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if rules.forbids(v[i], v[j]) {
                violations += 1;
            }
        }
    }
    Ok(1.0 - violations as f64 / (n * (n - 1) / 2) as f64)
}

/// Herb sets per role. Names are normalised.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub sovereign: BTreeSet<String>,
    pub minister: BTreeSet<String>,
    pub assistant: BTreeSet<String>,
    pub courier: BTreeSet<String>,
}

impl RoleAssignment {
    pub fn get(&self, role: Role) -> Option<&BTreeSet<String>> {
        match role {
            Role::Sovereign => Some(&self.sovereign),
            Role::Minister => Some(&self.minister),
            Role::Assistant => Some(&self.assistant),
            Role::Courier => Some(&self.courier),
            Role::Unassigned => None,
        }
    }

    fn get_mut(&mut self, role: Role) -> Option<&mut BTreeSet<String>> {
        match role {
            Role::Sovereign => Some(&mut self.sovereign),
            Role::Minister => Some(&mut self.minister),
            Role::Assistant => Some(&mut self.assistant),
            Role::Courier => Some(&mut self.courier),
            Role::Unassigned => None,
        }
    }

    /// Adds `herb` under `role` unless it already holds another role.
    pub fn insert(&mut self, role: Role, herb: &str) -> bool {
        let h = normalize_name(herb);
        if h.is_empty() || Role::ASSIGNED.iter().any(|&r| r != role && self.get(r).is_some_and(|s| s.contains(&h))) {
            return false;
        }
        self.get_mut(role).is_some_and(|s| s.insert(h))
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (i, &a) in Role::ASSIGNED.iter().enumerate() {
            for &b in &Role::ASSIGNED[i + 1..] {
                if let Some(h) = self.get(a).unwrap().intersection(self.get(b).unwrap()).next() {
                    return Err(MetricsError::InvalidInput(format!("{h:?} holds two roles")));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        Role::ASSIGNED.iter().all(|&r| self.get(r).is_some_and(|s| s.is_empty()))
    }

    pub fn from_record(rec: &FormulaRecord) -> Self {
        let mut out = Self::default();
        for i in &rec.herbal_ingredients {
            out.insert(i.role, &i.name);
        }
        out
    }

    /// Role-annotated items (`Name (role, ...)`) of the herbal section.
    pub fn from_text(response: &str) -> Self {
        let mut out = Self::default();
        for (name, role) in herb_items(response) {
            if let Some(r) = role {
                out.insert(r, &name);
            }
        }
        out
    }
}

fn herb_items(response: &str) -> Vec<(String, Option<Role>)> {
    sections(response)
        .into_iter()
        .filter(|s| Category::from_title(&s.header) == Some(Category::HerbalIngredient))
        .flat_map(|s| {
            s.body
                .split([';', '；'])
                .map(split_herb_item)
                .filter(|(n, _)| !n.is_empty())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Herb names listed in the herbal section of a response.
pub fn herbs_in_text(response: &str) -> Vec<String> {
    herb_items(response).into_iter().map(|(n, _)| n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w_s: f64,
    pub w_mi: f64,
    pub w_a: f64,
    pub w_me: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self { w_s: 0.25, w_mi: 0.25, w_a: 0.25, w_me: 0.25 }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let ws = [self.w_s, self.w_mi, self.w_a, self.w_me];
        if ws.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(MetricsError::InvalidWeights(format!("weights must lie in [0,1]: {ws:?}")));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MetricsError::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(())
    }

    fn of(&self, role: Role) -> f64 {
        match role {
            Role::Sovereign => self.w_s,
            Role::Minister => self.w_mi,
            Role::Assistant => self.w_a,
            Role::Courier => self.w_me,
            Role::Unassigned => 0.0,
        }
    }
}

/// Score of a role whose reference set is empty.
pub const EMPTY_REFERENCE_ROLE_SCORE: f64 = 1.0;

pub fn cscr(predicted: &RoleAssignment, reference: &RoleAssignment, weights: &MetricWeights) -> Result<f64, MetricsError> {
    cscr_with(predicted, reference, weights, EMPTY_REFERENCE_ROLE_SCORE)
}

/// Σ w_role · |pred ∩ ref| / |ref|, with `empty_role_score` for empty reference roles.
pub fn cscr_with(
    predicted: &RoleAssignment,
    reference: &RoleAssignment,
    weights: &MetricWeights,
    empty_role_score: f64,
) -> Result<f64, MetricsError> {
    weights.validate()?;
    if reference.is_empty() {
        return Err(MetricsError::Undefined("reference assigns no roles".into()));
    }
    let mut total = 0.0;
    for role in Role::ASSIGNED {
        let r = reference.get(role).unwrap();
        let p = predicted.get(role).unwrap();
        let rate = if r.is_empty() { empty_role_score } else { p.intersection(r).count() as f64 / r.len() as f64 };
        total += weights.of(role) * rate;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// 1 − hallucinated / total.
pub fn cchr<S: AsRef<str>>(responses: &[S], judge: &dyn HallucinationJudge) -> Result<f64, MetricsError> {
    if responses.is_empty() {
        return Err(MetricsError::InvalidInput("no responses".into()));
    }
    let bad = responses.iter().filter(|r| judge.hallucinated(r.as_ref())).count();
    Ok(1.0 - bad as f64 / responses.len() as f64)
}

/// Supported / asserted triples.
pub fn fact_score(response: &str, oracle: &dyn FactOracle) -> Result<f64, MetricsError> {
    let a = oracle.assertions(response);
    if a.is_empty() {
        return Err(MetricsError::Undefined("no assertions".into()));
    }
    let ok = a.iter().filter(|t| oracle.supported(t)).count();
    Ok(ok as f64 / a.len() as f64)
}

/// Sections counted by the clarity rate: every element except the disease.
pub const SCR_COMPONENTS: [Category; 6] = [
    Category::RecommendedFormula,
    Category::HerbalIngredient,
    Category::SymptomsPopulation,
    Category::PulseTongue,
    Category::Contraindication,
    Category::PreparationMethod,
];

/// Number of the six components whose section header appears with a non-empty body.
pub fn component_count(response: &str) -> usize {
    let present: BTreeSet<Category> = sections(response)
        .into_iter()
        .filter(|s| !s.body.trim().is_empty())
        .filter_map(|s| Category::from_title(&s.header))
        .collect();
    SCR_COMPONENTS.iter().filter(|c| present.contains(c)).count()
}

/// 0.5 · a/6 + 0.5 · professional sentences / sentences.
pub fn scr(response: &str, judge: &dyn ProfessionalismJudge) -> Result<f64, MetricsError> {
    if response.trim().is_empty() {
        return Err(MetricsError::InvalidInput("empty response".into()));
    }
    let cr = component_count(response) as f64 / SCR_COMPONENTS.len() as f64;
    let sents = split_sentences(response);
    let cpr = if sents.is_empty() {
        0.0
    } else {
        sents.iter().filter(|s| judge.professional(s)).count() as f64 / sents.len() as f64
    };
    Ok(0.5 * cr + 0.5 * cpr)
}

/// Coherent adjacent sentence pairs / adjacent pairs.
pub fn lr(response: &str, judge: &dyn CoherenceJudge) -> Result<f64, MetricsError> {
    let sents = split_sentences(response);
    if sents.len() < 2 {
        return Err(MetricsError::Undefined("fewer than two sentences".into()));
    }
    let ok = sents.windows(2).filter(|w| judge.coherent(&w[0], &w[1])).count();
    Ok(ok as f64 / (sents.len() - 1) as f64)
}

/// Metric names in report column order.
pub const METRIC_NAMES: [&str; 8] = ["BLEU", "ROUGE-S", "CCR", "CSCR", "CCHR", "FS", "SCR", "LR"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgScope {
    /// Mean of all eight metrics.
    #[default]
    All,
    /// Mean of the six formula-specific metrics.
    FormulaOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge_s: f64,
    pub ccr: f64,
    pub cscr: f64,
    pub cchr: f64,
    pub fs: f64,
    pub scr: f64,
    pub lr: f64,
    pub avg: f64,
}

impl MetricReport {
    pub fn scores(&self) -> [f64; 8] {
        [self.bleu, self.rouge_s, self.ccr, self.cscr, self.cchr, self.fs, self.scr, self.lr]
    }

    pub fn to_tsv(&self) -> String {
        let mut s = METRIC_NAMES.join("\t");
        s.push_str("\tAvg\n");
        let vals: Vec<String> = self.scores().iter().chain([self.avg].iter()).map(|v| format!("{v:.4}")).collect();
        s.push_str(&vals.join("\t"));
        s.push('\n');
        s
    }
}

/// Per-item scores; `None` marks an item skipped for that metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub scores: [Option<f64>; 8],
}

/// Everything the suite needs besides the texts.
pub struct EvalContext<'a> {
    pub rules: &'a RuleTable,
    pub weights: MetricWeights,
    pub empty_role_score: f64,
    pub hallucination: &'a dyn HallucinationJudge,
    pub facts: &'a dyn FactOracle,
    pub professionalism: &'a dyn ProfessionalismJudge,
    pub coherence: &'a dyn CoherenceJudge,
    pub avg_scope: AvgScope,
}

fn skip_undefined(r: Result<f64, MetricsError>) -> Result<Option<f64>, MetricsError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores one output against its reference.
pub fn evaluate_item(output: &str, reference: &str, ctx: &EvalContext<'_>) -> Result<ItemScores, MetricsError> {
    let herbs = herbs_in_text(output);
    let ccr_v = if herbs.is_empty() { None } else { Some(ccr(&herbs, ctx.rules)?) };
    let cscr_v = skip_undefined(cscr_with(
        &RoleAssignment::from_text(output),
        &RoleAssignment::from_text(reference),
        &ctx.weights,
        ctx.empty_role_score,
    ))?;
    Ok(ItemScores {
        scores: [
            Some(bleu(output, &[reference])?),
            Some(rouge_s(output, reference)?),
            ccr_v,
            cscr_v,
            Some(cchr(&[output], ctx.hallucination)?),
            skip_undefined(fact_score(output, ctx.facts))?,
            Some(scr(output, ctx.professionalism)?),
            skip_undefined(lr(output, ctx.coherence))?,
        ],
    })
}

/// Per-metric means over the items where the metric is defined (0 when no
/// item defines it). Values are summed in sorted order so the report does not
/// depend on item order.
pub fn aggregate(items: &[ItemScores], scope: AvgScope) -> MetricReport {
    let mut means = [0.0; 8];
    for (m, slot) in means.iter_mut().enumerate() {
        let mut vals: Vec<f64> = items.iter().filter_map(|i| i.scores[m]).collect();
        if !vals.is_empty() {
            vals.sort_by(f64::total_cmp);
            *slot = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }
    let avg = match scope {
        AvgScope::All => means.iter().sum::<f64>() / 8.0,
        AvgScope::FormulaOnly => means[2..].iter().sum::<f64>() / 6.0,
    };
    let [bleu, rouge_s, ccr, cscr, cchr, fs, scr, lr] = means;
    MetricReport { bleu, rouge_s, ccr, cscr, cchr, fs, scr, lr, avg }
}

/// Counts of items that defined each metric, keyed by metric name.
pub fn coverage(items: &[ItemScores]) -> BTreeMap<&'static str, usize> {
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(m, &name)| (name, items.iter().filter(|i| i.scores[m].is_some()).count()))
        .collect()
}

pub fn evaluate_suite<S: AsRef<str>, R: AsRef<str>>(
    outputs: &[S],
    references: &[R],
    ctx: &EvalContext<'_>,
) -> Result<(MetricReport, Vec<ItemScores>), MetricsError> {
    if outputs.len() != references.len() {
        return Err(MetricsError::InvalidInput(format!(
            "{} outputs but {} references",
            outputs.len(),
            references.len()
        )));
    }
    if outputs.is_empty() {
        return Err(MetricsError::InvalidInput("no items to evaluate".into()));
    }
    let items = outputs
        .iter()
        .zip(references)
        .map(|(o, r)| evaluate_item(o.as_ref(), r.as_ref(), ctx))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((aggregate(&items, ctx.avg_scope), items))
}
