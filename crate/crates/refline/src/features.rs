//! Per-line sparse indicator features.
//!
//! Every template produces indicator features only; real-valued signals
//! (gaps, lengths, ratios) are bucketed so the model stays a plain log-linear
//! form with inspectable weights. Feature names follow the grammar
//! `template(@offset)?(=bucket)?` and are the stable external contract: they
//! appear verbatim in model files.
//!
//! The reference-region signal is deliberately soft: `is_heading` and
//! `after_heading` are ordinary features, never a filter, so references
//! outside a detected section (footnotes, split pages) remain reachable.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, LabeledDocument};
use crate::crf;

static BRACKET_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*[\[\(]?\d{1,3}[\]\)\.]").unwrap());
static YEAR_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(?(1[5-9]\d\d|20\d\d)\)?$").unwrap());
static PAGE_RANGE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+\s*[-–—]\s*\d+").unwrap());

/// Errors from feature extraction and space construction.
#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("line index {index} out of range for document of {len} lines")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("gazetteer {path}: {source}")]
    Gazetteer {
        path: String,
        source: std::io::Error,
    },
}

/// On/off switches for each feature template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateToggles {
    pub bias: bool,
    pub starts_digit: bool,
    pub starts_bracket_marker: bool,
    pub ends_period: bool,
    pub ends_hyphen: bool,
    pub has_year: bool,
    pub has_page_range: bool,
    pub punct: bool,
    pub capratio: bool,
    pub len: bool,
    pub is_empty: bool,
    pub is_heading: bool,
    pub after_heading: bool,
    pub relpos: bool,
    pub name_hit: bool,
    pub vgap: bool,
    pub indented: bool,
    pub outdented: bool,
    pub fontsize_delta: bool,
    pub bold: bool,
}

impl Default for TemplateToggles {
    fn default() -> Self {
        TemplateToggles {
            bias: true,
            starts_digit: true,
            starts_bracket_marker: true,
            ends_period: true,
            ends_hyphen: true,
            has_year: true,
            has_page_range: true,
            punct: true,
            capratio: true,
            len: true,
            is_empty: true,
            is_heading: true,
            after_heading: true,
            relpos: true,
            name_hit: true,
            vgap: true,
            indented: true,
            outdented: true,
            fontsize_delta: true,
            bold: true,
        }
    }
}

fn default_heading_gazetteer() -> Vec<String> {
    [
        "references",
        "bibliography",
        "references and notes",
        "literature",
        "literatur",
        "literaturverzeichnis",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

fn default_punct_bounds() -> Vec<u32> {
    vec![1, 3, 6]
}

fn default_capratio_bounds() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_len_bounds() -> Vec<u32> {
    vec![20, 50, 80]
}

fn default_vgap_bounds() -> Vec<f64> {
    vec![1.2, 2.0]
}

fn default_indent_threshold() -> f64 {
    2.0
}

fn default_fontsize_dead_zone() -> f64 {
    0.5
}

fn default_window() -> u8 {
    2
}

/// Configuration of the feature extractor.
///
/// Bucket boundaries are half-open: a value falls in bucket `k` when it is
/// `>=` the `k`-th boundary and `<` the next one. `vgap_bounds` are
/// multipliers of the document's median line gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub templates: TemplateToggles,
    /// Neighbor conjunction radius in lines (`0..=3`).
    pub window: u8,
    /// Heading phrases, matched case-insensitively against whole trimmed lines.
    pub heading_gazetteer: Vec<String>,
    /// Optional surname lexicon; `name_hit` fires only when supplied.
    pub name_gazetteer: Option<Vec<String>>,
    pub punct_bounds: Vec<u32>,
    pub capratio_bounds: Vec<f64>,
    pub len_bounds: Vec<u32>,
    pub vgap_bounds: Vec<f64>,
    /// Indent delta (points) beyond which `indented`/`outdented` fire.
    pub indent_threshold: f64,
    /// Font size delta (points) within which no `fontsize_delta` fires.
    pub fontsize_dead_zone: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            templates: TemplateToggles::default(),
            window: default_window(),
            heading_gazetteer: default_heading_gazetteer(),
            name_gazetteer: None,
            punct_bounds: default_punct_bounds(),
            capratio_bounds: default_capratio_bounds(),
            len_bounds: default_len_bounds(),
            vgap_bounds: default_vgap_bounds(),
            indent_threshold: default_indent_threshold(),
            fontsize_dead_zone: default_fontsize_dead_zone(),
        }
    }
}

impl FeatureConfig {
    /// Checks window bound and bucket boundary monotonicity.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.window > 3 {
            return Err(FeatureError::InvalidConfig(format!(
                "window {} exceeds maximum 3",
                self.window
            )));
        }
        fn increasing<T: PartialOrd>(xs: &[T]) -> bool {
            xs.windows(2).all(|w| w[0] < w[1])
        }
        if !increasing(&self.punct_bounds) {
            return Err(FeatureError::InvalidConfig(
                "punct_bounds must be strictly increasing".into(),
            ));
        }
        if !increasing(&self.capratio_bounds) {
            return Err(FeatureError::InvalidConfig(
                "capratio_bounds must be strictly increasing".into(),
            ));
        }
        if !increasing(&self.len_bounds) {
            return Err(FeatureError::InvalidConfig(
                "len_bounds must be strictly increasing".into(),
            ));
        }
        if !increasing(&self.vgap_bounds) {
            return Err(FeatureError::InvalidConfig(
                "vgap_bounds must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Loads a gazetteer file: UTF-8, one phrase per line, `#` starts a comment.
pub fn load_gazetteer(path: &Path) -> Result<Vec<String>, FeatureError> {
    let raw = fs::read_to_string(path).map_err(|source| FeatureError::Gazetteer {
        path: path.display().to_string(),
        source,
    })?;
    Ok(raw
        .lines()
        .map(|l| match l.find('#') {
            Some(pos) => l[..pos].trim(),
            None => l.trim(),
        })
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// A parsed feature name: `base(@offset)?(=bucket)?`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureName {
    pub base: String,
    pub offset: Option<i32>,
    pub bucket: Option<String>,
}

impl FeatureName {
    /// Parses a name against the grammar; `None` when it does not conform.
    pub fn parse(name: &str) -> Option<FeatureName> {
        let (head, bucket) = match name.split_once('=') {
            Some((h, b)) => (h, Some(b)),
            None => (name, None),
        };
        let (base, offset) = match head.split_once('@') {
            Some((b, o)) => {
                if !o.starts_with('+') && !o.starts_with('-') {
                    return None;
                }
                (b, Some(o.parse::<i32>().ok()?))
            }
            None => (head, None),
        };
        if base.is_empty() || !base.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
            return None;
        }
        if let Some(b) = bucket {
            if b.is_empty()
                || !b
                    .chars()
                    .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.'))
            {
                return None;
            }
        }
        Some(FeatureName {
            base: base.to_string(),
            offset,
            bucket: bucket.map(String::from),
        })
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        if let Some(o) = self.offset {
            write!(f, "@{o:+}")?;
        }
        if let Some(b) = &self.bucket {
            write!(f, "={b}")?;
        }
        Ok(())
    }
}

/// Inserts a window offset into a fired template name, e.g.
/// `punct=2` at offset −1 becomes `punct@-1=2`.
fn with_offset(name: &str, offset: i32) -> String {
    match name.find('=') {
        Some(pos) => format!("{}@{:+}{}", &name[..pos], offset, &name[pos..]),
        None => format!("{name}@{offset:+}"),
    }
}

/// Bucket index: number of boundaries at or below the value.
fn bucket<T: PartialOrd + Copy>(value: T, bounds: &[T]) -> usize {
    bounds.iter().take_while(|b| value >= **b).count()
}

fn count_punct(text: &str) -> usize {
    text.chars()
        .filter(|c| c.is_ascii_punctuation() || "–—‘’“”…".contains(*c))
        .count()
}

fn first_alphabetic(token: &str) -> Option<char> {
    token.chars().find(|c| c.is_alphabetic())
}

fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_lowercase()
}

/// Document-level context shared by all lines during extraction.
struct DocContext<'a> {
    config: &'a FeatureConfig,
    heading_set: HashSet<String>,
    name_set: Option<HashSet<String>>,
    median_vgap: Option<f64>,
    /// Strict-prefix flag: a heading fired at some line before this one.
    heading_before: Vec<bool>,
}

impl<'a> DocContext<'a> {
    fn new(document: &Document, config: &'a FeatureConfig) -> DocContext<'a> {
        let heading_set: HashSet<String> = config
            .heading_gazetteer
            .iter()
            .map(|p| p.to_lowercase())
            .collect();
        let name_set = config
            .name_gazetteer
            .as_ref()
            .map(|names| names.iter().map(|n| n.to_lowercase()).collect());

        let mut gaps: Vec<f64> = document.lines.iter().filter_map(|l| l.v_gap).collect();
        let median_vgap = if gaps.is_empty() {
            None
        } else {
            gaps.sort_by(|a, b| a.partial_cmp(b).expect("v_gap must not be NaN"));
            let mid = gaps.len() / 2;
            Some(if gaps.len() % 2 == 1 {
                gaps[mid]
            } else {
                (gaps[mid - 1] + gaps[mid]) / 2.0
            })
        };

        let mut heading_before = Vec::with_capacity(document.lines.len());
        let mut seen = false;
        for line in &document.lines {
            heading_before.push(seen);
            if config.templates.is_heading && heading_set.contains(&line.text.trim().to_lowercase())
            {
                seen = true;
            }
        }

        DocContext {
            config,
            heading_set,
            name_set,
            median_vgap,
            heading_before,
        }
    }

    /// All templates fired at one line, excluding window conjunctions.
    fn base_features(&self, document: &Document, i: usize) -> BTreeSet<String> {
        let t = &self.config.templates;
        let line = &document.lines[i];
        let trimmed = line.text.trim();
        let mut fired = BTreeSet::new();

        if t.bias {
            fired.insert("bias".to_string());
        }
        if t.relpos {
            let decile = 10 * i / document.lines.len();
            fired.insert(format!("relpos={decile}"));
        }

        if trimmed.is_empty() {
            if t.is_empty {
                fired.insert("is_empty".to_string());
            }
        } else {
            if t.starts_digit && trimmed.starts_with(|c: char| c.is_ascii_digit()) {
                fired.insert("starts_digit".to_string());
            }
            if t.starts_bracket_marker && BRACKET_MARKER.is_match(&line.text) {
                fired.insert("starts_bracket_marker".to_string());
            }
            if t.ends_period && trimmed.ends_with('.') {
                fired.insert("ends_period".to_string());
            }
            if t.ends_hyphen && trimmed.ends_with('-') {
                fired.insert("ends_hyphen".to_string());
            }
            if t.has_year
                && trimmed
                    .split_whitespace()
                    .any(|tok| YEAR_TOKEN.is_match(tok))
            {
                fired.insert("has_year".to_string());
            }
            if t.has_page_range && PAGE_RANGE.is_match(trimmed) {
                fired.insert("has_page_range".to_string());
            }
            if t.punct {
                let b = bucket(count_punct(trimmed) as u32, &self.config.punct_bounds);
                fired.insert(format!("punct={b}"));
            }
            if t.capratio {
                let mut alpha = 0usize;
                let mut caps = 0usize;
                for tok in trimmed.split_whitespace() {
                    if let Some(c) = first_alphabetic(tok) {
                        alpha += 1;
                        if c.is_uppercase() {
                            caps += 1;
                        }
                    }
                }
                if alpha > 0 {
                    let ratio = caps as f64 / alpha as f64;
                    let b = bucket(ratio, &self.config.capratio_bounds);
                    fired.insert(format!("capratio={b}"));
                }
            }
            if t.len {
                let b = bucket(trimmed.chars().count() as u32, &self.config.len_bounds);
                fired.insert(format!("len={b}"));
            }
            if t.is_heading && self.heading_set.contains(&trimmed.to_lowercase()) {
                fired.insert("is_heading".to_string());
            }
            if t.name_hit {
                if let Some(names) = &self.name_set {
                    if trimmed
                        .split_whitespace()
                        .any(|tok| names.contains(&normalize_token(tok)))
                    {
                        fired.insert("name_hit".to_string());
                    }
                }
            }
        }

        if t.after_heading && self.heading_before[i] {
            fired.insert("after_heading".to_string());
        }

        // Layout templates, each only when its fields are present.
        if t.vgap {
            if let Some(gap) = line.v_gap {
                let ratio = match self.median_vgap {
                    Some(m) if m > 0.0 => gap / m,
                    // Degenerate medians: equal-to-median gaps stay in the
                    // smallest bucket, anything larger saturates.
                    _ if gap <= 0.0 => 1.0,
                    _ => f64::INFINITY,
                };
                let b = bucket(ratio, &self.config.vgap_bounds);
                fired.insert(format!("vgap={b}"));
            }
        }
        if let Some(indent) = line.indent {
            if t.indented && indent > self.config.indent_threshold {
                fired.insert("indented".to_string());
            }
            if t.outdented && indent < -self.config.indent_threshold {
                fired.insert("outdented".to_string());
            }
        }
        if t.fontsize_delta && i > 0 {
            if let (Some(cur), Some(prev)) = (line.font_size, document.lines[i - 1].font_size) {
                let delta = cur - prev;
                if delta > self.config.fontsize_dead_zone {
                    fired.insert("fontsize_delta=+".to_string());
                } else if delta < -self.config.fontsize_dead_zone {
                    fired.insert("fontsize_delta=-".to_string());
                }
            }
        }
        if t.bold && line.bold == Some(true) {
            fired.insert("bold".to_string());
        }

        fired
    }
}

fn conjoin(base_sets: &[BTreeSet<String>], i: usize, window: u8) -> BTreeSet<String> {
    let mut fired = base_sets[i].clone();
    let w = window as i64;
    for o in -w..=w {
        if o == 0 {
            continue;
        }
        let j = i as i64 + o;
        if j < 0 || j >= base_sets.len() as i64 {
            continue;
        }
        for name in &base_sets[j as usize] {
            fired.insert(with_offset(name, o as i32));
        }
    }
    fired
}

/// Extracts the full set of fired feature names for one line in its document
/// context: all base templates plus window conjunctions `t@o` for every
/// template fired within `window` lines.
pub fn extract_line_features(
    document: &Document,
    line_index: usize,
    config: &FeatureConfig,
) -> Result<BTreeSet<String>, FeatureError> {
    config.validate()?;
    if line_index >= document.lines.len() {
        return Err(FeatureError::IndexOutOfRange {
            index: line_index,
            len: document.lines.len(),
        });
    }
    let ctx = DocContext::new(document, config);
    let lo = line_index.saturating_sub(config.window as usize);
    let hi = (line_index + config.window as usize).min(document.lines.len() - 1);
    // Only neighbor base sets within the window are needed; other slots stay
    // empty and are never read.
    let mut base_sets = vec![BTreeSet::new(); document.lines.len()];
    for (j, slot) in base_sets.iter_mut().enumerate().take(hi + 1).skip(lo) {
        *slot = ctx.base_features(document, j);
    }
    Ok(conjoin(&base_sets, line_index, config.window))
}

/// An interned feature name space with dense contiguous indices.
///
/// Frozen by construction: lookups of unknown names return `None` and never
/// allocate, so inference-time novel features are silently dropped. Clones
/// share the interned names, so handing a space to a model is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    inner: Arc<SpaceInner>,
}

#[derive(Debug, PartialEq)]
struct SpaceInner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl FeatureSpace {
    /// Builds a frozen space from a name set; names are sorted
    /// lexicographically before index assignment, so construction is
    /// order-independent.
    pub fn from_names(names: BTreeSet<String>) -> FeatureSpace {
        let names: Vec<String> = names.into_iter().collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        FeatureSpace {
            inner: Arc::new(SpaceInner { names, index }),
        }
    }

    /// Builds the model space for a set of observation names and a Markov
    /// order: the observation names themselves, one emission pairing per
    /// name and label, and one transition name per valid expanded-state pair.
    pub fn for_model(obs_names: BTreeSet<String>, order: usize) -> FeatureSpace {
        FeatureSpace::from_names(crf::full_name_set(obs_names, order))
    }

    pub fn len(&self) -> usize {
        self.inner.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<u32> {
        self.inner.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.inner.index.contains_key(name)
    }

    pub fn name(&self, index: u32) -> &str {
        &self.inner.names[index as usize]
    }

    /// Names in index order (lexicographic).
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.inner.names.iter().map(String::as_str)
    }
}

/// Sorted unique active feature indices for one line; all features are
/// indicator-valued.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    active: Vec<u32>,
}

impl FeatureVector {
    pub fn new(mut indices: Vec<u32>) -> FeatureVector {
        indices.sort_unstable();
        indices.dedup();
        FeatureVector { active: indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// Builds the frozen feature space for a training corpus: every name fired
/// anywhere in the corpus plus the emission pairings and transition names
/// required by a model of the given Markov order.
pub fn build_feature_space(
    documents: &[LabeledDocument],
    config: &FeatureConfig,
    order: usize,
) -> Result<FeatureSpace, FeatureError> {
    config.validate()?;
    if !(1..=crf::MAX_ORDER).contains(&order) {
        return Err(FeatureError::InvalidConfig(format!(
            "unsupported Markov order {order}"
        )));
    }
    if documents.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut obs = BTreeSet::new();
    for doc in documents {
        for fired in fired_names(&doc.document, config) {
            obs.extend(fired);
        }
    }
    Ok(FeatureSpace::for_model(obs, order))
}

/// Fired name sets for every line of a document.
pub fn fired_names(document: &Document, config: &FeatureConfig) -> Vec<BTreeSet<String>> {
    let ctx = DocContext::new(document, config);
    let base_sets: Vec<BTreeSet<String>> = (0..document.lines.len())
        .map(|i| ctx.base_features(document, i))
        .collect();
    (0..document.lines.len())
        .map(|i| conjoin(&base_sets, i, config.window))
        .collect()
}

/// Converts a document into one [`FeatureVector`] per line against a frozen
/// space. Names unknown to the space are silently dropped.
pub fn vectorize(
    document: &Document,
    config: &FeatureConfig,
    space: &FeatureSpace,
) -> Vec<FeatureVector> {
    fired_names(document, config)
        .into_iter()
        .map(|names| {
            FeatureVector::new(
                names
                    .iter()
                    .filter_map(|n| space.index_of(n))
                    .collect::<Vec<_>>(),
            )
        })
        .collect()
}
