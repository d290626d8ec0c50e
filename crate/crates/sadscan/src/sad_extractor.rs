//! Sensitive-access distribution (SAD) profile extraction.
//!
//! From one trace this module builds a method-level dynamic call graph
//! with call-frequency annotations, decides which source/sink callsites
//! are vulnerable (a sink callsite is reachable from the source's
//! enclosing method, with a temporal witness), and reduces everything
//! to a 52-feature vector of relative statistics.
//!
//! Every feature is a ratio of two integer counts, divided once at the
//! end, so extraction is reproducible bit-for-bit.
//!
//! Feature layout (canonical 1-based names `f1..f52`):
//!
//! | slots    | meaning                                                      |
//! |----------|--------------------------------------------------------------|
//! | f1,f2    | source / sink callsites over all callsites                   |
//! | f3,f4    | source / sink call instances over all instances              |
//! | f5–f9    | source-callsite share per category, over source callsites    |
//! | f10–f15  | sink-callsite share per category, over sink callsites        |
//! | f16–f20  | source-instance share per category, over source instances    |
//! | f21–f26  | sink-instance share per category, over sink instances        |
//! | f27,f28  | vulnerable source / sink callsites over source / sink callsites |
//! | f29,f30  | instances of vulnerable source / sink callsites over source / sink instances |
//! | f31–f35  | vulnerable-source-callsite share per category, over vulnerable source callsites |
//! | f36–f41  | vulnerable-sink-callsite share per category, over vulnerable sink callsites |
//! | f42–f46  | vulnerable-source-instance share per category, over ALL source instances |
//! | f47–f52  | vulnerable-sink-instance share per category, over ALL sink instances |
//!
//! Any feature whose denominator is zero is defined as 0.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::catalog::{
    SensitiveRole, SourceSinkCatalog, SINK_CATEGORY_COUNT, SOURCE_CATEGORY_COUNT,
};
use crate::trace_model::{Label, MethodSig, Trace};

pub const FEATURE_COUNT: usize = 52;

/// 0-based offsets of the feature groups inside the 52-vector.
pub mod feature_index {
    pub const SRC_CALLSITE_PCT: usize = 0; // f1
    pub const SINK_CALLSITE_PCT: usize = 1; // f2
    pub const SRC_INSTANCE_PCT: usize = 2; // f3
    pub const SINK_INSTANCE_PCT: usize = 3; // f4
    pub const SRC_CALLSITE_CAT: usize = 4; // f5..f9
    pub const SINK_CALLSITE_CAT: usize = 9; // f10..f15
    pub const SRC_INSTANCE_CAT: usize = 15; // f16..f20
    pub const SINK_INSTANCE_CAT: usize = 20; // f21..f26
    pub const VULN_SRC_CALLSITE_PCT: usize = 26; // f27
    pub const VULN_SINK_CALLSITE_PCT: usize = 27; // f28
    pub const VULN_SRC_INSTANCE_PCT: usize = 28; // f29
    pub const VULN_SINK_INSTANCE_PCT: usize = 29; // f30
    pub const VULN_SRC_CALLSITE_CAT: usize = 30; // f31..f35
    pub const VULN_SINK_CALLSITE_CAT: usize = 35; // f36..f41
    pub const VULN_SRC_INSTANCE_CAT: usize = 41; // f42..f46
    pub const VULN_SINK_INSTANCE_CAT: usize = 46; // f47..f52
}

/// Canonical name for feature slot `idx0` (0-based): `"f1".."f52"`.
pub fn feature_name(idx0: usize) -> String {
    format!("f{}", idx0 + 1)
}

/// A unique static call location: the same caller may invoke the same
/// callee from several bytecode sites.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CallsiteKey {
    pub caller: MethodSig,
    pub site_index: u32,
    pub callee: MethodSig,
}

/// Aggregated dynamic occurrences of one callsite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallsiteStats {
    pub instances: u64,
    pub first_seq: u64,
    pub last_seq: u64,
}

/// Method-level call graph with per-edge frequencies and per-callsite
/// instance counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DynamicCallGraph {
    pub nodes: BTreeSet<MethodSig>,
    /// (caller, callee) → total call frequency, summed over callsites.
    pub edges: BTreeMap<(MethodSig, MethodSig), u64>,
    pub callsites: BTreeMap<CallsiteKey, CallsiteStats>,
}

/// Builds the frequency-annotated dynamic call graph of a trace.
pub fn build_dcg(trace: &Trace) -> DynamicCallGraph {
    let mut g = DynamicCallGraph::default();
    for r in &trace.records {
        g.nodes.insert(r.caller.clone());
        g.nodes.insert(r.callee.clone());
        *g.edges
            .entry((r.caller.clone(), r.callee.clone()))
            .or_insert(0) += 1;
        let key = CallsiteKey {
            caller: r.caller.clone(),
            site_index: r.site_index,
            callee: r.callee.clone(),
        };
        g.callsites
            .entry(key)
            .and_modify(|s| {
                s.instances += 1;
                s.first_seq = s.first_seq.min(r.seq);
                s.last_seq = s.last_seq.max(r.seq);
            })
            .or_insert(CallsiteStats {
                instances: 1,
                first_seq: r.seq,
                last_seq: r.seq,
            });
    }
    g
}

/// How "reaches" is decided when marking vulnerable callsites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReachabilityMode {
    /// Reflexive-transitive closure over call edges plus a temporal
    /// witness: some sink instance must execute after some instance of
    /// the source callsite.
    #[default]
    Temporal,
    /// Closure over call edges only, ignoring execution order.
    GraphOnly,
}

/// Callsites participating in a potentially vulnerable method-level flow.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VulnerabilityMarking {
    pub sources: BTreeSet<CallsiteKey>,
    pub sinks: BTreeSet<CallsiteKey>,
}

/// Marks vulnerable source and sink callsites.
///
/// A source callsite `s` (enclosing method `m = s.caller`) is
/// vulnerable iff some sink callsite `k` has `k.caller` reachable from
/// `m` (reflexively) and, in [`ReachabilityMode::Temporal`],
/// `s.first_seq < k.last_seq`. A sink callsite is vulnerable iff some
/// source callsite satisfies the same condition toward it. The witness
/// pair is shared, so vulnerable sources exist iff vulnerable sinks do.
pub fn mark_vulnerable(
    graph: &DynamicCallGraph,
    catalog: &SourceSinkCatalog,
    mode: ReachabilityMode,
) -> VulnerabilityMarking {
    let mut source_sites: Vec<(&CallsiteKey, &CallsiteStats)> = Vec::new();
    let mut sink_sites: Vec<(&CallsiteKey, &CallsiteStats)> = Vec::new();
    for (key, stats) in &graph.callsites {
        match catalog.classify(&key.callee) {
            SensitiveRole::Source(_) => source_sites.push((key, stats)),
            SensitiveRole::Sink(_) => sink_sites.push((key, stats)),
            SensitiveRole::Neither => {}
        }
    }
    let mut marking = VulnerabilityMarking::default();
    if source_sites.is_empty() || sink_sites.is_empty() {
        return marking;
    }

    let mut adjacency: BTreeMap<&MethodSig, Vec<&MethodSig>> = BTreeMap::new();
    for (caller, callee) in graph.edges.keys() {
        adjacency.entry(caller).or_default().push(callee);
    }

    // Latest sink instance per enclosing method, for the source side.
    let mut sink_last_by_method: BTreeMap<&MethodSig, u64> = BTreeMap::new();
    for &(key, stats) in &sink_sites {
        let entry = sink_last_by_method.entry(&key.caller).or_insert(0);
        *entry = (*entry).max(stats.last_seq);
    }

    // Earliest source first_seq that reaches each method, for the sink
    // side. In graph-only mode reachability alone matters.
    let mut min_source_first_reaching: BTreeMap<&MethodSig, u64> = BTreeMap::new();
    let mut reach_cache: BTreeMap<&MethodSig, BTreeSet<&MethodSig>> = BTreeMap::new();

    for &(key, stats) in &source_sites {
        let reach = reach_cache
            .entry(&key.caller)
            .or_insert_with(|| reachable_from(&adjacency, &key.caller));
        let mut hits_sink = false;
        for &method in reach.iter() {
            if let Some(&sink_last) = sink_last_by_method.get(method) {
                if mode == ReachabilityMode::GraphOnly || stats.first_seq < sink_last {
                    hits_sink = true;
                }
            }
            let entry = min_source_first_reaching.entry(method).or_insert(u64::MAX);
            *entry = (*entry).min(stats.first_seq);
        }
        if hits_sink {
            marking.sources.insert(key.clone());
        }
    }

    for &(key, stats) in &sink_sites {
        if let Some(&min_first) = min_source_first_reaching.get(&key.caller) {
            if mode == ReachabilityMode::GraphOnly || min_first < stats.last_seq {
                marking.sinks.insert(key.clone());
            }
        }
    }
    marking
}

fn reachable_from<'g>(
    adjacency: &BTreeMap<&'g MethodSig, Vec<&'g MethodSig>>,
    start: &'g MethodSig,
) -> BTreeSet<&'g MethodSig> {
    let mut seen: BTreeSet<&MethodSig> = BTreeSet::new();
    let mut queue: VecDeque<&MethodSig> = VecDeque::new();
    seen.insert(start);
    queue.push_back(start);
    while let Some(m) = queue.pop_front() {
        if let Some(next) = adjacency.get(m) {
            for &callee in next {
                if seen.insert(callee) {
                    queue.push_back(callee);
                }
            }
        }
    }
    seen
}

/// Denominator convention for the vulnerable-instance category shares
/// (f42–f52).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VulnDenominator {
    /// Shares over all source (resp. sink) call instances, so
    /// f42–f46 sum to f29 and f47–f52 sum to f30. The default.
    #[default]
    AllInstances,
    /// Shares over instances of vulnerable callsites only, so each
    /// group sums to 1 when nonempty.
    VulnerableOnly,
}

/// Extraction configuration; defaults match the canonical layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractOptions {
    pub reachability: ReachabilityMode,
    pub vuln_denominator: VulnDenominator,
}

/// The integer counts behind a profile. Features are derived from
/// these by single exact divisions, and tests can verify count-level
/// identities without floating-point tolerances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SadCounts {
    pub callsites_total: u64,
    pub instances_total: u64,
    pub source_callsites: [u64; SOURCE_CATEGORY_COUNT],
    pub source_instances: [u64; SOURCE_CATEGORY_COUNT],
    pub sink_callsites: [u64; SINK_CATEGORY_COUNT],
    pub sink_instances: [u64; SINK_CATEGORY_COUNT],
    pub vuln_source_callsites: [u64; SOURCE_CATEGORY_COUNT],
    pub vuln_source_instances: [u64; SOURCE_CATEGORY_COUNT],
    pub vuln_sink_callsites: [u64; SINK_CATEGORY_COUNT],
    pub vuln_sink_instances: [u64; SINK_CATEGORY_COUNT],
}

fn ratio(numerator: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

impl SadCounts {
    pub fn source_callsites_total(&self) -> u64 {
        self.source_callsites.iter().sum()
    }
    pub fn source_instances_total(&self) -> u64 {
        self.source_instances.iter().sum()
    }
    pub fn sink_callsites_total(&self) -> u64 {
        self.sink_callsites.iter().sum()
    }
    pub fn sink_instances_total(&self) -> u64 {
        self.sink_instances.iter().sum()
    }
    pub fn vuln_source_callsites_total(&self) -> u64 {
        self.vuln_source_callsites.iter().sum()
    }
    pub fn vuln_source_instances_total(&self) -> u64 {
        self.vuln_source_instances.iter().sum()
    }
    pub fn vuln_sink_callsites_total(&self) -> u64 {
        self.vuln_sink_callsites.iter().sum()
    }
    pub fn vuln_sink_instances_total(&self) -> u64 {
        self.vuln_sink_instances.iter().sum()
    }

    /// Maps the counts onto the canonical 52-feature layout.
    pub fn to_features(&self, denominator: VulnDenominator) -> [f64; FEATURE_COUNT] {
        use feature_index::*;
        let mut f = [0.0f64; FEATURE_COUNT];
        let src_cs = self.source_callsites_total();
        let src_in = self.source_instances_total();
        let sink_cs = self.sink_callsites_total();
        let sink_in = self.sink_instances_total();
        let vsrc_cs = self.vuln_source_callsites_total();
        let vsrc_in = self.vuln_source_instances_total();
        let vsink_cs = self.vuln_sink_callsites_total();
        let vsink_in = self.vuln_sink_instances_total();

        f[SRC_CALLSITE_PCT] = ratio(src_cs, self.callsites_total);
        f[SINK_CALLSITE_PCT] = ratio(sink_cs, self.callsites_total);
        f[SRC_INSTANCE_PCT] = ratio(src_in, self.instances_total);
        f[SINK_INSTANCE_PCT] = ratio(sink_in, self.instances_total);
        for c in 0..SOURCE_CATEGORY_COUNT {
            f[SRC_CALLSITE_CAT + c] = ratio(self.source_callsites[c], src_cs);
            f[SRC_INSTANCE_CAT + c] = ratio(self.source_instances[c], src_in);
            f[VULN_SRC_CALLSITE_CAT + c] = ratio(self.vuln_source_callsites[c], vsrc_cs);
        }
        for c in 0..SINK_CATEGORY_COUNT {
            f[SINK_CALLSITE_CAT + c] = ratio(self.sink_callsites[c], sink_cs);
            f[SINK_INSTANCE_CAT + c] = ratio(self.sink_instances[c], sink_in);
            f[VULN_SINK_CALLSITE_CAT + c] = ratio(self.vuln_sink_callsites[c], vsink_cs);
        }
        f[VULN_SRC_CALLSITE_PCT] = ratio(vsrc_cs, src_cs);
        f[VULN_SINK_CALLSITE_PCT] = ratio(vsink_cs, sink_cs);
        f[VULN_SRC_INSTANCE_PCT] = ratio(vsrc_in, src_in);
        f[VULN_SINK_INSTANCE_PCT] = ratio(vsink_in, sink_in);
        let (vsrc_in_den, vsink_in_den) = match denominator {
            VulnDenominator::AllInstances => (src_in, sink_in),
            VulnDenominator::VulnerableOnly => (vsrc_in, vsink_in),
        };
        for c in 0..SOURCE_CATEGORY_COUNT {
            f[VULN_SRC_INSTANCE_CAT + c] = ratio(self.vuln_source_instances[c], vsrc_in_den);
        }
        for c in 0..SINK_CATEGORY_COUNT {
            f[VULN_SINK_INSTANCE_CAT + c] = ratio(self.vuln_sink_instances[c], vsink_in_den);
        }
        f
    }

    /// Count-level consistency checks; empty result iff coherent.
    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.source_callsites_total() + self.sink_callsites_total() > self.callsites_total {
            v.push("source+sink callsites exceed total callsites".into());
        }
        if self.source_instances_total() + self.sink_instances_total() > self.instances_total {
            v.push("source+sink instances exceed total instances".into());
        }
        for c in 0..SOURCE_CATEGORY_COUNT {
            if self.vuln_source_callsites[c] > self.source_callsites[c] {
                v.push(format!(
                    "vulnerable source callsites exceed source callsites in category {c}"
                ));
            }
            if self.vuln_source_instances[c] > self.source_instances[c] {
                v.push(format!(
                    "vulnerable source instances exceed source instances in category {c}"
                ));
            }
            if self.source_instances[c] < self.source_callsites[c] {
                v.push(format!(
                    "source instances below callsite count in category {c}"
                ));
            }
        }
        for c in 0..SINK_CATEGORY_COUNT {
            if self.vuln_sink_callsites[c] > self.sink_callsites[c] {
                v.push(format!(
                    "vulnerable sink callsites exceed sink callsites in category {c}"
                ));
            }
            if self.vuln_sink_instances[c] > self.sink_instances[c] {
                v.push(format!(
                    "vulnerable sink instances exceed sink instances in category {c}"
                ));
            }
            if self.sink_instances[c] < self.sink_callsites[c] {
                v.push(format!(
                    "sink instances below callsite count in category {c}"
                ));
            }
        }
        v
    }
}

/// Errors from profile extraction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("trace {app_id:?} has no records")]
    EmptyTrace { app_id: String },
}

impl ExtractError {
    pub fn code(&self) -> &'static str {
        match self {
            ExtractError::EmptyTrace { .. } => "EmptyTrace",
        }
    }
}

/// The 52-feature sensitive-access distribution of one trace, plus the
/// integer counts it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SadProfile {
    pub app_id: String,
    pub label: Label,
    pub year: i32,
    pub features: [f64; FEATURE_COUNT],
    pub counts: SadCounts,
}

/// Extracts the SAD profile of a trace against a catalog.
pub fn extract_profile(
    trace: &Trace,
    catalog: &SourceSinkCatalog,
    options: &ExtractOptions,
) -> Result<SadProfile, ExtractError> {
    if trace.records.is_empty() {
        return Err(ExtractError::EmptyTrace {
            app_id: trace.app_id.clone(),
        });
    }
    let graph = build_dcg(trace);
    let marking = mark_vulnerable(&graph, catalog, options.reachability);

    let mut counts = SadCounts {
        callsites_total: graph.callsites.len() as u64,
        instances_total: trace.records.len() as u64,
        ..SadCounts::default()
    };
    for (key, stats) in &graph.callsites {
        match catalog.classify(&key.callee) {
            SensitiveRole::Source(cat) => {
                let c = cat.index();
                counts.source_callsites[c] += 1;
                counts.source_instances[c] += stats.instances;
                if marking.sources.contains(key) {
                    counts.vuln_source_callsites[c] += 1;
                    counts.vuln_source_instances[c] += stats.instances;
                }
            }
            SensitiveRole::Sink(cat) => {
                let c = cat.index();
                counts.sink_callsites[c] += 1;
                counts.sink_instances[c] += stats.instances;
                if marking.sinks.contains(key) {
                    counts.vuln_sink_callsites[c] += 1;
                    counts.vuln_sink_instances[c] += stats.instances;
                }
            }
            SensitiveRole::Neither => {}
        }
    }

    Ok(SadProfile {
        app_id: trace.app_id.clone(),
        label: trace.label,
        year: trace.year,
        features: counts.to_features(options.vuln_denominator),
        counts,
    })
}

impl SadProfile {
    /// Checks every profile invariant under the given denominator
    /// convention; empty result iff all hold.
    ///
    /// Count-level identities are checked exactly; the derived floats
    /// must equal their count ratios bit-for-bit, and group sums are
    /// allowed rounding slack only.
    pub fn invariant_violations(&self, denominator: VulnDenominator) -> Vec<String> {
        let mut v = self.counts.violations();
        let expected = self.counts.to_features(denominator);
        for (i, (&f, &want)) in self.features.iter().zip(&expected).enumerate() {
            if !(0.0..=1.0).contains(&f) {
                v.push(format!("{} = {f} outside [0,1]", feature_name(i)));
            }
            if f.to_bits() != want.to_bits() {
                v.push(format!(
                    "{} = {f} differs from its count ratio {want}",
                    feature_name(i)
                ));
            }
        }
        // Each category-share group sums to 1 over its own denominator,
        // or is all-zero when the denominator is empty.
        let groups: [(usize, usize, u64); 6] = [
            (
                feature_index::SRC_CALLSITE_CAT,
                SOURCE_CATEGORY_COUNT,
                self.counts.source_callsites_total(),
            ),
            (
                feature_index::SINK_CALLSITE_CAT,
                SINK_CATEGORY_COUNT,
                self.counts.sink_callsites_total(),
            ),
            (
                feature_index::SRC_INSTANCE_CAT,
                SOURCE_CATEGORY_COUNT,
                self.counts.source_instances_total(),
            ),
            (
                feature_index::SINK_INSTANCE_CAT,
                SINK_CATEGORY_COUNT,
                self.counts.sink_instances_total(),
            ),
            (
                feature_index::VULN_SRC_CALLSITE_CAT,
                SOURCE_CATEGORY_COUNT,
                self.counts.vuln_source_callsites_total(),
            ),
            (
                feature_index::VULN_SINK_CALLSITE_CAT,
                SINK_CATEGORY_COUNT,
                self.counts.vuln_sink_callsites_total(),
            ),
        ];
        for (start, len, den) in groups {
            let sum: f64 = self.features[start..start + len].iter().sum();
            if den == 0 {
                if sum != 0.0 {
                    v.push(format!(
                        "group at {} nonzero with empty denominator",
                        feature_name(start)
                    ));
                }
            } else if (sum - 1.0).abs() > 1e-9 {
                v.push(format!(
                    "group at {} sums to {sum}, expected 1",
                    feature_name(start)
                ));
            }
        }
        // Vulnerable-instance distributions tie back to f29/f30 under
        // the literal convention, and sum to 1-or-0 under the other.
        let vsrc_sum: f64 = self.features
            [feature_index::VULN_SRC_INSTANCE_CAT..feature_index::VULN_SRC_INSTANCE_CAT + 5]
            .iter()
            .sum();
        let vsink_sum: f64 = self.features
            [feature_index::VULN_SINK_INSTANCE_CAT..feature_index::VULN_SINK_INSTANCE_CAT + 6]
            .iter()
            .sum();
        match denominator {
            VulnDenominator::AllInstances => {
                if (vsrc_sum - self.features[feature_index::VULN_SRC_INSTANCE_PCT]).abs() > 1e-9 {
                    v.push(format!("f42..f46 sum {vsrc_sum} differs from f29"));
                }
                if (vsink_sum - self.features[feature_index::VULN_SINK_INSTANCE_PCT]).abs() > 1e-9 {
                    v.push(format!("f47..f52 sum {vsink_sum} differs from f30"));
                }
            }
            VulnDenominator::VulnerableOnly => {
                for (sum, den) in [
                    (vsrc_sum, self.counts.vuln_source_instances_total()),
                    (vsink_sum, self.counts.vuln_sink_instances_total()),
                ] {
                    if den == 0 {
                        if sum != 0.0 {
                            v.push(
                                "vulnerable-instance group nonzero with empty denominator".into(),
                            );
                        }
                    } else if (sum - 1.0).abs() > 1e-9 {
                        v.push(format!(
                            "vulnerable-instance group sums to {sum}, expected 1"
                        ));
                    }
                }
            }
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Profile CSV

/// One row of the profile CSV; the transport form of a profile, without
/// the extraction counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub app_id: String,
    pub label: Label,
    pub year: i32,
    pub features: [f64; FEATURE_COUNT],
}

impl From<&SadProfile> for ProfileRow {
    fn from(p: &SadProfile) -> Self {
        ProfileRow {
            app_id: p.app_id.clone(),
            label: p.label,
            year: p.year,
            features: p.features,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileCsvError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("line {line_no}: {reason}")]
    MalformedRow { line_no: usize, reason: String },
    #[error("app_id {app_id:?} cannot be written to CSV (contains comma or newline)")]
    UnencodableField { app_id: String },
}

impl ProfileCsvError {
    pub fn code(&self) -> &'static str {
        match self {
            ProfileCsvError::InvalidUtf8 => "InvalidUtf8",
            ProfileCsvError::MalformedRow { .. } => "MalformedRow",
            ProfileCsvError::UnencodableField { .. } => "UnencodableField",
        }
    }
}

/// Formats with 9 significant digits, positional notation.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn profile_csv_header() -> String {
    let mut header = String::from("app_id,label,year");
    for i in 0..FEATURE_COUNT {
        header.push(',');
        header.push_str(&feature_name(i));
    }
    header
}

/// Renders profile rows as CSV, features at 9 significant digits.
pub fn write_profiles_csv<'a>(
    rows: impl IntoIterator<Item = &'a ProfileRow>,
) -> Result<String, ProfileCsvError> {
    let mut out = profile_csv_header();
    out.push('\n');
    for row in rows {
        if row.app_id.contains(',') || row.app_id.contains('\n') {
            return Err(ProfileCsvError::UnencodableField {
                app_id: row.app_id.clone(),
            });
        }
        out.push_str(&row.app_id);
        out.push(',');
        out.push_str(row.label.as_str());
        out.push_str(&format!(",{}", row.year));
        for f in row.features {
            out.push(',');
            out.push_str(&fmt_sig9(f));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses a profile CSV produced by [`write_profiles_csv`].
pub fn parse_profiles_csv(input: &[u8]) -> Result<Vec<ProfileRow>, ProfileCsvError> {
    let text = std::str::from_utf8(input).map_err(|_| ProfileCsvError::InvalidUtf8)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ProfileCsvError::MalformedRow {
        line_no: 1,
        reason: "empty file".into(),
    })?;
    if header != profile_csv_header() {
        return Err(ProfileCsvError::MalformedRow {
            line_no: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + FEATURE_COUNT {
            return Err(ProfileCsvError::MalformedRow {
                line_no,
                reason: format!(
                    "expected {} fields, got {}",
                    3 + FEATURE_COUNT,
                    fields.len()
                ),
            });
        }
        let label = Label::parse(fields[1]).ok_or_else(|| ProfileCsvError::MalformedRow {
            line_no,
            reason: format!("unknown label {:?}", fields[1]),
        })?;
        let year: i32 = fields[2]
            .parse()
            .map_err(|_| ProfileCsvError::MalformedRow {
                line_no,
                reason: format!("non-numeric year {:?}", fields[2]),
            })?;
        let mut features = [0.0f64; FEATURE_COUNT];
        for (i, raw) in fields[3..].iter().enumerate() {
            let value: f64 = raw.parse().map_err(|_| ProfileCsvError::MalformedRow {
                line_no,
                reason: format!("non-numeric feature {:?}", raw),
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(ProfileCsvError::MalformedRow {
                    line_no,
                    reason: format!("{} = {value} outside [0,1]", feature_name(i)),
                });
            }
            features[i] = value;
        }
        rows.push(ProfileRow {
            app_id: fields[0].to_string(),
            label,
            year,
            features,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{SinkCategory, SourceCategory};

    const MICRO_TRACE: &str = "\
APP t1 MALICIOUS 2012
CALL 1 main 0 A
CALL 2 A 0 getLoc
CALL 3 A 1 B
CALL 4 B 0 sendSms
CALL 5 A 0 getLoc
CALL 6 main 1 C
CALL 7 C 0 writeLog
CALL 8 C 1 getNet
";

    fn sig(s: &str) -> MethodSig {
        MethodSig::new(s).unwrap()
    }

    fn micro_catalog() -> SourceSinkCatalog {
        let mut c = SourceSinkCatalog::new();
        c.add_source(sig("getLoc"), SourceCategory::Location)
            .unwrap();
        c.add_source(sig("getNet"), SourceCategory::NetworkInfo)
            .unwrap();
        c.add_sink(sig("sendSms"), SinkCategory::Messaging).unwrap();
        c.add_sink(sig("writeLog"), SinkCategory::Logging).unwrap();
        c
    }

    fn micro_trace() -> Trace {
        Trace::parse(MICRO_TRACE.as_bytes()).unwrap()
    }

    fn key(caller: &str, site: u32, callee: &str) -> CallsiteKey {
        CallsiteKey {
            caller: sig(caller),
            site_index: site,
            callee: sig(callee),
        }
    }

    #[test]
    fn dcg_of_micro_trace() {
        let g = build_dcg(&micro_trace());
        assert_eq!(g.nodes.len(), 8);
        assert_eq!(g.callsites.len(), 7);
        assert_eq!(g.edges[&(sig("A"), sig("getLoc"))], 2);
        let stats = g.callsites[&key("A", 0, "getLoc")];
        assert_eq!(
            stats,
            CallsiteStats {
                instances: 2,
                first_seq: 2,
                last_seq: 5
            }
        );
    }

    #[test]
    fn dcg_of_single_record() {
        let t = Trace::parse(b"APP a BENIGN 2014\nCALL 1 main 0 A\n").unwrap();
        let g = build_dcg(&t);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[&(sig("main"), sig("A"))], 1);
    }

    #[test]
    fn same_pair_two_sites_aggregates_one_edge() {
        let t = Trace::parse(b"APP a BENIGN 2014\nCALL 1 m 0 x\nCALL 2 m 1 x\n").unwrap();
        let g = build_dcg(&t);
        assert_eq!(g.edges[&(sig("m"), sig("x"))], 2);
        assert_eq!(g.callsites.len(), 2);
    }

    #[test]
    fn marking_of_micro_trace() {
        let g = build_dcg(&micro_trace());
        let m = mark_vulnerable(&g, &micro_catalog(), ReachabilityMode::Temporal);
        // getLoc in A reaches sendSms in B (A→B, seq 2 < seq 4). getNet
        // is not vulnerable: writeLog's last instance (7) precedes it (8).
        assert_eq!(
            m.sources.iter().cloned().collect::<Vec<_>>(),
            vec![key("A", 0, "getLoc")]
        );
        assert_eq!(
            m.sinks.iter().cloned().collect::<Vec<_>>(),
            vec![key("B", 0, "sendSms")]
        );
    }

    #[test]
    fn graph_only_mode_ignores_order() {
        let g = build_dcg(&micro_trace());
        let m = mark_vulnerable(&g, &micro_catalog(), ReachabilityMode::GraphOnly);
        // Without the temporal witness, getNet reaches writeLog through
        // their shared enclosing method C.
        assert!(m.sources.contains(&key("C", 1, "getNet")));
        assert!(m.sinks.contains(&key("C", 0, "writeLog")));
        assert!(m.sources.contains(&key("A", 0, "getLoc")));
    }

    #[test]
    fn no_sinks_means_no_marking() {
        let t = Trace::parse(b"APP a BENIGN 2014\nCALL 1 m 0 getLoc\nCALL 2 m 1 getLoc\n").unwrap();
        let m = mark_vulnerable(&build_dcg(&t), &micro_catalog(), ReachabilityMode::Temporal);
        assert!(m.sources.is_empty() && m.sinks.is_empty());
    }

    #[test]
    fn same_method_source_then_sink_is_vulnerable() {
        // Reflexive reachability: source and sink share the enclosing
        // method, source instance first.
        let t =
            Trace::parse(b"APP a BENIGN 2014\nCALL 1 m 0 getLoc\nCALL 2 m 1 sendSms\n").unwrap();
        let m = mark_vulnerable(&build_dcg(&t), &micro_catalog(), ReachabilityMode::Temporal);
        assert_eq!(m.sources.len(), 1);
        assert_eq!(m.sinks.len(), 1);
        // Reversed order: no temporal witness, nothing marked.
        let t =
            Trace::parse(b"APP a BENIGN 2014\nCALL 1 m 0 sendSms\nCALL 2 m 1 getLoc\n").unwrap();
        let m = mark_vulnerable(&build_dcg(&t), &micro_catalog(), ReachabilityMode::Temporal);
        assert!(m.sources.is_empty() && m.sinks.is_empty());
    }

    #[test]
    fn micro_trace_profile_spot_values() {
        use feature_index::*;
        let p =
            extract_profile(&micro_trace(), &micro_catalog(), &ExtractOptions::default()).unwrap();
        assert_eq!(p.features[SRC_CALLSITE_PCT], 2.0 / 7.0); // f1
        assert_eq!(p.features[SINK_CALLSITE_PCT], 2.0 / 7.0); // f2
        assert_eq!(p.features[SRC_INSTANCE_PCT], 3.0 / 8.0); // f3
        assert_eq!(p.features[SINK_INSTANCE_PCT], 2.0 / 8.0); // f4
        assert_eq!(
            p.features[SRC_CALLSITE_CAT + SourceCategory::Location.index()],
            1.0 / 2.0
        ); // f7
        assert_eq!(
            p.features[SRC_INSTANCE_CAT + SourceCategory::Location.index()],
            2.0 / 3.0
        ); // f18
        assert_eq!(
            p.features[SINK_CALLSITE_CAT + SinkCategory::Logging.index()],
            1.0 / 2.0
        ); // f12
        assert_eq!(
            p.features[SINK_INSTANCE_CAT + SinkCategory::Messaging.index()],
            1.0 / 2.0
        ); // f25
        assert_eq!(p.features[VULN_SRC_CALLSITE_PCT], 1.0 / 2.0); // f27
        assert_eq!(p.features[VULN_SINK_CALLSITE_PCT], 1.0 / 2.0); // f28
        assert_eq!(p.features[VULN_SRC_INSTANCE_PCT], 2.0 / 3.0); // f29
        assert_eq!(p.features[VULN_SINK_INSTANCE_PCT], 1.0 / 2.0); // f30
        assert_eq!(
            p.features[VULN_SRC_CALLSITE_CAT + SourceCategory::Location.index()],
            1.0
        ); // f33
        assert_eq!(
            p.features[VULN_SINK_CALLSITE_CAT + SinkCategory::Messaging.index()],
            1.0
        ); // f40
        assert_eq!(
            p.features[VULN_SRC_INSTANCE_CAT + SourceCategory::Location.index()],
            2.0 / 3.0
        ); // f44
        assert_eq!(
            p.features[VULN_SINK_INSTANCE_CAT + SinkCategory::Messaging.index()],
            1.0 / 2.0
        ); // f51
        assert!(p
            .invariant_violations(VulnDenominator::AllInstances)
            .is_empty());
    }

    #[test]
    fn vulnerable_only_denominator_switch() {
        use feature_index::*;
        let options = ExtractOptions {
            vuln_denominator: VulnDenominator::VulnerableOnly,
            ..ExtractOptions::default()
        };
        let p = extract_profile(&micro_trace(), &micro_catalog(), &options).unwrap();
        // Both vulnerable source instances are Location, so the share is
        // 2/2 instead of 2/3.
        assert_eq!(
            p.features[VULN_SRC_INSTANCE_CAT + SourceCategory::Location.index()],
            1.0
        );
        assert_eq!(p.features[VULN_SRC_INSTANCE_PCT], 2.0 / 3.0); // f29 unchanged
        assert!(p
            .invariant_violations(VulnDenominator::VulnerableOnly)
            .is_empty());
    }

    #[test]
    fn no_catalog_hits_gives_all_zero() {
        let p = extract_profile(
            &micro_trace(),
            &SourceSinkCatalog::new(),
            &ExtractOptions::default(),
        )
        .unwrap();
        assert!(p.features.iter().all(|&f| f == 0.0));
        assert!(p
            .invariant_violations(VulnDenominator::AllInstances)
            .is_empty());
    }

    #[test]
    fn empty_trace_is_rejected() {
        let t = Trace {
            app_id: "x".into(),
            label: Label::Benign,
            year: 2014,
            records: vec![],
        };
        let err = extract_profile(&t, &micro_catalog(), &ExtractOptions::default()).unwrap_err();
        assert_eq!(err.code(), "EmptyTrace");
    }

    #[test]
    fn fmt_sig9_examples() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(2.0 / 7.0), "0.285714286");
        assert_eq!(fmt_sig9(0.375), "0.375000000");
        assert_eq!(fmt_sig9(1.0), "1.00000000");
        assert_eq!(fmt_sig9(0.05), "0.0500000000");
    }

    #[test]
    fn profile_csv_round_trip() {
        let p =
            extract_profile(&micro_trace(), &micro_catalog(), &ExtractOptions::default()).unwrap();
        let row = ProfileRow::from(&p);
        let csv = write_profiles_csv([&row]).unwrap();
        let parsed = parse_profiles_csv(csv.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].app_id, "t1");
        assert_eq!(parsed[0].label, Label::Malicious);
        // 9 significant digits survive one round trip within 1e-9.
        for (a, b) in parsed[0].features.iter().zip(row.features.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn profile_csv_rejects_bad_rows() {
        let good = write_profiles_csv([&ProfileRow {
            app_id: "a".into(),
            label: Label::Benign,
            year: 2014,
            features: [0.0; FEATURE_COUNT],
        }])
        .unwrap();
        let bad_header = good.replacen("app_id", "id", 1);
        assert_eq!(
            parse_profiles_csv(bad_header.as_bytes())
                .unwrap_err()
                .code(),
            "MalformedRow"
        );
        let bad_value = good.replacen(",0,", ",2.5,", 1);
        assert_eq!(
            parse_profiles_csv(bad_value.as_bytes()).unwrap_err().code(),
            "MalformedRow"
        );
        let comma_id = ProfileRow {
            app_id: "a,b".into(),
            label: Label::Benign,
            year: 2014,
            features: [0.0; FEATURE_COUNT],
        };
        assert_eq!(
            write_profiles_csv([&comma_id]).unwrap_err().code(),
            "UnencodableField"
        );
    }
}
