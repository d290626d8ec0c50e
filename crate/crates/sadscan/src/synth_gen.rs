//! Synthetic trace corpora with exact, count-level feature targets.
//!
//! Generation works in integer count space: a [`CountTemplate`] fixes
//! how many callsites and call instances of each kind a trace contains,
//! and [`synth_trace`] emits a trace whose extracted profile equals the
//! template-implied vector exactly — no tolerances. Per-app jitter
//! perturbs counts inside the consistency constraints, and a
//! [`CorpusSpec`] describes labeled groups of apps across years.
//!
//! Traces are wired from four isolated zones so exactly the requested
//! callsites satisfy the vulnerability rule:
//!
//! * a flow zone whose method holds all vulnerable source callsites
//!   followed by all vulnerable sink callsites (reflexive reachability
//!   plus the source-before-sink temporal witness),
//! * a plain-source zone that reaches no sink,
//! * a plain-sink zone that no source reaches,
//! * a noise zone of catalog-free calls.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::{
    SinkCategory, SourceCategory, SourceSinkCatalog, SINK_CATEGORY_COUNT, SOURCE_CATEGORY_COUNT,
};
use crate::sad_extractor::{SadCounts, SadProfile, VulnDenominator};
use crate::seeding::{derive_seed, stream_rng};
use crate::trace_model::{CallRecord, Label, MethodSig, Trace};

/// Callsite/instance counts for one category, with their vulnerable
/// sub-counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub callsites: u64,
    pub instances: u64,
    pub vuln_callsites: u64,
    pub vuln_instances: u64,
}

impl CategoryCounts {
    pub const ZERO: CategoryCounts = CategoryCounts {
        callsites: 0,
        instances: 0,
        vuln_callsites: 0,
        vuln_instances: 0,
    };

    fn check(&self, what: &str) -> Result<(), SynthError> {
        let err = |reason: String| Err(SynthError::InconsistentTemplate { reason });
        if self.vuln_callsites > self.callsites {
            return err(format!("{what}: vulnerable callsites exceed callsites"));
        }
        if self.callsites == 0 {
            if self.instances != 0 || self.vuln_instances != 0 {
                return err(format!("{what}: instances without callsites"));
            }
            return Ok(());
        }
        if self.instances < self.callsites {
            return err(format!("{what}: fewer instances than callsites"));
        }
        if self.vuln_callsites == 0 {
            if self.vuln_instances != 0 {
                return err(format!(
                    "{what}: vulnerable instances without vulnerable callsites"
                ));
            }
        } else {
            if self.vuln_instances < self.vuln_callsites {
                return err(format!(
                    "{what}: fewer vulnerable instances than vulnerable callsites"
                ));
            }
            let plain_sites = self.callsites - self.vuln_callsites;
            let plain_instances = self.instances - self.vuln_instances;
            if plain_instances < plain_sites {
                return err(format!(
                    "{what}: not enough plain instances for plain callsites"
                ));
            }
            if plain_sites == 0 && plain_instances > 0 {
                return err(format!("{what}: plain instances without plain callsites"));
            }
        }
        Ok(())
    }
}

/// Integer count targets for one synthetic trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTemplate {
    pub app_id: String,
    pub label: Label,
    pub year: i32,
    pub neither_callsites: u64,
    pub neither_instances: u64,
    pub sources: [CategoryCounts; SOURCE_CATEGORY_COUNT],
    pub sinks: [CategoryCounts; SINK_CATEGORY_COUNT],
}

impl Default for CountTemplate {
    fn default() -> Self {
        CountTemplate {
            app_id: "synth".into(),
            label: Label::Unlabeled,
            year: 0,
            neither_callsites: 0,
            neither_instances: 0,
            sources: [CategoryCounts::ZERO; SOURCE_CATEGORY_COUNT],
            sinks: [CategoryCounts::ZERO; SINK_CATEGORY_COUNT],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("inconsistent template: {reason}")]
    InconsistentTemplate { reason: String },
    #[error("line {line_no}: {reason}")]
    MalformedSpec { line_no: usize, reason: String },
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InconsistentTemplate { .. } => "InconsistentTemplate",
            SynthError::MalformedSpec { .. } => "MalformedSpec",
            SynthError::InvalidUtf8 => "InvalidUtf8",
        }
    }
}

impl CountTemplate {
    pub fn total_callsites(&self) -> u64 {
        self.neither_callsites
            + self.sources.iter().map(|c| c.callsites).sum::<u64>()
            + self.sinks.iter().map(|c| c.callsites).sum::<u64>()
    }

    pub fn total_instances(&self) -> u64 {
        self.neither_instances
            + self.sources.iter().map(|c| c.instances).sum::<u64>()
            + self.sinks.iter().map(|c| c.instances).sum::<u64>()
    }

    fn vuln_source_callsites(&self) -> u64 {
        self.sources.iter().map(|c| c.vuln_callsites).sum()
    }

    fn vuln_sink_callsites(&self) -> u64 {
        self.sinks.iter().map(|c| c.vuln_callsites).sum()
    }

    /// Full consistency check, including the witness rule: vulnerable
    /// sources need a vulnerable sink on the trace (and vice versa),
    /// because one reachability-plus-order witness pair marks both ends.
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.neither_callsites == 0 && self.neither_instances != 0 {
            return Err(SynthError::InconsistentTemplate {
                reason: "neither-instances without neither-callsites".into(),
            });
        }
        if self.neither_callsites > 0 && self.neither_instances < self.neither_callsites {
            return Err(SynthError::InconsistentTemplate {
                reason: "fewer neither-instances than neither-callsites".into(),
            });
        }
        for (cat, counts) in SourceCategory::ALL.iter().zip(&self.sources) {
            counts.check(&format!("source {cat}"))?;
        }
        for (cat, counts) in SinkCategory::ALL.iter().zip(&self.sinks) {
            counts.check(&format!("sink {cat}"))?;
        }
        if (self.vuln_source_callsites() > 0) != (self.vuln_sink_callsites() > 0) {
            return Err(SynthError::InconsistentTemplate {
                reason: "vulnerable sources and vulnerable sinks must both exist or both be absent"
                    .into(),
            });
        }
        if self.total_callsites() == 0 {
            return Err(SynthError::InconsistentTemplate {
                reason: "template would produce an empty trace".into(),
            });
        }
        Ok(())
    }

    /// The extraction counts this template prescribes.
    pub fn implied_counts(&self) -> SadCounts {
        let mut c = SadCounts {
            callsites_total: self.total_callsites(),
            instances_total: self.total_instances(),
            ..SadCounts::default()
        };
        for (i, s) in self.sources.iter().enumerate() {
            c.source_callsites[i] = s.callsites;
            c.source_instances[i] = s.instances;
            c.vuln_source_callsites[i] = s.vuln_callsites;
            c.vuln_source_instances[i] = s.vuln_instances;
        }
        for (i, s) in self.sinks.iter().enumerate() {
            c.sink_callsites[i] = s.callsites;
            c.sink_instances[i] = s.instances;
            c.vuln_sink_callsites[i] = s.vuln_callsites;
            c.vuln_sink_instances[i] = s.vuln_instances;
        }
        c
    }

    /// The profile a generated trace must extract to, exactly.
    pub fn implied_profile(&self, denominator: VulnDenominator) -> SadProfile {
        let counts = self.implied_counts();
        SadProfile {
            app_id: self.app_id.clone(),
            label: self.label,
            year: self.year,
            features: counts.to_features(denominator),
            counts,
        }
    }
}

/// Signature of the `index`-th synthetic source API in a category.
pub fn source_signature(cat: SourceCategory, index: u64) -> MethodSig {
    MethodSig::new(format!("api.src.{cat}.get{index:03}()")).expect("valid synthetic signature")
}

/// Signature of the `index`-th synthetic sink API in a category.
pub fn sink_signature(cat: SinkCategory, index: u64) -> MethodSig {
    MethodSig::new(format!("api.snk.{cat}.do{index:03}()")).expect("valid synthetic signature")
}

/// Catalog covering `per_source[c]` source APIs and `per_sink[c]` sink
/// APIs per category.
pub fn catalog_for_sizes(
    per_source: [u64; SOURCE_CATEGORY_COUNT],
    per_sink: [u64; SINK_CATEGORY_COUNT],
) -> SourceSinkCatalog {
    let mut catalog = SourceSinkCatalog::new();
    for cat in SourceCategory::ALL {
        for i in 0..per_source[cat.index()] {
            catalog
                .add_source(source_signature(cat, i), cat)
                .expect("synthetic signatures are collision-free");
        }
    }
    for cat in SinkCategory::ALL {
        for i in 0..per_sink[cat.index()] {
            catalog
                .add_sink(sink_signature(cat, i), cat)
                .expect("synthetic signatures are collision-free");
        }
    }
    catalog
}

/// Catalog just large enough for one template.
pub fn catalog_for_template(tpl: &CountTemplate) -> SourceSinkCatalog {
    let mut src = [0u64; SOURCE_CATEGORY_COUNT];
    let mut snk = [0u64; SINK_CATEGORY_COUNT];
    for (i, c) in tpl.sources.iter().enumerate() {
        src[i] = c.callsites;
    }
    for (i, c) in tpl.sinks.iter().enumerate() {
        snk[i] = c.callsites;
    }
    catalog_for_sizes(src, snk)
}

/// `total` split across `buckets` parts, first `total % buckets` parts
/// one larger; every part ≥ 1 when `total ≥ buckets`.
fn spread(total: u64, buckets: u64) -> Vec<u64> {
    let base = total / buckets;
    let extras = total % buckets;
    (0..buckets).map(|i| base + u64::from(i < extras)).collect()
}

/// Emits a trace realizing the template's counts exactly.
///
/// The seed only shuffles instance interleaving inside each zone block;
/// the extracted profile is the same for every seed.
pub fn synth_trace(tpl: &CountTemplate, seed: u64) -> Result<Trace, SynthError> {
    tpl.validate()?;
    let mut rng = stream_rng(seed, 0);

    let noise_caller = MethodSig::new("zone.Noise.run()").unwrap();
    let plain_src_caller = MethodSig::new("zone.PlainSources.run()").unwrap();
    let flow_caller = MethodSig::new("zone.Flow.run()").unwrap();
    let plain_sink_caller = MethodSig::new("zone.PlainSinks.run()").unwrap();

    // (caller, site_index, callee) repeated per instance.
    let mut pre_block: Vec<(MethodSig, u32, MethodSig)> = Vec::new();
    let mut vuln_src_block: Vec<(MethodSig, u32, MethodSig)> = Vec::new();
    let mut vuln_sink_block: Vec<(MethodSig, u32, MethodSig)> = Vec::new();
    let mut post_block: Vec<(MethodSig, u32, MethodSig)> = Vec::new();

    let expand = |block: &mut Vec<(MethodSig, u32, MethodSig)>,
                  caller: &MethodSig,
                  site: &mut u32,
                  callee: MethodSig,
                  instances: u64| {
        for _ in 0..instances {
            block.push((caller.clone(), *site, callee.clone()));
        }
        *site += 1;
    };

    if tpl.neither_callsites > 0 {
        let mut site = 0u32;
        let shares = spread(tpl.neither_instances, tpl.neither_callsites);
        for (i, &n) in shares.iter().enumerate() {
            let callee = MethodSig::new(format!("app.Helper.h{i:04}()")).unwrap();
            expand(&mut pre_block, &noise_caller, &mut site, callee, n);
        }
    }

    let mut flow_site = 0u32;
    let mut plain_src_site = 0u32;
    for (cat, counts) in SourceCategory::ALL.iter().zip(&tpl.sources) {
        if counts.callsites == 0 {
            continue;
        }
        // Indices 0..vuln_callsites are the vulnerable APIs of this
        // category; the remainder go to the unreachable plain zone.
        if counts.vuln_callsites > 0 {
            let shares = spread(counts.vuln_instances, counts.vuln_callsites);
            for (i, &n) in shares.iter().enumerate() {
                expand(
                    &mut vuln_src_block,
                    &flow_caller,
                    &mut flow_site,
                    source_signature(*cat, i as u64),
                    n,
                );
            }
        }
        let plain_sites = counts.callsites - counts.vuln_callsites;
        if plain_sites > 0 {
            let shares = spread(counts.instances - counts.vuln_instances, plain_sites);
            for (i, &n) in shares.iter().enumerate() {
                expand(
                    &mut pre_block,
                    &plain_src_caller,
                    &mut plain_src_site,
                    source_signature(*cat, counts.vuln_callsites + i as u64),
                    n,
                );
            }
        }
    }

    let mut plain_sink_site = 0u32;
    for (cat, counts) in SinkCategory::ALL.iter().zip(&tpl.sinks) {
        if counts.callsites == 0 {
            continue;
        }
        if counts.vuln_callsites > 0 {
            let shares = spread(counts.vuln_instances, counts.vuln_callsites);
            for (i, &n) in shares.iter().enumerate() {
                expand(
                    &mut vuln_sink_block,
                    &flow_caller,
                    &mut flow_site,
                    sink_signature(*cat, i as u64),
                    n,
                );
            }
        }
        let plain_sites = counts.callsites - counts.vuln_callsites;
        if plain_sites > 0 {
            let shares = spread(counts.instances - counts.vuln_instances, plain_sites);
            for (i, &n) in shares.iter().enumerate() {
                expand(
                    &mut post_block,
                    &plain_sink_caller,
                    &mut plain_sink_site,
                    sink_signature(*cat, counts.vuln_callsites + i as u64),
                    n,
                );
            }
        }
    }

    // All vulnerable-source instances precede all vulnerable-sink
    // instances; everything else may interleave freely within its block.
    pre_block.shuffle(&mut rng);
    vuln_src_block.shuffle(&mut rng);
    vuln_sink_block.shuffle(&mut rng);
    post_block.shuffle(&mut rng);

    let records = pre_block
        .into_iter()
        .chain(vuln_src_block)
        .chain(vuln_sink_block)
        .chain(post_block)
        .enumerate()
        .map(|(i, (caller, site_index, callee))| CallRecord {
            seq: (i + 1) as u64,
            caller,
            site_index,
            callee,
        })
        .collect();

    Ok(Trace {
        app_id: tpl.app_id.clone(),
        label: tpl.label,
        year: tpl.year,
        records,
    })
}

// ---------------------------------------------------------------------------
// Corpus specs

/// One labeled group of synthetic apps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub tag: String,
    pub label: Label,
    pub year: i32,
    pub n_apps: u64,
    /// Uniform ±jitter applied to every template count per app.
    pub jitter: u64,
    pub template: CountTemplate,
}

/// A full corpus description: groups plus the master seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub groups: Vec<GroupSpec>,
}

/// One generated app.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusApp {
    pub group_tag: String,
    pub trace: Trace,
}

/// A generated corpus plus the catalog that resolves its signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub apps: Vec<CorpusApp>,
    pub catalog: SourceSinkCatalog,
}

/// Clamps a jittered or interpolated template back into consistency.
/// Deterministic: never consumes randomness.
fn repair_template(tpl: &mut CountTemplate) {
    let fix = |c: &mut CategoryCounts| {
        c.vuln_callsites = c.vuln_callsites.min(c.callsites);
        if c.callsites == 0 {
            *c = CategoryCounts::ZERO;
            return;
        }
        c.instances = c.instances.max(c.callsites);
        if c.vuln_callsites == 0 {
            c.vuln_instances = 0;
        } else if c.vuln_callsites == c.callsites {
            c.vuln_instances = c.instances;
        } else {
            let plain_sites = c.callsites - c.vuln_callsites;
            c.vuln_instances = c
                .vuln_instances
                .clamp(c.vuln_callsites, c.instances - plain_sites);
        }
    };
    for c in &mut tpl.sources {
        fix(c);
    }
    for c in &mut tpl.sinks {
        fix(c);
    }
    if tpl.neither_callsites == 0 {
        tpl.neither_instances = 0;
    } else {
        tpl.neither_instances = tpl.neither_instances.max(tpl.neither_callsites);
    }
    // Witness rule: a vulnerable flow needs both ends.
    if tpl.vuln_source_callsites() == 0 || tpl.vuln_sink_callsites() == 0 {
        for c in &mut tpl.sources {
            c.vuln_callsites = 0;
            c.vuln_instances = 0;
        }
        for c in &mut tpl.sinks {
            c.vuln_callsites = 0;
            c.vuln_instances = 0;
        }
    }
    if tpl.total_callsites() == 0 {
        tpl.neither_callsites = 1;
        tpl.neither_instances = 1;
    }
}

/// Applies uniform ±`jitter` noise to every count, then repairs.
/// `jitter == 0` is exact: no randomness is consumed at all.
fn jitter_template(base: &CountTemplate, jitter: u64, rng: &mut ChaCha8Rng) -> CountTemplate {
    let mut tpl = base.clone();
    if jitter == 0 {
        return tpl;
    }
    let j = jitter as i64;
    let mut bump = |v: &mut u64| {
        let delta = rng.gen_range(-j..=j);
        *v = (*v as i64 + delta).max(0) as u64;
    };
    bump(&mut tpl.neither_callsites);
    bump(&mut tpl.neither_instances);
    for c in &mut tpl.sources {
        bump(&mut c.callsites);
        bump(&mut c.vuln_callsites);
        bump(&mut c.instances);
        bump(&mut c.vuln_instances);
    }
    for c in &mut tpl.sinks {
        bump(&mut c.callsites);
        bump(&mut c.vuln_callsites);
        bump(&mut c.instances);
        bump(&mut c.vuln_instances);
    }
    repair_template(&mut tpl);
    tpl
}

/// Per-field rounded interpolation from `from` toward `to`;
/// `alpha = 0` gives `from`, `alpha = 1` gives `to`. Used to build
/// drifted year templates.
pub fn lerp_template(from: &CountTemplate, to: &CountTemplate, alpha: f64) -> CountTemplate {
    let lerp = |a: u64, b: u64| -> u64 {
        let v = a as f64 + (b as f64 - a as f64) * alpha;
        v.round().max(0.0) as u64
    };
    let mut tpl = from.clone();
    tpl.neither_callsites = lerp(from.neither_callsites, to.neither_callsites);
    tpl.neither_instances = lerp(from.neither_instances, to.neither_instances);
    for i in 0..SOURCE_CATEGORY_COUNT {
        tpl.sources[i] = CategoryCounts {
            callsites: lerp(from.sources[i].callsites, to.sources[i].callsites),
            instances: lerp(from.sources[i].instances, to.sources[i].instances),
            vuln_callsites: lerp(from.sources[i].vuln_callsites, to.sources[i].vuln_callsites),
            vuln_instances: lerp(from.sources[i].vuln_instances, to.sources[i].vuln_instances),
        };
    }
    for i in 0..SINK_CATEGORY_COUNT {
        tpl.sinks[i] = CategoryCounts {
            callsites: lerp(from.sinks[i].callsites, to.sinks[i].callsites),
            instances: lerp(from.sinks[i].instances, to.sinks[i].instances),
            vuln_callsites: lerp(from.sinks[i].vuln_callsites, to.sinks[i].vuln_callsites),
            vuln_instances: lerp(from.sinks[i].vuln_instances, to.sinks[i].vuln_instances),
        };
    }
    repair_template(&mut tpl);
    tpl
}

/// Generates every group of the spec. Per-app seeds derive from the
/// spec seed, so the corpus is reproducible byte-for-byte; the catalog
/// is sized to the largest jittered per-category callsite counts.
pub fn synth_corpus(spec: &CorpusSpec) -> Result<Corpus, SynthError> {
    for group in &spec.groups {
        group.template.validate()?;
    }
    let mut apps = Vec::new();
    let mut max_src = [0u64; SOURCE_CATEGORY_COUNT];
    let mut max_snk = [0u64; SINK_CATEGORY_COUNT];
    for (group_idx, group) in spec.groups.iter().enumerate() {
        let group_seed = derive_seed(spec.seed, group_idx as u64);
        for app_idx in 0..group.n_apps {
            let app_seed = derive_seed(group_seed, app_idx);
            let mut tpl =
                jitter_template(&group.template, group.jitter, &mut stream_rng(app_seed, 0));
            tpl.app_id = format!("{}-{:04}", group.tag, app_idx);
            tpl.label = group.label;
            tpl.year = group.year;
            for (i, c) in tpl.sources.iter().enumerate() {
                max_src[i] = max_src[i].max(c.callsites);
            }
            for (i, c) in tpl.sinks.iter().enumerate() {
                max_snk[i] = max_snk[i].max(c.callsites);
            }
            let trace = synth_trace(&tpl, derive_seed(app_seed, 1))?;
            apps.push(CorpusApp {
                group_tag: group.tag.clone(),
                trace,
            });
        }
    }
    Ok(Corpus {
        apps,
        catalog: catalog_for_sizes(max_src, max_snk),
    })
}

pub const MANIFEST_CSV_HEADER: &str = "app_id,label,year,group_tag";

/// Corpus manifest: app metadata plus the originating group tag.
pub fn manifest_csv(corpus: &Corpus) -> String {
    let mut out = String::from(MANIFEST_CSV_HEADER);
    out.push('\n');
    for app in &corpus.apps {
        out.push_str(&format!(
            "{},{},{},{}\n",
            app.trace.app_id, app.trace.label, app.trace.year, app.group_tag
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Spec file format

impl CorpusSpec {
    /// Parses the key-value corpus spec format:
    ///
    /// ```text
    /// seed <u64>
    /// group <tag> <LABEL> <year> <n_apps> <jitter>
    /// neither <callsites> <instances>
    /// source <Category> <callsites> <instances> <vuln_callsites> <vuln_instances>
    /// sink <Category> <callsites> <instances> <vuln_callsites> <vuln_instances>
    /// ```
    ///
    /// `neither`/`source`/`sink` lines apply to the most recent `group`;
    /// unmentioned categories default to zero.
    pub fn parse(input: &[u8]) -> Result<CorpusSpec, SynthError> {
        let text = std::str::from_utf8(input).map_err(|_| SynthError::InvalidUtf8)?;
        let mut seed: Option<u64> = None;
        let mut groups: Vec<GroupSpec> = Vec::new();

        let malformed =
            |line_no: usize, reason: String| SynthError::MalformedSpec { line_no, reason };
        let int = |line_no: usize, token: &str| -> Result<u64, SynthError> {
            token
                .parse()
                .map_err(|_| malformed(line_no, format!("expected integer, got {token:?}")))
        };

        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "seed" => {
                    if fields.len() != 2 {
                        return Err(malformed(line_no, "expected `seed <u64>`".into()));
                    }
                    seed = Some(int(line_no, fields[1])?);
                }
                "group" => {
                    if fields.len() != 6 {
                        return Err(malformed(
                            line_no,
                            "expected `group <tag> <LABEL> <year> <n_apps> <jitter>`".into(),
                        ));
                    }
                    let label = Label::parse(fields[2]).ok_or_else(|| {
                        malformed(line_no, format!("unknown label {:?}", fields[2]))
                    })?;
                    let year: i32 = fields[3].parse().map_err(|_| {
                        malformed(line_no, format!("non-numeric year {:?}", fields[3]))
                    })?;
                    let n_apps = int(line_no, fields[4])?;
                    if n_apps == 0 {
                        return Err(malformed(line_no, "n_apps must be positive".into()));
                    }
                    let jitter = int(line_no, fields[5])?;
                    groups.push(GroupSpec {
                        tag: fields[1].to_string(),
                        label,
                        year,
                        n_apps,
                        jitter,
                        template: CountTemplate {
                            app_id: fields[1].to_string(),
                            label,
                            year,
                            ..CountTemplate::default()
                        },
                    });
                }
                "neither" | "source" | "sink" => {
                    let group = groups.last_mut().ok_or_else(|| {
                        malformed(line_no, format!("{:?} before any group", fields[0]))
                    })?;
                    match fields[0] {
                        "neither" => {
                            if fields.len() != 3 {
                                return Err(malformed(
                                    line_no,
                                    "expected `neither <cs> <in>`".into(),
                                ));
                            }
                            group.template.neither_callsites = int(line_no, fields[1])?;
                            group.template.neither_instances = int(line_no, fields[2])?;
                        }
                        role => {
                            if fields.len() != 6 {
                                return Err(malformed(
                                    line_no,
                                    format!("expected `{role} <Category> <cs> <in> <vuln_cs> <vuln_in>`"),
                                ));
                            }
                            let counts = CategoryCounts {
                                callsites: int(line_no, fields[2])?,
                                instances: int(line_no, fields[3])?,
                                vuln_callsites: int(line_no, fields[4])?,
                                vuln_instances: int(line_no, fields[5])?,
                            };
                            if role == "source" {
                                let cat = SourceCategory::parse(fields[1]).ok_or_else(|| {
                                    malformed(
                                        line_no,
                                        format!("unknown source category {:?}", fields[1]),
                                    )
                                })?;
                                group.template.sources[cat.index()] = counts;
                            } else {
                                let cat = SinkCategory::parse(fields[1]).ok_or_else(|| {
                                    malformed(
                                        line_no,
                                        format!("unknown sink category {:?}", fields[1]),
                                    )
                                })?;
                                group.template.sinks[cat.index()] = counts;
                            }
                        }
                    }
                }
                other => return Err(malformed(line_no, format!("unknown directive {other:?}"))),
            }
        }

        let spec = CorpusSpec {
            seed: seed.ok_or_else(|| malformed(0, "missing `seed` directive".into()))?,
            groups,
        };
        for group in &spec.groups {
            group.template.validate()?;
        }
        Ok(spec)
    }

    /// Canonical spec text; `parse(to_spec_text(s)) == s`.
    pub fn to_spec_text(&self) -> String {
        let mut out = format!("seed {}\n", self.seed);
        for g in &self.groups {
            out.push_str(&format!(
                "\ngroup {} {} {} {} {}\n",
                g.tag, g.label, g.year, g.n_apps, g.jitter
            ));
            if g.template.neither_callsites > 0 {
                out.push_str(&format!(
                    "neither {} {}\n",
                    g.template.neither_callsites, g.template.neither_instances
                ));
            }
            for (cat, c) in SourceCategory::ALL.iter().zip(&g.template.sources) {
                if c.callsites > 0 {
                    out.push_str(&format!(
                        "source {cat} {} {} {} {}\n",
                        c.callsites, c.instances, c.vuln_callsites, c.vuln_instances
                    ));
                }
            }
            for (cat, c) in SinkCategory::ALL.iter().zip(&g.template.sinks) {
                if c.callsites > 0 {
                    out.push_str(&format!(
                        "sink {cat} {} {} {} {}\n",
                        c.callsites, c.instances, c.vuln_callsites, c.vuln_instances
                    ));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Default corpora
//
// The magnitudes below are invented; only the qualitative relations are
// grounded (benign apps use sensitive APIs less extensively than
// malware, sources outnumber sinks, vulnerable sources are a few
// percent while vulnerable sinks reach double digits, and later malware
// drifts toward the benign profile).

fn cc(callsites: u64, instances: u64, vuln_callsites: u64, vuln_instances: u64) -> CategoryCounts {
    CategoryCounts {
        callsites,
        instances,
        vuln_callsites,
        vuln_instances,
    }
}

/// Baseline benign per-trace counts (~25% source / ~7% sink callsites).
pub fn benign_template() -> CountTemplate {
    CountTemplate {
        app_id: "ben".into(),
        label: Label::Benign,
        year: 0,
        neither_callsites: 66,
        neither_instances: 200,
        sources: [
            cc(2, 5, 0, 0),
            cc(1, 2, 0, 0),
            cc(3, 8, 0, 0),
            cc(14, 55, 1, 3),
            cc(4, 10, 0, 0),
        ],
        sinks: [
            cc(3, 8, 1, 3),
            cc(1, 3, 0, 0),
            cc(1, 2, 0, 0),
            cc(1, 3, 0, 0),
            CategoryCounts::ZERO,
            cc(1, 2, 0, 0),
        ],
    }
}

/// Baseline malicious per-trace counts (~58% source / ~24% sink
/// callsites, heavier vulnerable flows).
pub fn malware_template() -> CountTemplate {
    CountTemplate {
        app_id: "mal".into(),
        label: Label::Malicious,
        year: 0,
        neither_callsites: 18,
        neither_instances: 60,
        sources: [
            cc(6, 20, 0, 0),
            cc(2, 5, 0, 0),
            cc(9, 30, 1, 4),
            cc(28, 95, 2, 8),
            cc(11, 35, 0, 0),
        ],
        sinks: [
            cc(9, 28, 2, 7),
            cc(3, 9, 0, 0),
            cc(2, 5, 0, 0),
            cc(4, 13, 1, 4),
            cc(3, 9, 1, 3),
            cc(2, 6, 0, 0),
        ],
    }
}

/// Same-period detection corpus: 1,000 benign + 1,000 malicious apps of
/// one year, cleanly separated.
pub fn default_detection_spec() -> CorpusSpec {
    let mut ben = benign_template();
    ben.year = 2017;
    let mut mal = malware_template();
    mal.year = 2017;
    ben.app_id = "ben".into();
    mal.app_id = "mal".into();
    CorpusSpec {
        seed: 42,
        groups: vec![
            GroupSpec {
                tag: "ben".into(),
                label: Label::Benign,
                year: 2017,
                n_apps: 1000,
                jitter: 2,
                template: ben,
            },
            GroupSpec {
                tag: "mal".into(),
                label: Label::Malicious,
                year: 2017,
                n_apps: 1000,
                jitter: 2,
                template: mal,
            },
        ],
    }
}

/// Drift schedule for the span corpus: how far each later malware year
/// has moved from the year-0 malware baseline toward the benign
/// baseline.
pub const SPAN_DRIFT: [f64; 5] = [0.10, 0.25, 0.40, 0.55, 0.70];

/// Detection-over-time corpus: training year 2012, test years
/// 2013–2017 with malware drifting monotonically toward the benign
/// profile.
pub fn default_span_spec() -> CorpusSpec {
    let base_year = 2012;
    let ben = benign_template();
    let mal = malware_template();
    let mut groups = Vec::new();
    let mut push_pair = |year: i32, tag_prefix: &str, n_apps: u64, mal_tpl: CountTemplate| {
        let mut ben_tpl = ben.clone();
        ben_tpl.app_id = format!("{tag_prefix}-ben");
        ben_tpl.year = year;
        groups.push(GroupSpec {
            tag: format!("{tag_prefix}-ben"),
            label: Label::Benign,
            year,
            n_apps,
            jitter: 3,
            template: ben_tpl,
        });
        let mut mal_tpl = mal_tpl;
        mal_tpl.app_id = format!("{tag_prefix}-mal");
        mal_tpl.year = year;
        groups.push(GroupSpec {
            tag: format!("{tag_prefix}-mal"),
            label: Label::Malicious,
            year,
            n_apps,
            jitter: 3,
            template: mal_tpl,
        });
    };
    push_pair(base_year, "train", 400, mal.clone());
    for (i, &alpha) in SPAN_DRIFT.iter().enumerate() {
        let year = base_year + 1 + i as i32;
        push_pair(
            year,
            &format!("y{}", i + 1),
            150,
            lerp_template(&mal, &ben, alpha),
        );
    }
    CorpusSpec { seed: 7, groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sad_extractor::{extract_profile, ExtractOptions};

    /// Template with the micro-trace fixture's counts.
    fn micro_template() -> CountTemplate {
        let mut tpl = CountTemplate {
            app_id: "t1".into(),
            label: Label::Malicious,
            year: 2012,
            neither_callsites: 3,
            neither_instances: 3,
            ..CountTemplate::default()
        };
        tpl.sources[SourceCategory::Location.index()] = cc(1, 2, 1, 2);
        tpl.sources[SourceCategory::NetworkInfo.index()] = cc(1, 1, 0, 0);
        tpl.sinks[SinkCategory::Messaging.index()] = cc(1, 1, 1, 1);
        tpl.sinks[SinkCategory::Logging.index()] = cc(1, 1, 0, 0);
        tpl
    }

    fn extract_for(tpl: &CountTemplate, seed: u64) -> SadProfile {
        let trace = synth_trace(tpl, seed).unwrap();
        assert!(trace.validate().is_empty());
        extract_profile(
            &trace,
            &catalog_for_template(tpl),
            &ExtractOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn micro_template_round_trips_exactly() {
        let tpl = micro_template();
        let implied = tpl.implied_profile(VulnDenominator::default());
        let extracted = extract_for(&tpl, 123);
        assert_eq!(extracted.counts, implied.counts);
        assert_eq!(extracted.features, implied.features);
        // And the features match the hand-derived micro-trace values.
        assert_eq!(extracted.features[0], 2.0 / 7.0);
        assert_eq!(extracted.features[28], 2.0 / 3.0);
    }

    #[test]
    fn zero_sink_template_zeroes_the_sink_and_vuln_features() {
        let mut tpl = CountTemplate {
            app_id: "nosink".into(),
            neither_callsites: 4,
            neither_instances: 9,
            ..CountTemplate::default()
        };
        tpl.sources[0] = cc(3, 7, 0, 0);
        let p = extract_for(&tpl, 5);
        assert!(p.features[1] == 0.0 && p.features[3] == 0.0);
        for f in &p.features[26..] {
            assert_eq!(*f, 0.0);
        }
    }

    #[test]
    fn all_sources_vulnerable_gives_f27_one() {
        let mut tpl = CountTemplate {
            app_id: "v".into(),
            ..CountTemplate::default()
        };
        tpl.sources[2] = cc(3, 6, 3, 6);
        tpl.sinks[4] = cc(2, 4, 1, 2);
        let p = extract_for(&tpl, 9);
        assert_eq!(p.features[26], 1.0); // f27
    }

    #[test]
    fn validation_rejects_inconsistent_templates() {
        let mut tpl = micro_template();
        tpl.sources[2].vuln_callsites = 5; // more vulnerable than exist
        assert_eq!(tpl.validate().unwrap_err().code(), "InconsistentTemplate");

        let mut tpl = micro_template();
        tpl.sources[2].instances = 0; // fewer instances than callsites
        assert!(tpl.validate().is_err());

        let mut tpl = micro_template();
        for c in &mut tpl.sinks {
            c.vuln_callsites = 0;
            c.vuln_instances = 0;
        }
        // Vulnerable sources with no vulnerable sink: no witness.
        assert!(tpl.validate().is_err());

        let empty = CountTemplate::default();
        assert!(empty.validate().is_err());
    }

    #[test]
    fn round_trip_is_seed_independent() {
        let tpl = micro_template();
        let a = extract_for(&tpl, 0);
        let b = extract_for(&tpl, 987654);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn corpus_has_requested_shape_and_tags() {
        let mut spec = default_detection_spec();
        spec.groups[0].n_apps = 100;
        spec.groups[1].n_apps = 100;
        let corpus = synth_corpus(&spec).unwrap();
        assert_eq!(corpus.apps.len(), 200);
        assert_eq!(
            corpus.apps.iter().filter(|a| a.group_tag == "ben").count(),
            100
        );
        assert_eq!(corpus.apps[0].trace.app_id, "ben-0000");
        assert_eq!(corpus.apps[100].trace.app_id, "mal-0000");
        let manifest = manifest_csv(&corpus);
        assert!(manifest.starts_with(MANIFEST_CSV_HEADER));
        assert_eq!(manifest.lines().count(), 201);
    }

    #[test]
    fn zero_jitter_groups_extract_identically() {
        let mut spec = default_detection_spec();
        spec.groups.truncate(1);
        spec.groups[0].n_apps = 5;
        spec.groups[0].jitter = 0;
        let corpus = synth_corpus(&spec).unwrap();
        let profiles: Vec<[f64; 52]> = corpus
            .apps
            .iter()
            .map(|a| {
                extract_profile(&a.trace, &corpus.catalog, &ExtractOptions::default())
                    .unwrap()
                    .features
            })
            .collect();
        for p in &profiles[1..] {
            assert_eq!(*p, profiles[0]);
        }
    }

    #[test]
    fn same_seed_same_corpus_bytes() {
        let mut spec = default_detection_spec();
        spec.groups[0].n_apps = 8;
        spec.groups[1].n_apps = 8;
        let a = synth_corpus(&spec).unwrap();
        let b = synth_corpus(&spec).unwrap();
        let render = |c: &Corpus| {
            let mut s = manifest_csv(c);
            s.push_str(&c.catalog.to_ssl());
            for app in &c.apps {
                s.push_str(&app.trace.to_trc());
            }
            s
        };
        assert_eq!(render(&a), render(&b));
        spec.seed += 1;
        let c = synth_corpus(&spec).unwrap();
        assert_ne!(render(&a), render(&c));
    }

    #[test]
    fn jittered_templates_stay_consistent() {
        let base = malware_template();
        for seed in 0..200u64 {
            let tpl = jitter_template(&base, 3, &mut stream_rng(seed, 0));
            assert!(tpl.validate().is_ok(), "seed {seed}: {tpl:?}");
        }
    }

    #[test]
    fn lerp_endpoints_and_consistency() {
        let mal = malware_template();
        let ben = benign_template();
        assert_eq!(lerp_template(&mal, &ben, 0.0), mal);
        for alpha in [0.15, 0.35, 0.55, 0.75, 0.92, 1.0] {
            let tpl = lerp_template(&mal, &ben, alpha);
            assert!(tpl.validate().is_ok(), "alpha {alpha}: {tpl:?}");
        }
    }

    #[test]
    fn spec_text_round_trip() {
        for spec in [default_detection_spec(), default_span_spec()] {
            let text = spec.to_spec_text();
            let parsed = CorpusSpec::parse(text.as_bytes()).unwrap();
            assert_eq!(parsed, spec);
        }
    }

    #[test]
    fn spec_parse_rejects_malformed_input() {
        assert_eq!(
            CorpusSpec::parse(b"group g BENIGN 2017 5 0\n")
                .unwrap_err()
                .code(),
            "MalformedSpec" // missing seed
        );
        assert_eq!(
            CorpusSpec::parse(b"seed 1\nneither 3 3\n")
                .unwrap_err()
                .code(),
            "MalformedSpec" // counts before any group
        );
        assert_eq!(
            CorpusSpec::parse(b"seed 1\ngroup g BENIGN 2017 5 0\nsource Weather 1 1 0 0\n")
                .unwrap_err()
                .code(),
            "MalformedSpec"
        );
        // Structurally fine but inconsistent counts.
        assert_eq!(
            CorpusSpec::parse(b"seed 1\ngroup g BENIGN 2017 5 0\nsource Account 2 1 0 0\n")
                .unwrap_err()
                .code(),
            "InconsistentTemplate"
        );
    }

    #[test]
    fn default_specs_validate() {
        for spec in [default_detection_spec(), default_span_spec()] {
            for g in &spec.groups {
                assert!(g.template.validate().is_ok(), "group {}", g.tag);
            }
        }
        assert_eq!(default_span_spec().groups.len(), 12);
    }
}
