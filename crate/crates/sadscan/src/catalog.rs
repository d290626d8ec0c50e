//! Categorized source/sink API lists and the `.ssl` catalog format.
//!
//! A catalog maps method signatures to either an information-source
//! category (data the call retrieves) or an operation-sink category
//! (effect the call performs). Lookup is exact-match only: the lists
//! are concrete API signatures, not patterns.
//!
//! ```text
//! SOURCE <category> <signature>
//! SINK <category> <signature>
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::trace_model::MethodSig;

pub const SOURCE_CATEGORY_COUNT: usize = 5;
pub const SINK_CATEGORY_COUNT: usize = 6;

/// The five categories of information that sources retrieve, in
/// canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceCategory {
    Account,
    Calendar,
    Location,
    NetworkInfo,
    SystemConfig,
}

impl SourceCategory {
    pub const ALL: [SourceCategory; SOURCE_CATEGORY_COUNT] = [
        SourceCategory::Account,
        SourceCategory::Calendar,
        SourceCategory::Location,
        SourceCategory::NetworkInfo,
        SourceCategory::SystemConfig,
    ];

    /// Position in the canonical order; fixes this category's slot in
    /// every feature-group layout.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceCategory::Account => "Account",
            SourceCategory::Calendar => "Calendar",
            SourceCategory::Location => "Location",
            SourceCategory::NetworkInfo => "NetworkInfo",
            SourceCategory::SystemConfig => "SystemConfig",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == token)
    }
}

/// The six categories of operations that sinks perform, in canonical
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SinkCategory {
    AccountSetting,
    FileOperation,
    Logging,
    NetworkAccess,
    Messaging,
    SystemSetting,
}

impl SinkCategory {
    pub const ALL: [SinkCategory; SINK_CATEGORY_COUNT] = [
        SinkCategory::AccountSetting,
        SinkCategory::FileOperation,
        SinkCategory::Logging,
        SinkCategory::NetworkAccess,
        SinkCategory::Messaging,
        SinkCategory::SystemSetting,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SinkCategory::AccountSetting => "AccountSetting",
            SinkCategory::FileOperation => "FileOperation",
            SinkCategory::Logging => "Logging",
            SinkCategory::NetworkAccess => "NetworkAccess",
            SinkCategory::Messaging => "Messaging",
            SinkCategory::SystemSetting => "SystemSetting",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == token)
    }
}

impl fmt::Display for SourceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for SinkCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of classifying a callee signature against a catalog.
/// Exactly one of the three holds for any (catalog, signature) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitiveRole {
    Source(SourceCategory),
    Sink(SinkCategory),
    Neither,
}

/// Errors from parsing or building a catalog.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("line {line_no}: unknown {role} category {token:?}")]
    UnknownCategory {
        line_no: usize,
        role: &'static str,
        token: String,
    },
    #[error("signature {signature:?} already listed with a different role or category")]
    DuplicateConflictingEntry { signature: String },
}

impl CatalogError {
    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::InvalidUtf8 => "InvalidUtf8",
            CatalogError::MalformedLine { .. } => "MalformedLine",
            CatalogError::UnknownCategory { .. } => "UnknownCategory",
            CatalogError::DuplicateConflictingEntry { .. } => "DuplicateConflictingEntry",
        }
    }
}

/// Signature → role × category mapping. Immutable after parsing, so
/// concurrent readers need no synchronization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceSinkCatalog {
    sources: BTreeMap<MethodSig, SourceCategory>,
    sinks: BTreeMap<MethodSig, SinkCategory>,
}

impl SourceSinkCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses the `.ssl` format. Exact duplicates are tolerated; the
    /// same signature under two different roles or categories is not.
    pub fn parse(input: &[u8]) -> Result<Self, CatalogError> {
        let text = std::str::from_utf8(input).map_err(|_| CatalogError::InvalidUtf8)?;
        let mut catalog = SourceSinkCatalog::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 3 {
                return Err(CatalogError::MalformedLine {
                    line_no,
                    reason: format!("expected `SOURCE|SINK <category> <signature>`, got {line:?}"),
                });
            }
            let sig = MethodSig::new(fields[2]).map_err(|e| CatalogError::MalformedLine {
                line_no,
                reason: e.to_string(),
            })?;
            match fields[0] {
                "SOURCE" => {
                    let cat =
                        SourceCategory::parse(fields[1]).ok_or(CatalogError::UnknownCategory {
                            line_no,
                            role: "source",
                            token: fields[1].to_string(),
                        })?;
                    catalog.add_source(sig, cat)?;
                }
                "SINK" => {
                    let cat =
                        SinkCategory::parse(fields[1]).ok_or(CatalogError::UnknownCategory {
                            line_no,
                            role: "sink",
                            token: fields[1].to_string(),
                        })?;
                    catalog.add_sink(sig, cat)?;
                }
                other => {
                    return Err(CatalogError::MalformedLine {
                        line_no,
                        reason: format!("unknown role {other:?}"),
                    });
                }
            }
        }
        Ok(catalog)
    }

    pub fn add_source(&mut self, sig: MethodSig, cat: SourceCategory) -> Result<(), CatalogError> {
        if self.sinks.contains_key(&sig) || self.sources.get(&sig).is_some_and(|&c| c != cat) {
            return Err(CatalogError::DuplicateConflictingEntry {
                signature: sig.as_str().to_string(),
            });
        }
        self.sources.insert(sig, cat);
        Ok(())
    }

    pub fn add_sink(&mut self, sig: MethodSig, cat: SinkCategory) -> Result<(), CatalogError> {
        if self.sources.contains_key(&sig) || self.sinks.get(&sig).is_some_and(|&c| c != cat) {
            return Err(CatalogError::DuplicateConflictingEntry {
                signature: sig.as_str().to_string(),
            });
        }
        self.sinks.insert(sig, cat);
        Ok(())
    }

    /// Exact-match lookup; `Neither` for unknown signatures.
    pub fn classify(&self, callee: &MethodSig) -> SensitiveRole {
        if let Some(&cat) = self.sources.get(callee) {
            return SensitiveRole::Source(cat);
        }
        if let Some(&cat) = self.sinks.get(callee) {
            return SensitiveRole::Sink(cat);
        }
        SensitiveRole::Neither
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn sink_count(&self) -> usize {
        self.sinks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty() && self.sinks.is_empty()
    }

    /// Serializes back to the `.ssl` format, sources first, both blocks
    /// in signature order.
    pub fn to_ssl(&self) -> String {
        let mut out = String::new();
        for (sig, cat) in &self.sources {
            out.push_str(&format!("SOURCE {cat} {sig}\n"));
        }
        for (sig, cat) in &self.sinks {
            out.push_str(&format!("SINK {cat} {sig}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(s: &str) -> MethodSig {
        MethodSig::new(s).unwrap()
    }

    #[test]
    fn parses_single_source_entry() {
        let c = SourceSinkCatalog::parse(b"SOURCE Location pkg.Loc.getLoc()\n").unwrap();
        assert_eq!(c.source_count(), 1);
        assert_eq!(c.sink_count(), 0);
        assert_eq!(
            c.classify(&sig("pkg.Loc.getLoc()")),
            SensitiveRole::Source(SourceCategory::Location)
        );
    }

    #[test]
    fn classify_covers_all_three_roles() {
        let mut c = SourceSinkCatalog::new();
        c.add_source(sig("getLoc"), SourceCategory::Location)
            .unwrap();
        c.add_sink(sig("sendSms"), SinkCategory::Messaging).unwrap();
        assert_eq!(
            c.classify(&sig("getLoc")),
            SensitiveRole::Source(SourceCategory::Location)
        );
        assert_eq!(
            c.classify(&sig("sendSms")),
            SensitiveRole::Sink(SinkCategory::Messaging)
        );
        assert_eq!(c.classify(&sig("helper")), SensitiveRole::Neither);
    }

    #[test]
    fn rejects_conflicting_roles() {
        let err =
            SourceSinkCatalog::parse(b"SOURCE Location x.y()\nSINK Logging x.y()\n").unwrap_err();
        assert_eq!(err.code(), "DuplicateConflictingEntry");
        // Same signature, same role, different category: also a conflict.
        let err =
            SourceSinkCatalog::parse(b"SOURCE Location x.y()\nSOURCE Account x.y()\n").unwrap_err();
        assert_eq!(err.code(), "DuplicateConflictingEntry");
    }

    #[test]
    fn tolerates_exact_duplicates() {
        let c =
            SourceSinkCatalog::parse(b"SOURCE Location x.y()\nSOURCE Location x.y()\n").unwrap();
        assert_eq!(c.source_count(), 1);
    }

    #[test]
    fn rejects_unknown_category() {
        let err = SourceSinkCatalog::parse(b"SOURCE Weather x.y()\n").unwrap_err();
        assert_eq!(err.code(), "UnknownCategory");
        // Sink categories are not valid source categories.
        let err = SourceSinkCatalog::parse(b"SOURCE Messaging x.y()\n").unwrap_err();
        assert_eq!(err.code(), "UnknownCategory");
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            &b"SOURCE Location"[..],
            b"TAP Location x.y()",
            b"SOURCE Location a b",
        ] {
            assert_eq!(
                SourceSinkCatalog::parse(bad).unwrap_err().code(),
                "MalformedLine"
            );
        }
    }

    #[test]
    fn category_order_is_canonical() {
        let src: Vec<&str> = SourceCategory::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(
            src,
            [
                "Account",
                "Calendar",
                "Location",
                "NetworkInfo",
                "SystemConfig"
            ]
        );
        let snk: Vec<&str> = SinkCategory::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(
            snk,
            [
                "AccountSetting",
                "FileOperation",
                "Logging",
                "NetworkAccess",
                "Messaging",
                "SystemSetting"
            ]
        );
        for (i, c) in SourceCategory::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
        for (i, c) in SinkCategory::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }

    #[test]
    fn ssl_round_trip() {
        let text = "SINK Messaging sendSms\nSOURCE Location getLoc\n";
        let c = SourceSinkCatalog::parse(text.as_bytes()).unwrap();
        let again = SourceSinkCatalog::parse(c.to_ssl().as_bytes()).unwrap();
        assert_eq!(c, again);
    }
}
