//! Trace data model and the line-oriented `.trc` wire format.
//!
//! A trace is one recorded app run: a header naming the app, its label
//! and collection year, followed by one `CALL` line per dynamic
//! method-call event. The format replaces an on-device tracer; parsing
//! it is the contract boundary for everything downstream.
//!
//! ```text
//! APP <app_id> <BENIGN|MALICIOUS|UNLABELED> <year>
//! CALL <seq> <caller_sig> <site_index> <callee_sig>
//! ```
//!
//! Fields are single-space separated; `#` starts a comment line.

use std::fmt;

use thiserror::Error;

/// Canonical method signature, e.g. `pkg.Cls.method(paramTypes)ret`.
///
/// Non-empty and free of whitespace, which keeps the space-separated
/// wire format unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodSig(String);

impl MethodSig {
    pub fn new(value: impl Into<String>) -> Result<Self, TraceError> {
        let value = value.into();
        if value.is_empty() {
            return Err(TraceError::InvalidSignature {
                reason: "empty signature".into(),
            });
        }
        if value.chars().any(char::is_whitespace) {
            return Err(TraceError::InvalidSignature {
                reason: format!("signature {value:?} contains whitespace"),
            });
        }
        Ok(MethodSig(value))
    }

    /// Builds a signature without checking the invariants. Only for
    /// constructing deliberately broken traces that `validate` must flag.
    pub fn raw(value: impl Into<String>) -> Self {
        MethodSig(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn is_well_formed(&self) -> bool {
        !self.0.is_empty() && !self.0.chars().any(char::is_whitespace)
    }
}

impl fmt::Display for MethodSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth label carried in the trace header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Benign,
    Malicious,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "BENIGN",
            Label::Malicious => "MALICIOUS",
            Label::Unlabeled => "UNLABELED",
        }
    }

    pub fn parse(token: &str) -> Option<Label> {
        match token {
            "BENIGN" => Some(Label::Benign),
            "MALICIOUS" => Some(Label::Malicious),
            "UNLABELED" => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dynamic method-call event.
///
/// A callsite identity is the triple `(caller, site_index, callee)`:
/// the same caller may invoke the same callee from several code
/// locations, and `site_index` tells them apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    /// 1-based position, strictly increasing within a trace.
    pub seq: u64,
    pub caller: MethodSig,
    pub site_index: u32,
    pub callee: MethodSig,
}

/// Ordered sequence of call events for one app run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub app_id: String,
    pub label: Label,
    /// Sample-collection year, consumed by the span harness.
    pub year: i32,
    pub records: Vec<CallRecord>,
}

/// Errors from parsing or constructing trace data.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("line {line_no}: {reason}")]
    MalformedHeader { line_no: usize, reason: String },
    #[error("line {line_no}: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("seq {seq} follows {prev}; seq must be strictly increasing")]
    NonMonotonicSeq { prev: u64, seq: u64 },
    #[error("trace has a header but no CALL records")]
    EmptyTrace,
    #[error("{reason}")]
    InvalidSignature { reason: String },
}

impl TraceError {
    /// Stable error name, surfaced by the CLI next to the message.
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::InvalidUtf8 => "InvalidUtf8",
            TraceError::MalformedHeader { .. } => "MalformedHeader",
            TraceError::MalformedRecord { .. } => "MalformedRecord",
            TraceError::NonMonotonicSeq { .. } => "NonMonotonicSeq",
            TraceError::EmptyTrace => "EmptyTrace",
            TraceError::InvalidSignature { .. } => "InvalidSignature",
        }
    }
}

/// One invariant violation reported by [`Trace::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    /// Seq of the offending record, when the violation is record-local.
    pub seq: Option<u64>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seq {
            Some(seq) => write!(f, "seq {seq}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl Trace {
    /// Parses the `.trc` wire format.
    ///
    /// Records preserve file order; any failure is a typed error, never
    /// a panic, regardless of input bytes.
    pub fn parse(input: &[u8]) -> Result<Trace, TraceError> {
        let text = std::str::from_utf8(input).map_err(|_| TraceError::InvalidUtf8)?;
        let mut header: Option<(String, Label, i32)> = None;
        let mut records: Vec<CallRecord> = Vec::new();

        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if header.is_none() {
                if fields.len() != 4 || fields[0] != "APP" {
                    return Err(TraceError::MalformedHeader {
                        line_no,
                        reason: format!("expected `APP <app_id> <label> <year>`, got {line:?}"),
                    });
                }
                let label = Label::parse(fields[2]).ok_or_else(|| TraceError::MalformedHeader {
                    line_no,
                    reason: format!("unknown label {:?}", fields[2]),
                })?;
                let year: i32 = fields[3].parse().map_err(|_| TraceError::MalformedHeader {
                    line_no,
                    reason: format!("non-numeric year {:?}", fields[3]),
                })?;
                header = Some((fields[1].to_string(), label, year));
                continue;
            }

            if fields.len() != 5 || fields[0] != "CALL" {
                return Err(TraceError::MalformedRecord {
                    line_no,
                    reason: format!(
                        "expected `CALL <seq> <caller> <site_index> <callee>`, got {line:?}"
                    ),
                });
            }
            let seq: u64 = fields[1].parse().map_err(|_| TraceError::MalformedRecord {
                line_no,
                reason: format!("non-numeric seq {:?}", fields[1]),
            })?;
            if seq == 0 {
                return Err(TraceError::MalformedRecord {
                    line_no,
                    reason: "seq must be a positive integer".into(),
                });
            }
            if let Some(last) = records.last() {
                if seq <= last.seq {
                    return Err(TraceError::NonMonotonicSeq {
                        prev: last.seq,
                        seq,
                    });
                }
            }
            let site_index: u32 = fields[3].parse().map_err(|_| TraceError::MalformedRecord {
                line_no,
                reason: format!("non-numeric site index {:?}", fields[3]),
            })?;
            let caller = MethodSig::new(fields[2]).map_err(|e| TraceError::MalformedRecord {
                line_no,
                reason: e.to_string(),
            })?;
            let callee = MethodSig::new(fields[4]).map_err(|e| TraceError::MalformedRecord {
                line_no,
                reason: e.to_string(),
            })?;
            records.push(CallRecord {
                seq,
                caller,
                site_index,
                callee,
            });
        }

        let (app_id, label, year) = header.ok_or(TraceError::MalformedHeader {
            line_no: 0,
            reason: "missing APP header".into(),
        })?;
        if records.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        Ok(Trace {
            app_id,
            label,
            year,
            records,
        })
    }

    /// Serializes back to the `.trc` format. `parse(to_trc(t)) == t`
    /// for every valid trace.
    pub fn to_trc(&self) -> String {
        let mut out = String::with_capacity(32 + self.records.len() * 48);
        out.push_str(&format!(
            "APP {} {} {}\n",
            self.app_id, self.label, self.year
        ));
        for r in &self.records {
            out.push_str(&format!(
                "CALL {} {} {} {}\n",
                r.seq, r.caller, r.site_index, r.callee
            ));
        }
        out
    }

    /// Checks all trace invariants, one finding per violation.
    ///
    /// Empty result iff the trace is well-formed. This lints traces
    /// built programmatically (possibly via [`MethodSig::raw`]); the
    /// parser already rejects most of these shapes at read time.
    pub fn validate(&self) -> Vec<Finding> {
        let mut findings = Vec::new();
        if self.records.is_empty() {
            findings.push(Finding {
                seq: None,
                message: "trace has no records".into(),
            });
        }
        let mut prev: Option<u64> = None;
        for r in &self.records {
            if r.seq == 0 {
                findings.push(Finding {
                    seq: Some(r.seq),
                    message: "seq must be positive".into(),
                });
            }
            if let Some(p) = prev {
                if r.seq == p {
                    findings.push(Finding {
                        seq: Some(r.seq),
                        message: format!("duplicate seq {}", r.seq),
                    });
                } else if r.seq < p {
                    findings.push(Finding {
                        seq: Some(r.seq),
                        message: format!("seq {} after {} breaks monotonic order", r.seq, p),
                    });
                }
            }
            prev = Some(r.seq);
            if !r.caller.is_well_formed() {
                findings.push(Finding {
                    seq: Some(r.seq),
                    message: format!(
                        "caller {:?} is empty or contains whitespace",
                        r.caller.as_str()
                    ),
                });
            }
            if !r.callee.is_well_formed() {
                findings.push(Finding {
                    seq: Some(r.seq),
                    message: format!(
                        "callee {:?} is empty or contains whitespace",
                        r.callee.as_str()
                    ),
                });
            }
        }
        findings
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MICRO_TRACE: &str = "\
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

    #[test]
    fn parses_micro_trace() {
        let t = Trace::parse(MICRO_TRACE.as_bytes()).unwrap();
        assert_eq!(t.app_id, "t1");
        assert_eq!(t.label, Label::Malicious);
        assert_eq!(t.year, 2012);
        assert_eq!(t.records.len(), 8);
        assert_eq!(t.records[1].caller.as_str(), "A");
        assert_eq!(t.records[1].site_index, 0);
        assert_eq!(t.records[1].callee.as_str(), "getLoc");
        // File order preserved.
        let seqs: Vec<u64> = t.records.iter().map(|r| r.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn header_only_is_empty_trace() {
        let err = Trace::parse(b"APP t1 BENIGN 2014\n").unwrap_err();
        assert_eq!(err, TraceError::EmptyTrace);
    }

    #[test]
    fn rejects_non_monotonic_seq() {
        let input = "APP a BENIGN 2014\nCALL 5 m 0 n\nCALL 3 m 0 n\n";
        let err = Trace::parse(input.as_bytes()).unwrap_err();
        assert_eq!(err, TraceError::NonMonotonicSeq { prev: 5, seq: 3 });
    }

    #[test]
    fn rejects_duplicate_seq_at_parse() {
        let input = "APP a BENIGN 2014\nCALL 5 m 0 n\nCALL 5 m 0 n\n";
        let err = Trace::parse(input.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "NonMonotonicSeq");
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            "APP a BENIGN\nCALL 1 m 0 n\n",          // short header
            "APP a SUSPICIOUS 2014\nCALL 1 m 0 n\n", // unknown label
            "APP a BENIGN year\nCALL 1 m 0 n\n",     // non-numeric year
        ] {
            assert_eq!(
                Trace::parse(bad.as_bytes()).unwrap_err().code(),
                "MalformedHeader"
            );
        }
        for bad in [
            "APP a BENIGN 2014\nCALL 1 m 0\n",     // field count
            "APP a BENIGN 2014\nCALL one m 0 n\n", // non-numeric seq
            "APP a BENIGN 2014\nCALL 0 m 0 n\n",   // zero seq
            "APP a BENIGN 2014\nCALL 1 m x n\n",   // non-numeric site
            "APP a BENIGN 2014\nCALL 1 m 0 n extra\n",
            "APP a BENIGN 2014\nJUMP 1 m 0 n\n",  // unknown tag
            "APP a BENIGN 2014\nCALL 1  m 0 n\n", // double space
        ] {
            assert_eq!(
                Trace::parse(bad.as_bytes()).unwrap_err().code(),
                "MalformedRecord",
                "{bad:?}"
            );
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let input = "# corpus note\nAPP a BENIGN 2014\n\n# mid comment\nCALL 1 m 0 n\n";
        let t = Trace::parse(input.as_bytes()).unwrap();
        assert_eq!(t.records.len(), 1);
    }

    #[test]
    fn arbitrary_bytes_yield_typed_errors() {
        assert_eq!(
            Trace::parse(&[0xff, 0xfe, 0x00]).unwrap_err(),
            TraceError::InvalidUtf8
        );
        assert_eq!(Trace::parse(b"").unwrap_err().code(), "MalformedHeader");
    }

    #[test]
    fn validate_accepts_well_formed_trace() {
        let t = Trace::parse(MICRO_TRACE.as_bytes()).unwrap();
        assert!(t.validate().is_empty());
    }

    #[test]
    fn validate_flags_duplicate_seq() {
        let mut t = Trace::parse(MICRO_TRACE.as_bytes()).unwrap();
        t.records[3].seq = 3;
        let findings = t.validate();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].seq, Some(3));
        assert!(findings[0].message.contains("duplicate"));
    }

    #[test]
    fn validate_flags_whitespace_in_caller() {
        let mut t = Trace::parse(MICRO_TRACE.as_bytes()).unwrap();
        t.records[0].caller = MethodSig::raw("ma in");
        let findings = t.validate();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].seq, Some(1));
    }

    #[test]
    fn trc_round_trip_is_identity() {
        let t = Trace::parse(MICRO_TRACE.as_bytes()).unwrap();
        assert_eq!(Trace::parse(t.to_trc().as_bytes()).unwrap(), t);
    }
}
