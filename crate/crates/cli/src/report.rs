//! Run reports as `key=value` lines.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use ppls_core::paillier::OpCounts;
use ppls_core::protocol::{AuditReport, PartyOutcome};
use ppls_core::transport::{ByteMeter, MsgType};
use ppls_core::Result;

#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Display) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn counts(&mut self, prefix: &str, c: &OpCounts) {
        for (name, v) in [("e", c.e), ("d", c.d), ("ac", c.ac), ("me", c.me), ("mi", c.mi), ("mm", c.mm)] {
            self.put(format!("{prefix}.{name}"), v);
        }
    }

    pub fn meter(&mut self, meter: &ByteMeter, iterations: u32) {
        let total = meter.total();
        self.put("messages_total", total.messages);
        self.put("bytes_total", total.bytes);
        self.put("bytes_setup", meter.by_iteration(0).bytes);
        if iterations > 0 {
            let first = meter.by_iteration(1);
            self.put("messages_per_iteration", first.messages);
            self.put("bytes_per_iteration", first.bytes);
        }
        self.put("bytes_reveal", meter.by_iteration(iterations + 1).bytes);
        for t in MsgType::ALL {
            let tally = meter.by_type(t);
            if tally.messages > 0 {
                self.put(format!("bytes.{}", t.name()), tally.bytes);
            }
        }
    }

    pub fn outcome(&mut self, prefix: &str, o: &PartyOutcome) {
        self.counts(&format!("{prefix}.setup"), &o.setup_counts);
        if let Some(round) = o.round_counts.first() {
            self.counts(&format!("{prefix}.round"), round);
        }
        self.counts(&format!("{prefix}.total"), &o.total_counts);
    }

    pub fn audit(&mut self, audit: &AuditReport) {
        self.put("audit.fields", audit.fields_checked);
        self.put("audit.violations", audit.violations.len());
        self.put("audit", if audit.is_clean() { "clean" } else { "violations" });
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: Option<&Path>) -> Result<()> {
        if let Some(path) = path {
            fs::write(path, self.render())?;
        }
        Ok(())
    }
}
