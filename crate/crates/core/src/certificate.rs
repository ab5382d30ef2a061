use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of one certification run.
///
/// `pass` is only ever set when the margin clears the discretisation slack;
/// runs whose margin is positive but within the slack are reported as failed
/// with an "inconclusive" reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub property: String,
    pub pass: bool,
    pub margin: f64,
    pub slack: f64,
    pub resolution: Option<usize>,
    pub horizon: Option<usize>,
    /// Named auxiliary measurements (minima, counts, exponents).
    pub values: BTreeMap<String, f64>,
    /// Constants consumed, as `name=value (source)`.
    pub provenance: Vec<String>,
    pub reason: Option<String>,
}

impl CertificateReport {
    pub fn new(property: impl Into<String>) -> Self {
        Self {
            property: property.into(),
            pass: false,
            margin: 0.0,
            slack: 0.0,
            resolution: None,
            horizon: None,
            values: BTreeMap::new(),
            provenance: Vec::new(),
            reason: None,
        }
    }

    pub fn resolution(mut self, n: usize) -> Self {
        self.resolution = Some(n);
        self
    }

    pub fn horizon(mut self, k: usize) -> Self {
        self.horizon = Some(k);
        self
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.set(key, v);
        self
    }

    pub fn set(&mut self, key: &str, v: f64) {
        // JSON has no infinities; clamp so reports stay serialisable
        let v = if v.is_nan() { f64::MAX } else { v.clamp(-f64::MAX, f64::MAX) };
        self.values.insert(key.to_string(), v);
    }

    pub fn source(mut self, entry: impl Into<String>) -> Self {
        self.provenance.push(entry.into());
        self
    }

    /// Sets margin and slack and derives the verdict. `hard_fail` carries a
    /// reason that fails the report regardless of the margin.
    pub fn decide(mut self, margin: f64, slack: f64, hard_fail: Option<String>) -> Self {
        let finite = |v: f64| if v.is_nan() { -f64::MAX } else { v.clamp(-f64::MAX, f64::MAX) };
        self.margin = finite(margin);
        self.slack = finite(slack.abs());
        match hard_fail {
            Some(r) => {
                self.pass = false;
                self.reason = Some(r);
            }
            None if self.margin > self.slack => {
                self.pass = true;
                self.reason = None;
            }
            None if self.margin > 0.0 => {
                self.pass = false;
                self.reason = Some(format!(
                    "inconclusive: margin {:.3e} within slack {:.3e}",
                    self.margin, self.slack
                ));
            }
            None => {
                self.pass = false;
                self.reason = Some(format!("margin {:.3e} is not positive", self.margin));
            }
        }
        self
    }

    /// Aggregates component reports: passes iff every component passes, with
    /// the smallest component margin. Component values are kept under a
    /// `property.` prefix. The reason names the first failure.
    pub fn aggregate(property: &str, parts: &[CertificateReport]) -> Self {
        let mut rep = CertificateReport::new(property);
        let mut margin = f64::MAX;
        let mut first_fail: Option<String> = None;
        for p in parts {
            for (k, v) in &p.values {
                rep.set(&format!("{}.{k}", p.property), *v);
            }
            rep.set(&format!("{}.margin", p.property), p.margin);
            rep.set(&format!("{}.pass", p.property), if p.pass { 1.0 } else { 0.0 });
            margin = margin.min(p.margin);
            if !p.pass && first_fail.is_none() {
                first_fail = Some(format!(
                    "component {} failed: {}",
                    p.property,
                    p.reason.clone().unwrap_or_default()
                ));
            }
        }
        rep.margin = margin;
        rep.pass = first_fail.is_none() && !parts.is_empty();
        rep.reason = first_fail;
        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_inside_slack_is_inconclusive() {
        let r = CertificateReport::new("x").decide(0.01, 0.02, None);
        assert!(!r.pass);
        assert!(r.reason.unwrap().starts_with("inconclusive"));
    }

    #[test]
    fn aggregate_names_first_failure() {
        let a = CertificateReport::new("a").decide(1.0, 0.0, None);
        let b = CertificateReport::new("b").decide(-1.0, 0.0, None);
        let agg = CertificateReport::aggregate("all", &[a, b]);
        assert!(!agg.pass);
        assert!(agg.reason.unwrap().contains("component b"));
        assert_eq!(agg.margin, -1.0);
    }

    #[test]
    fn infinities_are_clamped() {
        let r = CertificateReport::new("x").value("v", f64::INFINITY);
        assert_eq!(r.values["v"], f64::MAX);
    }
}
