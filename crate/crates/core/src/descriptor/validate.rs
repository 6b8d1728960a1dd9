//! Semantic checks over a loaded catalog.
//!
//! Each broken invariant yields one issue. Checks that depend on a reference
//! are skipped when that reference is already reported as dangling, and only
//! the first element of a duplicated identifier is inspected further.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    Catalog, MonitoredSource, NsDeploymentFlavor, Nsd, Vld, VnfDeploymentFlavor, Vnfd,
    VnffgDescriptor, NS_SELF,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    DuplicateIdentifier,
    ReferentialIntegrity,
    Cardinality,
    Range,
    Structure,
    RuleSyntax,
    Consistency,
}

impl IssueKind {
    pub fn name(self) -> &'static str {
        match self {
            IssueKind::DuplicateIdentifier => "duplicate-identifier",
            IssueKind::ReferentialIntegrity => "referential-integrity",
            IssueKind::Cardinality => "cardinality",
            IssueKind::Range => "range",
            IssueKind::Structure => "structure",
            IssueKind::RuleSyntax => "rule-syntax",
            IssueKind::Consistency => "consistency",
        }
    }
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    /// Dotted path to the offending element, e.g.
    /// `nsd[NSD#1].flavors[NsFlavor#1].ns_ils[NS-IL#2]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.kind, self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Runs every semantic check. Issues come back sorted by path, then kind.
pub fn validate_catalog(catalog: &Catalog) -> ValidationReport {
    let mut v = Validator {
        catalog,
        issues: Vec::new(),
    };
    for nsd in catalog.nsds.values() {
        v.nsd(nsd);
    }
    for vnfd in catalog.vnfds.values() {
        v.vnfd(vnfd);
    }
    for vld in catalog.vlds.values() {
        v.vld(vld, &format!("vld[{}]", vld.id));
    }
    for g in catalog.vnffgds.values() {
        v.vnffgd(g);
    }
    let mut issues = v.issues;
    issues.sort_by(|a, b| (&a.path, a.kind, &a.message).cmp(&(&b.path, b.kind, &b.message)));
    issues.dedup();
    ValidationReport { issues }
}

struct Validator<'a> {
    catalog: &'a Catalog,
    issues: Vec<ValidationIssue>,
}

impl<'a> Validator<'a> {
    fn push(&mut self, kind: IssueKind, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            kind,
            path: path.into(),
            message: message.into(),
        });
    }

    /// Reports repeated ids and returns the first element of each id.
    fn unique<'b, T>(
        &mut self,
        items: &'b [T],
        id: impl Fn(&T) -> &str,
        base: &str,
        field: &str,
        what: &str,
    ) -> Vec<&'b T> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for item in items {
            let key = id(item);
            if seen.insert(key.to_string()) {
                out.push(item);
            } else {
                self.push(
                    IssueKind::DuplicateIdentifier,
                    format!("{base}.{field}[{key}]"),
                    format!("{what} id `{key}` is declared more than once"),
                );
            }
        }
        out
    }

    fn nsd(&mut self, nsd: &'a Nsd) {
        let base = format!("nsd[{}]", nsd.id);
        for r in &nsd.vnfd_refs {
            if !self.catalog.vnfds.contains_key(r) {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{base}.vnfd_refs[{r}]"),
                    format!("VNFD `{r}` is not in the catalog"),
                );
            }
        }
        for r in &nsd.vld_refs {
            if !self.catalog.vlds.contains_key(r) {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{base}.vld_refs[{r}]"),
                    format!("VLD `{r}` is not in the catalog"),
                );
            }
        }
        for r in &nsd.vnffgd_refs {
            if !self.catalog.vnffgds.contains_key(r) {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{base}.vnffgd_refs[{r}]"),
                    format!("VNFFGD `{r}` is not in the catalog"),
                );
            }
        }

        let items = self.unique(&nsd.monitored_info, |m| &m.id, &base, "monitored_info", "monitored info");
        for item in items {
            let path = format!("{base}.monitored_info[{}]", item.id);
            let ns_level = item.subject == NS_SELF;
            match (item.source, ns_level) {
                (MonitoredSource::NsMetric, false) => {
                    self.push(
                        IssueKind::Structure,
                        format!("{path}.subject"),
                        format!("ns-metric subject must be `{NS_SELF}`, found `{}`", item.subject),
                    );
                    continue;
                }
                (MonitoredSource::VnfMetric | MonitoredSource::VnfIndicator, true) => {
                    self.push(
                        IssueKind::Structure,
                        format!("{path}.subject"),
                        "VNF-level item cannot name the network service as subject",
                    );
                    continue;
                }
                _ => {}
            }
            if !ns_level {
                match self.catalog.vnfds.get(&item.subject) {
                    None => {
                        self.push(
                            IssueKind::ReferentialIntegrity,
                            format!("{path}.subject"),
                            format!("VNFD `{}` is not in the catalog", item.subject),
                        );
                        continue;
                    }
                    Some(vnfd) => {
                        if item.source == MonitoredSource::VnfIndicator
                            && !vnfd.declares_indicator(&item.name)
                        {
                            self.push(
                                IssueKind::ReferentialIntegrity,
                                format!("{path}.name"),
                                format!("indicator `{}` is not declared by VNFD `{}`", item.name, vnfd.id),
                            );
                        }
                    }
                }
            }
            match (item.source, item.collection_period) {
                (MonitoredSource::VnfIndicator, Some(_)) => self.push(
                    IssueKind::Consistency,
                    format!("{path}.collection_period"),
                    "indicators are event-driven and take no collection period",
                ),
                (_, Some(0)) => self.push(
                    IssueKind::Range,
                    format!("{path}.collection_period"),
                    "collection period must be at least one tick",
                ),
                _ => {}
            }
        }

        let declared: BTreeSet<&str> = nsd.monitored_info.iter().map(|m| m.id.as_str()).collect();
        let rules = self.unique(&nsd.auto_scaling_rules, |r| &r.id, &base, "auto_scaling_rules", "rule");
        for rule in rules {
            let path = format!("{base}.auto_scaling_rules[{}]", rule.id);
            let ast = match (&rule.ast, &rule.parse_error) {
                (Some(ast), _) => ast,
                (None, Some(e)) => {
                    self.push(IssueKind::RuleSyntax, format!("{path}.text"), e.to_string());
                    continue;
                }
                (None, None) => match crate::monitoring::rule::parse_rule(&rule.text) {
                    Ok(_) => continue,
                    Err(e) => {
                        self.push(IssueKind::RuleSyntax, format!("{path}.text"), e.to_string());
                        continue;
                    }
                },
            };
            for metric in ast.metric_refs() {
                if !declared.contains(metric.as_str()) {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        format!("{path}.text"),
                        format!("`{metric}` is not declared in monitored_info"),
                    );
                }
            }
            if let Some(hint) = rule.direction_hint {
                if hint != ast.action {
                    self.push(
                        IssueKind::Consistency,
                        format!("{path}.direction_hint"),
                        format!("hint `{hint}` contradicts rule action `{}`", ast.action),
                    );
                }
            }
            if let (Some(declared), Some(parsed)) = (rule.cooldown, ast.cooldown) {
                if declared != parsed {
                    self.push(
                        IssueKind::Consistency,
                        format!("{path}.cooldown"),
                        format!("cooldown {declared} contradicts COOLDOWN {parsed} in the rule text"),
                    );
                }
            }
        }

        if nsd.flavors.is_empty() {
            self.push(IssueKind::Cardinality, format!("{base}.flavors"), "NSD declares no deployment flavor");
        }
        let flavors = self.unique(&nsd.flavors, |f| &f.id, &base, "flavors", "flavor");
        for flavor in flavors {
            self.ns_flavor(nsd, flavor, &format!("{base}.flavors[{}]", flavor.id));
        }
    }

    fn ns_flavor(&mut self, nsd: &Nsd, flavor: &'a NsDeploymentFlavor, base: &str) {
        let profiles = self.unique(&flavor.vnf_profiles, |p| &p.id, base, "vnf_profiles", "VNF profile");
        for p in profiles {
            let path = format!("{base}.vnf_profiles[{}]", p.id);
            if p.min_instances > p.max_instances {
                self.push(
                    IssueKind::Range,
                    format!("{path}.min_instances"),
                    format!("min_instances {} exceeds max_instances {}", p.min_instances, p.max_instances),
                );
            }
            let Some(vnfd) = self.catalog.vnfds.get(&p.vnfd_ref) else {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{path}.vnfd_ref"),
                    format!("VNFD `{}` is not in the catalog", p.vnfd_ref),
                );
                continue;
            };
            if !nsd.vnfd_refs.contains(&p.vnfd_ref) {
                self.push(
                    IssueKind::Consistency,
                    format!("{path}.vnfd_ref"),
                    format!("VNFD `{}` is not listed in the NSD's vnfd_refs", p.vnfd_ref),
                );
            }
            let Some(vf) = vnfd.flavor(&p.vnf_flavor_ref) else {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{path}.vnf_flavor_ref"),
                    format!("VNFD `{}` has no flavor `{}`", vnfd.id, p.vnf_flavor_ref),
                );
                continue;
            };
            for il in &p.allowed_il_refs {
                if vf.il(il).is_none() {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        format!("{path}.allowed_il_refs[{il}]"),
                        format!("flavor `{}` of VNFD `{}` has no VNF-IL `{il}`", vf.id, vnfd.id),
                    );
                }
            }
        }

        let vl_profiles = self.unique(&flavor.vl_profiles, |p| &p.id, base, "vl_profiles", "VL profile");
        for p in vl_profiles {
            let path = format!("{base}.vl_profiles[{}]", p.id);
            let Some(vld) = self.catalog.vlds.get(&p.vld_ref) else {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{path}.vld_ref"),
                    format!("VLD `{}` is not in the catalog", p.vld_ref),
                );
                continue;
            };
            if vld.flavor(&p.vl_flavor_ref).is_none() {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{path}.vl_flavor_ref"),
                    format!("VLD `{}` has no flavor `{}`", vld.id, p.vl_flavor_ref),
                );
            }
        }

        let levels = self.unique(&flavor.ns_ils, |l| &l.id, base, "ns_ils", "NS-IL");
        for level in levels {
            let path = format!("{base}.ns_ils[{}]", level.id);
            for (pid, entry) in &level.vnf_entries {
                let epath = format!("{path}.vnf_entries[{pid}]");
                let Some(profile) = flavor.vnf_profile(pid) else {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        epath,
                        format!("VNF profile `{pid}` is not declared in the flavor"),
                    );
                    continue;
                };
                if !profile.allowed_il_refs.contains(&entry.vnf_il_ref) {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        format!("{epath}.vnf_il_ref"),
                        format!("VNF-IL `{}` is not allowed by profile `{pid}`", entry.vnf_il_ref),
                    );
                }
                let n = entry.instance_count;
                if profile.min_instances <= profile.max_instances
                    && (n < profile.min_instances || n > profile.max_instances)
                {
                    self.push(
                        IssueKind::Cardinality,
                        format!("{epath}.instance_count"),
                        format!(
                            "{n} instances outside [{}, {}] of profile `{pid}`",
                            profile.min_instances, profile.max_instances
                        ),
                    );
                }
            }
            for profile in &flavor.vnf_profiles {
                if profile.min_instances > 0
                    && profile.min_instances <= profile.max_instances
                    && !level.vnf_entries.contains_key(&profile.id)
                {
                    self.push(
                        IssueKind::Cardinality,
                        format!("{path}.vnf_entries[{}]", profile.id),
                        format!("profile `{}` requires at least {} instances", profile.id, profile.min_instances),
                    );
                }
            }
            for (vid, &bitrate) in &level.vl_entries {
                let vpath = format!("{path}.vl_entries[{vid}]");
                if flavor.vl_profile(vid).is_none() {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        vpath,
                        format!("VL profile `{vid}` is not declared in the flavor"),
                    );
                } else if !(bitrate.is_finite() && bitrate > 0.0) {
                    self.push(IssueKind::Range, vpath, format!("bitrate {bitrate} must be positive"));
                }
            }
        }
    }

    fn vnfd(&mut self, vnfd: &'a Vnfd) {
        let base = format!("vnfd[{}]", vnfd.id);
        let vcds = self.unique(&vnfd.vcds, |c| &c.id, &base, "vcds", "VCD");
        for vcd in vcds {
            let path = format!("{base}.vcds[{}]", vcd.id);
            if vcd.vcpu < 1 {
                self.push(IssueKind::Range, format!("{path}.vcpu"), "vcpu must be at least 1");
            }
            if !(vcd.memory.is_finite() && vcd.memory > 0.0) {
                self.push(IssueKind::Range, format!("{path}.memory"), format!("memory {} must be positive", vcd.memory));
            }
        }
        let vsds = self.unique(&vnfd.vsds, |s| &s.id, &base, "vsds", "VSD");
        for vsd in vsds {
            if !(vsd.storage.is_finite() && vsd.storage > 0.0) {
                self.push(
                    IssueKind::Range,
                    format!("{base}.vsds[{}].storage", vsd.id),
                    format!("storage {} must be positive", vsd.storage),
                );
            }
        }
        let vdus = self.unique(&vnfd.vdus, |d| &d.id, &base, "vdus", "VDU");
        for vdu in vdus {
            let path = format!("{base}.vdus[{}]", vdu.id);
            if vnfd.vcd(&vdu.vcd_ref).is_none() {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{path}.vcd_ref"),
                    format!("VCD `{}` is not declared in the VNFD", vdu.vcd_ref),
                );
            }
            for r in &vdu.vsd_refs {
                if vnfd.vsd(r).is_none() {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        format!("{path}.vsd_refs[{r}]"),
                        format!("VSD `{r}` is not declared in the VNFD"),
                    );
                }
            }
        }
        let internal = self.unique(&vnfd.internal_vlds, |l| &l.id, &base, "internal_vlds", "internal VLD");
        for vld in internal {
            self.vld(vld, &format!("{base}.internal_vlds[{}]", vld.id));
        }
        let flavors = self.unique(&vnfd.flavors, |f| &f.id, &base, "flavors", "flavor");
        for flavor in flavors {
            self.vnf_flavor(vnfd, flavor, &format!("{base}.flavors[{}]", flavor.id));
        }
    }

    fn vnf_flavor(&mut self, vnfd: &Vnfd, flavor: &'a VnfDeploymentFlavor, base: &str) {
        for r in &flavor.vdu_refs {
            if vnfd.vdu(r).is_none() {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{base}.vdu_refs[{r}]"),
                    format!("VDU `{r}` is not declared in the VNFD"),
                );
            }
        }
        let ils = self.unique(&flavor.ils, |l| &l.id, base, "ils", "VNF-IL");
        for il in ils {
            let path = format!("{base}.ils[{}]", il.id);
            for vdu in il.counts.keys() {
                if !flavor.vdu_refs.contains(vdu) {
                    self.push(
                        IssueKind::ReferentialIntegrity,
                        format!("{path}.counts[{vdu}]"),
                        format!("VDU `{vdu}` is not deployed by flavor `{}`", flavor.id),
                    );
                }
            }
            if il.counts.values().all(|&n| n == 0) {
                self.push(IssueKind::Cardinality, format!("{path}.counts"), "level has no VNFC instance");
            }
        }
    }

    fn vld(&mut self, vld: &'a Vld, base: &str) {
        if vld.flavors.is_empty() {
            self.push(IssueKind::Cardinality, format!("{base}.flavors"), "VLD declares no flavor");
        }
        let flavors = self.unique(&vld.flavors, |f| &f.id, base, "flavors", "VL flavor");
        for f in flavors {
            let path = format!("{base}.flavors[{}]", f.id);
            if !(f.latency.is_finite() && f.latency >= 0.0) {
                self.push(IssueKind::Range, format!("{path}.latency"), format!("latency {} must be non-negative", f.latency));
            }
            if !(f.jitter.is_finite() && f.jitter >= 0.0) {
                self.push(IssueKind::Range, format!("{path}.jitter"), format!("jitter {} must be non-negative", f.jitter));
            }
            if !(1..=3).contains(&f.reliability_class) {
                self.push(
                    IssueKind::Range,
                    format!("{path}.reliability_class"),
                    format!("reliability class {} outside 1..=3", f.reliability_class),
                );
            }
        }
    }

    fn vnffgd(&mut self, g: &VnffgDescriptor) {
        let base = format!("vnffgd[{}]", g.id);
        for r in &g.vnfd_refs {
            if !self.catalog.vnfds.contains_key(r) {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{base}.vnfd_refs[{r}]"),
                    format!("VNFD `{r}` is not in the catalog"),
                );
            }
        }
        for r in &g.vld_refs {
            if !self.catalog.vlds.contains_key(r) {
                self.push(
                    IssueKind::ReferentialIntegrity,
                    format!("{base}.vld_refs[{r}]"),
                    format!("VLD `{r}` is not in the catalog"),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::fixture::{fig4_catalog, NSD_ID};
    use crate::descriptor::AutoScalingRule;

    fn only(report: &ValidationReport) -> &ValidationIssue {
        assert_eq!(report.len(), 1, "{report}");
        &report.issues[0]
    }

    #[test]
    fn fixture_is_clean() {
        let report = validate_catalog(&fig4_catalog());
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn dangling_vnf_il_ref_in_ns_il() {
        let mut c = fig4_catalog();
        let fl = &mut c.nsds.get_mut(NSD_ID).unwrap().flavors[0];
        fl.ns_ils[1].vnf_entries.get_mut("vnf-B").unwrap().vnf_il_ref = "il-99".into();
        let report = validate_catalog(&c);
        let issue = only(&report);
        assert_eq!(issue.kind, IssueKind::ReferentialIntegrity);
        assert_eq!(
            issue.path,
            "nsd[NSD#1].flavors[NsFlavor#1].ns_ils[NS-IL#2].vnf_entries[vnf-B].vnf_il_ref"
        );
    }

    #[test]
    fn profile_cap_below_ns_il_count() {
        let mut c = fig4_catalog();
        let fl = &mut c.nsds.get_mut(NSD_ID).unwrap().flavors[0];
        fl.vnf_profiles[1].max_instances = 1;
        let report = validate_catalog(&c);
        let issue = only(&report);
        assert_eq!(issue.kind, IssueKind::Cardinality);
        assert_eq!(
            issue.path,
            "nsd[NSD#1].flavors[NsFlavor#1].ns_ils[NS-IL#4].vnf_entries[vnf-B].instance_count"
        );
    }

    #[test]
    fn missing_vnfd_does_not_cascade() {
        let mut c = fig4_catalog();
        c.vnfds.remove("VNFD#3");
        let report = validate_catalog(&c);
        // The NSD reference, the profile, and the forwarding graph each break.
        let paths: Vec<&str> = report.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"nsd[NSD#1].vnfd_refs[VNFD#3]"), "{report}");
        assert!(
            paths.contains(&"nsd[NSD#1].flavors[NsFlavor#1].vnf_profiles[vnf-C].vnfd_ref"),
            "{report}"
        );
        assert!(report.iter().all(|i| i.kind == IssueKind::ReferentialIntegrity));
    }

    #[test]
    fn bad_rule_text_reports_column() {
        let mut c = fig4_catalog();
        let nsd = c.nsds.get_mut(NSD_ID).unwrap();
        nsd.auto_scaling_rules[0] = AutoScalingRule::new("rule-cpu-out", "WHEN avg(vnfB.cpu_util 3) > 0.8 THEN scale_out");
        let report = validate_catalog(&c);
        let issue = only(&report);
        assert_eq!(issue.kind, IssueKind::RuleSyntax);
        assert!(issue.message.contains("column 24"), "{}", issue.message);
    }

    #[test]
    fn issues_are_sorted() {
        let mut c = fig4_catalog();
        c.vnfds.get_mut("VNFD#1").unwrap().vcds[0].vcpu = 0;
        c.vlds.get_mut("VLD#1").unwrap().flavors[0].reliability_class = 7;
        let report = validate_catalog(&c);
        assert_eq!(report.len(), 2);
        let mut sorted = report.issues.clone();
        sorted.sort_by(|a, b| a.path.cmp(&b.path));
        assert_eq!(sorted, report.issues);
        assert_eq!(report.issues[0].path, "vld[VLD#1].flavors[VlFlavor#1].reliability_class");
    }
}
