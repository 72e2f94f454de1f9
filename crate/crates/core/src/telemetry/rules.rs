//! Line-oriented egress deny rules: `<destination> <port|*> deny`.

use ipnet::IpNet;

use super::capture::destination_parts;
use super::RateReport;

pub(crate) fn rule_lines(report: &RateReport, policy: &[IpNet]) -> Vec<String> {
    let mut hosts: Vec<(String, u16)> = report
        .flagged
        .iter()
        .filter_map(|d| destination_parts(d))
        .map(|(h, p)| (h.to_ascii_lowercase(), p))
        .collect();
    hosts.sort();
    hosts.dedup();
    let mut lines: Vec<String> = hosts
        .into_iter()
        .map(|(h, p)| format!("{h} {p} deny"))
        .collect();
    let mut seen = Vec::new();
    for net in policy {
        if !seen.contains(net) {
            seen.push(*net);
            lines.push(format!("{net} * deny"));
        }
    }
    lines
}

/// One rule per flagged destination, then each policy range in the order
/// given. Each line ends in a newline; nothing to block gives "".
pub fn emit_block_rules(report: &RateReport, policy: &[IpNet]) -> String {
    rule_lines(report, policy)
        .into_iter()
        .map(|l| l + "\n")
        .collect()
}
