//! The `cost` subcommand: architecture flags in, `key=value` report out.

use std::fmt::Write as _;

use f3::costmodel::{fma_totals, ArchSpec};

use crate::CliError;

/// Parses a comma-separated width list such as `100,200,200,10`.
pub fn parse_widths(s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<u64>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::usage(format!("malformed widths list {s:?}: bad entry {w:?}")))
        })
        .collect()
}

/// Report lines for `arch`, preceded by the architecture itself.
pub fn report(arch: &ArchSpec) -> String {
    let mut s = String::new();
    let widths: Vec<String> = arch.widths.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "widths={}", widths.join(","));
    let _ = writeln!(s, "layers={}", arch.layers());
    let _ = writeln!(s, "batch_size={}", arch.batch_size);
    let _ = writeln!(s, "samples={}", arch.samples);
    for (k, v) in fma_totals(arch).to_key_values() {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}
