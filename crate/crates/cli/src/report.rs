use std::fs;
use std::path::Path;

use pmvol::stats;

use crate::artifacts::MANIFEST;
use crate::error::{CliError, CliResult};

const REQUIRED: &[&str] = &["estimate/effects.csv", "grid/long.csv", "oos/summary.csv"];
pub const REPORT: &str = "report.md";

fn read_table(dir: &Path, rel: &str) -> CliResult<Vec<Vec<String>>> {
    let path = dir.join(rel);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(text.lines().skip(1).map(|l| split_csv(l)).collect())
}

/// Splits one line of the CSVs this tool writes (quoted fields allowed).
fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    out.push(cur);
    out
}

fn starred(t: &str, p: &str) -> String {
    match p.parse::<f64>() {
        Ok(p) => format!("{t}{}", stats::stars(p)),
        Err(_) => t.to_string(),
    }
}

/// Markdown summary of an artifact directory produced by `run`.
pub fn render(dir: &Path) -> CliResult<String> {
    if !dir.join(MANIFEST).is_file() {
        return Err(CliError::Artifacts(format!("{} has no {MANIFEST}", dir.display())));
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|r| !dir.join(r).is_file()).collect();
    if !missing.is_empty() {
        return Err(CliError::Artifacts(format!("incomplete artifact set, missing {}", missing.join(", "))));
    }

    let mut md = String::from("# Signal evaluation report\n\n");
    md.push_str("Stars: *** p < 0.01, ** p < 0.05, * p < 0.10.\n\n");

    md.push_str("## Headline effect sizes\n\n| asset | signal | coefficient | IQR | IQR effect |\n|---|---|---|---|---|\n");
    for r in read_table(dir, "estimate/effects.csv")? {
        md.push_str(&format!("| {} | {} | {} | {} | {} |\n", r[0], r[1], r[2], r[3], r[4]));
    }

    md.push_str("\n## Signal grid\n\n");
    let grid = read_table(dir, "grid/long.csv")?;
    let active: Vec<&Vec<String>> = grid.iter().filter(|r| !r[5].is_empty()).collect();
    if active.is_empty() {
        md.push_str("No testable cells.\n");
    } else {
        let rejected = active.iter().filter(|r| r[8] == "true").count();
        md.push_str(&format!(
            "{} of {} cells testable; {} inactive; {rejected} survive Benjamini–Hochberg.\n\n",
            active.len(),
            grid.len(),
            grid.len() - active.len()
        ));
        md.push_str("Best signal per asset (smallest raw p-value):\n\n| asset | signal | t | BH p |\n|---|---|---|---|\n");
        let mut assets: Vec<&str> = active.iter().map(|r| r[1].as_str()).collect();
        assets.dedup();
        for a in assets {
            let best = active
                .iter()
                .filter(|r| r[1] == a)
                .min_by(|x, y| x[5].parse::<f64>().unwrap_or(1.0).total_cmp(&y[5].parse::<f64>().unwrap_or(1.0)))
                .expect("asset has active cells");
            md.push_str(&format!("| {a} | {} | {} | {} |\n", best[0], starred(&best[4], &best[5]), best[7]));
        }
    }

    md.push_str("\n## Out-of-sample\n\n| asset | signal | n | OOS R² | MSFE ratio | CW stat | CW p |\n|---|---|---|---|---|---|---|\n");
    for r in read_table(dir, "oos/summary.csv")? {
        md.push_str(&format!("| {} |\n", r.join(" | ")));
    }

    let robustness = "robustness/report.csv";
    md.push_str("\n## Robustness\n\n");
    if dir.join(robustness).is_file() {
        md.push_str("| check | asset | term | estimate | t | n | note |\n|---|---|---|---|---|---|---|\n");
        for r in read_table(dir, robustness)? {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                r[0],
                r[1],
                r[2],
                r[3],
                starred(&r[5], &r[6]),
                r[7],
                r[8]
            ));
        }
    } else {
        md.push_str("Not run.\n");
    }

    let mut notes = Vec::new();
    let mut coverage: Vec<_> = fs::read_dir(dir.join("signals"))
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_else(|_| Vec::new());
    coverage.retain(|f: &String| f.starts_with("coverage_"));
    coverage.sort();
    for f in coverage {
        let asset = f.trim_start_matches("coverage_").trim_end_matches(".csv");
        for r in read_table(dir, &format!("signals/{f}"))? {
            if r[3] == "true" {
                notes.push(format!("- {asset}: `{}` excluded ({} usable observations, first active {})", r[0], r[1], r[2]));
            }
        }
    }
    md.push_str("\n## Coverage\n\n");
    if notes.is_empty() {
        md.push_str("All configured series meet the coverage threshold.\n");
    } else {
        md.push_str(&notes.join("\n"));
        md.push('\n');
    }
    Ok(md)
}
