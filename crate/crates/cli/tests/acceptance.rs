use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use roughflow::config::Format;
use roughflow::{Command, Outcome, Run, RunConfig};

const SEED: u64 = 20240917;

/// Wall-clock budgets per criterion, in seconds.
const BUDGETS: [(&str, u64); 7] = [
    ("C1", 30),
    ("C2", 60),
    ("C3", 120),
    ("C5", 120),
    ("C6", 180),
    ("C7", 180),
    ("C8", 600),
];

fn verify_into(dir: &Path) -> Outcome {
    let mut config = RunConfig::from_toml("", Path::new("<acceptance>")).unwrap();
    config.seed = SEED;
    config.output_dir = dir.to_path_buf();
    config.format = Format::Json;
    Run {
        command: Command::Verify,
        config,
        base: dir.to_path_buf(),
    }
    .execute()
    .expect("verify run")
}

fn main() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let run1 = verify_into(first.path());
    let run2 = verify_into(second.path());

    let timings: BTreeMap<&str, Duration> = run1
        .timings
        .iter()
        .map(|(id, d)| (id.as_str(), *d))
        .collect();
    let budgets: BTreeMap<&str, u64> = BUDGETS.into_iter().collect();

    let mut lines = Vec::new();
    for n in 1..=9 {
        let id = format!("C{n}");
        let Some(c) = run1.report.criteria.iter().find(|c| c.id == id) else {
            lines.push((false, format!("FAIL {id} missing from report")));
            continue;
        };
        let elapsed = timings.get(id.as_str()).copied().unwrap_or_default();
        let within = budgets
            .get(id.as_str())
            .map_or(true, |b| elapsed.as_secs_f64() <= *b as f64);
        let budget = budgets.get(id.as_str()).map_or(String::new(), |b| {
            format!(" ({:.1}s of {b}s)", elapsed.as_secs_f64())
        });
        let ok = c.passed && within;
        let shown = c.to_string();
        let rest = shown.split_once(' ').map_or("", |r| r.1);
        lines.push((
            ok,
            format!("{} {rest}{budget}", if ok { "PASS" } else { "FAIL" }),
        ));
    }

    let a = std::fs::read(first.path().join("report.json")).unwrap();
    let b = std::fs::read(second.path().join("report.json")).unwrap();
    let same = a == b && run1.report.passed() == run2.report.passed();
    lines.push((
        same,
        format!(
            "{} C10 identical report.json across two runs with seed {SEED} ({} bytes)",
            if same { "PASS" } else { "FAIL" },
            a.len()
        ),
    ));

    for (_, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.0).count();
    println!(
        "{} of {} criteria passed",
        lines.len() - failed,
        lines.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
