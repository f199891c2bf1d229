//! Summaries and rank tests over a published case table.

use nuggetcut::evalstat::{build_report, CaseRow};

fn main() -> nuggetcut::Result<()> {
    let cases: Vec<CaseRow> =
        serde_json::from_str(include_str!("../tests/data/clinical_cases.json"))?;
    let report = build_report(&cases)?;
    print!("{}", report.to_text());
    Ok(())
}
