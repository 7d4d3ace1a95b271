//! Reading observed tables from JSON or CSV.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use subgroup_causal::tables::ObservedTable;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => Ok(Format::Json),
            Some("csv") => Ok(Format::Csv),
            _ => Err(CliError::data(format!(
                "cannot infer input format of {}; use a .json or .csv extension",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTable {
    #[serde(rename = "J")]
    j: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(default)]
    observed: Vec<JsonObserved>,
    #[serde(default)]
    missing: Vec<JsonMissing>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonObserved {
    t: usize,
    x: usize,
    y: usize,
    n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonMissing {
    t: usize,
    y: usize,
    n: u64,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    t: usize,
    x: Option<usize>,
    y: usize,
    m: u8,
    n: u64,
}

pub fn read_table(path: &Path, format: Format) -> Result<(ObservedTable, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let table = parse_table(&bytes, format)?;
    Ok((table, bytes))
}

pub fn parse_table(bytes: &[u8], format: Format) -> Result<ObservedTable, CliError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(CliError::data("input is empty"));
    }
    match format {
        Format::Json => parse_json(bytes),
        Format::Csv => parse_csv(bytes),
    }
}

fn check_index(name: &str, value: usize, bound: usize) -> Result<(), CliError> {
    if value >= bound {
        return Err(CliError::data(format!("{name}={value} out of range (must be < {bound})")));
    }
    Ok(())
}

fn parse_json(bytes: &[u8]) -> Result<ObservedTable, CliError> {
    let raw: JsonTable =
        serde_json::from_slice(bytes).map_err(|e| CliError::data(format!("schema violation: {e}")))?;
    let mut table = ObservedTable::zeros(raw.j, raw.k)?;
    let mut seen = HashSet::new();
    for cell in &raw.observed {
        check_index("t", cell.t, 2)?;
        check_index("x", cell.x, raw.j)?;
        check_index("y", cell.y, raw.k)?;
        if !seen.insert((cell.t, Some(cell.x), cell.y)) {
            return Err(CliError::data(format!("duplicate observed cell t={} x={} y={}", cell.t, cell.x, cell.y)));
        }
        table.set_obs(cell.t, cell.x, cell.y, cell.n as f64);
    }
    for cell in &raw.missing {
        check_index("t", cell.t, 2)?;
        check_index("y", cell.y, raw.k)?;
        if !seen.insert((cell.t, None, cell.y)) {
            return Err(CliError::data(format!("duplicate missing cell t={} y={}", cell.t, cell.y)));
        }
        table.set_mis(cell.t, cell.y, cell.n as f64);
    }
    finish(table)
}

/// Covariate and outcome levels are inferred from the largest index seen,
/// with at least two levels each.
fn parse_csv(bytes: &[u8]) -> Result<ObservedTable, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(|e| CliError::data(format!("schema violation: {e}")))?.clone();
    for column in ["t", "x", "y", "m", "n"] {
        if !headers.iter().any(|h| h == column) {
            return Err(CliError::data(format!("schema violation: missing column '{column}'")));
        }
    }
    let mut rows = Vec::new();
    for (line, record) in reader.deserialize::<CsvRow>().enumerate() {
        let row = record.map_err(|e| CliError::data(format!("schema violation on data row {}: {e}", line + 1)))?;
        check_index("t", row.t, 2)?;
        match (row.m, row.x) {
            (0, None) => return Err(CliError::data(format!("data row {}: x is required when m=0", line + 1))),
            (1, Some(_)) => return Err(CliError::data(format!("data row {}: x must be empty when m=1", line + 1))),
            (0 | 1, _) => {}
            (m, _) => return Err(CliError::data(format!("data row {}: m={m} must be 0 or 1", line + 1))),
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data("schema violation: no data rows"));
    }
    let j = rows.iter().filter_map(|r| r.x).max().unwrap_or(0).max(1) + 1;
    let k = rows.iter().map(|r| r.y).max().unwrap_or(0).max(1) + 1;
    let mut table = ObservedTable::zeros(j, k)?;
    let mut seen = HashSet::new();
    for row in rows {
        if !seen.insert((row.t, row.x, row.y)) {
            return Err(CliError::data(format!("duplicate cell t={} x={:?} y={}", row.t, row.x, row.y)));
        }
        match row.x {
            Some(x) => table.set_obs(row.t, x, row.y, row.n as f64),
            None => table.set_mis(row.t, row.y, row.n as f64),
        }
    }
    finish(table)
}

fn finish(table: ObservedTable) -> Result<ObservedTable, CliError> {
    if table.total() <= 0.0 {
        return Err(CliError::data("table has no observations"));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use subgroup_causal::fixtures::icd_trial;

    fn icd_json() -> String {
        let t = icd_trial();
        let mut observed = Vec::new();
        let mut missing = Vec::new();
        for tt in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    observed.push(format!(r#"{{"t":{tt},"x":{x},"y":{y},"n":{}}}"#, t.obs(tt, x, y)));
                }
                missing.push(format!(r#"{{"t":{tt},"y":{y},"n":{}}}"#, t.mis(tt, y)));
            }
        }
        format!(r#"{{"J":2,"K":2,"observed":[{}],"missing":[{}]}}"#, observed.join(","), missing.join(","))
    }

    fn icd_csv() -> String {
        let t = icd_trial();
        let mut out = String::from("t,x,y,m,n\n");
        for tt in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    out += &format!("{tt},{x},{y},0,{}\n", t.obs(tt, x, y));
                }
                out += &format!("{tt},,{y},1,{}\n", t.mis(tt, y));
            }
        }
        out
    }

    #[test]
    fn both_encodings_give_the_fixture() {
        let a = parse_table(icd_json().as_bytes(), Format::Json).unwrap();
        let b = parse_table(icd_csv().as_bytes(), Format::Csv).unwrap();
        assert_eq!(a, icd_trial());
        assert_eq!(a, b);
        assert_eq!(a.total(), 1231.0);
    }

    #[test]
    fn omitted_cells_default_to_zero() {
        let t = parse_table(br#"{"J":2,"K":2,"observed":[{"t":1,"x":1,"y":1,"n":3}]}"#, Format::Json).unwrap();
        assert_eq!(t.total(), 3.0);
        assert_eq!(t.obs(0, 0, 0), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let cases: [(&[u8], Format); 8] = [
            (b"", Format::Json),
            (b"  \n", Format::Csv),
            (br#"{"J":2,"K":2,"observed":[{"t":0,"x":0,"y":0,"n":1.5}]}"#, Format::Json),
            (br#"{"J":2,"K":2,"observed":[{"t":0,"x":0,"y":0,"n":-1}]}"#, Format::Json),
            (br#"{"J":2,"K":2,"observed":[{"t":0,"x":2,"y":0,"n":1}]}"#, Format::Json),
            (b"t,x,y,m,n\n0,1,0,1,4\n", Format::Csv),
            (b"t,x,y,m,n\n0,1,0,0,2.5\n", Format::Csv),
            (b"t,y,m,n\n0,0,1,4\n", Format::Csv),
        ];
        for (bytes, format) in cases {
            assert!(parse_table(bytes, format).is_err(), "{}", String::from_utf8_lossy(bytes));
        }
    }
}
