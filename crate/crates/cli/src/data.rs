//! CSV tables: column-checked ingestion and plot-data emission.
//!
//! Frequencies in CSV files are GHz, matching figure axes.

use std::io::Write;

use crate::error::CliError;

/// Column schemas of the accepted data files.
pub const CROSSING: &[&str] = &["current_mA", "omega_GHz"];
pub const REFLECTION: &[&str] = &["current_mA", "omega_r_GHz", "re_r"];
pub const QUBIT_SPECTRUM: &[&str] = &["omega_s_GHz", "re_delta_r"];
pub const OCCUPANCY: &[&str] = &["p_mw_fW", "n_bar", "ci"];
pub const BROADENING: &[&str] = &["p_s_aW", "gamma_MHz"];

/// Numeric columns in schema order. Empty cells become NaN only in columns
/// listed as optional.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Parse CSV text against `schema`. Headers are mandatory, `#` lines are
/// comments, column order is free but unknown columns are rejected.
pub fn read_table(text: &str, schema: &[&str], optional: &[&str]) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::input(format!("CSV header: {e}")))?.clone();
    let expected = schema.join(", ");
    if headers.iter().all(str::is_empty) {
        return Err(CliError::input(format!("CSV is empty; expected header `{expected}`")));
    }
    for h in headers.iter() {
        if !schema.contains(&h) {
            return Err(CliError::input(format!("unexpected column `{h}` (expected {expected})")));
        }
    }
    let index: Vec<usize> = schema
        .iter()
        .map(|col| {
            headers
                .iter()
                .position(|h| h == *col)
                .ok_or_else(|| CliError::input(format!("missing column `{col}` (expected {expected})")))
        })
        .collect::<Result<_, _>>()?;

    let mut columns = vec![Vec::new(); schema.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("CSV row {}: {e}", row + 1)))?;
        for (k, &i) in index.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            let v = if cell.is_empty() && optional.contains(&schema[k]) {
                f64::NAN
            } else {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::input(format!("CSV row {}, column `{}`: `{cell}` is not a finite number", row + 1, schema[k]))
                })?
            };
            columns[k].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::input(format!("CSV has a header but no data rows (expected {expected})")));
    }
    Ok(Table { columns })
}

/// Full-precision float cell.
pub fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table<W: Write>(out: W, headers: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers).map_err(|e| CliError::input(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_with_comments_and_reordered_columns() {
        let t = read_table("# sweep 3\nomega_GHz,current_mA\n8.45,5.0\n# gap\n8.46, 5.1\n", CROSSING, &[]).unwrap();
        assert_eq!(t.column(0), &[5.0, 5.1]);
        assert_eq!(t.column(1), &[8.45, 8.46]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn diagnostics_name_columns() {
        let e = read_table("current_mA\n5.0\n", CROSSING, &[]).unwrap_err().to_string();
        assert!(e.contains("omega_GHz"), "{e}");
        let e = read_table("current_mA,omega_GHz\n5.0,abc\n", CROSSING, &[]).unwrap_err().to_string();
        assert!(e.contains("omega_GHz") && e.contains("abc"), "{e}");
        let e = read_table("current_mA,omega_GHz,extra\n", CROSSING, &[]).unwrap_err().to_string();
        assert!(e.contains("extra"), "{e}");
        assert!(read_table("", CROSSING, &[]).unwrap_err().to_string().contains("empty"));
        assert!(read_table("current_mA,omega_GHz\n", CROSSING, &[]).unwrap_err().to_string().contains("no data"));
    }

    #[test]
    fn optional_cells() {
        let t = read_table("p_mw_fW,n_bar,ci\n1.0,0.3,\n2.0,0.6,0.05\n", OCCUPANCY, &["ci"]).unwrap();
        assert!(t.column(2)[0].is_nan());
        assert!(read_table("p_mw_fW,n_bar,ci\n1.0,,0.1\n", OCCUPANCY, &["ci"]).is_err());
    }

    #[test]
    fn cells_round_trip() {
        for v in [0.1, 1.0 / 3.0, -8456.000000001, 1e-300] {
            assert_eq!(cell(v).parse::<f64>().unwrap(), v);
        }
    }
}
