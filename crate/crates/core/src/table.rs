//! Tables and benchmark examples: loading, serialization, prompt windows.
//!
//! Cells are stored verbatim; the only mutation at parse time is stripping a
//! single trailing newline. Blank cells stay as empty strings so addresses
//! are preserved; they are dropped later, at graph construction.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("dataset schema error at line {0}")]
    Schema(usize),
}

/// Supported on-disk table formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Tsv,
    JsonTable,
}

impl TableFormat {
    /// Guess from a file extension; defaults to CSV.
    pub fn from_path(path: &Path) -> TableFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => TableFormat::Tsv,
            Some("json") => TableFormat::JsonTable,
            _ => TableFormat::Csv,
        }
    }
}

/// A cell position. Negative indices (-1, -2) are reserved for synthetic
/// primary-key rows/columns inserted during entity identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellAddress {
    pub row: i32,
    pub col: i32,
}

impl CellAddress {
    pub fn new(row: i32, col: i32) -> Self {
        CellAddress { row, col }
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A rectangular grid of UTF-8 cell strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub caption: Option<String>,
    grid: Vec<Vec<String>>,
}

impl Table {
    /// Builds a table from rows, right-padding ragged rows with empty cells.
    pub fn from_rows(id: impl Into<String>, rows: Vec<Vec<String>>) -> Result<Table, TableError> {
        if rows.is_empty() {
            return Err(TableError::Format {
                line: 1,
                reason: "table has no rows".into(),
            });
        }
        let n_cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        if n_cols == 0 {
            return Err(TableError::Format {
                line: 1,
                reason: "table has no columns".into(),
            });
        }
        let grid = rows
            .into_iter()
            .map(|mut r| {
                r.resize(n_cols, String::new());
                r
            })
            .collect();
        Ok(Table {
            id: id.into(),
            caption: None,
            grid,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.grid.len()
    }

    pub fn n_cols(&self) -> usize {
        self.grid[0].len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.grid[row][col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[String]> {
        self.grid.iter().map(|r| r.as_slice())
    }

    /// Returns a transposed copy. Used to normalize row-oriented tables
    /// (attribute names running down a column) before graph construction.
    pub fn transposed(&self) -> Table {
        let n_rows = self.n_rows();
        let n_cols = self.n_cols();
        let grid = (0..n_cols)
            .map(|c| (0..n_rows).map(|r| self.grid[r][c].clone()).collect())
            .collect();
        Table {
            id: self.id.clone(),
            caption: self.caption.clone(),
            grid,
        }
    }

    /// Serializes the first `h` rows x `h` columns, one line per row, cells
    /// joined by " | ", for embedding into identification prompts.
    pub fn window(&self, h: usize) -> String {
        let h_rows = h.min(self.n_rows());
        let h_cols = h.min(self.n_cols());
        let mut lines = Vec::with_capacity(h_rows);
        for r in 0..h_rows {
            lines.push(self.grid[r][..h_cols].join(" | "));
        }
        lines.join("\n")
    }

    /// The engine's own JSON-table serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&JsonTable {
            id: self.id.clone(),
            caption: self.caption.clone(),
            grid: self.grid.clone(),
        })
        .expect("table serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    id: String,
    caption: Option<String>,
    grid: Vec<Vec<String>>,
}

/// Loads a table from disk in the declared format.
///
/// Cells are stored verbatim apart from the trailing-newline strip the line
/// reader performs; ragged rows are right-padded with empty cells.
pub fn load_table(path: &Path, format: TableFormat) -> Result<Table, TableError> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("table")
        .to_string();
    match format {
        TableFormat::Csv => {
            let file = fs::File::open(path)?;
            parse_csv(file, id)
        }
        TableFormat::Tsv => {
            let text = fs::read_to_string(path)?;
            parse_tsv(&text, id)
        }
        TableFormat::JsonTable => {
            let text = fs::read_to_string(path)?;
            parse_json_table(&text)
        }
    }
}

fn parse_csv<R: Read>(reader: R, id: String) -> Result<Table, TableError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| TableError::Format {
            line: i + 1,
            reason: e.to_string(),
        })?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Table::from_rows(id, rows)
}

/// TSV splits on tab only; no quoting rules.
fn parse_tsv(text: &str, id: String) -> Result<Table, TableError> {
    let mut rows = Vec::new();
    for line in text.lines() {
        rows.push(line.split('\t').map(|s| s.to_string()).collect());
    }
    Table::from_rows(id, rows)
}

fn parse_json_table(text: &str) -> Result<Table, TableError> {
    let parsed: JsonTable = serde_json::from_str(text).map_err(|e| TableError::Format {
        line: e.line(),
        reason: e.to_string(),
    })?;
    let mut table = Table::from_rows(parsed.id, parsed.grid)?;
    table.caption = parsed.caption;
    Ok(table)
}

/// Parses a table from a string (same padding rules as [`load_table`]).
pub fn parse_table(text: &str, format: TableFormat, id: &str) -> Result<Table, TableError> {
    match format {
        TableFormat::Csv => parse_csv(text.as_bytes(), id.to_string()),
        TableFormat::Tsv => parse_tsv(text, id.to_string()),
        TableFormat::JsonTable => parse_json_table(text),
    }
}

/// Benchmark task flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Qa,
    #[serde(rename = "fact")]
    FactVerification,
}

/// One benchmark record: a question over a table with gold answers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetExample {
    pub table_path: PathBuf,
    pub question: String,
    pub gold: Vec<String>,
    pub task: TaskKind,
}

/// Loads a JSONL dataset; one example per line, in file order.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetExample>, TableError> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetExample>, TableError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: DatasetExample =
            serde_json::from_str(line).map_err(|_| TableError::Schema(i + 1))?;
        if ex.gold.is_empty() {
            return Err(TableError::Schema(i + 1));
        }
        if ex.task == TaskKind::FactVerification
            && !(ex.gold.len() == 1 && matches!(ex.gold[0].as_str(), "entailed" | "refuted"))
        {
            return Err(TableError::Schema(i + 1));
        }
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parses_rectangular() {
        let t = parse_table("a,b\nc,d\ne,f", TableFormat::Csv, "t").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.cell(2, 1), "f");
    }

    #[test]
    fn short_rows_are_padded() {
        let t = parse_table("a,b\nc", TableFormat::Csv, "t").unwrap();
        assert_eq!(t.cell(1, 1), "");
    }

    #[test]
    fn tsv_splits_on_tab_only() {
        let t = parse_table("a\tb,c\nd\te", TableFormat::Tsv, "t").unwrap();
        assert_eq!(t.cell(0, 1), "b,c");
    }

    #[test]
    fn csv_quoting_is_rfc4180_style() {
        let t = parse_table("\"a,x\",b\n\"he said \"\"hi\"\"\",d", TableFormat::Csv, "t").unwrap();
        assert_eq!(t.cell(0, 0), "a,x");
        assert_eq!(t.cell(1, 0), "he said \"hi\"");
    }

    #[test]
    fn json_table_round_trip_is_identity_on_grid() {
        let t = parse_table("a,b\nc,d", TableFormat::Csv, "t").unwrap();
        let round = parse_table(&t.to_json(), TableFormat::JsonTable, "ignored").unwrap();
        assert_eq!(t, round);
    }

    #[test]
    fn empty_input_is_a_format_error() {
        assert!(matches!(
            parse_table("", TableFormat::Csv, "t"),
            Err(TableError::Format { .. })
        ));
    }

    #[test]
    fn window_clamps_to_table_size() {
        let t = parse_table("a,b\nc,d\ne,f", TableFormat::Csv, "t").unwrap();
        let w = t.window(5);
        assert_eq!(w.lines().count(), 3);
        assert!(w.lines().all(|l| l.split(" | ").count() == 2));
        assert_eq!(t.window(1), "a");
    }

    #[test]
    fn window_truncates_large_tables() {
        let rows: Vec<Vec<String>> = (0..10)
            .map(|r| (0..10).map(|c| format!("r{r}c{c}")).collect())
            .collect();
        let t = Table::from_rows("big", rows).unwrap();
        let w = t.window(5);
        assert_eq!(w.lines().count(), 5);
        assert!(w.lines().all(|l| l.split(" | ").count() == 5));
    }

    #[test]
    fn cells_are_stored_verbatim() {
        let t = parse_table("  a ,b\n c , d ", TableFormat::Csv, "t").unwrap();
        assert_eq!(t.cell(0, 0), "  a ");
        assert_eq!(t.cell(1, 1), " d ");
    }

    #[test]
    fn dataset_parses_in_file_order() {
        let text = r#"{"table_path":"a.csv","question":"q1","gold":["x"],"task":"qa"}
{"table_path":"b.csv","question":"q2","gold":["entailed"],"task":"fact"}"#;
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].question, "q1");
        assert_eq!(ds[1].task, TaskKind::FactVerification);
    }

    #[test]
    fn dataset_empty_file_is_empty_list() {
        assert!(parse_dataset("").unwrap().is_empty());
    }

    #[test]
    fn dataset_missing_gold_is_schema_error_with_line() {
        let text = r#"{"table_path":"a.csv","question":"q1","task":"qa"}"#;
        assert!(matches!(parse_dataset(text), Err(TableError::Schema(1))));
    }

    #[test]
    fn fact_gold_must_be_a_binary_label() {
        let good = r#"{"table_path":"a.csv","question":"q","gold":["refuted"],"task":"fact"}"#;
        assert!(parse_dataset(good).is_ok());
        let bad = r#"{"table_path":"a.csv","question":"q","gold":["maybe"],"task":"fact"}"#;
        assert!(matches!(parse_dataset(bad), Err(TableError::Schema(1))));
    }

    #[test]
    fn transpose_maps_cells() {
        let t = parse_table("a,b,c\nd,e,f", TableFormat::Csv, "t").unwrap();
        let tr = t.transposed();
        assert_eq!(tr.n_rows(), 3);
        assert_eq!(tr.n_cols(), 2);
        assert_eq!(tr.cell(2, 1), "f");
    }
}
