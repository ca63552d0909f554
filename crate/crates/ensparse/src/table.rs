//! Versioned CSV tables.
//!
//! A table file starts with a `#schema=<name>/v<version>` line followed by a
//! header row. Readers reject files whose schema line or header differs.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub name: &'static str,
    pub version: u32,
    pub columns: &'static [&'static str],
}

impl Schema {
    pub fn tag(&self) -> String {
        format!("#schema={}/v{}", self.name, self.version)
    }
}

pub const RECOVERY: Schema = Schema {
    name: "ensparse.recovery",
    version: 1,
    columns: &["image", "method", "n", "seed", "psnr_db"],
};

pub const SUPERRES: Schema = Schema {
    name: "ensparse.superres",
    version: 1,
    columns: &["image", "method", "scale", "seed", "psnr_db"],
};

pub const CLUSTER: Schema = Schema {
    name: "ensparse.cluster",
    version: 1,
    columns: &["dataset", "method", "seed", "accuracy", "nmi"],
};

pub const CLUSTER_SUMMARY: Schema = Schema {
    name: "ensparse.cluster_summary",
    version: 1,
    columns: &["dataset", "method", "seeds", "max_accuracy", "avg_accuracy", "max_nmi", "avg_nmi"],
};

pub const TRAIN_TRACE: Schema = Schema {
    name: "ensparse.train_trace",
    version: 1,
    columns: &["round", "alpha", "beta", "cumulative_error"],
};

pub const ORACLE_CASES: Schema = Schema {
    name: "ensparse.oracle_cases",
    version: 1,
    columns: &["k", "l", "case", "mean_residual_energy"],
};

pub const ORACLE_METHODS: Schema = Schema {
    name: "ensparse.oracle_methods",
    version: 1,
    columns: &["k", "l", "method", "ensemble_error", "min_individual_error"],
};

/// Rows of string cells under a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: Schema) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.schema.columns.len(), "row width for {}", self.schema.name);
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{}\n", self.schema.tag()).into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(self.schema.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
        drop(w);
        out
    }

    pub fn parse(schema: Schema, bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::data("table is not UTF-8"))?;
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        if first != schema.tag() {
            return Err(Error::data(format!("expected {}, found {first:?}", schema.tag())));
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r.headers().map_err(|e| Error::data(format!("CSV: {e}")))?;
        if header.iter().ne(schema.columns.iter().copied()) {
            return Err(Error::data(format!("{} header mismatch", schema.name)));
        }
        let mut table = Table::new(schema);
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::data(format!("CSV: {e}")))?;
            table.rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(table)
    }

    /// Cell `column` of every row.
    pub fn column(&self, column: &str) -> Vec<&str> {
        let i = self
            .schema
            .columns
            .iter()
            .position(|c| *c == column)
            .unwrap_or_else(|| panic!("{} has no column {column}", self.schema.name));
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    pub fn numbers(&self, column: &str) -> Result<Vec<f64>> {
        self.column(column)
            .into_iter()
            .map(|v| v.parse().map_err(|_| Error::data(format!("{column}: {v:?} is not a number"))))
            .collect()
    }

    /// Writes the table and checks that it parses back to the same rows.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        if Table::parse(self.schema, &bytes)? != *self {
            return Err(Error::data(format!("{} does not round-trip", self.schema.name)));
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(schema: Schema, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Table::parse(schema, &bytes)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}
