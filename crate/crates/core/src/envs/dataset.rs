use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One LQR transition `(x, a, r, x')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrTransition {
    pub x: [f64; 2],
    pub a: [f64; 2],
    pub r: f64,
    pub x_next: [f64; 2],
}

/// One tabular transition `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabularTransition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub sp: usize,
}

#[derive(Serialize, Deserialize)]
pub struct LqrRow {
    s_0: f64,
    s_1: f64,
    a_0: f64,
    a_1: f64,
    r: f64,
    sp_0: f64,
    sp_1: f64,
}

/// Conversion between a transition and its flat CSV row.
pub trait CsvRecord: Sized {
    type Row: Serialize + DeserializeOwned;
    fn to_row(&self) -> Self::Row;
    fn from_row(row: Self::Row) -> Self;
}

impl CsvRecord for LqrTransition {
    type Row = LqrRow;

    fn to_row(&self) -> LqrRow {
        LqrRow {
            s_0: self.x[0],
            s_1: self.x[1],
            a_0: self.a[0],
            a_1: self.a[1],
            r: self.r,
            sp_0: self.x_next[0],
            sp_1: self.x_next[1],
        }
    }

    fn from_row(r: LqrRow) -> Self {
        Self {
            x: [r.s_0, r.s_1],
            a: [r.a_0, r.a_1],
            r: r.r,
            x_next: [r.sp_0, r.sp_1],
        }
    }
}

impl CsvRecord for TabularTransition {
    type Row = TabularTransition;

    fn to_row(&self) -> Self {
        *self
    }

    fn from_row(row: Self) -> Self {
        row
    }
}

/// Nonempty list of transitions in collection order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    records: Vec<T>,
}

impl<T> Dataset<T> {
    pub fn new(records: Vec<T>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("dataset must be nonempty"));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[T] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.records.iter()
    }

    pub fn into_records(self) -> Vec<T> {
        self.records
    }
}

impl<T: CsvRecord> Dataset<T> {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r.to_row())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let records = input
            .deserialize::<T::Row>()
            .map(|row| row.map(T::from_row).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// SHA-256 of the CSV serialization, as lowercase hex.
    pub fn checksum(&self) -> Result<String> {
        let mut bytes = Vec::new();
        self.write_csv(&mut bytes)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}
