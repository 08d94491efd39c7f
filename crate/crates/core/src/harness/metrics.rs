//! Per-run metrics and their CSV form.

use std::io::{Read, Write};

use super::config::Controller;

pub const CSV_HEADER: [&str; 16] = [
    "map",
    "N",
    "r_ch",
    "controller",
    "seed",
    "tnct",
    "throughput",
    "vertex_conflicts",
    "edge_conflicts",
    "wall_hits",
    "waits",
    "ul_success_rate",
    "dl_success_rate",
    "t_local_ms",
    "t_cloud_ms",
    "t_comm_ms",
];

/// One row of results. Success rates are `None` when no packet was sent;
/// phase times are mean per-step milliseconds and `None` when timing was
/// switched off.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub map: String,
    pub agents: usize,
    pub channel_ratio: f64,
    pub controller: Controller,
    pub seed: u64,
    pub tnct: u64,
    pub throughput: f64,
    pub vertex_conflicts: u64,
    pub edge_conflicts: u64,
    pub wall_hits: u64,
    pub waits: u64,
    pub ul_success_rate: Option<f64>,
    pub dl_success_rate: Option<f64>,
    pub t_local_ms: Option<f64>,
    pub t_cloud_ms: Option<f64>,
    pub t_comm_ms: Option<f64>,
}

impl MetricsRecord {
    /// Sum of the three phase means.
    pub fn t_total_ms(&self) -> Option<f64> {
        Some(self.t_local_ms? + self.t_cloud_ms? + self.t_comm_ms?)
    }

    fn fields(&self) -> [String; 16] {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        [
            self.map.clone(),
            self.agents.to_string(),
            self.channel_ratio.to_string(),
            self.controller.name().to_string(),
            self.seed.to_string(),
            self.tnct.to_string(),
            self.throughput.to_string(),
            self.vertex_conflicts.to_string(),
            self.edge_conflicts.to_string(),
            self.wall_hits.to_string(),
            self.waits.to_string(),
            opt(self.ul_success_rate),
            opt(self.dl_success_rate),
            opt(self.t_local_ms),
            opt(self.t_cloud_ms),
            opt(self.t_comm_ms),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: bad header, expected {expected:?}")]
    Header { row: usize, expected: Vec<String> },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Field { row: usize, column: &'static str, value: String },
}

/// Writes the header and one line per record.
pub fn write_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>, CsvError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CsvError::Header { row: 0, expected: CSV_HEADER.iter().map(|s| s.to_string()).collect() });
    }
    let mut out = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let get = |i: usize| rec.get(i).unwrap_or("");
        fn parse<T: std::str::FromStr>(row: usize, i: usize, v: &str) -> Result<T, CsvError> {
            v.parse().map_err(|_| CsvError::Field { row, column: CSV_HEADER[i], value: v.into() })
        }
        let opt = |i: usize| -> Result<Option<f64>, CsvError> {
            let v = get(i);
            if v.is_empty() {
                Ok(None)
            } else {
                parse(row, i, v).map(Some)
            }
        };
        out.push(MetricsRecord {
            map: get(0).to_string(),
            agents: parse(row, 1, get(1))?,
            channel_ratio: parse(row, 2, get(2))?,
            controller: get(3)
                .parse()
                .map_err(|_| CsvError::Field { row, column: CSV_HEADER[3], value: get(3).into() })?,
            seed: parse(row, 4, get(4))?,
            tnct: parse(row, 5, get(5))?,
            throughput: parse(row, 6, get(6))?,
            vertex_conflicts: parse(row, 7, get(7))?,
            edge_conflicts: parse(row, 8, get(8))?,
            wall_hits: parse(row, 9, get(9))?,
            waits: parse(row, 10, get(10))?,
            ul_success_rate: opt(11)?,
            dl_success_rate: opt(12)?,
            t_local_ms: opt(13)?,
            t_cloud_ms: opt(14)?,
            t_comm_ms: opt(15)?,
        });
    }
    Ok(out)
}
